"""Stage-by-stage training of a BCD-Net denoiser stack.

Stage ``n`` is fit on pairs ``(x_l^(n-1), x_true_l)`` where ``x_l^(n-1)`` is
what the network built from stages ``1..n-1`` produces for training sample
``l``.  Samples are advanced one outer iteration after each stage instead of
being re-run from scratch, which gives identical iterates because every
iteration is deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np

from .denoiser import CidModel, TrainConfig, init_stage, train_stage
from .recon import ReconConfig, _proj, bcd_net_step, em_reconstruct

log = logging.getLogger(__name__)


def stage_seed(seed: int, n: int) -> int:
    return int(np.random.SeedSequence([int(seed), 1000 + int(n)]).generate_state(1)[0])


def train_bcdnet(measurements, truths, A, T: int, K: int = 78, R: int = 9,
                 train_cfg: TrainConfig | None = None,
                 recon_cfg: ReconConfig | None = None, seed: int = 0,
                 callback=None) -> CidModel:
    """Train ``T`` denoising stages.

    ``truths`` may be a single image shared by every measurement (several
    noise realizations of one phantom) or one image per measurement.
    ``callback(n, params, history)`` is called after each stage.
    """
    P = _proj(A)
    measurements = list(measurements)
    if isinstance(truths, np.ndarray) and truths.ndim == 2:
        truths = [truths] * len(measurements)
    truths = list(truths)
    if len(truths) != len(measurements) or not measurements:
        raise ValueError("need one truth image per training measurement")
    train_cfg = train_cfg or TrainConfig()
    recon_cfg = recon_cfg or ReconConfig()
    xs = [em_reconstruct(m, P, recon_cfg.n_em_init)[0] for m in measurements]
    betas = [None] * len(measurements)
    stages, histories = [], []
    for n in range(T):
        s = stage_seed(seed, n)
        pairs = list(zip(xs, truths))
        init = init_stage(xs[0], K, R, s)
        params, hist = train_stage(pairs, replace(train_cfg, seed=s), init=init)
        stages.append(params)
        histories.append(hist)
        log.info("stage %d/%d: loss %.4g -> %.4g", n + 1, T, hist[0], hist[-1])
        if callback is not None:
            callback(n + 1, params, hist)
        update = recon_cfg.beta_mode == "adaptive" or n == 0
        for i, m in enumerate(measurements):
            xs[i], _, betas[i] = bcd_net_step(xs[i], params, m, P, recon_cfg, betas[i], update)
    meta = {"seed": seed, "K": K, "R": R, "loss_history": histories,
            "train_config": vars(train_cfg).copy()}
    return CidModel(stages, meta)
