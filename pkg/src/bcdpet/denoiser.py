"""Convolutional image denoiser (CID) and its stage-wise training.

One stage maps an image ``x`` to

    u = sum_k d_k * T(c_k * x, alpha_k)

with ``*`` a same-size 2-D convolution under zero padding and ``T`` the
elementwise soft threshold.  Filters are stored as ``(K, R)`` arrays of taps
for square ``r x r`` supports (``R = r * r``, ``r`` odd); tap ``(a, b)`` sits at
offset ``(a - r // 2, b - r // 2)``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fileio import ChecksumError, FormatError, checksum64


def soft_threshold(t, q):
    """``sign(t) * max(|t| - q, 0)`` elementwise; ``q`` broadcasts against ``t``."""
    q = np.asarray(q, dtype=float)
    if np.any(q < 0):
        raise ValueError("threshold must be nonnegative")
    t = np.asarray(t, dtype=float)
    return np.sign(t) * np.maximum(np.abs(t) - q, 0.0)


def normalize_g1(v):
    """Scale ``v`` so that its entries sum to one."""
    v = np.asarray(v, dtype=float)
    total = v.sum()
    if not total > 0:
        raise ValueError("normalization needs a positive sum")
    return v / total


@dataclass
class CidStageParams:
    c: np.ndarray  # (K, R) encoding filters
    d: np.ndarray  # (K, R) decoding filters
    alpha: np.ndarray  # (K,) thresholds

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.d = np.asarray(self.d, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(-1)
        if self.c.ndim != 2 or self.c.shape != self.d.shape:
            raise ValueError("encode/decode filters must share one (K, R) shape")
        if self.alpha.shape != (self.c.shape[0],):
            raise ValueError("need one threshold per filter")
        if np.any(self.alpha < 0):
            raise ValueError("thresholds must be nonnegative")
        r = math.isqrt(self.c.shape[1])
        if r * r != self.c.shape[1] or r % 2 == 0:
            raise ValueError("filter support must be an odd square")

    @property
    def K(self) -> int:
        return self.c.shape[0]

    @property
    def R(self) -> int:
        return self.c.shape[1]

    @property
    def width(self) -> int:
        return math.isqrt(self.R)

    def copy(self) -> CidStageParams:
        return CidStageParams(self.c.copy(), self.d.copy(), self.alpha.copy())

    @classmethod
    def identity(cls, R: int = 1) -> CidStageParams:
        """Single impulse encode/decode pair with zero threshold (``u = x``)."""
        imp = np.zeros((1, R))
        imp[0, R // 2] = 1.0
        return cls(imp, imp.copy(), np.zeros(1))


@dataclass
class CidModel:
    stages: list[CidStageParams]
    training_metadata: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.stages)


# -- convolution helpers -------------------------------------------------------

def _offsets(width: int):
    h = width // 2
    return [(a - h, b - h) for a in range(width) for b in range(width)]


def shifted_stack(x: np.ndarray, width: int) -> np.ndarray:
    """Stack of ``P_q x`` with ``(P_q x)[p] = x[p - q]`` (zero outside); shape ``(R, ny, nx)``."""
    h = width // 2
    ny, nx = x.shape
    xp = np.pad(x, h)
    out = np.empty((width * width,) + x.shape)
    for i, (qy, qx) in enumerate(_offsets(width)):
        out[i] = xp[h - qy:h - qy + ny, h - qx:h - qx + nx]
    return out


def shifted_stack_adjoint(v: np.ndarray, width: int) -> np.ndarray:
    """Stack of ``P_q^T v`` with ``(P_q^T v)[p] = v[p + q]`` (zero outside)."""
    h = width // 2
    ny, nx = v.shape
    vp = np.pad(v, h)
    out = np.empty((width * width,) + v.shape)
    for i, (qy, qx) in enumerate(_offsets(width)):
        out[i] = vp[h + qy:h + qy + ny, h + qx:h + qx + nx]
    return out


def conv2d_same(x: np.ndarray, filt: np.ndarray) -> np.ndarray:
    """Zero-padded same-size convolution of ``x`` with a flat or square filter."""
    filt = np.asarray(filt, dtype=float).ravel()
    w = math.isqrt(filt.size)
    return np.tensordot(filt, shifted_stack(np.asarray(x, float), w), axes=1)


def _synthesize(W: np.ndarray, width: int) -> np.ndarray:
    """``sum_q P_q W_q`` for a stack ``W`` of shape ``(R, ny, nx)``."""
    h = width // 2
    ny, nx = W.shape[1:]
    acc = np.zeros((ny + 2 * h, nx + 2 * h))
    for i, (qy, qx) in enumerate(_offsets(width)):
        acc[h + qy:h + qy + ny, h + qx:h + qx + nx] += W[i]
    return acc[h:h + ny, h:h + nx]


def rotate180(filters: np.ndarray) -> np.ndarray:
    """Flip every filter's taps by 180 degrees (the convolution adjoint)."""
    filters = np.asarray(filters, dtype=float)
    return filters[..., ::-1].copy()


def cid_forward(x, p: CidStageParams, return_codes: bool = False):
    """Apply one denoising stage; output may contain negative values."""
    x = np.asarray(x, dtype=float)
    w = p.width
    if w > min(x.shape):
        raise ValueError("filter support larger than image")
    P = shifted_stack(x, w)
    codes = np.einsum("kr,rij->kij", p.c, P)
    z = soft_threshold(codes, p.alpha[:, None, None])
    u = _synthesize(np.einsum("kr,kij->rij", p.d, z), w)
    if return_codes:
        return u, P, codes, z
    return u


def cid_loss_and_grad(p: CidStageParams, pairs, loss: str = "l2", normalize: bool = True):
    """Training loss and analytic gradients over ``(x_in, x_ref)`` pairs.

    With ``normalize`` both images of a pair pass through :func:`normalize_g1`
    first.  Returns ``(loss, grad_c, grad_d, grad_alpha)``.  The threshold
    subgradient is taken as zero where ``|code| == alpha``.
    """
    if not pairs:
        raise ValueError("need at least one training pair")
    w = p.width
    total = 0.0
    gc = np.zeros_like(p.c)
    gd = np.zeros_like(p.d)
    ga = np.zeros_like(p.alpha)
    for x_in, x_ref in pairs:
        x_in = np.asarray(x_in, dtype=float)
        x_ref = np.asarray(x_ref, dtype=float)
        if x_in.shape != x_ref.shape:
            raise ValueError("pair images differ in shape")
        if normalize:
            x_in = normalize_g1(x_in)
            x_ref = normalize_g1(x_ref)
        u, P, codes, z = cid_forward(x_in, p, return_codes=True)
        e = u - x_ref
        if loss == "l2":
            total += float(np.sum(e * e))
            gu = 2.0 * e
        elif loss == "l1":
            total += float(np.sum(np.abs(e)))
            gu = np.sign(e)
        else:
            raise ValueError(f"unknown loss {loss!r}")
        G = shifted_stack_adjoint(gu, w)
        gd += np.einsum("rij,kij->kr", G, z)
        gz = np.einsum("kr,rij->kij", p.d, G)
        active = np.abs(codes) > p.alpha[:, None, None]
        gcode = gz * active
        ga -= np.sum(gcode * np.sign(codes), axis=(1, 2))
        gc += np.einsum("kij,rij->kr", gcode, P)
    return total, gc, gd, ga


# -- initialization and training ----------------------------------------------

def init_stage(x_init, K: int = 78, R: int = 9, seed: int = 0) -> CidStageParams:
    """Random unit-norm filters and thresholds from the initial image.

    Every threshold starts at the 10%-largest value of ``g1(x_init)``, i.e. the
    entry at rank ``ceil(0.1 * n)`` when sorted in decreasing order.  Decoding
    filters start as the 180-degree rotations of the encoding filters scaled
    by ``R / K``: a random unit-norm bank has ``E[sum_k c_k c_k^T] = (K/R) I``,
    so this makes the unthresholded stage an identity on average.
    """
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((K, R))
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    v = np.sort(normalize_g1(x_init).ravel())[::-1]
    rank = max(int(math.ceil(0.1 * v.size)), 1)
    alpha = np.full(K, max(v[rank - 1], 0.0))
    return CidStageParams(c, rotate180(c) * (R / K), alpha)


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-2
    lr_decay: float = 0.99  # multiplicative, per epoch
    batch_size: int = 1
    seed: int = 0
    loss: str = "l2"
    alpha_lr_scale: float | None = None  # None: mean initial threshold
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


class Adam:
    """Plain Adam over a list of arrays, updated in place."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(q) for q in params]
        self.v = [np.zeros_like(q) for q in params]
        self.t = 0

    def step(self, grads, lrs):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for q, g, m, v, lr in zip(self.params, grads, self.m, self.v, lrs):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            q -= lr * mhat / (np.sqrt(vhat) + self.eps)


def train_stage(pairs, cfg: TrainConfig, init: CidStageParams | None = None,
                K: int = 78, R: int = 9):
    """Fit one stage by Adam on the g1-normalized squared error.

    Internally the loss is divided by the total reference energy
    ``sum_l ||g1(x_ref_l)||^2``; this leaves the minimizer unchanged and keeps
    gradient magnitudes well above Adam's epsilon.  Thresholds use their own
    step size (``learning_rate * alpha_lr_scale``) because they live on the
    intensity scale of normalized images rather than the unit scale of the
    filters, and are projected onto ``alpha >= 0`` after each step.

    Returns ``(params, history)`` where ``history`` holds the full-data loss
    (unnormalized) after every epoch, with entry 0 the initial loss.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one training pair")
    p = init.copy() if init is not None else init_stage(pairs[0][0], K, R, cfg.seed)
    ref_energy = sum(float(np.sum(normalize_g1(r) ** 2)) for _, r in pairs)
    a_scale = cfg.alpha_lr_scale
    if a_scale is None:
        a_scale = float(np.mean(p.alpha)) or 1e-3
    opt = Adam([p.c, p.d, p.alpha], cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7919]))
    history = [cid_loss_and_grad(p, pairs, cfg.loss)[0]]
    lr = cfg.learning_rate
    for _ in range(cfg.epochs):
        order = rng.permutation(len(pairs))
        for start in range(0, len(pairs), cfg.batch_size):
            batch = [pairs[i] for i in order[start:start + cfg.batch_size]]
            _, gc, gd, ga = cid_loss_and_grad(p, batch, cfg.loss)
            opt.step([gc / ref_energy, gd / ref_energy, ga / ref_energy],
                     [lr, lr, lr * a_scale])
            np.maximum(p.alpha, 0.0, out=p.alpha)
        lr *= cfg.lr_decay
        history.append(cid_loss_and_grad(p, pairs, cfg.loss)[0])
    return p, history


# -- model files ---------------------------------------------------------------

MODEL_MAGIC = b"CIDM"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sIIII")


def encode_model(m: CidModel) -> bytes:
    """Serialize: header (magic, version, T, K, R), then per stage c, d, alpha
    as little-endian float64, then an 8-byte BLAKE2b checksum of all
    preceding bytes."""
    if m.T < 1:
        raise ValueError("model has no stages")
    K, R = m.stages[0].c.shape
    parts = [_MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, m.T, K, R)]
    for st in m.stages:
        if st.c.shape != (K, R):
            raise ValueError("all stages must share K and R")
        for arr in (st.c, st.d, st.alpha):
            parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + checksum64(body)


def decode_model(buf: bytes) -> CidModel:
    if len(buf) < _MODEL_HEADER.size + 8:
        raise FormatError("model file truncated")
    magic, version, T, K, R = _MODEL_HEADER.unpack_from(buf)
    if magic != MODEL_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model format version {version}")
    per_stage = 8 * (2 * K * R + K)
    expected = _MODEL_HEADER.size + T * per_stage + 8
    if len(buf) != expected:
        raise FormatError(f"model file truncated: expected {expected} bytes, found {len(buf)}")
    body, check = buf[:-8], buf[-8:]
    if checksum64(body) != check:
        raise ChecksumError("model checksum mismatch")
    flat = np.frombuffer(body, dtype="<f8", offset=_MODEL_HEADER.size)
    stages = []
    for n in range(T):
        chunk = flat[n * (2 * K * R + K):(n + 1) * (2 * K * R + K)]
        c = chunk[:K * R].reshape(K, R).astype(float)
        d = chunk[K * R:2 * K * R].reshape(K, R).astype(float)
        stages.append(CidStageParams(c, d, chunk[2 * K * R:].astype(float)))
    return CidModel(stages)


def save_model(m: CidModel, path) -> Path:
    path = Path(path)
    path.write_bytes(encode_model(m))
    return path


def load_model(path) -> CidModel:
    return decode_model(Path(path).read_bytes())
