"""Learned iterative PET reconstruction on a 2-D parallel-beam toy system.

Modules
-------
projector   pixel-driven forward/back projector with an exact adjoint
phantoms    ellipse phantoms and Poisson sinogram simulation
denoiser    convolutional image denoiser (encode, threshold, decode) and training
recon       MLEM, BCD-Net, TV (PDHG) and NLM (ADMM) reconstructions
training    stage-wise training of a BCD-Net model
metrics     contrast recovery, noise, RMSE, CNR and FOV bias
cli         ``bcdpet`` command line
"""

from .projector import Geometry, Projector, get_projector, forward_project, back_project
from .phantoms import (Ellipse, Region, PhantomSpec, ScenarioSpec, Measurement,
                       make_phantom, simulate_measurement, training_phantom, testing_phantom)
from .denoiser import (CidStageParams, CidModel, TrainConfig, soft_threshold, normalize_g1,
                       cid_forward, cid_loss_and_grad, init_stage, train_stage,
                       save_model, load_model)
from .recon import (ReconConfig, TVConfig, NLMConfig, ReconTrace, poisson_nll, em_step,
                    map_em_step, scale_g2, adaptive_beta, em_reconstruct, bcd_net_reconstruct,
                    tv_pdhg_reconstruct, nlm_admm_reconstruct, reconstruct)
from .training import train_bcdnet
from . import metrics

__version__ = "0.1.0"
