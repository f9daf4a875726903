"""Forecast operators mapping (X_{t-1}, X_t, F_{t-1}, F_t) to an increment."""
from .physics import (Advective, ClimatologyNudge, Persistence, advective_step, climatology_nudge_step,
                      persistence_step)
from .swin3d import Swin3dConfig, Swin3dPropagator, init_params, loss_and_grad, swin3d_forward
from .train import TrainConfig, train
