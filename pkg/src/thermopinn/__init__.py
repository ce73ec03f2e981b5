"""Physics-informed and variational Bayesian neural networks for transformer oil temperature."""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .ageing import AgeingConfig, ageing_factor, ageing_field, loss_of_life
from .autodiff import DiffNode, Tape, gradient, second_derivative
from .bayes import (
    LikelihoodScales,
    VariationalPosterior,
    elbo_loss,
    posterior_predictive,
    train_bpinn,
    uncertainty_error_map,
)
from .nn import MlpParams, forward, init_mlp, predict
from .pinn import TrainConfig, sample_collocation, train_pinn
from .reference import FieldGrid, error_map, solve_crank_nicolson
from .scenario import synthesize_profiles
from .thermal import OperatingProfiles, ThermalConfig, pde_residual

__all__ = [
    "BACKEND",
    "AgeingConfig",
    "DiffNode",
    "FieldGrid",
    "LikelihoodScales",
    "MlpParams",
    "OperatingProfiles",
    "Tape",
    "ThermalConfig",
    "TrainConfig",
    "VariationalPosterior",
    "ageing_factor",
    "ageing_field",
    "elbo_loss",
    "error_map",
    "forward",
    "gradient",
    "init_mlp",
    "loss_of_life",
    "pde_residual",
    "posterior_predictive",
    "predict",
    "sample_collocation",
    "second_derivative",
    "solve_crank_nicolson",
    "synthesize_profiles",
    "train_bpinn",
    "train_pinn",
    "uncertainty_error_map",
]
