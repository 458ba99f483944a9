"""Monte Carlo and numerical laboratory for the discretized spread-out contact process."""

from .model import ModelParams, RangeScaling, bond_prob, one_step_mean, uniform_kernel
from .engine import Frontier, ReplicaPlan, simulate, step
from .estimators import (estimate_msd, estimate_r_point_ft, estimate_survival,
                         estimate_two_point_ft, fit_constants)
from .criticality import locate_lambda_c
from .sbm import MomentQuery, m_hat
from .config import ExperimentConfig, load_config
from .experiment import run_scaling_experiment
from .output import emit_outputs, read_table

__version__ = "0.1.0"
