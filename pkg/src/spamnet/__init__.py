"""Sparse additive non-parametric auto-regressive networks in RKHS blocks."""
from .errors import ConfigError, DataError, DomainError, NumericalError, SpamnetError
from .estimator import FitConfig, NetworkFit, NodeFit, cross_validate, fit_network, fit_node, predict
from .glm import BERNOULLI, GAUSSIAN, POISSON, GlmFamily
from .kernels import KernelSpec, design_block, eigen_decay, finite_rank
from .rates import MixingSpec, RatesReport, block_count, epsilon_m, epsilon_tilde_m, tuning

__version__ = "0.1.0"
