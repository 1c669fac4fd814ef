"""Numerical lab for the deformed Wigner model H = lambda V + W."""
__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .measure import JacobiMeasure, build_measure  # noqa: E402
from .freeconv import EdgeConstants, edge_constants, solve_mfc, solve_mfc_hat  # noqa: E402
from .ensemble import assemble, sample_wigner, spectral_decompose  # noqa: E402
from .experiments import ExperimentConfig, derive_seed, run_experiment  # noqa: E402
