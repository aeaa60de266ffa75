"""Discovery of stochastic PDEs from ensemble trajectory data."""

__version__ = "0.1.0"

from .config import ExperimentConfig, parse_config, preset_config, serialize_config  # noqa: E402
from .estimators import SPDEDiscovery  # noqa: E402
from .kramers_moyal import diffusion_target, drift_target, km_targets  # noqa: E402
from .library import LibraryTransformer, build_dictionary, generate_terms  # noqa: E402
from .metrics import GroundTruth, diffusion_amplitude, fpr, relative_l2  # noqa: E402
from .simulate import Grid1d, SpdeModel, TimeSpec, simulate_ensemble  # noqa: E402
from .ssvb import SpikeSlabRegressor, SsHyperparams, refine_support, vb_fit  # noqa: E402
from .stlsq import STLSQRegressor, stlsq  # noqa: E402

__all__ = [
    "ExperimentConfig", "GroundTruth", "Grid1d", "LibraryTransformer", "SPDEDiscovery",
    "STLSQRegressor", "SpdeModel", "SpikeSlabRegressor", "SsHyperparams", "TimeSpec",
    "build_dictionary", "diffusion_amplitude", "diffusion_target", "drift_target", "fpr",
    "generate_terms", "km_targets", "parse_config", "preset_config", "refine_support",
    "relative_l2", "serialize_config", "simulate_ensemble", "stlsq", "vb_fit",
]
