"""Semi-blind joint channel and symbol estimation for beyond-diagonal RIS links."""

from .harness import ExperimentSpec, emit_csv, run_experiment
from .metrics import MetricSample, demap, nmse, nmse_cascaded, zf_perfect_csi
from .receiver import TalsResult, check_identifiability, resolve_ambiguity, tals
from .system_model import ChannelRealization, SystemConfig, add_noise, realize, synthesize
from .tensor_core import SignalTensor

__version__ = "0.1.0"

__all__ = [
    "ChannelRealization",
    "ExperimentSpec",
    "MetricSample",
    "SignalTensor",
    "SystemConfig",
    "TalsResult",
    "add_noise",
    "check_identifiability",
    "demap",
    "emit_csv",
    "nmse",
    "nmse_cascaded",
    "realize",
    "resolve_ambiguity",
    "run_experiment",
    "synthesize",
    "tals",
    "zf_perfect_csi",
]
