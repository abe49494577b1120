"""Variable-length QKD: certified key rates, finite-size analysis and hashing."""

__version__ = "0.1.0"

from .bb84 import Bb84Setup, ChannelParams, FrequencyVector, born_distribution, honest_state
from .config import ConfigError, ExperimentConfig
from .entropy_opt import (
    FeasibleSpec,
    KrausChannel,
    OptResult,
    Status,
    bb84_key_channel,
    minimize_entropy,
)
from .finite_size import (
    ProtocolParams,
    SecurityBudget,
    key_length_fixed,
    mu,
    variable_length_decision,
)
from .hashing import ToeplitzFamily, VirtualHasher, toeplitz_hash, virtual_variable_hash
from .protocol import AcceptanceLadder, ChannelEnsemble, accept_index, build_ladder
from .quantum import DensityOperator, partial_trace, relative_entropy, tensor

__all__ = [
    "AcceptanceLadder",
    "Bb84Setup",
    "ChannelEnsemble",
    "ChannelParams",
    "ConfigError",
    "DensityOperator",
    "ExperimentConfig",
    "FeasibleSpec",
    "FrequencyVector",
    "KrausChannel",
    "OptResult",
    "ProtocolParams",
    "SecurityBudget",
    "Status",
    "ToeplitzFamily",
    "VirtualHasher",
    "accept_index",
    "bb84_key_channel",
    "born_distribution",
    "build_ladder",
    "honest_state",
    "key_length_fixed",
    "minimize_entropy",
    "mu",
    "partial_trace",
    "relative_entropy",
    "tensor",
    "toeplitz_hash",
    "variable_length_decision",
    "virtual_variable_hash",
]
