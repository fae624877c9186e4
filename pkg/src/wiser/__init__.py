"""Multi-agent uplink scheduling and resource allocation for MU-MIMO-OFDMA WLANs."""

from .allocation import FeedbackStatus, self_correct, validate
from .channel import ChannelRealization, compute_gains, generate_channels
from .config import ConfigError, WlanConfig
from .phy import McsTable, evaluate_slot, load_mcs_table
from .policies import PolicySpec, parse_policy
from .runner import EpisodeRecord, run_batch, run_episode

__all__ = [
    "ChannelRealization", "ConfigError", "EpisodeRecord", "FeedbackStatus", "McsTable",
    "PolicySpec", "WlanConfig", "compute_gains", "evaluate_slot", "generate_channels",
    "load_mcs_table", "parse_policy", "run_batch", "run_episode", "self_correct", "validate",
]
__version__ = "0.1.0"
