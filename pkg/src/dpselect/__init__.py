"""Differentially private selection across multiple non-colluding servers."""

from .audit import ViewSummary, audit_corrupted_view
from .config import ConfigError, ProtocolConfig, load_config
from .dp import (DpParams, Histogram, NoiseVector, SelectionResult, central_noisy_argmax,
                 geometric_p, round_div, sample_geometric, sample_negative_binomial)
from .ideal import LeakageRecord, ideal_functionality
from .protocol import PartyStreams, ServerRole, client_share_input, run_protocol
from .transport import ProtocolAbort, SimNetwork, TranscriptStats

__all__ = [
    "ViewSummary", "audit_corrupted_view",
    "ConfigError", "ProtocolConfig", "load_config",
    "DpParams", "Histogram", "NoiseVector", "SelectionResult", "central_noisy_argmax",
    "geometric_p", "round_div", "sample_geometric", "sample_negative_binomial",
    "LeakageRecord", "ideal_functionality",
    "PartyStreams", "ServerRole", "client_share_input", "run_protocol",
    "ProtocolAbort", "SimNetwork", "TranscriptStats",
]
