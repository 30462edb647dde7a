"""Position-aided sparse channel estimation for high-speed-rail OFDM links."""

from .channel_model import ChannelModelConfig, DelayDopplerCoeffs
from .coherence import CoherenceParams, average_coherence, pilot_coherence_fast, recovery_bound
from .geometry import GeometryConfig, PositionState, doppler_at_position, max_doppler
from .pilot_design import Codebook, DesignParams, PilotPattern, build_codebook, joint_design, select_pilot

__all__ = [
    "ChannelModelConfig",
    "DelayDopplerCoeffs",
    "CoherenceParams",
    "average_coherence",
    "pilot_coherence_fast",
    "recovery_bound",
    "GeometryConfig",
    "PositionState",
    "doppler_at_position",
    "max_doppler",
    "Codebook",
    "DesignParams",
    "PilotPattern",
    "build_codebook",
    "joint_design",
    "select_pilot",
]

__version__ = "0.1.0"
