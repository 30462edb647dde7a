"""Train position to Doppler shift mapping.

The base station sits ``D_0`` metres off the track. Position ``alpha`` is
measured along the track from the cell edge A (``alpha = 0``) through the
closest point B (``alpha = D_c``) to the far edge C (``alpha = 2 D_c``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = [
    "GeometryConfig",
    "PositionState",
    "max_doppler",
    "doppler_at_position",
    "doppler_index",
    "position_index",
    "codebook_slot",
    "doppler_index_range",
    "kmh_to_ms",
]

LIGHT_SPEED = 3e8


def kmh_to_ms(v_kmh: float) -> float:
    return v_kmh / 3.6


@dataclass(frozen=True)
class GeometryConfig:
    """Cell geometry and carrier.

    Parameters
    ----------
    D_max : float
        Distance from the base station to the cell edges A and C (m).
    D_0 : float
        Perpendicular distance from the base station to the track (m).
    D_s : float
        Distance between neighbouring base stations (m). Informational.
    f_c : float
        Carrier frequency (Hz).
    c : float
        Propagation speed (m/s).
    """

    D_max: float = 1200.0
    D_0: float = 50.0
    D_s: float = 1000.0
    f_c: float = 2.35e9
    c: float = LIGHT_SPEED
    D_c: float = field(init=False)

    def __post_init__(self):
        if not (self.D_max > self.D_0 >= 0):
            raise ValueError(f"need D_max > D_0 >= 0, got D_max={self.D_max}, D_0={self.D_0}")
        if self.f_c <= 0 or self.c <= 0:
            raise ValueError("f_c and c must be positive")
        object.__setattr__(self, "D_c", math.sqrt(self.D_max**2 - self.D_0**2))


@dataclass(frozen=True)
class PositionState:
    """Train position ``alpha`` (m from edge A) and speed ``v`` (m/s)."""

    alpha: float
    v: float

    def validate(self, geom: GeometryConfig) -> None:
        if self.v < 0:
            raise ValueError(f"speed must be non-negative, got {self.v}")
        if not (0.0 <= self.alpha <= 2.0 * geom.D_c):
            raise ValueError(f"alpha={self.alpha} outside [0, {2.0 * geom.D_c}]")


def max_doppler(v: float, geom: GeometryConfig) -> float:
    """Largest Doppler magnitude ``v / c * f_c`` at speed ``v`` (m/s)."""
    return v / geom.c * geom.f_c


def doppler_at_position(state: PositionState, geom: GeometryConfig) -> float:
    """Doppler shift (Hz) seen at ``state``; positive while approaching B."""
    state.validate(geom)
    along = geom.D_c - state.alpha
    dist = math.hypot(along, geom.D_0)
    if dist == 0.0:
        # train directly under the antenna with D_0 = 0
        return 0.0
    return max_doppler(state.v, geom) * along / dist


def doppler_index(f_d: float, T_d: float, f_dmax: float | None = None) -> int:
    """Delay-Doppler column index ``x`` for Doppler shift ``f_d``.

    ``ceil(2 T_d f_d)`` for non-negative shifts, ``floor(2 T_d f_d)``
    otherwise. When ``f_dmax`` is given, ``|f_d| > f_dmax`` raises.
    """
    if T_d <= 0:
        raise ValueError("T_d must be positive")
    if f_dmax is not None and abs(f_d) > f_dmax:
        raise ValueError(f"|f_d|={abs(f_d)} exceeds f_dmax={f_dmax}")
    scaled = 2.0 * T_d * f_d
    return int(math.ceil(scaled)) if f_d >= 0 else int(math.floor(scaled))


def position_index(state: PositionState, geom: GeometryConfig, T_d: float) -> int:
    f_d = doppler_at_position(state, geom)
    return doppler_index(f_d, T_d, max_doppler(state.v, geom))


def codebook_slot(x: int, M: int) -> int:
    """1-based codebook slot of Doppler index ``x``; slot ``2M+1`` is edge A."""
    if abs(x) > M:
        raise ValueError(f"|x|={abs(x)} exceeds M={M}")
    return x + M + 1


def doppler_index_range(x: int, T_d: float, f_dmax: float) -> tuple[float, float]:
    """Closed hull ``[lo, hi]`` of Doppler shifts that map to index ``x``."""
    step = 1.0 / (2.0 * T_d)
    if x == 0:
        return 0.0, 0.0
    if x > 0:
        lo, hi = (x - 1) * step, x * step
    else:
        lo, hi = x * step, (x + 1) * step
    return max(lo, -f_dmax), min(hi, f_dmax)
