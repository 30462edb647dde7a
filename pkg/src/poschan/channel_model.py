"""Delay-Doppler channel model, dictionary matrices and ground-truth synthesis.

Subcarriers are 1-based (``k = 1..K``) in the delay-Doppler model and map to
DFT bin ``k - 1``. Coefficient vectors are stacked column-major, so entry
``l + L*(m + M)`` of ``b`` is ``B[l, m + M]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ChannelModelConfig",
    "DelayDopplerCoeffs",
    "Dictionary",
    "ChannelRealization",
    "resolvable_dims",
    "delay_span",
    "build_dictionary",
    "dominant_submatrix",
    "delay_doppler_rows",
    "sample_sparse_channel",
    "coeffs_from_column",
    "symbol_taps",
    "taps_to_matrix",
    "synth_channel_matrices",
    "diag_from_coeffs",
]


def _ceil(value: float) -> int:
    """Ceiling that ignores floating-point noise on exact products (5e6 * 5e-6 = 25.000000000000004)."""
    nearest = round(value)
    if math.isclose(value, nearest, rel_tol=1e-12, abs_tol=1e-12):
        return int(nearest)
    return int(math.ceil(value))


def delay_span(W: float, tau_max: float) -> int:
    """Delay spread in samples, ``ceil(W * tau_max)``."""
    return _ceil(W * tau_max)


def resolvable_dims(W: float, tau_max: float, T_d: float, f_dmax: float) -> tuple[int, int]:
    """Number of resolvable paths ``L`` and Doppler half-count ``M``."""
    if W <= 0 or T_d <= 0 or tau_max < 0 or f_dmax < 0:
        raise ValueError("W, T_d must be positive and tau_max, f_dmax non-negative")
    L = delay_span(W, tau_max) + 1
    M = _ceil(2.0 * T_d * f_dmax)
    return int(L), int(M)


@dataclass(frozen=True)
class ChannelModelConfig:
    """System dimensions of the delay-Doppler model.

    ``L``, ``M`` and ``N_t`` are derived on construction. ``f_dmax`` must
    match the operating speed; :func:`poschan.config.resolve` sets it from
    the geometry.
    """

    W: float = 5e6
    tau_max: float = 5e-6
    T_d: float = 0.675e-3
    f_dmax: float = 1087.962962962963
    K: int = 512
    cp_len: int = 32
    S: int = 6
    gamma: float | None = None
    L: int = field(init=False)
    M: int = field(init=False)
    N_t: int = field(init=False)

    def __post_init__(self):
        L, M = resolvable_dims(self.W, self.tau_max, self.T_d, self.f_dmax)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "M", M)
        T_0 = (self.K + self.cp_len) / self.W
        object.__setattr__(self, "N_t", max(1, int(math.floor(self.T_d / T_0))))
        if self.K < 1:
            raise ValueError("K must be positive")
        if not (0 <= self.S <= L):
            raise ValueError(f"sparsity S={self.S} must lie in [0, L={L}]")
        if self.cp_len < delay_span(self.W, self.tau_max):
            raise ValueError(f"cp_len={self.cp_len} shorter than the delay span {delay_span(self.W, self.tau_max)}")
        if L > self.K:
            raise ValueError("more resolvable paths than subcarriers")
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be positive")

    @property
    def N_f(self) -> int:
        return self.K

    @property
    def N_0(self) -> int:
        return self.L * (2 * self.M + 1)

    @property
    def T_s(self) -> float:
        return 1.0 / self.W

    @property
    def T_0(self) -> float:
        return (self.K + self.cp_len) / self.W


@dataclass(frozen=True)
class DelayDopplerCoeffs:
    """Coefficient matrix ``B`` (L x 2M+1) with the active Doppler column ``x``."""

    B: np.ndarray
    x: int

    @property
    def M(self) -> int:
        return (self.B.shape[1] - 1) // 2

    @property
    def b(self) -> np.ndarray:
        return self.B.reshape(-1, order="F")

    @property
    def b_x(self) -> np.ndarray:
        return self.B[:, self.x + self.M]

    def dominant_count(self, gamma: float | None = None) -> int:
        """Number of coefficients with power above ``gamma``.

        The default threshold is 1% of the strongest coefficient's power.
        """
        power = np.abs(self.B) ** 2
        if gamma is None:
            peak = power.max(initial=0.0)
            if peak == 0.0:
                return 0
            gamma = 0.01 * peak
        return int(np.count_nonzero(power > gamma))


@dataclass(frozen=True)
class Dictionary:
    """Pilot-row dictionary ``Phi`` for OFDM symbol ``n``."""

    Phi: np.ndarray
    placement: np.ndarray
    n: int
    cfg: ChannelModelConfig


@dataclass(frozen=True)
class ChannelRealization:
    taps: np.ndarray  # (L, K + cp_len): h(l, m) for one symbol
    H: np.ndarray
    H_free: np.ndarray
    H_ICI: np.ndarray
    coeffs: DelayDopplerCoeffs


def _check_placement(placement, K: int) -> np.ndarray:
    p = np.asarray(placement)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("placement must be a non-empty 1-D sequence")
    if not np.issubdtype(p.dtype, np.integer):
        if not np.all(np.equal(np.mod(p, 1), 0)):
            raise ValueError("placement entries must be integers")
        p = p.astype(np.int64)
    if p.min() < 1 or p.max() > K:
        raise ValueError(f"placement entries must lie in [1, {K}]")
    if np.any(np.diff(p) <= 0):
        raise ValueError("placement must be sorted with distinct entries")
    return p


def delay_doppler_rows(subcarriers, n: int, cfg: ChannelModelConfig, x: int | None = None) -> np.ndarray:
    """Rows ``u_n kron u_k`` for the given 1-based subcarriers.

    With ``x`` set, only the ``L`` columns of Doppler bin ``x`` are returned.
    """
    k = np.asarray(subcarriers, dtype=float)
    delays = np.arange(cfg.L)
    delay_part = np.exp(-2j * np.pi * np.outer(k, delays) / cfg.N_f)
    if x is not None:
        if abs(x) > cfg.M:
            raise ValueError(f"|x|={abs(x)} exceeds M={cfg.M}")
        return np.exp(2j * np.pi * x * n / cfg.N_t) * delay_part
    dopplers = np.arange(-cfg.M, cfg.M + 1)
    doppler_part = np.exp(2j * np.pi * dopplers * n / cfg.N_t)
    # Kronecker ordering: Doppler is the slow index
    return (doppler_part[None, :, None] * delay_part[:, None, :]).reshape(k.size, -1)


def build_dictionary(placement, n: int, cfg: ChannelModelConfig) -> Dictionary:
    p = _check_placement(placement, cfg.K)
    return Dictionary(delay_doppler_rows(p, n, cfg), p, n, cfg)


def dominant_submatrix(dictionary: Dictionary, x: int) -> np.ndarray:
    """Columns ``L(M+x) .. L(M+x)+L-1`` of the dictionary."""
    cfg = dictionary.cfg
    if abs(x) > cfg.M:
        raise ValueError(f"|x|={abs(x)} exceeds M={cfg.M}")
    start = cfg.L * (cfg.M + x)
    return dictionary.Phi[:, start:start + cfg.L]


def coeffs_from_column(b_x, x: int, cfg: ChannelModelConfig) -> DelayDopplerCoeffs:
    if abs(x) > cfg.M:
        raise ValueError(f"|x|={abs(x)} exceeds M={cfg.M}")
    B = np.zeros((cfg.L, 2 * cfg.M + 1), dtype=complex)
    B[:, x + cfg.M] = b_x
    return DelayDopplerCoeffs(B, x)


def sample_sparse_channel(rng: np.random.Generator, cfg: ChannelModelConfig, x: int) -> DelayDopplerCoeffs:
    """S-sparse channel living in Doppler column ``x`` with unit total power.

    Active delays are distinct and uniform over ``[0, L)``; gains are
    circular complex Gaussian, normalised so that ``sum |beta|^2 = 1``.
    """
    b_x = np.zeros(cfg.L, dtype=complex)
    if cfg.S > 0:
        delays = rng.choice(cfg.L, size=cfg.S, replace=False)
        gains = rng.standard_normal(cfg.S) + 1j * rng.standard_normal(cfg.S)
        b_x[delays] = gains / np.linalg.norm(gains)
    return coeffs_from_column(b_x, x, cfg)


def _window_gain(f_d: float, cfg: ChannelModelConfig) -> complex:
    """Mean of ``exp(j 2 pi f_d m T_s)`` over the post-CP samples."""
    m = np.arange(cfg.cp_len, cfg.cp_len + cfg.K)
    return complex(np.mean(np.exp(2j * np.pi * f_d * m * cfg.T_s)))


def symbol_taps(b_x, x: int, f_d: float, n: int, cfg: ChannelModelConfig) -> np.ndarray:
    """Per-sample taps ``h(l, m)`` of symbol ``n``, shape ``(L, K + cp_len)``.

    Every path rotates at the same Doppler ``f_d``. Amplitudes are scaled so
    that the tap average over the DFT window reproduces the delay-Doppler
    coefficients, which makes the ICI-free response equal ``(u_n kron u_k) b``.
    """
    b_x = np.asarray(b_x, dtype=complex)
    delays = np.arange(cfg.L)
    amp = b_x * np.exp(2j * np.pi * x * n / cfg.N_t) * np.exp(-2j * np.pi * delays / cfg.N_f)
    amp = amp / _window_gain(f_d, cfg)
    m = np.arange(cfg.K + cfg.cp_len)
    return amp[:, None] * np.exp(2j * np.pi * f_d * m * cfg.T_s)[None, :]


def taps_to_matrix(taps: np.ndarray, K: int, cp_len: int) -> np.ndarray:
    """Frequency-domain channel matrix for time-varying taps (unitary DFT).

    ``H[k, d] = sum_l g_l[(k - d) mod K] exp(-j 2 pi l d / K)`` where ``g_l``
    is the normalised DFT of tap ``l`` over the post-CP window (0-based bins).
    """
    window = taps[:, cp_len:cp_len + K]
    g = np.fft.fft(window, axis=1) / K
    k = np.arange(K)
    shift = (k[:, None] - k[None, :]) % K
    H = np.zeros((K, K), dtype=complex)
    for ell in np.flatnonzero(np.any(window != 0, axis=1)):
        H += g[ell][shift] * np.exp(-2j * np.pi * ell * k / K)[None, :]
    return H


def synth_channel_matrices(
    coeffs: DelayDopplerCoeffs, f_d: float, cfg: ChannelModelConfig, n: int = 0
) -> ChannelRealization:
    taps = symbol_taps(coeffs.b_x, coeffs.x, f_d, n, cfg)
    H = taps_to_matrix(taps, cfg.K, cfg.cp_len)
    H_free = np.diag(np.diag(H))
    H_ICI = H - H_free
    return ChannelRealization(taps, H, H_free, H_ICI, coeffs)


def diag_from_coeffs(coeffs: DelayDopplerCoeffs, n: int, k: int, cfg: ChannelModelConfig) -> complex:
    """ICI-free response ``H(n, k) = (u_n kron u_k) b`` at 1-based subcarrier ``k``."""
    row = delay_doppler_rows([k], n, cfg)[0]
    return complex(row @ coeffs.b)
