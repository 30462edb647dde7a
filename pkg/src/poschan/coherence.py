"""Thresholded average coherence of sensing matrices.

``average_coherence`` works on any matrix. ``energy_coherence`` exploits
the structure of a pilot-weighted dominant block ``X_d(p) Phi_x``: its Gram
entry for delays ``u < v`` only depends on ``z = v - u``, so the ``L(L-1)/2``
column pairs collapse to ``L - 1`` sums, each counted ``L - z`` times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CoherenceParams",
    "average_coherence",
    "mutual_coherence",
    "gram_lags",
    "energy_coherence",
    "pilot_coherence_fast",
    "recovery_bound",
]


@dataclass(frozen=True)
class CoherenceParams:
    delta: float = 0.1
    normalize_columns: bool = True

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


def _normalized_gram(matrix: np.ndarray, normalize: bool) -> np.ndarray:
    A = np.asarray(matrix, dtype=complex)
    if A.ndim != 2 or A.shape[1] < 2:
        raise ValueError("need a 2-D matrix with at least two columns")
    if normalize:
        norms = np.linalg.norm(A, axis=0)
        if np.any(norms == 0):
            raise ValueError("cannot normalise a zero column")
        A = A / norms
    return A.conj().T @ A


def _thresholded_mean(values: np.ndarray, weights: np.ndarray, delta: float) -> float:
    keep = values >= delta
    count = np.sum(weights[keep])
    if count == 0:
        return 0.0
    return float(np.sum(weights[keep] * values[keep]) / count)


def average_coherence(matrix, params: CoherenceParams = CoherenceParams()) -> float:
    """Mean of the column inner-product magnitudes that reach ``delta``.

    Returns 0 when no pair of columns reaches the threshold.
    """
    G = _normalized_gram(matrix, params.normalize_columns)
    iu = np.triu_indices(G.shape[0], k=1)
    mags = np.abs(G[iu])
    return _thresholded_mean(mags, np.ones_like(mags), params.delta)


def mutual_coherence(matrix) -> float:
    """Largest normalised inner product between distinct columns."""
    G = _normalized_gram(matrix, True)
    iu = np.triu_indices(G.shape[0], k=1)
    return float(np.abs(G[iu]).max())


def gram_lags(placement, energies, L: int, N_f: int) -> np.ndarray:
    """Normalised Gram magnitudes ``|g_z|`` for lags ``z = 1 .. L-1``."""
    k = np.asarray(placement, dtype=float)
    e = np.asarray(energies, dtype=float)
    z = np.arange(1, L)
    sums = np.exp(-2j * np.pi * np.outer(z, k) / N_f) @ e
    return np.abs(sums) / e.sum()


def energy_coherence(placement, energies, L: int, N_f: int, delta: float) -> float:
    """Average coherence of ``X_d(p) Phi_x`` given per-pilot energies ``|X(k)|^2``."""
    if L < 2:
        raise ValueError("need L >= 2 delays")
    mags = gram_lags(placement, energies, L, N_f)
    multiplicity = L - np.arange(1, L)
    return _thresholded_mean(mags, multiplicity.astype(float), delta)


def pilot_coherence_fast(pattern, cfg, params: CoherenceParams = CoherenceParams()) -> float:
    """Average coherence of a pilot pattern against any dominant block.

    Uses the pattern's actual pilot energies ``|X(k_p)|^2``. The value is the
    same for every Doppler index ``x``.
    """
    return energy_coherence(pattern.placement, pattern.energies, cfg.L, cfg.N_f, params.delta)


def recovery_bound(mu: float) -> float:
    """Sparsity level ``(1 + 1/mu) / 2`` below which recovery is guaranteed."""
    if not (0.0 < mu <= 1.0):
        raise ValueError(f"coherence must lie in (0, 1], got {mu}")
    return 0.5 * (1.0 + 1.0 / mu)
