"""Channel estimators working on pilot observations.

The compressed estimators recover the delay coefficients ``b_x`` of the
active Doppler column from ``y = A b_x + noise`` with ``A = X_d(p) Phi_x``.
The linear baselines estimate the ICI-free frequency response directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .channel_model import ChannelModelConfig, delay_doppler_rows

__all__ = [
    "PilotObservation",
    "EstimateResult",
    "BPConvergenceError",
    "make_observation",
    "omp_estimate",
    "bp_estimate",
    "default_epsilon",
    "ls_estimate",
    "delay_correlation",
    "lmmse_estimate",
    "coeffs_to_channel",
    "channel_to_coeffs",
]


@dataclass(frozen=True)
class PilotObservation:
    """Received pilots ``y`` with sensing matrix ``A`` (P x L)."""

    y: np.ndarray
    A: np.ndarray
    noise_var: float
    x: int = 0

    def __post_init__(self):
        if self.A.ndim != 2 or self.y.shape != (self.A.shape[0],):
            raise ValueError(f"y shape {self.y.shape} does not match A shape {self.A.shape}")
        if self.noise_var < 0:
            raise ValueError("noise_var must be non-negative")


@dataclass
class EstimateResult:
    b_hat: np.ndarray
    support: np.ndarray
    residual_norm: float
    H_free_hat: np.ndarray | None = None
    info: dict = field(default_factory=dict)


class BPConvergenceError(RuntimeError):
    """Raised when the l1 solver hits its iteration cap; ``best`` holds the last iterate."""

    def __init__(self, message, best: EstimateResult):
        super().__init__(message)
        self.best = best


def make_observation(Y, pattern, n: int, x: int, cfg: ChannelModelConfig, noise_var: float) -> PilotObservation:
    """Pilot observation for symbol ``n`` from a full received vector ``Y`` (length K)."""
    y = np.asarray(Y)[pattern.placement - 1]
    A = pattern.symbols[:, None] * delay_doppler_rows(pattern.placement, n, cfg, x)
    return PilotObservation(y, A, noise_var, x)


def _support_of(b: np.ndarray) -> np.ndarray:
    return np.flatnonzero(b)


def omp_estimate(obs: PilotObservation, sparsity: int | None = None, tol: float | None = None) -> EstimateResult:
    """Orthogonal matching pursuit.

    Stops after ``sparsity`` atoms, or once the residual norm drops to
    ``tol``, whichever comes first. At least one stopping rule is required.
    """
    if sparsity is None and tol is None:
        raise ValueError("give a sparsity level, a residual tolerance, or both")
    A, y = obs.A, obs.y
    P, L = A.shape
    max_atoms = min(P, L) if sparsity is None else min(int(sparsity), P, L)
    norms = np.linalg.norm(A, axis=0)
    norms[norms == 0] = np.inf
    support: list[int] = []
    coef = np.zeros(0, dtype=complex)
    residual = y.astype(complex)
    history = [float(np.linalg.norm(residual))]
    regularized = False

    while len(support) < max_atoms and (tol is None or history[-1] > tol):
        corr = np.abs(A.conj().T @ residual) / norms
        corr[support] = -1.0
        support.append(int(np.argmax(corr)))
        As = A[:, support]
        coef, _, rank, _ = np.linalg.lstsq(As, y, rcond=None)
        if rank < len(support):
            regularized = True
            gram = As.conj().T @ As + 1e-12 * np.eye(len(support))
            coef = np.linalg.solve(gram, As.conj().T @ y)
        new_residual = y - As @ coef
        new_norm = float(np.linalg.norm(new_residual))
        if new_norm >= history[-1]:
            # the new atom does not help; drop it and stop
            support.pop()
            coef = np.linalg.lstsq(A[:, support], y, rcond=None)[0] if support else coef[:0]
            break
        residual = new_residual
        history.append(new_norm)

    b_hat = np.zeros(L, dtype=complex)
    b_hat[support] = coef
    info = {"iterations": len(support), "residual_history": history, "regularized": regularized}
    return EstimateResult(b_hat, _support_of(b_hat), history[-1], info=info)


def default_epsilon(P: int, noise_var: float) -> float:
    """Noise-scaled residual budget ``sqrt(P s2) (1 + 2 sqrt(2) / sqrt(2P))``."""
    return math.sqrt(P * noise_var) * (1.0 + 2.0 * math.sqrt(2.0) / math.sqrt(2.0 * P))


class _ResidualBall:
    """Euclidean projection onto ``{b : ||A b - y|| <= eps}``."""

    def __init__(self, A: np.ndarray, y: np.ndarray, eps: float):
        U, s, Vh = np.linalg.svd(A, full_matrices=False)
        keep = s > s[0] * 1e-12 if s.size else s.astype(bool)
        self.U, self.s, self.Vh = U[:, keep], s[keep], Vh[keep]
        self.yt = self.U.conj().T @ y
        outside = float(np.linalg.norm(y - self.U @ self.yt))
        self.slack2 = eps * eps - outside * outside
        self.min_residual = outside
        if self.slack2 < -1e-12 * max(1.0, eps * eps):
            raise ValueError(
                f"residual budget {eps:.3e} is below the least-squares residual {outside:.3e}"
            )
        self.slack2 = max(self.slack2, 0.0)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        c = self.Vh @ v
        r = self.s * c - self.yt
        r2 = np.abs(r) ** 2
        if r2.sum() <= self.slack2:
            return v
        s2 = self.s**2
        if self.slack2 <= 0.0:
            c_new = self.yt / self.s
        else:
            t = math.sqrt(self.slack2)
            lam = 0.0
            for _ in range(100):
                d = 1.0 + lam * s2
                f = float(np.sum(r2 / d**2))
                fp = float(-2.0 * np.sum(r2 * s2 / d**3))
                root = math.sqrt(f)
                if abs(root - t) <= 1e-15 * t:
                    break
                # Newton on 1/sqrt(f) - 1/t, which is close to linear in lam
                step = (1.0 / root - 1.0 / t) / (-0.5 * fp / (f * root))
                lam_next = lam - step
                if lam_next <= lam:
                    break
                lam = lam_next
            c_new = (c + lam * self.s * self.yt) / (1.0 + lam * s2)
        return v + self.Vh.conj().T @ (c_new - c)


def _soft(v: np.ndarray, tau: float) -> np.ndarray:
    mag = np.abs(v)
    scale = np.maximum(mag - tau, 0.0) / np.where(mag > 0, mag, 1.0)
    return v * scale


def bp_estimate(
    obs: PilotObservation,
    epsilon: float | None = None,
    max_iter: int = 10_000,
    tol: float = 1e-9,
    rho: float | None = None,
) -> EstimateResult:
    """Basis pursuit denoising: minimise ``||b||_1`` subject to ``||y - A b|| <= epsilon``.

    Solved with ADMM on the splitting ``b = w``, where the ``b`` step is an
    exact projection onto the residual ball. The result is finally projected
    onto the ball restricted to the support found, so it is feasible and
    exactly sparse. ``epsilon`` defaults to :func:`default_epsilon`.

    Raises
    ------
    BPConvergenceError
        If ``max_iter`` iterations pass without meeting ``tol``.
    ValueError
        If ``epsilon`` is smaller than the least-squares residual.
    """
    A, y = obs.A, obs.y
    P, L = A.shape
    eps = default_epsilon(P, obs.noise_var) if epsilon is None else float(epsilon)
    if eps < 0:
        raise ValueError("epsilon must be non-negative")
    project = _ResidualBall(A, y, eps)

    col_scale = np.linalg.norm(A, axis=0).mean()
    b_ls = project.Vh.conj().T @ (project.yt / project.s)
    if rho is None:
        rho = col_scale / max(float(np.abs(b_ls).mean()), 1e-12) / L
    w = np.zeros(L, dtype=complex)
    u = np.zeros(L, dtype=complex)
    scale = max(float(np.linalg.norm(b_ls)), 1e-12)
    converged = False
    for it in range(1, max_iter + 1):
        b = project(w - u)
        w_prev = w
        w = _soft(b + u, 1.0 / rho)
        u = u + b - w
        primal = float(np.linalg.norm(b - w))
        change = float(np.linalg.norm(w - w_prev))
        if primal <= tol * scale and change <= tol * scale:
            converged = True
            break
        # residual balancing; the projection does not depend on rho
        if it % 10 == 0:
            if primal > 10.0 * change:
                rho *= 2.0
                u /= 2.0
            elif change > 10.0 * primal:
                rho /= 2.0
                u *= 2.0

    b_out = _polish(A, y, eps, w, b)
    result = EstimateResult(
        b_out,
        _support_of(b_out),
        float(np.linalg.norm(y - A @ b_out)),
        info={"iterations": it, "epsilon": eps, "rho": rho, "converged": converged},
    )
    if not converged:
        raise BPConvergenceError(f"BPDN did not converge in {max_iter} iterations", result)
    return result


def _polish(A, y, eps, w, b):
    """Feasible point on the support of ``w`` closest to ``w``; falls back to ``b``."""
    support = np.flatnonzero(w)
    if support.size == 0:
        return w if np.linalg.norm(y) <= eps else b
    try:
        ball = _ResidualBall(A[:, support], y, eps)
    except ValueError:
        return b
    out = np.zeros_like(w)
    out[support] = ball(w[support])
    return out


def ls_estimate(y, pattern, K: int) -> np.ndarray:
    """Least-squares pilot estimates, linearly interpolated over all subcarriers.

    ``y`` may be the full received vector (length K) or the pilot samples
    only. Real and imaginary parts are interpolated separately; outside the
    first and last pilot the edge value is held.
    """
    y = np.asarray(y)
    if y.size == K and pattern.P != K:
        y = y[pattern.placement - 1]
    if y.size != pattern.P:
        raise ValueError("y must have length K or the pilot count")
    if np.any(pattern.symbols == 0):
        raise ValueError("pilot symbols must be nonzero")
    h_p = y / pattern.symbols
    grid = np.arange(1, K + 1)
    return np.interp(grid, pattern.placement, h_p.real) + 1j * np.interp(grid, pattern.placement, h_p.imag)


def delay_correlation(rows, cols, pdp, K: int) -> np.ndarray:
    """Frequency correlation ``sum_l pdp[l] exp(-j 2 pi l (k - k') / K)``."""
    rows = np.asarray(rows, dtype=float)
    cols = np.asarray(cols, dtype=float)
    pdp = np.asarray(pdp, dtype=float)
    lags = np.arange(pdp.size)
    Fr = np.exp(-2j * np.pi * np.outer(rows, lags) / K)
    Fc = np.exp(-2j * np.pi * np.outer(cols, lags) / K)
    return (Fr * pdp) @ Fc.conj().T


def lmmse_estimate(y, pattern, noise_var: float, K: int, pdp) -> np.ndarray:
    """Wiener interpolation of the LS pilot estimates.

    ``pdp`` is the average power of each delay tap; for the sparse sampler
    it is flat, ``1/L`` on each of the ``L`` taps.
    """
    y = np.asarray(y)
    if y.size == K and pattern.P != K:
        y = y[pattern.placement - 1]
    h_ls = y / pattern.symbols
    p = pattern.placement
    R_pp = delay_correlation(p, p, pdp, K)
    R_hp = delay_correlation(np.arange(1, K + 1), p, pdp, K)
    noise = noise_var / pattern.energies
    try:
        weights = scipy.linalg.solve(R_pp + np.diag(noise), h_ls, assume_a="her")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise ValueError("pilot correlation plus noise is singular") from exc
    return R_hp @ weights


def coeffs_to_channel(b_hat, x: int, n: int, cfg: ChannelModelConfig) -> np.ndarray:
    """ICI-free response on every subcarrier from Doppler-column coefficients."""
    rows = delay_doppler_rows(np.arange(1, cfg.K + 1), n, cfg, x)
    return rows @ np.asarray(b_hat)


def channel_to_coeffs(H_diag, x: int, n: int, cfg: ChannelModelConfig) -> np.ndarray:
    """Least-squares Doppler-column coefficients matching a full-band response."""
    rows = delay_doppler_rows(np.arange(1, cfg.K + 1), n, cfg, x)
    # the L columns are orthogonal over the full band
    return rows.conj().T @ np.asarray(H_diag) / cfg.K
