"""End-to-end OFDM link simulation and Monte Carlo sweeps.

Conventions: unitary DFT, unit average energy on every subcarrier, noise
variance ``sigma2 = 10 ** (-snr_db / 10)`` per time sample (and hence per
subcarrier). Each trial draws its channel, data and noise from streams
derived from ``(seed, trial)`` only, so every cell of a sweep sees the same
realisations and results do not depend on execution order.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import qam
from .channel_model import (
    ChannelModelConfig,
    ChannelRealization,
    coeffs_from_column,
    sample_sparse_channel,
    symbol_taps,
)
from .coherence import CoherenceParams, pilot_coherence_fast
from .estimators import (
    BPConvergenceError,
    bp_estimate,
    channel_to_coeffs,
    coeffs_to_channel,
    default_epsilon,
    lmmse_estimate,
    ls_estimate,
    make_observation,
    omp_estimate,
)
from .geometry import GeometryConfig, PositionState, doppler_at_position, kmh_to_ms, position_index
from .pilot_design import (
    Codebook,
    DesignParams,
    PilotPattern,
    build_codebook,
    equidistant_pattern,
    random_search_design,
    select_pilot,
)

__all__ = [
    "ESTIMATORS",
    "PILOT_SOURCES",
    "SimConfig",
    "TrialMetrics",
    "data_subcarriers",
    "transmit_frame",
    "apply_channel",
    "apply_channel_and_receive",
    "ici_mitigate",
    "ici_power",
    "run_trial",
    "run_monte_carlo",
    "CSV_COLUMNS",
]

log = logging.getLogger(__name__)

ESTIMATORS = ("bp", "omp", "ls", "lmmse", "perfect")
PILOT_SOURCES = ("algorithm1", "equidistant", "random_search")

CSV_COLUMNS = (
    "snr_db", "alpha_m", "f_d_hz", "estimator", "pilot_source", "q", "trials",
    "mse_mean", "mse_std", "ber_mean", "ber_std", "coherence",
)


@dataclass(frozen=True)
class SimConfig:
    """Sweep definition.

    The grid is the full product of ``snr_db``, ``positions``,
    ``estimators``, ``pilot_sources`` and ``ici_iterations``.
    """

    channel: ChannelModelConfig = field(default_factory=ChannelModelConfig)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    speed_kmh: float = 500.0
    positions: tuple[float, ...] = (0.0,)
    snr_db: tuple[float, ...] = (15.0,)
    estimators: tuple[str, ...] = ("bp",)
    pilot_sources: tuple[str, ...] = ("algorithm1",)
    ici_iterations: tuple[int, ...] = (2,)
    trials: int = 100
    seed: int = 0
    P: int = 64
    design: DesignParams = field(default_factory=DesignParams)
    genie_feedback: bool = True
    zero_data: bool = False
    n_symbols: int | None = None
    sparsity: int | None = None
    random_search_iters: int = 200

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        for name, values in (("snr_db", self.snr_db), ("positions", self.positions),
                             ("estimators", self.estimators), ("pilot_sources", self.pilot_sources),
                             ("ici_iterations", self.ici_iterations)):
            if len(values) == 0:
                raise ValueError(f"sweep axis {name} is empty")
        if any(q < 0 for q in self.ici_iterations):
            raise ValueError("ICI iteration counts must be non-negative")
        if bad := set(self.estimators) - set(ESTIMATORS):
            raise ValueError(f"unknown estimators {sorted(bad)}")
        if bad := set(self.pilot_sources) - set(PILOT_SOURCES):
            raise ValueError(f"unknown pilot sources {sorted(bad)}")
        if not 1 <= self.P < self.channel.K:
            raise ValueError(f"pilot count P={self.P} must be in [1, K)")
        for alpha in self.positions:
            PositionState(alpha, self.speed).validate(self.geometry)

    @property
    def speed(self) -> float:
        return kmh_to_ms(self.speed_kmh)

    @property
    def symbols_per_packet(self) -> int:
        return self.channel.N_t if self.n_symbols is None else self.n_symbols

    @property
    def S(self) -> int:
        return self.channel.S if self.sparsity is None else self.sparsity


@dataclass(frozen=True)
class TrialMetrics:
    mse: float
    ber: float
    coherence: float
    ici_power: float


def data_subcarriers(pattern: PilotPattern) -> np.ndarray:
    """1-based subcarriers not used by pilots."""
    mask = np.ones(pattern.K, dtype=bool)
    mask[pattern.placement - 1] = False
    return np.flatnonzero(mask) + 1


def transmit_frame(bits, pattern: PilotPattern, cfg: ChannelModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Map data bits and pilots onto one OFDM symbol.

    Returns the frequency-domain symbol vector ``X`` (length K) and the time
    samples with the cyclic prefix prepended (length K + cp_len).
    """
    data_idx = data_subcarriers(pattern) - 1
    bits = np.asarray(bits)
    if bits.size != data_idx.size * qam.BITS_PER_SYMBOL:
        raise ValueError(f"expected {data_idx.size * qam.BITS_PER_SYMBOL} bits, got {bits.size}")
    X = np.zeros(cfg.K, dtype=complex)
    X[data_idx] = qam.modulate(bits)
    X[pattern.placement - 1] = pattern.symbols
    return X, _ofdm_modulate(X, cfg.cp_len)


def _ofdm_modulate(X, cp_len):
    x = np.fft.ifft(X, norm="ortho")
    return np.concatenate([x[len(x) - cp_len:], x]) if cp_len else x


def apply_channel(samples: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Time-varying convolution ``r[i] = sum_l h(l, i) s[i - l]`` (no noise)."""
    out = np.zeros(samples.size, dtype=complex)
    for ell in np.flatnonzero(np.any(taps != 0, axis=1)):
        out[ell:] += taps[ell, ell:samples.size] * samples[: samples.size - ell]
    return out


def _ofdm_demodulate(r, K, cp_len):
    return np.fft.fft(r[cp_len:cp_len + K], norm="ortho")


def apply_channel_and_receive(samples, realization, noise_var: float, rng: np.random.Generator | None = None,
                              cp_len: int | None = None) -> np.ndarray:
    """Pass one symbol through the channel, add AWGN, drop the CP and demodulate.

    ``realization`` is a :class:`ChannelRealization` or a tap array of shape
    ``(L, K + cp_len)``.
    """
    taps = realization.taps if isinstance(realization, ChannelRealization) else np.asarray(realization)
    samples = np.asarray(samples, dtype=complex)
    K = taps.shape[1] - (cp_len if cp_len is not None else 0)
    if cp_len is None:
        if isinstance(realization, ChannelRealization):
            K = realization.H.shape[0]
        else:
            raise ValueError("cp_len is required when passing raw taps")
        cp_len = samples.size - K
    r = apply_channel(samples, taps)
    if noise_var > 0:
        if rng is None:
            raise ValueError("an RNG is required for noisy reception")
        r = r + math.sqrt(noise_var / 2) * (rng.standard_normal(r.size) + 1j * rng.standard_normal(r.size))
    return _ofdm_demodulate(r, K, cp_len)


def ici_mitigate(Y, H_hat, data, q: int, reestimate=None) -> np.ndarray:
    """Remove data-induced ICI from the received symbol ``q`` times.

    Iteration ``i`` forms ``Y0 - H_i z_i`` where ``z_i`` is the data estimate
    with zeros on the pilot subcarriers and ``H_i`` the channel estimate of
    the previous pass. ``H_hat`` is a K x K matrix or a callable applying
    one. After each pass ``reestimate(Y_i)`` may return a new channel (or a
    ``(channel, data)`` pair); without it the initial estimate is reused.
    """
    if q < 0:
        raise ValueError("q must be non-negative")
    Y0 = np.asarray(Y)
    Yq = Y0
    H, z = H_hat, np.asarray(data)
    for _ in range(q):
        applied = H(z) if callable(H) else np.asarray(H) @ z
        Yq = Y0 - applied
        if reestimate is not None:
            update = reestimate(Yq)
            if isinstance(update, tuple):
                H, z = update[0], np.asarray(update[1])
            else:
                H = update
    return Yq


def ici_power(f_d: float, cfg: ChannelModelConfig) -> float:
    """Expected ICI power per subcarrier for a unit-power channel and unit-energy symbols."""
    m = np.arange(cfg.cp_len, cfg.cp_len + cfg.K)
    gain = abs(np.mean(np.exp(2j * np.pi * f_d * m * cfg.T_s)))
    return 1.0 / gain**2 - 1.0


def _streams(seed: int, trial: int):
    ss = np.random.SeedSequence(seed, spawn_key=(0, trial))
    return [np.random.default_rng(s) for s in ss.spawn(4)]


def _design_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))


class _Estimator:
    """One estimator bound to a pilot pattern, symbol and Doppler bin."""

    def __init__(self, name, pattern, n, x, f_d, cfg, S, pdp):
        self.name, self.pattern, self.n, self.x, self.f_d = name, pattern, n, x, f_d
        self.cfg, self.S, self.pdp = cfg, S, pdp
        self.failures = 0

    def __call__(self, Y, noise_var):
        """Return ``(H_free_hat, b_hat)`` from a received vector."""
        cfg, pattern = self.cfg, self.pattern
        if self.name in ("bp", "omp"):
            obs = make_observation(Y, pattern, self.n, self.x, cfg, noise_var)
            if self.name == "omp":
                b = omp_estimate(obs, sparsity=self.S).b_hat
            else:
                eps = default_epsilon(pattern.P, noise_var)
                ls_resid = np.linalg.norm(obs.y - obs.A @ np.linalg.lstsq(obs.A, obs.y, rcond=None)[0])
                try:
                    b = bp_estimate(obs, epsilon=max(eps, 1.001 * ls_resid)).b_hat
                except BPConvergenceError as exc:
                    self.failures += 1
                    b = exc.best.b_hat
            return coeffs_to_channel(b, self.x, self.n, cfg), b
        if self.name == "ls":
            H = ls_estimate(Y, pattern, cfg.K)
        else:
            H = lmmse_estimate(Y, pattern, noise_var, cfg.K, self.pdp)
        return H, channel_to_coeffs(H, self.x, self.n, cfg)


def _ici_operator(b_hat, x, f_d, n, cfg):
    taps = symbol_taps(b_hat, x, f_d, n, cfg)

    def apply(z):
        return _ofdm_demodulate(apply_channel(_ofdm_modulate(z, cfg.cp_len), taps), cfg.K, cfg.cp_len)

    return apply


def _zf_bits(Y, H, data_idx):
    return qam.demodulate(Y[data_idx] / H[data_idx])


def _hard_data(Y, H, data_idx, K):
    z = np.zeros(K, dtype=complex)
    z[data_idx] = qam.CONSTELLATION[
        np.argmin(np.abs((Y[data_idx] / H[data_idx])[:, None] - qam.CONSTELLATION[None, :]), axis=1)
    ]
    return z


def _pilot_patterns(sim: SimConfig, codebook: Codebook | None):
    """Fixed pilot patterns per source; ``None`` marks per-trial draws."""
    cfg = sim.channel
    fixed: dict[str, object] = {}
    if "algorithm1" in sim.pilot_sources:
        if codebook is None:
            codebook, _ = build_codebook(cfg, sim.design, seed=sim.seed)
        if codebook.K != cfg.K or codebook.P != sim.P or codebook.M != cfg.M:
            raise ValueError("codebook does not match the configured K, P or M")
        fixed["algorithm1"] = codebook
    if "random_search" in sim.pilot_sources:
        pattern, _ = random_search_design(
            sim.random_search_iters, cfg.K, sim.P, sim.design.T, cfg,
            CoherenceParams(sim.design.delta), _design_rng(sim.seed), sim.design.power_levels,
        )
        fixed["random_search"] = pattern
    if "equidistant" in sim.pilot_sources:
        fixed["equidistant"] = None
    return fixed


def _cells(sim: SimConfig):
    for snr in sim.snr_db:
        for alpha in sim.positions:
            for est in sim.estimators:
                for src in sim.pilot_sources:
                    for q in sim.ici_iterations:
                        yield snr, alpha, est, src, q


def _simulate_trial(sim: SimConfig, trial: int, fixed) -> dict:
    """Metrics for every grid cell of one trial, keyed like :func:`_cells`."""
    cfg = sim.channel
    chan_rng, data_rng, noise_rng, pilot_rng = _streams(sim.seed, trial)
    n_sym = sim.symbols_per_packet
    S = sim.S
    b_true = sample_sparse_channel(chan_rng, cfg, 0).b_x if S == cfg.S else _sparse_column(chan_rng, cfg, S)
    n_data_bits = (cfg.K - sim.P) * qam.BITS_PER_SYMBOL
    bits = data_rng.integers(0, 2, size=(n_sym, n_data_bits))
    noise = (noise_rng.standard_normal((n_sym, cfg.K)) + 1j * noise_rng.standard_normal((n_sym, cfg.K))) / math.sqrt(2)
    pdp = np.full(cfg.L, 1.0 / cfg.L)
    q_max = max(sim.ici_iterations)
    equi = equidistant_pattern(cfg.K, sim.P, pilot_rng) if "equidistant" in fixed else None

    out = {}
    for alpha in sim.positions:
        state = PositionState(alpha, sim.speed)
        f_d = doppler_at_position(state, sim.geometry)
        x = position_index(state, sim.geometry, cfg.T_d)
        if abs(x) > cfg.M:
            raise ValueError(f"Doppler index {x} at alpha={alpha} exceeds M={cfg.M}")
        coeffs = coeffs_from_column(b_true, x, cfg)
        interference = ici_power(f_d, cfg)

        for src in sim.pilot_sources:
            source = fixed[src]
            if src == "algorithm1":
                pattern = select_pilot(source, f_d)
            elif src == "equidistant":
                pattern = equi
            else:
                pattern = source
            coherence = pilot_coherence_fast(pattern, cfg, CoherenceParams(sim.design.delta))
            data_idx = data_subcarriers(pattern) - 1

            acc = {}
            for n in range(n_sym):
                sym_bits = np.zeros_like(bits[n]) if sim.zero_data else bits[n]
                X, samples = transmit_frame(sym_bits, pattern, cfg)
                if sim.zero_data:
                    X[data_idx] = 0.0
                    samples = _ofdm_modulate(X, cfg.cp_len)
                taps = symbol_taps(coeffs.b_x, x, f_d, n, cfg)
                Y_clean = _ofdm_demodulate(apply_channel(samples, taps), cfg.K, cfg.cp_len)
                H_true = coeffs_to_channel(coeffs.b_x, x, n, cfg)
                ici = float(np.sum(np.abs(Y_clean - H_true * X) ** 2) / cfg.K)
                h_energy = float(np.sum(np.abs(H_true) ** 2))
                z_genie = np.zeros(cfg.K, dtype=complex)
                z_genie[data_idx] = X[data_idx]

                for snr in sim.snr_db:
                    sigma2 = 10.0 ** (-snr / 10.0)
                    Y0 = Y_clean + math.sqrt(sigma2) * noise[n]
                    for est_name in sim.estimators:
                        stages = _run_estimator(
                            est_name, Y0, pattern, n, x, f_d, cfg, S, pdp, sigma2, interference,
                            q_max, z_genie if sim.genie_feedback else None, data_idx, H_true, sim.zero_data,
                        )
                        for q in sim.ici_iterations:
                            H_hat = stages[q]
                            err = float(np.sum(np.abs(H_hat - H_true) ** 2))
                            if sim.zero_data:
                                nerr = 0
                            else:
                                nerr = int(np.count_nonzero(_zf_bits(Y0, H_hat, data_idx) != sym_bits))
                            a = acc.setdefault((snr, est_name, q), [0.0, 0.0, 0, 0, 0.0])
                            a[0] += err
                            a[1] += h_energy
                            a[2] += nerr
                            a[3] += sym_bits.size
                            a[4] += ici
            for (snr, est_name, q), (err, energy, nerr, nbits, ici_sum) in acc.items():
                ber = nerr / nbits if not sim.zero_data else 0.0
                out[(snr, alpha, est_name, src, q)] = TrialMetrics(err / energy, ber, coherence, ici_sum / n_sym)
    return out


def _sparse_column(rng, cfg, S):
    b = np.zeros(cfg.L, dtype=complex)
    if S > 0:
        idx = rng.choice(cfg.L, size=S, replace=False)
        g = rng.standard_normal(S) + 1j * rng.standard_normal(S)
        b[idx] = g / np.linalg.norm(g)
    return b


def _run_estimator(name, Y0, pattern, n, x, f_d, cfg, S, pdp, sigma2, interference, q_max,
                   z_genie, data_idx, H_true, zero_data):
    """Channel estimates after 0 .. q_max ICI mitigation passes."""
    if name == "perfect":
        return [H_true] * (q_max + 1)
    est = _Estimator(name, pattern, n, x, f_d, cfg, S, pdp)
    # interference-aware noise level: full data ICI before mitigation, pilot-induced share after
    pilot_share = pattern.P / cfg.K
    noise_q0 = sigma2 + (0.0 if zero_data else interference) + interference * pilot_share
    noise_q = sigma2 + interference * pilot_share
    H, b = est(Y0, noise_q0)
    stages = [H]
    state = {"H": H}

    def data_for(H_cur):
        if z_genie is not None:
            return z_genie
        return _hard_data(Y0, H_cur, data_idx, cfg.K)

    def reestimate(Yq):
        H_new, b_new = est(Yq, noise_q)
        stages.append(H_new)
        state["H"] = H_new
        return _ici_operator(b_new, x, f_d, n, cfg), data_for(H_new)

    if q_max > 0:
        ici_mitigate(Y0, _ici_operator(b, x, f_d, n, cfg), data_for(H), q_max, reestimate)
    return stages


def run_trial(sim: SimConfig, position: float, snr: float, pattern: PilotPattern, estimator: str,
              trial: int = 0, q: int | None = None) -> TrialMetrics:
    """Metrics of one packet at one grid point with an explicit pilot pattern.

    Randomness comes from the ``(sim.seed, trial)`` streams.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    q = sim.ici_iterations[0] if q is None else q
    one = SimConfig(
        channel=sim.channel, geometry=sim.geometry, speed_kmh=sim.speed_kmh, positions=(position,),
        snr_db=(snr,), estimators=(estimator,), pilot_sources=("random_search",), ici_iterations=(q,),
        trials=1, seed=sim.seed, P=pattern.P, design=sim.design, genie_feedback=sim.genie_feedback,
        zero_data=sim.zero_data, n_symbols=sim.n_symbols, sparsity=sim.sparsity,
    )
    return _simulate_trial(one, trial, {"random_search": pattern})[(snr, position, estimator, "random_search", q)]


def run_monte_carlo(sim: SimConfig, codebook: Codebook | None = None, threads: int = 1) -> list[dict]:
    """Mean and standard deviation of MSE and BER for every grid cell.

    Rows follow the nesting snr, position, estimator, pilot source, q.
    """
    fixed = _pilot_patterns(sim, codebook)
    trials = range(sim.trials)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda t: _simulate_trial(sim, t, fixed), trials))
    else:
        results = [_simulate_trial(sim, t, fixed) for t in trials]

    rows = []
    for cell in _cells(sim):
        snr, alpha, est, src, q = cell
        m = np.array([[r[cell].mse, r[cell].ber, r[cell].coherence] for r in results])
        ddof = 1 if sim.trials > 1 else 0
        f_d = doppler_at_position(PositionState(alpha, sim.speed), sim.geometry)
        rows.append({
            "snr_db": snr, "alpha_m": alpha, "f_d_hz": f_d, "estimator": est, "pilot_source": src,
            "q": q, "trials": sim.trials,
            "mse_mean": float(m[:, 0].mean()), "mse_std": float(m[:, 0].std(ddof=ddof)),
            "ber_mean": float(m[:, 1].mean()), "ber_std": float(m[:, 1].std(ddof=ddof)),
            "coherence": float(m[:, 2].mean()),
        })
    return rows
