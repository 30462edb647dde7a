"""Pilot patterns, coherence-driven pilot design and the Doppler-indexed codebook."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import qam
from .channel_model import ChannelModelConfig
from .coherence import CoherenceParams
from .geometry import codebook_slot, doppler_index, doppler_index_range

__all__ = [
    "CODEBOOK_VERSION",
    "DEFAULT_LEVELS",
    "PilotPattern",
    "DesignRecord",
    "DesignTrace",
    "DesignParams",
    "Codebook",
    "CoherenceObjective",
    "normalize_levels",
    "equidistant_pattern",
    "random_pattern",
    "random_search_design",
    "joint_design",
    "build_codebook",
    "select_pilot",
    "codebook_to_dict",
    "codebook_from_dict",
    "save_codebook",
    "load_codebook",
]

CODEBOOK_VERSION = 1
DEFAULT_LEVELS = (0.5, 1.0, 2.0)


def normalize_levels(levels, assignment) -> np.ndarray:
    """Scale ``levels`` so the assigned pilot energies sum to the pilot count."""
    levels = np.asarray(levels, dtype=float)
    assignment = np.asarray(assignment)
    total = levels[assignment].sum()
    if total <= 0:
        raise ValueError("assigned pilot energy must be positive")
    return levels * (assignment.size / total)


@dataclass(frozen=True, eq=False)
class PilotPattern:
    """Comb pilots of one OFDM symbol.

    ``placement`` holds sorted, distinct 1-based subcarriers. Pilot ``i``
    uses power level ``power_levels[level_assignment[i]]`` and transmits
    ``symbols[i]``, a 16-QAM point scaled by the square root of that level.
    """

    K: int
    placement: np.ndarray
    symbols: np.ndarray
    power_levels: np.ndarray
    level_assignment: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.placement, dtype=np.int64)
        s = np.asarray(self.symbols, dtype=complex)
        lv = np.asarray(self.power_levels, dtype=float)
        a = np.asarray(self.level_assignment, dtype=np.int64)
        object.__setattr__(self, "placement", p)
        object.__setattr__(self, "symbols", s)
        object.__setattr__(self, "power_levels", lv)
        object.__setattr__(self, "level_assignment", a)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("placement must be a non-empty 1-D array")
        if p.size > self.K:
            raise ValueError(f"{p.size} pilots do not fit in {self.K} subcarriers")
        if p.min() < 1 or p.max() > self.K:
            raise ValueError(f"placement must lie in [1, {self.K}]")
        if np.any(np.diff(p) <= 0):
            raise ValueError("placement must be strictly increasing")
        if s.shape != p.shape or a.shape != p.shape:
            raise ValueError("symbols and level_assignment must match the placement length")
        if lv.ndim != 1 or lv.size == 0 or np.any(lv <= 0):
            raise ValueError("power levels must be positive")
        if a.min() < 0 or a.max() >= lv.size:
            raise ValueError("level_assignment refers to a missing power level")
        if not np.isclose(lv[a].sum(), p.size, rtol=1e-9, atol=0):
            raise ValueError("assigned pilot energies must sum to the pilot count")
        if np.any(s == 0):
            raise ValueError("pilot symbols must be nonzero")

    @property
    def P(self) -> int:
        return int(self.placement.size)

    @property
    def T(self) -> int:
        return int(self.power_levels.size)

    @property
    def energies(self) -> np.ndarray:
        """Per-pilot energy ``|X(k_p)|^2`` of the transmitted symbols."""
        return np.abs(self.symbols) ** 2

    @property
    def assigned_energies(self) -> np.ndarray:
        return self.power_levels[self.level_assignment]

    def __eq__(self, other):
        if not isinstance(other, PilotPattern):
            return NotImplemented
        return (
            self.K == other.K
            and np.array_equal(self.placement, other.placement)
            and np.array_equal(self.symbols, other.symbols)
            and np.array_equal(self.power_levels, other.power_levels)
            and np.array_equal(self.level_assignment, other.level_assignment)
        )


def _pattern_from_slots(K, slots, assignment, levels, rng) -> PilotPattern:
    """Sort slot-ordered pilots and draw unit-ring 16-QAM symbols for them."""
    order = np.argsort(slots)
    placement = np.asarray(slots)[order]
    assign = np.asarray(assignment)[order]
    scaled = normalize_levels(levels, assign)
    # unit-energy points keep |X|^2 equal to the designed level
    symbols = qam.random_symbols(rng, placement.size, unit_energy=True) * np.sqrt(scaled[assign])
    return PilotPattern(K, placement, symbols, scaled, assign)


class CoherenceObjective:
    """Average coherence of ``X_d(p) Phi_x`` as a function of pilot energies.

    Caches the lag-by-subcarrier phase table and counts evaluations.
    """

    def __init__(self, cfg: ChannelModelConfig, params: CoherenceParams):
        self.L = cfg.L
        self.delta = params.delta
        z = np.arange(1, cfg.L)
        k = np.arange(1, cfg.K + 1)
        self._table = np.exp(-2j * np.pi * np.outer(z, k) / cfg.N_f)
        self._mult = (cfg.L - z).astype(float)
        self.evaluations = 0

    def __call__(self, placement, energies) -> float:
        self.evaluations += 1
        e = np.asarray(energies, dtype=float)
        mags = np.abs(self._table[:, np.asarray(placement) - 1] @ e) / e.sum()
        keep = mags >= self.delta
        count = self._mult[keep].sum()
        if count == 0:
            return 0.0
        return float(self._mult[keep] @ mags[keep] / count)


@dataclass(frozen=True)
class DesignRecord:
    iteration: int
    current_mu: float
    candidate_mu: float
    accepted_mu: float
    occupation_max: float


@dataclass
class DesignTrace:
    records: list[DesignRecord]
    pattern: PilotPattern
    occupation: np.ndarray
    evaluations: int
    final_mu: float


@dataclass(frozen=True)
class DesignParams:
    P: int = 64
    iters: int = 192
    power_levels: tuple[float, ...] = DEFAULT_LEVELS
    delta: float = 0.1

    @property
    def T(self) -> int:
        return len(self.power_levels)


def equidistant_pattern(K: int, P: int, rng: np.random.Generator) -> PilotPattern:
    """Evenly spaced pilots carrying random 16-QAM symbols at one power level."""
    if P > K or P < 1:
        raise ValueError(f"cannot place {P} pilots on {K} subcarriers")
    spacing = max(1, int(round(K / P)))
    if 1 + (P - 1) * spacing > K:
        spacing = K // P
    placement = 1 + spacing * np.arange(P)
    symbols = qam.random_symbols(rng, P)
    return PilotPattern(K, placement, symbols, np.array([1.0]), np.zeros(P, dtype=np.int64))


def _random_slots(rng, K, P, T):
    slots = rng.choice(K, size=P, replace=False) + 1
    assign = rng.integers(T, size=P)
    return slots, assign


def random_pattern(K: int, P: int, rng: np.random.Generator, power_levels=DEFAULT_LEVELS) -> PilotPattern:
    slots, assign = _random_slots(rng, K, P, len(power_levels))
    return _pattern_from_slots(K, slots, assign, power_levels, rng)


def random_search_design(
    iters: int,
    K: int,
    P: int,
    T: int,
    cfg: ChannelModelConfig,
    params: CoherenceParams,
    rng: np.random.Generator,
    power_levels=None,
) -> tuple[PilotPattern, DesignTrace]:
    """Best of ``iters`` independent random placements and power assignments."""
    if iters < 1:
        raise ValueError("iters must be at least 1")
    levels = DEFAULT_LEVELS if power_levels is None else tuple(power_levels)
    if len(levels) != T:
        raise ValueError(f"expected {T} power levels, got {len(levels)}")
    objective = CoherenceObjective(cfg, params)
    best = None
    best_mu = np.inf
    records = []
    for m in range(iters):
        slots, assign = _random_slots(rng, K, P, T)
        mu = objective(slots, normalize_levels(levels, assign)[assign])
        if mu < best_mu:
            best_mu, best = mu, (slots, assign)
        records.append(DesignRecord(m, mu, mu, best_mu, 1.0))
    pattern = _pattern_from_slots(K, best[0], best[1], levels, rng)
    trace = DesignTrace(records, pattern, np.ones(1), objective.evaluations, best_mu)
    return pattern, trace


def joint_design(
    init: PilotPattern,
    iters: int,
    T: int,
    power_levels,
    cfg: ChannelModelConfig,
    params: CoherenceParams,
    rng: np.random.Generator,
) -> tuple[PilotPattern, DesignTrace]:
    """Joint pilot placement and power design by discrete stochastic approximation.

    Sweeps the pilots ``iters / P`` times. At each step one pilot is moved
    to a random free subcarrier when that lowers the coherence, then its
    power level is re-chosen among the ``T`` levels. The returned pattern is
    the visited state with the highest occupation probability.
    """
    P = init.P
    if iters < P or iters % P:
        raise ValueError(f"iters={iters} must be a positive multiple of the pilot count P={P}")
    levels = tuple(float(v) for v in power_levels)
    if len(levels) != T:
        raise ValueError(f"expected {T} power levels, got {len(levels)}")
    if init.K != cfg.K:
        raise ValueError("initial pattern and channel configuration disagree on K")
    K = cfg.K
    objective = CoherenceObjective(cfg, params)

    slots = init.placement.copy()
    assign = init.level_assignment.copy()
    if assign.max() >= T:
        assign = rng.integers(T, size=P)
    used = np.zeros(K + 1, dtype=bool)
    used[slots] = True

    def energies(a):
        return normalize_levels(levels, a)[a]

    def key(s, a):
        order = np.argsort(s)
        return tuple(s[order].tolist()), tuple(a[order].tolist())

    state_ids: dict = {key(slots, assign): 0}
    states = [(slots.copy(), assign.copy())]
    occupation = np.zeros(iters + 1)
    occupation[0] = 1.0
    best_id = 0
    records = []

    for sweep in range(iters // P):
        for k in range(P):
            m = sweep * P + k
            current_mu = objective(slots, energies(assign))

            new_sub = int(rng.integers(1, K + 1))
            while used[new_sub]:
                new_sub = int(rng.integers(1, K + 1))
            cand = slots.copy()
            cand[k] = new_sub
            cand_mu = objective(cand, energies(assign))
            if cand_mu < current_mu:
                used[slots[k]] = False
                used[new_sub] = True
                slots = cand

            trial_mu = np.empty(T)
            for t in range(T):
                a = assign.copy()
                a[k] = t
                trial_mu[t] = objective(slots, energies(a))
            keep = assign[k]
            choice = keep if trial_mu[keep] <= trial_mu.min() else int(np.argmin(trial_mu))
            assign = assign.copy()
            assign[k] = choice
            accepted_mu = float(trial_mu[choice])

            state = key(slots, assign)
            kappa = state_ids.get(state)
            if kappa is None:
                kappa = len(states)
                state_ids[state] = kappa
                states.append((slots.copy(), assign.copy()))
            eta = 1.0 / (m + 1)
            occupation *= 1.0 - eta
            occupation[kappa] += eta
            if occupation[kappa] > occupation[best_id]:
                best_id = kappa
            records.append(DesignRecord(m, current_mu, cand_mu, accepted_mu, float(occupation[best_id])))

    best_slots, best_assign = states[best_id]
    final_mu = objective(best_slots, energies(best_assign))
    pattern = _pattern_from_slots(K, best_slots, best_assign, levels, rng)
    trace = DesignTrace(records, pattern, occupation[: len(states)].copy(), objective.evaluations, final_mu)
    return pattern, trace


@dataclass(eq=False)
class Codebook:
    """Pilot patterns for Doppler indices ``-M .. M``, listed by slot ``x + M + 1``."""

    M: int
    entries: list[PilotPattern]
    T_d: float
    f_dmax: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.entries) != 2 * self.M + 1:
            raise ValueError(f"need {2 * self.M + 1} entries, got {len(self.entries)}")
        first = self.entries[0]
        for e in self.entries[1:]:
            if (e.P, e.K, e.T) != (first.P, first.K, first.T):
                raise ValueError("codebook entries must share P, K and T")

    @property
    def K(self) -> int:
        return self.entries[0].K

    @property
    def P(self) -> int:
        return self.entries[0].P

    @property
    def T(self) -> int:
        return self.entries[0].T

    def entry(self, slot: int) -> PilotPattern:
        if not 1 <= slot <= 2 * self.M + 1:
            raise KeyError(f"slot {slot} outside 1..{2 * self.M + 1}")
        return self.entries[slot - 1]

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return codebook_to_dict(self) == codebook_to_dict(other)


def build_codebook(
    cfg: ChannelModelConfig,
    design: DesignParams = DesignParams(),
    seed: int = 0,
    config_hash: str = "",
) -> tuple[Codebook, list[DesignTrace]]:
    """Run the joint design once per Doppler index, each on its own seed stream."""
    params = CoherenceParams(design.delta)
    children = np.random.SeedSequence(seed).spawn(2 * cfg.M + 1)
    entries, traces = [], []
    for x, child in zip(range(-cfg.M, cfg.M + 1), children):
        rng = np.random.default_rng(child)
        init = random_pattern(cfg.K, design.P, rng, design.power_levels)
        pattern, trace = joint_design(init, design.iters, design.T, design.power_levels, cfg, params, rng)
        entries.append(pattern)
        traces.append(trace)
    provenance = {"seed": int(seed), "iters": int(design.iters), "delta": float(design.delta),
                  "config_hash": config_hash}
    return Codebook(cfg.M, entries, cfg.T_d, cfg.f_dmax, provenance), traces


def select_pilot(codebook: Codebook, f_d: float, T_d: float | None = None) -> PilotPattern:
    """Codebook entry for the Doppler shift ``f_d``."""
    T_d = codebook.T_d if T_d is None else T_d
    x = doppler_index(f_d, T_d, codebook.f_dmax)
    return codebook.entry(codebook_slot(x, codebook.M))


def codebook_to_dict(codebook: Codebook) -> dict:
    entries = []
    for slot, e in enumerate(codebook.entries, start=1):
        x = slot - codebook.M - 1
        lo, hi = doppler_index_range(x, codebook.T_d, codebook.f_dmax)
        entries.append({
            "slot": slot,
            "x": x,
            "f_d_range_hz": [lo, hi],
            "placement": e.placement.tolist(),
            "power_level_index": e.level_assignment.tolist(),
            "power_levels": e.power_levels.tolist(),
            "symbols": [{"re": float(s.real), "im": float(s.imag)} for s in e.symbols],
        })
    return {
        "version": CODEBOOK_VERSION,
        "K": codebook.K,
        "P": codebook.P,
        "T": codebook.T,
        "M": codebook.M,
        "f_dmax_hz": float(codebook.f_dmax),
        "T_d_s": float(codebook.T_d),
        "entries": entries,
        "provenance": dict(codebook.provenance),
    }


def codebook_from_dict(doc: dict) -> Codebook:
    try:
        if doc["version"] != CODEBOOK_VERSION:
            raise ValueError(f"unsupported codebook version {doc['version']}")
        K, M = int(doc["K"]), int(doc["M"])
        entries = []
        for i, e in enumerate(sorted(doc["entries"], key=lambda e: e["slot"]), start=1):
            if e["slot"] != i:
                raise ValueError(f"codebook slots must be 1..{2 * M + 1}")
            symbols = np.array([complex(s["re"], s["im"]) for s in e["symbols"]])
            entries.append(PilotPattern(K, e["placement"], symbols, e["power_levels"], e["power_level_index"]))
        book = Codebook(M, entries, float(doc["T_d_s"]), float(doc["f_dmax_hz"]), dict(doc.get("provenance", {})))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed codebook: {exc!r}") from exc
    if book.P != doc["P"] or book.T != doc["T"]:
        raise ValueError("codebook header disagrees with its entries")
    return book


def save_codebook(codebook: Codebook, path) -> None:
    with open(path, "w") as fh:
        json.dump(codebook_to_dict(codebook), fh, indent=1)
        fh.write("\n")


def load_codebook(path) -> Codebook:
    with open(path) as fh:
        return codebook_from_dict(json.load(fh))
