"""Acceptance criteria, one test each.

Every test prints a single PASS/FAIL line (also collected into the pytest
terminal summary) and then asserts the criterion at its stated tolerance.
"""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from poschan.channel_model import delay_doppler_rows, sample_sparse_channel, synth_channel_matrices
from poschan.coherence import CoherenceParams, average_coherence, mutual_coherence, pilot_coherence_fast, recovery_bound
from poschan.config import resolve
from poschan.estimators import PilotObservation, bp_estimate, omp_estimate
from poschan.geometry import GeometryConfig, PositionState, doppler_at_position, doppler_index, kmh_to_ms
from poschan.pilot_design import build_codebook, equidistant_pattern, joint_design, random_pattern, random_search_design
from poschan.sim import run_monte_carlo

SEED = 20240601
pytestmark = pytest.mark.acceptance


def report(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


@pytest.fixture(scope="module")
def base():
    return resolve({"seed": SEED})


@pytest.fixture(scope="module")
def codebook(base):
    book, _ = build_codebook(base.channel, base.design, seed=SEED, config_hash=base.hash)
    return book


def test_c01_parameter_reproduction():
    t0 = time.perf_counter()
    cfg = resolve({})
    book, _ = build_codebook(cfg.channel, cfg.design, seed=SEED)
    elapsed = time.perf_counter() - t0
    ch = cfg.channel
    ok = (ch.L == 26 and ch.M == 2 and len(book.entries) == 5
          and abs(ch.f_dmax - 1088.0) / 1088.0 <= 0.005 and elapsed < 1.0)
    report(1, "parameter reproduction", ok,
           f"L={ch.L} M={ch.M} f_dmax={ch.f_dmax:.2f} Hz entries={len(book.entries)} ({elapsed:.2f} s)")


def test_c02_doppler_curve():
    t0 = time.perf_counter()
    geom = GeometryConfig()
    v = kmh_to_ms(500.0)
    alphas = np.linspace(0.0, 2 * geom.D_c, 2001)
    f = np.array([doppler_at_position(PositionState(a, v), geom) for a in alphas])
    mid = doppler_at_position(PositionState(geom.D_c, v), geom)
    elapsed = time.perf_counter() - t0
    ok = (abs(f[0] - 1087.0) <= 0.01 * 1087.0 and abs(f[-1] + 1087.0) <= 0.01 * 1087.0 and mid == 0.0
          and bool(np.all(np.diff(f) < 0)) and elapsed < 1.0)
    report(2, "Doppler curve", ok,
           f"f(0)={f[0]:.2f} f(D_c)={mid} f(2D_c)={f[-1]:.2f} monotone={bool(np.all(np.diff(f) < 0))}")


def test_c03_coherence_oracle(base):
    t0 = time.perf_counter()
    cfg = base.channel
    worst, spread = 0.0, 0.0
    for i in range(100):
        rng = np.random.default_rng([SEED, 3, i])
        pattern = random_pattern(cfg.K, 64, rng) if i % 2 else equidistant_pattern(cfg.K, 64, rng)
        params = CoherenceParams(float(rng.uniform(0.05, 0.3)))
        fast = pilot_coherence_fast(pattern, cfg, params)
        generic = [average_coherence(pattern.symbols[:, None] * delay_doppler_rows(pattern.placement, i % cfg.N_t, cfg, x),
                                     params) for x in range(-cfg.M, cfg.M + 1)]
        worst = max(worst, max(abs(fast - g) for g in generic))
        spread = max(spread, max(generic) - min(generic))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and spread <= 1e-15 and elapsed < 30
    report(3, "coherence oracle equivalence", ok, f"max|fast-generic|={worst:.1e} max x-spread={spread:.1e}")


def test_c04_coherence_ordering(base):
    t0 = time.perf_counter()
    cfg, design = base.channel, base.design
    params = CoherenceParams(design.delta)
    mus = {"algorithm1": [], "random_search": [], "equidistant": []}
    for seed in range(100):
        rng = np.random.default_rng([SEED, 4, seed])
        init = random_pattern(cfg.K, design.P, rng, design.power_levels)
        alg, _ = joint_design(init, design.iters, design.T, design.power_levels, cfg, params, rng)
        rs, _ = random_search_design(200, cfg.K, design.P, design.T, cfg, params, rng, design.power_levels)
        eq = equidistant_pattern(cfg.K, design.P, rng)
        for name, p in (("algorithm1", alg), ("random_search", rs), ("equidistant", eq)):
            mus[name].append(pilot_coherence_fast(p, cfg, params))
    m = {k: float(np.mean(v)) for k, v in mus.items()}
    elapsed = time.perf_counter() - t0
    ok = (m["algorithm1"] < m["random_search"] < m["equidistant"]
          and m["algorithm1"] <= 0.9 * m["equidistant"] and elapsed < 600)
    report(4, "designed-pilot coherence ordering", ok,
           f"mean mu alg1={m['algorithm1']:.4f} random={m['random_search']:.4f} "
           f"equidistant={m['equidistant']:.4f} (need alg1 < random < equidistant, alg1 <= 0.9*equidistant)")


def test_c05_dictionary_channel_consistency(base):
    t0 = time.perf_counter()
    cfg = base.channel
    worst = 0.0
    k = np.arange(1, cfg.K + 1)
    for i in range(100):
        rng = np.random.default_rng([SEED, 5, i])
        f_d = (0.0, 1088.0, -1088.0)[i % 3]
        x = doppler_index(f_d, cfg.T_d)
        coeffs = sample_sparse_channel(rng, cfg, x)
        n = i % cfg.N_t
        H = synth_channel_matrices(coeffs, f_d, cfg, n).H
        worst = max(worst, float(np.max(np.abs(np.diag(H) - delay_doppler_rows(k, n, cfg) @ coeffs.b))))
    elapsed = time.perf_counter() - t0
    report(5, "dictionary/channel consistency", worst <= 1e-9 and elapsed < 60,
           f"max|diag(H) - (u_n kron u_k) b|={worst:.1e} ({elapsed:.1f} s)")


def test_c06_noiseless_recovery(base, codebook):
    t0 = time.perf_counter()
    cfg = base.channel
    pattern = codebook.entry(2 * cfg.M + 1)
    x = cfg.M
    hits, worst_gap = 0, 0.0
    for i in range(200):
        rng = np.random.default_rng([SEED, 6, i])
        c = sample_sparse_channel(rng, cfg, x)
        n = i % cfg.N_t
        A = pattern.symbols[:, None] * delay_doppler_rows(pattern.placement, n, cfg, x)
        obs = PilotObservation(A @ c.b_x, A, 0.0, x)
        omp = omp_estimate(obs, sparsity=cfg.S)
        if set(omp.support) == set(np.flatnonzero(c.b_x)):
            hits += 1
            bp = bp_estimate(obs, epsilon=0.0)
            worst_gap = max(worst_gap, float(np.max(np.abs(bp.b_hat - omp.b_hat))))
    elapsed = time.perf_counter() - t0
    ok = hits >= 198 and worst_gap <= 1e-6 and elapsed < 300
    report(6, "noiseless recovery", ok, f"OMP exact support {hits}/200, max|BP-OMP|={worst_gap:.1e}")


def _sweep(base, codebook, **sim):
    cfg = resolve({"seed": SEED, "sim": sim})
    rows = run_monte_carlo(cfg.sim, codebook=codebook, threads=4)
    return {(r["snr_db"], r["alpha_m"], r["estimator"], r["pilot_source"], r["q"]): r for r in rows}


def _se(row):
    return row["mse_std"] / math.sqrt(row["trials"])


def test_c07_mse_ordering(base, codebook):
    t0 = time.perf_counter()
    rows = _sweep(base, codebook, snr_db=[15.0], positions_m=[0.0], estimators=["bp", "ls"],
                  pilot_sources=["algorithm1", "equidistant"], ici_iterations=[2], trials=200)
    a = rows[(15.0, 0.0, "bp", "algorithm1", 2)]
    e = rows[(15.0, 0.0, "bp", "equidistant", 2)]
    ls = rows[(15.0, 0.0, "ls", "equidistant", 2)]
    gap1, se1 = e["mse_mean"] - a["mse_mean"], math.hypot(_se(a), _se(e))
    gap2, se2 = ls["mse_mean"] - e["mse_mean"], math.hypot(_se(e), _se(ls))
    elapsed = time.perf_counter() - t0
    ok = gap1 > se1 and gap2 > se2 and elapsed < 900
    report(7, "estimator MSE ordering", ok,
           f"BP+alg1={a['mse_mean']:.4e} BP+equi={e['mse_mean']:.4e} LS={ls['mse_mean']:.4e}; "
           f"gaps {gap1:.2e} (se {se1:.2e}), {gap2:.2e} (se {se2:.2e}); {elapsed:.0f} s")


def test_c08_ici_iterations(base, codebook):
    t0 = time.perf_counter()
    snrs = [20.0, 25.0, 30.0]
    rows = _sweep(base, codebook, snr_db=snrs, positions_m=[0.0], estimators=["bp"], pilot_sources=["algorithm1"],
                  ici_iterations=[0, 2, 5, 7], trials=100)
    ok = True
    parts = []
    for snr in snrs:
        m = {q: rows[(snr, 0.0, "bp", "algorithm1", q)]["mse_mean"] for q in (0, 2, 5, 7)}
        early, late = m[0] - m[2], m[5] - m[7]
        ok &= m[2] <= m[0] and late < early
        parts.append(f"{snr:g} dB: q0={m[0]:.3e} q2={m[2]:.3e} q5={m[5]:.3e} q7={m[7]:.3e}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 900
    report(8, "ICI-mitigation iterations", ok, "; ".join(parts) + f"; {elapsed:.0f} s")


def test_c09_position_sweep(base, codebook):
    t0 = time.perf_counter()
    d_c = base.geometry.D_c
    alphas = [f * d_c for f in (0.0, 0.25, 0.5, 0.75, 0.9, 0.95, 1.0, 1.05, 1.1, 1.25, 1.5, 1.75, 2.0)]
    rows = _sweep(base, codebook, snr_db=[15.0], positions_m=alphas, estimators=["bp"],
                  pilot_sources=["algorithm1"], ici_iterations=[2], trials=100)
    mse = np.array([rows[(15.0, a, "bp", "algorithm1", 2)]["mse_mean"] for a in alphas])
    best = alphas[int(np.argmin(mse))]
    elapsed = time.perf_counter() - t0
    ok = abs(best - d_c) <= 0.05 * d_c and mse[0] > mse.min() and mse[-1] > mse.min() and elapsed < 900
    report(9, "position sweep", ok,
           f"argmin alpha={best:.1f} m (D_c={d_c:.1f}); MSE(0)={mse[0]:.3e} min={mse.min():.3e} "
           f"MSE(2D_c)={mse[-1]:.3e}")


def test_c10_recovery_bound_diagnostic(base, codebook):
    t0 = time.perf_counter()
    cfg = base.channel
    exact = recovery_bound(1 / 11) == 6
    done, hits, i = 0, 0, 0
    while done < 100:
        rng = np.random.default_rng([SEED, 10, i])
        i += 1
        pattern = codebook.entries[i % len(codebook.entries)] if i % 2 else random_pattern(cfg.K, 64, rng)
        x = int(rng.integers(-cfg.M, cfg.M + 1))
        A = pattern.symbols[:, None] * delay_doppler_rows(pattern.placement, i % cfg.N_t, cfg, x)
        bound = recovery_bound(mutual_coherence(A))
        S = math.ceil(bound) - 1
        if S < 1:
            continue
        support = rng.choice(cfg.L, S, replace=False)
        b = np.zeros(cfg.L, dtype=complex)
        b[support] = rng.standard_normal(S) + 1j * rng.standard_normal(S)
        res = omp_estimate(PilotObservation(A @ b, A, 0.0, x), sparsity=S)
        hits += set(res.support) == set(support)
        done += 1
    elapsed = time.perf_counter() - t0
    report(10, "recovery-bound diagnostic", exact and hits == 100 and elapsed < 120,
           f"recovery_bound(1/11)={recovery_bound(1 / 11)!r}; OMP recovered {hits}/100 below-bound instances")


def test_c11_determinism(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(
        '{"seed": %d, "sim": {"snr_db": [15, 25], "positions_m": [0.0, 1198.957880828180], '
        '"estimators": ["bp", "omp", "ls", "lmmse"], "pilot_sources": ["algorithm1", "equidistant", "random_search"], '
        '"ici_iterations": [0, 2], "trials": 4}}' % SEED
    )

    def run(out, threads):
        out.mkdir()
        cmd = [sys.executable, "-m", "poschan"]
        subprocess.run(cmd + ["design", "--config", str(config), "--out", str(out / "codebook.json")], check=True,
                       capture_output=True)
        subprocess.run(cmd + ["simulate", "--config", str(config), "--codebook", str(out / "codebook.json"),
                              "--threads", str(threads), "--out", str(out / "results.csv")], check=True,
                       capture_output=True)
        return [(out / name).read_bytes() for name in ("codebook.json", "codebook.trace.csv", "results.csv")]

    first, second = run(tmp_path / "a", 1), run(tmp_path / "b", 3)
    same = [a == b for a, b in zip(first, second)]
    report(11, "determinism", all(same),
           f"codebook/trace/results byte-identical across runs: {same}")
