"""Short Monte Carlo comparison of the estimators at a few SNRs.

Run with ``python demos/estimator_sweep.py``. Trial counts are kept small
so the script finishes in well under a minute; the numbers are noisy.
"""

from poschan.config import resolve
from poschan.pilot_design import build_codebook
from poschan.sim import run_monte_carlo

cfg = resolve({
    "seed": 3,
    "sim": {
        "snr_db": [5, 15, 25],
        "estimators": ["ls", "lmmse", "omp", "bp"],
        "pilot_sources": ["equidistant", "algorithm1"],
        "ici_iterations": [2],
        "trials": 10,
    },
})
book, _ = build_codebook(cfg.channel, cfg.design, seed=cfg.seed)
rows = run_monte_carlo(cfg.sim, codebook=book, threads=4)

print(f"{'snr':>4} {'estimator':>9} {'pilots':>12} {'mse':>10} {'ber':>10}")
for r in rows:
    print(f"{r['snr_db']:4.0f} {r['estimator']:>9} {r['pilot_source']:>12} {r['mse_mean']:10.3e} {r['ber_mean']:10.3e}")
