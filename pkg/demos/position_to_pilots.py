"""Walk a train through the cell and pick the pilot pattern for each position.

Run with ``python demos/position_to_pilots.py``.
"""

import numpy as np

from poschan.config import resolve
from poschan.coherence import CoherenceParams, pilot_coherence_fast
from poschan.geometry import PositionState, doppler_at_position, position_index
from poschan.pilot_design import build_codebook, equidistant_pattern, select_pilot

cfg = resolve({"seed": 7})
print(f"L={cfg.channel.L} M={cfg.channel.M} f_dmax={cfg.channel.f_dmax:.1f} Hz")

book, traces = build_codebook(cfg.channel, cfg.design, seed=cfg.seed)
params = CoherenceParams(cfg.design.delta)
for slot, trace in enumerate(traces, start=1):
    print(f"slot {slot}: designed mu={trace.final_mu:.4f} after {trace.evaluations} evaluations")

eq = equidistant_pattern(cfg.channel.K, cfg.design.P, np.random.default_rng(0))
print(f"equidistant baseline mu={pilot_coherence_fast(eq, cfg.channel, params):.4f}")

# position telemetry -> Doppler -> codebook slot
v = cfg.sim.speed
for frac in (0.0, 0.5, 0.9, 1.0, 1.1, 1.5, 2.0):
    alpha = frac * cfg.geometry.D_c
    state = PositionState(alpha, v)
    f_d = doppler_at_position(state, cfg.geometry)
    pattern = select_pilot(book, f_d, cfg.channel.T_d)
    print(f"alpha={alpha:7.1f} m  f_d={f_d:8.1f} Hz  x={position_index(state, cfg.geometry, cfg.channel.T_d):+d}  "
          f"first pilots {pattern.placement[:4].tolist()}")
