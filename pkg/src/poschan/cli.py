"""Command-line front end.

Subcommands: ``design`` builds a pilot codebook, ``simulate`` runs a Monte
Carlo sweep, ``inspect`` prints one codebook slot, ``curves`` emits the
Doppler and coherence curves and ``schema`` prints the configuration
schema. Exit status is 0 on success, 2 for invalid input and 1 for
internal errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .coherence import CoherenceParams, pilot_coherence_fast
from .config import ConfigError, load_document, merge, preset, resolve, schema
from .geometry import PositionState, doppler_at_position, position_index
from .pilot_design import (
    build_codebook,
    codebook_from_dict,
    codebook_to_dict,
    equidistant_pattern,
    joint_design,
    random_pattern,
    random_search_design,
)
from .sim import CSV_COLUMNS, run_monte_carlo

__all__ = ["main", "atomic_write"]

log = logging.getLogger("poschan")


def atomic_write(path, text: str) -> None:
    """Write ``text`` to a temporary sibling file, then rename it over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _provenance_lines(cfg) -> list[str]:
    return [f"# config_hash={cfg.hash}", f"# seed={cfg.seed}"]


def _csv_text(header_lines, columns, rows) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])
    return buf.getvalue()


def _load_config(args):
    doc = preset(args.preset) if getattr(args, "preset", None) else {}
    if getattr(args, "config", None):
        doc = merge(doc, load_document(args.config))
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "iters", None) is not None:
        overrides["design"] = {"iters": args.iters}
    if getattr(args, "trials", None) is not None:
        overrides["sim"] = {"trials": args.trials}
    return resolve(merge(doc, overrides))


def _codebook_json(book) -> str:
    return json.dumps(codebook_to_dict(book), indent=1) + "\n"


def _read_codebook(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    try:
        return codebook_from_dict(doc)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def cmd_design(args) -> int:
    cfg = _load_config(args)
    book, traces = build_codebook(cfg.channel, cfg.design, seed=cfg.seed, config_hash=cfg.hash)
    out = Path(args.out)
    trace_path = Path(args.trace) if args.trace else out.with_suffix(".trace.csv")
    rows = []
    for slot, trace in enumerate(traces, start=1):
        for r in trace.records:
            rows.append({
                "slot": slot, "x": slot - book.M - 1, "iteration": r.iteration, "current_mu": float(r.current_mu),
                "candidate_mu": float(r.candidate_mu), "accepted_mu": float(r.accepted_mu),
                "occupation_max": float(r.occupation_max),
            })
    columns = ("slot", "x", "iteration", "current_mu", "candidate_mu", "accepted_mu", "occupation_max")
    atomic_write(out, _codebook_json(book))
    atomic_write(trace_path, _csv_text(_provenance_lines(cfg), columns, rows))
    for slot, trace in enumerate(traces, start=1):
        print(f"slot {slot}: mu={trace.final_mu:.6f} evaluations={trace.evaluations}")
    print(f"wrote {out} and {trace_path}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    sim = cfg.sim
    book = None
    if "algorithm1" in sim.pilot_sources:
        if args.codebook:
            book = _read_codebook(args.codebook)
            if (book.K, book.P, book.M) != (cfg.channel.K, cfg.design.P, cfg.channel.M) or not math.isclose(
                book.f_dmax, cfg.channel.f_dmax, rel_tol=1e-9
            ):
                raise ConfigError(
                    f"codebook (K={book.K}, P={book.P}, M={book.M}, f_dmax={book.f_dmax}) does not match the "
                    f"configuration (K={cfg.channel.K}, P={cfg.design.P}, M={cfg.channel.M}, "
                    f"f_dmax={cfg.channel.f_dmax})"
                )
        else:
            book, _ = build_codebook(cfg.channel, cfg.design, seed=cfg.seed, config_hash=cfg.hash)
    rows = run_monte_carlo(sim, codebook=book, threads=args.threads)
    header = _provenance_lines(cfg) + [
        f"# symbols_per_packet={sim.symbols_per_packet}",
        "# mse=sum over packet of |H_hat-H|^2 divided by sum of |H|^2, per trial",
        "# snr=unit average symbol energy over noise variance per subcarrier",
        f"# genie_feedback={str(sim.genie_feedback).lower()}",
    ]
    atomic_write(args.out, _csv_text(header, CSV_COLUMNS, rows))
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_inspect(args) -> int:
    book = _read_codebook(args.codebook)
    doc = codebook_to_dict(book)
    if args.slot is None:
        summary = {k: v for k, v in doc.items() if k != "entries"}
        summary["slots"] = [{"slot": e["slot"], "x": e["x"], "f_d_range_hz": e["f_d_range_hz"]} for e in doc["entries"]]
        print(json.dumps(summary, indent=1))
        return 0
    if not 1 <= args.slot <= 2 * book.M + 1:
        raise ConfigError(f"slot {args.slot} outside 1..{2 * book.M + 1}")
    entry = doc["entries"][args.slot - 1]
    pattern = book.entry(args.slot)
    entry["energies"] = pattern.energies.tolist()
    print(json.dumps(entry, indent=1))
    return 0


def _doppler_rows(cfg):
    sim = cfg.sim
    rows = []
    for alpha in sim.positions:
        state = PositionState(alpha, sim.speed)
        rows.append({
            "alpha_m": float(alpha), "f_d_hz": float(doppler_at_position(state, cfg.geometry)),
            "x": position_index(state, cfg.geometry, cfg.channel.T_d),
        })
    return ("alpha_m", "f_d_hz", "x"), rows


def _coherence_rows(cfg):
    ch, design = cfg.channel, cfg.design
    params = CoherenceParams(design.delta)
    rows = []
    for i in range(cfg.sim.trials):
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(2, i)))
        init = random_pattern(ch.K, design.P, rng, design.power_levels)
        alg, _ = joint_design(init, design.iters, design.T, design.power_levels, ch, params, rng)
        rs, _ = random_search_design(cfg.sim.random_search_iters, ch.K, design.P, design.T, ch, params, rng,
                                     design.power_levels)
        eq = equidistant_pattern(ch.K, design.P, rng)
        for name, pattern in (("algorithm1", alg), ("random_search", rs), ("equidistant", eq)):
            rows.append({"trial": i, "method": name, "mu": float(pilot_coherence_fast(pattern, ch, params))})
    return ("trial", "method", "mu"), rows


def cmd_curves(args) -> int:
    cfg = _load_config(args)
    columns, rows = _doppler_rows(cfg) if args.kind == "doppler" else _coherence_rows(cfg)
    atomic_write(args.out, _csv_text(_provenance_lines(cfg), columns, rows))
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_schema(args) -> int:
    print(json.dumps(schema(), indent=1))
    return 0


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poschan", description="Position-aided pilot design and channel estimation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, trials=False, iters=False):
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--preset", metavar="NAME")
        sp.add_argument("--seed", type=int, metavar="U64")
        if iters:
            sp.add_argument("--iters", type=int, metavar="N")
        if trials:
            sp.add_argument("--trials", type=int, metavar="N")

    d = sub.add_parser("design", help="build a pilot codebook")
    common(d, iters=True)
    d.add_argument("--out", default="codebook.json", metavar="PATH")
    d.add_argument("--trace", metavar="PATH", help="design trace CSV (default: <out>.trace.csv)")
    d.set_defaults(func=cmd_design)

    s = sub.add_parser("simulate", help="run a Monte Carlo sweep")
    common(s, trials=True, iters=True)
    s.add_argument("--codebook", metavar="PATH")
    s.add_argument("--threads", type=int, default=1, metavar="N")
    s.add_argument("--out", default="results.csv", metavar="PATH")
    s.set_defaults(func=cmd_simulate)

    i = sub.add_parser("inspect", help="show one codebook slot")
    i.add_argument("codebook", metavar="PATH")
    i.add_argument("--slot", type=int)
    i.set_defaults(func=cmd_inspect)

    c = sub.add_parser("curves", help="Doppler-versus-position or coherence-per-method data")
    c.add_argument("kind", choices=("doppler", "coherence"))
    common(c, trials=True, iters=True)
    c.add_argument("--out", default="curve.csv", metavar="PATH")
    c.set_defaults(func=cmd_curves)

    sc = sub.add_parser("schema", help="print the configuration JSON schema")
    sc.set_defaults(func=cmd_schema)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
