import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from poschan import qam
from poschan.channel_model import ChannelModelConfig
from poschan.coherence import CoherenceParams, pilot_coherence_fast
from poschan.pilot_design import (
    DEFAULT_LEVELS,
    Codebook,
    CoherenceObjective,
    DesignParams,
    PilotPattern,
    build_codebook,
    codebook_from_dict,
    codebook_to_dict,
    equidistant_pattern,
    joint_design,
    load_codebook,
    random_pattern,
    random_search_design,
    save_codebook,
    select_pilot,
)

PARAMS = CoherenceParams(0.1)


def check_valid(pattern, K, P):
    assert pattern.P == P
    assert np.all(np.diff(pattern.placement) > 0)
    assert pattern.placement.min() >= 1 and pattern.placement.max() <= K
    assert pattern.assigned_energies.sum() == pytest.approx(P, rel=1e-9)


def test_equidistant_examples(rng):
    p = equidistant_pattern(512, 64, rng)
    assert np.array_equal(p.placement, 1 + 8 * np.arange(64))
    assert p.placement[-1] == 505
    dist = np.abs(p.symbols[:, None] - qam.CONSTELLATION[None, :]).min(axis=1)
    assert np.all(dist < 1e-12)


def test_equidistant_rejects_too_many(rng):
    with pytest.raises(ValueError):
        equidistant_pattern(16, 17, rng)


def test_equidistant_non_divisor(rng):
    check_valid(equidistant_pattern(100, 7, rng), 100, 7)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"placement": [3, 2, 5]},
        {"placement": [0, 2, 5]},
        {"placement": [1, 2, 17]},
        {"symbols": [1, 0, 1]},
        {"level_assignment": [0, 0, 3]},
        {"power_levels": [2.0]},
    ],
)
def test_pattern_validation(kwargs):
    base = dict(K=16, placement=[1, 2, 5], symbols=[1, 1j, -1], power_levels=[1.0], level_assignment=[0, 0, 0])
    base.update(kwargs)
    with pytest.raises(ValueError):
        PilotPattern(**base)


def test_designed_symbols_carry_designed_energy(rng):
    p = random_pattern(512, 64, rng)
    assert np.allclose(p.energies, p.assigned_energies, rtol=1e-12)
    unit = p.symbols / np.sqrt(p.assigned_energies)
    assert np.all(np.abs(unit[:, None] - qam.CONSTELLATION[None, :]).min(axis=1) < 1e-12)


def test_random_search_single_draw(cfg):
    p, trace = random_search_design(1, 512, 64, 3, cfg, PARAMS, np.random.default_rng(3))
    assert len(trace.records) == 1
    assert trace.final_mu == pytest.approx(pilot_coherence_fast(p, cfg, PARAMS), abs=1e-12)


def test_random_search_best_so_far_non_increasing(cfg):
    _, trace = random_search_design(50, 512, 64, 3, cfg, PARAMS, np.random.default_rng(4))
    best = [r.accepted_mu for r in trace.records]
    assert all(b <= a for a, b in zip(best, best[1:]))
    assert best[-1] == min(r.candidate_mu for r in trace.records)


@pytest.mark.parametrize("iters", [200, 0, 63])
def test_joint_design_iteration_guard(cfg, iters):
    init = random_pattern(512, 64, np.random.default_rng(0))
    with pytest.raises(ValueError):
        joint_design(init, iters, 3, DEFAULT_LEVELS, cfg, PARAMS, np.random.default_rng(0))


@pytest.fixture(scope="module")
def design_run():
    cfg = ChannelModelConfig()
    rng = np.random.default_rng(11)
    init = random_pattern(512, 64, rng)
    pattern, trace = joint_design(init, 192, 3, DEFAULT_LEVELS, cfg, PARAMS, rng)
    return cfg, init, pattern, trace


def test_joint_design_trace(design_run):
    cfg, init, pattern, trace = design_run
    assert len(trace.records) == 192
    assert [r.iteration for r in trace.records] == list(range(192))
    check_valid(pattern, 512, 64)
    assert trace.final_mu == pytest.approx(pilot_coherence_fast(pattern, cfg, PARAMS), abs=1e-12)


def test_joint_design_moves_never_increase(design_run):
    _, _, _, trace = design_run
    for r in trace.records:
        assert r.accepted_mu <= r.current_mu
    # the chain state after step m is the state before step m+1
    for a, b in zip(trace.records, trace.records[1:]):
        assert b.current_mu == pytest.approx(a.accepted_mu, abs=1e-15)


def test_occupation_probabilities(design_run):
    _, _, _, trace = design_run
    I = trace.occupation
    assert np.all(I >= 0) and np.all(I <= 1)
    assert I.sum() == pytest.approx(1.0, abs=1e-9)
    assert trace.records[-1].occupation_max == pytest.approx(I.max(), abs=1e-15)


def test_evaluation_count(design_run):
    # (T + 2) objective evaluations per iteration plus one for the output
    _, _, _, trace = design_run
    assert trace.evaluations == 192 * (3 + 2) + 1


def test_joint_design_deterministic(cfg):
    def run():
        rng = np.random.default_rng(5)
        init = random_pattern(512, 64, rng)
        return joint_design(init, 64, 3, DEFAULT_LEVELS, cfg, PARAMS, rng)

    (p1, t1), (p2, t2) = run(), run()
    assert p1 == p2
    assert t1.records == t2.records


def test_joint_design_improves_on_start(design_run):
    cfg, init, pattern, trace = design_run
    assert trace.final_mu <= CoherenceObjective(cfg, PARAMS)(init.placement, init.assigned_energies)


@pytest.fixture(scope="module")
def codebook():
    cfg = ChannelModelConfig()
    book, traces = build_codebook(cfg, DesignParams(iters=64), seed=9, config_hash="abc")
    return cfg, book, traces


def test_codebook_shape(codebook):
    cfg, book, traces = codebook
    assert len(book.entries) == 5 and len(traces) == 5
    for e in book.entries:
        check_valid(e, 512, 64)
        assert e.P / e.K == 0.125
    assert book.provenance == {"seed": 9, "iters": 64, "delta": 0.1, "config_hash": "abc"}


def test_codebook_entries_differ_by_slot(codebook):
    _, book, _ = codebook
    assert len({tuple(e.placement) for e in book.entries}) == 5


@pytest.mark.parametrize("f_d, slot", [(900.0, 5), (0.0, 3), (-900.0, 1), (500.0, 4), (-1.0, 2)])
def test_select_pilot(codebook, f_d, slot):
    _, book, _ = codebook
    assert select_pilot(book, f_d) is book.entry(slot)


def test_select_pilot_out_of_range(codebook):
    _, book, _ = codebook
    with pytest.raises(ValueError):
        select_pilot(book, 1200.0)


def test_codebook_round_trip(codebook, tmp_path):
    _, book, _ = codebook
    path = tmp_path / "cb.json"
    save_codebook(book, path)
    back = load_codebook(path)
    assert back == book
    for a, b in zip(back.entries, book.entries):
        assert np.array_equal(a.symbols, b.symbols)
        assert np.array_equal(a.power_levels, b.power_levels)
    save_codebook(back, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_codebook_json_fields(codebook):
    _, book, _ = codebook
    doc = codebook_to_dict(book)
    assert set(doc) == {"version", "K", "P", "T", "M", "f_dmax_hz", "T_d_s", "entries", "provenance"}
    assert set(doc["entries"][0]) == {
        "slot", "x", "f_d_range_hz", "placement", "power_level_index", "power_levels", "symbols",
    }
    lo, hi = doc["entries"][2]["f_d_range_hz"]
    assert lo <= 0.0 <= hi


@pytest.mark.parametrize("mutate", ["drop_entry", "bad_version", "missing_key", "header_mismatch"])
def test_codebook_malformed(codebook, mutate):
    _, book, _ = codebook
    doc = json.loads(json.dumps(codebook_to_dict(book)))
    if mutate == "drop_entry":
        doc["entries"].pop()
    elif mutate == "bad_version":
        doc["version"] = 99
    elif mutate == "missing_key":
        del doc["entries"][0]["placement"]
    else:
        doc["P"] = 65
    with pytest.raises(ValueError):
        codebook_from_dict(doc)


def test_codebook_requires_full_slot_set(codebook):
    _, book, _ = codebook
    with pytest.raises(ValueError):
        Codebook(2, book.entries[:4], book.T_d, book.f_dmax)
    with pytest.raises(KeyError):
        book.entry(6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([16, 32, 48]))
def test_designed_patterns_stay_valid(seed, P):
    cfg = ChannelModelConfig()
    rng = np.random.default_rng(seed)
    init = random_pattern(512, P, rng)
    pattern, trace = joint_design(init, P, 3, DEFAULT_LEVELS, cfg, PARAMS, rng)
    check_valid(pattern, 512, P)
    assert trace.occupation.sum() == pytest.approx(1.0, abs=1e-9)
