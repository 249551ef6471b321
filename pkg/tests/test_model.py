import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import model_true, raw_counts, spatial
from rexcam.core import EXIT, ContractError
from rexcam.model import (ModelFormatError, empty_model, exit_fraction, filter_cameras, has_departures,
                          load_model, model_eval, model_from_json, model_to_json, relax, save_model,
                          spatial_degree, temporal_degree, validate_model, with_thresholds)
from rexcam.profiler import TransitionRecord, build_model


def model_of(triples, n=None, s=0.05, t=0.02, bw=1):
    recs = [TransitionRecord(0, a, b, 0, None if b == EXIT else d) for a, b, d in triples]
    return build_model(recs, n, s, t, bw)


transitions = st.lists(
    st.tuples(st.integers(0, 3), st.integers(-1, 3), st.integers(1, 40)), min_size=1, max_size=60)


def test_spatial_degree_examples():
    m = model_of([(1, 2, 5)] * 3 + [(1, 3, 5)], n=4)
    assert spatial_degree(m, 1, 2) == 0.75
    assert spatial_degree(model_of([(0, 1, 5)]), 0, 1) == 1.0
    two = model_of([(0, 1, 5), (0, EXIT, 0)], n=2)
    assert spatial_degree(two, 0, 1) == 0.5 and exit_fraction(two, 0) == 0.5
    assert spatial_degree(two, 1, 0) == 0.0 and not has_departures(two, 1)


def test_temporal_degree_examples():
    m = model_of([(0, 1, 5), (0, 1, 5), (0, 1, 15)])
    assert temporal_degree(m, 0, 1, 0, 10) == pytest.approx(2 / 3)
    assert temporal_degree(m, 0, 1, 0, np.inf) == 1.0
    assert temporal_degree(m, 0, 1, 0, 4) == 0.0
    assert temporal_degree(m, 1, 0, 0, 10) == 0.0
    with pytest.raises(ContractError):
        temporal_degree(m, 0, 1, 5, 4)


def test_model_eval_examples():
    # 1 of 25 departures goes to camera 1: S = 0.04 < 0.05
    weak = model_of([(0, 1, 5)] + [(0, 2, 5)] * 24, n=3)
    assert not any(model_eval(weak, 0, 1, 0, f) for f in range(1, 50))
    m = model_of([(0, 1, 5), (0, 1, 5), (0, 1, 15), (0, 2, 3), (0, 2, 3), (0, 2, 3)], n=3)
    assert spatial_degree(m, 0, 1) == 0.5
    assert not model_eval(m, 0, 1, 100, 104)
    assert model_eval(m, 0, 1, 100, 106)
    with pytest.raises(ContractError):
        model_eval(m, 0, 1, 5, 5)


def test_filter_cameras_worked_illustration():
    # camera 1 is reached after 1..10 s, camera 2 after 11..20 s
    m = model_of([(0, 1, d) for d in range(1, 11)] * 3 + [(0, 2, d) for d in range(11, 21)] * 3, n=3)
    assert filter_cameras(m, 0, 0, 5) == {1}
    assert filter_cameras(m, 0, 0, 15) == {2}
    assert filter_cameras(m, 0, 0, 25) == set()
    assert filter_cameras(m, 0, 0, 5, cameras=[2]) == set()


def test_asymmetric_model_is_representable():
    m = model_of([(0, 1, 5)] * 10 + [(1, 0, 5)] + [(1, 2, 5)] * 30, n=3)
    assert model_eval(m, 0, 1, 0, 5) and not model_eval(m, 1, 0, 0, 5)


@given(transitions, st.sampled_from([0.0, 0.05, 0.2, 0.5]), st.sampled_from([0.0, 0.02, 0.1, 0.5]),
       st.sampled_from([1, 3]))
def test_vectorized_filter_agrees_with_brute_force(trs, s, t, bw):
    m = model_of(trs, n=4, s=s, t=t, bw=bw)
    deltas, exits = raw_counts(trs)
    for src in range(4):
        for gap in range(1, 50):
            mask = m.filter_mask(src, gap)
            for dst in range(4):
                want = model_true(deltas, exits, src, dst, gap, s, t, bw)
                assert mask[dst] == want == model_eval(m, src, dst, 10, 10 + gap)


@given(transitions)
def test_spatial_rows_sum_to_one(trs):
    m = model_of(trs, n=4)
    deltas, exits = raw_counts(trs)
    assert validate_model(m) == []
    for src in range(4):
        if has_departures(m, src):
            total = sum(spatial_degree(m, src, d) for d in range(4)) + exit_fraction(m, src)
            assert abs(total - 1) < 1e-9
        for d in range(4):
            assert spatial_degree(m, src, d) == pytest.approx(spatial(deltas, exits, src, d))


@given(transitions, st.integers(1, 60), st.integers(0, 60))
def test_temporal_degree_monotone_in_upper_edge(trs, hi, extra):
    m = model_of(trs, n=4)
    for (s, d) in m.pairs:
        assert temporal_degree(m, s, d, 0, hi) <= temporal_degree(m, s, d, 0, hi + extra)
        assert temporal_degree(m, s, d, 0, 1e9) == 1.0


@given(transitions, st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_filter_anti_monotone_in_thresholds(trs, s1, s2, t1, t2):
    base = model_of(trs, n=4)
    lo = with_thresholds(base, min(s1, s2), min(t1, t2))
    hi = with_thresholds(base, max(s1, s2), max(t1, t2))
    for src in range(4):
        for gap in range(1, 45):
            assert not np.any(hi.filter_mask(src, gap) & ~lo.filter_mask(src, gap))


@given(transitions, st.floats(1.01, 50))
def test_relaxed_filter_is_superset(trs, factor):
    m = model_of(trs, n=4)
    r = relax(m, factor)
    assert r.s_thresh == pytest.approx(m.s_thresh / factor)
    for src in range(4):
        for gap in range(1, 45):
            assert not np.any(m.filter_mask(src, gap) & ~r.filter_mask(src, gap))


def test_relax_rules():
    m = empty_model(3)
    assert relax(m, 10).s_thresh == pytest.approx(0.005)
    assert relax(m, 10).t_thresh == pytest.approx(0.002)
    with pytest.raises(ContractError):
        relax(m, 1)


def test_empty_model_filters_everything():
    m = build_model([], n_cameras=3)
    assert all(not m.filter_mask(s, g).any() for s in range(3) for g in range(1, 20))
    assert m.peers_closed(0, 1)


class TestSerialization:
    def three_camera(self):
        return model_of([(0, 1, 4), (0, 1, 6), (1, 2, 9), (2, EXIT, 0), (0, EXIT, 0)], n=3, s=0.1, t=0.05)

    def test_round_trip(self, tmp_path):
        m = self.three_camera()
        save_model(m, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        assert back == m
        doc = json.loads((tmp_path / "m.json").read_text())
        assert {"n_cameras", "s_thresh", "t_thresh", "bin_width", "pairs"} <= set(doc)
        assert {"src": 2, "dst": -1, "count": 1, "delta_min": None, "bins": []} in doc["pairs"]

    def test_large_model_is_byte_stable(self, tmp_path):
        rng = np.random.default_rng(3)
        trs = [(int(a), int(b), int(d)) for a, b, d in zip(rng.integers(0, 6, 1000), rng.integers(-1, 6, 1000),
                                                           rng.integers(1, 80, 1000))]
        m = model_of(trs, n=6)
        save_model(m, tmp_path / "a.json")
        save_model(load_model(tmp_path / "a.json"), tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    @pytest.mark.parametrize("field", ["s_thresh", "t_thresh", "n_cameras", "bin_width", "pairs"])
    def test_missing_field_is_named(self, field):
        doc = model_to_json(self.three_camera())
        del doc[field]
        with pytest.raises(ModelFormatError) as err:
            model_from_json(doc)
        assert err.value.field == field

    def test_bad_pair_record(self):
        doc = model_to_json(self.three_camera())
        doc["pairs"][1]["bins"] = [5]
        with pytest.raises(ModelFormatError, match="bins"):
            model_from_json(doc)

    def test_malformed_json(self, tmp_path):
        (tmp_path / "m.json").write_text("{not json")
        with pytest.raises(ModelFormatError):
            load_model(tmp_path / "m.json")
