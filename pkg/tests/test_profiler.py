import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rexcam.core import EXIT, ContractError, LabeledDetection as L
from rexcam.model import filter_agreement, spatial_degree
from rexcam.profiler import (DriftMonitor, TransitionRecord, build_model, extract_transitions, record_outcome,
                             sample_labels, sampled_gap, segment_visits, should_reprofile)


def visit(entity, camera, first, last):
    return [L(camera, f, entity) for f in range(first, last + 1)]


def test_single_camera_entity_exits():
    assert extract_transitions(visit(0, 1, 0, 5), 2) == [TransitionRecord(0, 1, EXIT, 5, None)]


def test_transition_offset_is_first_minus_last():
    labels = visit(0, 1, 0, 10) + visit(0, 2, 15, 20)
    recs = extract_transitions(labels, 2)
    assert recs[0] == TransitionRecord(0, 1, 2, 10, 5)
    assert recs[1].dst == EXIT


def test_via_camera_is_not_a_direct_transition():
    labels = visit(0, 1, 0, 3) + visit(0, 3, 10, 12) + visit(0, 2, 20, 22)
    pairs = [(r.src, r.dst) for r in extract_transitions(labels, 2)]
    assert pairs == [(1, 3), (3, 2), (2, EXIT)]


def test_gap_threshold_splits_visits():
    labels = [L(0, f, 0) for f in (0, 1, 2, 5, 6)]
    assert len(segment_visits(labels, 2)[0]) == 2
    assert len(segment_visits(labels, 3)[0]) == 1


def test_overlap_is_ordered_by_last_frame(caplog):
    labels = visit(0, 1, 0, 10) + visit(0, 2, 8, 15)
    recs = extract_transitions(labels, 2)
    assert (recs[0].src, recs[0].dst, recs[0].delta) == (1, 2, 1)
    assert "at once" in caplog.text


label_lists = st.lists(st.tuples(st.integers(0, 3), st.integers(0, 60), st.integers(0, 4)), max_size=80)


@given(label_lists, st.randoms())
def test_extraction_ignores_label_order(raw, rnd):
    labels = [L(c, f, e) for c, f, e in raw]
    shuffled = labels[:]
    rnd.shuffle(shuffled)
    assert Counter(extract_transitions(labels, 2)) == Counter(extract_transitions(shuffled, 2))


@given(label_lists)
def test_one_record_per_visit_and_chained(raw):
    labels = [L(c, f, e) for c, f, e in raw]
    visits = segment_visits(labels, 2)
    recs = extract_transitions(labels, 2)
    assert len(recs) == sum(len(v) for v in visits.values())
    by_entity = {}
    for r in recs:
        by_entity.setdefault(r.entity, []).append(r)
    for rs in by_entity.values():
        for a, b in zip(rs, rs[1:]):
            assert a.dst == b.src and a.delta > 0
        assert rs[-1].dst == EXIT


def test_build_model_examples():
    m = build_model([TransitionRecord(0, 1, 2, 0, 5)])
    assert spatial_degree(m, 1, 2) == 1.0 and m.pairs[(1, 2)].delta_min == 5
    assert build_model([]).n_cameras == 0
    with pytest.raises(ContractError):
        build_model([TransitionRecord(0, 0, 1, 0, 0)])


def test_build_model_recount_on_random_transitions():
    rng = np.random.default_rng(0)
    recs = [TransitionRecord(0, int(a), int(b), 0, None if b == EXIT else int(d))
            for a, b, d in zip(rng.integers(0, 5, 10_000), rng.integers(-1, 5, 10_000), rng.integers(1, 90, 10_000))]
    m = build_model(recs, 5)
    for (s, d), h in m.pairs.items():
        raw = [r.delta for r in recs if r.src == s and r.dst == d]
        assert h.count == len(raw) == sum(h.bins) and h.delta_min == min(raw)
    doubled = build_model(recs + recs, 5)
    for s in range(5):
        for d in range(5):
            assert spatial_degree(doubled, s, d) == spatial_degree(m, s, d)


def test_sample_labels():
    labels = [L(0, f, 0) for f in range(8)]
    assert sample_labels(labels, 1) == labels
    assert [x.frame for x in sample_labels(labels, "4/8")] == [0, 1, 2, 3]
    assert sampled_gap(2, "4/8") == 6
    with pytest.raises(ContractError):
        sample_labels(labels, "1/3")


def test_sampled_model_close_to_full(small_world):
    net, graph, truth = small_world
    full = build_model(extract_transitions(truth, 2), net.n_cameras)
    half = build_model(extract_transitions(sample_labels(truth, "4/8"), sampled_gap(2, "4/8")), net.n_cameras)
    assert filter_agreement(half, full, 90) >= 0.9


class TestDrift:
    def test_quiet_window_never_fires(self):
        m = DriftMonitor(window_len=10)
        for _ in range(50):
            record_outcome(m, False)
        assert not should_reprofile(m)

    def test_spike_fires(self):
        m = DriftMonitor(window_len=20, spike_factor=3, baseline_rate=0.05)
        for i in range(20):
            m.record_outcome(i % 5 == 0)
        assert m.rate == pytest.approx(0.2) and m.should_reprofile()

    def test_needs_full_window(self):
        m = DriftMonitor(window_len=20, baseline_rate=0.0)
        for _ in range(19):
            m.record_outcome(True)
        assert not m.should_reprofile()
        m.record_outcome(True)
        assert m.should_reprofile()

    def test_topology_change_triggers_reprofile(self, drift_outcomes):
        before, after = drift_outcomes
        m = DriftMonitor(window_len=200)
        for flag in before:
            m.record_outcome(flag)
        assert m.baseline_rate is not None and not m.should_reprofile()
        fired = None
        for i, flag in enumerate(after):
            m.record_outcome(flag)
            if m.should_reprofile():
                fired = i
                break
        assert fired is not None and fired < 2 * m.window_len
