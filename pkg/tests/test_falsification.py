import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import lp_feasible, pairwise_falsified
from smident import (
    Dataset,
    InflationPolicy,
    SmHypotheses,
    StreamState,
    build_envelope,
    datum_consistent,
    falsification_curve,
    falsify,
    falsify_via_envelope,
    stream_update,
)
from smident.falsification import StreamError, minimal_inflation


def D(U, y):
    return Dataset(U, y)


def H(g, e):
    return SmHypotheses(g, e)


def test_single_sample_never_falsified():
    for g, e in [(0, 0), (3, 0.1)]:
        assert not falsify(D([[1]], [5]), H(g, e)).falsified
        assert not falsify_via_envelope(D([[1]], [5]), H(g, e)).falsified


def test_steep_pair_falsified_with_witness():
    v = falsify(D([[0], [1]], [0, 4]), H(1, 1))
    assert v.falsified
    assert v.witness == (0, 1)
    assert v.margin == pytest.approx(1.0)


def test_duplicate_inputs_falsified_for_any_gamma():
    for g in [0.0, 1.0, 1e6]:
        assert falsify(D([[0], [0]], [0, 3]), H(g, 1)).falsified


def test_envelope_path_examples():
    assert falsify_via_envelope(D([[0], [1]], [0, 4]), H(1, 1)).falsified
    assert not falsify_via_envelope(D([[0], [1]], [0, 1]), H(2, 0.1)).falsified


def test_boundary_tie_is_unfalsified_and_flagged():
    v = falsify(D([[0], [1]], [0, 4]), H(2, 1))
    assert not v.falsified and v.boundary
    w = falsify_via_envelope(D([[0], [1]], [0, 4]), H(2, 1))
    assert not w.falsified and w.boundary


def test_verdict_dict_is_plain():
    d = falsify(D([[0], [1]], [0, 4]), H(1, 1)).to_dict()
    assert d["falsified"] is True and d["witness"] == [0, 1]


@st.composite
def small_data(draw):
    n = draw(st.sampled_from([1, 2]))
    M = draw(st.integers(1, 8))
    grid = st.integers(-4, 4).map(float)  # coarse grid makes duplicates and ties likely
    U = np.array(draw(st.lists(st.lists(grid, min_size=n, max_size=n), min_size=M, max_size=M)))
    y = np.array(draw(st.lists(st.integers(-10, 10).map(float), min_size=M, max_size=M)))
    return U, y, float(draw(st.integers(0, 6))), draw(st.sampled_from([0.0, 0.5, 1.0, 2.0]))


@settings(max_examples=300, deadline=None)
@given(small_data())
def test_both_paths_agree_with_pairwise_oracle(data):
    U, y, g, e = data
    expected = pairwise_falsified(U, y, g, e, tol=1e-9)
    assert falsify(D(U, y), H(g, e)).falsified == expected
    assert falsify_via_envelope(D(U, y), H(g, e)).falsified == expected


@settings(max_examples=150, deadline=None)
@given(
    st.integers(0, 2**31),
    st.integers(2, 7),
    st.sampled_from([1, 2]),
)
def test_verdict_matches_lp_feasibility(seed, M, n):
    rng = np.random.default_rng(seed)
    U = rng.uniform(-3, 3, size=(M, n))
    y = rng.uniform(-10, 10, M)
    g, e = rng.uniform(0, 6), rng.uniform(0, 3)
    assert falsify(D(U, y), H(g, e)).falsified == (not lp_feasible(U, y, g, e))


def test_curve_closed_form():
    c = falsification_curve(D([[0], [1]], [0, 4]), [0, 1, 2, 3])
    np.testing.assert_array_equal(c.gamma_star, [4, 2, 0, 0])


def test_curve_single_sample_is_zero():
    c = falsification_curve(D([[0]], [1]), [0, 1])
    np.testing.assert_array_equal(c.gamma_star, [0, 0])


def test_curve_duplicate_inputs_infinite():
    c = falsification_curve(D([[0], [0]], [0, 3]), [1.0, 1.5])
    assert math.isinf(c.gamma_star[0])
    assert c.gamma_star[1] == 0.0


def test_curve_csv():
    text = falsification_curve(D([[0], [1]], [0, 4]), [0, 1]).to_csv()
    assert text.splitlines() == ["epsilon,gamma_star", "0,4", "1,2"]


@pytest.mark.parametrize("grid", [[], [1, 0], [-1, 1]])
def test_curve_rejects_bad_grids(grid):
    with pytest.raises(ValueError):
        falsification_curve(D([[0], [1]], [0, 4]), grid)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_curve_separates_regions(seed):
    rng = np.random.default_rng(seed)
    M, n = rng.integers(2, 9), rng.integers(1, 3)
    U = rng.uniform(-3, 3, size=(M, n))
    y = rng.uniform(-10, 10, M)
    eps = np.linspace(0, 6, 12)
    c = falsification_curve(D(U, y), eps)
    assert np.all(np.diff(c.gamma_star) <= 0)
    for e, g in zip(eps, c.gamma_star):
        if g > 0:
            assert not falsify(D(U, y), H(g * (1 + 1e-6), e)).falsified
            assert falsify(D(U, y), H(g * (1 - 1e-6), e)).falsified


def test_datum_consistency_examples():
    e = build_envelope(D([[0]], [0]), H(1, 0.1))
    assert not datum_consistent(e, [1], 5)
    assert datum_consistent(e, [1], 0.5)
    assert datum_consistent(e, [0], 0)


def test_stream_event_then_unfalsified():
    s = StreamState.start(D([[0]], [0]), H(1, 0.1))
    s2, ev = stream_update(s, ([1], 5))
    assert ev is not None and ev.index == 1
    assert ev.after.gamma > 1 and ev.after.epsilon > 0.1
    assert ev.after.gamma * 1 >= 5 - 2 * ev.after.epsilon
    assert not falsify(s2.dataset, s2.hyp).falsified
    assert s2.dataset.M == 2


def test_stream_consistent_and_repeated_data():
    s = StreamState.start(D([[0]], [0]), H(1, 0.1))
    s, ev = stream_update(s, ([0.5], 0.2))
    assert ev is None and s.hyp == H(1, 0.1)
    s, ev = stream_update(s, ([0.5], 0.2))
    assert ev is None and s.dataset.M == 3


def test_inflation_lands_just_inside():
    d = D([[0], [1]], [0, 5])
    h = minimal_inflation(d, H(1, 0.1), InflationPolicy())
    assert not falsify(d, h).falsified
    # without the margin the ray point would sit on or before the boundary
    back = SmHypotheses(h.gamma / (1 + 1e-3), h.epsilon / (1 + 1e-3))
    assert falsify(d, back).falsified or falsify(d, back).boundary


def test_inflation_cannot_grow_zero_hypotheses():
    with pytest.raises(StreamError):
        minimal_inflation(D([[0], [1]], [0, 5]), H(0, 0), InflationPolicy())


def test_inflation_with_zero_gamma_grows_epsilon_only():
    h = minimal_inflation(D([[0], [1]], [0, 5]), H(0, 0.1), InflationPolicy())
    assert h.gamma == 0 and h.epsilon >= 2.5


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_stream_hypotheses_never_decrease(seed):
    rng = np.random.default_rng(seed)
    s = StreamState.start(D([[0.0]], [0.0]), H(0.1, 0.01))
    for _ in range(30):
        u = rng.uniform(-2, 2)
        s, _ = stream_update(s, ([u], 2 * np.sin(3 * u) + rng.uniform(-0.2, 0.2)))
    events = s.events
    for a, b in zip(events, events[1:]):
        assert b.before == a.after
    for ev in events:
        assert ev.after.gamma >= ev.before.gamma and ev.after.epsilon >= ev.before.epsilon
    assert not falsify(s.dataset, s.hyp).falsified


def test_start_inflates_falsified_initial_data():
    s = StreamState.start(D([[0], [1]], [0, 5]), H(1, 0.1))
    assert not falsify(s.dataset, s.hyp).falsified
