"""Tests for the cubic density schedule and local magnitude pruning."""

import math
from collections import namedtuple

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spur.errors import (
    ConfigurationError,
    ContractError,
    InputError,
    IntegrityError,
)
from spur.graph import ExprGraph
from spur.matrix import Matrix
from spur.pruning import (
    Mask,
    PruningSchedule,
    PruningState,
    TargetDomain,
    apply_mask,
    compute_mask,
    density_at,
    pruning_event,
    select_targets,
    survivor_count,
)


def brute_force_mask(w, v):
    """Independent oracle: full stable sort of (magnitude, flat index)."""
    flat = [abs(x) for row in w.tolist() for x in row]
    n = len(flat)
    k = int(math.floor(v * n + 0.5))
    order = sorted(range(n), key=lambda i: (-flat[i], i))
    bits = [0.0] * n
    for i in order[:k]:
        bits[i] = 1.0
    return np.array(bits).reshape(w.shape)


# ----- density schedule -----


def ramp_schedule():
    return PruningSchedule(
        v_initial=1.0, v_final=0.1, t_i=100, ramp_steps=200, cadence=10,
        total_steps=400,
    )


def test_density_endpoints_and_midpoint():
    s = ramp_schedule()
    assert density_at(0, s) == 1.0
    assert density_at(100, s) == 1.0
    assert abs(density_at(300, s) - 0.1) <= 1e-12
    assert abs(density_at(400, s) - 0.1) <= 1e-12
    assert abs(density_at(200, s) - 0.21250) <= 1e-12


def test_density_monotone_non_increasing():
    s = ramp_schedule()
    values = [density_at(t, s) for t in range(0, 401)]
    for a, b in zip(values, values[1:]):
        assert b <= a


@settings(deadline=None, max_examples=50)
@given(
    st.floats(0.01, 1.0),
    st.floats(0.01, 1.0),
    st.integers(0, 50),
    st.integers(1, 200),
)
def test_density_bounded_and_monotone(a, b, t_i, ramp):
    v_hi, v_lo = max(a, b), min(a, b)
    s = PruningSchedule(
        v_initial=v_hi, v_final=v_lo, t_i=t_i, ramp_steps=ramp, cadence=1,
        total_steps=t_i + ramp,
    )
    prev = None
    for t in range(0, s.total_steps + 1):
        v = density_at(t, s)
        assert v_lo - 1e-12 <= v <= v_hi + 1e-12
        if prev is not None:
            assert v <= prev + 1e-15
        prev = v


def test_schedule_validation():
    good = dict(v_initial=1.0, v_final=0.5, t_i=0, ramp_steps=10, cadence=2,
                total_steps=10)
    PruningSchedule(**good)
    for bad in (
        dict(good, v_initial=0.0),
        dict(good, v_initial=1.5),
        dict(good, v_final=0.0),
        dict(good, v_final=-0.1),
        dict(good, v_initial=0.4),  # v_final > v_initial
        dict(good, t_i=-1),
        dict(good, ramp_steps=0),
        dict(good, cadence=0),
        dict(good, total_steps=-1),
        dict(good, total_steps=9),  # ramp overruns the run
    ):
        with pytest.raises(ConfigurationError):
            PruningSchedule(**bad)


def test_flat_schedule_may_outlive_its_ramp():
    # A constant-density schedule has nothing to finish, so a zero-step
    # run (or one shorter than t_i + ramp_steps) is legal.
    s = PruningSchedule(v_initial=0.3, v_final=0.3, t_i=500, ramp_steps=4500,
                        cadence=16, total_steps=0)
    assert density_at(0, s) == 0.3


# ----- mask computation -----


def test_survivor_count_rounds_half_up():
    assert survivor_count(0.5, 5) == 3
    assert survivor_count(0.05, 1024) == 51
    assert survivor_count(1.0, 7) == 7
    assert survivor_count(0.0, 7) == 0
    assert survivor_count(0.25, 6) == 2


def test_mask_oracle_brute_force():
    rng = np.random.default_rng(0)
    for trial in range(1000):
        r = int(rng.integers(1, 13))
        c = int(rng.integers(1, 13))
        style = trial % 4
        if style == 0:
            w = Matrix(rng.normal(size=(r, c)))
        elif style == 1:
            # Tie-heavy: few distinct magnitudes.
            w = Matrix(rng.choice([-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0],
                                  size=(r, c)))
        elif style == 2:
            w = Matrix(np.zeros((r, c)))
        else:
            w = Matrix(rng.uniform(-1, 1, size=(r, c)))
        if trial % 5 == 0:
            v = float(rng.choice([0.0, 1.0]))
        else:
            v = float(rng.uniform(0, 1))
        m = compute_mask(w, v)
        assert np.array_equal(m.m.a, brute_force_mask(w, v))
        assert m.popcount == survivor_count(v, r * c)


def test_mask_tie_break_prefers_smaller_flat_index():
    m = compute_mask(Matrix([[1.0, 1.0], [1.0, 1.0]]), 0.5)
    assert m.m.tolist() == [[1.0, 1.0], [0.0, 0.0]]


def test_mask_extremes():
    w = Matrix([[3.0, -1.0], [0.0, 2.0]])
    assert compute_mask(w, 1.0).m.tolist() == [[1.0, 1.0], [1.0, 1.0]]
    assert compute_mask(w, 0.0).m.tolist() == [[0.0, 0.0], [0.0, 0.0]]


def test_mask_ranks_by_magnitude_not_sign():
    m = compute_mask(Matrix([[-5.0, 1.0], [2.0, -3.0]]), 0.5)
    assert m.m.tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_compute_mask_rejects_bad_density():
    w = Matrix([[1.0]])
    with pytest.raises(InputError):
        compute_mask(w, -0.1)
    with pytest.raises(InputError):
        compute_mask(w, 1.1)


def test_mask_rejects_non_binary():
    with pytest.raises(InputError):
        Mask(Matrix([[0.5]]))


# ----- target selection -----

P = namedtuple("P", ["name", "role", "layer"])


class StubTable:
    def __init__(self, params):
        self.params = params


def transformer_params():
    params = [P("emb.tok", "EMBED", None), P("emb.pos", "EMBED", None)]
    for i in range(2):
        for role in ("Q", "K", "V", "O", "FF1", "FF2"):
            params.append(P(f"layer{i}.{role.lower()}", role, i))
            params.append(P(f"layer{i}.{role.lower()}_bias", "BIAS", i))
        params.append(P(f"layer{i}.norm1_gain", "GAIN", i))
        params.append(P(f"layer{i}.norm1_bias", "BIAS", i))
    params.append(P("head.w", "HEAD", None))
    return params


def test_select_targets_all_order():
    names = select_targets(StubTable(transformer_params()), TargetDomain.ALL)
    assert names == [
        "layer0.q", "layer0.k", "layer0.v", "layer0.o", "layer0.ff1",
        "layer0.ff2",
        "layer1.q", "layer1.k", "layer1.v", "layer1.o", "layer1.ff1",
        "layer1.ff2",
    ]


def test_select_targets_attention_domains():
    table = StubTable(transformer_params())
    assert select_targets(table, TargetDomain.Q_PLUS_K) == [
        "layer0.q", "layer0.k", "layer1.q", "layer1.k"]
    assert select_targets(table, TargetDomain.Q_ONLY) == [
        "layer0.q", "layer1.q"]
    assert select_targets(table, TargetDomain.K_ONLY) == [
        "layer0.k", "layer1.k"]


def test_select_targets_order_independent_of_input_order():
    params = transformer_params()
    shuffled = list(reversed(params))
    a = select_targets(StubTable(params), TargetDomain.ALL)
    b = select_targets(StubTable(shuffled), TargetDomain.ALL)
    assert a == b


def test_select_targets_mlp():
    params = [
        P("layer1.w", "HIDDEN", 1), P("layer0.w", "HIDDEN", 0),
        P("layer0.b", "BIAS", 0), P("head.w", "HEAD", None),
    ]
    table = StubTable(params)
    assert select_targets(table, TargetDomain.ALL) == ["layer0.w", "layer1.w"]
    with pytest.raises(ConfigurationError):
        select_targets(table, TargetDomain.Q_PLUS_K)


def test_select_targets_unknown_role():
    table = StubTable([P("x", "WEIRD", 0)])
    with pytest.raises(ConfigurationError):
        select_targets(table, TargetDomain.ALL)


def test_domain_from_string():
    assert TargetDomain.from_string("all") is TargetDomain.ALL
    assert TargetDomain.from_string("Q+K") is TargetDomain.Q_PLUS_K
    assert TargetDomain.from_string(" q ") is TargetDomain.Q_ONLY
    assert TargetDomain.from_string("K") is TargetDomain.K_ONLY
    with pytest.raises(ConfigurationError):
        TargetDomain.from_string("qk")


# ----- pruning state and events -----


def flat_schedule(v, total_steps=100, cadence=10):
    return PruningSchedule(v_initial=1.0, v_final=v, t_i=0, ramp_steps=1,
                           cadence=cadence, total_steps=total_steps)


def test_initial_state_all_ones():
    weights = {"a": Matrix([[1.0, 2.0]]), "b": Matrix([[3.0], [4.0]])}
    state = PruningState.initial(["a", "b"], weights)
    assert state.current_density == 1.0
    assert state.last_event_step is None
    assert state.masks["a"].m.tolist() == [[1.0, 1.0]]
    assert state.masks["b"].popcount == 2


def test_pruning_event_reselection():
    schedule = flat_schedule(0.5)
    w1 = {"a": Matrix([[3.0, 1.0], [2.0, 0.5]])}
    state0 = PruningState.initial(["a"], w1)
    state1 = pruning_event(state0, w1, 10, schedule)
    assert state1.masks["a"].m.tolist() == [[1.0, 0.0], [1.0, 0.0]]
    # The removed (0,1) entry grows in the underlying weights and re-enters
    # at the next event, displacing (0,0).
    w2 = {"a": Matrix([[0.1, 5.0], [2.0, 0.5]])}
    state2 = pruning_event(state1, w2, 20, schedule)
    assert state2.masks["a"].m.tolist() == [[0.0, 1.0], [1.0, 0.0]]
    # Purity: earlier states are untouched.
    assert state1.masks["a"].m.tolist() == [[1.0, 0.0], [1.0, 0.0]]
    assert state0.masks["a"].popcount == 4
    assert state2.current_density == 0.5
    assert state2.last_event_step == 20


def test_pruning_event_off_cadence_rejected():
    schedule = flat_schedule(0.5, total_steps=100, cadence=10)
    w = {"a": Matrix([[1.0, 2.0]])}
    state = PruningState.initial(["a"], w)
    with pytest.raises(ContractError):
        pruning_event(state, w, 7, schedule)
    # Step 0 and the final step are always legal event times.
    pruning_event(state, w, 0, schedule)
    pruning_event(state, w, 100, schedule)


def test_pruning_event_missing_weight():
    schedule = flat_schedule(0.5)
    state = PruningState.initial(["a"], {"a": Matrix([[1.0, 2.0]])})
    with pytest.raises(IntegrityError):
        pruning_event(state, {"b": Matrix([[1.0, 2.0]])}, 10, schedule)


def test_pruning_event_deterministic():
    schedule = flat_schedule(0.25)
    rng = np.random.default_rng(3)
    w = {"a": Matrix(rng.normal(size=(6, 6))), "b": Matrix(rng.normal(size=(4, 8)))}
    state = PruningState.initial(["a", "b"], w)
    first = pruning_event(state, w, 10, schedule)
    second = pruning_event(state, w, 10, schedule)
    assert first.masks["a"] == second.masks["a"]
    assert first.masks["b"] == second.masks["b"]


def test_full_density_event_keeps_everything():
    schedule = PruningSchedule(v_initial=1.0, v_final=1.0, t_i=0, ramp_steps=1,
                               cadence=5, total_steps=50)
    w = {"a": Matrix(np.random.default_rng(1).normal(size=(5, 5)))}
    state = pruning_event(PruningState.initial(["a"], w), w, 10, schedule)
    assert state.masks["a"].popcount == 25


# ----- mask application in the graph -----


def test_apply_mask_forward_and_gradient():
    g = ExprGraph()
    w = g.leaf(Matrix([[1.0, 2.0], [3.0, 4.0]]))
    mask = Mask(Matrix([[1.0, 0.0], [0.0, 1.0]]))
    eff = apply_mask(g, w, mask)
    assert g.value(eff).tolist() == [[1.0, 0.0], [0.0, 4.0]]
    loss = g.sum_all(eff)
    grads = g.backward(loss, [w])
    assert grads[w].tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_apply_mask_shape_mismatch():
    from spur.errors import ShapeError

    g = ExprGraph()
    w = g.leaf(Matrix([[1.0, 2.0]]))
    with pytest.raises(ShapeError):
        apply_mask(g, w, Mask(Matrix([[1.0], [0.0]])))
