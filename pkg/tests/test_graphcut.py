import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lexstereo.graphcut import BinarySubproblem, FlowNetwork, NotSubmodularError, max_flow, solve_binary


def random_network(rng, n, density=0.4, integer=False):
    pairs = [(p, q) for p in range(n) for q in range(p + 1, n) if rng.random() < density]
    draw = (lambda size: rng.integers(0, 6, size).astype(float)) if integer else (lambda size: rng.exponential(2, size))
    src = draw(n) * (rng.random(n) < 0.6)
    snk = draw(n) * (rng.random(n) < 0.6)
    caps = draw((len(pairs), 2)) * (rng.random((len(pairs), 2)) < 0.7)
    return FlowNetwork(n, src, snk, np.array(pairs, dtype=np.int64).reshape(-1, 2), caps.reshape(-1, 2))


def min_cut_brute(net):
    return min(net.cut_capacity(np.array(bits, dtype=bool))
               for bits in itertools.product([False, True], repeat=net.n_nodes))


def test_single_node():
    flow, side = max_flow(FlowNetwork(1, [3.0], [2.0], np.zeros((0, 2)), np.zeros((0, 2))))
    assert flow == 2 and side[0]


def test_series_bottleneck():
    flow, side = max_flow(FlowNetwork(2, [3.0, 0.0], [0.0, 5.0], [[0, 1]], [[1.0, 0.0]]))
    assert flow == 1
    assert side.tolist() == [True, False]


def test_empty_network():
    flow, side = max_flow(FlowNetwork(0, [], [], np.zeros((0, 2)), np.zeros((0, 2))))
    assert flow == 0 and len(side) == 0


def test_negative_capacity_rejected():
    with pytest.raises(ValueError):
        FlowNetwork(1, [-1.0], [0.0], np.zeros((0, 2)), np.zeros((0, 2)))


@pytest.mark.parametrize("integer", [False, True])
def test_random_networks_match_exhaustive_cut(rng, integer):
    for _ in range(300):
        net = random_network(rng, 8, integer=integer)
        flow, side = max_flow(net)
        assert flow == pytest.approx(min_cut_brute(net), rel=1e-9, abs=1e-12)
        # duality: the returned cut carries exactly the flow
        assert net.cut_capacity(side) == pytest.approx(flow, rel=1e-9, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 7), st.integers(0, 2**32 - 1))
def test_flow_equals_cut_property(n, seed):
    net = random_network(np.random.default_rng(seed), n, density=0.6)
    flow, side = max_flow(net)
    assert net.cut_capacity(side) == pytest.approx(flow, rel=1e-9, abs=1e-12)


def test_larger_grid_duality(rng):
    h, w = 30, 40
    idx = np.arange(h * w).reshape(h, w)
    edges = np.concatenate([np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], 1),
                            np.stack([idx[:-1].ravel(), idx[1:].ravel()], 1)])
    net = FlowNetwork(h * w, rng.exponential(1, h * w), rng.exponential(1, h * w), edges,
                      rng.exponential(1, (len(edges), 2)))
    flow, side = max_flow(net)
    assert net.cut_capacity(side) == pytest.approx(flow, rel=1e-9)


def random_submodular(rng, n, density=0.5):
    pairs = np.array([(p, q) for p in range(n) for q in range(p + 1, n) if rng.random() < density],
                     dtype=np.int64).reshape(-1, 2)
    t = rng.normal(size=(len(pairs), 4))
    # push theta01 + theta10 up until the table is submodular
    slack = t[:, 1] + t[:, 2] - t[:, 0] - t[:, 3]
    t[:, 1] -= np.minimum(slack, 0) - rng.exponential(0.5, len(pairs))
    return BinarySubproblem(np.arange(n), rng.normal(size=(n, 2)), pairs, t, float(rng.normal()))


def brute_min(sub):
    return min(sub.energy(np.array(x)) for x in itertools.product([0, 1], repeat=sub.n))


def test_solve_binary_matches_brute_force(rng):
    for _ in range(1000):
        sub = random_submodular(rng, int(rng.integers(1, 9)))
        x = solve_binary(sub)
        assert sub.energy(x) == pytest.approx(brute_min(sub), abs=1e-9)


def test_all_switch_costly_keeps():
    sub = BinarySubproblem(np.arange(4), np.array([[0.0, 2.8]] * 4), np.array([[0, 1], [1, 2]]),
                           np.zeros((2, 4)))
    assert solve_binary(sub).tolist() == [0, 0, 0, 0]


def test_two_pixel_hand_table():
    unary = np.array([[0.0, 1.0], [2.0, 0.0]])
    table = np.array([[0.0, 3.0, 1.5, 0.5]])
    sub = BinarySubproblem(np.arange(2), unary, np.array([[0, 1]]), table)
    energies = {x: sub.energy(np.array(x)) for x in itertools.product([0, 1], repeat=2)}
    # (0,0): 2, (0,1): 3, (1,0): 4.5, (1,1): 1.5
    assert energies == {(0, 0): 2.0, (0, 1): 3.0, (1, 0): 4.5, (1, 1): 1.5}
    assert tuple(solve_binary(sub)) == (1, 1)


def test_non_submodular_rejected():
    sub = BinarySubproblem(np.arange(2), np.zeros((2, 2)), np.array([[0, 1]]), np.array([[1.0, 0.0, 0.0, 1.0]]))
    with pytest.raises(NotSubmodularError):
        solve_binary(sub)
