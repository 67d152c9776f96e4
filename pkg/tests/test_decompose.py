from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpctrees.decompose import (Decomposition, DegreeBoundError, ball_sizes, general_layer_budget,
                                mpc_decompose_bounded, mpc_decompose_general, peel_step, phase_budget,
                                renumbered, sequential_decompose, simulate_peels_on_ball,
                                validate_decomposition)
from mpctrees.forest import Forest, TreeGenSpec, generate, load_forest
from mpctrees.runtime import MpcConfig, ball_from_graph, loglog
from mpctrees.verify import dense_rank, oracle_compare_layers, reference_layers

KINDS = st.sampled_from(["path", "star", "caterpillar", "spider", "spider(5)", "complete_kary(2)",
                         "complete_kary(4)", "random_pruefer", "random_bounded(3)", "random_bounded(4)"])


def tree(spec):
    return generate(TreeGenSpec.parse(spec))


def test_path_single_step():
    f = tree("path:9:0")
    assert peel_step(f, np.ones(9, dtype=bool)).all()
    assert sequential_decompose(f).L == 1


def test_star_layers():
    f = tree("star:6:0")
    assert sequential_decompose(f).layer == {1: 2, 2: 1, 3: 1, 4: 1, 5: 1, 6: 1}


def test_spider_layers():
    f = tree("spider(3):13:0")
    layer = sequential_decompose(f).layer
    assert layer[1] == 2
    assert all(layer[v] == 1 for v in range(2, 14))


def test_single_node_and_single_edge():
    assert sequential_decompose(Forest([4], [])).layer == {4: 1}
    # in an isolated edge the lower ID goes first so no layer holds a 2-node path
    assert sequential_decompose(load_forest("5 2\n")).layer == {2: 1, 5: 2}


def test_complete_binary_tree_frozen_profile():
    f = tree("complete_kary(2):1023:0")
    d = sequential_decompose(f)
    assert d.L == 9 <= 60
    assert Counter(d.layers.tolist()) == {1: 512, 2: 256, 3: 128, 4: 64, 5: 32, 6: 16, 7: 8, 8: 4, 9: 3}


def test_random_trees_frozen_layer_counts():
    assert sequential_decompose(tree("random_pruefer:1000:0")).L == 6
    assert sequential_decompose(tree("random_bounded(4):1000:0")).L == 9


@settings(max_examples=150, deadline=None)
@given(kind=KINDS, n=st.integers(1, 250), seed=st.integers(0, 10**6), l=st.integers(2, 5))
def test_sequential_matches_reference(kind, n, seed, l):
    if kind == "random_pruefer" and n < 3:
        n = 3
    f = tree(f"{kind}:{n}:{seed}")
    d = sequential_decompose(f, l)
    assert d.layer == reference_layers(f, l)
    assert validate_decomposition(f, d).ok


@settings(max_examples=80, deadline=None)
@given(kind=KINDS, n=st.integers(3, 400), seed=st.integers(0, 10**6))
def test_every_step_removes_an_eighth(kind, n, seed):
    f = tree(f"{kind}:{n}:{seed}")
    trace = []
    sequential_decompose(f, 3, trace)
    for alive, removed in trace:
        assert 8 * removed >= alive


def test_validator_catches_short_path():
    f = load_forest("1 2\n")
    rep = validate_decomposition(f, Decomposition.from_map(f, {1: 1, 2: 1}))
    assert rep.clauses() == {"path"}


def test_validator_catches_degree():
    f = tree("star:4:0")
    rep = validate_decomposition(f, Decomposition.from_map(f, {v: 1 for v in range(1, 5)}))
    assert "degree" in rep.clauses()
    assert any(v.subject == 1 and v.clause == "degree" for v in rep.violations)


def test_validator_catches_two_parents_and_bad_layer():
    f = tree("path:3:0")
    rep = validate_decomposition(f, Decomposition.from_map(f, {1: 2, 2: 1, 3: 2}))
    assert "parent" in rep.clauses()
    rep = validate_decomposition(f, Decomposition.from_map(f, {1: 0, 2: 1, 3: 1}))
    assert "layer" in rep.clauses()


def test_decomposition_json_roundtrip():
    f = tree("random_pruefer:50:2")
    d = sequential_decompose(f)
    back = Decomposition.from_json(f, d.to_json())
    assert back.layer == d.layer and back.L == d.L


# -- simulation on balls -----------------------------------------------------------------


def _ball(f, center, radius):
    return ball_from_graph(f.adjacency, center, radius)


def test_full_ball_matches_truncated_sequence():
    f = tree("random_bounded(3):60:1")
    full = _ball(f, 1, 60)
    ref = reference_layers(f)
    for steps in (1, 2, 3):
        got = simulate_peels_on_ball(full, steps)
        assert got == {v: x for v, x in ref.items() if x <= steps}


def test_path_center_certified():
    f = tree("path:40:0")
    got = simulate_peels_on_ball(_ball(f, 20, 4), 4)
    assert got[20] == 1


def test_boundary_node_not_certified_by_itself():
    f = tree("path:40:0")
    b = _ball(f, 20, 4)
    got = simulate_peels_on_ball(b, 4)
    assert 16 not in got and 24 not in got


def test_layer_base_offsets():
    f = tree("star:6:0")
    assert simulate_peels_on_ball(_ball(f, 1, 3), 3, layer_base=10) == {1: 12, 2: 11, 3: 11, 4: 11, 5: 11, 6: 11}


@settings(max_examples=150, deadline=None)
@given(kind=KINDS, n=st.integers(3, 150), seed=st.integers(0, 10**6),
       radius=st.integers(1, 8), steps=st.integers(1, 8), pick=st.integers(0, 10**6))
def test_certified_layers_are_never_wrong(kind, n, seed, radius, steps, pick):
    f = tree(f"{kind}:{n}:{seed}")
    ref = reference_layers(f)
    center = int(f.ids[pick % f.n])
    got = simulate_peels_on_ball(_ball(f, center, radius), steps)
    for v, x in got.items():
        assert ref[v] == x


@settings(max_examples=60, deadline=None)
@given(kind=KINDS, n=st.integers(3, 150), seed=st.integers(0, 10**6), pick=st.integers(0, 10**6))
def test_wide_vision_certifies_window(kind, n, seed, pick):
    # with radius l * steps a node removed within the window is always certified
    f = tree(f"{kind}:{n}:{seed}")
    ref = reference_layers(f)
    center = int(f.ids[pick % f.n])
    steps = 4
    got = simulate_peels_on_ball(_ball(f, center, 3 * steps + 1), steps)
    if ref[center] <= steps:
        assert got[center] == ref[center]


# -- MPC algorithms ---------------------------------------------------------------------------


def test_ball_sizes_match_bfs():
    f = tree("random_bounded(4):300:5")
    alive = np.ones(f.n, dtype=bool)
    alive[::7] = False
    for r in (1, 2, 3):
        sizes = ball_sizes(f, alive, r)
        live = set(f.ids[alive].tolist())
        for i in range(0, f.n, 17):
            want = len(ball_from_graph(f.adjacency, int(f.ids[i]), r, live).nodes) if alive[i] else 0
            assert sizes[i] == want


def test_bounded_rejects_high_degree():
    with pytest.raises(DegreeBoundError):
        mpc_decompose_bounded(tree("star:50:0"))


@settings(max_examples=60, deadline=None)
@given(kind=st.sampled_from(["path", "caterpillar", "spider", "complete_kary(2)", "random_bounded(3)",
                             "random_bounded(4)", "random_bounded(8)"]),
       n=st.integers(1, 400), seed=st.integers(0, 10**6))
def test_bounded_equals_sequential(kind, n, seed):
    f = tree(f"{kind}:{n}:{seed}")
    d, log = mpc_decompose_bounded(f)
    assert oracle_compare_layers(f, d.layer).ok
    # every simulation costs l rounds and at least one is needed
    assert log.rounds >= 3


def test_bounded_round_count_on_path():
    d, log = mpc_decompose_bounded(tree("path:65536:0"))
    # one simulation of one step, l rounds
    assert d.L == 1 and log.rounds == 3


@settings(max_examples=60, deadline=None)
@given(kind=KINDS, n=st.integers(1, 500), seed=st.integers(0, 10**6))
def test_general_is_valid(kind, n, seed):
    if kind == "random_pruefer" and n < 3:
        n = 3
    f = tree(f"{kind}:{n}:{seed}")
    d, log = mpc_decompose_general(f)
    assert validate_decomposition(f, d).ok
    assert d.L <= general_layer_budget(f.n, MpcConfig())
    for p in d.phases:
        assert p.alive_end * p.budget <= p.alive_start
        assert p.budget == phase_budget(f.n, p.phase, MpcConfig().local_cap(f.n))


@settings(max_examples=40, deadline=None)
@given(kind=KINDS, n=st.integers(3, 500), seed=st.integers(0, 10**6))
def test_general_without_stuck_nodes_matches_after_renumbering(kind, n, seed):
    f = tree(f"{kind}:{n}:{seed}")
    cfg = MpcConfig(budget_override=10**9, enforce_caps=False)
    d, _ = mpc_decompose_general(f, cfg)
    assert oracle_compare_layers(f, d.layer, renumber=True).ok
    assert dict(zip(f.ids.tolist(), renumbered(d).tolist())) == dense_rank(d.layer)


def test_general_path_empties_in_step_one():
    d, _ = mpc_decompose_general(tree("path:8:0"))
    assert d.phases == [] and d.L == 1


def test_general_star():
    f = tree("star:10000:0")
    d, _ = mpc_decompose_general(f)
    assert validate_decomposition(f, d).ok
    assert len(set(d.layers[1:].tolist())) == 1
    assert d.layers[0] > d.layers[1]


def test_general_layer_base_moves_in_windows():
    f = tree("random_bounded(4):20000:3")
    d, _ = mpc_decompose_general(f)
    ll = loglog(f.n)
    assert d.phases
    # step-one peels, then per half-phase whole windows of 2**r layers plus the plain peels
    sims = ll + MpcConfig().sims_per_phase_extra
    per_half = sims * 2**ll + MpcConfig().peel_steps_2d()
    assert d.phases[0].layer_base <= ll + 2 * per_half
    assert general_layer_budget(f.n, MpcConfig()) == ll + (ll + 2) * 2 * sims * 2**ll


def test_phase_budget():
    assert phase_budget(2**16, 1, 256) == 16
    assert phase_budget(2**16, 2, 256) == 256
    assert phase_budget(2**16, 3, 256) == 256
    assert phase_budget(2**20, 1, 1024) == 20
