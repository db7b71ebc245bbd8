import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import percolation
from branching import tree_cluster_distribution, tree_touch_distribution
from config import PreconditionError
from conftest import path_graph, to_networkx
from graphs import (build_custom, build_cycle, build_lamplighter_segment, build_torus,
                    build_tree_ball, edge_id)
from montecarlo import Estimate


@pytest.fixture
def barbell():
    """Two triangles joined by the bridge (2, 3)."""
    return build_custom(6, [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (3, 5), (4, 5)])


def test_union_find():
    uf = percolation.UnionFind(6)
    uf.union(0, 1)
    uf.union(2, 3)
    uf.union(1, 3)
    labels = uf.labels()
    assert len({labels[0], labels[1], labels[2], labels[3]}) == 1
    assert labels[4] != labels[5]
    assert uf.find(3) == uf.find(0)


def test_configuration_counts(barbell):
    open_edges = np.ones(barbell.edge_count, dtype=bool)
    open_edges[edge_id(barbell, 2, 3)] = False
    cfg = percolation.configuration(barbell, open_edges)
    assert cfg.size(0) == 3 and cfg.size(5) == 3
    assert cfg.touched(0) == 4 and cfg.touched(4) == 4
    assert not cfg.connected(2, 3)
    assert sorted(cfg.cluster(4).tolist()) == [3, 4, 5]
    with pytest.raises(PreconditionError):
        percolation.configuration(barbell, open_edges[:-1])


def test_two_ghost_event_by_hand(barbell):
    open_edges = np.ones(barbell.edge_count, dtype=bool)
    bridge = edge_id(barbell, 2, 3)
    open_edges[bridge] = False
    cfg = percolation.configuration(barbell, open_edges)
    assert percolation.two_ghost_event(cfg, bridge, 4)
    assert percolation.two_ghost_event(cfg, (2, 3), 1)
    assert not percolation.two_ghost_event(cfg, bridge, 5)
    assert not percolation.two_ghost_event(cfg, (0, 1), 1)

    # closing (0, 1) still leaves 0 and 1 joined through 2
    open_edges[edge_id(barbell, 0, 1)] = False
    cfg = percolation.configuration(barbell, open_edges)
    assert not percolation.two_ghost_event(cfg, (0, 1), 1)


def test_extreme_p():
    g = build_tree_ball(3, 3)
    closed = percolation.sample(g, 0.0, seed=5)
    assert np.all(closed.cluster_sizes[closed.cluster_labels] == 1)
    assert [closed.touched(v) for v in range(g.vertex_count)] == g.degrees.tolist()
    full = percolation.sample(g, 1.0, seed=5)
    assert full.size(0) == g.vertex_count
    assert full.touched(7) == g.edge_count
    with pytest.raises(PreconditionError):
        percolation.sample(g, 1.2, seed=5)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 64 - 1), st.floats(0.05, 0.95))
def test_clusters_match_networkx(seed, p):
    g = build_torus([5, 6])
    cfg = percolation.sample(g, p, seed)
    G = nx.Graph()
    G.add_nodes_from(range(g.vertex_count))
    G.add_edges_from(g.edges[cfg.open_edges].tolist())
    for component in nx.connected_components(G):
        members = sorted(component)
        v = members[0]
        assert cfg.size(v) == len(members)
        assert sorted(cfg.cluster(v).tolist()) == members
        touched = sum(1 for a, b in g.edges.tolist() if a in component or b in component)
        assert cfg.touched(v) == touched
        assert cfg.touched(v) >= cfg.size(v) - 1


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 64 - 1))
def test_exploration_agrees_with_the_full_configuration(seed):
    for g in (build_torus([6, 6]), build_tree_ball(3, 4), build_lamplighter_segment(3)):
        cfg = percolation.sample(g, 0.5, seed)
        for v in (0, g.vertex_count - 1):
            view = percolation.explore_cluster(g, v, 0.5, seed)
            assert view.members.tolist() == cfg.cluster(v).tolist()
            assert view.touched == cfg.touched(v)
            assert view.size == cfg.size(v)


def test_coupling_is_monotone_in_p():
    g = build_torus([8, 8])
    for seed in range(20):
        low, high = percolation.sample(g, 0.3, seed), percolation.sample(g, 0.6, seed)
        assert np.all(high.open_edges[low.open_edges])
        assert np.all(high.cluster_sizes[high.cluster_labels] >= low.cluster_sizes[low.cluster_labels])
    assert percolation.monotone_in_p(build_tree_ball(3, 4), 0, [0.6, 0.2, 0.4], 200, seed=3)


def test_cluster_stats_shape():
    stats = percolation.cluster_stats(build_cycle(10), 0, 0.5, 50, seed=1)
    assert stats.shape == (50, 2)
    assert np.all(stats[:, 0] >= 1)
    assert np.all(stats[:, 1] >= stats[:, 0])


def test_tau_and_kappa_edge_cases():
    g = build_torus([6, 6])
    assert percolation.tau_hat(g, 3, 3, 0.2, 100, seed=1).mean == 1.0
    assert percolation.kappa_hat(g, 0, 0.2, 0, 100, seed=1).mean == 1.0
    assert percolation.kappa_hat(g, 0, 1.0, 3, 100, seed=1).mean == 1.0
    assert percolation.tau_hat(g, 0, 1, 0.0, 100, seed=1).mean == 0.0
    with pytest.raises(PreconditionError):
        percolation.kappa_hat(g, 0, 0.5, -1, 100, seed=1)
    with pytest.raises(PreconditionError):
        percolation.tau_hat(g, 0, 1, 0.5, 0, seed=1)


@pytest.mark.slow
def test_tree_two_point_function():
    g = build_tree_ball(3, 5)
    grandchild = 4
    est = percolation.tau_hat(g, 0, grandchild, 0.5, 20_000, seed=77)
    assert abs(est.mean - 0.25) < 0.02


def test_isolated_root_probability():
    g = build_tree_ball(3, 4)
    stats = percolation.cluster_stats(g, 0, 0.5, 10_000, seed=8)
    assert abs(np.mean(stats[:, 0] == 1) - 1 / 8) < 0.02


def test_cluster_tail_at_p_zero():
    g = build_tree_ball(3, 3)
    assert percolation.cluster_tail_hat(g, 0, 0.0, 3, 50, seed=1).mean == 1.0
    assert percolation.cluster_tail_hat(g, 0, 0.0, 4, 50, seed=1).mean == 0.0
    assert percolation.cluster_tail_hat(g, 0, 0.3, 1, 50, seed=1).mean == 1.0
    with pytest.raises(PreconditionError):
        percolation.cluster_tail_hat(g, 0, 0.3, 0, 50, seed=1)
    with pytest.raises(PreconditionError, match="quantity"):
        percolation.cluster_tail_hat(g, 0, 0.3, 2, 50, seed=1, quantity='clusters')


@pytest.mark.slow
def test_cluster_tail_matches_the_branching_oracle():
    g = build_tree_ball(3, 5)
    exact = tree_cluster_distribution(3, 5, 0.45)
    for n in (2, 4, 8):
        est = percolation.cluster_tail_hat(g, 0, 0.45, n, 20_000, seed=1234, quantity='vertices')
        assert abs(est.mean - exact.tail(n)) < 0.025


@pytest.mark.slow
def test_touched_edge_tail_matches_the_branching_oracle():
    g = build_tree_ball(3, 10)
    exact = tree_touch_distribution(3, 10, 0.5)
    assert exact.tail(10) == pytest.approx(0.65625, abs=1e-9)
    for n in (4, 10, 20):
        est = percolation.cluster_tail_hat(g, 0, 0.5, n, 20_000, seed=4321, confidence=0.999)
        assert est.ci_low <= exact.tail(n) <= est.ci_high


def test_bootstrap_functional():
    g = build_tree_ball(3, 4)
    est = percolation.bootstrap_functional(g, 0, 0.4, 0.0, 200, seed=2)
    assert est.mean == pytest.approx(math.e)
    assert est.ci_low == pytest.approx(math.e)
    with pytest.raises(PreconditionError):
        percolation.bootstrap_functional(g, 0, 0.4, 1.0, 200, seed=2)


def test_implied_c6_solves_the_bootstrap_inequality():
    for c5 in (0.5, 1.0, 3.0):
        c6 = percolation.implied_c6(c5)
        assert c6 == pytest.approx(c5 * math.sqrt(1 + c6))


def test_bootstrap_report():
    g = build_tree_ball(3, 5)
    rep = percolation.bootstrap_report(g, 0, 0.4, 0.5, 400, seed=3, c5=10.0)
    assert rep['conditional']
    assert rep['c6'] == pytest.approx(percolation.implied_c6(10.0))
    assert len(rep['estimates']) == 3
    assert rep['lhs'] < rep['rhs']
    assert rep['pass'] == rep['stable']


def test_insertion_tolerance_check():
    g = build_torus([8, 8])
    est = percolation.tau_hat(g, 0, 1, 0.5, 2000, seed=4)
    assert percolation.insertion_tolerance_check(g, 0, 1, 0.5, est)['pass']
    same = percolation.tau_hat(g, 0, 0, 0.5, 100, seed=4)
    rep = percolation.insertion_tolerance_check(g, 0, 0, 0.5, same)
    assert rep['pass'] and rep['rhs'] == 1.0
    never = Estimate.proportion(np.zeros(100, dtype=bool))
    assert not percolation.insertion_tolerance_check(g, 0, 1, 0.5, never)['pass']
    with pytest.raises(PreconditionError):
        percolation.insertion_tolerance_check(g, 0, 1, 0.5, Estimate.proportion([True] * 5))


def test_ghost_bound_values():
    assert percolation.ghost_bound(4, 0.5, 672_400) == pytest.approx(0.4)
    for n in (1, 7, 100):
        ratio = percolation.ghost_bound(3, 0.3, n) / percolation.ghost_bound(3, 0.3, 4 * n)
        assert ratio == pytest.approx(2.0)


def test_two_ghost_sweep_on_the_tree():
    g = build_tree_ball(3, 8)
    reports = percolation.two_ghost_sweep(g, 0.5, [4, 16], 500, seed=10)
    assert [r['n'] for r in reports] == [4, 16]
    assert all(r['pass'] for r in reports)
    assert reports[1]['vacuous']
    assert reports[1]['bound'] == pytest.approx(61.5)
    assert reports[0]['lhs'] >= reports[1]['lhs']
    assert reports[0]['edge'] == [0, 1]


def test_two_ghost_at_full_density_never_fires():
    rep = percolation.two_ghost_check(build_torus([6, 6]), 1.0, 2, 100, seed=1)
    assert rep['lhs'] == 0.0
    assert rep['pass']


def test_two_ghost_preconditions():
    with pytest.raises(PreconditionError):
        percolation.two_ghost_check(build_torus([6, 6]), 0.0, 4, 100, seed=1)
    with pytest.raises(PreconditionError):
        percolation.two_ghost_check(build_lamplighter_segment(3), 0.5, 4, 100, seed=1)
    with pytest.raises(PreconditionError):
        percolation.two_ghost_check(path_graph(5), 0.5, 4, 100, seed=1)
    with pytest.raises(PreconditionError):
        percolation.two_ghost_check(build_torus([6, 6]), 0.5, 4, 5, seed=1)


def test_surgery_near_full_density_is_vacuous():
    rep = percolation.surgery_check(build_torus([8, 8]), 0.99, 4, 2, 200, seed=6)
    assert rep['vacuous']
    assert rep['pass']


@pytest.mark.slow
def test_surgery_on_the_tree():
    g = build_tree_ball(3, 8)
    reports = percolation.surgery_sweep(g, 0.45, [4, 8], [1, 2, 3], 2000, seed=42)
    assert len(reports) == 6
    assert all(r['pass'] for r in reports)
    by_key = {(r['n'], r['k']): r for r in reports}
    rep = by_key[(8, 3)]
    assert rep['weight'] == pytest.approx(1 + 1 / 0.45 + 1 / 0.45 ** 2)
    assert rep['literal_lhs'] == pytest.approx(rep['weight'] * rep['lhs'])
    assert len(rep['estimates']) == 3


def test_surgery_preconditions():
    g = build_torus([6, 6])
    with pytest.raises(PreconditionError):
        percolation.surgery_check(g, 1.0, 4, 2, 100, seed=1)
    with pytest.raises(PreconditionError):
        percolation.surgery_check(g, 0.5, 4, 0, 100, seed=1)


@pytest.mark.parametrize("g", [build_cycle(9), build_torus([4, 5]), build_tree_ball(3, 3)],
                         ids=lambda g: g.family_tag)
@pytest.mark.parametrize("weight", ['none', 'degree'])
def test_mtp_distance(g, weight):
    for r in (1, 2):
        rep = percolation.mtp_distance_check(g, r, weight)
        assert rep['pass']
    assert rep['transitive'] == (g.family_tag != 'tree_ball')


def test_mtp_distance_rejects_unknown_weights():
    with pytest.raises(PreconditionError):
        percolation.mtp_distance_check(build_cycle(5), 1, 'volume')


@pytest.mark.parametrize("g", [build_torus([5, 5]), build_tree_ball(3, 3)],
                         ids=lambda g: g.family_tag)
def test_mtp_regrouping_identity(g):
    rep = percolation.mtp_check(g, 0.4, [1, 2, 3], 30, seed=9)
    assert rep['pass']
    assert set(rep['per_k']) == {'1', '2', '3'}
    assert 0.0 < rep['lhs'] <= 1.0


def test_mtp_walk_mass_is_one_at_full_density():
    g = build_torus([4, 4])
    rep = percolation.mtp_check(g, 1.0, [2], 5, seed=1)
    assert rep['lhs'] == pytest.approx(1.0)


def test_optimum_check():
    rep = percolation.optimum_check(1.0, 0.5, 1.0, 100)
    assert rep['pass']
    assert abs(rep['lhs'] - rep['rhs']) <= 1e-3 * rep['rhs']
    assert rep['s_star'] == pytest.approx(200 ** (1 / 1.5))
    flat = percolation.optimum_check(0.0, 0.5, 1.0, 3)
    assert flat['pass']
    with pytest.raises(PreconditionError):
        percolation.optimum_check(1.0, 0.0, 1.0, 5)


def test_kappapk_bound_at_k_zero():
    g = build_tree_ball(3, 5)
    rep = percolation.kappapk_bound_check(g, 0.4, 0, 0.5, 1.0, 1.0, 200, seed=2)
    assert rep['lhs'] == pytest.approx(1.0)
    assert rep['rhs'] >= 2.0
    assert rep['pass']
    assert rep['conditional']
    assert rep['optimum'] is None


def test_kappapk_bound_reports_the_optimum():
    g = build_torus([6, 6])
    rep = percolation.kappapk_bound_check(g, 0.3, 4, 0.5, 1.0, 0.1, 200, seed=2)
    assert rep['optimum']['check'] == 'optimum'
    assert 0.0 <= rep['lhs'] <= 1.0


def test_theorem_chain_on_the_torus():
    g = build_torus([6, 6])
    rep = percolation.theorem_chain_check(g, 0, 1, 0.5, 4, 2, 500, seed=12)
    assert rep['pass']
    assert set(rep['links']) == {'kappa_le_walk', 'vertex_tail_le_edge_tail', 'insertion_tail'}
    assert rep['pc_lower_bound'] == pytest.approx(1 / 3)
    assert rep['distance'] == 1


def test_theorem_chain_flags_leaves():
    g = build_tree_ball(3, 4)
    rep = percolation.theorem_chain_check(g, 0, 4, 0.5, 3, 2, 300, seed=12)
    assert 'vertex_tail_le_edge_tail' not in rep['links']
    assert rep['flags']
    assert rep['pass']


def test_parallel_sampling_matches_serial():
    g = build_tree_ball(3, 5)
    serial = percolation.cluster_stats(g, 0, 0.45, 200, seed=31)
    split = percolation.cluster_stats(g, 0, 0.45, 200, seed=31, replicas=4)
    pooled = percolation.cluster_stats(g, 0, 0.45, 200, seed=31, replicas=4, workers=2)
    assert np.array_equal(serial, split)
    assert np.array_equal(serial, pooled)


def test_networkx_view_of_open_subgraph():
    g = build_torus([4, 4])
    cfg = percolation.sample(g, 1.0, seed=0)
    assert nx.is_connected(to_networkx(g))
    assert cfg.size(0) == 16
