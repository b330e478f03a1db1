import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coarse_op.space import (
    MetricError,
    ball,
    build_space,
    check_metric,
    cycle_space,
    diameter,
    distance_to_set,
    explicit_space,
    geometry_profile,
    graph_space,
    greedy_net,
    grid_space,
    neighborhood,
    path_space,
    random_geometric_space,
    set_distance,
    tree_space,
)
from oracles import greedy_net_by_hand


def _spaces():
    return [
        path_space(12),
        cycle_space(9),
        grid_space(2, 5),
        grid_space(1, 30),
        tree_space(2, 4),
        random_geometric_space(60, 0.3, seed=3),
        graph_space(5, [(0, 1, 2), (1, 2), (2, 3, 1.5), (3, 4)]),
    ]


def test_path_distance():
    assert path_space(4).dist[0, 3] == 3


def test_grid_profile_centre():
    g = grid_space(2, 3)
    assert g.n == 9
    assert geometry_profile(g, [1]) == [5]


def test_explicit_asymmetric_rejected():
    with pytest.raises(MetricError, match="asymmetric"):
        explicit_space([[0, 1], [2, 0]])


def test_explicit_triangle_violation_names_triple():
    with pytest.raises(MetricError, match="triangle"):
        explicit_space([[0, 1, 5], [1, 0, 1], [5, 1, 0]])


def test_not_uniformly_discrete():
    with pytest.raises(MetricError):
        explicit_space([[0, 0.5], [0.5, 0]])


def test_disconnected_graph_rejected():
    with pytest.raises(MetricError, match="disconnected"):
        graph_space(4, [(0, 1), (2, 3)])


def test_build_space_dispatch_and_unknown():
    assert build_space({"type": "grid", "params": {"N": 2, "side": 4}}).n == 16
    assert build_space({"type": "explicit", "matrix": [[0, 1], [1, 0]]}).n == 2
    with pytest.raises(MetricError, match="unknown space type"):
        build_space({"type": "torus", "params": {}})
    with pytest.raises(MetricError, match="missing parameter"):
        build_space({"type": "path", "params": {}})


def test_ball_examples():
    assert ball(path_space(5), 2, 1).tolist() == [1, 2, 3]
    g = grid_space(2, 5)
    centre = 12
    assert ball(g, centre, 2).size == 13
    for s in _spaces():
        for x in range(s.n):
            assert ball(s, x, 0).tolist() == [x]


def test_set_distance_examples():
    p6 = path_space(6)
    assert set_distance(p6, [0], [5]) == 5
    assert set_distance(p6, [0, 2], [2, 3]) == 0
    assert set_distance(path_space(10), [0, 1], [4, 9]) == 3
    with pytest.raises(ValueError):
        set_distance(p6, [], [1])


def test_neighborhood_examples():
    p5 = path_space(5)
    assert neighborhood(p5, [2], 0).tolist() == [2]
    assert neighborhood(p5, [2], 1).tolist() == [1, 2, 3]
    with pytest.raises(ValueError):
        neighborhood(p5, [2], -1)


@pytest.mark.parametrize("space", _spaces(), ids=lambda s: s.provenance["type"])
def test_neighborhood_composition(space):
    A = [0]
    for J in (1, 2):
        for K in (1, 2):
            nested = set(neighborhood(space, neighborhood(space, A, J), K).tolist())
            direct = set(neighborhood(space, A, J + K).tolist())
            if space.is_grid:
                assert nested == direct
            else:
                assert nested <= direct


def test_geometry_profile_examples():
    assert geometry_profile(path_space(7), [1]) == [3]
    assert geometry_profile(grid_space(1, 100), [2]) == [5]
    rg = random_geometric_space(80, 0.25, seed=11)
    brute = max(sum(1 for y in range(rg.n) if rg.dist[x, y] <= 3) for x in range(rg.n))
    assert geometry_profile(rg, [3]) == [brute]
    with pytest.raises(ValueError):
        geometry_profile(rg, [3, 1])


@pytest.mark.parametrize("space", _spaces(), ids=lambda s: s.provenance["type"])
def test_space_invariants(space):
    check_metric(space.dist)
    radii = sorted(set(np.unique(space.dist).tolist()))
    prof = geometry_profile(space, radii)
    assert all(a <= b for a, b in zip(prof, prof[1:]))
    assert geometry_profile(space, [space.diameter()]) == [space.n]


def test_greedy_net_examples():
    assert greedy_net(path_space(10), 2).tolist() == [0, 3, 6, 9]
    for s in _spaces():
        assert greedy_net(s, 0.5).tolist() == list(range(s.n))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, len(_spaces()) - 1), st.floats(1, 6))
def test_greedy_net_separated_and_dense(idx, r):
    space = _spaces()[idx]
    net = greedy_net(space, r)
    assert net.tolist() == greedy_net_by_hand(space.dist, r)
    sub = space.dist[np.ix_(net, net)]
    assert np.all(sub[~np.eye(len(net), dtype=bool)] > r)
    assert np.all(distance_to_set(space, net) <= r)


def test_triangle_sampling_large_space():
    s = random_geometric_space(260, 0.15, seed=2)
    check_metric(s.dist, exhaustive_limit=200, samples=20000)


def test_diameter_helper():
    p = path_space(10)
    assert diameter(p, [2, 7, 4]) == 5
    assert diameter(p, []) == 0
    assert p.diameter() == 9
