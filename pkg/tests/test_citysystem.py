import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from centralplace.citysystem import (
    CitySystem,
    EmptySystemError,
    extract_cities,
    l_partition,
    random_l_partition,
)
from centralplace.geometry import RingGeography


def ring_system(angles, sizes, presence=None):
    return CitySystem.from_unsorted(np.arange(len(sizes)), sizes, metric="ring", angles=np.asarray(angles, float), presence=presence)


def random_system(rng, U):
    xy = rng.random((U, 2))
    sizes = rng.pareto(1.2, U) + 1.0
    return CitySystem.from_unsorted(np.arange(U), sizes, metric="euclidean", xy=xy)


FOUR = ring_system([0, math.pi, math.pi / 2, 3 * math.pi / 2], [10, 8, 5, 3])


# extraction -------------------------------------------------------------------


def test_extract_uniform_all_cities():
    h = np.full((8, 2), 1000 / 16)
    sys = extract_cities(h)
    assert sys.U == 8
    np.testing.assert_allclose(sys.sizes, 125.0)
    # ties ranked by ascending location
    np.testing.assert_array_equal(sys.ids, np.arange(8))


def test_extract_two_locations():
    h = np.zeros((10, 2))
    h[3] = (100.0, 400.0)
    h[7] = (300.0, 200.0)
    sys = extract_cities(h, RingGeography(10))
    np.testing.assert_array_equal(sys.ids, [3, 7])
    assert sys.distance(0, 1) == pytest.approx(4 * 2 * math.pi / 10)


def test_extract_ignores_numerical_dust():
    h = np.zeros((6, 1))
    h[[0, 3], 0] = 500.0
    dusty = h.copy()
    dusty[[1, 2, 4, 5], 0] = 1e-13
    a, b = extract_cities(h, eps_city=0.0), extract_cities(dusty)
    np.testing.assert_array_equal(a.ids, b.ids)


def test_extract_presence_threshold():
    h = np.zeros((4, 2))
    h[0] = (500.0, 1e-12)
    h[2] = (0.0, 500.0)
    sys = extract_cities(h)
    np.testing.assert_array_equal(sys.presence, [[True, False], [False, True]])


def test_extract_errors():
    with pytest.raises(EmptySystemError):
        extract_cities(np.zeros((3, 1)))
    with pytest.raises(ValueError):
        extract_cities(np.ones((3, 1)), RingGeography(4))


@settings(max_examples=30, deadline=None)
@given(R=st.integers(2, 30), k=st.integers(1, 29), seed=st.integers(0, 10_000))
def test_extract_rotation_isomorphic(R, k, seed):
    rng = np.random.default_rng(seed)
    h = rng.random((R, 3)) * (rng.random((R, 1)) < 0.5)
    h[0] += 1.0
    a = extract_cities(h)
    b = extract_cities(np.roll(h, k, axis=0))
    assert a.U == b.U
    np.testing.assert_array_equal(np.sort(a.sizes), np.sort(b.sizes))
    # same multiset of (size, presence) and identical distance structure up to reordering
    ka = sorted(zip(a.sizes, map(tuple, a.presence)))
    kb = sorted(zip(b.sizes, map(tuple, b.presence)))
    assert ka == kb
    np.testing.assert_allclose(np.sort(a.distances, axis=None), np.sort(b.distances, axis=None), atol=1e-12)


def test_city_system_validation():
    with pytest.raises(EmptySystemError):
        CitySystem(ids=np.array([]), sizes=np.array([]))
    with pytest.raises(ValueError):
        CitySystem(ids=np.arange(2), sizes=np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        CitySystem(ids=np.arange(1), sizes=np.array([0.0]))
    with pytest.raises(KeyError):
        FOUR.index_of(99)


def test_from_unsorted_breaks_size_ties_by_id():
    sys = CitySystem.from_unsorted(np.array([5, 2, 9]), [1.0, 1.0, 3.0], metric="ring", angles=np.zeros(3))
    np.testing.assert_array_equal(sys.ids, [9, 2, 5])


# choice cities ----------------------------------------------------------------


def test_choice_cities_and_diversity():
    B = np.array([[1, 1, 1], [1, 0, 1], [1, 0, 0]], dtype=bool)
    sys = ring_system([0, 1, 2], [3, 2, 1], presence=B)
    np.testing.assert_array_equal(sys.choice_cities(0), [0, 1, 2])
    np.testing.assert_array_equal(sys.choice_cities(1), [0])
    np.testing.assert_array_equal(sys.industrial_diversity(), [3, 2, 1])
    assert sys.industrial_diversity(1) == 2
    assert sys.industrial_diversity().sum() == sys.choice_counts().sum()


def test_choice_cities_without_presence():
    with pytest.raises(ValueError):
        FOUR.choice_cities(0)


# L-partition ------------------------------------------------------------------


def test_three_cities_l3():
    sys = ring_system([0, 2, 4], [3, 2, 1])
    tree = l_partition(sys, L=3)
    assert [c.members.tolist() for c in tree.root.children] == [[0], [1], [2]]
    assert all(not c.children for c in tree.root.children)


def test_four_city_l2_example():
    tree = l_partition(FOUR, L=2)
    root = tree.root
    np.testing.assert_array_equal(root.centers, [0, 1])
    # both equidistant cities go to the larger center
    assert [c.members.tolist() for c in root.children] == [[0, 2, 3], [1]]
    inner = root.children[0]
    assert [c.members.tolist() for c in inner.children] == [[0, 3], [2]]
    assert tree.hinterland(0) is root
    assert tree.hinterland(2).depth == 2
    h3 = tree.hinterland(3)
    assert h3.members.tolist() == [3] and h3.depth == 3
    with pytest.raises(KeyError):
        tree.hinterland(4)


def test_single_city_tree():
    sys = ring_system([0.0], [5.0])
    tree = l_partition(sys)
    assert tree.root.children == [] and tree.hinterland(0) is tree.root


def test_l_must_be_at_least_two():
    with pytest.raises(ValueError):
        l_partition(FOUR, L=1)


def test_depth_cap():
    sys = random_system(np.random.default_rng(0), 120)
    tree = l_partition(sys, L=2, max_depth=2)
    assert max(c.depth for c in tree.cells()) == 2


@settings(max_examples=25, deadline=None)
@given(U=st.integers(1, 200), L=st.integers(2, 5), depth=st.integers(1, 6), seed=st.integers(0, 10_000))
def test_partition_well_formed(U, L, depth, seed):
    sys = random_system(np.random.default_rng(seed), U)
    tree = l_partition(sys, L=L, max_depth=depth)
    D = sys.distances
    for cell in tree.cells():
        assert np.all(np.diff(cell.members) > 0)
        if not cell.children:
            continue
        parts = np.concatenate([c.members for c in cell.children])
        np.testing.assert_array_equal(np.sort(parts), cell.members)
        for j, (ctr, child) in enumerate(zip(cell.centers, cell.children)):
            assert child.head == ctr and ctr in child.members
            for u in child.members:
                if u in cell.centers:
                    continue
                # brute-force nearest center, ties to the larger one
                best = min(range(len(cell.centers)), key=lambda k: (D[u, cell.centers[k]], k))
                assert best == j
    leaves = np.concatenate([c.members for c in tree.leaves()])
    np.testing.assert_array_equal(np.sort(leaves), np.arange(U))


@settings(max_examples=25, deadline=None)
@given(U=st.integers(2, 150), seed=st.integers(0, 10_000))
def test_random_partition_keeps_centers_and_sizes(U, seed):
    rng = np.random.default_rng(seed)
    sys = random_system(rng, U)
    tree = l_partition(sys, L=3)
    cf = random_l_partition(tree, rng)
    for a, b in zip(tree.cells(), cf.cells()):
        assert a.size == b.size and a.depth == b.depth and a.head == b.head
        assert a.head in b.members
        np.testing.assert_array_equal(a.centers, b.centers)
        if b.children:
            parts = np.concatenate([c.members for c in b.children])
            np.testing.assert_array_equal(np.sort(parts), b.members)
    assert [c.size for c in tree.hinterland_cells()] == [c.size for c in cf.hinterland_cells()]


def test_random_partition_varies_with_stream():
    sys = random_system(np.random.default_rng(1), 60)
    tree = l_partition(sys, L=3)
    a = random_l_partition(tree, np.random.default_rng(0))
    b = random_l_partition(tree, np.random.default_rng(0))
    c = random_l_partition(tree, np.random.default_rng(1))
    key = lambda t: [x.members.tolist() for x in t.cells()]
    assert key(a) == key(b) and key(a) != key(c)


def test_hinterland_cells_rank_order():
    tree = l_partition(FOUR, L=2)
    cells = tree.hinterland_cells()
    assert [c.head for c in cells] == [0, 1, 2]
    assert [c.size for c in tree.hinterland_cells(min_size=2)] == [4]
