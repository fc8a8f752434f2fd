from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from macchiato.errors import EmptySourceMask, GridMismatchError
from macchiato.grid import (UNSET, BinaryMask, Grid, Neighborhood, RaterStack, SoftMask,
                            connected_components, crop, distance_map, global_distance_map,
                            neighbor_offsets, pad_background, subcrown_partition)

from conftest import random_stacks


def test_grid_defaults_and_validation():
    assert Grid((8,)).neighborhood is Neighborhood.N2
    assert Grid((3, 4)).neighborhood is Neighborhood.N8
    assert Grid((2, 3, 4)).neighborhood is Neighborhood.N26
    with pytest.raises(ValueError):
        Grid((3, 4), Neighborhood.SLICEWISE_2D)
    with pytest.raises(ValueError):
        Grid((0, 3))
    assert len(neighbor_offsets(Neighborhood.N4)) == 4
    assert len(neighbor_offsets(Neighborhood.N6)) == 6
    assert len(neighbor_offsets(Neighborhood.SLICEWISE_2D)) == 8


def test_masks_validate_values():
    g = Grid((4,))
    with pytest.raises(ValueError):
        BinaryMask(g, np.array([0, 2, 0, 1]))
    with pytest.raises(ValueError):
        SoftMask(g, np.array([0, 1.5, 0, 1]))
    with pytest.raises(ValueError):
        SoftMask(g, np.array([0, np.nan, 0, 1]))
    with pytest.raises(GridMismatchError):
        RaterStack(g, (BinaryMask.empty(g), BinaryMask.empty(Grid((5,)))))
    m = BinaryMask.from_indices(g, [1])
    with pytest.raises(ValueError):
        m.values[0] = True


def test_components_f1(f1_stack):
    lab = connected_components(f1_stack)
    assert lab.component_count == 1
    assert lab.members[1].tolist() == [2, 3, 4, 5]


def test_components_two_blobs_and_empty():
    a = np.zeros((6, 6), dtype=bool)
    a[0:2, 0:2] = True
    a[4:6, 4:6] = True
    assert connected_components(RaterStack.from_arrays([a])).component_count == 2
    empty = RaterStack.from_arrays([np.zeros((3, 3), bool)] * 2)
    assert connected_components(empty).component_count == 0


def test_components_diagonal_depends_on_neighborhood():
    a = np.eye(3, dtype=bool)
    assert connected_components(RaterStack.from_arrays([a])).component_count == 1
    assert connected_components(RaterStack.from_arrays([a], "n4")).component_count == 3


def test_labels_follow_scan_order():
    a = np.zeros(10, dtype=bool)
    a[[7, 8, 1, 2, 4]] = True
    lab = connected_components(RaterStack.from_arrays([a]))
    assert lab.labels.tolist() == [0, 1, 1, 0, 2, 0, 0, 3, 3, 0]


def test_distance_map_examples():
    g = Grid((8,))
    m = BinaryMask.from_indices(g, [2, 3, 4])
    d = distance_map(m, domain=[2, 3, 4, 5])
    assert d[[2, 3, 4, 5]].tolist() == [0, 0, 0, 1]
    assert (d[[0, 1, 6, 7]] == UNSET).all()
    g2 = Grid((3, 3))
    assert distance_map(BinaryMask.from_indices(g2, [0]))[4] == 1
    assert distance_map(BinaryMask.from_indices(g2, [0]), domain=[0])[0] == 0
    with pytest.raises(EmptySourceMask):
        distance_map(BinaryMask.empty(g))


def test_global_distance_map(f1_stack):
    D = global_distance_map(f1_stack)
    assert D[[2, 3, 4, 5]].tolist() == [1, 0, 0, 1]
    same = RaterStack.from_indices(Grid((8,)), [[1, 2, 3]] * 3)
    assert (global_distance_map(same)[[1, 2, 3]] == 0).all()
    single = RaterStack.from_indices(Grid((8,)), [[1, 2, 5]])
    assert (global_distance_map(single)[[1, 2, 5]] == 0).all()


def test_subcrown_partition_f1(f1_stack):
    lab = connected_components(f1_stack)
    D = global_distance_map(f1_stack, lab)
    part = subcrown_partition(f1_stack, D, lab, 1)
    got = [(e.td, e.raters(), e.voxels.tolist()) for e in part.entries]
    assert got == [(0, (0, 1), [3, 4]), (1, (0,), [2]), (1, (1,), [5])]
    assert [(td, v.tolist()) for td, v in part.crowns()] == [(0, [3, 4]), (1, [2, 5])]


def test_subcrown_identical_raters():
    st = RaterStack.from_indices(Grid((6,)), [[1, 2, 3]] * 3)
    lab = connected_components(st)
    part = subcrown_partition(st, global_distance_map(st, lab), lab, 1)
    assert len(part.entries) == 1
    assert part.entries[0].td == 0 and part.entries[0].group == 0b111


def test_empty_rater_excluded_from_distance_sum():
    st = RaterStack.from_indices(Grid((8,)), [[2, 3], [3, 4], []])
    D = global_distance_map(st)
    assert D[[2, 3, 4]].tolist() == [1, 0, 1]


def test_pad_and_crop(f1_stack):
    p = pad_background(f1_stack, [(0, 92)])
    assert p.grid.size == 100
    assert [m.indices() for m in p.masks] == [m.indices() for m in f1_stack.masks]
    q = pad_background(f1_stack, 5)
    assert [m.indices() for m in q.masks] == [[7, 8, 9], [8, 9, 10]]
    back = crop(q, 5)
    assert all(a == b for a, b in zip(back.masks, f1_stack.masks))
    assert all(a == b for a, b in zip(pad_background(f1_stack, 0).masks, f1_stack.masks))
    with pytest.raises(ValueError):
        pad_background(f1_stack, -1)


@pytest.mark.parametrize("seed", range(3))
def test_partition_properties(seed):
    for stack in random_stacks(seed, 60, max_dims=(3, 10, 10), max_support=60):
        lab = connected_components(stack)
        D = global_distance_map(stack, lab)
        covered = np.zeros(stack.grid.size, dtype=int)
        for c in range(1, lab.component_count + 1):
            vox = lab.members[c]
            part = subcrown_partition(stack, D, lab, c)
            keys = [(e.td, e.group) for e in part.entries]
            assert keys == sorted(keys)
            for e in part.entries:
                covered[e.voxels] += 1
                assert (D[e.voxels] == e.td).all()
                codes = (stack.matrix[:, e.voxels].T * (1 << np.arange(stack.K))).sum(axis=1)
                assert (codes == e.group).all()
            # D vanishes exactly on the intersection of the contributing raters
            sub = stack.matrix[:, vox]
            contributing = sub.any(axis=1)
            inter = sub[contributing].all(axis=0)
            assert ((D[vox] == 0) == inter).all()
            assert (D[vox] >= 0).all()
        assert (covered[stack.support] == 1).all()
        assert (covered[~stack.support] == 0).all()


def _neighbors(grid, idx):
    coords = np.array(np.unravel_index(idx, grid.shape3))
    for off in neighbor_offsets(grid.neighborhood):
        c = coords + off
        if (c >= 0).all() and (c < np.array(grid.shape3)).all():
            yield int(np.ravel_multi_index(c, grid.shape3))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["n4", "n8"]))
def test_distance_map_is_lipschitz(seed, nb):
    rng = np.random.default_rng(seed)
    a = rng.random((7, 6)) < 0.15
    if not a.any():
        a[3, 3] = True
    g = Grid(a.shape, nb)
    d = distance_map(BinaryMask(g, a))
    assert (d[a.reshape(-1)] == 0).all() and (d >= 0).all()
    for n in range(g.size):
        for m in _neighbors(g, n):
            assert abs(d[n] - d[m]) <= 1


def test_distance_metrics_match_connectivity():
    g4, g8 = Grid((5, 5), "n4"), Grid((5, 5), "n8")
    src = [12]
    d4 = distance_map(BinaryMask.from_indices(g4, src)).reshape(5, 5)
    d8 = distance_map(BinaryMask.from_indices(g8, src)).reshape(5, 5)
    yy, xx = np.indices((5, 5))
    assert (d4 == abs(yy - 2) + abs(xx - 2)).all()
    assert (d8 == np.maximum(abs(yy - 2), abs(xx - 2))).all()


@pytest.mark.parametrize("seed", range(4))
def test_slicewise_equals_per_slice_2d(seed):
    rng = np.random.default_rng(seed)
    K = 3
    arrays = [rng.random((4, 7, 7)) < 0.3 for _ in range(K)]
    st3 = RaterStack.from_arrays(arrays, "slicewise")
    lab3 = connected_components(st3)
    D3 = global_distance_map(st3, lab3).reshape(4, 7, 7)
    for z in range(4):
        st2 = RaterStack.from_arrays([a[z] for a in arrays], "n8")
        lab2 = connected_components(st2)
        D2 = global_distance_map(st2, lab2).reshape(7, 7)
        assert np.array_equal(D3[z], D2)
        # same component structure within the slice
        l3 = lab3.labels.reshape(4, 7, 7)[z]
        l2 = lab2.labels.reshape(7, 7)
        pairs = {(int(a), int(b)) for a, b in zip(l3.ravel(), l2.ravel())}
        assert len({a for a, _ in pairs}) == len(pairs) == len({b for _, b in pairs})
