import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdmosum.exceptions import ConfigError, DataValidationError
from hdmosum.neighborhoods import (
    Neighborhood,
    NeighborhoodSet,
    WindowRef,
    check_separation,
    enumerate_contiguous,
    enumerate_rectangles,
    from_intervals,
    influenced_set,
    load_neighborhoods_json,
    save_neighborhoods_json,
)
from hdmosum.panel import Panel, SpatialLayout


def members(nb):
    return [list(h.members) for h in nb]


def test_contiguous_hand_enumeration():
    nb = enumerate_contiguous(4, 2, 2)
    assert nb.S == 3
    assert members(nb) == [[0, 1], [1, 2], [2, 3]]
    assert nb.ids == [1, 2, 3]


@pytest.mark.parametrize("p", [1, 3, 6])
def test_contiguous_count(p):
    assert enumerate_contiguous(p, 1, p, size_ratio=math.inf).S == p * (p + 1) // 2


def test_contiguous_too_large():
    with pytest.raises(ConfigError):
        enumerate_contiguous(5, 6, 6)


def test_size_ratio_enforced():
    with pytest.raises(ConfigError, match="ratio"):
        from_intervals(20, [(1, 1), (1, 20)])


def test_rectangles_line_matches_contiguous():
    lay = SpatialLayout.linear(6)
    a = enumerate_rectangles(lay, 2, 3)
    b = enumerate_contiguous(6, 2, 3)
    assert sorted(members(a)) == sorted(members(b))


def grid(rows, cols):
    return SpatialLayout(np.array([[r, c] for r in range(rows) for c in range(cols)]))


def test_rectangles_singletons():
    nb = enumerate_rectangles(grid(2, 2), 1, 1)
    assert sorted(members(nb)) == [[0], [1], [2], [3]]


def test_rectangles_squares_only():
    nb = enumerate_rectangles(grid(2, 2), 1, 2, shape_ratio=1)
    assert sorted(members(nb)) == [[0], [0, 1, 2, 3], [1], [2], [3]]


def test_rectangle_members_match_bounds():
    lay = grid(3, 4)
    for h in enumerate_rectangles(lay, 1, 3, size_ratio=math.inf):
        lo = np.array([b[0] for b in h.bounds])
        hi = np.array([b[1] for b in h.bounds])
        inside = np.flatnonzero(((lay.locations >= lo) & (lay.locations <= hi)).all(axis=1))
        assert list(inside) == list(h.members)


def test_influenced_set_hand_case():
    nb = from_intervals(5, [(1, 5)])
    got = influenced_set(10, 1, 2, nb, n=100)
    assert got == {WindowRef(t, 1) for t in (9, 10, 11, 12)}


def test_influenced_set_disjoint():
    nb = from_intervals(6, [(1, 3), (4, 6)])
    assert all(w.s == 1 for w in influenced_set(20, 1, 3, nb, n=60))


def test_influenced_set_boundary():
    bn = 4
    nb = from_intervals(3, [(1, 3)])
    got = influenced_set(bn + 1, 1, bn, nb, n=50)
    assert min(w.i for w in got) == bn + 1
    assert max(w.i for w in got) == 2 * bn + 1


def test_separation_examples():
    bn = 5
    nb = from_intervals(6, [(1, 3), (4, 6)])
    assert check_separation([(50, 1)], bn, nb, 200)
    assert check_separation([(50, 1), (50 + 4 * bn + 2, 1)], bn, nb, 200)
    assert not check_separation([(50, 1), (50 + bn, 1)], bn, nb, 200)
    # disjoint and not linked through any third neighborhood
    assert check_separation([(50, 1), (50, 2)], bn, nb, 200)


def separated_brute(breaks, bn, nb, n):
    """Direct set construction: no window touches two influenced sets."""
    sets = [influenced_set(t, s, bn, nb, n) for t, s in breaks]
    msets = nb.member_sets()
    for a, b in itertools.combinations(sets, 2):
        for i in range(bn + 1, n - bn + 1):
            for l in range(nb.S):
                def touches(W):
                    return any(
                        i - bn <= w.i <= i + bn - 1 and msets[nb.position(w.s)] & msets[l]
                        for w in W
                    )
                if touches(a) and touches(b):
                    return False
    return True


@settings(max_examples=40, deadline=None)
@given(
    st.integers(2, 4),
    st.lists(st.tuples(st.integers(1, 6), st.integers(0, 3)), min_size=1, max_size=4),
    st.lists(st.tuples(st.integers(10, 50), st.integers(0, 100)), min_size=2, max_size=3),
)
def test_separation_matches_brute_force(bn, raw, brk):
    p = 8
    ivs = sorted({(a, min(p, a + w)) for a, w in raw})
    nb = from_intervals(p, ivs, size_ratio=math.inf)
    breaks = list({(t, nb.ids[k % nb.S]) for t, k in brk})
    n = 60
    assert check_separation(breaks, bn, nb, n) == separated_brute(breaks, bn, nb, n)


def test_reachable_is_two_hop():
    nb = from_intervals(9, [(1, 3), (3, 5), (5, 7), (7, 9)])
    np.testing.assert_array_equal(nb.reachable(0), [True, True, True, False])


def test_ids_sorted_and_unique():
    nb = NeighborhoodSet([Neighborhood(7, [0]), Neighborhood(2, [1])], 2)
    assert nb.ids == [2, 7]
    with pytest.raises(DataValidationError):
        NeighborhoodSet([Neighborhood(1, [0]), Neighborhood(1, [1])], 2)
    with pytest.raises(DataValidationError):
        NeighborhoodSet([Neighborhood(1, [5])], 2)


def test_json_round_trip(tmp_path):
    panel = Panel(np.zeros((3, 4)), ("a", "b", "c", "d"))
    nb = from_intervals(4, [(1, 2), (2, 4)])
    save_neighborhoods_json(tmp_path / "n.json", nb, panel)
    back = load_neighborhoods_json(tmp_path / "n.json", panel)
    assert members(back) == members(nb)
    (tmp_path / "b.json").write_text(json.dumps([{"id": 3, "bounds": [[2, 3]]}]))
    assert members(load_neighborhoods_json(tmp_path / "b.json", panel)) == [[1, 2]]
    (tmp_path / "u.json").write_text(json.dumps([{"id": 1, "members": ["zz"]}]))
    with pytest.raises(DataValidationError):
        load_neighborhoods_json(tmp_path / "u.json", panel)
