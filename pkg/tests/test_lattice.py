from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anderson_msa.errors import CoverInfeasible, EmptyBoxError, PreconditionError, RegionTooLarge
from anderson_msa.lattice import (
    Region,
    admissible_rhos,
    boundary_sets,
    buffer_property_failures,
    buffered_subsets,
    cover_count_bounds,
    cover_formula_count,
    cover_graphs,
    covering_union,
    diameter,
    g2_components,
    is_connected,
    make_box,
    suitable_cover,
    t_interior,
)


def brute_box(center, L):
    d = len(center)
    lo = [math.floor(c - L) for c in center]
    hi = [math.ceil(c + L) for c in center]
    return {
        y
        for y in itertools.product(*[range(a, b + 1) for a, b in zip(lo, hi)])
        if max(abs(Fraction(yi) - Fraction(ci)) for yi, ci in zip(y, center)) <= Fraction(L) / 2
    }


def test_make_box_examples():
    assert [s[0] for s in make_box(0, 4).region.sites] == [-2, -1, 0, 1, 2]
    assert [s[0] for s in make_box(0.5, 2).region.sites] == [0, 1]
    box = make_box(0, 200)
    assert len(box) == 201 and 198 < 201 <= 201


def test_make_box_errors():
    with pytest.raises(EmptyBoxError):
        make_box(0.5, 0.5)
    with pytest.raises(PreconditionError):
        make_box(0, -1)
    with pytest.raises(RegionTooLarge):
        make_box(0, 30, dim=3)
    with pytest.raises(PreconditionError):
        make_box((0, 0), 4, dim=3)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 3),
    st.fractions(min_value=-5, max_value=5, max_denominator=4),
    st.fractions(min_value=Fraction(1, 2), max_value=12, max_denominator=4),
)
def test_box_matches_enumeration(d, c, L):
    center = (c,) * d
    if d == 3 and L > 8:
        L = Fraction(8)
    expected = brute_box(center, L)
    if not expected:
        with pytest.raises(EmptyBoxError):
            make_box(center, L)
        return
    box = make_box(center, L)
    assert box.region.site_set == expected
    if L >= 2:
        assert (L - 2) ** d < len(box) <= (L + 1) ** d


def test_region_invariants_and_json():
    r = Region([(1, 0), (0, 0), (0, 1)])
    assert r.sites == ((0, 0), (0, 1), (1, 0))
    assert [r.index[s] for s in r.sites] == [0, 1, 2]
    assert Region.from_json(r.to_json()) == r
    with pytest.raises(PreconditionError):
        Region([(0,), (0,)])
    with pytest.raises(PreconditionError):
        Region([(0,), (0, 1)])


def test_boundary_sets_one_dimensional():
    amb = make_box(0, 10)
    inner = make_box(0, 4)
    b = boundary_sets(inner, amb)
    assert b.edges == (((-2,), (-3,)), ((2,), (3,)))
    assert b.exterior.sites == ((-3,), (3,))
    assert b.interior.sites == ((-2,), (2,))
    assert boundary_sets(amb, amb).edges == ()


def test_boundary_counts_two_dimensional():
    amb = make_box((0, 0), 10)
    inner = make_box((0, 0), 4)
    b = boundary_sets(inner, amb)
    assert len(b.edges) == 4 * 5
    assert len(b.interior) == 16
    assert len(b.exterior) == 20


def test_t_interior_matches_definition():
    amb = make_box((0, 0), 12)
    inner = make_box((1, 0), 6)
    for t in (1, 1.5, 2, 3):
        got = t_interior(inner, amb, t)
        rest = amb.region.difference(inner.region)
        want = {
            y for y in inner.region.sites
            if min(max(abs(a - b) for a, b in zip(y, z)) for z in rest.sites) > math.floor(t)
        }
        assert got.site_set == want
    with pytest.raises(PreconditionError):
        t_interior(inner, amb, 0.5)


def test_cover_examples():
    c = suitable_cover(200, 20)
    assert c.rho == Fraction(3, 4) and len(c) == 13
    # the 2-d parent box exceeds the site cap; the grid is (2k+1)^d either way
    k, rho = admissible_rhos(200, 20)[0]
    assert rho == Fraction(3, 4) and (2 * k + 1) ** 2 == 13**2
    c3 = suitable_cover(126, 21)
    assert c3.rho == Fraction(5, 8) and len(c3) == 9
    assert cover_formula_count(c) == 13


def test_cover_rho_is_maximal_admissible():
    opts = admissible_rhos(200, 20)
    assert all(Fraction(3, 5) <= r <= Fraction(4, 5) for _, r in opts)
    assert max(r for _, r in opts) == opts[0][1]
    with pytest.raises(CoverInfeasible):
        suitable_cover(30, 10)


COVER_PAIRS = [(L, ell) for L in (60, 100, 126, 200, 240) for ell in (8, 10, 12, 20) if ell <= L / 6 and admissible_rhos(L, ell)]


@pytest.mark.parametrize("L,ell", COVER_PAIRS)
def test_covering_property_1d(L, ell):
    c = suitable_cover(L, ell)
    assert covering_union(c) == c.parent.region
    low, n, high = cover_count_bounds(c)
    assert low <= n <= high


@pytest.mark.parametrize("L,ell", [(60, 10), (66, 11), (80, 10)])
def test_covering_property_2d(L, ell):
    c = suitable_cover(L, ell, dim=2)
    assert covering_union(c) == c.parent.region
    low, n, high = cover_count_bounds(c)
    assert low <= n <= high


def test_cover_centers_on_grid_and_inside():
    c = suitable_cover(200, 20, center=0.5)
    for ctr in c.centers:
        assert c.parent.contains_point(ctr)
        assert c.cell(c.locate(ctr)).center == ctr
    with pytest.raises(PreconditionError):
        c.locate((0.6,))


def test_cover_graphs_counts():
    g = cover_graphs(suitable_cover(200, 20))
    assert len(g.edges1) == 12
    assert len(g.edges2) == 21


def test_cover_graph_edges_match_intersections():
    c = suitable_cover(200, 20)
    g = cover_graphs(c)
    cells = c.cells()
    e1 = set(g.edges1)
    for i, j in itertools.combinations(range(len(c)), 2):
        meet = bool(cells[i].region.site_set & cells[j].region.site_set)
        assert ((i, j) in e1) == meet


def test_g2_components():
    c = suitable_cover(200, 20)
    assert g2_components(c, [0, 2, 5, 12]) == [(0, 2, 5), (12,)]


def test_buffered_subset_structure():
    c = suitable_cover(200, 20)
    bad = [c.centers[3], c.centers[6], c.centers[11]]
    subs = buffered_subsets(c, bad, ell_sharp=1)
    assert [s.component for s in subs] == [(3, 6), (11,)]
    for s in subs:
        assert is_connected(s.upsilon)
        assert s.diam <= s.diam_bound
        assert s.hat == s.upsilon.difference(s.checked)
        assert s.hat_prime == s.upsilon.difference(s.checked_prime)
        assert s.checked_prime.issubset(s.checked)
        assert s.core.union(s.checked) == s.upsilon
        assert buffer_property_failures(c, s) == []


def test_buffered_subset_two_dimensional():
    c = suitable_cover(80, 10, dim=2)
    bad = [c.centers[0], c.centers[len(c) // 2]]
    for s in buffered_subsets(c, bad, ell_sharp=1):
        assert is_connected(s.upsilon)
        assert s.diam <= s.diam_bound
        assert buffer_property_failures(c, s) == []


def test_buffered_subset_preconditions():
    c = suitable_cover(200, 20)
    with pytest.raises(PreconditionError):
        buffered_subsets(c, [c.centers[0], c.centers[1]], ell_sharp=1)
    with pytest.raises(PreconditionError):
        buffered_subsets(c, [(1.0,)], ell_sharp=1)


def test_diameter():
    assert diameter(make_box((0, 0), 6).region) == 6
    assert diameter(Region([], dim=1)) == 0
