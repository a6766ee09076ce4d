"""Finite lattice geometry in Z^d with the sup-norm.

Boxes, relative boundaries and t-interiors, suitable covers of a big box by
overlapping small boxes, the two cover graphs, and the buffered subsets that
surround clusters of bad cells with a ring of good ones.

All coordinates that can be non-integral (box centers, cover spacings) are
held as :class:`fractions.Fraction` so that membership tests on box edges are
exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import CoverInfeasible, EmptyBoxError, PreconditionError, RegionTooLarge

MAX_SITES = 10_000
SUPPORTED_DIMS = (1, 2, 3)

Site = tuple[int, ...]


def s_d(d: int) -> int:
    """Boundary constant 2^d d bounding |boundary of a side-L box| by s_d L^(d-1)."""
    return 2**d * d


class Region:
    """A finite subset of Z^d with lexicographic site order.

    ``index[site]`` is the row/column of ``site`` in every matrix built over
    the region.
    """

    __slots__ = ("dim", "sites", "coords", "index", "_set")

    def __init__(self, sites: Iterable[Sequence[int]], dim: int | None = None):
        tuples = [tuple(int(c) for c in s) for s in sites]
        if dim is None:
            if not tuples:
                raise PreconditionError("an empty region needs an explicit dim")
            dim = len(tuples[0])
        if dim not in SUPPORTED_DIMS:
            raise PreconditionError(f"dim must be one of {SUPPORTED_DIMS}, got {dim}")
        if any(len(t) != dim for t in tuples):
            raise PreconditionError("all sites must have the same dimension")
        ordered = sorted(tuples)
        site_set = frozenset(ordered)
        if len(site_set) != len(ordered):
            raise PreconditionError("region contains duplicate sites")
        if len(ordered) > MAX_SITES:
            raise RegionTooLarge(f"{len(ordered)} sites exceeds the cap of {MAX_SITES}")
        self.dim = dim
        self.sites: tuple[Site, ...] = tuple(ordered)
        self.coords = np.array(ordered, dtype=np.int64).reshape(len(ordered), dim)
        self.coords.setflags(write=False)
        self.index = {s: i for i, s in enumerate(ordered)}
        self._set = site_set

    def __len__(self) -> int:
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def __contains__(self, site) -> bool:
        return tuple(site) in self._set

    def __eq__(self, other) -> bool:
        return isinstance(other, Region) and self.dim == other.dim and self.sites == other.sites

    def __hash__(self) -> int:
        return hash((self.dim, self.sites))

    def __repr__(self) -> str:
        return f"Region(dim={self.dim}, n={len(self)})"

    @property
    def site_set(self) -> frozenset:
        return self._set

    def issubset(self, other: Region) -> bool:
        return self.dim == other.dim and self._set <= other._set

    def union(self, other: Region) -> Region:
        return Region(self._set | other._set, dim=self.dim)

    def difference(self, other: Region) -> Region:
        return Region(self._set - other._set, dim=self.dim)

    def intersection(self, other: Region) -> Region:
        return Region(self._set & other._set, dim=self.dim)

    def to_json(self) -> dict:
        return {"dim": self.dim, "sites": [list(s) for s in self.sites]}

    @classmethod
    def from_json(cls, data: dict) -> Region:
        return cls((tuple(s) for s in data["sites"]), dim=int(data["dim"]))


def as_region(obj) -> Region:
    if isinstance(obj, Region):
        return obj
    if isinstance(obj, LatticeBox):
        return obj.region
    raise TypeError(f"expected Region or LatticeBox, got {type(obj).__name__}")


def sup_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix of sup-norm distances between rows of ``a`` and rows of ``b``."""
    a = np.asarray(a)
    b = np.asarray(b)
    return np.abs(a[:, None, :] - b[None, :, :]).max(axis=-1)


def diameter(region: Region) -> int:
    if len(region) == 0:
        return 0
    c = region.coords
    return int((c.max(axis=0) - c.min(axis=0)).max())


def is_connected(region: Region) -> bool:
    """Nearest-neighbour connectivity in Z^d."""
    n = len(region)
    if n <= 1:
        return True
    rows, cols = neighbor_pairs(region)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    ncomp, _ = connected_components(graph, directed=False)
    return ncomp == 1


def neighbor_pairs(region: Region) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (i, j), i < j, of sites at Euclidean distance one."""
    rows, cols = [], []
    index = region.index
    for i, s in enumerate(region.sites):
        for axis in range(region.dim):
            t = s[:axis] + (s[axis] + 1,) + s[axis + 1 :]
            j = index.get(t)
            if j is not None:
                rows.append(i)
                cols.append(j)
    return np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64)


# ---------------------------------------------------------------- boxes


def _fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, (float, np.floating)):
        if not math.isfinite(x):
            raise PreconditionError("coordinates must be finite")
        return Fraction(float(x))
    if isinstance(x, Real):
        return Fraction(x)
    raise TypeError(f"not a real number: {x!r}")


@dataclass(frozen=True)
class LatticeBox:
    center: tuple[Fraction, ...]
    side: Fraction
    region: Region

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def L(self) -> float:
        return float(self.side)

    def __len__(self) -> int:
        return len(self.region)

    def contains_point(self, point: Sequence) -> bool:
        """Whether a real point lies in the closed cube of this box."""
        half = self.side / 2
        return all(abs(_fraction(p) - c) <= half for p, c in zip(point, self.center))

    def to_json(self) -> dict:
        return {
            "center": [float(c) for c in self.center],
            "side": float(self.side),
            "region": self.region.to_json(),
        }


def make_box(center, side, dim: int | None = None) -> LatticeBox:
    """Box of side ``side`` centered at ``center``: sites y with |y - center|_inf <= side/2.

    ``center`` may be a scalar, in which case it is repeated ``dim`` times
    (default 1).
    """
    if isinstance(center, (Real, Fraction)) and not isinstance(center, bool):
        center = (center,) * (dim or 1)
    c = tuple(_fraction(x) for x in center)
    if dim is not None and len(c) != dim:
        raise PreconditionError(f"center has {len(c)} coordinates, expected {dim}")
    L = _fraction(side)
    if L <= 0:
        raise PreconditionError(f"side must be positive, got {side}")
    if len(c) not in SUPPORTED_DIMS:
        raise PreconditionError(f"dim must be one of {SUPPORTED_DIMS}, got {len(c)}")
    half = L / 2
    ranges = []
    for ci in c:
        lo, hi = math.ceil(ci - half), math.floor(ci + half)
        if hi < lo:
            raise EmptyBoxError(f"box of side {side} centered at {tuple(map(float, c))} has no lattice sites")
        ranges.append(range(lo, hi + 1))
    count = math.prod(len(r) for r in ranges)
    if count > MAX_SITES:
        raise RegionTooLarge(f"box would contain {count} sites, cap is {MAX_SITES}")
    grids = np.meshgrid(*[np.array(r) for r in ranges], indexing="ij")
    sites = np.stack([g.ravel() for g in grids], axis=1)
    return LatticeBox(center=c, side=L, region=Region(map(tuple, sites), dim=len(c)))


# ---------------------------------------------------------------- boundaries


@dataclass(frozen=True)
class BoundarySets:
    edges: tuple[tuple[Site, Site], ...]
    exterior: Region
    interior: Region


def _check_subset(inner: Region, ambient: Region) -> None:
    if not inner.issubset(ambient):
        raise PreconditionError("inner region is not contained in the ambient region")


def boundary_sets(inner, ambient) -> BoundarySets:
    """Edge boundary, exterior boundary and interior boundary of ``inner`` relative to ``ambient``."""
    inner, ambient = as_region(inner), as_region(ambient)
    _check_subset(inner, ambient)
    edges = []
    for u in inner.sites:
        for axis in range(inner.dim):
            for step in (-1, 1):
                v = u[:axis] + (u[axis] + step,) + u[axis + 1 :]
                if v in ambient and v not in inner:
                    edges.append((u, v))
    edges.sort()
    exterior = Region({v for _, v in edges}, dim=inner.dim)
    interior = Region({u for u, _ in edges}, dim=inner.dim)
    return BoundarySets(edges=tuple(edges), exterior=exterior, interior=interior)


def distance_to_complement(inner, ambient) -> np.ndarray:
    """Sup-norm distance from each site of ``inner`` to ``ambient`` minus ``inner`` (inf if empty)."""
    inner, ambient = as_region(inner), as_region(ambient)
    complement = ambient.difference(inner)
    if len(complement) == 0 or len(inner) == 0:
        return np.full(len(inner), np.inf)
    dist, _ = cKDTree(complement.coords).query(inner.coords, k=1, p=np.inf)
    return np.asarray(dist)


def t_interior(inner, ambient, t: float) -> Region:
    """Sites of ``inner`` farther than floor(t) (sup-norm) from ``ambient`` minus ``inner``."""
    inner, ambient = as_region(inner), as_region(ambient)
    _check_subset(inner, ambient)
    if t < 1:
        raise PreconditionError(f"t must be >= 1, got {t}")
    keep = distance_to_complement(inner, ambient) > math.floor(t)
    return Region((s for s, k in zip(inner.sites, keep) if k), dim=inner.dim)


# ---------------------------------------------------------------- covers


@dataclass(frozen=True)
class Cover:
    parent: LatticeBox
    cell_side: Fraction
    rho: Fraction
    k: int
    grid: np.ndarray = field(repr=False)  # integer offsets j with center = x0 + rho*ell*j

    @property
    def spacing(self) -> Fraction:
        return self.rho * self.cell_side

    @property
    def centers(self) -> tuple[tuple[Fraction, ...], ...]:
        x0, h = self.parent.center, self.spacing
        return tuple(tuple(c + h * int(j) for c, j in zip(x0, row)) for row in self.grid)

    def __len__(self) -> int:
        return len(self.grid)

    def cell(self, i: int) -> LatticeBox:
        return make_box(self.centers[i], self.cell_side)

    def cells(self) -> list[LatticeBox]:
        return [make_box(c, self.cell_side) for c in self.centers]

    def locate(self, point: Sequence) -> int:
        """Index of the center equal to ``point``; raises if it is not a cover center."""
        x0, h = self.parent.center, self.spacing
        j = []
        for p, c in zip(point, x0):
            q = (_fraction(p) - c) / h
            if q.denominator != 1:
                raise PreconditionError(f"{tuple(point)} is not a cover center")
            j.append(int(q))
        hits = np.flatnonzero((self.grid == np.array(j)).all(axis=1))
        if len(hits) != 1:
            raise PreconditionError(f"{tuple(point)} is not a cover center")
        return int(hits[0])

    def to_json(self) -> dict:
        return {
            "parent": {"center": [float(c) for c in self.parent.center], "side": float(self.parent.side)},
            "cell_side": float(self.cell_side),
            "rho": {"num": self.rho.numerator, "den": self.rho.denominator},
            "k": self.k,
            "centers": [[float(c) for c in ctr] for ctr in self.centers],
        }


def admissible_rhos(L, ell) -> list[tuple[int, Fraction]]:
    """All (k, rho) with rho = (L - ell)/(2 ell k) in [3/5, 4/5], largest rho first."""
    L, ell = _fraction(L), _fraction(ell)
    if not 0 < ell < L:
        raise PreconditionError("cover needs 0 < ell < L")
    span = L - ell
    k_lo = math.ceil(span / (Fraction(8, 5) * ell))
    k_hi = math.floor(span / (Fraction(6, 5) * ell))
    out = []
    for k in range(max(k_lo, 1), k_hi + 1):
        rho = span / (2 * ell * k)
        if Fraction(3, 5) <= rho <= Fraction(4, 5):
            out.append((k, rho))
    return out


def suitable_cover(L, ell, center=0, dim: int | None = None) -> Cover:
    """The suitable ell-cover of the box of side L centered at ``center`` (rho maximal)."""
    parent = make_box(center, L, dim)
    options = admissible_rhos(parent.side, ell)
    if not options:
        raise CoverInfeasible(f"no admissible rho in [3/5, 4/5] for L={L}, ell={ell}")
    k, rho = options[0]
    per_axis = np.arange(-k, k + 1)
    grids = np.meshgrid(*([per_axis] * parent.dim), indexing="ij")
    grid = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
    grid.setflags(write=False)
    return Cover(parent=parent, cell_side=_fraction(ell), rho=rho, k=k, grid=grid)


def cover_count_bounds(cover: Cover) -> tuple[Fraction, int, Fraction]:
    """(lower, count, upper) for (L/ell)^d <= |centers| <= (2L/ell)^d."""
    L, ell, d = cover.parent.side, cover.cell_side, cover.parent.dim
    return (L / ell) ** d, len(cover), (2 * L / ell) ** d


def cover_formula_count(cover: Cover) -> Fraction:
    L, ell, d = cover.parent.side, cover.cell_side, cover.parent.dim
    return ((L - ell) / (cover.rho * ell) + 1) ** d


def covering_union(cover: Cover) -> Region:
    """Union over cells of their ell/10-interiors relative to the parent box."""
    parent = cover.parent.region
    t = cover.cell_side / 10
    sites: set = set()
    for cell in cover.cells():
        # floor(t) = 0 below t = 1: every site of the cell counts
        sites |= t_interior(cell.region, parent, t).site_set if t >= 1 else cell.region.site_set
    return Region(sites, dim=parent.dim)


@dataclass(frozen=True)
class BoxGraph:
    vertices: tuple[tuple[Fraction, ...], ...]
    edges1: tuple[tuple[int, int], ...]
    edges2: tuple[tuple[int, int], ...]


def _grid_distances(cover: Cover) -> np.ndarray:
    return sup_distances(cover.grid, cover.grid)


def cover_graphs(cover: Cover) -> BoxGraph:
    """G1 joins centers at distance rho*ell, G2 those at 2*rho*ell or 3*rho*ell."""
    dist = _grid_distances(cover)
    iu, ju = np.triu_indices(len(cover), k=1)
    dd = dist[iu, ju]
    e1 = tuple((int(i), int(j)) for i, j in zip(iu[dd == 1], ju[dd == 1]))
    m2 = (dd == 2) | (dd == 3)
    e2 = tuple((int(i), int(j)) for i, j in zip(iu[m2], ju[m2]))
    return BoxGraph(vertices=cover.centers, edges1=e1, edges2=e2)


# ---------------------------------------------------------------- buffered subsets


@dataclass(frozen=True)
class BufferedSubset:
    component: tuple[int, ...]  # bad centers (cover indices), one G2 component
    dilated: tuple[int, ...]  # centers within rho*ell of the component
    buffer_indices: tuple[int, ...]  # G1 exterior boundary of ``dilated``
    buffer_centers: tuple[tuple[Fraction, ...], ...]
    upsilon: Region
    core: Region
    checked: Region
    checked_prime: Region
    hat: Region
    hat_prime: Region
    ell: Fraction
    ell_sharp: float

    @property
    def diam(self) -> int:
        return diameter(self.upsilon)

    @property
    def diam_bound(self) -> Fraction:
        return 5 * self.ell * len(self.component)


def _union_of_cells(cover: Cover, indices: Iterable[int]) -> Region:
    sites: set = set()
    for i in indices:
        sites |= cover.cell(i).region.site_set
    return Region(sites, dim=cover.parent.dim)


def g2_components(cover: Cover, indices: Sequence[int]) -> list[tuple[int, ...]]:
    """Connected components of ``indices`` in G2, each sorted, listed by smallest member."""
    idx = sorted(set(indices))
    if not idx:
        return []
    sub = cover.grid[idx]
    dist = sup_distances(sub, sub)
    adj = (dist == 2) | (dist == 3)
    ncomp, labels = connected_components(adj.astype(np.int8), directed=False)
    comps: dict[int, list[int]] = {}
    for pos, lab in enumerate(labels):
        comps.setdefault(int(lab), []).append(idx[pos])
    return sorted(tuple(c) for c in comps.values())


def buffered_subsets(cover: Cover, bad_centers: Iterable[Sequence], ell_sharp: float) -> list[BufferedSubset]:
    """Surround each G2 component of the bad centers with a G1 ring of cells.

    ``bad_centers`` are points of the cover grid whose cells are pairwise
    disjoint. Returns one :class:`BufferedSubset` per component.
    """
    bad = [cover.locate(b) for b in bad_centers]
    if len(set(bad)) != len(bad):
        raise PreconditionError("bad centers must be distinct")
    grid = cover.grid
    if len(bad) > 1:
        dist = sup_distances(grid[bad], grid[bad])
        np.fill_diagonal(dist, 99)
        if (dist < 2).any():
            raise PreconditionError("bad centers must have pairwise disjoint cells (distance >= 2 rho ell)")
    if ell_sharp < 1:
        raise PreconditionError("ell_sharp must be >= 1")
    out = []
    for comp in g2_components(cover, bad):
        d_comp = sup_distances(grid, grid[list(comp)]).min(axis=1)
        dilated = np.flatnonzero(d_comp <= 1)
        d_dil = sup_distances(grid, grid[dilated]).min(axis=1)
        ring = np.flatnonzero(d_dil == 1)
        upsilon = _union_of_cells(cover, np.concatenate([dilated, ring]))
        core = _union_of_cells(cover, dilated)
        checked = _union_of_cells(cover, ring)
        cp_sites: set = set()
        for i in ring:
            cp_sites |= t_interior(cover.cell(int(i)).region, upsilon, 2 * ell_sharp).site_set
        checked_prime = Region(cp_sites, dim=cover.parent.dim)
        centers = cover.centers
        out.append(
            BufferedSubset(
                component=tuple(comp),
                dilated=tuple(int(i) for i in dilated),
                buffer_indices=tuple(int(i) for i in ring),
                buffer_centers=tuple(centers[int(i)] for i in ring),
                upsilon=upsilon,
                core=core,
                checked=checked,
                checked_prime=checked_prime,
                hat=upsilon.difference(checked),
                hat_prime=upsilon.difference(checked_prime),
                ell=cover.cell_side,
                ell_sharp=float(ell_sharp),
            )
        )
    return out


def buffer_property_failures(cover: Cover, sub: BufferedSubset) -> list[Site]:
    """Sites of the interior boundary of Upsilon (in the parent box) not covered by a
    2*ell_sharp-interior of some buffer cell. Empty when the buffer condition holds."""
    parent = cover.parent.region
    boundary = boundary_sets(sub.upsilon, parent).interior
    return sorted(s for s in boundary.sites if s not in sub.checked_prime)
