"""Anderson Hamiltonians H = -eps*Laplacian + V restricted to finite regions.

Matrices are dense and real symmetric, indexed by the lexicographic site
order of their :class:`~anderson_msa.lattice.Region`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import PreconditionError, UnsupportedDistribution
from .lattice import LatticeBox, Region, as_region, boundary_sets, neighbor_pairs
from .rng import site_uniforms

DISTRIBUTION_KINDS = ("uniform", "holder", "custom")


@dataclass(frozen=True)
class Distribution:
    """Single-site law of the potential.

    ``uniform``: uniform on [low, high] (alpha = 1, K = 1/(high-low)).
    ``holder``: low + (high-low) * U**(1/alpha); its concentration function is
    (t/(high-low))**alpha, attained on the interval starting at ``low``.
    ``custom``: ``quantile`` maps uniforms into [low, high]; ``alpha`` and
    ``K`` are taken on trust.
    """

    kind: str = "uniform"
    low: float = 0.0
    high: float = 1.0
    alpha: float = 1.0
    K: float | None = None
    quantile: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in DISTRIBUTION_KINDS:
            raise UnsupportedDistribution(f"unknown distribution kind {self.kind!r}")
        if not self.high > self.low:
            raise PreconditionError("distribution support must have high > low")
        if not 0.5 < self.alpha <= 1.0:
            raise PreconditionError(f"alpha must lie in (1/2, 1], got {self.alpha}")
        if self.kind == "uniform" and self.alpha != 1.0:
            raise PreconditionError("the uniform law has alpha = 1")
        if self.kind == "custom" and (self.quantile is None or self.K is None):
            raise UnsupportedDistribution("custom distributions need a quantile function and K")

    @property
    def diam(self) -> float:
        return self.high - self.low

    @property
    def holder_constant(self) -> float:
        if self.K is not None:
            return float(self.K)
        return self.diam ** (-self.alpha)

    def concentration(self, t: float) -> float:
        """S(t) = sup_a P[a <= omega <= a + t] for the built-in laws."""
        if self.kind == "custom":
            raise UnsupportedDistribution("no closed-form concentration function for custom laws")
        if t <= 0:
            return 0.0
        return min(1.0, (t / self.diam) ** self.alpha)

    def transform(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "uniform":
            return self.low + self.diam * u
        if self.kind == "holder":
            return self.low + self.diam * u ** (1.0 / self.alpha)
        values = np.asarray(self.quantile(u), dtype=float)
        if values.shape != u.shape or (values < self.low).any() or (values > self.high).any():
            raise UnsupportedDistribution("custom quantile returned values outside [low, high]")
        return values

    def to_json(self) -> dict:
        if self.kind == "custom":
            raise UnsupportedDistribution("custom distributions are not serialisable")
        return {"kind": self.kind, "low": self.low, "high": self.high, "alpha": self.alpha, "K": self.K}

    @classmethod
    def from_json(cls, data: dict) -> Distribution:
        return cls(
            kind=data.get("kind", "uniform"),
            low=float(data.get("low", 0.0)),
            high=float(data.get("high", 1.0)),
            alpha=float(data.get("alpha", 1.0)),
            K=None if data.get("K") is None else float(data["K"]),
        )


UNIFORM = Distribution()


@dataclass(frozen=True)
class DisorderField:
    region: Region
    values: np.ndarray
    distribution: Distribution
    seed: int

    def __post_init__(self):
        self.values.setflags(write=False)

    def value(self, site) -> float:
        return float(self.values[self.region.index[tuple(site)]])


def sample_disorder(region, distribution: Distribution = UNIFORM, seed: int = 0) -> DisorderField:
    """i.i.d. potential on ``region``; each value depends only on (seed, site)."""
    region = as_region(region)
    if not isinstance(distribution, Distribution):
        raise UnsupportedDistribution(f"expected a Distribution, got {type(distribution).__name__}")
    u = site_uniforms(seed, region.coords)
    values = distribution.transform(u).astype(np.float64)
    return DisorderField(region=region, values=values, distribution=distribution, seed=int(seed))


def potential_field(region, values, distribution: Distribution = UNIFORM) -> DisorderField:
    """Wrap an explicit potential (in region order) as a field with seed 0."""
    region = as_region(region)
    values = np.array(values, dtype=np.float64).ravel()
    if values.shape != (len(region),):
        raise PreconditionError(f"expected {len(region)} potential values, got {values.size}")
    return DisorderField(region=region, values=values, distribution=distribution, seed=0)


@dataclass(frozen=True)
class FiniteOperator:
    region: Region
    epsilon: float
    potential: np.ndarray
    matrix: np.ndarray = field(repr=False)
    box: LatticeBox | None = None

    def __post_init__(self):
        self.matrix.setflags(write=False)
        self.potential.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.region)

    def row_norm_bound(self) -> float:
        """2*d*eps + max|V|, an upper bound on the maximal absolute row sum."""
        vmax = float(np.abs(self.potential).max()) if self.n else 0.0
        return 2 * self.region.dim * self.epsilon + vmax


def _assemble(region: Region, potential: np.ndarray, epsilon: float) -> np.ndarray:
    n = len(region)
    h = np.zeros((n, n))
    h[np.diag_indices(n)] = potential
    if epsilon and n:
        rows, cols = neighbor_pairs(region)
        h[rows, cols] = -epsilon
        h[cols, rows] = -epsilon
    return h


def build_hamiltonian(field: DisorderField, epsilon: float) -> FiniteOperator:
    if epsilon < 0 or not math.isfinite(epsilon):
        raise PreconditionError(f"epsilon must be finite and >= 0, got {epsilon}")
    epsilon = float(epsilon)
    matrix = _assemble(field.region, field.values, epsilon)
    return FiniteOperator(
        region=field.region, epsilon=epsilon, potential=np.array(field.values), matrix=matrix
    )


def box_hamiltonian(box: LatticeBox, epsilon: float, seed: int, distribution: Distribution = UNIFORM) -> FiniteOperator:
    op = build_hamiltonian(sample_disorder(box.region, distribution, seed), epsilon)
    return FiniteOperator(op.region, op.epsilon, op.potential, op.matrix, box=box)


def restrict(op: FiniteOperator, sub) -> FiniteOperator:
    """Principal submatrix of ``op`` on the sites of ``sub``."""
    box = sub if isinstance(sub, LatticeBox) else None
    sub = as_region(sub)
    if not sub.issubset(op.region):
        raise PreconditionError("restriction target is not contained in the operator's region")
    idx = np.array([op.region.index[s] for s in sub.sites], dtype=np.int64)
    matrix = op.matrix[np.ix_(idx, idx)].copy()
    return FiniteOperator(region=sub, epsilon=op.epsilon, potential=op.potential[idx].copy(), matrix=matrix, box=box)


def boundary_coupling(inner, ambient, epsilon: float = 1.0) -> np.ndarray:
    """epsilon times the matrix over ``ambient`` equal to -1 on each boundary pair of ``inner``."""
    inner, ambient = as_region(inner), as_region(ambient)
    edges = boundary_sets(inner, ambient).edges
    g = np.zeros((len(ambient), len(ambient)))
    for u, v in edges:
        i, j = ambient.index[u], ambient.index[v]
        g[i, j] = g[j, i] = -epsilon
    return g


def direct_sum(op: FiniteOperator, inner) -> np.ndarray:
    """H_inner (+) H_rest embedded in the ambient index, built from fresh restricted operators."""
    inner = as_region(inner)
    ambient = op.region
    rest = ambient.difference(inner)
    out = np.zeros_like(op.matrix)
    for part in (inner, rest):
        if len(part) == 0:
            continue
        idx = np.array([ambient.index[s] for s in part.sites], dtype=np.int64)
        block = _assemble(part, op.potential[idx], op.epsilon)
        out[np.ix_(idx, idx)] = block
    return out


def decomposition_defect(op: FiniteOperator, inner) -> float:
    """max |H_ambient - (H_inner (+) H_rest) - eps*Gamma| entrywise; zero when the identity holds."""
    inner = as_region(inner)
    diff = op.matrix - direct_sum(op, inner) - boundary_coupling(inner, op.region, op.epsilon)
    return float(np.abs(diff).max()) if diff.size else 0.0


# ---------------------------------------------------------------- text export


def write_operator_text(op: FiniteOperator, path) -> Path:
    """Plain-text export: a header, one ``site`` line per index, then row-major values."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# symmetric-matrix n={op.n} dim={op.region.dim} epsilon={op.epsilon!r}"]
    lines += ["site " + " ".join(str(c) for c in s) for s in op.region.sites]
    lines += [" ".join(repr(float(x)) for x in row) for row in op.matrix]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_operator_text(path) -> FiniteOperator:
    path = Path(path)
    lines = path.read_text().splitlines()
    header = dict(tok.split("=") for tok in lines[0].lstrip("# ").split()[1:])
    n, dim, eps = int(header["n"]), int(header["dim"]), float(header["epsilon"])
    sites = [tuple(int(c) for c in ln.split()[1:]) for ln in lines[1 : 1 + n]]
    region = Region(sites, dim=dim)
    if list(region.sites) != sites:
        raise PreconditionError(f"{path}: sites are not in lexicographic order")
    matrix = np.array([[float(x) for x in ln.split()] for ln in lines[1 + n : 1 + 2 * n]]).reshape(n, n)
    return FiniteOperator(region=region, epsilon=eps, potential=np.diag(matrix).copy(), matrix=matrix)
