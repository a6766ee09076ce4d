"""Eigensystems of finite operators, level-spacing predicates and residual audits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NotNormalized, PreconditionError, SolverFailure
from .lattice import Region, as_region, s_d
from .operator import FiniteOperator

TOL_EIG = 1e-10
TOL_ORTH = 1e-10


@dataclass(frozen=True)
class Eigensystem:
    """Ascending eigenvalues with orthonormal eigenvector columns over ``region``."""

    eigenvalues: np.ndarray
    vectors: np.ndarray = field(repr=False)
    region: Region

    def __post_init__(self):
        self.eigenvalues.setflags(write=False)
        self.vectors.setflags(write=False)

    def __len__(self) -> int:
        return len(self.eigenvalues)

    def gaps(self) -> np.ndarray:
        return np.diff(self.eigenvalues)

    def min_gap(self) -> float:
        return float(self.gaps().min()) if len(self) > 1 else math.inf

    def residual_norms(self, matrix: np.ndarray) -> np.ndarray:
        return np.linalg.norm(matrix @ self.vectors - self.vectors * self.eigenvalues, axis=0)

    def orthogonality_error(self) -> float:
        n = len(self)
        if n == 0:
            return 0.0
        return float(np.abs(self.vectors.T @ self.vectors - np.eye(n)).max())

    def completeness_error(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(np.abs((self.vectors**2).sum(axis=1) - 1.0).max())

    def reconstruction_error(self, matrix: np.ndarray) -> float:
        rebuilt = (self.vectors * self.eigenvalues) @ self.vectors.T
        return float(np.linalg.norm(rebuilt - matrix))

    def to_csv(self, path) -> Path:
        """One row per eigenpair: eigenvalue followed by the vector in region order."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda"] + ["phi(" + ",".join(map(str, s)) + ")" for s in self.region.sites])
            for j, lam in enumerate(self.eigenvalues):
                w.writerow([repr(float(lam))] + [repr(float(x)) for x in self.vectors[:, j]])
        return path


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # largest |entry| positive; argmax picks the lowest index on ties
    if vectors.size == 0:
        return vectors
    pivot = np.abs(vectors).argmax(axis=0)
    signs = np.sign(vectors[pivot, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def eigensystem(op: FiniteOperator, verify: bool = True) -> Eigensystem:
    """Full eigensystem of ``op``.

    Diagonal matrices are solved exactly (delta eigenvectors, sorted
    potential); everything else goes through LAPACK ``syevd``. With
    ``verify`` the residual, orthogonality and completeness tolerances are
    checked and a :class:`SolverFailure` raised if any is exceeded.
    """
    h = op.matrix
    n = op.n
    if n and not np.array_equal(h, h.T):
        raise PreconditionError("operator matrix is not symmetric")
    off = h - np.diag(np.diag(h))
    if not off.any():
        d = np.diag(h)
        order = np.argsort(d, kind="stable")
        vals = d[order].copy()
        vecs = np.eye(n)[:, order]
    else:
        try:
            vals, vecs = np.linalg.eigh(h)
        except np.linalg.LinAlgError as exc:
            raise SolverFailure(f"eigh failed: {exc}", {"n": n, "frobenius": float(np.linalg.norm(h))}) from exc
        vecs = _fix_signs(vecs)
    es = Eigensystem(eigenvalues=np.ascontiguousarray(vals), vectors=np.ascontiguousarray(vecs), region=op.region)
    if verify and n:
        scale = max(float(np.linalg.norm(h)), np.finfo(float).tiny)
        diag = {
            "max_residual": float(es.residual_norms(h).max()) / scale,
            "orthogonality": es.orthogonality_error(),
            "completeness": es.completeness_error(),
        }
        if diag["max_residual"] > TOL_EIG or diag["orthogonality"] > TOL_ORTH or diag["completeness"] > TOL_ORTH:
            raise SolverFailure("eigensystem outside tolerance", diag)
    return es


def _eigenvalues(es) -> np.ndarray:
    vals = es.eigenvalues if isinstance(es, Eigensystem) else np.asarray(es, dtype=float)
    return np.sort(vals)


def poly_level_spacing(es, R: float, q: float) -> bool:
    """All eigenvalues simple with every gap >= R**-q."""
    if R <= 0 or q <= 0:
        raise PreconditionError("need R > 0 and q > 0")
    vals = _eigenvalues(es)
    if len(vals) < 2:
        return True
    gaps = np.diff(vals)
    return bool((gaps > 0).all() and gaps.min() >= R ** (-q))


def exp_level_spacing(es, R: float, beta: float) -> bool:
    """All eigenvalues simple with every gap >= exp(-R**beta)."""
    if R <= 0 or not 0 < beta < 1:
        raise PreconditionError("need R > 0 and beta in (0, 1)")
    vals = _eigenvalues(es)
    if len(vals) < 2:
        return True
    gaps = np.diff(vals)
    return bool((gaps > 0).all() and gaps.min() >= math.exp(-(R**beta)))


def extend(phi: np.ndarray, sub, ambient) -> np.ndarray:
    """Extend a function on ``sub`` by zero to ``ambient``."""
    sub, ambient = as_region(sub), as_region(ambient)
    if not sub.issubset(ambient):
        raise PreconditionError("support is not contained in the ambient region")
    out = np.zeros(len(ambient))
    idx = [ambient.index[s] for s in sub.sites]
    out[idx] = phi
    return out


def spectral_residual(ambient_op: FiniteOperator, phi: np.ndarray, lam: float, spectrum=None) -> tuple[float, float]:
    """(|(H - lam) phi|, dist(lam, sigma(H))) for a unit vector ``phi`` on the ambient region."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (ambient_op.n,):
        raise PreconditionError("phi must be a vector over the ambient region")
    norm = float(np.linalg.norm(phi))
    if abs(norm - 1.0) > 1e-10:
        raise NotNormalized(f"|phi| = {norm}, expected 1")
    residual = float(np.linalg.norm(ambient_op.matrix @ phi - lam * phi))
    if spectrum is None:
        spectrum = eigensystem(ambient_op, verify=False).eigenvalues
    vals = spectrum.eigenvalues if isinstance(spectrum, Eigensystem) else np.asarray(spectrum)
    dist = float(np.abs(vals - lam).min())
    return residual, dist


def residual_bound(epsilon: float, d: int, L: float, theta_tilde: float) -> float:
    """eps * sqrt(s_d) * L^((d-1)/2) * L^(-theta_tilde): the explicit residual bound for a
    polynomially localized eigenpair of a side-L box whose label is deep inside the ambient set."""
    return epsilon * math.sqrt(s_d(d)) * L ** ((d - 1) / 2) * L ** (-theta_tilde)


def weyl_slack(op: FiniteOperator) -> float:
    """Rounding allowance for comparing a computed eigenvalue distance with a residual."""
    n = max(op.n, 1)
    return 64 * n * np.finfo(float).eps * max(float(np.abs(op.matrix).sum(axis=1).max(initial=0.0)), 1.0)


@dataclass(frozen=True)
class InjectionEntry:
    site: tuple[int, ...]
    inner_eigenvalue: float
    ambient_index: int
    ambient_eigenvalue: float
    distance: float
    residual: float | None


@dataclass(frozen=True)
class InjectionReport:
    entries: tuple[InjectionEntry, ...]
    injective: bool
    spacing_ok: bool
    distances_ok: bool

    @property
    def ok(self) -> bool:
        return self.injective and self.spacing_ok and self.distances_ok

    def mapping(self) -> dict:
        return {e.site: e.ambient_eigenvalue for e in self.entries}


def nearest_eigenvalue_injection(
    inner,
    interior_sites,
    ambient_es: Eigensystem,
    gap_threshold: float,
    ambient_op: FiniteOperator | None = None,
) -> InjectionReport:
    """Map each labeled inner eigenvalue at an interior site to its nearest ambient eigenvalue.

    ``inner`` is a site-labeled eigensystem (anything with ``eigenpair(site)``
    returning ``(phi, lam)`` and a ``region``). Failures are reported in the
    returned object; nothing is raised for a failed audit.
    """
    interior = as_region(interior_sites)
    inner_region = inner.region
    if not interior.issubset(inner_region):
        raise PreconditionError("interior sites must lie in the inner box")
    vals = ambient_es.eigenvalues
    spacing_ok = len(vals) < 2 or bool(np.diff(vals).min() >= gap_threshold)
    entries = []
    slack = weyl_slack(ambient_op) if ambient_op is not None else 0.0
    distances_ok = True
    for site in interior.sites:
        phi, lam = inner.eigenpair(site)
        j = int(np.abs(vals - lam).argmin())
        dist = float(abs(vals[j] - lam))
        res = None
        if ambient_op is not None:
            ext = extend(phi, inner_region, ambient_op.region)
            res = float(np.linalg.norm(ambient_op.matrix @ ext - lam * ext))
            distances_ok &= dist <= res + slack
        entries.append(InjectionEntry(site, float(lam), j, float(vals[j]), dist, res))
    targets = [e.ambient_index for e in entries]
    return InjectionReport(
        entries=tuple(entries),
        injective=len(set(targets)) == len(targets),
        spacing_ok=spacing_ok,
        distances_ok=bool(distances_ok),
    )
