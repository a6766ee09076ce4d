"""Localization predicates, site labeling of eigensystems and the four localizing-box classes."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ImplicationViolation, NotNormalized, PreconditionError
from .lattice import LatticeBox, make_box, sup_distances
from .operator import FiniteOperator
from .parameters import l_prime, l_tau
from .spectral import Eigensystem, eigensystem, exp_level_spacing, poly_level_spacing

KINDS = ("PL", "ML", "SEL", "LOC")
NORM_TOL = 1e-8


def _check(phi: np.ndarray, x, box: LatticeBox) -> tuple[np.ndarray, np.ndarray]:
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (len(box.region),):
        raise PreconditionError("phi must have one entry per site of the box")
    norm = float(np.linalg.norm(phi))
    if abs(norm - 1.0) > NORM_TOL:
        raise NotNormalized(f"|phi| = {norm}, expected 1")
    x = tuple(int(c) for c in x)
    if x not in box.region:
        raise PreconditionError(f"site {x} is not in the box")
    dist = sup_distances(box.region.coords, np.array([x]))[:, 0]
    return np.abs(phi), dist


def _first(mask: np.ndarray, box: LatticeBox):
    hits = np.flatnonzero(mask)
    return box.region.sites[hits[0]] if hits.size else None


def poly_violation(phi, x, theta: float, box: LatticeBox):
    """First site y with |y-x| >= L' and |phi(y)| > L**-theta, or None."""
    amp, dist = _check(phi, x, box)
    far = dist >= l_prime(box.side)
    return _first(far & (amp > box.L ** (-theta)), box)


def subexp_violation(phi, x, s: float, box: LatticeBox):
    """First site y with |y-x| >= L' and |phi(y)| > exp(-L**s), or None."""
    if not 0 < s < 1:
        raise PreconditionError(f"s must lie in (0, 1), got {s}")
    amp, dist = _check(phi, x, box)
    far = dist >= l_prime(box.side)
    with np.errstate(divide="ignore"):
        return _first(far & (np.log(amp) > -(box.L**s)), box)


def exp_violation(phi, x, m: float, box: LatticeBox, tau: float):
    """First site y with |y-x| >= L_tau and |phi(y)| > exp(-m|y-x|), or None."""
    if m <= 0:
        raise PreconditionError(f"m must be positive, got {m}")
    amp, dist = _check(phi, x, box)
    far = dist >= l_tau(box.side, tau)
    with np.errstate(divide="ignore"):
        return _first(far & (np.log(amp) > -m * dist), box)


def is_poly_localized(phi, x, theta: float, box: LatticeBox) -> bool:
    return poly_violation(phi, x, theta, box) is None


def is_subexp_localized(phi, x, s: float, box: LatticeBox) -> bool:
    return subexp_violation(phi, x, s, box) is None


def is_exp_localized(phi, x, m: float, box: LatticeBox, tau: float) -> bool:
    return exp_violation(phi, x, m, box, tau) is None


# ---------------------------------------------------------------- labeling


@dataclass(frozen=True)
class LabeledEigensystem:
    """Eigensystem with a bijection site -> eigenpair.

    ``label_index[i]`` is the eigenpair assigned to site ``region.sites[i]``;
    ``peak[i]`` is |phi_x(x)| and ``far_max[i]`` the largest |phi_x(y)| over
    |y - x| >= L' (nan without a box).
    """

    base: Eigensystem
    label_index: np.ndarray
    degenerate: bool
    peak: np.ndarray = field(repr=False)
    far_max: np.ndarray = field(repr=False)
    box: LatticeBox | None = None

    @property
    def region(self):
        return self.base.region

    def eigenpair(self, site) -> tuple[np.ndarray, float]:
        j = int(self.label_index[self.region.index[tuple(site)]])
        return self.base.vectors[:, j], float(self.base.eigenvalues[j])

    def eigenvalue(self, site) -> float:
        return self.eigenpair(site)[1]

    def is_bijection(self) -> bool:
        n = len(self.base)
        return len(self.label_index) == n and np.array_equal(np.sort(self.label_index), np.arange(n))

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["site", "index", "lambda", "peak", "far_max"])
            for i, site in enumerate(self.region.sites):
                j = int(self.label_index[i])
                w.writerow([" ".join(map(str, site)), j, repr(float(self.base.eigenvalues[j])),
                            repr(float(self.peak[i])), repr(float(self.far_max[i]))])
        return path


def _assignment(amp: np.ndarray) -> tuple[np.ndarray, bool]:
    # maximize sum log|phi_j(x)|; zero entries are forbidden edges
    with np.errstate(divide="ignore"):
        cost = -np.log(amp)
    try:
        rows, cols = linear_sum_assignment(cost)
        return cols[np.argsort(rows)], False
    except ValueError:
        # no perfect matching avoids zero entries: fall back to |phi| weights
        rows, cols = linear_sum_assignment(-amp)
        return cols[np.argsort(rows)], True


def label_sites(es: Eigensystem, box: LatticeBox | None = None) -> LabeledEigensystem:
    """Site labeling maximizing the sum over sites of log|phi_{lambda_x}(x)|."""
    amp = np.abs(np.asarray(es.vectors))
    n = amp.shape[0]
    if n == 0:
        empty = np.zeros(0)
        return LabeledEigensystem(es, np.zeros(0, dtype=np.int64), False, empty, empty, box)
    label, degenerate = _assignment(amp)
    label = label.astype(np.int64)
    peak = amp[np.arange(n), label]
    far_max = np.full(n, np.nan)
    if box is not None:
        coords = es.region.coords
        lp = l_prime(box.side)
        for i in range(n):
            far = np.abs(coords - coords[i]).max(axis=1) >= lp
            far_max[i] = amp[far, label[i]].max(initial=0.0)
    return LabeledEigensystem(es, label, degenerate, peak, far_max, box)


# ---------------------------------------------------------------- box classification


@dataclass(frozen=True)
class LocalizationVerdict:
    box: LatticeBox
    kind: str
    rate: float
    spacing_ok: bool
    eigensystem_ok: bool
    witness: tuple | None
    thresholds: dict
    implication: bool | None = None

    @property
    def verdict(self) -> bool:
        return self.spacing_ok and self.eigensystem_ok

    def to_json(self) -> dict:
        return {
            "box": {"center": [float(c) for c in self.box.center], "side": float(self.box.side)},
            "kind": self.kind,
            "rate": self.rate,
            "spacing_ok": self.spacing_ok,
            "eigensystem_ok": self.eigensystem_ok,
            "verdict": self.verdict,
            "witness": None if self.witness is None else [list(self.witness[0]), list(self.witness[1])],
            "thresholds": dict(self.thresholds),
            "implication": self.implication,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _resolve_box(op: FiniteOperator, box: LatticeBox | None) -> LatticeBox:
    box = box if box is not None else op.box
    if box is None:
        raise PreconditionError("classification needs the box geometry (side L)")
    if box.region != op.region:
        raise PreconditionError("box region does not match the operator's region")
    return box


def _spacing(es, kind: str, L: float, params) -> bool:
    if kind in ("PL", "ML"):
        return poly_level_spacing(es, L, params.q)
    return exp_level_spacing(es, L, params.beta)


def _violation(labeled: LabeledEigensystem, kind: str, rate: float, box: LatticeBox, tau: float):
    for site in box.region.sites:
        phi, _ = labeled.eigenpair(site)
        if kind == "PL":
            y = poly_violation(phi, site, rate, box)
        elif kind == "SEL":
            y = subexp_violation(phi, site, rate, box)
        else:
            y = exp_violation(phi, site, rate, box, tau)
        if y is not None:
            return (site, y)
    return None


def implied_sel_rate(m_star: float, L: float) -> float:
    """1 - log(40/m*)/log L."""
    return 1 - math.log(40 / m_star) / math.log(L)


def implication_applies(m_star: float, L: float, params) -> bool:
    """Threshold conditions under which ML(m*) implies SEL(1 - log(40/m*)/log L) at this L."""
    if not 0 < m_star < 40 or L <= 1:
        return False
    s_tilde = implied_sel_rate(m_star, L)
    lp = l_prime(L)
    return (
        0 < s_tilde < 1
        and -(L**params.beta) <= -params.q * math.log(L)
        and l_tau(L, params.tau) <= lp
        and m_star * lp >= L**s_tilde
    )


def check_ml_sel_implication(labeled: LabeledEigensystem, box: LatticeBox, m_star: float, params) -> bool | None:
    """None when the threshold conditions fail; otherwise whether the SEL eigensystem clause holds.

    The spacing clause follows from the threshold ordering, so only the decay
    clause is re-checked on the same labeled eigensystem.
    """
    if not implication_applies(m_star, box.L, params):
        return None
    return _violation(labeled, "SEL", implied_sel_rate(m_star, box.L), box, params.tau) is None


def classify_box(op: FiniteOperator, kind: str, params, rate: float, box: LatticeBox | None = None,
                 es: Eigensystem | None = None) -> LocalizationVerdict:
    """Decide one of the PL/ML/SEL/LOC classes for ``op``.

    ``params`` supplies q, beta and tau (a ParameterSet or anything with those
    attributes). An ML-true verdict whose threshold conditions make the
    SEL implication applicable is checked; a failure raises
    :class:`ImplicationViolation`.
    """
    if kind not in KINDS:
        raise PreconditionError(f"kind must be one of {KINDS}, got {kind!r}")
    box = _resolve_box(op, box)
    if es is None:
        es = eigensystem(op)
    L = box.L
    spacing_ok = _spacing(es, kind, L, params)
    labeled = label_sites(es, box)
    witness = _violation(labeled, kind, rate, box, getattr(params, "tau", None))
    tau = getattr(params, "tau", None)
    thresholds = {"Lprime": l_prime(box.side), "Ltau": None if tau is None else l_tau(box.side, tau)}
    verdict = LocalizationVerdict(box, kind, float(rate), spacing_ok, witness is None, witness, thresholds)
    if kind == "ML" and verdict.verdict:
        holds = check_ml_sel_implication(labeled, box, rate, params)
        if holds is False:
            raise ImplicationViolation(f"ML({rate}) box failed SEL({implied_sel_rate(rate, L)}) on the same eigensystem")
        verdict = LocalizationVerdict(box, kind, float(rate), spacing_ok, True, None, thresholds, holds)
    return verdict


def box_for(op: FiniteOperator, center, side) -> LatticeBox:
    """Box geometry for an operator built on a bare region."""
    box = make_box(center, side, dim=op.region.dim)
    if box.region != op.region:
        raise PreconditionError("box does not match the operator's region")
    return box
