"""Parameter system of the multiscale induction and its scale thresholds.

Given theta, xi (and alpha, d) the solver picks one canonical point of the
feasible region: q, p, gamma1 at the midpoints of their intervals,
gamma = (1 + xi**(-1/3))/2, zeta and beta trisecting (gamma**2 xi, 1/gamma),
then tau and s at the midpoints of what is left.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path

from .errors import InfeasibleParameters, PreconditionError

# strict inequalities need this much room at double precision
STRICT_MARGIN = 1e-12


@dataclass(frozen=True)
class ParameterSet:
    d: int
    alpha: float
    K: float
    theta: float
    xi: float
    q: float
    p: float
    gamma1: float
    zeta: float
    beta: float
    gamma: float
    tau: float
    s: float

    @property
    def zeta_tilde(self) -> float:
        return (self.zeta + self.beta) / 2

    @property
    def tau_tilde(self) -> float:
        return (1 + self.tau) / 2

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> ParameterSet:
        return cls(d=int(data["d"]), **{k: float(data[k]) for k in cls.__dataclass_fields__ if k != "d"})

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


@dataclass(frozen=True)
class Inequality:
    """lhs < rhs (or lhs <= rhs when not strict)."""

    name: str
    lhs: float
    rhs: float
    strict: bool = True

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.margin > STRICT_MARGIN if self.strict else self.margin >= 0

    def row(self) -> tuple[str, float, float, bool]:
        return (self.name, self.lhs, self.rhs, self.passed)


def _theta_floor(alpha: float, d: int) -> float:
    return (6 / (2 * alpha - 1) + 4.5) * d


def _gamma1_cap(theta: float, q: float, p: float, d: int) -> float:
    return min(1 + p / (p + 2 * d), (2 * theta - 4 * d) / (5 * d + 4 * q))


def _tau_floor(gamma1: float, gamma: float, beta: float) -> float:
    return max((1 + gamma1) / (2 * gamma1), (1 + gamma * beta) / 2, ((gamma - 1) * beta + 1) / gamma)


def _s_floor(gamma: float, beta: float, tau: float) -> float:
    return max(gamma * beta, 1 - 2 * gamma * (tau - (1 + gamma * beta) / 2))


def _require(name: str, lhs: float, rhs: float) -> None:
    if not rhs - lhs > STRICT_MARGIN:
        raise InfeasibleParameters(name, lhs, rhs)


def solve_parameters(theta: float, xi: float, alpha: float = 1.0, d: int = 1, K: float = 1.0) -> ParameterSet:
    """Deterministic feasible point; raises :class:`InfeasibleParameters` naming the first empty interval."""
    if d not in (1, 2, 3):
        raise PreconditionError(f"d must be 1, 2 or 3, got {d}")
    _require("1/2 < α", 0.5, alpha)
    if alpha > 1:
        raise InfeasibleParameters("α ≤ 1", alpha, 1.0)
    _require("θ > (6/(2α−1)+9/2)d", _theta_floor(alpha, d), theta)
    _require("0 < ξ", 0.0, xi)
    _require("ξ < 1", xi, 1.0)

    q_lo, q_hi = 3 * d / (2 * alpha - 1), (theta - 4.5 * d) / 2
    _require("3d/(2α−1) < q < (θ − 9d/2)/2", q_lo, q_hi)
    q = (q_lo + q_hi) / 2
    p_hi = (2 * alpha - 1) * q - 3 * d
    _require("0 < p < (2α−1)q − 3d", 0.0, p_hi)
    p = p_hi / 2
    g1_hi = _gamma1_cap(theta, q, p, d)
    _require("1 < γ₁ < min{1 + p/(p+2d), (2θ−4d)/(5d+4q)}", 1.0, g1_hi)
    gamma1 = (1 + g1_hi) / 2

    gamma = (1 + xi ** (-1 / 3)) / 2
    lo, hi = gamma**2 * xi, 1 / gamma
    _require("γ²ξ < 1/γ", lo, hi)
    zeta = lo + (hi - lo) / 3
    beta = lo + 2 * (hi - lo) / 3
    _require("1 < γ < √(ζ/ξ)", 1.0, gamma)
    _require("1 < γ < √(ζ/ξ)", gamma, math.sqrt(zeta / xi))

    tau_lo = _tau_floor(gamma1, gamma, beta)
    _require("max{(1+γ₁)/(2γ₁), (1+γβ)/2, ((γ−1)β+1)/γ} < τ < 1", tau_lo, 1.0)
    tau = (tau_lo + 1) / 2
    s_lo = _s_floor(gamma, beta, tau)
    _require("max{γβ, 1 − 2γ(τ − (1+γβ)/2)} < s < 1", s_lo, 1.0)
    s = (s_lo + 1) / 2

    ps = ParameterSet(d=d, alpha=alpha, K=K, theta=theta, xi=xi, q=q, p=p, gamma1=gamma1,
                      zeta=zeta, beta=beta, gamma=gamma, tau=tau, s=s)
    for ineq in inequalities(ps):
        if not ineq.passed:
            raise InfeasibleParameters(ineq.name, ineq.lhs, ineq.rhs)
    return ps


def inequalities(ps: ParameterSet) -> list[Inequality]:
    """Every defining and derived inequality of the parameter system, in a fixed order."""
    d, a, th, xi = ps.d, ps.alpha, ps.theta, ps.xi
    q, p, g1 = ps.q, ps.p, ps.gamma1
    z, b, g, t, s = ps.zeta, ps.beta, ps.gamma, ps.tau, ps.s
    chain = 2 * d + g1 * (2.5 * d + 2 * q)
    pair = (1 - b) / (t - b) if t != b else math.inf
    return [
        Inequality("1/2 < α", 0.5, a),
        Inequality("θ > (6/(2α−1)+9/2)d", _theta_floor(a, d), th),
        Inequality("3d/(2α−1) < q", 3 * d / (2 * a - 1), q),
        Inequality("q < (θ − 9d/2)/2", q, (th - 4.5 * d) / 2),
        Inequality("0 < p", 0.0, p),
        Inequality("p < (2α−1)q − 3d", p, (2 * a - 1) * q - 3 * d),
        Inequality("1 < γ₁", 1.0, g1),
        Inequality("γ₁ < 1 + p/(p+2d)", g1, 1 + p / (p + 2 * d)),
        Inequality("γ₁ < (2θ−4d)/(5d+4q)", g1, (2 * th - 4 * d) / (5 * d + 4 * q)),
        Inequality("θ > 2d + γ₁(5d/2 + 2q)", chain, th),
        Inequality("2d + γ₁(5d/2 + 2q) > 9d/2 + 2q", 4.5 * d + 2 * q, chain),
        Inequality("0 < ξ", 0.0, xi),
        Inequality("ξ < ζ", xi, z),
        Inequality("ζ < β", z, b),
        Inequality("β < 1/γ", b, 1 / g),
        Inequality("1 < γ", 1.0, g),
        Inequality("γ < √(ζ/ξ)", g, math.sqrt(z / xi) if xi > 0 else math.inf),
        Inequality("(1+γ₁)/(2γ₁) < τ", (1 + g1) / (2 * g1), t),
        Inequality("(1+γβ)/2 < τ", (1 + g * b) / 2, t),
        Inequality("((γ−1)β+1)/γ < τ", ((g - 1) * b + 1) / g, t),
        Inequality("τ < 1", t, 1.0),
        Inequality("1/γ₁ < 1 − τ + 1/γ₁", 1 / g1, 1 - t + 1 / g1),
        Inequality("1 − τ + 1/γ₁ < τ", 1 - t + 1 / g1, t),
        Inequality("ξγ² < ζ", xi * g**2, z),
        Inequality("β < τ/γ", b, t / g),
        Inequality("τ/γ < 1/γ", t / g, 1 / g),
        Inequality("1/γ < τ", 1 / g, t),
        Inequality("1 < (1−β)/(τ−β)", 1.0, pair),
        Inequality("(1−β)/(τ−β) < γ", pair, g),
        Inequality("γ < τ/β", g, t / b),
        Inequality("γβ < s", g * b, s),
        Inequality("1 − 2γ(τ − (1+γβ)/2) < s", 1 - 2 * g * (t - (1 + g * b) / 2), s),
        Inequality("s < 1", s, 1.0),
        Inequality("β < γβ", b, g * b),
        Inequality("1 − τ + (1−s)/γ < τ − γβ", 1 - t + (1 - s) / g, t - g * b),
    ]


def validate(ps: ParameterSet) -> list[tuple[str, float, float, bool]]:
    """(name, lhs, rhs, passed) for every inequality; the set is feasible iff all pass."""
    return [ineq.row() for ineq in inequalities(ps)]


def is_valid(ps: ParameterSet) -> bool:
    return all(row[3] for row in validate(ps))


def write_validation_csv(ps: ParameterSet, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["inequality", "lhs", "rhs", "margin", "pass"])
        for ineq in inequalities(ps):
            w.writerow([ineq.name, repr(ineq.lhs), repr(ineq.rhs), repr(ineq.margin), ineq.passed])
    return path


# ---------------------------------------------------------------- scale thresholds


def floor_power(L: float, exponent: float) -> int:
    """floor(L**exponent), snapping values within rounding of an integer."""
    v = float(L) ** exponent
    r = round(v)
    if abs(v - r) <= 1e-9 * max(1.0, v):
        return int(r)
    return math.floor(v)


def l_prime(L: float) -> int:
    """floor(L/20), computed exactly."""
    return math.floor(Fraction(L) / 20)


def l_tau(L: float, tau: float) -> int:
    if not 0 < tau < 1:
        raise PreconditionError(f"tau must lie in (0, 1), got {tau}")
    return floor_power(L, tau)


@dataclass(frozen=True)
class ScaleThresholds:
    L: float
    Lprime: int
    Ltau: int
    Ltau_tilde: int
    below_200: bool

    def to_json(self) -> dict:
        return asdict(self)


def scale_thresholds(L: float, ps: ParameterSet) -> ScaleThresholds:
    """L' = floor(L/20), L_tau and L_tau_tilde; ``below_200`` flags scales under the working range."""
    if L <= 0:
        raise PreconditionError(f"L must be positive, got {L}")
    return ScaleThresholds(
        L=float(L),
        Lprime=l_prime(L),
        Ltau=l_tau(L, ps.tau),
        Ltau_tilde=floor_power(L, ps.tau_tilde),
        below_200=L < 200,
    )
