"""Probability recursions and explicit bounds, iterated as equalities (worst case).

Probabilities are carried as natural logarithms so that the doubly
exponential decay of the recursions never underflows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import PreconditionError

LOG_HALF = math.log(0.5)


@dataclass(frozen=True)
class TraceRow:
    k: int
    log_L: float
    log_value: float
    log_target: float
    met: bool

    @property
    def L(self) -> float:
        return _exp(self.log_L)

    @property
    def value(self) -> float:
        return _exp(self.log_value)

    @property
    def target(self) -> float:
        return _exp(self.log_target)


def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


@dataclass(frozen=True)
class RecursionTrace:
    kind: str
    rows: tuple[TraceRow, ...]
    K0: int | None
    capped: bool
    meta: dict = field(default_factory=dict)

    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.rows])

    def log_values(self) -> np.ndarray:
        return np.array([r.log_value for r in self.rows])

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "L_k", "log_value", "log_target", "met"])
            for r in self.rows:
                w.writerow([r.k, repr(r.L), repr(r.log_value), repr(r.log_target), r.met])
        return path

    def to_gnuplot(self, path) -> Path:
        """Two columns: k and log value."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"# {self.kind}: k log_value"] + [f"{r.k} {r.log_value!r}" for r in self.rows]
        path.write_text("\n".join(lines) + "\n")
        return path


def _check_common(Y: float, L0: float, kmax: int) -> None:
    if L0 <= 0:
        raise PreconditionError(f"L0 must be positive, got {L0}")
    if kmax < 0:
        raise PreconditionError("kmax must be non-negative")
    if Y <= 1:
        raise PreconditionError(f"Y must exceed 1, got {Y}")


# ---------------------------------------------------------------- MSA1


def msa1_log_c(Y: float, d: int) -> float:
    """log of (2Y)^{2d}."""
    return 2 * d * math.log(2 * Y)


def msa1_trace(Y: float, d: int, p: float, P0: float, L0: float, kmax: int = 64,
               stop_at_K0: bool = True) -> RecursionTrace:
    """P_{k+1} = (2Y)^{2d} P_k^2 + L_{k+1}^{-p}/2 with L_{k+1} = Y L_k; target L_k^{-p}."""
    _check_common(Y, L0, kmax)
    if Y < 400:
        raise PreconditionError(f"Y must be at least 400, got {Y}")
    log_c = msa1_log_c(Y, d)
    if not 0 <= P0 or not _log(P0) < LOG_HALF - log_c:
        raise PreconditionError(f"P0 must satisfy 0 <= P0 < (2Y)^(-2d)/2 = {0.5 * math.exp(-log_c)!r}, got {P0}")
    log_Y, log_L = math.log(Y), math.log(L0)
    log_P = _log(P0)
    rows, K0 = [], None
    for k in range(kmax + 1):
        if k:
            log_L += log_Y
            log_P = float(np.logaddexp(log_c + 2 * log_P, LOG_HALF - p * log_L))
        target = -p * log_L
        met = log_P <= target
        rows.append(TraceRow(k, log_L, log_P, target, met))
        if met and K0 is None:
            K0 = k
            if stop_at_K0:
                break
    return RecursionTrace("MSA1", tuple(rows), K0, K0 is None, {"Y": Y, "d": d, "p": p, "P0": P0, "L0": L0})


def msa1_direct(Y: float, d: int, p: float, P0: float, L0: float, kmax: int) -> list[float]:
    """The same recursion in plain floating point; only meaningful while nothing underflows."""
    c = (2 * Y) ** (2 * d)
    out, P, L = [P0], P0, L0
    for _ in range(kmax):
        L = Y * L
        P = c * P * P + 0.5 * L ** (-p)
        out.append(P)
    return out


@dataclass(frozen=True)
class EnvelopeCheck:
    k: int
    log_lhs: float
    log_rhs: float

    @property
    def holds(self) -> bool:
        return self.log_lhs < self.log_rhs


def msa1_envelope(trace: RecursionTrace) -> list[EnvelopeCheck]:
    """2(2Y)^{2d} P_k < (2(2Y)^{2d} P_0)^{2^k}, for 1 <= k < K0 (all computed rows when capped)."""
    Y, d = trace.meta["Y"], trace.meta["d"]
    log_a = math.log(2) + msa1_log_c(Y, d)
    log_P0 = trace.rows[0].log_value
    last = trace.K0 if trace.K0 is not None else len(trace.rows)
    return [
        EnvelopeCheck(r.k, log_a + r.log_value, (2**r.k) * (log_a + log_P0))
        for r in trace.rows[1:last]
    ]


# ---------------------------------------------------------------- MSA2 mass


def msa2_rho(gamma1: float, tau: float, kappa: float) -> float:
    return min((1 - tau) / 2, gamma1 * tau - 1, tau - kappa)


def msa2_mass(m0: float, gamma1: float, q: float, tau: float, kappa: float, L0: float,
              kmax: int = 20, C: float = 1.0) -> RecursionTrace:
    """m_k = m0 * prod_{j<k} (1 - C gamma1 q L0^{-rho gamma1^j}) with scales L_k = L0^{gamma1^k}.

    Factors are clipped at 0 (a negative factor gives no bound).
    ``meta["half_mass"]`` records whether every m_k >= m0/2.
    """
    if not 0 < kappa < tau:
        raise PreconditionError(f"need 0 < kappa < tau, got kappa={kappa}, tau={tau}")
    if L0 <= 1:
        raise PreconditionError("L0 must exceed 1")
    if m0 < L0 ** (-kappa):
        raise PreconditionError(f"m0 must be at least L0^-kappa = {L0 ** (-kappa)!r}, got {m0}")
    if gamma1 <= 1:
        raise PreconditionError("gamma1 must exceed 1")
    rho = msa2_rho(gamma1, tau, kappa)
    log_L0 = math.log(L0)
    log_target = math.log(m0 / 2)
    log_m = math.log(m0)
    rows, clipped = [], 0
    for k in range(kmax + 1):
        if k:
            factor = 1 - C * gamma1 * q * math.exp(-rho * gamma1 ** (k - 1) * log_L0)
            if factor <= 0:
                clipped += 1
            log_m += _log(max(factor, 0.0))
        rows.append(TraceRow(k, gamma1**k * log_L0, log_m, log_target, log_m >= log_target))
    meta = {"rho": rho, "C": C, "half_mass": all(r.met for r in rows), "clipped_factors": clipped}
    return RecursionTrace("MSA2-mass", tuple(rows), None, False, meta)


# ---------------------------------------------------------------- MSA3


def msa3_N(Y: float, s: float) -> int:
    return math.floor(Y**s)


def msa3_log_threshold(Y: float, s: float, d: int) -> float:
    """log of (2(2Y)^{(N+1)d})^{-1/N}, the admissible bound on P0."""
    N = msa3_N(Y, s)
    return -(math.log(2) + (N + 1) * d * math.log(2 * Y)) / N


def msa3_trace(Y: float, s: float, d: int, zeta: float, P0: float, L0: float, kmax: int = 64,
               stop_at_K0: bool = True) -> RecursionTrace:
    """P_{k+1} = (2Y)^{(N+1)d} P_k^{N+1} + exp(-L_{k+1}^zeta)/2, N = floor(Y^s); target exp(-L_k^zeta)."""
    _check_common(Y, L0, kmax)
    if not 0 < s < 1 or not 0 < zeta < s:
        raise PreconditionError(f"need 0 < zeta < s < 1, got zeta={zeta}, s={s}")
    if math.log(Y) < math.log(400) / (1 - s) - 1e-12:
        raise PreconditionError(f"Y must be at least 400^(1/(1-s)) = {400 ** (1 / (1 - s))!r}, got {Y}")
    N = msa3_N(Y, s)
    if not 0 <= P0 or not _log(P0) < msa3_log_threshold(Y, s, d):
        raise PreconditionError(
            f"P0 must satisfy P0 < (2(2Y)^((N+1)d))^(-1/N) = {_exp(msa3_log_threshold(Y, s, d))!r}, got {P0}"
        )
    log_c = (N + 1) * d * math.log(2 * Y)
    log_Y, log_L = math.log(Y), math.log(L0)
    log_P = _log(P0)
    rows, K0 = [], None
    for k in range(kmax + 1):
        if k:
            log_L += log_Y
            log_P = float(np.logaddexp(log_c + (N + 1) * log_P, LOG_HALF - _exp(zeta * log_L)))
        target = -_exp(zeta * log_L)
        met = log_P <= target
        rows.append(TraceRow(k, log_L, log_P, target, met))
        if met and K0 is None:
            K0 = k
            if stop_at_K0:
                break
    meta = {"Y": Y, "s": s, "d": d, "zeta": zeta, "P0": P0, "L0": L0, "N": N}
    return RecursionTrace("MSA3", tuple(rows), K0, K0 is None, meta)


def msa3_direct(Y: float, s: float, d: int, zeta: float, P0: float, L0: float, kmax: int) -> list[float]:
    """Plain floating-point iteration of the MSA3 recursion."""
    N = msa3_N(Y, s)
    c = (2 * Y) ** ((N + 1) * d)
    out, P, L = [P0], P0, L0
    for _ in range(kmax):
        L = Y * L
        P = c * P ** (N + 1) + 0.5 * math.exp(-(L**zeta))
        out.append(P)
    return out


# ---------------------------------------------------------------- explicit bounds


def level_spacing_constant(alpha: float, K: float, eps0: float, mu_diam: float, d: int) -> float:
    """Y_eps0 = 2^{2alpha-1} Kt^2 (diam supp mu + 2 d eps0 + 1), Kt = K (alpha = 1) or 8K."""
    if not 0.5 < alpha <= 1:
        raise PreconditionError(f"alpha must lie in (1/2, 1], got {alpha}")
    K_t = K if alpha == 1 else 8 * K
    return 2 ** (2 * alpha - 1) * K_t**2 * (mu_diam + 2 * d * eps0 + 1)


def level_spacing_bound(L: float, n_sites: int, alpha: float, K: float, eps0: float, mu_diam: float,
                        d: int, mode: str = "poly", q: float | None = None, beta: float | None = None) -> float:
    """Lower bound on the probability of L-(polynomial) level spacing for a set of ``n_sites`` sites."""
    Y = level_spacing_constant(alpha, K, eps0, mu_diam, d)
    if n_sites < 0:
        raise PreconditionError("n_sites must be non-negative")
    if mode == "poly":
        if q is None:
            raise PreconditionError("poly mode needs q")
        decay = L ** (-(2 * alpha - 1) * q)
    elif mode == "exp":
        if beta is None:
            raise PreconditionError("exp mode needs beta")
        decay = math.exp(-(2 * alpha - 1) * L**beta)
    else:
        raise PreconditionError(f"mode must be 'poly' or 'exp', got {mode!r}")
    return min(1.0, max(0.0, 1 - Y * decay * n_sites**2))


def theta_eps_L(L: float, d: int, q: float, epsilon: float) -> float:
    """floor(L/20)/log L * log(1 + L^{-q}/(2 d eps))."""
    if epsilon <= 0:
        raise PreconditionError("epsilon must be positive")
    return math.floor(L / 20) / math.log(L) * math.log1p(L ** (-q) / (2 * d * epsilon))


@dataclass(frozen=True)
class InitBound:
    theta_eL: float
    prob_lower: float


def init_bound(L: float, d: int, q: float, alpha: float, K: float, epsilon: float) -> InitBound:
    """theta_{eps,L} and the clamped lower bound 1 - K (L+1)^{2d} (8 d eps + 2 L^{-q})^alpha / 2."""
    if not q > 2 * d / alpha:
        raise PreconditionError(f"need q > 2d/alpha = {2 * d / alpha}, got {q}")
    theta = theta_eps_L(L, d, q, epsilon)
    prob = 1 - 0.5 * K * (L + 1) ** (2 * d) * (8 * d * epsilon + 2 * L ** (-q)) ** alpha
    return InitBound(theta, min(1.0, max(0.0, prob)))


def m0_star_rate(L: float, d: int, q: float, tau: float, gamma1: float) -> float:
    """(5d/2 + q) L^{-(1 - tau + 1/gamma1)} log L / 8."""
    return (2.5 * d + q) * L ** (-(1 - tau + 1 / gamma1)) * math.log(L) / 8


def m0_rate(L: float, tau: float, s: float, gamma: float) -> float:
    """L^{-(1 - tau + (1 - s)/gamma)} / 8."""
    return L ** (-(1 - tau + (1 - s) / gamma)) / 8
