"""Seeded Monte Carlo experiments, explicit-bound audits and record persistence."""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import beta as beta_dist

from .errors import ConfigError, PreconditionError, SolverFailure
from .lattice import make_box, s_d, t_interior
from .localization import KINDS, classify_box, is_poly_localized, label_sites
from .operator import UNIFORM, Distribution, build_hamiltonian, potential_field, restrict, sample_disorder
from .parameters import ParameterSet, is_valid, l_prime
from .recursion import init_bound, level_spacing_bound
from .rng import derive_seed
from .spectral import (
    eigensystem,
    exp_level_spacing,
    extend,
    poly_level_spacing,
    residual_bound,
    weyl_slack,
)

PREDICATES = KINDS + ("poly-spacing", "exp-spacing")
MAX_RESAMPLE = 1000


@dataclass(frozen=True)
class Thresholds:
    q: float | None
    beta: float | None
    tau: float | None


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run depends on.

    ``q``, ``beta`` and ``tau`` default to the attached ParameterSet when one
    is given. ``rate`` None with predicate PL means theta_{eps,L}.
    ``separation`` > 0 redraws each realization until its potential is
    pairwise separated by at least that much. ``eps0`` sets the constant of
    the level-spacing bound (default epsilon).
    """

    d: int = 1
    L: float = 100
    epsilon: float = 0.0
    seed: int = 0
    n_realizations: int = 100
    predicate: str = "PL"
    rate: float | None = None
    distribution: Distribution = UNIFORM
    params: ParameterSet | None = None
    q: float | None = None
    beta: float | None = None
    tau: float | None = None
    offset: tuple[float, ...] = ()
    separation: float = 0.0
    eps0: float | None = None
    workers: int = 1
    out_json: str | None = None
    out_csv: str | None = None

    def __post_init__(self):
        if self.n_realizations < 1:
            raise ConfigError("n_realizations must be at least 1")
        if self.predicate not in PREDICATES:
            raise ConfigError(f"predicate must be one of {PREDICATES}, got {self.predicate!r}")
        if self.d not in (1, 2, 3):
            raise ConfigError(f"d must be 1, 2 or 3, got {self.d}")
        if self.epsilon < 0:
            raise ConfigError("epsilon must be non-negative")
        if self.params is not None and not is_valid(self.params):
            raise ConfigError("attached ParameterSet fails validation")
        if self.offset and len(self.offset) != self.d:
            raise ConfigError("offset must have d coordinates")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        need = {"PL": "q", "ML": "q", "poly-spacing": "q", "SEL": "beta", "LOC": "beta", "exp-spacing": "beta"}
        if getattr(self.thresholds, need[self.predicate]) is None:
            raise ConfigError(f"predicate {self.predicate} needs {need[self.predicate]}")
        if self.predicate in ("ML", "LOC") and self.thresholds.tau is None:
            raise ConfigError(f"predicate {self.predicate} needs tau")
        if self.predicate in ("ML", "SEL", "LOC") and self.rate is None:
            raise ConfigError(f"predicate {self.predicate} needs a rate")

    @property
    def thresholds(self) -> Thresholds:
        ps = self.params
        pick = lambda own, name: own if own is not None else (getattr(ps, name) if ps is not None else None)
        return Thresholds(pick(self.q, "q"), pick(self.beta, "beta"), pick(self.tau, "tau"))

    @property
    def center(self) -> tuple[float, ...]:
        return tuple(self.offset) if self.offset else (0.0,) * self.d

    def to_json(self) -> dict:
        return {
            "d": self.d, "L": self.L, "epsilon": self.epsilon, "seed": self.seed,
            "n_realizations": self.n_realizations, "predicate": self.predicate, "rate": self.rate,
            "distribution": self.distribution.to_json(),
            "params": None if self.params is None else self.params.to_json(),
            "q": self.q, "beta": self.beta, "tau": self.tau, "offset": list(self.offset),
            "separation": self.separation, "eps0": self.eps0, "workers": self.workers,
            "out_json": self.out_json, "out_csv": self.out_csv,
        }

    @classmethod
    def from_json(cls, data: dict) -> ExperimentConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(data)
        if kw.get("distribution") is not None:
            kw["distribution"] = Distribution.from_json(kw["distribution"])
        else:
            kw.pop("distribution", None)
        if kw.get("params") is not None:
            kw["params"] = ParameterSet.from_json(kw["params"])
        kw["offset"] = tuple(kw.get("offset") or ())
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class Realization:
    index: int
    seed: int
    verdict: bool
    excluded: bool
    witness: list | None = None
    draws: int = 1

    def to_json(self) -> dict:
        return {"index": self.index, "seed": self.seed, "verdict": self.verdict, "excluded": self.excluded,
                "witness": self.witness, "draws": self.draws}


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Exact binomial confidence interval."""
    if n == 0:
        return (0.0, 1.0)
    a = (1 - level) / 2
    lo = 0.0 if k == 0 else float(beta_dist.ppf(a, k, n - k + 1))
    hi = 1.0 if k == n else float(beta_dist.ppf(1 - a, k + 1, n - k))
    return (lo, hi)


@dataclass(frozen=True)
class ExperimentRecord:
    config: dict
    realizations: tuple[Realization, ...]
    successes: int
    n_valid: int
    excluded: int
    frequency: float
    interval: tuple[float, float]
    theory: float | None
    wall_clock: float = field(default=0.0, compare=False)

    def to_json(self, include_timing: bool = True) -> dict:
        out = {
            "config": self.config,
            "realizations": [r.to_json() for r in self.realizations],
            "successes": self.successes,
            "n_valid": self.n_valid,
            "excluded": self.excluded,
            "frequency": self.frequency,
            "interval": list(self.interval),
            "theory": self.theory,
        }
        if include_timing:
            out["wall_clock"] = self.wall_clock
        return out

    def dumps(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_json(include_timing), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, data: dict) -> ExperimentRecord:
        reals = tuple(Realization(**r) for r in data["realizations"])
        return cls(
            config=data["config"], realizations=reals, successes=data["successes"], n_valid=data["n_valid"],
            excluded=data["excluded"], frequency=data["frequency"], interval=tuple(data["interval"]),
            theory=data["theory"], wall_clock=data.get("wall_clock", 0.0),
        )


def _separated(values: np.ndarray, eta: float) -> bool:
    if len(values) < 2:
        return True
    return bool(np.diff(np.sort(values)).min() >= eta)


def _draw(cfg: ExperimentConfig, box, sub_seed: int):
    field_ = sample_disorder(box.region, cfg.distribution, sub_seed)
    draws = 1
    while cfg.separation > 0 and not _separated(field_.values, cfg.separation):
        if draws >= MAX_RESAMPLE:
            raise ConfigError(f"no {cfg.separation}-separated draw after {MAX_RESAMPLE} attempts")
        field_ = sample_disorder(box.region, cfg.distribution, derive_seed(sub_seed, draws))
        draws += 1
    return field_, draws


def _resolved_rate(cfg: ExperimentConfig) -> float | None:
    if cfg.predicate == "PL" and cfg.rate is None:
        return init_bound(cfg.L, cfg.d, cfg.thresholds.q, cfg.distribution.alpha,
                          cfg.distribution.holder_constant, cfg.epsilon).theta_eL
    return cfg.rate


def _one(args) -> Realization:
    cfg, index = args
    sub = derive_seed(cfg.seed, index)
    box = make_box(cfg.center, cfg.L, cfg.d)
    field_, draws = _draw(cfg, box, sub)
    op = build_hamiltonian(field_, cfg.epsilon)
    op = replace(op, box=box)
    try:
        es = eigensystem(op)
    except SolverFailure:
        return Realization(index, sub, False, True, None, draws)
    th = cfg.thresholds
    if cfg.predicate == "poly-spacing":
        return Realization(index, sub, poly_level_spacing(es, cfg.L, th.q), False, None, draws)
    if cfg.predicate == "exp-spacing":
        return Realization(index, sub, exp_level_spacing(es, cfg.L, th.beta), False, None, draws)
    v = classify_box(op, cfg.predicate, th, _resolved_rate(cfg), box=box, es=es)
    witness = None if v.witness is None else [list(v.witness[0]), list(v.witness[1])]
    return Realization(index, sub, v.verdict, False, witness, draws)


def theory_bound(cfg: ExperimentConfig) -> float | None:
    """The explicit lower bound that applies to the configured predicate, if any."""
    dist = cfg.distribution
    if cfg.predicate == "PL" and cfg.rate is None and cfg.epsilon > 0:
        return init_bound(cfg.L, cfg.d, cfg.thresholds.q, dist.alpha, dist.holder_constant, cfg.epsilon).prob_lower
    if cfg.predicate in ("poly-spacing", "exp-spacing") and dist.kind != "custom":
        n_sites = len(make_box(cfg.center, cfg.L, cfg.d))
        eps0 = cfg.eps0 if cfg.eps0 is not None else cfg.epsilon
        mode = "poly" if cfg.predicate == "poly-spacing" else "exp"
        th = cfg.thresholds
        return level_spacing_bound(cfg.L, n_sites, dist.alpha, dist.holder_constant, eps0, dist.diam, cfg.d,
                                   mode, q=th.q, beta=th.beta)
    return None


def run_trials(cfg: ExperimentConfig) -> ExperimentRecord:
    """Evaluate the predicate on ``n_realizations`` independent boxes.

    Realization i uses the sub-seed derive_seed(seed, i), so the record does
    not depend on ``workers``.
    """
    start = time.perf_counter()
    jobs = [(cfg, i) for i in range(cfg.n_realizations)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_one, jobs, chunksize=max(1, len(jobs) // (4 * cfg.workers))))
    else:
        results = [_one(job) for job in jobs]
    results.sort(key=lambda r: r.index)
    valid = [r for r in results if not r.excluded]
    k = sum(r.verdict for r in valid)
    n = len(valid)
    record = ExperimentRecord(
        config=cfg.to_json(),
        realizations=tuple(results),
        successes=k,
        n_valid=n,
        excluded=len(results) - n,
        frequency=k / n if n else math.nan,
        interval=clopper_pearson(k, n),
        theory=theory_bound(cfg),
        wall_clock=time.perf_counter() - start,
    )
    if cfg.out_json:
        save_record(record, cfg.out_json, cfg.out_csv)
    return record


def min_over_offsets(cfg: ExperimentConfig, offsets) -> tuple[float, list[ExperimentRecord]]:
    """Run once per center offset; the minimum frequency probes the infimum over box centers."""
    records = [run_trials(replace(cfg, offset=tuple(o), out_json=None, out_csv=None)) for o in offsets]
    return min(r.frequency for r in records), records


# ---------------------------------------------------------------- persistence


def save_record(record: ExperimentRecord, path, csv_path=None) -> tuple[Path, Path]:
    """JSON record plus a CSV summary with one row per realization."""
    path = Path(path)
    csv_path = Path(csv_path) if csv_path else path.with_suffix(".csv")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(record.dumps() + "\n")
        with csv_path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "seed", "verdict", "excluded", "draws", "witness"])
            for r in record.realizations:
                wit = "" if r.witness is None else json.dumps(r.witness)
                w.writerow([r.index, r.seed, int(r.verdict), int(r.excluded), r.draws, wit])
    except OSError as exc:
        raise OSError(f"cannot write record to {path}: {exc}") from exc
    return path, csv_path


def load_record(path) -> ExperimentRecord:
    path = Path(path)
    try:
        return ExperimentRecord.from_json(json.loads(path.read_text()))
    except OSError as exc:
        raise OSError(f"cannot read record from {path}: {exc}") from exc


# ---------------------------------------------------------------- initial-scale check


@dataclass(frozen=True)
class InitReport:
    epsilon: float
    theta: float
    prob_lower: float
    threshold: float
    frequency: float
    passed: bool
    record: ExperimentRecord

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon, "theta": self.theta, "prob_lower": self.prob_lower,
            "threshold": self.threshold, "frequency": self.frequency, "passed": self.passed,
        }


def binomial_threshold(p: float, n: int) -> float:
    """p - 3 sqrt(p(1-p)/n)."""
    return p - 3 * math.sqrt(p * (1 - p) / n)


def verify_init_step(d: int, L: float, q: float, n: int, seed: int = 0, separated: bool = False,
                     distribution: Distribution = UNIFORM, workers: int = 1) -> InitReport:
    """PL frequency at eps = L^{-q}/(4d), theta = theta_{eps,L}, against its explicit lower bound."""
    if n < 1:
        raise ConfigError("n must be at least 1")
    eps = L ** (-q) / (4 * d)
    bound = init_bound(L, d, q, distribution.alpha, distribution.holder_constant, eps)
    eta = 4 * d * eps + L ** (-q)
    cfg = ExperimentConfig(d=d, L=L, epsilon=eps, seed=seed, n_realizations=n, predicate="PL",
                           rate=bound.theta_eL, distribution=distribution, q=q,
                           separation=eta if separated else 0.0, workers=workers)
    record = run_trials(cfg)
    threshold = binomial_threshold(bound.prob_lower, n)
    return InitReport(eps, bound.theta_eL, bound.prob_lower, threshold, record.frequency,
                      record.frequency >= threshold, record)


# ---------------------------------------------------------------- audits


@dataclass(frozen=True)
class AuditReport:
    name: str
    checks: int
    failures: list
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {"name": self.name, "checks": self.checks, "failures": self.failures,
                "passed": self.passed, "details": self.details}


def audit_lemma_5_2(d: int, region, V, epsilon: float) -> AuditReport:
    """Gap and decay bounds for an eta-separated potential with eps < eta/(4d).

    Every ordered pair x != y is checked for |lambda_x - lambda_y| >= eta - 4 d eps
    and every (x, y) for |psi_y(x)| <= (2 d eps/(eta - 2 d eps))^{|x-y|_1}.
    """
    field_ = potential_field(region, V)
    values = field_.values
    region = field_.region
    if region.dim != d:
        raise PreconditionError("region dimension does not match d")
    n = len(region)
    eta = float(np.diff(np.sort(values)).min()) if n > 1 else math.inf
    if epsilon < 0 or (n > 1 and not epsilon < eta / (4 * d)):
        raise PreconditionError(f"need 0 <= eps < eta/(4d) = {eta / (4 * d)!r}, got {epsilon}")
    op = build_hamiltonian(field_, epsilon)
    labeled = label_sites(eigensystem(op))
    lam = np.array([labeled.eigenvalue(s) for s in region.sites])
    failures = []
    gap_floor = eta - 4 * d * epsilon
    pairs = 0
    for i in range(n):
        for j in range(n):
            if i != j:
                pairs += 1
                if not abs(lam[i] - lam[j]) >= gap_floor:
                    failures.append({"check": "gap", "x": region.sites[i], "y": region.sites[j],
                                     "value": float(abs(lam[i] - lam[j])), "bound": gap_floor})
    ratio = 2 * d * epsilon / (eta - 2 * d * epsilon) if n > 1 else 0.0
    coords = region.coords
    sites_checked = 0
    for j, y in enumerate(region.sites):
        psi, _ = labeled.eigenpair(y)
        l1 = np.abs(coords - coords[j]).sum(axis=1)
        bound = ratio**l1
        for i in np.flatnonzero(~(np.abs(psi) <= bound)):
            failures.append({"check": "decay", "x": region.sites[i], "y": y,
                             "value": float(abs(psi[i])), "bound": float(bound[i])})
        sites_checked += n
    return AuditReport("separated-potential", pairs + sites_checked, failures,
                       {"eta": eta, "pairs": pairs, "site_checks": sites_checked, "ratio": ratio,
                        "degenerate_labels": labeled.degenerate})


def audit_lemma_2_2(d: int, ell: float, Theta_side: float, epsilon: float, theta_tilde: float, n: int,
                    seed: int = 0, distribution: Distribution = UNIFORM) -> AuditReport:
    """dist(lambda, sigma(H_Theta)) <= |(H_Theta - lambda) phi| <= eps sqrt(s_d) l^{(d-1)/2} l^{-theta}.

    Checked for every labeled eigenpair of the centered side-``ell`` box whose
    label x lies in its l'-interior relative to Theta and which is
    (x, theta)-polynomially localized. Slack: rounding on the first
    inequality, and the computed eigen-defect of phi in the small box on the
    second (the chain assumes an exact eigenpair).
    """
    if n < 1:
        raise ConfigError("n must be at least 1")
    if ell > Theta_side:
        raise PreconditionError("the small box must fit inside Theta")
    theta_box = make_box(0, Theta_side, d)
    small = make_box(0, ell, d)
    lp = l_prime(small.side)
    interior = t_interior(small, theta_box, lp) if lp >= 1 else small.region
    bound = residual_bound(epsilon, d, ell, theta_tilde)
    failures, checks, flagged = [], 0, 0
    max_ratio = 0.0
    for i in range(n):
        sub = derive_seed(seed, i)
        big_op = build_hamiltonian(sample_disorder(theta_box.region, distribution, sub), epsilon)
        small_op = restrict(big_op, small)
        big_vals = eigensystem(big_op).eigenvalues
        labeled = label_sites(eigensystem(small_op), small)
        slack1 = weyl_slack(big_op)
        for x in interior.sites:
            phi, lam = labeled.eigenpair(x)
            if not is_poly_localized(phi, x, theta_tilde, small):
                continue
            flagged += 1
            defect = float(np.linalg.norm(small_op.matrix @ phi - lam * phi))
            ext = extend(phi, small, theta_box)
            residual = float(np.linalg.norm(big_op.matrix @ ext - lam * ext))
            dist = float(np.abs(big_vals - lam).min())
            checks += 2
            if bound > 0:
                max_ratio = max(max_ratio, residual / bound)
            if not dist <= residual + slack1:
                failures.append({"realization": i, "x": x, "check": "dist<=residual",
                                 "dist": dist, "residual": residual})
            if not residual <= bound + defect:
                failures.append({"realization": i, "x": x, "check": "residual<=bound",
                                 "residual": residual, "bound": bound, "defect": defect})
    return AuditReport("residual-chain", checks, failures,
                       {"bound": bound, "flagged_pairs": flagged, "interior_sites": len(interior),
                        "max_residual_over_bound": max_ratio, "s_d": s_d(d)})
