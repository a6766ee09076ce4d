"""Command-line entry point.

Exit codes: 0 when every check passed, 1 when a check failed, 2 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import harness, recursion
from .errors import InfeasibleParameters, PreconditionError
from .lattice import Region, covering_union, cover_count_bounds, make_box, suitable_cover
from .localization import KINDS, classify_box
from .operator import box_hamiltonian
from .parameters import inequalities, solve_parameters
from .spectral import eigensystem

OK, FAILED, USAGE = 0, 1, 2


def _emit(args, payload: dict, rows: list[list] | None = None) -> None:
    """JSON (default) or CSV when rows are available; to --out or stdout."""
    if args.format == "csv" and rows is not None:
        buf = io.StringIO()
        csv.writer(buf).writerows(rows)
        text = buf.getvalue()
    else:
        text = json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n"
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    else:
        sys.stdout.write(text)


def _thresholds(args):
    if args.q is not None or args.beta is not None or args.tau is not None:
        return harness.Thresholds(args.q, args.beta, args.tau)
    return solve_parameters(args.theta, args.xi, d=args.dim)


def cmd_params(args) -> int:
    try:
        ps = solve_parameters(args.theta, args.xi, alpha=args.alpha, d=args.dim)
    except InfeasibleParameters as exc:
        _emit(args, {"feasible": False, "inequality": exc.inequality, "lhs": exc.lhs, "rhs": exc.rhs})
        return FAILED
    ineqs = inequalities(ps)
    rows = [["inequality", "lhs", "rhs", "margin", "pass"]]
    rows += [[i.name, i.lhs, i.rhs, i.margin, i.passed] for i in ineqs]
    payload = {"feasible": all(i.passed for i in ineqs), "parameters": ps.to_json(),
               "validation": [list(i.row()) for i in ineqs]}
    _emit(args, payload, rows)
    return OK if payload["feasible"] else FAILED


def cmd_cover(args) -> int:
    cover = suitable_cover(args.side, args.cell, dim=args.dim)
    low, count, high = cover_count_bounds(cover)
    covered = covering_union(cover) == cover.parent.region
    payload = cover.to_json()
    payload.update({"count": count, "count_bounds": [float(low), float(high)], "covering_property": covered})
    rows = [["index"] + [f"x{i}" for i in range(args.dim)]]
    rows += [[i] + [float(c) for c in ctr] for i, ctr in enumerate(cover.centers)]
    _emit(args, payload, rows)
    return OK if covered and low <= count <= high else FAILED


def cmd_spectrum(args) -> int:
    box = make_box(0, args.side, args.dim)
    es = eigensystem(box_hamiltonian(box, args.epsilon, args.seed))
    if args.format == "csv":
        if args.out:
            es.to_csv(args.out)
        else:
            tmp = io.StringIO()
            w = csv.writer(tmp)
            w.writerow(["lambda"])
            w.writerows([[repr(float(v))] for v in es.eigenvalues])
            sys.stdout.write(tmp.getvalue())
        return OK
    _emit(args, {"n": len(es), "eigenvalues": [float(v) for v in es.eigenvalues], "min_gap": es.min_gap(),
                 "orthogonality": es.orthogonality_error(), "completeness": es.completeness_error()})
    return OK


def cmd_check(args) -> int:
    box = make_box(0, args.side, args.dim)
    op = box_hamiltonian(box, args.epsilon, args.seed)
    verdict = classify_box(op, args.kind, _thresholds(args), args.rate)
    _emit(args, verdict.to_json())
    return OK if verdict.verdict else FAILED


def cmd_init(args) -> int:
    report = harness.verify_init_step(args.dim, args.side, args.q, args.n, args.seed, separated=args.separated,
                                      workers=args.workers)
    _emit(args, report.to_json())
    return OK if report.passed else FAILED


def cmd_msa(args) -> int:
    if args.scheme == "msa1":
        trace = recursion.msa1_trace(args.Y, args.dim, args.p, args.P0, args.L0, args.kmax)
        ok = trace.K0 is not None and all(c.holds for c in recursion.msa1_envelope(trace))
    elif args.scheme == "msa3":
        trace = recursion.msa3_trace(args.Y, args.s, args.dim, args.zeta, args.P0, args.L0, args.kmax)
        ok = trace.K0 is not None
    else:
        trace = recursion.msa2_mass(args.m0, args.gamma1, args.q, args.tau, args.kappa, args.L0, args.kmax, args.C)
        ok = trace.meta["half_mass"]
    if args.gnuplot:
        trace.to_gnuplot(args.gnuplot)
    rows = [["k", "L_k", "log_value", "log_target", "met"]]
    rows += [[r.k, r.L, r.log_value, r.log_target, r.met] for r in trace.rows]
    payload = {"kind": trace.kind, "K0": trace.K0, "capped": trace.capped, "meta": trace.meta,
               "rows": [[r.k, r.log_L, r.log_value, r.log_target, r.met] for r in trace.rows]}
    _emit(args, payload, rows)
    return OK if ok else FAILED


def cmd_audit(args) -> int:
    if args.bound == "separated":
        n = int(args.side)
        region = Region([(x,) for x in range(n)])
        report = harness.audit_lemma_5_2(1, region, [x / n for x in range(n)], args.epsilon)
    else:
        report = harness.audit_lemma_2_2(args.dim, args.ell, args.side, args.epsilon, args.theta_tilde,
                                         args.n, args.seed)
    _emit(args, report.to_json())
    return OK if report.passed else FAILED


def cmd_run(args) -> int:
    if args.config:
        data = json.loads(Path(args.config).read_text())
    else:
        data = {"d": args.dim, "L": args.side, "epsilon": args.epsilon, "seed": args.seed,
                "n_realizations": args.n, "predicate": args.predicate, "rate": args.rate, "q": args.q,
                "beta": args.beta, "tau": args.tau, "workers": args.workers}
    cfg = harness.ExperimentConfig.from_json(data)
    record = harness.run_trials(cfg)
    if args.out:
        harness.save_record(record, args.out)
    else:
        sys.stdout.write(record.dumps() + "\n")
    if record.theory is None:
        return OK
    return OK if record.frequency >= harness.binomial_threshold(record.theory, record.n_valid) else FAILED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dim", type=int, default=1)
    common.add_argument("--side", type=float, default=100)
    common.add_argument("--epsilon", type=float, default=0.0)
    common.add_argument("--q", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--tau", type=float)
    common.add_argument("--theta", type=float, default=12.0)
    common.add_argument("--xi", type=float, default=0.3)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--n", type=int, default=100)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--out")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    parser = argparse.ArgumentParser(prog="anderson-msa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("params", parents=[common], help="solve and validate the parameter system")
    p.add_argument("--alpha", type=float, default=1.0)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("cover", parents=[common], help="suitable cover of a box")
    p.add_argument("--cell", type=float, required=True, help="cell side ell")
    p.set_defaults(func=cmd_cover)

    p = sub.add_parser("spectrum", parents=[common], help="eigensystem of one realization")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("check", parents=[common], help="classify one box")
    p.add_argument("--kind", choices=KINDS, default="PL")
    p.add_argument("--rate", type=float, required=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("init", parents=[common], help="initial-scale PL frequency against its bound")
    p.add_argument("--separated", action="store_true")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("msa", parents=[common], help="probability recursion traces")
    p.add_argument("--scheme", choices=("msa1", "msa2", "msa3"), default="msa1")
    p.add_argument("--Y", type=float, default=400.0)
    p.add_argument("--p", type=float, default=0.1875)
    p.add_argument("--P0", type=float, default=1e-7)
    p.add_argument("--L0", type=float, default=1000.0)
    p.add_argument("--kmax", type=int, default=64)
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--zeta", type=float, default=0.3)
    p.add_argument("--m0", type=float, default=0.1)
    p.add_argument("--gamma1", type=float, default=1.04)
    p.add_argument("--kappa", type=float, default=0.5)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--gnuplot")
    p.set_defaults(func=cmd_msa)

    p = sub.add_parser("audit", parents=[common], help="explicit-constant bound audits")
    p.add_argument("--bound", choices=("separated", "residual"), default="residual",
                   help="separated-potential gap/decay bounds or the eigenpair residual chain")
    p.add_argument("--ell", type=float, default=40)
    p.add_argument("--theta-tilde", type=float, default=2.0)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("run", parents=[common], help="Monte Carlo run from flags or a JSON config")
    p.add_argument("--config")
    p.add_argument("--predicate", choices=harness.PREDICATES, default="PL")
    p.add_argument("--rate", type=float)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "init" and args.q is None:
        args.q = 3.0
    if args.command == "msa" and args.scheme == "msa2" and args.q is None:
        args.q = 3.375
    if args.command == "msa" and args.scheme == "msa2" and args.tau is None:
        args.tau = 0.99
    try:
        return args.func(args)
    except (PreconditionError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
