"""Command-line front end: ``finpop <command> ...``.

Reports go to stdout (or ``--out``) as JSON. Exit status is 0 on success,
1 when a plan fails certification, 2 on usage or domain errors; errors are
written to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import List, Optional

from . import __version__
from .bounds import AbsRelMargins, RelMargin
from .errors import CertificationError, ParameterDomainError
from .fixed_size import DEFAULT_ENUMERATION_CAP, exact_mixed_coverage, plan_fixed_size, worst_mixed_coverage
from .hypergeom import PopulationSpec
from .inverse import exact_relerr_coverage, plan_inverse, worst_relerr_coverage
from .montecarlo import FixedSize, Inverse, Multistage, TrialBatch, batch_summary
from .multistage import (
    ENDPOINT_RULES,
    QUANTIFIERS,
    StagePlan,
    build_stage_plan,
    coverage_report,
    default_jobs,
    exact_coverage,
    interval_covers,
    run_multistage,
    tune_zeta,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("usage", message, usage=self.format_usage().strip())
        sys.exit(EXIT_USAGE)


def _emit_error(kind, message, **extra):
    doc = {"error": kind, "message": message, **extra}
    print(json.dumps(doc), file=sys.stderr)


def _p12(x) -> float:
    """Probability rounded to 12 significant digits."""
    return float(f"{float(x):.12g}")


def _frac(x) -> str:
    return f"{x.numerator}/{x.denominator}"


def _write(args, text: str) -> None:
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
            if not text.endswith("\n"):
                fh.write("\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _dump(args, doc) -> None:
    _write(args, json.dumps(doc, indent=2))


def _load_plan(path: str) -> StagePlan:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read plan {path!r}: {exc}") from exc
    return StagePlan.from_dict(doc)


def _population(N, M=None) -> PopulationSpec:
    if N is None:
        return None
    if N < 1:
        raise ParameterDomainError(f"population size must be positive, got {N}")
    if M is not None and not 0 <= M <= N:
        raise ParameterDomainError(f"M must lie in 0..{N}, got {M}")
    return PopulationSpec(N, M)


# -- fixed-size ------------------------------------------------------------------


def cmd_fixed_size(args) -> int:
    margins = AbsRelMargins(args.eps_a, args.eps_r, args.delta)
    pop = _population(args.population)
    plan = plan_fixed_size(margins, pop, exact=args.exact, cap=args.cap, widen=args.widen)
    doc = plan.to_dict()
    status = EXIT_OK
    if args.verify:
        if pop is None:
            raise UsageError("--verify needs --population")
        worst, arg = worst_mixed_coverage(pop.N, plan.n_used, margins)
        ok = worst > 1 - margins.delta
        doc["verification"] = {"n": plan.n_used, "worst_coverage": _p12(worst), "worst_M": arg, "passed": ok}
        if args.fractions:
            doc["verification"]["worst_coverage_exact"] = _frac(worst)
        status = EXIT_OK if ok else EXIT_FAIL
    _dump(args, doc)
    return status


# -- inverse ---------------------------------------------------------------------


def cmd_inverse(args) -> int:
    margin = RelMargin(args.eps, args.delta)
    plan = plan_inverse(margin, tol=args.tol)
    doc = plan.to_dict(diagnostics=args.exact_root)
    status = EXIT_OK
    if args.verify_population is not None:
        N = args.verify_population
        _population(N)
        worst, arg = worst_relerr_coverage(N, plan.r_formula, margin)
        ok = 1 - worst <= margin.delta
        doc["verification"] = {
            "N": N,
            "r": plan.r_formula,
            "worst_failure": _p12(1 - worst),
            "worst_M": arg,
            "passed": ok,
        }
        status = EXIT_OK if ok else EXIT_FAIL
    _dump(args, doc)
    return status


# -- multistage ------------------------------------------------------------------


def _plan_doc(plan, report, args):
    return {
        "schema": "finpop/multistage-plan-report",
        "version": 1,
        "inputs": {
            "N": plan.N,
            "eps": plan.eps,
            "delta": plan.delta,
            "rho": plan.rho,
            "zeta_hi": args.zeta_hi,
            "zeta": args.zeta,
            "quantifier": plan.quantifier,
            "endpoint_rule": args.endpoint_rule,
        },
        "plan": plan.to_dict(),
        "report": report.summary(),
    }


def cmd_ms_plan(args) -> int:
    jobs = args.jobs
    if args.zeta is not None:
        plan = build_stage_plan(args.population, args.eps, args.delta, args.zeta, args.rho, args.quantifier)
        report = coverage_report(plan, args.endpoint_rule, jobs=jobs)
    else:
        plan, report = tune_zeta(
            args.population,
            args.eps,
            args.delta,
            rho=args.rho,
            zeta_hi=args.zeta_hi,
            zeta_min=args.zeta_min,
            quantifier=args.quantifier,
            endpoint_rule=args.endpoint_rule,
            jobs=jobs,
        )
    _dump(args, _plan_doc(plan, report, args))
    return EXIT_OK if report.certified else EXIT_FAIL


def _mc_rows(plan, args, Ms):
    rows = []
    for M in Ms:
        pop = PopulationSpec(plan.N, M)
        exact = exact_coverage(pop, plan, args.endpoint_rule)
        batch = TrialBatch(args.seed, args.mc, Multistage(plan, args.endpoint_rule))
        summ = batch_summary(batch, pop, exact=exact)
        se = summ["standard_error"]
        ref_se = math.sqrt(max(float(exact) * (1 - float(exact)), 0.0) / args.mc)
        diff = summ["coverage_estimate"] - float(exact)
        rows.append(
            {
                "M": M,
                "exact": _p12(exact),
                "estimate": _p12(summ["coverage_estimate"]),
                "se": _p12(se),
                "within_3se": abs(diff) <= 3 * ref_se + 1e-15,
            }
        )
    return rows


def _csv_text(rows) -> str:
    buf = io.StringIO()
    keys = list(rows[0]) if rows else []
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for row in rows:
        w.writerow([";".join(repr(v) for v in row[k]) if isinstance(row[k], list) else row[k] for k in keys])
    return buf.getvalue()


def cmd_ms_verify(args) -> int:
    plan = _load_plan(args.plan)
    Ms = sorted(set(args.m)) if args.m else None
    for M in Ms or ():
        _population(plan.N, M)
    report = coverage_report(plan, args.endpoint_rule, Ms=Ms, jobs=args.jobs)
    doc = report.to_dict(fractions=args.fractions)
    doc["inputs"] = {"plan": args.plan, "endpoint_rule": args.endpoint_rule, "M": Ms}
    doc["plan"] = plan.to_dict()
    if args.mc:
        mc_Ms = Ms or sorted({0, plan.N // 4, plan.N // 2, 3 * plan.N // 4, plan.N, report.worst_coverage_M})
        doc["inputs"].update({"mc": args.mc, "seed": args.seed})
        doc["monte_carlo"] = _mc_rows(plan, args, mc_Ms)
    if args.format == "csv":
        _write(args, _csv_text(doc["monte_carlo"] if args.mc else doc["per_M"]))
    else:
        _dump(args, doc)
    return EXIT_OK if report.certified else EXIT_FAIL


def cmd_ms_run(args) -> int:
    plan = _load_plan(args.plan)
    pop = _population(plan.N, args.m)
    inputs = {"plan": args.plan, "M": args.m, "seed": args.seed, "trials": args.trials}
    if args.trials == 1 and not args.dump_trials:
        res = run_multistage(pop, plan, args.seed, trial=args.first_trial)
        lim = res.limits
        doc = {
            "schema": "finpop/multistage-run",
            "version": 1,
            "inputs": inputs,
            "stage": res.stage,
            "n_stop": res.n_stop,
            "k_stop": res.k_stop,
            "L_int": lim.L_int,
            "U_int": lim.U_int,
            "L": lim.lower,
            "U": lim.upper,
            "width": (lim.U_int - lim.L_int) / plan.N,
            "covered": bool(interval_covers(lim.L_int, lim.U_int, args.m, plan.N, args.endpoint_rule)),
        }
    else:
        batch = TrialBatch(args.seed, args.trials, Multistage(plan, args.endpoint_rule))
        exact = exact_coverage(pop, plan, args.endpoint_rule)
        doc = batch_summary(batch, pop, exact=exact, csv_path=args.dump_trials)
        doc = {"schema": "finpop/multistage-batch", "version": 1, "inputs": inputs, **doc}
        for key in ("coverage_estimate", "standard_error", "coverage_exact"):
            doc[key] = _p12(doc[key])
    _dump(args, doc)
    return EXIT_OK


# -- simulate --------------------------------------------------------------------


def cmd_simulate(args) -> int:
    pop = _population(args.population, args.m)
    if args.scheme == "fixed-size":
        margins = AbsRelMargins(args.eps_a, args.eps_r, args.delta)
        if not 1 <= args.n <= pop.N:
            raise ParameterDomainError(f"--n must lie in 1..{pop.N}")
        scheme = FixedSize(args.n, margins)
        exact = exact_mixed_coverage(pop, args.n, margins)
    else:
        margin = RelMargin(args.eps, args.delta)
        r = args.r if args.r is not None else plan_inverse(margin).r_formula
        if r < 1:
            raise ParameterDomainError("--r must be positive")
        scheme = Inverse(r, margin)
        exact = exact_relerr_coverage(pop, r, margin)
    batch = TrialBatch(args.seed, args.trials, scheme, stream=args.stream)
    doc = batch_summary(batch, pop, exact=exact, csv_path=args.dump_trials)
    for key in ("coverage_estimate", "standard_error", "coverage_exact"):
        doc[key] = _p12(doc[key])
    _dump(args, {"schema": "finpop/simulation", "version": 1, **doc})
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def _add_out(p):
    p.add_argument("--out", help="write the report here instead of stdout")


def _add_jobs(p):
    p.add_argument(
        "--jobs",
        type=int,
        default=default_jobs(),
        help="worker processes for all-M sweeps (default: $FINPOP_THREADS or 1)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="finpop", description="Sampling plans for a finite population proportion.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fs = sub.add_parser("fixed-size", help="sample size for the mixed absolute/relative criterion")
    fs.add_argument("--eps-a", type=float, required=True)
    fs.add_argument("--eps-r", type=float, required=True)
    fs.add_argument("--delta", type=float, required=True)
    fs.add_argument("--population", type=int, help="population size N")
    fs.add_argument("--exact", action="store_true", help="also search the exact minimal n (needs --population)")
    fs.add_argument("--cap", type=int, default=DEFAULT_ENUMERATION_CAP, help="largest N for the exact search")
    fs.add_argument("--widen", type=int, default=0, help="check this many sizes past the exact minimum")
    fs.add_argument("--verify", action="store_true", help="exact worst-case coverage at the planned n")
    fs.add_argument("--fractions", action="store_true", help="include exact rationals")
    _add_out(fs)
    fs.set_defaults(func=cmd_fixed_size)

    inv = sub.add_parser("inverse", help="threshold for inverse sampling")
    inv.add_argument("--eps", type=float, required=True)
    inv.add_argument("--delta", type=float, required=True)
    inv.add_argument("--exact-root", action="store_true", help="report bracket and bound values at each threshold")
    inv.add_argument("--tol", type=float, default=1e-9, help="root tolerance on the bound")
    inv.add_argument("--verify-population", type=int, metavar="N", help="exact worst-case failure over all M")
    _add_out(inv)
    inv.set_defaults(func=cmd_inverse)

    ms = sub.add_parser("multistage", help="multistage fixed-width intervals")
    ms_sub = ms.add_subparsers(dest="action", required=True, parser_class=_Parser)

    pl = ms_sub.add_parser("plan", help="tune zeta and emit a certified stage plan")
    pl.add_argument("--population", type=int, required=True)
    pl.add_argument("--eps", type=float, required=True)
    pl.add_argument("--delta", type=float, required=True)
    pl.add_argument("--rho", type=float, default=0.5)
    pl.add_argument("--zeta-hi", type=float, default=1.0)
    pl.add_argument("--zeta-min", type=float, default=1e-6)
    pl.add_argument("--zeta", type=float, help="use this zeta as is instead of tuning")
    pl.add_argument("--quantifier", choices=QUANTIFIERS, default="all", help="reading of the n_min condition")
    pl.add_argument("--endpoint-rule", choices=ENDPOINT_RULES, default="closed")
    _add_jobs(pl)
    _add_out(pl)
    pl.set_defaults(func=cmd_ms_plan)

    ve = ms_sub.add_parser("verify", help="exact all-M coverage sweep of a saved plan")
    ve.add_argument("--plan", required=True)
    ve.add_argument("--endpoint-rule", choices=ENDPOINT_RULES, default="closed")
    ve.add_argument("--m", type=int, action="append", help="restrict to this M (repeatable)")
    ve.add_argument("--mc", type=int, default=0, metavar="TRIALS", help="add a Monte Carlo comparison")
    ve.add_argument("--seed", type=int, default=0)
    ve.add_argument("--format", choices=("json", "csv"), default="json")
    ve.add_argument("--fractions", action="store_true", help="include exact rationals")
    _add_jobs(ve)
    _add_out(ve)
    ve.set_defaults(func=cmd_ms_verify)

    ru = ms_sub.add_parser("run", help="simulate staged sampling from a saved plan")
    ru.add_argument("--plan", required=True)
    ru.add_argument("--m", type=int, required=True, help="true number of units with the attribute")
    ru.add_argument("--seed", type=int, required=True)
    ru.add_argument("--trials", type=int, default=1)
    ru.add_argument("--first-trial", type=int, default=0)
    ru.add_argument("--endpoint-rule", choices=ENDPOINT_RULES, default="closed")
    ru.add_argument("--dump-trials", metavar="CSV", help="write per-trial rows to this file")
    _add_out(ru)
    ru.set_defaults(func=cmd_ms_run)

    si = sub.add_parser("simulate", help="Monte Carlo coverage of a fixed-size or inverse scheme")
    si.add_argument("scheme", choices=("fixed-size", "inverse"))
    si.add_argument("--population", type=int, required=True)
    si.add_argument("--m", type=int, required=True)
    si.add_argument("--trials", type=int, default=10_000)
    si.add_argument("--seed", type=int, default=0)
    si.add_argument("--stream", type=int, default=0)
    si.add_argument("--n", type=int, help="sample size (fixed-size)")
    si.add_argument("--eps-a", type=float)
    si.add_argument("--eps-r", type=float)
    si.add_argument("--eps", type=float)
    si.add_argument("--r", type=int, help="threshold (inverse); defaults to the closed-form value")
    si.add_argument("--delta", type=float, default=0.05)
    si.add_argument("--dump-trials", metavar="CSV")
    _add_out(si)
    si.set_defaults(func=cmd_simulate)
    return parser


def _check_simulate(args, parser):
    if args.command != "simulate":
        return
    need = ("n", "eps_a", "eps_r") if args.scheme == "fixed-size" else ("eps",)
    missing = ["--" + k.replace("_", "-") for k in need if getattr(args, k) is None]
    if missing:
        parser.error(f"simulate {args.scheme} requires {', '.join(missing)}")
    if args.trials < 1:
        parser.error("--trials must be positive")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _check_simulate(args, parser)
    if getattr(args, "trials", 1) < 1:
        parser.error("--trials must be positive")
    try:
        return args.func(args)
    except CertificationError as exc:
        _emit_error(
            "not-certified",
            str(exc),
            worst_2d2=None if exc.worst_value is None else _p12(exc.worst_value),
            worst_M=exc.worst_M,
        )
        return EXIT_FAIL
    except UsageError as exc:
        _emit_error("usage", str(exc))
        return EXIT_USAGE
    except ParameterDomainError as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
