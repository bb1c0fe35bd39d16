"""Command-line interface.

Exit codes: 0 success, 1 verification or example mismatch, 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction
from pathlib import Path

from . import example as ex
from .estimands import (
    CONDITIONINGS,
    CROSS,
    INDIVIDUAL,
    Arm,
    Target,
    all_group_forms,
    all_population_forms,
    estimand,
    parse_target,
)
from .estimators import DegenerateArmError, Family, Policy, estimate
from .model import (
    Strategy,
    Undefined,
    ValidationError,
    census,
    dump_assignments,
    is_defined,
    load_assignment,
    load_design,
    load_population,
)
from .oracle import (
    DEFAULT_BUDGET,
    EnumerationBudgetExceeded,
    EstimatorSpec,
    exact_moments,
    verify_all,
)
from .randomization import InfeasibleConstraint, enumerate_conditional, sample, space
from .variance import var_ht_group, var_ht_population

SCHEMA = 1


def render(value, exact: bool = False) -> str:
    if value is None or isinstance(value, Undefined):
        return "NA"
    value = Fraction(value)
    if exact:
        return str(value)
    return f"{float(value):.6g}"


def jsonable(value, exact: bool = False):
    if isinstance(value, Undefined):
        return None
    return render(value, exact) if exact else float(value)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _json(payload: dict) -> str:
    return json.dumps({"schema": SCHEMA, **payload}, indent=2, sort_keys=False) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _load(args, need_design=True):
    pop = load_population(args.population)
    design = load_design(args.design, pop) if need_design else None
    return pop, design


# ---------------------------------------------------------------- commands

def cmd_validate(args) -> int:
    pop, _ = _load(args, need_design=False)
    lines = [f"population ok: J={pop.J} clusters, {sum(c.n for c in pop.clusters)} subjects"]
    if args.design:
        design = load_design(args.design, pop)
        sp = space(pop, design)
        lines.append(f"design ok: alpha={design.alpha} gamma={design.gamma} K={design.K}; "
                     f"{sp.total} assignments")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_census(args) -> int:
    pop, _ = _load(args, need_design=False)
    cen = census(pop)
    if args.format == "json":
        text = _json({"command": "census", "M_jb": dict(cen.M_jb), "M_b": cen.M_b, "M_B": cen.M_B,
                      "M_Bb": cen.M_Bb, "J_b": sorted(cen.J_b), "J_B": sorted(cen.J_B)})
    else:
        rows = [(c.cluster_id, c.n, cen.M_jb[c.cluster_id], int(c.in_B)) for c in pop.clusters]
        text = _csv(("cluster_id", "n_j", "M_jb", "in_B"), rows)
        text += f"# M_b={cen.M_b} M_B={cen.M_B} M_Bb={cen.M_Bb}\n"
    _emit(text, args.out)
    return 0


def _all_targets(pop):
    for cond in CONDITIONINGS:
        for form in all_population_forms():
            yield Target(form), cond
        for c in pop.clusters:
            for form in all_group_forms():
                yield Target(form, c.cluster_id), cond


def cmd_truth(args) -> int:
    pop, design = _load(args)
    pairs = [parse_target(t) for t in args.target] if args.target else list(_all_targets(pop))
    rows = [(str(t), str(cond), estimand(pop, design, t, cond)) for t, cond in pairs]
    if args.format == "json":
        text = _json({"command": "truth", "estimands": [
            {"target": t, "conditioning": c, "value": jsonable(v, args.exact)} for t, c, v in rows]})
    else:
        text = _csv(("target", "conditioning", "value"), [(t, c, render(v, args.exact)) for t, c, v in rows])
    _emit(text, args.out)
    return 0


def cmd_estimate(args) -> int:
    pop, design = _load(args)
    asg = load_assignment(args.assignment, pop, design)
    target, cond = parse_target(args.target)
    family, policy = Family(args.family), Policy(args.undefined)
    est = estimate(pop, design, asg, target, cond, family, policy)
    record = {"target": str(target), "conditioning": str(cond), "family": family.value,
              "policy": policy.value, "value": est.value, "imputed": est.imputed}
    if not est.defined:
        record["reason"] = est.value.reason
    if args.with_variance:
        if family is not Family.HT or not isinstance(target.form, Arm):
            raise ValidationError("--with-variance needs an HT arm-mean target")
        if target.is_population:
            var = var_ht_population(pop, design, asg, target.form, cond)
        else:
            var = var_ht_group(pop, design, asg, target.cluster_id, target.form, cond)
        record["variance"] = var.value
        record["preconditions"] = [{"name": n, "satisfied": ok} for n, ok in var.preconditions]
    if args.format == "json":
        payload = dict(record, value=jsonable(est.value, args.exact))
        if "variance" in payload:
            payload["variance"] = jsonable(payload["variance"], args.exact)
        text = _json({"command": "estimate", **payload})
    else:
        header = ["target", "conditioning", "family", "policy", "value", "imputed"]
        row = [record["target"], record["conditioning"], record["family"], record["policy"],
               render(est.value, args.exact), int(est.imputed)]
        if args.with_variance:
            header.append("variance")
            row.append(render(record["variance"], args.exact))
        text = _csv(header, [row])
        if args.with_variance:
            text += "".join(f"# precondition {p['name']}: {'ok' if p['satisfied'] else 'FAILED'}\n"
                            for p in record["preconditions"])
    _emit(text, args.out)
    return 0


def _parse_fix(items):
    fix = {}
    for item in items or ():
        cid, sep, strat = item.partition("=")
        if not sep:
            raise ValidationError(f"--fix-q expects cluster=strategy, got {item!r}")
        if cid in fix and fix[cid] is not Strategy.parse(strat):
            raise InfeasibleConstraint(f"cluster {cid!r} fixed to both strategies")
        fix[cid] = Strategy.parse(strat)
    return fix


def cmd_enumerate(args) -> int:
    pop, design = _load(args)
    if args.sample:
        stream = sample(pop, design, args.seed, args.sample)
    else:
        if space(pop, design).total > args.budget:
            raise EnumerationBudgetExceeded("space exceeds budget; use --sample")
        stream = enumerate_conditional(pop, design, q=_parse_fix(args.fix_q))
    if args.limit:
        stream = (a for i, a in zip(range(args.limit), stream))
    _emit(dump_assignments(pop, stream, indexed=True), args.out)
    return 0


def _suite_payload(suite, exact):
    return {
        "command": "verify",
        "ok": suite.ok,
        "n_assignments": suite.n_assignments,
        "summary": suite.counts(),
        "checks": [
            {"claim": c.claim, "label": c.label, "status": c.status,
             "lhs": None if c.lhs is None else jsonable(c.lhs, exact),
             "rhs": None if c.rhs is None else jsonable(c.rhs, exact),
             "tolerance": 0, "reason": c.reason}
            for c in suite.checks
        ],
    }


def _suite_table(suite, exact) -> str:
    lines = [f"{'claim':<20} {'status':<8} {'lhs':>12} {'rhs':>12}  check"]
    for c in suite.checks:
        lhs = "" if c.lhs is None else render(c.lhs, exact)
        rhs = "" if c.rhs is None else render(c.rhs, exact)
        extra = f"  ({c.reason})" if c.reason and c.status != "pass" else ""
        lines.append(f"{c.claim:<20} {c.status:<8} {lhs:>12} {rhs:>12}  {c.label}{extra}")
    lines.append("")
    for claim, counts in suite.counts().items():
        lines.append(f"{claim:<20} pass={counts['pass']} fail={counts['fail']} skipped={counts['skipped']}")
    lines.append(f"overall: {'PASS' if suite.ok else 'FAIL'} over {suite.n_assignments} assignments")
    return "\n".join(lines) + "\n"


def cmd_verify(args) -> int:
    pop, design = _load(args)
    suite = verify_all(pop, design, budget=args.budget)
    text = _json(_suite_payload(suite, args.exact)) if args.format == "json" else _suite_table(suite, args.exact)
    _emit(text, args.out)
    return 0 if suite.ok else 1


# ---------------------------------------------------------------- example

def _fixed_others(pop, design, cluster_id):
    """Pin every other cluster to its first vector so the stream runs over one cluster's draws."""
    z = {}
    for c in pop.clusters:
        if c.cluster_id == cluster_id:
            continue
        k = design.k[ex.EXAMPLE_Q[c.cluster_id]][c.cluster_id]
        z[c.cluster_id] = tuple([1] * k + [0] * (c.n - k))
    return z


def example_tables(exact: bool = False) -> tuple[str, bool, dict]:
    """Regenerate both worked-example tables and the cross-conditional case.

    Returns (report text, all-match flag, raw values).
    """
    pop = ex.example_population()
    design = ex.example_design(pop)
    out: list[str] = []
    ok = True
    raw: dict = {}
    specs = [
        ("4", Strategy.ALPHA, ex.GROUP4_CELLS, ex.GROUP4_AVERAGE, (None, None, ex.GROUP4_TRUE_VARIANCE_HT),
         "Group 4, Ybar(0;alpha|b)"),
        ("3", Strategy.GAMMA, ex.GROUP3_CELLS, ex.GROUP3_AVERAGE,
         tuple(ex.GROUP3_TRUE_VARIANCE[k] for k in ("natural", "hajek", "ht")),
         "Group 3, Ybar(0;gamma|b)"),
    ]
    for cid, strategy, expected, expected_avg, expected_var, title in specs:
        arm = Arm(0, strategy)
        target = Target(arm, cid)
        stream = list(enumerate_conditional(pop, design, q=ex.EXAMPLE_Q, z=_fixed_others(pop, design, cid)))
        columns = []
        for asg in stream:
            treated = frozenset(asg.treated(pop, cid))
            vals = (
                estimate(pop, design, asg, target, INDIVIDUAL, Family.NATURAL).value,
                estimate(pop, design, asg, target, INDIVIDUAL, Family.HAJEK).value,
                estimate(pop, design, asg, target, INDIVIDUAL, Family.HT).value,
                var_ht_group(pop, design, asg, cid, arm, INDIVIDUAL).value,
            )
            columns.append((treated, vals))
        moments = [
            exact_moments(pop, design, EstimatorSpec(fam, target, INDIVIDUAL, stat))
            for fam, stat in ((Family.NATURAL, "point"), (Family.HAJEK, "point"),
                              (Family.HT, "point"), (Family.HT, "variance"))
        ]
        averages = tuple(m.expectation for m in moments)
        true_vars = tuple(m.variance for m in moments[:3])

        table_ok = len(columns) == len(expected)
        for treated, vals in columns:
            want = expected.get(treated)
            got = tuple(v if is_defined(v) else None for v in vals)
            table_ok &= want is not None and got == want
        got_avg = tuple(v if is_defined(v) else None for v in averages)
        table_ok &= got_avg == expected_avg
        table_ok &= tuple(v if is_defined(v) else None for v in true_vars) == expected_var
        ok &= table_ok
        raw[cid] = {"columns": columns, "averages": averages, "true_variances": true_vars}

        heads = ["{" + ",".join(sorted(t)) + "}" for t, _ in columns] + ["Average"]
        width = max(9, *(len(h) for h in heads)) + 1
        out.append(title)
        out.append(f"{'treated':<10}" + "".join(f"{h:>{width}}" for h in heads))
        names = ("N", "Hj", "HT", "Var^ HT")
        for r, name in enumerate(names):
            cells = [render(vals[r], exact) for _, vals in columns] + [render(averages[r], exact)]
            out.append(f"{name:<10}" + "".join(f"{c:>{width}}" for c in cells))
        out.append("exact variance over randomizations: "
                   + ", ".join(f"{n}={render(v, exact)}" for n, v in zip(names, true_vars)))
        out.append(f"matches expected values: {'yes' if table_ok else 'NO'}")
        out.append("")

    cross_target = Arm(1, Strategy.ALPHA)
    stream = list(enumerate_conditional(pop, design, q=ex.EXAMPLE_Q))
    values = {estimate(pop, design, a, Target(cross_target), CROSS).value for a in stream}
    variances = {var_ht_population(pop, design, a, cross_target, CROSS).value for a in stream}
    cross_ok = values == {ex.CROSS_ZERO_CASE[0]} and variances == {ex.CROSS_ZERO_CASE[1]}
    ok &= cross_ok
    raw["cross"] = {"values": values, "variances": variances, "n": len(stream)}
    out.append("Cross-conditional case: Ybar(1;alpha|B,b) under q=(gamma,alpha,gamma,alpha)")
    out.append(f"estimate over all {len(stream)} within-cluster draws: "
               + ", ".join(render(v, exact) for v in sorted(values, key=str)))
    out.append("variance estimate: " + ", ".join(render(v, exact) for v in sorted(variances, key=str)))
    out.append(f"matches expected values: {'yes' if cross_ok else 'NO'}")
    return "\n".join(out) + "\n", ok, raw


def cmd_example(args) -> int:
    if args.dump_population:
        _emit(ex.example_csv(), args.out)
        return 0
    text, ok, _ = example_tables(args.exact)
    _emit(text, args.out)
    return 0 if ok else 1


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twostage-ht",
        description="Subgroup estimands and estimators for two-stage randomized experiments with interference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, design=True, fmt=("csv", "json")):
        p.add_argument("--population", "-p", required=True, help="population CSV")
        if design:
            p.add_argument("--design", "-d", required=(design == "required"), help="design JSON")
        if fmt:
            p.add_argument("--format", choices=fmt, default=fmt[0])
        p.add_argument("--out", "-o", help="write the report to this file")
        p.add_argument("--exact", action="store_true", help="print exact rationals")

    p = sub.add_parser("validate", help="check population (and design) files")
    common(p, design=True, fmt=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("census", help="baseline subgroup counts")
    common(p, design=False)
    p.set_defaults(func=cmd_census)

    p = sub.add_parser("truth", help="true estimands")
    common(p, design="required")
    p.add_argument("--target", "-t", action="append", help="e.g. 'DE@pop|b' (repeatable; default all)")
    p.set_defaults(func=cmd_truth)

    p = sub.add_parser("estimate", help="evaluate an estimator on a realized assignment")
    common(p, design="required")
    p.add_argument("--assignment", "-a", required=True, help="assignment CSV")
    p.add_argument("--target", "-t", required=True, help="e.g. 'Ybar(0;gamma)@cluster:3|b'")
    p.add_argument("--family", choices=[f.value for f in Family], default="ht")
    p.add_argument("--undefined", choices=[x.value for x in Policy], default="propagate")
    p.add_argument("--with-variance", action="store_true")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("enumerate", help="dump assignments as CSV")
    common(p, design="required", fmt=None)
    p.add_argument("--fix-q", action="append", metavar="CLUSTER=STRATEGY")
    p.add_argument("--sample", type=int, help="draw this many assignments instead of enumerating")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--limit", type=int)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("verify", help="check every applicable unbiasedness claim by enumeration")
    common(p, design="required", fmt=("table", "json"))
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("example", help="reproduce the built-in worked example")
    p.add_argument("--exact", action="store_true")
    p.add_argument("--out", "-o")
    p.add_argument("--dump-population", action="store_true", help="print the example population CSV")
    p.set_defaults(func=cmd_example)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, DegenerateArmError, EnumerationBudgetExceeded, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
