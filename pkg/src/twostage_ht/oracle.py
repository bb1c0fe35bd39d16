"""Exact randomization-distribution moments and the verification suite.

Moments are accumulated as exact rationals over an explicit enumeration of the
assignment space; nothing here uses closed-form variance expressions.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .estimands import (
    CLUSTER,
    CROSS,
    INDIVIDUAL,
    Arm,
    Conditioning,
    Marginal,
    Target,
    Value,
    all_group_forms,
    all_population_forms,
    contrast_operands,
    estimand,
)
from .estimators import (
    Family,
    Policy,
    STRATEGY_MISMATCH,
    hajek_group_value,
    ht_group_value,
    ht_population_value,
    natural_group_value,
)
from .model import Assignment, Design, Population, Strategy, Undefined, census, is_defined
from .randomization import enumerate_conditional, enumerate_full, sample, space
from .variance import (
    group_preconditions,
    population_preconditions,
    var_ht_group_value,
    var_ht_population_value,
)

DEFAULT_BUDGET = 10**7

POINT = "point"
VARIANCE = "variance"


class EnumerationBudgetExceeded(RuntimeError):
    """The randomization space is too large to enumerate; use Monte Carlo instead."""


@dataclass(frozen=True)
class EstimatorSpec:
    """An estimator to be evaluated assignment by assignment.

    ``statistic`` is ``"point"`` for the estimate itself or ``"variance"`` for the
    HT variance estimator of an arm mean.
    """

    family: Family
    target: Target
    conditioning: Conditioning
    statistic: str = POINT

    def point(self) -> EstimatorSpec:
        return EstimatorSpec(self.family, self.target, self.conditioning, POINT)

    def evaluate(self, pop: Population, design: Design, asg: Assignment, cache: dict) -> Value:
        """Value on one assignment; preconditions of variance specs are the caller's job."""
        form, cond = self.target.form, self.conditioning
        if self.target.is_population:
            if self.family is not Family.HT:
                raise ValueError(f"{self.family.value} has no population-level estimator")
            if self.statistic == VARIANCE:
                return var_ht_population_value(pop, design, asg, form, cond, cache)
            return ht_population_value(pop, design, asg, form, cond, cache)

        cid = self.target.cluster_id
        cluster = pop.cluster(cid)
        strategy = form.strategy
        if asg.q[cid] is not strategy:
            return Undefined(f"{STRATEGY_MISMATCH}: cluster {cid}")
        zvec = asg.z[cid]
        if self.family is Family.HT:
            if self.statistic == VARIANCE:
                return var_ht_group_value(design, cluster, form, zvec, cond, cache)
            return ht_group_value(design, cluster, strategy, zvec, form, cond, cache)
        if self.family is Family.NATURAL:
            return natural_group_value(cluster, strategy, zvec, form.z)
        return hajek_group_value(design, cluster, strategy, zvec, form.z)

    def __str__(self) -> str:
        stat = "Var^" if self.statistic == VARIANCE else ""
        return f"{stat}{self.family.value}:{self.target}|{self.conditioning}"


@dataclass(frozen=True)
class MomentReport:
    target: Target
    conditioning: Conditioning
    family: Family
    statistic: str
    policy: Policy
    expectation: Value
    variance: Value
    n_assignments: int
    n_undefined: int
    estimand: Value
    bias: Value
    distribution: tuple[tuple[Value, int], ...] = field(repr=False, default=())

    def values(self) -> Counter:
        return Counter(dict(self.distribution))


# ------------------------------------------------------------------ probes

class _MomentProbe:
    """Tally of one estimator's values over the assignments matching ``given``."""

    def __init__(self, spec: EstimatorSpec, given=None):
        self.spec = spec
        self.given = given
        self._tally: Counter = Counter()
        self.n = 0
        self.n_undefined = 0

    def observe(self, pop, design, asg, cache, weight: int = 1):
        v = self.spec.evaluate(pop, design, asg, cache)
        self.n += weight
        if is_defined(v):
            # keyed by (numerator, denominator): hashing Fractions is slow
            self._tally[(v.numerator, v.denominator)] += weight
        else:
            self.n_undefined += weight

    @property
    def counts(self) -> Counter:
        return Counter({Fraction(n, d): c for (n, d), c in self._tally.items()})

    def moments(self, policy: Policy) -> tuple[Value, Value]:
        if self.n == 0:
            return Undefined("no assignments"), Undefined("no assignments")
        if self.n_undefined and policy is Policy.PROPAGATE:
            reason = f"{self.n_undefined} of {self.n} assignments undefined"
            return Undefined(reason), Undefined(reason)
        counts = self.counts
        s1 = sum((v * c for v, c in counts.items()), Fraction(0))
        s2 = sum((v * v * c for v, c in counts.items()), Fraction(0))
        mean = s1 / self.n
        return mean, s2 / self.n - mean * mean

    def distribution(self) -> tuple:
        items = sorted(self.counts.items())
        if self.n_undefined:
            items.append((Undefined("undefined"), self.n_undefined))
        return tuple(items)


class _AgreementProbe:
    """Counts assignments where two estimators disagree in value or definedness."""

    def __init__(self, a: EstimatorSpec, b: EstimatorSpec, given=None):
        self.a, self.b, self.given = a, b, given
        self.n = 0
        self.mismatches = 0
        self.n_undefined = 0

    def observe(self, pop, design, asg, cache):
        va = self.a.evaluate(pop, design, asg, cache)
        vb = self.b.evaluate(pop, design, asg, cache)
        self.n += 1
        da, db = is_defined(va), is_defined(vb)
        self.n_undefined += not da
        if da != db or (da and va != vb):
            self.mismatches += 1


def _check_budget(pop: Population, design: Design, budget: int) -> int:
    total = space(pop, design).total
    if total > budget:
        raise EnumerationBudgetExceeded(
            f"randomization space has {total} assignments, above the budget of {budget}; "
            "use Monte Carlo mode (which cannot prove exact unbiasedness)"
        )
    return total


def _run(pop: Population, design: Design, stream: Iterable[Assignment], probes: Sequence) -> None:
    cache: dict = {}
    by_given: dict = {}
    for p in probes:
        by_given.setdefault(p.given, []).append(p)
    groups = list(by_given.items())
    for asg in stream:
        q = asg.q
        for given, plist in groups:
            if given is not None and q[given[0]] is not given[1]:
                continue
            for p in plist:
                p.observe(pop, design, asg, cache)


def _report(pop, design, probe: _MomentProbe, policy: Policy, point_probe: _MomentProbe | None = None) -> MomentReport:
    spec = probe.spec
    mean, var = probe.moments(policy)
    if spec.statistic == VARIANCE:
        truth = point_probe.moments(Policy.PROPAGATE)[1] if point_probe else Undefined("no point probe")
    else:
        truth = estimand(pop, design, spec.target, spec.conditioning)
    bias = mean - truth if is_defined(mean) and is_defined(truth) else Undefined("moment or estimand undefined")
    return MomentReport(
        target=spec.target, conditioning=spec.conditioning, family=spec.family,
        statistic=spec.statistic, policy=policy, expectation=mean, variance=var,
        n_assignments=probe.n, n_undefined=probe.n_undefined, estimand=truth, bias=bias,
        distribution=probe.distribution(),
    )


def exact_moments(pop: Population, design: Design, spec: EstimatorSpec,
                  given: tuple[str, Strategy] | None = None,
                  policy: Policy = Policy.PROPAGATE,
                  budget: int = DEFAULT_BUDGET) -> MomentReport:
    """Moments of ``spec`` over the randomization distribution, optionally given Q_j.

    For a variance spec the reported estimand is the exact variance of the
    corresponding point estimator over the same distribution.
    """
    _check_budget(pop, design, budget)
    own = None
    if not spec.target.is_population:
        own = (str(spec.target.cluster_id), spec.target.form.strategy)
        given = own if given is None else (str(given[0]), given[1])
    q_fix = {given[0]: given[1]} if given else None
    if own is not None and given == own:
        stream = _own_draws(pop, design, *own)
    else:
        stream = enumerate_conditional(pop, design, q=q_fix)
    probe = _MomentProbe(spec)
    probes = [probe]
    point_probe = None
    if spec.statistic == VARIANCE:
        point_probe = _MomentProbe(spec.point())
        probes.append(point_probe)
    _run(pop, design, stream, probes)
    return _report(pop, design, probe, policy, point_probe)


def _own_draws(pop: Population, design: Design, cid: str, strategy: Strategy) -> Iterable[Assignment]:
    """The within-cluster randomizations of one cluster, everything else pinned.

    Given Q_j, the cluster's own vector is uniform and independent of the other
    clusters, so this stream has the same distribution for group statistics.
    """
    anchor = next(iter(enumerate_conditional(pop, design, q={cid: strategy})))
    pinned = {c: v for c, v in anchor.z.items() if c != cid}
    return enumerate_conditional(pop, design, q=anchor.q, z=pinned)


# ------------------------------------------------------------ verification

@dataclass(frozen=True)
class Check:
    claim: str
    label: str
    status: str  # "pass", "fail" or "skipped"
    lhs: Value | None = None
    rhs: Value | None = None
    tolerance: Fraction = Fraction(0)
    reason: str = ""


@dataclass(frozen=True)
class VerificationSuite:
    checks: tuple[Check, ...]
    n_assignments: int

    @property
    def failed(self) -> tuple[Check, ...]:
        return tuple(c for c in self.checks if c.status == "fail")

    @property
    def ok(self) -> bool:
        return not self.failed

    def by_claim(self, claim: str) -> tuple[Check, ...]:
        return tuple(c for c in self.checks if c.claim == claim)

    def counts(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for c in self.checks:
            bucket = out.setdefault(c.claim, {"pass": 0, "fail": 0, "skipped": 0})
            bucket[c.status] += 1
        return out


RESULT_CLAIMS = {
    INDIVIDUAL: ("Result1", "Result2"),
    CLUSTER: ("Result3", "Result4"),
    CROSS: ("Result5", "Result6"),
}
ALL_CLAIMS = ("Result1", "Result2", "Result3", "Result4", "Result5", "Result6",
              "Theorem1", "Theorem2", "HajekEqualsNatural", "ZeroImputeBias")


def _arms_of(form) -> list[Arm]:
    if isinstance(form, Arm):
        return [form]
    if isinstance(form, Marginal):
        return []
    return [a for a in contrast_operands(form) if isinstance(a, Arm)]


def _degenerate(design: Design, pop: Population, form, cond: Conditioning, clusters) -> str | None:
    for arm in _arms_of(form):
        for c in clusters:
            if not cond.contributes(c):
                continue
            size = design.arm_size(c.cluster_id, arm.strategy, arm.z)
            if size == 0:
                return f"degenerate arm {arm} in cluster {c.cluster_id}"
    return None


class _Plan:
    """Probes and how to turn them into checks."""

    def __init__(self):
        self.probes: list = []
        self._moment: dict = {}
        self.builders: list = []

    def moment(self, spec: EstimatorSpec, given=None) -> _MomentProbe:
        key = (spec, given)
        if key not in self._moment:
            self._moment[key] = _MomentProbe(spec, given)
            self.probes.append(self._moment[key])
        return self._moment[key]

    def agreement(self, a, b, given) -> _AgreementProbe:
        probe = _AgreementProbe(a, b, given)
        self.probes.append(probe)
        return probe


def _exact_check(claim, label, lhs, rhs, n_undefined=0) -> Check:
    if n_undefined:
        return Check(claim, label, "fail", lhs, rhs, reason=f"{n_undefined} undefined HT evaluations")
    if not (is_defined(lhs) and is_defined(rhs)):
        return Check(claim, label, "fail", lhs, rhs, reason="undefined moment")
    return Check(claim, label, "pass" if lhs == rhs else "fail", lhs, rhs)


def _plan_results(plan: _Plan, pop: Population, design: Design, cen) -> None:
    for cond, (group_claim, pop_claim) in RESULT_CLAIMS.items():
        for c in pop.clusters:
            for form in all_group_forms():
                target = Target(form, c.cluster_id)
                label = f"E[{target}|{cond} | Q_{c.cluster_id}={form.strategy.value}] = estimand"
                if cond.uses_b and c.M_b == 0:
                    plan.builders.append(lambda cl=group_claim, lb=label: Check(cl, lb, "skipped", reason="M_jb=0"))
                    continue
                why = _degenerate(design, pop, form, cond, [c])
                if why:
                    plan.builders.append(lambda cl=group_claim, lb=label, w=why: Check(cl, lb, "skipped", reason=w))
                    continue
                probe = plan.moment(EstimatorSpec(Family.HT, target, cond), (c.cluster_id, form.strategy))
                plan.builders.append(lambda cl=group_claim, lb=label, p=probe: _result_check(pop, design, cl, lb, p))
        denom = cond.population_denominator(cen, pop.J)
        for form in all_population_forms():
            target = Target(form)
            label = f"E[{target}|{cond}] = estimand"
            if denom == 0:
                plan.builders.append(lambda cl=pop_claim, lb=label: Check(cl, lb, "skipped", reason="baseline denominator is 0"))
                continue
            why = _degenerate(design, pop, form, cond, pop.clusters)
            if why:
                plan.builders.append(lambda cl=pop_claim, lb=label, w=why: Check(cl, lb, "skipped", reason=w))
                continue
            probe = plan.moment(EstimatorSpec(Family.HT, target, cond))
            plan.builders.append(lambda cl=pop_claim, lb=label, p=probe: _result_check(pop, design, cl, lb, p))


def _result_check(pop, design, claim, label, probe: _MomentProbe) -> Check:
    report = _report(pop, design, probe, Policy.PROPAGATE)
    return _exact_check(claim, label, report.expectation, report.estimand, probe.n_undefined)


def _plan_theorems(plan: _Plan, pop: Population, design: Design, cen, claims) -> None:
    arms = [Arm(z, s) for s in Strategy for z in (1, 0)]
    for cond in (INDIVIDUAL, CLUSTER, CROSS):
        for c in (pop.clusters if "Theorem1" in claims else ()):
            for arm in arms:
                target = Target(arm, c.cluster_id)
                label = f"E[Var^({target}|{cond}) | Q_{c.cluster_id}={arm.strategy.value}] = Var"
                failed = [n for n, ok in group_preconditions(design, c, arm, cond) if not ok]
                if failed:
                    plan.builders.append(lambda lb=label, f=failed: Check("Theorem1", lb, "skipped", reason="; ".join(f)))
                    continue
                given = (c.cluster_id, arm.strategy)
                vp = plan.moment(EstimatorSpec(Family.HT, target, cond, VARIANCE), given)
                pp = plan.moment(EstimatorSpec(Family.HT, target, cond), given)
                plan.builders.append(lambda lb=label, vp=vp, pp=pp: _theorem_check("Theorem1", lb, vp, pp))
        for arm in (arms if "Theorem2" in claims else ()):
            target = Target(arm)
            label = f"E[Var^({target}|{cond})] = Var"
            failed = [n for n, ok in population_preconditions(pop, design, arm, cond, cen) if not ok]
            if failed:
                plan.builders.append(lambda lb=label, f=failed: Check("Theorem2", lb, "skipped", reason="; ".join(f)))
                continue
            vp = plan.moment(EstimatorSpec(Family.HT, target, cond, VARIANCE))
            pp = plan.moment(EstimatorSpec(Family.HT, target, cond))
            plan.builders.append(lambda lb=label, vp=vp, pp=pp: _theorem_check("Theorem2", lb, vp, pp))


def _theorem_check(claim, label, vprobe: _MomentProbe, pprobe: _MomentProbe) -> Check:
    expected_estimate = vprobe.moments(Policy.PROPAGATE)[0]
    true_variance = pprobe.moments(Policy.PROPAGATE)[1]
    check = _exact_check(claim, label, expected_estimate, true_variance,
                         vprobe.n_undefined + pprobe.n_undefined)
    if check.status == "pass" and any(v < 0 for v in vprobe.counts):
        return Check(claim, label, "fail", expected_estimate, true_variance, reason="negative variance estimate")
    return check


def _plan_subgroup_families(plan: _Plan, pop: Population, design: Design) -> None:
    for c in pop.clusters:
        for s in Strategy:
            for z in (1, 0):
                arm = Arm(z, s)
                target = Target(arm, c.cluster_id)
                nat = EstimatorSpec(Family.NATURAL, target, INDIVIDUAL)
                haj = EstimatorSpec(Family.HAJEK, target, INDIVIDUAL)
                label = f"{target}|b"
                skip = "M_jb=0" if c.M_b == 0 else None
                if skip is None and design.arm_size(c.cluster_id, s, z) == 0:
                    skip = f"degenerate arm {arm} in cluster {c.cluster_id}"
                if skip:
                    plan.builders.append(lambda lb=label, w=skip: Check("HajekEqualsNatural", lb, "skipped", reason=w))
                    for fam in ("natural", "hajek"):
                        plan.builders.append(lambda lb=f"{fam}:{label}", w=skip: Check("ZeroImputeBias", lb, "skipped", reason=w))
                    continue
                given = (c.cluster_id, s)
                agree = plan.agreement(nat, haj, given)
                plan.builders.append(lambda lb=label, a=agree: Check(
                    "HajekEqualsNatural", lb, "pass" if a.mismatches == 0 else "fail",
                    lhs=Fraction(a.mismatches), rhs=Fraction(0),
                    reason=f"{a.n_undefined}/{a.n} undefined"))
                for spec in (nat, haj):
                    probe = plan.moment(spec, given)
                    plan.builders.append(lambda lb=f"{spec.family.value}:{label}", p=probe: _zero_impute_check(pop, design, lb, p))


def _zero_impute_check(pop, design, label, probe: _MomentProbe) -> Check:
    report = _report(pop, design, probe, Policy.ZERO)
    mean, truth = report.expectation, report.estimand
    ok = abs(mean) <= abs(truth)
    if probe.n_undefined and truth != 0:
        ok = abs(mean) < abs(truth)
    reason = f"{probe.n_undefined}/{probe.n} undefined"
    return Check("ZeroImputeBias", label, "pass" if ok else "fail", mean, truth, reason=reason)


def verify_all(pop: Population, design: Design, budget: int = DEFAULT_BUDGET,
               claims: Iterable[str] = ALL_CLAIMS) -> VerificationSuite:
    """Check every applicable unbiasedness and variance claim by full enumeration.

    Group-level claims are conditional on the cluster's strategy; they are
    evaluated on the matching sub-stream of the full enumeration, which is the
    conditional enumeration for that cluster.
    """
    claims = set(claims)
    unknown = claims - set(ALL_CLAIMS)
    if unknown:
        raise ValueError(f"unknown claims: {sorted(unknown)}")
    total = _check_budget(pop, design, budget)
    cen = census(pop)
    plan = _Plan()
    if claims & {f"Result{i}" for i in range(1, 7)}:
        _plan_results(plan, pop, design, cen)
    if claims & {"Theorem1", "Theorem2"}:
        _plan_theorems(plan, pop, design, cen, claims)
    if claims & {"HajekEqualsNatural", "ZeroImputeBias"}:
        _plan_subgroup_families(plan, pop, design)
    _run(pop, design, enumerate_full(pop, design), plan.probes)
    checks = tuple(c for c in (b() for b in plan.builders) if c.claim in claims)
    return VerificationSuite(checks=checks, n_assignments=total)


# ------------------------------------------------------------ diagnostics

@dataclass(frozen=True)
class UndefinednessReport:
    family: Family
    target: Target
    n_undefined: int
    n_assignments: int
    zero_imputed_expectation: Fraction
    estimand: Value
    bias: Value

    @property
    def fraction_undefined(self) -> Fraction:
        return Fraction(self.n_undefined, self.n_assignments)


def undefinedness_census(pop: Population, design: Design, family: Family, target: Target,
                         cond: Conditioning = INDIVIDUAL,
                         budget: int = DEFAULT_BUDGET) -> UndefinednessReport | Undefined:
    """How often a natural/Hajek group estimate is undefined, and the bias of zero-imputing it."""
    if family is Family.HT:
        raise ValueError("undefinedness census applies to the natural and Hajek families")
    if cond != INDIVIDUAL or target.is_population:
        raise ValueError("undefinedness census needs a group-level target under Individual(b)")
    if pop.cluster(target.cluster_id).M_b == 0:
        return Undefined(f"no subgroup members in cluster {target.cluster_id}")
    report = exact_moments(pop, design, EstimatorSpec(family, target, cond), policy=Policy.ZERO, budget=budget)
    return UndefinednessReport(
        family=family, target=target, n_undefined=report.n_undefined,
        n_assignments=report.n_assignments, zero_imputed_expectation=report.expectation,
        estimand=report.estimand, bias=report.bias,
    )


@dataclass(frozen=True)
class MonteCarloReport:
    spec: EstimatorSpec
    n_draws: int
    n_undefined: int
    mean: Value
    std: float

    @property
    def standard_error(self) -> float:
        return self.std / math.sqrt(self.n_draws - self.n_undefined)


def monte_carlo(pop: Population, design: Design, spec: EstimatorSpec, seed: int, count: int) -> MonteCarloReport:
    """Sample mean of an estimator over ``count`` seeded draws (exact mean, float spread)."""
    return monte_carlo_many(pop, design, [spec], seed, count)[0]


def monte_carlo_many(pop: Population, design: Design, specs: Sequence[EstimatorSpec],
                     seed: int, count: int) -> list[MonteCarloReport]:
    """Several estimators evaluated on one shared set of draws.

    Group-level specs only see the draws in which their cluster has the
    target strategy.
    """
    probes = []
    for spec in specs:
        given = None if spec.target.is_population else (str(spec.target.cluster_id), spec.target.form.strategy)
        probes.append(_MomentProbe(spec, given))
    # repeated draws are evaluated once and weighted by multiplicity
    cache: dict = {}
    for asg, weight in Counter(sample(pop, design, seed, count)).items():
        for probe in probes:
            if probe.given is None or asg.q[probe.given[0]] is probe.given[1]:
                probe.observe(pop, design, asg, cache, weight)
    out = []
    for spec, probe in zip(specs, probes):
        mean, var = probe.moments(Policy.PROPAGATE)
        std = math.sqrt(float(var)) if is_defined(var) else math.nan
        out.append(MonteCarloReport(spec, probe.n, probe.n_undefined, mean, std))
    return out
