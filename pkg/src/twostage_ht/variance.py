"""Unbiased variance estimators for the HT arm-mean estimators.

The group-level estimator treats the arm of a cluster as a simple random sample
without replacement of the inflated outcomes ``u_i = Y_i * mask_i * n_j / M``;
the population-level estimator is the two-stage analogue (between-cluster term
plus inflated within-cluster terms).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .estimands import Arm, Conditioning, Target, Value
from .estimators import ht_group_value, ht_population_value
from .model import Assignment, Cluster, Design, Population, Undefined, census, is_defined


@dataclass(frozen=True)
class VarianceEstimate:
    value: Value
    target: Target
    conditioning: Conditioning
    preconditions: tuple[tuple[str, bool], ...]

    @property
    def defined(self) -> bool:
        return is_defined(self.value)

    @property
    def failed(self) -> tuple[str, ...]:
        return tuple(name for name, ok in self.preconditions if not ok)


def _require_arm(arm) -> Arm:
    if not isinstance(arm, Arm):
        raise TypeError(f"variance estimators are defined for arm means only, got {arm}")
    return arm


def group_preconditions(design: Design, cluster: Cluster, arm: Arm, cond: Conditioning) -> list[tuple[str, bool]]:
    """Design-level conditions (independent of the realized draw)."""
    checks = []
    if cond.uses_b:
        checks.append((f"M_jb>0 [cluster {cluster.cluster_id}]", cluster.M_b > 0))
    size = design.arm_size(cluster.cluster_id, arm.strategy, arm.z)
    p_name = "P" if arm.z else "(1-P)"
    checks.append((f"n_j*{p_name}-1>0 [cluster {cluster.cluster_id}, {arm}]", size - 1 > 0))
    checks.append((f"non-degenerate arm [cluster {cluster.cluster_id}, {arm}]", size < cluster.n))
    return checks


def var_ht_group_value(design: Design, cluster: Cluster, arm: Arm, zvec, cond: Conditioning,
                       cache: dict | None = None) -> Fraction:
    """Group variance estimate; assumes preconditions hold and the cluster is in ``arm.strategy``."""
    if cache is not None:
        key = ("var", cluster.cluster_id, zvec, arm, cond)
        hit = cache.get(key)
        if hit is None:
            hit = cache[key] = var_ht_group_value(design, cluster, arm, zvec, cond)
        return hit
    if not cond.cluster_mask(cluster):
        return Fraction(0)
    cid = cluster.cluster_id
    p = design.p(cid, arm.strategy)
    prob = p if arm.z else 1 - p
    size = design.arm_size(cid, arm.strategy, arm.z)
    inflation = Fraction(cluster.n, cond.group_denominator(cluster))
    # centring uses the arm estimate under the same conditioning
    center = ht_group_value(design, cluster, arm.strategy, zvec, arm, cond)
    ss = Fraction(0)
    for s, zi in zip(cluster.subjects, zvec):
        if zi != arm.z:
            continue
        u = s.y(arm.z, arm.strategy) * inflation if cond.subject_mask(s) else Fraction(0)
        ss += (u - center) ** 2
    return (1 - prob) * ss / ((size - 1) * size)


def var_ht_group(pop: Population, design: Design, asg: Assignment, cluster_id, arm: Arm,
                 cond: Conditioning) -> VarianceEstimate:
    arm = _require_arm(arm)
    cluster = pop.cluster(cluster_id)
    realized = asg.q[cluster.cluster_id]
    checks = [(f"Q_j={arm.strategy.value} [cluster {cluster.cluster_id}]", realized is arm.strategy)]
    checks += group_preconditions(design, cluster, arm, cond)
    target = Target(arm, cluster.cluster_id)
    failed = [name for name, ok in checks if not ok]
    if failed:
        return VarianceEstimate(Undefined("precondition failed: " + "; ".join(failed)),
                                target, cond, tuple(checks))
    value = var_ht_group_value(design, cluster, arm, asg.z[cluster.cluster_id], cond)
    return VarianceEstimate(value, target, cond, tuple(checks))


def population_preconditions(pop: Population, design: Design, arm: Arm, cond: Conditioning,
                             cen=None) -> list[tuple[str, bool]]:
    cen = cen or census(pop)
    denom = cond.population_denominator(cen, pop.J)
    n_arm = design.n_clusters(arm.strategy)
    checks = [
        (f"baseline denominator>0 [{cond}]", denom > 0),
        (f"J*Pr_{arm.strategy.value}-1>0", n_arm - 1 > 0),
    ]
    for c in pop.clusters:
        if cond.contributes(c):
            checks += [(name, ok) for name, ok in group_preconditions(design, c, arm, cond)
                       if not name.startswith("M_jb")]
    return checks


def var_ht_population_value(pop: Population, design: Design, asg: Assignment, arm: Arm,
                            cond: Conditioning, cache: dict | None = None) -> Fraction:
    """Population variance estimate; assumes preconditions hold."""
    if cache is not None:
        key = ("pop-var", arm, cond,
               tuple((cid, asg.z[cid]) for cid in pop.cluster_ids if asg.q[cid] is arm.strategy))
        hit = cache.get(key)
        if hit is None:
            hit = cache[key] = _var_population(pop, design, asg, arm, cond, cache)
        return hit
    return _var_population(pop, design, asg, arm, cond, None)


def _var_population(pop, design, asg, arm, cond, cache) -> Fraction:
    cen = cache.get("census") if cache is not None else None
    if cen is None:
        cen = census(pop)
        if cache is not None:
            cache["census"] = cen
    strategy = arm.strategy
    M = cond.population_denominator(cen, pop.J)
    J = pop.J
    pr = design.pr(strategy)
    n_arm = design.n_clusters(strategy)
    overall = ht_population_value(pop, design, asg, arm, cond, cache)
    between = Fraction(0)
    within = Fraction(0)
    for c in pop.clusters:
        if asg.q[c.cluster_id] is not strategy:
            continue
        zvec = asg.z[c.cluster_id]
        g = ht_group_value(design, c, strategy, zvec, arm, cond, cache)
        g = g if is_defined(g) else Fraction(0)
        between += (g * Fraction(J, M) - overall) ** 2
        if cond.contributes(c):
            within += var_ht_group_value(design, c, arm, zvec, cond, cache)
    between = (1 - pr) * between / ((n_arm - 1) * n_arm)
    return between + within / (pr * M * M)


def var_ht_population(pop: Population, design: Design, asg: Assignment, arm: Arm,
                      cond: Conditioning) -> VarianceEstimate:
    arm = _require_arm(arm)
    checks = population_preconditions(pop, design, arm, cond)
    target = Target(arm)
    failed = [name for name, ok in checks if not ok]
    if failed:
        return VarianceEstimate(Undefined("precondition failed: " + "; ".join(failed)),
                                target, cond, tuple(checks))
    return VarianceEstimate(var_ht_population_value(pop, design, asg, arm, cond), target, cond, tuple(checks))
