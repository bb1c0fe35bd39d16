"""Horvitz-Thompson, natural and Hajek estimators evaluated on one realized assignment."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from fractions import Fraction

from .estimands import (
    DE,
    IE,
    INDIVIDUAL,
    OE,
    TE,
    Arm,
    Conditioning,
    Form,
    Marginal,
    Target,
    Value,
    contrast_operands,
    difference,
)
from .model import (
    Assignment,
    Cluster,
    Design,
    Population,
    Strategy,
    Undefined,
    ValidationError,
    census,
    is_defined,
)


class Family(enum.Enum):
    HT = "ht"
    NATURAL = "natural"
    HAJEK = "hajek"


class Policy(enum.Enum):
    PROPAGATE = "propagate"
    ZERO = "zero"


class DegenerateArmError(ValidationError):
    """The requested arm has no (or every) subject treated, so it is never observed."""


STRATEGY_MISMATCH = "strategy-mismatch"
EMPTY_SUBGROUP = "empty-subgroup"
EMPTY_BASELINE = "empty-baseline-subgroup"
EMPTY_REALIZED = "empty-realized-arm"


@dataclass(frozen=True)
class Estimate:
    value: Value
    family: Family
    target: Target
    conditioning: Conditioning
    policy: Policy = Policy.PROPAGATE
    imputed: bool = False

    @property
    def defined(self) -> bool:
        return is_defined(self.value)

    def with_policy(self, policy: Policy) -> Estimate:
        """Apply ``policy``; ZERO replaces Undefined by 0 and records it."""
        if policy is Policy.ZERO and not self.defined:
            return replace(self, value=Fraction(0), policy=policy, imputed=True)
        return replace(self, policy=policy)


def arm_probability(design: Design, cluster_id: str, strategy: Strategy, z: int) -> Fraction:
    p = design.p(cluster_id, strategy)
    prob = p if z else 1 - p
    if prob == 0:
        raise DegenerateArmError(
            f"degenerate arm: z={z} is never assigned in cluster {cluster_id!r} under {strategy.value}"
        )
    return prob


def ht_group_value(design: Design, cluster: Cluster, strategy: Strategy, zvec, form: Form,
                   cond: Conditioning, cache: dict | None = None) -> Value:
    """HT group estimate for a cluster realized under ``strategy`` with treatment vector ``zvec``.

    Depends only on the cluster's own draw, which is what makes ``cache`` valid.
    """
    if cache is not None:
        key = (cluster.cluster_id, strategy, zvec, form, cond)
        hit = cache.get(key)
        if hit is None:
            hit = cache[key] = ht_group_value(design, cluster, strategy, zvec, form, cond)
        return hit

    if isinstance(form, DE):
        one, zero = contrast_operands(form)
        return difference(ht_group_value(design, cluster, strategy, zvec, one, cond),
                          ht_group_value(design, cluster, strategy, zvec, zero, cond))

    denom = cond.group_denominator(cluster)
    if denom == 0:
        return Undefined(f"{EMPTY_SUBGROUP}: M_jb=0 in cluster {cluster.cluster_id}")
    if not cond.cluster_mask(cluster):
        return Fraction(0)

    if isinstance(form, Arm):
        prob = arm_probability(design, cluster.cluster_id, strategy, form.z)
        total = sum(
            (s.y(form.z, strategy) for s, zi in zip(cluster.subjects, zvec)
             if zi == form.z and cond.subject_mask(s)),
            Fraction(0),
        )
        return total / (denom * prob)
    if isinstance(form, Marginal):
        # observed outcomes, no inverse weighting
        total = sum(
            (s.y(zi, strategy) for s, zi in zip(cluster.subjects, zvec) if cond.subject_mask(s)),
            Fraction(0),
        )
        return total / denom
    raise ValidationError(f"{form} has no group-level estimator")


def ht_group(pop: Population, design: Design, asg: Assignment, cluster_id, form: Form,
             cond: Conditioning, cache: dict | None = None) -> Estimate:
    cluster = pop.cluster(cluster_id)
    if not isinstance(form, (Arm, Marginal, DE)):
        raise ValidationError(f"{form} has no group-level estimator")
    target = Target(form, cluster.cluster_id)
    strategy = form.strategy
    if asg.q[cluster.cluster_id] is not strategy:
        value: Value = Undefined(
            f"{STRATEGY_MISMATCH}: cluster {cluster.cluster_id} realized "
            f"{asg.q[cluster.cluster_id].value}, target needs {strategy.value}")
    else:
        value = ht_group_value(design, cluster, strategy, asg.z[cluster.cluster_id], form, cond, cache)
    return Estimate(value, Family.HT, target, cond)


def ht_population_value(pop: Population, design: Design, asg: Assignment, form: Form,
                        cond: Conditioning, cache: dict | None = None) -> Value:
    if isinstance(form, (DE, IE, TE, OE)):
        one, zero = contrast_operands(form)
        return difference(ht_population_value(pop, design, asg, one, cond, cache),
                          ht_population_value(pop, design, asg, zero, cond, cache))
    strategy = form.strategy
    if cache is not None:
        # the estimate only sees the draws of clusters realized under ``strategy``
        key = ("pop", form, cond, tuple((cid, asg.z[cid]) for cid in pop.cluster_ids if asg.q[cid] is strategy))
        hit = cache.get(key)
        if hit is None:
            hit = cache[key] = _ht_population_arm(pop, design, asg, form, cond, cache)
        return hit
    return _ht_population_arm(pop, design, asg, form, cond, None)


def _ht_population_arm(pop, design, asg, form, cond, cache) -> Value:
    cen = cache.get("census") if cache is not None else None
    if cen is None:
        cen = census(pop)
        if cache is not None:
            cache["census"] = cen
    denom = cond.population_denominator(cen, pop.J)
    if denom == 0:
        return Undefined(f"{EMPTY_BASELINE}: no cluster qualifies under conditioning {cond}")
    strategy = form.strategy
    total = Fraction(0)
    for c in pop.clusters:
        if asg.q[c.cluster_id] is not strategy:
            continue
        v = ht_group_value(design, c, strategy, asg.z[c.cluster_id], form, cond, cache)
        if is_defined(v):
            total += v
    return total / (denom * design.pr(strategy))


def ht_population(pop: Population, design: Design, asg: Assignment, form: Form,
                  cond: Conditioning, cache: dict | None = None) -> Estimate:
    value = ht_population_value(pop, design, asg, form, cond, cache)
    return Estimate(value, Family.HT, Target(form), cond)


def ht_contrast(pop: Population, design: Design, asg: Assignment, contrast,
                cond: Conditioning, cache: dict | None = None) -> Estimate:
    if not isinstance(contrast, (DE, IE, TE, OE)):
        raise ValidationError(f"{contrast} is not a contrast")
    return ht_population(pop, design, asg, contrast, cond, cache)


# ------------------------------------------------- natural and Hajek (group level)

def _check_subgroup_target(pop, asg, cluster_id, arm, cond, family):
    if cond != INDIVIDUAL:
        raise ValidationError(f"{family.value} estimator is only available under Individual(b) conditioning")
    if not isinstance(arm, Arm):
        raise ValidationError(f"{family.value} estimator targets an arm mean, got {arm}")
    cluster = pop.cluster(cluster_id)
    target = Target(arm, cluster.cluster_id)
    if asg.q[cluster.cluster_id] is not arm.strategy:
        return cluster, target, Undefined(
            f"{STRATEGY_MISMATCH}: cluster {cluster.cluster_id} realized "
            f"{asg.q[cluster.cluster_id].value}, target needs {arm.strategy.value}")
    return cluster, target, None


def natural_group_value(cluster: Cluster, strategy: Strategy, zvec, z: int) -> Value:
    ys = [s.y(z, strategy) for s, zi in zip(cluster.subjects, zvec) if zi == z and s.in_b]
    if not ys:
        return Undefined(f"{EMPTY_REALIZED}: no subgroup member of cluster {cluster.cluster_id} has z={z}")
    return sum(ys, Fraction(0)) / len(ys)


def hajek_group_value(design: Design, cluster: Cluster, strategy: Strategy, zvec, z: int) -> Value:
    weight = 1 / arm_probability(design, cluster.cluster_id, strategy, z)
    num = den = Fraction(0)
    for s, zi in zip(cluster.subjects, zvec):
        if zi == z and s.in_b:
            num += weight * s.y(z, strategy)
            den += weight
    if den == 0:
        return Undefined(f"{EMPTY_REALIZED}: no subgroup member of cluster {cluster.cluster_id} has z={z}")
    return num / den


def natural_group(pop: Population, design: Design, asg: Assignment, cluster_id, arm: Arm,
                  cond: Conditioning = INDIVIDUAL) -> Estimate:
    cluster, target, mismatch = _check_subgroup_target(pop, asg, cluster_id, arm, cond, Family.NATURAL)
    value = mismatch or natural_group_value(cluster, arm.strategy, asg.z[cluster.cluster_id], arm.z)
    return Estimate(value, Family.NATURAL, target, cond)


def hajek_group(pop: Population, design: Design, asg: Assignment, cluster_id, arm: Arm,
                cond: Conditioning = INDIVIDUAL) -> Estimate:
    cluster, target, mismatch = _check_subgroup_target(pop, asg, cluster_id, arm, cond, Family.HAJEK)
    value = mismatch or hajek_group_value(design, cluster, arm.strategy, asg.z[cluster.cluster_id], arm.z)
    return Estimate(value, Family.HAJEK, target, cond)


def estimate(pop: Population, design: Design, asg: Assignment, target: Target,
             cond: Conditioning, family: Family = Family.HT,
             policy: Policy = Policy.PROPAGATE) -> Estimate:
    """Dispatch on family and level, then apply the undefined-value policy."""
    if family is Family.HT:
        if target.is_population:
            est = ht_population(pop, design, asg, target.form, cond)
        else:
            est = ht_group(pop, design, asg, target.cluster_id, target.form, cond)
    else:
        if target.is_population:
            raise ValidationError(f"{family.value} estimator is only available at group level")
        fn = natural_group if family is Family.NATURAL else hajek_group
        est = fn(pop, design, asg, target.cluster_id, target.form, cond)
    return est.with_policy(policy)
