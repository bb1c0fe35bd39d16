from fractions import Fraction

import pytest

from twostage_ht.estimands import (
    CLUSTER,
    CONDITIONINGS,
    CROSS,
    DE,
    IE,
    INDIVIDUAL,
    OE,
    TE,
    UNCONDITIONAL,
    Arm,
    Marginal,
    Target,
    estimand,
)
from twostage_ht.estimators import (
    STRATEGY_MISMATCH,
    DegenerateArmError,
    Family,
    Policy,
    estimate,
    hajek_group,
    ht_contrast,
    ht_group,
    ht_population,
    natural_group,
)
from twostage_ht.example import EXAMPLE_Q, example_assignment
from twostage_ht.model import Assignment, Design, Strategy, ValidationError, is_defined, resolve_design
from twostage_ht.randomization import enumerate_conditional, enumerate_full

from conftest import make_population
from helpers import null_population, same

A, G = Strategy.ALPHA, Strategy.GAMMA

BASE = {"1": {"12"}, "2": {"21", "22"}, "3": {"31"}, "4": {"41", "42"}}


def assign(pop, **treated):
    sets = dict(BASE)
    sets.update({k.lstrip("c"): set(v) for k, v in treated.items()})
    return example_assignment(sets, pop)


def test_ht_group_group4_cells(pop, design):
    untreated_41 = assign(pop, c4={"42", "43"})
    treated_41 = assign(pop, c4={"41", "43"})
    assert ht_group(pop, design, untreated_41, "4", Arm(0, A), INDIVIDUAL).value == 6
    assert ht_group(pop, design, treated_41, "4", Arm(0, A), INDIVIDUAL).value == 0


def test_ht_group_group3_cell(pop, design):
    asg = assign(pop, c3={"32"})
    assert ht_group(pop, design, asg, "3", Arm(0, G), INDIVIDUAL).value == Fraction(4, 3)


def test_ht_group_marginal_is_observed_mean(pop, design):
    for asg in list(enumerate_conditional(pop, design, q={"1": A}))[::50]:
        z = dict(zip(("11", "12", "13", "14"), asg.z["1"]))
        c1 = pop.cluster("1")
        observed = [s.y(z[s.subject_id], A) for s in c1.subjects if s.subject_id in ("11", "13")]
        assert ht_group(pop, design, asg, "1", Marginal(A), INDIVIDUAL).value == sum(observed) / 2


def test_ht_group_mismatch_and_empty(pop, design):
    asg = assign(pop)
    v = ht_group(pop, design, asg, "4", Arm(0, G), INDIVIDUAL).value
    assert not is_defined(v) and STRATEGY_MISMATCH in v.reason
    assert not is_defined(ht_group(pop, design, asg, "2", Arm(0, A), INDIVIDUAL).value)
    assert is_defined(ht_group(pop, design, asg, "2", Arm(0, A), UNCONDITIONAL).value)


def test_degenerate_arm_raises():
    p = make_population({1: (1, [("a", 1, 0, 1, 0, 1), ("b", 2, 0, 2, 0, 1)]),
                         2: (1, [("c", 1, 0, 1, 0, 1), ("d", 2, 0, 2, 0, 1)])})
    d = Design(Fraction(1), Fraction(1, 2), 1, 2, {A: {"1": 2, "2": 2}, G: {"1": 1, "2": 1}},
               {"1": 2, "2": 2})
    asg = Assignment(q={"1": A, "2": G}, z={"1": (1, 1), "2": (1, 0)})
    with pytest.raises(DegenerateArmError, match="degenerate arm"):
        ht_group(p, d, asg, "1", Arm(0, A), INDIVIDUAL)
    assert ht_group(p, d, asg, "1", Arm(1, A), INDIVIDUAL).value == Fraction(3, 2)


def test_population_cross_zero_case(pop, design):
    for asg in enumerate_conditional(pop, design, q=EXAMPLE_Q):
        assert ht_population(pop, design, asg, Arm(1, A), CROSS).value == 0


def test_population_individual_worked_value(pop, design):
    asg = assign(pop, c1={"11"}, c3={"32"})
    assert ht_population(pop, design, asg, Arm(0, G), INDIVIDUAL).value == Fraction(16, 9)


def test_ht_definedness(pop, design):
    for asg in list(enumerate_full(pop, design))[::7]:
        for cond in CONDITIONINGS:
            for form in (Arm(0, A), Arm(1, G), DE(A), IE(), TE(), OE()):
                assert is_defined(ht_population(pop, design, asg, form, cond).value)
            for c in pop.clusters:
                if cond.group_denominator(c) > 0:
                    s = asg.q[c.cluster_id]
                    assert is_defined(ht_group(pop, design, asg, c.cluster_id, Arm(0, s), cond).value)


def test_constant_outcomes_unbiased(tiny):
    p, d = tiny
    flat = make_population({
        c.cluster_id: (c.in_B, [(s.subject_id, 5, 5, 5, 5, s.in_b) for s in c.subjects]) for c in p.clusters
    })
    d = resolve_design(flat, "1/2", "1/2", 1)
    stream = list(enumerate_full(flat, d))
    for cond in CONDITIONINGS:
        vals = [ht_population(flat, d, a, Arm(1, A), cond).value for a in stream]
        assert sum(vals) / len(vals) == 5


def test_null_contrasts_average_zero(pop):
    flat = null_population(pop)
    d = resolve_design(flat, "1/2", "1/4", 2)
    stream = list(enumerate_full(flat, d))
    for form in (DE(A), IE(), TE(), OE()):
        vals = [ht_contrast(flat, d, a, form, INDIVIDUAL).value for a in stream]
        assert sum(vals) == 0


def test_de_unbiased_on_example(pop, design):
    stream = list(enumerate_full(pop, design))
    vals = [ht_contrast(pop, design, a, DE(A), INDIVIDUAL).value for a in stream]
    assert sum(vals) / len(vals) == estimand(pop, design, Target(DE(A)), INDIVIDUAL)


def test_ie_zero_with_shared_strategies(tiny):
    p, d = tiny
    stream = list(enumerate_full(p, d))
    assert estimand(p, d, Target(IE()), UNCONDITIONAL) == 0
    assert sum(ht_contrast(p, d, a, IE(), UNCONDITIONAL).value for a in stream) == 0


def test_contrast_rejects_arm(pop, design):
    with pytest.raises(ValidationError):
        ht_contrast(pop, design, assign(pop), Arm(1, A), INDIVIDUAL)


def test_natural_and_hajek_example_cells(pop, design):
    ok = assign(pop, c4={"42", "43"})
    bad = assign(pop, c4={"41", "43"})
    for fn in (natural_group, hajek_group):
        assert fn(pop, design, ok, "4", Arm(0, A)).value == 3
        assert not is_defined(fn(pop, design, bad, "4", Arm(0, A)).value)
        got = [fn(pop, design, assign(pop, c3={t}), "3", Arm(0, G)).value for t in ("31", "32", "33", "34")]
        assert got == [0, 1, 2, 1]


def test_natural_constant_subgroup(mixed):
    p, d = mixed
    flat = make_population({
        c.cluster_id: (c.in_B, [(s.subject_id, s.y1_alpha, 4 if s.in_b else s.y0_alpha,
                                 s.y1_gamma, 4 if s.in_b else s.y0_gamma, s.in_b) for s in c.subjects])
        for c in p.clusters
    })
    d = resolve_design(flat, "1/2", "1/4", 1)
    for asg in enumerate_full(flat, d):
        for c in flat.clusters:
            v = natural_group(flat, d, asg, c.cluster_id, Arm(0, asg.q[c.cluster_id])).value
            assert v == 4 or not is_defined(v)


def test_hajek_equals_natural_assignmentwise(mixed):
    p, d = mixed
    for asg in enumerate_full(p, d):
        for c in p.clusters:
            for arm in (Arm(0, A), Arm(1, A), Arm(0, G), Arm(1, G)):
                assert same(natural_group(p, d, asg, c.cluster_id, arm).value,
                            hajek_group(p, d, asg, c.cluster_id, arm).value)


def test_subgroup_estimators_restricted(pop, design):
    asg = assign(pop)
    with pytest.raises(ValidationError):
        natural_group(pop, design, asg, "4", Arm(0, A), CLUSTER)
    with pytest.raises(ValidationError):
        estimate(pop, design, asg, Target(Arm(0, A)), INDIVIDUAL, Family.HAJEK)
    v = natural_group(pop, design, asg, "4", Arm(0, G)).value
    assert STRATEGY_MISMATCH in v.reason


def test_zero_policy(pop, design):
    bad = assign(pop, c4={"41", "43"})
    target = Target(Arm(0, A), "4")
    est = estimate(pop, design, bad, target, INDIVIDUAL, Family.NATURAL, Policy.ZERO)
    assert est.value == 0 and est.imputed
    est = estimate(pop, design, bad, target, INDIVIDUAL, Family.NATURAL)
    assert not est.defined and not est.imputed
