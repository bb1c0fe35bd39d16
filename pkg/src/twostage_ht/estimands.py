"""True conditional estimands computed directly from the potential outcomes."""

from __future__ import annotations

import enum
import itertools
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from .model import (
    Cluster,
    Design,
    Population,
    Strategy,
    Subject,
    SubgroupCensus,
    Undefined,
    ValidationError,
    census,
    is_defined,
)

Value = Union[Fraction, Undefined]


class Kind(enum.Enum):
    UNCONDITIONAL = "none"
    INDIVIDUAL = "b"
    CLUSTER = "B"
    CROSS = "B,b"


@dataclass(frozen=True)
class Conditioning:
    """Which baseline subgroup the estimand is restricted to.

    Individual(b) averages over flagged subjects within each cluster, Cluster(B)
    keeps whole flagged clusters, Cross(B,b) does both.
    """

    kind: Kind

    @property
    def uses_b(self) -> bool:
        return self.kind in (Kind.INDIVIDUAL, Kind.CROSS)

    @property
    def uses_B(self) -> bool:
        return self.kind in (Kind.CLUSTER, Kind.CROSS)

    def cluster_mask(self, cluster: Cluster) -> bool:
        return cluster.in_B if self.uses_B else True

    def subject_mask(self, subject: Subject) -> bool:
        return subject.in_b if self.uses_b else True

    def group_denominator(self, cluster: Cluster) -> int:
        """M_{j,b} for b-conditioning, n_j otherwise."""
        return cluster.M_b if self.uses_b else cluster.n

    def population_denominator(self, cen: SubgroupCensus, J: int) -> int:
        return {
            Kind.UNCONDITIONAL: J,
            Kind.INDIVIDUAL: cen.M_b,
            Kind.CLUSTER: cen.M_B,
            Kind.CROSS: cen.M_Bb,
        }[self.kind]

    def contributes(self, cluster: Cluster) -> bool:
        """Whether the cluster can carry a nonzero group-level term."""
        return self.cluster_mask(cluster) and self.group_denominator(cluster) > 0

    def __str__(self) -> str:
        return self.kind.value


UNCONDITIONAL = Conditioning(Kind.UNCONDITIONAL)
INDIVIDUAL = Conditioning(Kind.INDIVIDUAL)
CLUSTER = Conditioning(Kind.CLUSTER)
CROSS = Conditioning(Kind.CROSS)
CONDITIONINGS = (UNCONDITIONAL, INDIVIDUAL, CLUSTER, CROSS)


# ------------------------------------------------------------------- forms

@dataclass(frozen=True)
class Arm:
    z: int
    strategy: Strategy

    def __str__(self) -> str:
        return f"Ybar({self.z};{self.strategy.value})"


@dataclass(frozen=True)
class Marginal:
    strategy: Strategy

    def __str__(self) -> str:
        return f"Ybar({self.strategy.value})"


@dataclass(frozen=True)
class DE:
    strategy: Strategy = Strategy.ALPHA

    def __str__(self) -> str:
        return f"DE({self.strategy.value})"


@dataclass(frozen=True)
class IE:
    def __str__(self) -> str:
        return "IE"


@dataclass(frozen=True)
class TE:
    def __str__(self) -> str:
        return "TE"


@dataclass(frozen=True)
class OE:
    def __str__(self) -> str:
        return "OE"


Form = Union[Arm, Marginal, DE, IE, TE, OE]
Contrast = Union[DE, IE, TE, OE]


def contrast_operands(form: Contrast) -> tuple[Union[Arm, Marginal], Union[Arm, Marginal]]:
    """(minuend, subtrahend) of a contrast."""
    A, G = Strategy.ALPHA, Strategy.GAMMA
    if isinstance(form, DE):
        return Arm(1, form.strategy), Arm(0, form.strategy)
    if isinstance(form, IE):
        return Arm(0, A), Arm(0, G)
    if isinstance(form, TE):
        return Arm(1, A), Arm(0, G)
    if isinstance(form, OE):
        return Marginal(A), Marginal(G)
    raise TypeError(f"not a contrast: {form!r}")


def all_population_forms() -> list[Form]:
    forms: list[Form] = [Arm(z, s) for s in Strategy for z in (1, 0)]
    forms += [Marginal(s) for s in Strategy]
    forms += [DE(Strategy.ALPHA), DE(Strategy.GAMMA), IE(), TE(), OE()]
    return forms


def all_group_forms() -> list[Form]:
    forms: list[Form] = [Arm(z, s) for s in Strategy for z in (1, 0)]
    forms += [Marginal(s) for s in Strategy]
    forms += [DE(s) for s in Strategy]
    return forms


@dataclass(frozen=True)
class Target:
    """A form at group level (``cluster_id`` set) or population level (``cluster_id`` None)."""

    form: Form
    cluster_id: str | None = None

    @property
    def is_population(self) -> bool:
        return self.cluster_id is None

    def __str__(self) -> str:
        level = "pop" if self.cluster_id is None else f"cluster:{self.cluster_id}"
        return f"{self.form}@{level}"


_FORM_RE = re.compile(
    r"""^(?:
        Ybar\(\s*(?P<z>[01])\s*;\s*(?P<arm_s>\w+)\s*\)
      | Ybar\(\s*(?P<marg_s>\w+)\s*\)
      | DE(?:\(\s*(?P<de_s>\w+)\s*\))?
      | (?P<other>IE|TE|OE)
    )$""",
    re.VERBOSE,
)


def parse_target(text: str) -> tuple[Target, Conditioning]:
    """Parse strings such as ``DE@pop|b`` or ``Ybar(0;gamma)@cluster:3|B,b``.

    A missing ``|...`` part means no conditioning.
    """
    body, _, cond_text = text.strip().partition("|")
    form_text, _, level_text = body.partition("@")
    m = _FORM_RE.match(form_text.strip())
    if not m:
        raise ValidationError(f"cannot parse estimand form {form_text!r}")
    if m["z"] is not None:
        form: Form = Arm(int(m["z"]), Strategy.parse(m["arm_s"]))
    elif m["marg_s"] is not None:
        form = Marginal(Strategy.parse(m["marg_s"]))
    elif m["other"] is not None:
        form = {"IE": IE(), "TE": TE(), "OE": OE()}[m["other"]]
    else:
        form = DE(Strategy.parse(m["de_s"]) if m["de_s"] else Strategy.ALPHA)

    level_text = level_text.strip() or "pop"
    if level_text in ("pop", "population"):
        cluster_id = None
    elif level_text.startswith("cluster:"):
        cluster_id = level_text[len("cluster:"):].strip()
        if isinstance(form, (IE, TE, OE)):
            raise ValidationError(f"{form} is only defined at population level")
    else:
        raise ValidationError(f"cannot parse level {level_text!r}")

    key = cond_text.replace(" ", "")
    conds = {"": UNCONDITIONAL, "none": UNCONDITIONAL, "b": INDIVIDUAL, "B": CLUSTER,
             "B,b": CROSS, "b,B": CROSS}
    if key not in conds:
        raise ValidationError(f"cannot parse conditioning {cond_text!r}")
    return Target(form, cluster_id), conds[key]


def difference(a: Value, b: Value) -> Value:
    """``a - b`` with Undefined propagating (left operand's reason wins)."""
    if not is_defined(a):
        return a
    if not is_defined(b):
        return b
    return a - b


# -------------------------------------------------------------- subject level

def individual_avg(subject: Subject, z: int, strategy: Strategy) -> Fraction:
    """Average outcome under own treatment ``z`` over the within-cluster
    randomizations of ``strategy``.

    Stratified interference makes every counterfactual in that set equal, so the
    average is the stored potential outcome.
    """
    return subject.y(z, strategy)


def individual_marginal(design: Design, cluster_id: str, subject: Subject, strategy: Strategy) -> Fraction:
    p = design.p(cluster_id, strategy)
    return p * individual_avg(subject, 1, strategy) + (1 - p) * individual_avg(subject, 0, strategy)


def individual_marginal_by_enumeration(design: Design, cluster: Cluster, subject: Subject,
                                       strategy: Strategy) -> Fraction:
    """Same quantity averaged explicitly over all treated subsets of the cluster."""
    pos = cluster.subjects.index(subject)
    k = design.k[strategy][cluster.cluster_id]
    total, count = Fraction(0), 0
    for treated in itertools.combinations(range(cluster.n), k):
        total += subject.y(int(pos in treated), strategy)
        count += 1
    return total / count


def _subject_term(design: Design, cluster: Cluster, subject: Subject, form) -> Fraction:
    if isinstance(form, Arm):
        return individual_avg(subject, form.z, form.strategy)
    return individual_marginal(design, cluster.cluster_id, subject, form.strategy)


# ---------------------------------------------------------------- group level

def group_estimand(pop: Population, design: Design, cluster_id, form: Form,
                   cond: Conditioning) -> Value:
    cluster = pop.cluster(cluster_id)
    if isinstance(form, DE):
        one, zero = contrast_operands(form)
        return difference(group_estimand(pop, design, cluster_id, one, cond),
                          group_estimand(pop, design, cluster_id, zero, cond))
    if not isinstance(form, (Arm, Marginal)):
        raise ValidationError(f"{form} has no group-level estimand")
    denom = cond.group_denominator(cluster)
    if denom == 0:
        return Undefined(f"M_jb=0 in cluster {cluster.cluster_id}")
    cmask = cond.cluster_mask(cluster)
    total = sum(
        (_subject_term(design, cluster, s, form) * cmask * cond.subject_mask(s)
         for s in cluster.subjects),
        Fraction(0),
    )
    # leading cluster indicator of the cross-conditional row; idempotent with the term mask
    return Fraction(int(cmask)) * total / denom


# ----------------------------------------------------------- population level

def population_estimand(pop: Population, design: Design, form: Form,
                        cond: Conditioning) -> Value:
    if isinstance(form, (DE, IE, TE, OE)):
        one, zero = contrast_operands(form)
        return difference(population_estimand(pop, design, one, cond),
                          population_estimand(pop, design, zero, cond))
    denom = cond.population_denominator(census(pop), pop.J)
    if denom == 0:
        return Undefined(f"empty baseline subgroup for conditioning {cond}")
    total = Fraction(0)
    for c in pop.clusters:
        v = group_estimand(pop, design, c.cluster_id, form, cond)
        if is_defined(v):
            total += v
    return total / denom


def estimand(pop: Population, design: Design, target: Target, cond: Conditioning) -> Value:
    if target.is_population:
        return population_estimand(pop, design, target.form, cond)
    return group_estimand(pop, design, target.cluster_id, target.form, cond)
