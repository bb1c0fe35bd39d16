"""Finite population, subgroup census, two-stage design and realized assignments."""

from __future__ import annotations

import csv
import enum
import io
import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

POPULATION_COLUMNS = (
    "cluster_id",
    "subject_id",
    "y1_alpha",
    "y0_alpha",
    "y1_gamma",
    "y0_gamma",
    "in_b",
    "in_B",
)
ASSIGNMENT_COLUMNS = ("cluster_id", "subject_id", "q", "z")


class ValidationError(ValueError):
    """Input data or design violates a modelling assumption."""


class Strategy(enum.Enum):
    ALPHA = "alpha"
    GAMMA = "gamma"

    @property
    def other(self) -> Strategy:
        return Strategy.GAMMA if self is Strategy.ALPHA else Strategy.ALPHA

    @classmethod
    def parse(cls, text: str) -> Strategy:
        key = text.strip().lower()
        aliases = {"alpha": cls.ALPHA, "a": cls.ALPHA, "1": cls.ALPHA,
                   "gamma": cls.GAMMA, "g": cls.GAMMA, "0": cls.GAMMA}
        if key not in aliases:
            raise ValidationError(f"unknown strategy {text!r}")
        return aliases[key]


@dataclass(frozen=True)
class Undefined:
    """A quantity whose defining denominator is zero (or otherwise unavailable)."""

    reason: str

    def __str__(self) -> str:
        return "NA"


def is_defined(value) -> bool:
    return not isinstance(value, Undefined)


def id_key(identifier: str):
    """Sort key: numeric ids compare numerically, everything else lexically."""
    if re.fullmatch(r"[+-]?\d+", identifier):
        return (0, int(identifier), identifier)
    return (1, 0, identifier)


@dataclass(frozen=True)
class Subject:
    subject_id: str
    y1_alpha: Fraction
    y0_alpha: Fraction
    y1_gamma: Fraction
    y0_gamma: Fraction
    in_b: bool

    def y(self, z: int, strategy: Strategy) -> Fraction:
        """Potential outcome under own treatment ``z`` and cluster coverage ``strategy``."""
        if strategy is Strategy.ALPHA:
            return self.y1_alpha if z else self.y0_alpha
        return self.y1_gamma if z else self.y0_gamma


@dataclass(frozen=True)
class Cluster:
    cluster_id: str
    subjects: tuple[Subject, ...]
    in_B: bool

    def __post_init__(self):
        if not self.subjects:
            raise ValidationError(f"cluster {self.cluster_id!r} has no subjects")
        ids = [s.subject_id for s in self.subjects]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate subject id in cluster {self.cluster_id!r}")
        ordered = tuple(sorted(self.subjects, key=lambda s: id_key(s.subject_id)))
        object.__setattr__(self, "subjects", ordered)

    @property
    def n(self) -> int:
        return len(self.subjects)

    @property
    def M_b(self) -> int:
        """Number of subjects flagged in the individual-level subgroup."""
        return sum(1 for s in self.subjects if s.in_b)


@dataclass(frozen=True)
class Population:
    clusters: tuple[Cluster, ...]
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        ids = [c.cluster_id for c in self.clusters]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate cluster id")
        if len(ids) <= 1:
            raise ValidationError(f"need J > 1 clusters, got {len(ids)}")
        ordered = tuple(sorted(self.clusters, key=lambda c: id_key(c.cluster_id)))
        object.__setattr__(self, "clusters", ordered)
        object.__setattr__(self, "_index", {c.cluster_id: c for c in ordered})

    @property
    def J(self) -> int:
        return len(self.clusters)

    @property
    def cluster_ids(self) -> tuple[str, ...]:
        return tuple(c.cluster_id for c in self.clusters)

    def cluster(self, cluster_id) -> Cluster:
        try:
            return self._index[str(cluster_id)]
        except KeyError:
            raise KeyError(f"unknown cluster id {cluster_id!r}") from None


@dataclass(frozen=True)
class SubgroupCensus:
    M_jb: Mapping[str, int]
    M_b: int
    M_B: int
    M_Bb: int
    J_b: frozenset[str]
    J_B: frozenset[str]


def census(pop: Population) -> SubgroupCensus:
    """Baseline subgroup counts; these never depend on the randomization."""
    M_jb = {c.cluster_id: c.M_b for c in pop.clusters}
    J_b = frozenset(cid for cid, m in M_jb.items() if m > 0)
    J_B = frozenset(c.cluster_id for c in pop.clusters if c.in_B)
    return SubgroupCensus(
        M_jb=M_jb,
        M_b=len(J_b),
        M_B=len(J_B),
        M_Bb=len(J_b & J_B),
        J_b=J_b,
        J_B=J_B,
    )


@dataclass(frozen=True, eq=False)
class Design:
    """Resolved mixed two-stage design.

    ``k[strategy][cluster_id]`` is the number of subjects treated in that
    cluster when it receives ``strategy``.
    """

    alpha: Fraction
    gamma: Fraction
    K: int
    J: int
    k: Mapping[Strategy, Mapping[str, int]]
    n: Mapping[str, int]

    def coverage(self, strategy: Strategy) -> Fraction:
        return self.alpha if strategy is Strategy.ALPHA else self.gamma

    def n_clusters(self, strategy: Strategy) -> int:
        return self.K if strategy is Strategy.ALPHA else self.J - self.K

    def pr(self, strategy: Strategy) -> Fraction:
        """Probability that a cluster is assigned ``strategy``."""
        return Fraction(self.n_clusters(strategy), self.J)

    def p(self, cluster_id: str, strategy: Strategy) -> Fraction:
        """Within-cluster treatment probability under ``strategy``."""
        return Fraction(self.k[strategy][cluster_id], self.n[cluster_id])

    def arm_size(self, cluster_id: str, strategy: Strategy, z: int) -> int:
        k = self.k[strategy][cluster_id]
        return k if z else self.n[cluster_id] - k

    def __eq__(self, other):
        if not isinstance(other, Design):
            return NotImplemented
        return (self.alpha, self.gamma, self.K, self.J, dict(self.n)) == (
            other.alpha, other.gamma, other.K, other.J, dict(other.n))

    __hash__ = None


def parse_coverage(value) -> Fraction:
    if isinstance(value, float):
        raise ValidationError("coverage must be given exactly, e.g. '1/2', not a float")
    try:
        return Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError):
        raise ValidationError(f"cannot parse coverage {value!r}") from None


def resolve_design(pop: Population, alpha, gamma, K: int) -> Design:
    alpha, gamma = parse_coverage(alpha), parse_coverage(gamma)
    for name, c in (("alpha", alpha), ("gamma", gamma)):
        if not 0 < c < 1:
            raise ValidationError(f"{name} coverage must lie in (0, 1), got {c}")
    if isinstance(K, bool) or int(K) != K:
        raise ValidationError(f"K must be an integer, got {K!r}")
    K = int(K)
    if not 1 <= K <= pop.J - 1:
        raise ValidationError(f"K must satisfy 1 <= K <= J-1 = {pop.J - 1}, got {K}")
    k: dict[Strategy, dict[str, int]] = {Strategy.ALPHA: {}, Strategy.GAMMA: {}}
    for c in pop.clusters:
        for strategy, cov in ((Strategy.ALPHA, alpha), (Strategy.GAMMA, gamma)):
            count = cov * c.n
            if count.denominator != 1:
                raise ValidationError(
                    f"{strategy.value} coverage {cov} gives non-integer count "
                    f"{count} in cluster {c.cluster_id!r} (n={c.n})"
                )
            k[strategy][c.cluster_id] = int(count)
    if alpha == gamma:
        # identical coverages imply identical potential outcomes under stratified interference
        for c in pop.clusters:
            for s in c.subjects:
                if (s.y1_alpha, s.y0_alpha) != (s.y1_gamma, s.y0_gamma):
                    raise ValidationError(
                        f"alpha == gamma but subject {s.subject_id!r} in cluster "
                        f"{c.cluster_id!r} has different outcomes under the two strategies"
                    )
    return Design(alpha=alpha, gamma=gamma, K=K, J=pop.J, k=k,
                  n={c.cluster_id: c.n for c in pop.clusters})


@dataclass(frozen=True, eq=False)
class Assignment:
    """Realized cluster strategies ``q`` and within-cluster treatment vectors ``z``.

    Vectors in ``z`` follow the cluster's subject order.
    """

    q: Mapping[str, Strategy]
    z: Mapping[str, tuple[int, ...]]

    def __eq__(self, other):
        if not isinstance(other, Assignment):
            return NotImplemented
        return dict(self.q) == dict(other.q) and dict(self.z) == dict(other.z)

    def __hash__(self):
        return hash((tuple(sorted((k, v.value) for k, v in self.q.items())),
                     tuple(sorted(self.z.items()))))

    def treated(self, pop: Population, cluster_id: str) -> tuple[str, ...]:
        cluster = pop.cluster(cluster_id)
        return tuple(s.subject_id for s, zi in zip(cluster.subjects, self.z[cluster_id]) if zi)


def validate_assignment(pop: Population, design: Design, asg: Assignment) -> None:
    if set(asg.q) != set(pop.cluster_ids) or set(asg.z) != set(pop.cluster_ids):
        raise ValidationError("assignment must cover every cluster exactly once")
    n_alpha = sum(1 for s in asg.q.values() if s is Strategy.ALPHA)
    if n_alpha != design.K:
        raise ValidationError(f"assignment has {n_alpha} alpha clusters, design requires K={design.K}")
    for c in pop.clusters:
        vec = asg.z[c.cluster_id]
        if len(vec) != c.n or any(v not in (0, 1) for v in vec):
            raise ValidationError(f"bad treatment vector for cluster {c.cluster_id!r}")
        want = design.k[asg.q[c.cluster_id]][c.cluster_id]
        if sum(vec) != want:
            raise ValidationError(
                f"cluster {c.cluster_id!r} treats {sum(vec)} subjects, strategy "
                f"{asg.q[c.cluster_id].value} requires {want}"
            )


@dataclass(frozen=True)
class AssignmentStats:
    m_jbz: Mapping[tuple[str, int], int]
    m_Bq: Mapping[Strategy, int]


def assignment_stats(pop: Population, asg: Assignment) -> AssignmentStats:
    m_jbz = {}
    for c in pop.clusters:
        vec = asg.z[c.cluster_id]
        for z in (0, 1):
            m_jbz[(c.cluster_id, z)] = sum(
                1 for s, zi in zip(c.subjects, vec) if zi == z and s.in_b)
    m_Bq = {q: sum(1 for c in pop.clusters if c.in_B and asg.q[c.cluster_id] is q)
            for q in Strategy}
    return AssignmentStats(m_jbz=m_jbz, m_Bq=m_Bq)


# ---------------------------------------------------------------- file formats

def _parse_flag(text: str, column: str, row: int) -> bool:
    text = text.strip()
    if text not in ("0", "1"):
        raise ValidationError(f"row {row}: {column} must be 0 or 1, got {text!r}")
    return text == "1"


def _parse_outcome(text: str, column: str, row: int) -> Fraction:
    try:
        value = Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ValidationError(f"row {row}: {column} is not a finite number: {text!r}") from None
    return value


def format_number(value: Fraction) -> str:
    """Exact decimal literal when one exists, otherwise ``p/q``."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    d = value.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d != 1:
        return f"{value.numerator}/{value.denominator}"
    places = max(twos, fives)
    scaled = value * 10**places
    sign = "-" if scaled < 0 else ""
    digits = str(abs(scaled.numerator)).rjust(places + 1, "0")
    return f"{sign}{digits[:-places]}.{digits[-places:]}"


def population_from_rows(rows: Iterable[Mapping[str, str]]) -> Population:
    grouped: dict[str, list[Subject]] = {}
    cluster_flag: dict[str, bool] = {}
    for i, row in enumerate(rows, start=2):
        missing = [c for c in POPULATION_COLUMNS if row.get(c) in (None, "")]
        if missing:
            raise ValidationError(f"row {i}: missing value(s) for {', '.join(missing)}")
        cid = row["cluster_id"].strip()
        subject = Subject(
            subject_id=row["subject_id"].strip(),
            y1_alpha=_parse_outcome(row["y1_alpha"], "y1_alpha", i),
            y0_alpha=_parse_outcome(row["y0_alpha"], "y0_alpha", i),
            y1_gamma=_parse_outcome(row["y1_gamma"], "y1_gamma", i),
            y0_gamma=_parse_outcome(row["y0_gamma"], "y0_gamma", i),
            in_b=_parse_flag(row["in_b"], "in_b", i),
        )
        flag = _parse_flag(row["in_B"], "in_B", i)
        if cluster_flag.setdefault(cid, flag) != flag:
            raise ValidationError(f"row {i}: in_B is not constant within cluster {cid!r}")
        grouped.setdefault(cid, []).append(subject)
    return Population(tuple(
        Cluster(cluster_id=cid, subjects=tuple(subs), in_B=cluster_flag[cid])
        for cid, subs in grouped.items()
    ))


def read_population(text: str) -> Population:
    reader = csv.DictReader(io.StringIO(text))
    header = tuple(h.strip() for h in (reader.fieldnames or ()))
    absent = [c for c in POPULATION_COLUMNS if c not in header]
    if absent:
        raise ValidationError(f"population file lacks column(s): {', '.join(absent)}")
    reader.fieldnames = list(header)
    return population_from_rows(reader)


def load_population(source) -> Population:
    return read_population(Path(source).read_text(encoding="utf-8"))


def dump_population(pop: Population) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(POPULATION_COLUMNS)
    for c in pop.clusters:
        for s in c.subjects:
            writer.writerow([
                c.cluster_id, s.subject_id,
                format_number(s.y1_alpha), format_number(s.y0_alpha),
                format_number(s.y1_gamma), format_number(s.y0_gamma),
                int(s.in_b), int(c.in_B),
            ])
    return buf.getvalue()


def read_design(text: str, pop: Population) -> Design:
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"design file is not valid JSON: {exc}") from None
    if not isinstance(spec, dict) or {"alpha", "gamma", "K"} - set(spec):
        raise ValidationError('design must be an object with keys "alpha", "gamma", "K"')
    return resolve_design(pop, spec["alpha"], spec["gamma"], spec["K"])


def load_design(source, pop: Population) -> Design:
    return read_design(Path(source).read_text(encoding="utf-8"), pop)


def dump_design(design: Design) -> str:
    return json.dumps({"alpha": str(design.alpha), "gamma": str(design.gamma), "K": design.K})


def read_assignment(text: str, pop: Population, design: Design | None = None) -> Assignment:
    reader = csv.DictReader(io.StringIO(text))
    header = [h.strip() for h in (reader.fieldnames or ())]
    absent = [c for c in ASSIGNMENT_COLUMNS if c not in header]
    if absent:
        raise ValidationError(f"assignment file lacks column(s): {', '.join(absent)}")
    reader.fieldnames = header
    q: dict[str, Strategy] = {}
    bits: dict[str, dict[str, int]] = {}
    for i, row in enumerate(reader, start=2):
        cid, sid = row["cluster_id"].strip(), row["subject_id"].strip()
        strategy = Strategy.parse(row["q"])
        if q.setdefault(cid, strategy) is not strategy:
            raise ValidationError(f"row {i}: q is not constant within cluster {cid!r}")
        z = row["z"].strip()
        if z not in ("0", "1"):
            raise ValidationError(f"row {i}: z must be 0 or 1, got {z!r}")
        if sid in bits.setdefault(cid, {}):
            raise ValidationError(f"row {i}: duplicate subject {sid!r} in cluster {cid!r}")
        bits[cid][sid] = int(z)
    z_vec = {}
    for c in pop.clusters:
        if c.cluster_id not in bits:
            raise ValidationError(f"assignment lacks cluster {c.cluster_id!r}")
        row_ids = set(bits[c.cluster_id])
        want = {s.subject_id for s in c.subjects}
        if row_ids != want:
            raise ValidationError(f"assignment subjects for cluster {c.cluster_id!r} do not match population")
        z_vec[c.cluster_id] = tuple(bits[c.cluster_id][s.subject_id] for s in c.subjects)
    extra = set(bits) - set(pop.cluster_ids)
    if extra:
        raise ValidationError(f"assignment mentions unknown cluster(s): {', '.join(sorted(extra))}")
    asg = Assignment(q=q, z=z_vec)
    if design is not None:
        validate_assignment(pop, design, asg)
    return asg


def load_assignment(source, pop: Population, design: Design | None = None) -> Assignment:
    return read_assignment(Path(source).read_text(encoding="utf-8"), pop, design)


def assignment_rows(pop: Population, asg: Assignment) -> list[tuple[str, str, str, int]]:
    return [
        (c.cluster_id, s.subject_id, asg.q[c.cluster_id].value, asg.z[c.cluster_id][i])
        for c in pop.clusters
        for i, s in enumerate(c.subjects)
    ]


def dump_assignments(pop: Population, assignments: Sequence[Assignment] | Iterable[Assignment],
                     indexed: bool = False) -> str:
    """Write assignments as CSV; ``indexed`` prepends an ``assignment`` counter column."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow((("assignment",) if indexed else ()) + ASSIGNMENT_COLUMNS)
    for idx, asg in enumerate(assignments):
        for row in assignment_rows(pop, asg):
            writer.writerow(((idx,) if indexed else ()) + row)
    return buf.getvalue()

