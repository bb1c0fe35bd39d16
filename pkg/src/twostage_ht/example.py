"""Embedded worked example: four clusters of four subjects, alpha=1/2, gamma=1/4, K=2.

Each subject has one treated and one untreated outcome, shared by both
coverages. The expected estimator values below are checked by the ``example`` command.
"""

from __future__ import annotations

from fractions import Fraction

from .model import Assignment, Design, Population, Strategy, dump_population, population_from_rows, resolve_design

# (cluster, subject, Y(1), Y(0), in_b, in_B)
EXAMPLE_ROWS = (
    ("1", "11", 3, 0, 1, 1),
    ("1", "12", 2, 0, 0, 1),
    ("1", "13", 10, 2, 1, 1),
    ("1", "14", 1, 1, 0, 1),
    ("2", "21", 0, 2, 0, 0),
    ("2", "22", 2, 3, 0, 0),
    ("2", "23", 4, 6, 0, 0),
    ("2", "24", 5, 7, 0, 0),
    ("3", "31", 1, 2, 1, 0),
    ("3", "32", 2, 1, 0, 0),
    ("3", "33", 3, 0, 1, 0),
    ("3", "34", 10, 1, 0, 0),
    ("4", "41", 0, 3, 1, 0),
    ("4", "42", 2, 1, 0, 0),
    ("4", "43", 4, 5, 0, 0),
    ("4", "44", 5, 7, 0, 0),
)

EXAMPLE_ALPHA = Fraction(1, 2)
EXAMPLE_GAMMA = Fraction(1, 4)
EXAMPLE_K = 2

# realized cluster-level draw q = (gamma, alpha, gamma, alpha)
EXAMPLE_Q = {"1": Strategy.GAMMA, "2": Strategy.ALPHA, "3": Strategy.GAMMA, "4": Strategy.ALPHA}

# Group 4, untreated mean under alpha, keyed by the set of treated subjects.
# Entries: (natural, hajek, HT, HT variance estimate); None marks NA.
GROUP4_CELLS = {
    frozenset({"41", "42"}): (None, None, Fraction(0), Fraction(0)),
    frozenset({"41", "43"}): (None, None, Fraction(0), Fraction(0)),
    frozenset({"41", "44"}): (None, None, Fraction(0), Fraction(0)),
    frozenset({"42", "43"}): (Fraction(3), Fraction(3), Fraction(6), Fraction(18)),
    frozenset({"42", "44"}): (Fraction(3), Fraction(3), Fraction(6), Fraction(18)),
    frozenset({"43", "44"}): (Fraction(3), Fraction(3), Fraction(6), Fraction(18)),
}
GROUP4_AVERAGE = (None, None, Fraction(3), Fraction(9))
GROUP4_TRUE_VARIANCE_HT = Fraction(9)

# Group 3, untreated mean under gamma.
GROUP3_CELLS = {
    frozenset({"31"}): (Fraction(0), Fraction(0), Fraction(0), Fraction(0)),
    frozenset({"32"}): (Fraction(1), Fraction(1), Fraction(4, 3), Fraction(4, 9)),
    frozenset({"33"}): (Fraction(2), Fraction(2), Fraction(4, 3), Fraction(4, 9)),
    frozenset({"34"}): (Fraction(1), Fraction(1), Fraction(4, 3), Fraction(4, 9)),
}
GROUP3_AVERAGE = (Fraction(1), Fraction(1), Fraction(1), Fraction(1, 3))
GROUP3_TRUE_VARIANCE = {"natural": Fraction(1, 2), "hajek": Fraction(1, 2), "ht": Fraction(1, 3)}

# Cross-conditional Ybar(1;alpha | B,b) and its variance estimate under EXAMPLE_Q.
CROSS_ZERO_CASE = (Fraction(0), Fraction(0))


def example_rows() -> list[dict[str, str]]:
    return [
        {"cluster_id": c, "subject_id": i, "y1_alpha": str(y1), "y0_alpha": str(y0),
         "y1_gamma": str(y1), "y0_gamma": str(y0), "in_b": str(b), "in_B": str(B)}
        for c, i, y1, y0, b, B in EXAMPLE_ROWS
    ]


def example_population() -> Population:
    return population_from_rows(example_rows())


def example_design(pop: Population | None = None) -> Design:
    return resolve_design(pop or example_population(), EXAMPLE_ALPHA, EXAMPLE_GAMMA, EXAMPLE_K)


def example_csv() -> str:
    return dump_population(example_population())


def example_assignment(treated: dict[str, set[str]], pop: Population | None = None) -> Assignment:
    """Assignment with cluster strategies ``EXAMPLE_Q`` and the given treated subjects."""
    pop = pop or example_population()
    z = {c.cluster_id: tuple(int(s.subject_id in treated[c.cluster_id]) for s in c.subjects)
         for c in pop.clusters}
    return Assignment(q=dict(EXAMPLE_Q), z=z)
