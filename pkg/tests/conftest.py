from fractions import Fraction

import pytest

from twostage_ht.example import example_design, example_population
from twostage_ht.model import Cluster, Population, Subject, resolve_design


@pytest.fixture(scope="session")
def pop():
    return example_population()


@pytest.fixture(scope="session")
def design(pop):
    return example_design(pop)


def make_population(spec):
    """Build a population from ``{cid: (in_B, [(sid, y1a, y0a, y1g, y0g, in_b), ...])}``."""
    clusters = []
    for cid, (in_B, rows) in spec.items():
        subjects = tuple(
            Subject(sid, Fraction(a), Fraction(b), Fraction(c), Fraction(d), bool(flag))
            for sid, a, b, c, d, flag in rows
        )
        clusters.append(Cluster(str(cid), subjects, bool(in_B)))
    return Population(tuple(clusters))


@pytest.fixture
def tiny():
    """Three clusters of two subjects, coverage 1/2 under both strategies."""
    p = make_population({
        1: (1, [("a", 4, 1, 4, 1, 1), ("b", 2, 2, 2, 2, 0)]),
        2: (0, [("c", 1, 0, 1, 0, 1), ("d", 6, 3, 6, 3, 1)]),
        3: (1, [("e", 0, 5, 0, 5, 0), ("f", 3, 1, 3, 1, 1)]),
    })
    return p, resolve_design(p, Fraction(1, 2), Fraction(1, 2), 1)


@pytest.fixture
def mixed():
    """Three clusters of four with distinct outcomes per coverage; alpha=1/2, gamma=1/4, K=1."""
    p = make_population({
        1: (1, [("11", 5, 1, 3, 0, 1), ("12", 2, 2, 4, 1, 0), ("13", 7, 0, 6, 2, 1), ("14", 1, 3, 0, 0, 0)]),
        2: (0, [("21", 1, 0, 2, 2, 1), ("22", 6, 3, 1, 0, 1), ("23", 0, 0, 1, 1, 0), ("24", 9, 4, 8, 3, 1)]),
        3: (1, [("31", 0, 5, 4, 4, 0), ("32", 3, 1, 2, 7, 0), ("33", 2, 2, 2, 2, 1), ("34", 4, 0, 5, 1, 0)]),
    })
    return p, resolve_design(p, Fraction(1, 2), Fraction(1, 4), 1)
