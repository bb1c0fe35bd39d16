"""Seeded random populations and designs for property testing."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .model import Cluster, Design, Population, Subject, resolve_design


def valid_coverages(sizes) -> list[Fraction]:
    """Coverages in (0, 1) giving an integer treated count in every cluster."""
    first = sizes[0]
    cands = {Fraction(k, first) for k in range(1, first)}
    return sorted(c for c in cands if all((c * n).denominator == 1 for n in sizes))


def random_population(seed: int, J_choices=(2, 3, 4), n_range=(2, 5),
                      p_b: float = 0.35, p_B: float = 0.5,
                      outcome_max: int = 9) -> tuple[Population, Design]:
    """Draw a small population and a mixed design that fits its cluster sizes.

    Cluster sizes are redrawn until some coverage yields integer counts in every
    cluster. When only one coverage fits, alpha and gamma coincide and the gamma
    outcomes are copies of the alpha outcomes.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    J = int(rng.choice(J_choices))
    while True:
        sizes = [int(n) for n in rng.integers(n_range[0], n_range[1] + 1, size=J)]
        coverages = valid_coverages(sizes)
        if coverages:
            break
    if len(coverages) == 1:
        alpha = gamma = coverages[0]
    else:
        i, j = rng.choice(len(coverages), size=2, replace=False)
        alpha, gamma = coverages[int(i)], coverages[int(j)]
    K = int(rng.integers(1, J))

    clusters = []
    for j, n in enumerate(sizes, start=1):
        in_B = bool(rng.random() < p_B)
        subjects = []
        for i in range(1, n + 1):
            y = [Fraction(int(v)) for v in rng.integers(0, outcome_max + 1, size=4)]
            if alpha == gamma:
                y[2], y[3] = y[0], y[1]
            subjects.append(Subject(f"{j}{i}", y[0], y[1], y[2], y[3], bool(rng.random() < p_b)))
        clusters.append(Cluster(str(j), tuple(subjects), in_B))
    pop = Population(tuple(clusters))
    return pop, resolve_design(pop, alpha, gamma, K)
