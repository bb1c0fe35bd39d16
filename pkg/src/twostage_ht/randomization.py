"""Exact enumeration and seeded sampling of the two-stage mixed randomization.

Enumeration order is lexicographic: first over the set of clusters sent to
alpha (``itertools.combinations`` over cluster positions), then over the
per-cluster treated subsets, clusters taken in id order and each subset
written as a combination of subject positions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Mapping

import numpy as np

from .model import Assignment, Design, Population, Strategy, ValidationError


class InfeasibleConstraint(ValidationError):
    """No assignment satisfies the requested constraints."""


@dataclass(frozen=True)
class RandomizationSpace:
    cluster_choices: int
    within_choices: Mapping[str, tuple[int, int]]
    total: int

    @property
    def probability(self) -> Fraction:
        """Probability of each individual assignment."""
        return Fraction(1, self.total)


def space(pop: Population, design: Design) -> RandomizationSpace:
    within = {
        c.cluster_id: (math.comb(c.n, design.k[Strategy.ALPHA][c.cluster_id]),
                       math.comb(c.n, design.k[Strategy.GAMMA][c.cluster_id]))
        for c in pop.clusters
    }
    ids = pop.cluster_ids
    total = 0
    for alpha_set in itertools.combinations(range(pop.J), design.K):
        chosen = set(alpha_set)
        total += math.prod(within[cid][0 if i in chosen else 1] for i, cid in enumerate(ids))
    return RandomizationSpace(
        cluster_choices=math.comb(pop.J, design.K),
        within_choices=within,
        total=total,
    )


def _vectors(n: int, k: int) -> list[tuple[int, ...]]:
    out = []
    for treated in itertools.combinations(range(n), k):
        vec = [0] * n
        for i in treated:
            vec[i] = 1
        out.append(tuple(vec))
    return out


def _normalize_q_fix(pop: Population, q) -> dict[str, Strategy]:
    if q is None:
        return {}
    pairs = q.items() if isinstance(q, Mapping) else q
    fixed: dict[str, Strategy] = {}
    for cid, strategy in pairs:
        cid = str(cid)
        pop.cluster(cid)
        if not isinstance(strategy, Strategy):
            strategy = Strategy.parse(str(strategy))
        if fixed.setdefault(cid, strategy) is not strategy:
            raise InfeasibleConstraint(f"cluster {cid!r} fixed to both alpha and gamma")
    return fixed


def enumerate_conditional(
    pop: Population,
    design: Design,
    q: Mapping[str, Strategy] | Iterable[tuple[str, Strategy]] | None = None,
    z: Mapping[str, tuple[int, ...]] | None = None,
) -> Iterator[Assignment]:
    """Stream every assignment consistent with fixed strategies ``q`` and fixed vectors ``z``.

    Each surviving assignment appears once, so the stream is the uniform
    conditional randomization distribution. Feasibility is checked eagerly.
    """
    q_fix = _normalize_q_fix(pop, q)
    z_fix = {str(cid): tuple(int(b) for b in vec) for cid, vec in (z or {}).items()}
    for cid, vec in z_fix.items():
        if len(vec) != pop.cluster(cid).n:
            raise InfeasibleConstraint(f"fixed vector for cluster {cid!r} has wrong length")

    ids = pop.cluster_ids
    vectors = {
        (cid, s): _vectors(design.n[cid], design.k[s][cid])
        for cid in ids for s in Strategy
    }
    for (cid, s) in list(vectors):
        if cid in z_fix:
            vectors[(cid, s)] = [v for v in vectors[(cid, s)] if v == z_fix[cid]]

    cluster_sets = []
    for alpha_set in itertools.combinations(range(pop.J), design.K):
        chosen = set(alpha_set)
        qmap = {cid: Strategy.ALPHA if i in chosen else Strategy.GAMMA for i, cid in enumerate(ids)}
        if any(qmap[cid] is not s for cid, s in q_fix.items()):
            continue
        if any(not vectors[(cid, qmap[cid])] for cid in ids):
            continue
        cluster_sets.append(qmap)
    if not cluster_sets:
        raise InfeasibleConstraint("no assignment satisfies the constraints")
    return _stream(ids, cluster_sets, vectors)


def _stream(ids, cluster_sets, vectors) -> Iterator[Assignment]:
    for qmap in cluster_sets:
        per_cluster = [vectors[(cid, qmap[cid])] for cid in ids]
        for combo in itertools.product(*per_cluster):
            yield Assignment(q=qmap, z=dict(zip(ids, combo)))


def enumerate_full(pop: Population, design: Design) -> Iterator[Assignment]:
    return enumerate_conditional(pop, design)


def sample(pop: Population, design: Design, seed: int, count: int) -> list[Assignment]:
    """Independent uniform draws from the randomization distribution.

    Uses numpy's PCG64 generator seeded with ``seed``. Each draw consumes one
    permutation of cluster positions (the first K go to alpha) followed by one
    permutation of subject positions per cluster, clusters in id order.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    ids = pop.cluster_ids
    out = []
    for _ in range(count):
        order = rng.permutation(pop.J)
        alpha_positions = set(order[: design.K].tolist())
        qmap = {cid: Strategy.ALPHA if i in alpha_positions else Strategy.GAMMA
                for i, cid in enumerate(ids)}
        zmap = {}
        for cid in ids:
            n = design.n[cid]
            treated = rng.permutation(n)[: design.k[qmap[cid]][cid]]
            vec = [0] * n
            for i in treated.tolist():
                vec[i] = 1
            zmap[cid] = tuple(vec)
        out.append(Assignment(q=qmap, z=zmap))
    return out
