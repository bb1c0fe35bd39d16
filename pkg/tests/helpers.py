"""Population rewrites shared by the property tests."""

from dataclasses import replace

from twostage_ht.model import Cluster, Population, is_defined


def with_flags(pop, in_B=None, in_b=None):
    """Copy of ``pop`` with every cluster flag and/or every subject flag forced."""
    clusters = []
    for c in pop.clusters:
        subjects = c.subjects if in_b is None else tuple(replace(s, in_b=in_b) for s in c.subjects)
        clusters.append(Cluster(c.cluster_id, subjects, c.in_B if in_B is None else in_B))
    return Population(tuple(clusters))


def perturb(pop, keep, delta=17):
    """Shift all four outcomes of every subject for which ``keep(cluster, subject)`` is false."""
    clusters = []
    for c in pop.clusters:
        subjects = tuple(
            s if keep(c, s) else replace(s, y1_alpha=s.y1_alpha + delta, y0_alpha=s.y0_alpha + delta,
                                         y1_gamma=s.y1_gamma + delta, y0_gamma=s.y0_gamma + delta)
            for s in c.subjects
        )
        clusters.append(Cluster(c.cluster_id, subjects, c.in_B))
    return Population(tuple(clusters))


def same(a, b):
    """Equal values, or both undefined (reasons may differ)."""
    if not is_defined(a) or not is_defined(b):
        return is_defined(a) == is_defined(b)
    return a == b


def null_population(pop):
    """Every subject's four outcomes set to its alpha control outcome."""
    clusters = tuple(
        Cluster(c.cluster_id, tuple(replace(s, y1_alpha=s.y0_alpha, y1_gamma=s.y0_alpha, y0_gamma=s.y0_alpha)
                                    for s in c.subjects), c.in_B)
        for c in pop.clusters)
    return Population(clusters)
