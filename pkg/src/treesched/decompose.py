"""Turn marginal probabilities into a distribution over nested subtrees.

Sorting the marginals in descending order and cutting at each distinct
level yields a chain of nested member sets; giving each set the gap
between consecutive sorted values produces a distribution whose marginals
are exactly the input. The construction needs the parent-ordering
condition (child never above parent), which also guarantees every prefix
of the sort is a valid transmission subtree. Ties are broken ancestors
first (by depth), then by index, which keeps prefixes parent-closed.
"""

from __future__ import annotations

import csv

import numpy as np

from .errors import OrderingViolated
from .model import SensorTree, TreeDistribution, as_marginals
from .polytope import ordering_violation


def decompose(tree: SensorTree, p, tol: float = 1e-12) -> TreeDistribution:
    """Build the nested-support distribution realizing marginals p.

    Raises OrderingViolated when some child marginal exceeds its parent's
    by more than ``tol`` (such p are not realizable by any distribution).
    Zero-mass sets are dropped, so the support has at most m + 1 trees.
    """
    p = as_marginals(p, tree.m, tol=tol)
    viol = ordering_violation(tree, p)
    if viol > tol:
        raise OrderingViolated(
            f"child marginal exceeds its parent's by {viol:g}; not realizable"
        )
    # Clamp sub-tolerance inversions exactly so sorted prefixes are closed.
    eff = np.array(p)
    for i in sorted(range(1, tree.m + 1), key=tree.depth_of):
        j = tree.parent_of(i)
        if j != 0:
            eff[i - 1] = min(eff[i - 1], eff[j - 1])

    order = sorted(range(1, tree.m + 1), key=lambda i: (-eff[i - 1], tree.depth_of(i), i))
    levels = [eff[i - 1] for i in order]

    pairs = []
    first = levels[0] if levels else 0.0
    if 1.0 - first > 0.0:
        pairs.append((frozenset(), 1.0 - first))
    members: set = set()
    for j, i in enumerate(order):
        members.add(i)
        nxt = levels[j + 1] if j + 1 < len(levels) else 0.0
        mass = levels[j] - nxt
        if mass > 0.0:
            pairs.append((frozenset(members), mass))
    if not pairs:
        pairs.append((frozenset(), 1.0))
    return TreeDistribution.from_pairs(pairs)


def marginals_of(dist: TreeDistribution, m: int) -> np.ndarray:
    """Per-sensor selection probabilities: p_i = sum of probs of trees containing i."""
    p = np.zeros(m)
    for members, prob in dist:
        for i in members:
            p[i - 1] += prob
    return p


def write_distribution_csv(path, dist: TreeDistribution) -> None:
    """Columns: tree_id, member_list (';'-joined), probability."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tree_id", "member_list", "probability"])
        for j, (members, prob) in enumerate(dist):
            writer.writerow([j, ";".join(str(i) for i in sorted(members)), repr(float(prob))])
