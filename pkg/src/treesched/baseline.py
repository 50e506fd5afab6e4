"""Exhaustive search over fixed deterministic schedules.

A deterministic schedule repeats one transmission tree forever, so the
search space is the set of parent-closed sensor subsets whose energy fits
the per-round budget. For each candidate the covariance recursion is a
deterministic Riccati iteration; the best tree minimizes the fixed-point
trace. Intended as a desk-scale comparison target, hence the hard cap on
the enumeration size.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import Diverged, TooManyTrees
from .lowerbound import L_infinity
from .model import LinearSystem, SensorTree, tree_energy

MAX_TREES = 10**6


def count_subtrees(tree: SensorTree) -> int:
    """Number of parent-closed subsets (including the empty one).

    Computed by the product rule: a node's branch contributes one more than
    the product of its children's counts once the node itself is included.
    """

    def rooted(node: int) -> int:
        total = 1
        for c in tree.children_of(node):
            total *= 1 + rooted(c)
        return total

    return math.prod(1 + rooted(c) for c in tree.children_of(0))


def enumerate_subtrees(
    tree: SensorTree, budget: float = math.inf, *, max_trees: int = MAX_TREES
) -> list:
    """All valid member sets with energy within budget, smallest first.

    Raises TooManyTrees when the unconstrained count exceeds ``max_trees``.
    """
    if count_subtrees(tree) > max_trees:
        raise TooManyTrees(
            f"tree admits more than {max_trees} transmission subtrees"
        )

    def options(node: int) -> list:
        # All (members, energy) choices for the branch at `node`, given that
        # `node` itself is selected. Positive costs make budget pruning safe.
        base = [(frozenset([node]), tree.cost_of(node))]
        out = base
        for c in tree.children_of(node):
            child_opts = options(c)
            grown = []
            for mem, en in out:
                grown.append((mem, en))
                for cm, ce in child_opts:
                    if en + ce <= budget:
                        grown.append((mem | cm, en + ce))
            out = grown
        return out

    results = [(frozenset(), 0.0)]
    for c in tree.children_of(0):
        child_opts = options(c)
        grown = []
        for mem, en in results:
            grown.append((mem, en))
            for cm, ce in child_opts:
                if en + ce <= budget:
                    grown.append((mem | cm, en + ce))
        results = grown
    members = [mem for mem, en in results if en <= budget]
    return sorted(members, key=lambda s: (len(s), sorted(s)))


@dataclass(frozen=True)
class DeterministicResult:
    members: frozenset
    energy: float
    trace: float
    P_inf: np.ndarray
    candidates: tuple  # (sorted member tuple, energy, trace or None) per candidate


def best_deterministic(
    sys: LinearSystem, tree: SensorTree, budget: float, *, max_trees: int = MAX_TREES
) -> DeterministicResult:
    """Best single repeated tree within budget, by asymptotic covariance trace.

    Candidates whose (C_T, A) is undetectable are skipped (their recursion
    diverges); ties break toward lower energy, then lexicographic members.
    Raises Diverged when no affordable candidate is detectable.
    """
    candidates = enumerate_subtrees(tree, budget, max_trees=max_trees)
    best = None
    rows = []
    for members in candidates:
        weights = np.zeros(sys.m)
        for i in members:
            weights[i - 1] = 1.0
        energy = tree_energy(tree, members)
        try:
            P = L_infinity(sys, sys.Sigma0, weights)
        except Diverged:
            rows.append((tuple(sorted(members)), energy, None))
            continue
        tr = float(np.trace(P))
        rows.append((tuple(sorted(members)), energy, tr))
        key = (tr, energy, tuple(sorted(members)))
        if best is None or key < best[0]:
            best = (key, members, energy, tr, P)
    if best is None:
        raise Diverged("no affordable transmission tree is detectable")
    _, members, energy, tr, P = best
    return DeterministicResult(
        members=members, energy=energy, trace=tr, P_inf=P, candidates=tuple(rows)
    )


def write_candidates_csv(path, result: DeterministicResult) -> None:
    """Columns: tree_members, energy, trace_P_inf (empty when divergent)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tree_members", "energy", "trace_P_inf"])
        for members, energy, tr in result.candidates:
            writer.writerow(
                [
                    ";".join(str(i) for i in members),
                    repr(float(energy)),
                    "" if tr is None else repr(float(tr)),
                ]
            )
