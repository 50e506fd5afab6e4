"""Domain types: linear system, sensor tree, subtrees, schedules, distributions.

Conventions used throughout the package:

* sensors are numbered 1..m and the fusion center is node 0;
* a transmission subtree is represented by its member set (a frozenset of
  sensor indices, never containing 0), valid when closed under the parent
  map so every member has a live relay path to the fusion center;
* a marginal schedule is a plain length-m float vector with entries in
  [0, 1] (see ``as_marginals``).

All types are immutable after construction (arrays are marked read-only),
so instances can be shared freely across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._linalg import is_observable
from .errors import (
    DimensionMismatch,
    InvalidSubtree,
    NonPositiveNoise,
    NotObservable,
)

SubTree = frozenset  # alias: a subtree is identified by its member set

_SYM_TOL = 1e-10


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


def as_marginals(p, m: int | None = None, tol: float = 1e-12) -> np.ndarray:
    """Validate and normalize a marginal-probability vector.

    Accepts any 1-D array-like; entries must lie in [0, 1] up to ``tol``
    and are clipped exactly into the box. Returns a read-only float array.
    """
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1:
        raise DimensionMismatch(f"marginals must be a 1-D vector, got shape {arr.shape}")
    if m is not None and arr.shape[0] != m:
        raise DimensionMismatch(f"expected {m} marginals, got {arr.shape[0]}")
    if arr.size and (arr.min() < -tol or arr.max() > 1.0 + tol):
        raise ValueError(f"marginals must lie in [0, 1], got range [{arr.min()}, {arr.max()}]")
    return _frozen_array(np.clip(arr, 0.0, 1.0))


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Discrete-time model x_{k+1} = A x_k + w_k, y_{k,i} = C_i x_k + v_{k,i}.

    Q is the process-noise covariance, r the per-sensor measurement-noise
    variances (R is diagonal), Sigma0 the initial state covariance. Row i
    of C is the observation row of sensor i; its information contribution
    is the rank-one matrix C_i^T C_i / r_i.
    """

    A: np.ndarray
    Q: np.ndarray
    C: np.ndarray
    r: np.ndarray
    Sigma0: np.ndarray

    def __post_init__(self):
        A = _frozen_array(self.A)
        Q = _frozen_array(self.Q)
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        C = _frozen_array(C)
        r = np.atleast_1d(np.asarray(self.r, dtype=float))
        r = _frozen_array(r)
        S = _frozen_array(self.Sigma0)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        if Q.shape != (n, n):
            raise DimensionMismatch(f"Q must be {n}x{n}, got {Q.shape}")
        if S.shape != (n, n):
            raise DimensionMismatch(f"Sigma0 must be {n}x{n}, got {S.shape}")
        if C.ndim != 2 or C.shape[1] != n:
            raise DimensionMismatch(f"C must have {n} columns, got shape {C.shape}")
        if r.shape != (C.shape[0],):
            raise DimensionMismatch(
                f"r must have one entry per sensor ({C.shape[0]}), got shape {r.shape}"
            )
        for name, val in (("A", A), ("Q", Q), ("C", C), ("r", r), ("Sigma0", S)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @property
    def info(self) -> np.ndarray:
        """Per-sensor information increments C_i^T C_i / r_i, shape (m, n, n)."""
        cached = getattr(self, "_info_cache", None)
        if cached is None:
            scaled = self.C / np.sqrt(self.r)[:, None]
            cached = np.einsum("ij,ik->ijk", scaled, scaled)
            cached.flags.writeable = False
            object.__setattr__(self, "_info_cache", cached)
        return cached

    def info_sum(self, weights) -> np.ndarray:
        """Weighted information matrix sum_i w_i C_i^T C_i / r_i."""
        w = np.asarray(weights, dtype=float)
        if w.shape != (self.m,):
            raise DimensionMismatch(f"weights must have shape ({self.m},), got {w.shape}")
        return np.tensordot(w, self.info, axes=1)


def _check_spd(name: str, M: np.ndarray):
    if not np.all(np.abs(M - M.T) <= _SYM_TOL * max(1.0, np.abs(M).max())):
        raise NonPositiveNoise(f"{name} is not symmetric")
    eigs = np.linalg.eigvalsh(0.5 * (M + M.T))
    if eigs.min() <= 0.0:
        raise NonPositiveNoise(f"{name} must be positive definite, min eigenvalue {eigs.min()}")


def validate_system(sys: LinearSystem) -> None:
    """Check all LinearSystem invariants; raise a named error on the first failure.

    Raises DimensionMismatch, NonPositiveNoise (Q, Sigma0 not symmetric PD or
    some r_i <= 0), or NotObservable (rank of [C; CA; ...; CA^(n-1)] < n,
    singular values cut at 1e-10 relative).
    """
    n, m = sys.n, sys.m
    if sys.Q.shape != (n, n) or sys.Sigma0.shape != (n, n) or sys.C.shape != (m, n):
        raise DimensionMismatch("inconsistent matrix dimensions")
    _check_spd("Q", sys.Q)
    _check_spd("Sigma0", sys.Sigma0)
    if sys.r.size and sys.r.min() <= 0.0:
        raise NonPositiveNoise(f"all measurement-noise variances must be > 0, got min {sys.r.min()}")
    if not is_observable(sys.A, sys.C):
        raise NotObservable("(C, A) is not observable")


@dataclass(frozen=True, eq=False)
class SensorTree:
    """Rooted communication tree over nodes {0, 1, ..., m}.

    ``parent[i-1]`` is the unique out-neighbor of sensor i (0 means the
    fusion center); ``cost[i-1]`` is the energy spent when sensor i
    transmits one packet over its outgoing edge.
    """

    parent: np.ndarray
    cost: np.ndarray

    def __post_init__(self):
        parent = _frozen_array(np.atleast_1d(self.parent), dtype=int)
        cost = _frozen_array(np.atleast_1d(self.cost))
        m = parent.shape[0]
        if cost.shape != (m,):
            raise DimensionMismatch(f"cost must have shape ({m},), got {cost.shape}")
        if m and (parent.min() < 0 or parent.max() > m):
            raise ValueError("parent indices must lie in {0, ..., m}")
        if m and cost.min() <= 0.0:
            raise ValueError("edge costs must be positive")
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "cost", cost)

        depth = np.zeros(m + 1, dtype=int)
        for i in range(1, m + 1):
            node, hops = i, 0
            while node != 0:
                node = int(parent[node - 1])
                hops += 1
                if hops > m:
                    raise ValueError(f"sensor {i} has no path to the fusion center (cycle)")
            depth[i] = hops
        children: list[list[int]] = [[] for _ in range(m + 1)]
        for i in range(1, m + 1):
            children[int(parent[i - 1])].append(i)
        object.__setattr__(self, "_depth", _frozen_array(depth, dtype=int))
        object.__setattr__(self, "_children", tuple(tuple(c) for c in children))

    @property
    def m(self) -> int:
        return self.parent.shape[0]

    def parent_of(self, i: int) -> int:
        return int(self.parent[i - 1])

    def children_of(self, node: int) -> tuple:
        return self._children[node]

    def depth_of(self, i: int) -> int:
        """Hop count from node i to the fusion center."""
        return int(self._depth[i])

    def cost_of(self, i: int) -> float:
        return float(self.cost[i - 1])


def is_valid_subtree(tree: SensorTree, members: Iterable[int]) -> bool:
    """True iff the member set is closed under the parent map.

    Every member whose parent is not the fusion center must have its parent
    in the set, so the selected nodes form a transmission tree rooted at 0.
    """
    mem = frozenset(members)
    if not all(1 <= i <= tree.m for i in mem):
        return False
    return all(tree.parent_of(i) == 0 or tree.parent_of(i) in mem for i in mem)


def tree_energy(tree: SensorTree, members: Iterable[int]) -> float:
    """Total transmission energy of a round in which ``members`` report."""
    mem = frozenset(members)
    if not is_valid_subtree(tree, mem):
        raise InvalidSubtree(f"{sorted(mem)} is not closed under the parent map")
    return float(sum(tree.cost_of(i) for i in mem))


@dataclass(frozen=True, eq=False)
class TreeDistribution:
    """Sparse probability distribution over transmission subtrees."""

    trees: tuple
    probs: np.ndarray

    def __post_init__(self):
        trees = tuple(frozenset(t) for t in self.trees)
        probs = _frozen_array(np.atleast_1d(self.probs))
        if len(trees) != probs.shape[0]:
            raise DimensionMismatch("one probability per tree required")
        if probs.size == 0:
            raise ValueError("distribution must have at least one support tree")
        if probs.min() < 0.0:
            raise ValueError(f"probabilities must be >= 0, got min {probs.min()}")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got {probs.sum()!r}")
        object.__setattr__(self, "trees", trees)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_pairs(cls, pairs: Sequence) -> "TreeDistribution":
        trees = [t for t, _ in pairs]
        probs = [p for _, p in pairs]
        return cls(tuple(trees), np.asarray(probs, dtype=float))

    def __len__(self) -> int:
        return len(self.trees)

    def __iter__(self):
        return iter(zip(self.trees, self.probs))


def validate_distribution(tree: SensorTree, dist: TreeDistribution) -> None:
    """Raise InvalidSubtree if any support tree is not parent-closed."""
    for t in dist.trees:
        if not is_valid_subtree(tree, t):
            raise InvalidSubtree(f"support tree {sorted(t)} is not valid")


# ---------------------------------------------------------------------------
# Model files. JSON round-trips every finite double bit-exactly because the
# serializer emits shortest-round-trip decimal representations.
# ---------------------------------------------------------------------------


def model_to_dict(sys: LinearSystem, tree: SensorTree) -> dict:
    if tree.m != sys.m:
        raise DimensionMismatch(f"tree has {tree.m} sensors but the system has {sys.m}")
    return {
        "n": sys.n,
        "m": sys.m,
        "A": sys.A.tolist(),
        "Q": sys.Q.tolist(),
        "C": sys.C.tolist(),
        "r": sys.r.tolist(),
        "Sigma0": sys.Sigma0.tolist(),
        "parent": sys_tree_parent_list(tree),
        "cost": tree.cost.tolist(),
    }


def sys_tree_parent_list(tree: SensorTree) -> list:
    return [int(v) for v in tree.parent]


def model_from_dict(doc: dict) -> tuple:
    sys = LinearSystem(
        A=doc["A"], Q=doc["Q"], C=doc["C"], r=doc["r"], Sigma0=doc["Sigma0"]
    )
    tree = SensorTree(parent=doc["parent"], cost=doc["cost"])
    if sys.n != doc.get("n", sys.n) or sys.m != doc.get("m", sys.m):
        raise DimensionMismatch("declared n/m disagree with matrix shapes")
    if tree.m != sys.m:
        raise DimensionMismatch(
            f"tree has {tree.m} sensors but the system has {sys.m}"
        )
    return sys, tree


def save_model(path, sys: LinearSystem, tree: SensorTree) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(sys, tree), fh, indent=1)
        fh.write("\n")


def load_model(path) -> tuple:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return model_from_dict(doc)
