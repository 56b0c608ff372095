"""Feasible-support families: uniform and partition matroids, group knapsack."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class GroupStructure:
    """Disjoint groups over [0, d) with per-group selection costs.

    Costs default to group sizes, so a budget on total cost is a budget on the
    number of selected coordinates.
    """

    d: int
    groups: tuple
    costs: tuple = None

    def __post_init__(self):
        groups = tuple(tuple(sorted(int(i) for i in g)) for g in self.groups)
        seen: set[int] = set()
        for gid, g in enumerate(groups):
            if not g:
                raise ValueError(f"group {gid} is empty")
            if len(set(g)) != len(g):
                raise ValueError(f"group {gid} has repeated indices")
            if g[0] < 0 or g[-1] >= self.d:
                raise IndexError(f"group {gid} has indices outside [0, {self.d})")
            if seen.intersection(g):
                raise ValueError(f"group {gid} overlaps an earlier group")
            seen.update(g)
        if self.costs is None:
            costs = tuple(len(g) for g in groups)
        else:
            costs = tuple(self.costs)
            if len(costs) != len(groups):
                raise ValueError("need one cost per group")
            if any(c <= 0 for c in costs):
                raise ValueError("costs must be positive")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "costs", costs)

    @classmethod
    def uniform_blocks(cls, d: int, size: int) -> "GroupStructure":
        if size <= 0:
            raise ValueError("block size must be positive")
        return cls(d, tuple(tuple(range(i, min(i + size, d))) for i in range(0, d, size)))

    @classmethod
    def singletons(cls, d: int) -> "GroupStructure":
        return cls(d, tuple((i,) for i in range(d)))

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def _check(self, s) -> list[int]:
        ids = [int(i) for i in s]
        bad = [i for i in ids if i < 0 or i >= self.n_groups]
        if bad:
            raise KeyError(f"unknown group ids {bad}")
        return ids

    def cost(self, s) -> float:
        return sum(self.costs[i] for i in self._check(s))

    def expand(self, s) -> np.ndarray:
        ids = self._check(s)
        if not ids:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate([np.asarray(self.groups[i], dtype=np.int64)
                                       for i in set(ids)]))

    def membership(self) -> np.ndarray:
        """Group id per coordinate, -1 for coordinates in no group."""
        m = np.full(self.d, -1, dtype=np.int64)
        for gid, g in enumerate(self.groups):
            m[list(g)] = gid
        return m


def cost(g: GroupStructure, s) -> float:
    return g.cost(s)


def expand_groups(g: GroupStructure, s) -> np.ndarray:
    return g.expand(s)


def _elements(s, ground_size: int) -> list[int]:
    ids = [int(i) for i in s]
    bad = [i for i in ids if i < 0 or i >= ground_size]
    if bad:
        raise ValueError(f"elements {bad} are outside the ground set [0, {ground_size})")
    return ids


@dataclass(frozen=True)
class UniformMatroid:
    k: int
    n: int

    def __post_init__(self):
        if self.k < 0 or self.n < 0:
            raise ValueError("uniform matroid needs k >= 0 and n >= 0")

    @property
    def ground(self) -> tuple:
        return tuple(range(self.n))

    def is_independent(self, s) -> bool:
        return len(set(_elements(s, self.n))) <= self.k


@dataclass(frozen=True)
class PartitionMatroid:
    """At most caps[i] elements from views[i]; views partition the ground set."""

    views: tuple
    caps: tuple

    def __post_init__(self):
        views = tuple(tuple(sorted(int(i) for i in v)) for v in self.views)
        caps = tuple(int(c) for c in self.caps)
        if len(views) != len(caps):
            raise ValueError("need one cap per view")
        if any(c < 0 for c in caps):
            raise ValueError("caps must be nonnegative")
        flat = [i for v in views for i in v]
        if len(flat) != len(set(flat)):
            raise ValueError("views must be disjoint")
        if sorted(flat) != list(range(len(flat))):
            raise ValueError("views must cover [0, n) exactly")
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "caps", caps)

    @property
    def n(self) -> int:
        return sum(len(v) for v in self.views)

    @property
    def ground(self) -> tuple:
        return tuple(range(self.n))

    def view_of(self) -> np.ndarray:
        m = np.empty(self.n, dtype=np.int64)
        for i, v in enumerate(self.views):
            m[list(v)] = i
        return m

    def is_independent(self, s) -> bool:
        ids = set(_elements(s, self.n))
        return all(len(ids.intersection(v)) <= c for v, c in zip(self.views, self.caps))


@dataclass(frozen=True)
class GroupKnapsack:
    """Sets of group ids whose total cost fits the budget.

    Downward closed but in general not a matroid: the exchange axiom can fail.
    """

    groups: GroupStructure
    budget: float

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("budget must be nonnegative")

    @property
    def ground(self) -> tuple:
        return tuple(range(self.groups.n_groups))

    def is_independent(self, s) -> bool:
        ids = set(_elements(s, self.groups.n_groups))
        return self.groups.cost(ids) <= self.budget


SupportConstraint = UniformMatroid | PartitionMatroid | GroupKnapsack


def is_independent(c: SupportConstraint, s: Iterable[int]) -> bool:
    return c.is_independent(s)


def independent_sets(c: SupportConstraint, ground: Sequence[int] | None = None):
    """Yield every independent subset of the ground set (as sorted tuples)."""
    from itertools import combinations

    ground = sorted(c.ground if ground is None else ground)
    for size in range(len(ground) + 1):
        found = False
        for combo in combinations(ground, size):
            if c.is_independent(combo):
                found = True
                yield combo
        if not found:
            return
