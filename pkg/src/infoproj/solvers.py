"""Greedy maximizers for normalized set objectives under support constraints.

An objective is any object exposing

    ground                        tuple of element ids
    monotone                      bool
    value(elements) -> float      from scratch, value(()) == 0
    initial_state() -> state
    gains(state, candidates)      array of marginal gains
    extend(state, element)        state after adding element

:class:`~infoproj.gaussian.GaussianObjective` is the main one; :class:`ModularObjective`
and :class:`SetFunctionObjective` exist for testing and small experiments.

Ties between candidates whose gains agree to 1e-12 (relative) go to the lowest
element id, in every solver.
"""
from __future__ import annotations

import heapq
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Sequence

import numpy as np

from .constraints import GroupKnapsack, GroupStructure, PartitionMatroid, UniformMatroid

TIE_RTOL = 1e-12
CHUNK = 64
DEFAULT_ENUM_CAP = 2 ** 20


class EnumerationLimitError(RuntimeError):
    pass


class ObjectiveError(RuntimeError):
    def __init__(self, message, elements=()):
        super().__init__(f"{message} (set: {list(elements)})")
        self.elements = tuple(elements)


@dataclass(frozen=True)
class TraceStep:
    element: int
    gain: float
    value: float


@dataclass
class SelectionResult:
    selected: tuple
    trace: list = field(default_factory=list)
    objective_value: float = 0.0
    evaluations: int = 0

    @property
    def order(self) -> tuple:
        return tuple(t.element for t in self.trace)

    @property
    def gains(self) -> np.ndarray:
        return np.array([t.gain for t in self.trace])


class ModularObjective:
    def __init__(self, weights, monotone: bool | None = None):
        self.weights = np.asarray(weights, dtype=float)
        self.ground = tuple(range(self.weights.size))
        self.monotone = bool(np.all(self.weights >= 0)) if monotone is None else monotone

    def value(self, elements) -> float:
        return float(sum(self.weights[list(elements)])) if len(elements) else 0.0

    def initial_state(self):
        return ()

    def gains(self, state, candidates):
        return self.weights[list(candidates)].copy()

    def extend(self, state, element):
        return state + (element,)


class SetFunctionObjective:
    """Wrap a plain set function; gains are naive differences."""

    def __init__(self, fn: Callable[[tuple], float], ground: Sequence[int], monotone: bool = True):
        self.fn = fn
        self.ground = tuple(ground)
        self.monotone = monotone

    def value(self, elements) -> float:
        return float(self.fn(tuple(sorted(elements))))

    def initial_state(self):
        return ()

    def gains(self, state, candidates):
        base = self.value(state)
        return np.array([self.value(state + (c,)) - base for c in candidates])

    def extend(self, state, element):
        return state + (element,)


class _Evaluator:
    """Gain evaluation in fixed-size chunks, optionally on a thread pool.

    Chunk boundaries do not depend on the worker count, so serial and parallel
    runs perform the identical floating point operations.
    """

    def __init__(self, objective, workers: int = 1):
        self.objective = objective
        self.workers = max(1, int(workers))
        self.count = 0
        self._pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None

    def __call__(self, state, candidates: Sequence[int]) -> np.ndarray:
        candidates = list(candidates)
        self.count += len(candidates)
        if not candidates:
            return np.zeros(0)
        chunks = [candidates[i:i + CHUNK] for i in range(0, len(candidates), CHUNK)]
        try:
            if self._pool is None or len(chunks) == 1:
                parts = [self.objective.gains(state, c) for c in chunks]
            else:
                parts = list(self._pool.map(lambda c: self.objective.gains(state, c), chunks))
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            raise ObjectiveError(f"gain evaluation failed: {exc}", _state_elems(state)) from exc
        out = np.concatenate([np.asarray(p, dtype=float) for p in parts])
        if not np.all(np.isfinite(out)):
            bad = [c for c, v in zip(candidates, out) if not np.isfinite(v)]
            raise ObjectiveError(f"non-finite gain for candidates {bad}",
                                 tuple(_state_elems(state)) + (bad[0],))
        return out

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _state_elems(state):
    return getattr(state, "support", state if isinstance(state, tuple) else ())


def _argmax(values: np.ndarray) -> int:
    """Index of the max, lowest index among values within TIE_RTOL of it."""
    best = float(np.max(values))
    tol = TIE_RTOL * abs(best)
    return int(np.flatnonzero(values >= best - tol)[0])


def _better(new: float, old: float) -> bool:
    return new > old + TIE_RTOL * max(abs(new), abs(old))


def _accept_step(objective, state, value, element, gain, trace):
    state = objective.extend(state, element)
    value = value + gain
    trace.append(TraceStep(int(element), float(gain), float(value)))
    return state, value


def _matroid_greedy(objective, ground, independent, lazy, workers):
    selected: list[int] = []
    trace: list[TraceStep] = []
    value = 0.0
    state = objective.initial_state()
    # Elements that are dependent now stay dependent (downward closure), so
    # dropping them early removes exactly what the loop would discard later.
    pool = sorted(e for e in ground if independent([e]))
    with _Evaluator(objective, workers) as ev:
        if not lazy:
            while pool:
                g = ev(state, pool)
                i = _argmax(g)
                s, gain = pool.pop(i), float(g[i])
                if gain < 0 and not objective.monotone:
                    continue
                state, value = _accept_step(objective, state, value, s, gain, trace)
                selected.append(s)
                pool = [e for e in pool if independent(selected + [e])]
        else:
            step = 0
            fresh = {}
            heap = []
            if pool:
                for e, gain in zip(pool, ev(state, pool)):
                    heap.append((-float(gain), e))
                    fresh[e] = 0
                heapq.heapify(heap)
            while heap:
                neg, s = heapq.heappop(heap)
                if not independent(selected + [s]):
                    continue
                if fresh[s] != step:
                    fresh[s] = step
                    heapq.heappush(heap, (-float(ev(state, [s])[0]), s))
                    continue
                gain = -neg
                if gain < 0 and not objective.monotone:
                    continue
                state, value = _accept_step(objective, state, value, s, gain, trace)
                selected.append(s)
                step += 1
        evals = ev.count
    return SelectionResult(tuple(sorted(selected)), trace, value, evals)


def greedy_matroid(objective, ground, constraint, lazy: bool = False, workers: int = 1):
    """Best-gain element each round, kept only if the set stays independent.

    Lazy mode keeps stale gains in a max-heap as upper bounds; it reproduces the
    eager choice only when the objective is submodular.
    """
    ground = [int(e) for e in ground]
    unknown = set(ground) - set(constraint.ground)
    if unknown:
        raise ValueError(f"elements {sorted(unknown)} are not in the constraint's ground set")
    return _matroid_greedy(objective, ground, constraint.is_independent, lazy, workers)


def greedy_multiview(objective, views, caps, lazy: bool = False, workers: int = 1):
    """Partition-constrained greedy with per-view selection counters."""
    views = [list(map(int, v)) for v in views]
    caps = [int(c) for c in caps]
    if len(views) != len(caps):
        raise ValueError("need one cap per view")
    view_of: dict[int, int] = {}
    for vi, v in enumerate(views):
        for e in v:
            if e in view_of:
                raise ValueError(f"element {e} appears in two views")
            view_of[e] = vi
    missing = [e for e in objective.ground if e not in view_of]
    if missing:
        raise ValueError(f"elements {missing} have no view assignment")
    if set(view_of) - set(objective.ground):
        raise ValueError("views reference elements outside the objective's ground set")
    counts = [0] * len(views)

    def room(e):
        v = view_of[e]
        return counts[v] < caps[v]

    selected: list[int] = []
    trace: list[TraceStep] = []
    value = 0.0
    state = objective.initial_state()
    pool = sorted(e for e in view_of if room(e))
    with _Evaluator(objective, workers) as ev:
        if not lazy:
            while pool:
                g = ev(state, pool)
                i = _argmax(g)
                s, gain = pool.pop(i), float(g[i])
                if gain < 0 and not objective.monotone:
                    continue
                if room(s):
                    state, value = _accept_step(objective, state, value, s, gain, trace)
                    selected.append(s)
                    counts[view_of[s]] += 1
                    pool = [e for e in pool if room(e)]
        else:
            result = _matroid_greedy(
                objective, sorted(view_of),
                lambda s: all(sum(1 for e in s if view_of[e] == v) <= caps[v]
                              for v in range(len(views))),
                True, workers)
            return result
        evals = ev.count
    return SelectionResult(tuple(sorted(selected)), trace, value, evals)


def _trace_for(objective, elements, ev):
    state = objective.initial_state()
    value = 0.0
    trace: list[TraceStep] = []
    for e in elements:
        gain = float(ev(state, [e])[0])
        state, value = _accept_step(objective, state, value, e, gain, trace)
    return state, value, trace


def _seed_order(objective, elements, ev):
    """Trace for ``elements`` taken best-gain-first rather than in id order."""
    state = objective.initial_state()
    value = 0.0
    trace: list[TraceStep] = []
    rest = list(elements)
    while rest:
        g = ev(state, rest)
        i = _argmax(g)
        state, value = _accept_step(objective, state, value, rest.pop(i), float(g[i]), trace)
    return state, value, trace


def _reweighted(objective, groups: GroupStructure, budget, init, ev, state=None,
                value=None, trace=None):
    costs = groups.costs
    selected = list(init)
    if state is None:
        state, value, trace = _trace_for(objective, selected, ev)
    else:
        trace = list(trace)
    spent = sum(costs[i] for i in selected)
    # A group that does not fit now never fits later; the loop would only
    # discard it, so it is dropped up front.
    pool = sorted(e for e in objective.ground
                  if e not in set(selected) and spent + costs[e] <= budget)
    while pool:
        g = ev(state, pool)
        ratio = g / np.array([costs[e] for e in pool], dtype=float)
        i = _argmax(ratio)
        s, gain = pool.pop(i), float(g[i])
        if gain < 0 and not objective.monotone:
            continue
        state, value = _accept_step(objective, state, value, s, gain, trace)
        selected.append(s)
        spent += costs[s]
        pool = [e for e in pool if spent + costs[e] <= budget]
    return selected, state, value, trace


def reweighted_greedy(objective, groups: GroupStructure, budget, init=(), workers: int = 1):
    """Greedy on gain per unit cost, starting from the feasible group set ``init``."""
    init = [int(i) for i in init]
    if groups.cost(init) > budget:
        raise ValueError(f"initial groups {init} cost {groups.cost(init)} > budget {budget}")
    _check_groups(objective, groups)
    with _Evaluator(objective, workers) as ev:
        selected, _, value, trace = _reweighted(objective, groups, budget, init, ev)
        evals = ev.count
    return SelectionResult(tuple(sorted(selected)), trace, value, evals)


def _check_groups(objective, groups):
    if len(objective.ground) != groups.n_groups:
        raise ValueError(f"objective has {len(objective.ground)} elements, "
                         f"group structure has {groups.n_groups} groups")


def greedy_partial_enum(objective, groups: GroupStructure, budget, m: int = 3,
                        compat_budget: bool = False, workers: int = 1):
    """Knapsack-constrained greedy with partial enumeration of size-m seeds.

    S1 is the best feasible set of fewer than m groups (found exhaustively);
    every feasible m-seed is completed by :func:`reweighted_greedy`; the best
    of S1 and the completions is returned. Cost grows like r**m in the number
    of groups r.

    ``m=1`` is a fast mode: the best feasible single group versus one
    reweighted greedy run from the empty set.

    By default completions run under the full budget with the seed's cost
    counted. ``compat_budget=True`` instead caps the completion at
    ``budget - m - 1``.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    _check_groups(objective, groups)
    r = groups.n_groups
    costs = groups.costs
    with _Evaluator(objective, workers) as ev:
        if m == 1:
            single = [e for e in range(r) if costs[e] <= budget]
            best1, v1 = (), 0.0
            if single:
                g = ev(objective.initial_state(), single)
                i = _argmax(g)
                if _better(float(g[i]), 0.0):
                    best1, v1 = (single[i],), float(g[i])
            sel, _, v2, tr2 = _reweighted(objective, groups, budget, [], ev)
            if _better(v2, v1):
                return SelectionResult(tuple(sorted(sel)), tr2, v2, ev.count)
            _, v1, tr1 = _trace_for(objective, list(best1), ev)
            return SelectionResult(best1, tr1, v1, ev.count)

        best1, v1 = (), 0.0
        for size in range(1, min(m - 1, r) + 1):
            for combo in combinations(range(r), size):
                if sum(costs[i] for i in combo) > budget:
                    continue
                ev.count += 1
                v = objective.value(combo)
                if not math.isfinite(v):
                    raise ObjectiveError("non-finite objective", combo)
                if _better(v, v1):
                    best1, v1 = combo, v

        inner_budget = budget - m - 1 if compat_budget else budget
        best2, v2, tr2 = (), 0.0, []
        prefix_cache: dict[tuple, tuple] = {}
        for seed in combinations(range(r), m):
            if sum(costs[i] for i in seed) > budget:
                continue
            prefix = seed[:-1]
            if prefix not in prefix_cache:
                prefix_cache.clear()
                prefix_cache[prefix] = _trace_for(objective, list(prefix), ev)
            pstate, pvalue, ptrace = prefix_cache[prefix]
            gain = float(ev(pstate, [seed[-1]])[0])
            trace = list(ptrace)
            state, value = _accept_step(objective, pstate, pvalue, seed[-1], gain, trace)
            if sum(costs[i] for i in seed) > inner_budget:
                sel = list(seed)
            else:
                sel, state, value, trace = _reweighted(objective, groups, inner_budget,
                                                       list(seed), ev, state, value, trace)
            if _better(value, v2):
                best2, v2, tr2 = tuple(sorted(sel)), value, trace

        if _better(v2, v1):
            head = [t.element for t in tr2[:m]]
            tail = [t.element for t in tr2[m:]]
            state, value, trace = _seed_order(objective, head, ev)
            for e in tail:
                gain = float(ev(state, [e])[0])
                state, value = _accept_step(objective, state, value, e, gain, trace)
            return SelectionResult(best2, trace, value, ev.count)
        _, v1, tr1 = _trace_for(objective, list(best1), ev)
        return SelectionResult(tuple(best1), tr1, v1, ev.count)


def brute_force_max(objective, ground, constraint, cap: int = DEFAULT_ENUM_CAP):
    """Exact maximizer by enumerating every independent set.

    Ties go to the lexicographically smallest set. Raises
    :class:`EnumerationLimitError` once more than ``cap`` feasible sets are seen.
    """
    ground = sorted(int(e) for e in ground)
    best, best_v = (), 0.0
    seen = 0
    for size in range(len(ground) + 1):
        found = False
        for combo in combinations(ground, size):
            if not constraint.is_independent(combo):
                continue
            found = True
            seen += 1
            if seen > cap:
                raise EnumerationLimitError(f"more than {cap} feasible sets; instance too large")
            v = objective.value(combo) if combo else 0.0
            if not math.isfinite(v):
                raise ObjectiveError("non-finite objective", combo)
            if _better(v, best_v) or (not _better(best_v, v) and combo < best):
                best, best_v = combo, v
        if not found:
            break
    ev = _Evaluator(objective)
    _, value, trace = _trace_for(objective, list(best), ev)
    return SelectionResult(best, trace, value, seen)


def solve(objective, constraint, m: int = 3, lazy: bool = False, compat_budget: bool = False,
          workers: int = 1) -> SelectionResult:
    """Dispatch on the constraint kind to the matching greedy routine."""
    if isinstance(constraint, GroupKnapsack):
        return greedy_partial_enum(objective, constraint.groups, constraint.budget, m=m,
                                   compat_budget=compat_budget, workers=workers)
    if isinstance(constraint, PartitionMatroid):
        return greedy_multiview(objective, constraint.views, constraint.caps, lazy=lazy,
                                workers=workers)
    if isinstance(constraint, UniformMatroid):
        return greedy_matroid(objective, objective.ground, constraint, lazy=lazy, workers=workers)
    raise TypeError(f"unsupported constraint {type(constraint).__name__}")
