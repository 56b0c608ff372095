"""Gaussian densities in precision form and the support-selection objective.

A density is stored as (precision, potential) = (inv(Sigma), inv(Sigma) @ mu).
Everything the projection machinery needs indexes principal submatrices of
the precision, so the covariance is only formed on request.

The set objective is

    Jt(S) = log p(x_{S^c} = 0) - log p(x = 0)
          = 0.5 * (r_S' inv(L_S) r_S - logdet L_S + |S| log 2pi)

with L the precision and r the potential.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg as la

LOG_2PI = float(np.log(2.0 * np.pi))
SYMMETRY_RTOL = 1e-10


class NotPositiveDefiniteError(ValueError):
    pass


def _cholesky(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    try:
        return la.cholesky(a, lower=True, check_finite=True)
    except (la.LinAlgError, ValueError) as exc:
        raise NotPositiveDefiniteError(f"{what} is not positive definite") from exc


def as_support(indices, dim: int) -> np.ndarray:
    """Validate an index set over [0, dim) and return it sorted as an int array."""
    s = np.asarray(list(indices) if not isinstance(indices, np.ndarray) else indices,
                   dtype=np.int64).ravel()
    if s.size and (s.min() < 0 or s.max() >= dim):
        raise IndexError(f"support index out of range for dimension {dim}: {s.tolist()}")
    out = np.unique(s)
    if out.size != s.size:
        raise ValueError(f"duplicate indices in support: {s.tolist()}")
    return out


@dataclass(frozen=True, eq=False)
class GaussianDensity:
    precision: np.ndarray
    potential: np.ndarray
    jitter: float = 0.0

    def __post_init__(self):
        lam = np.array(self.precision, dtype=float, copy=True)
        r = np.array(self.potential, dtype=float, copy=True).ravel()
        if lam.ndim != 2 or lam.shape[0] != lam.shape[1] or lam.shape[0] == 0:
            raise ValueError(f"precision must be a nonempty square matrix, got {lam.shape}")
        if r.shape[0] != lam.shape[0]:
            raise ValueError(f"potential has length {r.shape[0]}, expected {lam.shape[0]}")
        scale = np.abs(lam).max()
        if np.any(np.abs(lam - lam.T) > SYMMETRY_RTOL * np.maximum(np.abs(lam), scale)):
            raise ValueError("precision is not symmetric")
        lam = 0.5 * (lam + lam.T)
        if self.jitter:
            lam[np.diag_indices_from(lam)] += self.jitter
        lam.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "precision", lam)
        object.__setattr__(self, "potential", r)
        _ = self.cholesky  # fail fast on indefinite input

    @classmethod
    def from_moments(cls, mean, covariance) -> "GaussianDensity":
        cov = np.asarray(covariance, dtype=float)
        c = _cholesky(cov, "covariance")
        lam = la.cho_solve((c, True), np.eye(cov.shape[0]))
        lam = 0.5 * (lam + lam.T)
        return cls(lam, lam @ np.asarray(mean, dtype=float))

    @property
    def dim(self) -> int:
        return self.precision.shape[0]

    @cached_property
    def cholesky(self) -> np.ndarray:
        return _cholesky(self.precision, "precision")

    @cached_property
    def logdet_precision(self) -> float:
        return float(2.0 * np.log(np.diag(self.cholesky)).sum())

    @cached_property
    def mean(self) -> np.ndarray:
        mu = la.cho_solve((self.cholesky, True), self.potential)
        mu.setflags(write=False)
        return mu

    @cached_property
    def covariance(self) -> np.ndarray:
        cov = la.cho_solve((self.cholesky, True), np.eye(self.dim))
        cov = 0.5 * (cov + cov.T)
        cov.setflags(write=False)
        return cov

    def log_density(self, x) -> float:
        d = np.asarray(x, dtype=float) - self.mean
        return float(-0.5 * (self.dim * LOG_2PI - self.logdet_precision
                             + d @ self.precision @ d))


def kl_gaussian(q: GaussianDensity, p: GaussianDensity) -> float:
    """KL(q || p) for two Gaussians of the same dimension."""
    for name, g in (("q", q), ("p", p)):
        if not isinstance(g, GaussianDensity):
            raise TypeError(f"{name} must be a GaussianDensity")
    if q.dim != p.dim:
        raise ValueError(f"dimension mismatch: q has {q.dim}, p has {p.dim}")
    delta = p.mean - q.mean
    trace = float(np.sum(p.precision * q.covariance))
    kl = 0.5 * (trace + delta @ p.precision @ delta - q.dim
                - p.logdet_precision + q.logdet_precision)
    return max(float(kl), 0.0)


def condition_on_zero(p: GaussianDensity, s) -> GaussianDensity:
    """Density of x_S given x_{S^c} = 0, i.e. the information projection onto supp S."""
    idx = as_support(s, p.dim)
    if idx.size == 0:
        raise ValueError("empty support: the projection is the point mass at 0")
    return GaussianDensity(p.precision[np.ix_(idx, idx)], p.potential[idx])


def log_density_at_zero(p: GaussianDensity) -> float:
    quad = float(np.sum(la.solve_triangular(p.cholesky, p.potential, lower=True) ** 2))
    return -0.5 * (p.dim * LOG_2PI - p.logdet_precision + quad)


def log_mass_at_zero(p: GaussianDensity, s) -> float:
    """log of the marginal density of x_{S^c} at 0 (the unnormalized objective J)."""
    idx = as_support(s, p.dim)
    if idx.size == p.dim:
        return 0.0
    if idx.size == 0:
        return log_density_at_zero(p)
    return log_density_at_zero(p) - log_density_at_zero(condition_on_zero(p, idx))


def objective_jtilde(p: GaussianDensity, s) -> float:
    idx = as_support(s, p.dim)
    if idx.size == 0:
        return 0.0
    c = _cholesky(p.precision[np.ix_(idx, idx)], "precision submatrix")
    z = la.solve_triangular(c, p.potential[idx], lower=True)
    return 0.5 * float(z @ z - 2.0 * np.log(np.diag(c)).sum() + idx.size * LOG_2PI)


def kl_from_support(q: GaussianDensity, support, p: GaussianDensity) -> float:
    """KL between a density q living on ``support`` (zero elsewhere) and p.

    Densities on the subspace {x_{S^c} = 0} are compared against the restriction
    of p to that subspace, so the value is E_q[log q(x_S) - log p(x_S, 0)].
    """
    idx = as_support(support, p.dim)
    if q.dim != idx.size:
        raise ValueError(f"q has dimension {q.dim} but support has {idx.size} indices")
    cond = condition_on_zero(p, idx) if idx.size < p.dim else p
    return kl_gaussian(q, cond) - log_mass_at_zero(p, idx)


@dataclass(frozen=True, eq=False)
class GainState:
    """Cholesky factor of the precision restricted to the current support.

    ``support`` is kept in insertion order, which is also the row order of
    ``chol`` and ``z = inv(chol) @ r_support``.
    """

    support: tuple = ()
    chol: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    z: np.ndarray = field(default_factory=lambda: np.zeros(0))
    value: float = 0.0

    @classmethod
    def from_support(cls, p: GaussianDensity, s) -> "GainState":
        idx = [int(i) for i in s]
        as_support(idx, p.dim)
        if not idx:
            return cls()
        c = _cholesky(p.precision[np.ix_(idx, idx)], "precision submatrix")
        z = la.solve_triangular(c, p.potential[idx], lower=True)
        value = 0.5 * float(z @ z - 2.0 * np.log(np.diag(c)).sum() + len(idx) * LOG_2PI)
        return cls(tuple(idx), c, z, value)


def _check_block(state: GainState, current, block: np.ndarray, dim: int) -> None:
    if current is not None and set(int(i) for i in current) != set(state.support):
        raise ValueError("gain state does not match the current support")
    if block.size == 0:
        raise ValueError("empty candidate block")
    if block.min() < 0 or block.max() >= dim:
        raise IndexError(f"candidate index out of range for dimension {dim}")
    if len(set(block.tolist())) != block.size or set(block.tolist()) & set(state.support):
        raise ValueError("candidate block overlaps the current support")


def marginal_gain(p: GaussianDensity, current, candidate_block, state: GainState):
    """Return (Jt(current + block) - Jt(current), state extended by block).

    The gain comes from the Schur complement of the block against the current
    support, so only the new rows of the Cholesky factor are computed.
    """
    block = np.asarray(candidate_block, dtype=np.int64).ravel()
    _check_block(state, current, block, p.dim)
    a = list(state.support)
    lam, r = p.precision, p.potential
    if a:
        w = la.solve_triangular(state.chol, lam[np.ix_(a, block)], lower=True)
        schur = lam[np.ix_(block, block)] - w.T @ w
        u = r[block] - w.T @ state.z
    else:
        w = np.zeros((0, block.size))
        schur = lam[np.ix_(block, block)]
        u = r[block]
    cb = _cholesky(schur, "Schur complement")
    zb = la.solve_triangular(cb, u, lower=True)
    gain = 0.5 * float(zb @ zb - 2.0 * np.log(np.diag(cb)).sum() + block.size * LOG_2PI)
    n, b = len(a), block.size
    chol = np.zeros((n + b, n + b))
    chol[:n, :n] = state.chol
    chol[n:, :n] = w.T
    chol[n:, n:] = cb
    new = GainState(tuple(a) + tuple(int(i) for i in block), chol,
                    np.concatenate([state.z, zb]), state.value + gain)
    return gain, new


def block_gains(p: GaussianDensity, state: GainState, blocks: np.ndarray) -> np.ndarray:
    """Gains for many equal-size disjoint candidate blocks at once.

    ``blocks`` has shape (g, b); row i is one candidate. No state is returned;
    use :func:`marginal_gain` to extend the state by the chosen block.
    """
    blocks = np.asarray(blocks, dtype=np.int64)
    g, b = blocks.shape
    lam, r = p.precision, p.potential
    a = list(state.support)
    schur = lam[blocks[:, :, None], blocks[:, None, :]]
    u = r[blocks]
    if a:
        w = la.solve_triangular(state.chol, lam[np.ix_(a, blocks.ravel())], lower=True)
        w = w.reshape(len(a), g, b)
        schur = schur - np.einsum("agb,agc->gbc", w, w)
        u = u - np.einsum("agb,a->gb", w, state.z)
    if b == 1:
        s = schur[:, 0, 0]
        if np.any(s <= 0):
            raise NotPositiveDefiniteError("Schur complement is not positive definite")
        return 0.5 * (u[:, 0] ** 2 / s - np.log(s) + LOG_2PI)
    try:
        cb = np.linalg.cholesky(schur)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("Schur complement is not positive definite") from exc
    zb = np.linalg.solve(cb, u[:, :, None])[:, :, 0]
    logdet = 2.0 * np.log(np.diagonal(cb, axis1=1, axis2=2)).sum(axis=1)
    return 0.5 * ((zb ** 2).sum(axis=1) - logdet + b * LOG_2PI)


def is_monotone(p: GaussianDensity) -> bool:
    """Sufficient test for Jt being nondecreasing: largest eigenvalue of the precision <= 2 pi.

    Every block gain is at least 0.5 * (|B| log 2 pi - log det S) with S the
    Schur complement, and S is dominated by the diagonal block of the precision.
    """
    return bool(np.linalg.eigvalsh(p.precision)[-1] <= 2.0 * np.pi)


class GaussianObjective:
    """Jt as a set function over single coordinates or over disjoint groups.

    With ``groups`` (a :class:`~infoproj.constraints.GroupStructure`) the ground
    set is the group ids and element i stands for the coordinates of group i.
    """

    def __init__(self, density: GaussianDensity, groups=None, monotone: bool | None = None):
        self.density = density
        self.groups = groups
        self.monotone = is_monotone(density) if monotone is None else monotone
        if groups is None:
            self.blocks = [np.array([i]) for i in range(density.dim)]
        else:
            if groups.d != density.dim:
                raise ValueError(f"groups cover dimension {groups.d}, density has {density.dim}")
            self.blocks = [np.asarray(gr, dtype=np.int64) for gr in groups.groups]
        self.ground = tuple(range(len(self.blocks)))

    def expand(self, elements) -> np.ndarray:
        if len(elements) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate([self.blocks[e] for e in elements]))

    def value(self, elements) -> float:
        return objective_jtilde(self.density, self.expand(list(elements)))

    def initial_state(self) -> GainState:
        return GainState()

    def gains(self, state: GainState, candidates: Sequence[int]) -> np.ndarray:
        out = np.empty(len(candidates))
        by_size: dict[int, list[int]] = {}
        for pos, e in enumerate(candidates):
            by_size.setdefault(self.blocks[e].size, []).append(pos)
        for size, positions in by_size.items():
            if size == 0:
                out[positions] = 0.0
                continue
            blocks = np.stack([self.blocks[candidates[i]] for i in positions])
            out[positions] = block_gains(self.density, state, blocks)
        return out

    def extend(self, state: GainState, element: int) -> GainState:
        block = self.blocks[element]
        if block.size == 0:
            return state
        return marginal_gain(self.density, None, block, state)[1]
