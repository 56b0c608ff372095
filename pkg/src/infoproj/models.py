"""Group-sparse Bayesian regression, group-sparse PPCA and sparse PCCA.

PPCA model (rank one): T = x w' + E with w ~ N(0, C) and iid noise of
variance sigma2 per column. The E-step projects the exact posterior of w onto
a support chosen by greedy maximization of Jt; the M-step updates x and
sigma2 in closed form given that projected posterior q.

PCCA stacks the views column-wise, uses a block-diagonal prior, and selects
the support under a partition matroid with one block per view.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .constraints import GroupStructure, UniformMatroid
from .gaussian import (
    LOG_2PI,
    GaussianDensity,
    GaussianObjective,
    condition_on_zero,
    log_density_at_zero,
    objective_jtilde,
)
from .solvers import SelectionResult, greedy_matroid, greedy_multiview, greedy_partial_enum

SIGMA2_MIN = 1e-12


class DegeneratePosteriorWarning(RuntimeWarning):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


def _prior_precision(d, prior_cov=None, prior_precision=None) -> np.ndarray:
    if prior_cov is not None and prior_precision is not None:
        raise ValueError("pass prior_cov or prior_precision, not both")
    if prior_precision is not None:
        p = np.asarray(prior_precision, dtype=float)
    elif prior_cov is not None:
        c = np.asarray(prior_cov, dtype=float)
        if c.shape != (d, d):
            raise ValueError(f"prior covariance must be {d}x{d}, got {c.shape}")
        try:
            f = la.cho_factor(c, lower=True)
        except la.LinAlgError as exc:
            raise ValueError("prior covariance is singular or not positive definite") from exc
        p = la.cho_solve(f, np.eye(d))
    else:
        return np.eye(d)
    if p.shape != (d, d):
        raise ValueError(f"prior precision must be {d}x{d}, got {p.shape}")
    return 0.5 * (p + p.T)


# ---------------------------------------------------------------- regression


@dataclass
class RegressionModel:
    Z: np.ndarray
    y: np.ndarray
    sigma2: float
    groups: GroupStructure
    budget: float
    prior_cov: np.ndarray | None = None
    prior_precision: np.ndarray | None = None

    def __post_init__(self):
        self.Z = np.asarray(self.Z, dtype=float)
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.Z.ndim != 2 or self.Z.shape[0] != self.y.size:
            raise ValueError(f"Z {self.Z.shape} and y ({self.y.size},) do not match")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if self.groups.d != self.Z.shape[1]:
            raise ValueError("group structure dimension does not match Z")
        self.prior_precision = _prior_precision(self.Z.shape[1], self.prior_cov,
                                                self.prior_precision)
        self.prior_cov = None


@dataclass
class RegressionFit:
    posterior: GaussianDensity
    selection: SelectionResult
    support: np.ndarray
    projected: GaussianDensity | None
    coef: np.ndarray

    def predict(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) @ self.coef


def regression_posterior(m: RegressionModel) -> GaussianDensity:
    lam = m.prior_precision + m.Z.T @ m.Z / m.sigma2
    return GaussianDensity(lam, m.Z.T @ m.y / m.sigma2)


def project(posterior: GaussianDensity, support) -> tuple[GaussianDensity | None, np.ndarray]:
    """Conditional on the complement being zero, plus its mean embedded in R^d."""
    support = np.asarray(support, dtype=np.int64)
    mean = np.zeros(posterior.dim)
    if support.size == 0:
        return None, mean
    q = condition_on_zero(posterior, support)
    mean[support] = q.mean
    return q, mean


def select_groups_regression(m: RegressionModel, enum_depth: int = 3,
                             compat_budget: bool = False, workers: int = 1) -> RegressionFit:
    post = regression_posterior(m)
    obj = GaussianObjective(post, m.groups)
    sel = greedy_partial_enum(obj, m.groups, m.budget, m=enum_depth,
                              compat_budget=compat_budget, workers=workers)
    support = m.groups.expand(sel.selected)
    q, coef = project(post, support)
    return RegressionFit(post, sel, support, q, coef)


def truncate_fit(fit: RegressionFit, groups: GroupStructure, n_steps: int) -> RegressionFit:
    """Keep only the first ``n_steps`` groups of the selection trace."""
    kept = tuple(sorted(fit.selection.order[:n_steps]))
    trace = fit.selection.trace[:n_steps]
    sel = SelectionResult(kept, trace, trace[-1].value if trace else 0.0,
                          fit.selection.evaluations)
    support = groups.expand(kept)
    q, coef = project(fit.posterior, support)
    return RegressionFit(fit.posterior, sel, support, q, coef)


# ---------------------------------------------------------------- PPCA / PCCA


@dataclass
class Theta:
    x: np.ndarray
    sigma2: float | np.ndarray

    def column_variances(self, d: int) -> np.ndarray:
        s = np.asarray(self.sigma2, dtype=float)
        return np.full(d, float(s)) if s.ndim == 0 else s


@dataclass
class ProjectedPosterior:
    support: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    density: GaussianDensity | None

    @classmethod
    def from_support(cls, posterior: GaussianDensity, support) -> "ProjectedPosterior":
        support = np.asarray(sorted(int(i) for i in support), dtype=np.int64)
        d = posterior.dim
        q, mean = project(posterior, support)
        cov = np.zeros((d, d))
        if q is not None:
            cov[np.ix_(support, support)] = q.covariance
        return cls(support, mean, cov, q)


@dataclass
class EStepResult:
    posterior: GaussianDensity
    selection: SelectionResult
    q: ProjectedPosterior
    kept_previous: bool = False


@dataclass
class FactorFit:
    theta: Theta
    q: ProjectedPosterior | None
    selection: SelectionResult | None
    trace: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False

    @property
    def factor(self) -> np.ndarray:
        return None if self.q is None else self.q.mean


class _FactorModel:
    T: np.ndarray
    prior_precision: np.ndarray
    noise_groups: np.ndarray
    theta0: Theta
    sigma2_min: float = SIGMA2_MIN

    def select(self, posterior: GaussianDensity):
        raise NotImplementedError

    def _init_theta(self, x, sigma2) -> Theta:
        T = self.T
        n, d = T.shape
        if x is None:
            u, s, _ = np.linalg.svd(T, full_matrices=False)
            x = u[:, 0] * s[0]
            resid = max((np.sum(T * T) - s[0] ** 2) / (n * d), self.sigma2_min)
            sigma2 = resid if sigma2 is None else sigma2
        elif sigma2 is None:
            sigma2 = max(float(np.var(T)), self.sigma2_min)
        x = np.asarray(x, dtype=float).ravel()
        if x.size != n:
            raise ValueError(f"x must have length {n}")
        s2 = np.asarray(sigma2, dtype=float)
        if np.any(s2 <= 0):
            raise ValueError("sigma2 must be positive")
        if s2.ndim == 0:
            if self.n_noise_groups == 1:
                return Theta(x, float(s2))
            return Theta(x, np.full(d, float(s2)))
        if s2.size == self.n_noise_groups:
            s2 = s2[self.noise_groups]
        elif s2.size != d:
            raise ValueError("sigma2 needs one value per noise group or per column")
        return Theta(x, s2)

    @property
    def n_noise_groups(self) -> int:
        return int(self.noise_groups.max()) + 1


def factor_posterior(T, prior_precision, theta: Theta) -> GaussianDensity:
    """Exact posterior of w given T: precision P + |x|^2 diag(1/s), potential T'x / s."""
    s = theta.column_variances(T.shape[1])
    x = theta.x
    lam = prior_precision + np.diag(float(x @ x) / s)
    return GaussianDensity(lam, (T.T @ x) / s)


def log_marginal_likelihood(T, prior_precision, theta: Theta) -> float:
    n, d = T.shape
    s = theta.column_variances(d)
    post = factor_posterior(T, prior_precision, theta)
    loglik0 = float(np.sum(-0.5 * n * np.log(2 * np.pi * s) - 0.5 * np.sum(T * T, axis=0) / s))
    logprior0 = -0.5 * d * LOG_2PI + 0.5 * np.linalg.slogdet(prior_precision)[1]
    return loglik0 + logprior0 - log_density_at_zero(post)


def expected_complete_loglik(T, prior_precision, q: ProjectedPosterior, theta: Theta) -> float:
    """E_q[log p(T | w) + log p(w)] with w fixed to zero off the support."""
    n, d = T.shape
    s = theta.column_variances(d)
    x = theta.x
    second = q.mean ** 2 + np.diag(q.cov)
    resid = np.sum(T * T, axis=0) - 2.0 * q.mean * (T.T @ x) + float(x @ x) * second
    loglik = float(np.sum(-0.5 * n * np.log(2 * np.pi * s) - 0.5 * resid / s))
    logprior = (-0.5 * d * LOG_2PI + 0.5 * np.linalg.slogdet(prior_precision)[1]
                - 0.5 * (q.mean @ prior_precision @ q.mean + np.sum(prior_precision * q.cov)))
    return loglik + float(logprior)


def free_energy(model: _FactorModel, q: ProjectedPosterior, theta: Theta) -> float:
    """E_q[log p(T, w)] + H(q); equals log p(T) - KL(q || p(w | T))."""
    ell = expected_complete_loglik(model.T, model.prior_precision, q, theta)
    k = q.support.size
    entropy = 0.0 if k == 0 else 0.5 * (k * (1.0 + LOG_2PI) - q.density.logdet_precision)
    value = ell + entropy
    if not np.isfinite(value):
        raise FloatingPointError("free energy is not finite")
    return value


def factor_estep(model: _FactorModel, theta: Theta, previous_support=None) -> EStepResult:
    post = factor_posterior(model.T, model.prior_precision, theta)
    sel, support = model.select(post)
    kept = False
    if previous_support is not None:
        prev = np.asarray(previous_support, dtype=np.int64)
        # Re-projecting the previous support is optimal for that support, so
        # keeping it when it scores higher makes the E-step monotone in F.
        if objective_jtilde(post, prev) > objective_jtilde(post, support):
            support, kept = prev, True
    return EStepResult(post, sel, ProjectedPosterior.from_support(post, support), kept)


def factor_mstep(model: _FactorModel, q: ProjectedPosterior, theta_prev: Theta) -> Theta:
    """Closed-form maximizer of the expected complete log-likelihood given q.

    With one noise variance: x = T mu / (mu'mu + tr Sigma) and
    sigma2 = (|T|_F^2 - 2 x'T mu + |x|^2 (mu'mu + tr Sigma)) / (n d).
    Per-group variances couple x and sigma2; then the two updates alternate
    until they stop moving.
    """
    T = model.T
    n, d = T.shape
    labels = model.noise_groups
    n_groups = model.n_noise_groups
    sizes = np.bincount(labels, minlength=n_groups)
    second = q.mean ** 2 + np.diag(q.cov)
    col_sq = np.sum(T * T, axis=0)
    s = theta_prev.column_variances(d).copy()
    x = theta_prev.x
    degenerate = float(np.sum(second)) <= 0.0
    if degenerate:
        warnings.warn("projected posterior is a point mass at zero; keeping previous x",
                      DegeneratePosteriorWarning, stacklevel=2)
    for _ in range(1 if n_groups == 1 else 200):
        if not degenerate:
            if n_groups == 1:
                x = (T @ q.mean) / float(np.sum(second))
            else:
                x = (T @ (q.mean / s)) / float(np.sum(second / s))
        tx = T.T @ x
        resid = col_sq - 2.0 * q.mean * tx + float(x @ x) * second
        per_group = np.bincount(labels, weights=resid, minlength=n_groups) / (n * sizes)
        per_group = np.maximum(per_group, model.sigma2_min)
        s_new = per_group[labels]
        done = np.allclose(s_new, s, rtol=1e-13, atol=0.0)
        s = s_new
        if done:
            break
    return Theta(x, float(s[0]) if n_groups == 1 else s)


def _fit_em(model: _FactorModel, max_iters: int, tol: float) -> FactorFit:
    theta = model.theta0
    fit = FactorFit(theta, None, None)
    support = None
    last = None
    for it in range(max_iters):
        e = factor_estep(model, theta, support)
        support = e.q.support
        f_e = free_energy(model, e.q, theta)
        theta = factor_mstep(model, e.q, theta)
        f_m = free_energy(model, e.q, theta)
        fit.trace.extend([f_e, f_m])
        fit.theta, fit.q, fit.selection, fit.n_iter = theta, e.q, e.selection, it + 1
        if not (np.isfinite(f_e) and np.isfinite(f_m)):
            raise DivergenceError("free energy became non-finite", fit.trace)
        if last is not None and abs(f_m - last) <= tol * max(1.0, abs(f_m)):
            fit.converged = True
            break
        last = f_m
    return fit


@dataclass
class PpcaModel(_FactorModel):
    """Rank-one group-sparse PPCA.

    With ``groups`` the E-step selects whole groups under a total-cost budget;
    with ``groups=None`` it selects at most ``budget`` coordinates.
    """

    T: np.ndarray
    groups: GroupStructure | None = None
    budget: float = 0
    prior_cov: np.ndarray | None = None
    prior_precision: np.ndarray | None = None
    x: np.ndarray | None = None
    sigma2: float | None = None
    enum_depth: int = 3
    compat_budget: bool = False
    lazy: bool = False
    workers: int = 1
    sigma2_min: float = SIGMA2_MIN

    def __post_init__(self):
        self.T = np.asarray(self.T, dtype=float)
        n, d = self.T.shape
        if self.groups is not None and self.groups.d != d:
            raise ValueError("group structure dimension does not match T")
        self.prior_precision = _prior_precision(d, self.prior_cov, self.prior_precision)
        self.prior_cov = None
        self.noise_groups = np.zeros(d, dtype=np.int64)
        self.theta0 = self._init_theta(self.x, self.sigma2)

    def select(self, posterior):
        if self.groups is None:
            obj = GaussianObjective(posterior)
            sel = greedy_matroid(obj, obj.ground, UniformMatroid(int(self.budget), obj.density.dim),
                                 lazy=self.lazy, workers=self.workers)
            return sel, np.asarray(sel.selected, dtype=np.int64)
        obj = GaussianObjective(posterior, self.groups)
        sel = greedy_partial_enum(obj, self.groups, self.budget, m=self.enum_depth,
                                  compat_budget=self.compat_budget, workers=self.workers)
        return sel, self.groups.expand(sel.selected)


def ppca_estep(m: PpcaModel, theta: Theta | None = None, previous_support=None) -> EStepResult:
    return factor_estep(m, m.theta0 if theta is None else theta, previous_support)


def ppca_mstep(m: PpcaModel, q: ProjectedPosterior, theta: Theta | None = None) -> Theta:
    return factor_mstep(m, q, m.theta0 if theta is None else theta)


def ppca_em(m: PpcaModel, max_iters: int = 100, tol: float = 1e-10) -> FactorFit:
    return _fit_em(m, max_iters, tol)


@dataclass
class PccaModel(_FactorModel):
    """Sparse PCCA over v views sharing the n-vector factor x.

    ``per_view_noise`` gives each view its own noise variance instead of the
    single shared one.
    """

    views: list
    caps: list
    priors: list | None = None
    x: np.ndarray | None = None
    sigma2: float | None = None
    per_view_noise: bool = False
    lazy: bool = False
    workers: int = 1
    sigma2_min: float = SIGMA2_MIN

    def __post_init__(self):
        self.views = [np.asarray(v, dtype=float) for v in self.views]
        if not self.views:
            raise ValueError("need at least one view")
        n = self.views[0].shape[0]
        if any(v.ndim != 2 or v.shape[0] != n for v in self.views):
            raise ValueError("all views must be 2-D with the same number of rows")
        if len(self.caps) != len(self.views):
            raise ValueError("need one cap per view")
        self.dims = [v.shape[1] for v in self.views]
        offsets = np.concatenate([[0], np.cumsum(self.dims)])
        self.blocks = [list(range(offsets[i], offsets[i + 1])) for i in range(len(self.dims))]
        self.T = np.hstack(self.views)
        priors = self.priors or [None] * len(self.views)
        self.prior_precision = la.block_diag(*[
            _prior_precision(d, prior_cov=c) for d, c in zip(self.dims, priors)])
        labels = np.concatenate([np.full(d, i) for i, d in enumerate(self.dims)])
        self.noise_groups = labels if self.per_view_noise else np.zeros_like(labels)
        self.noise_groups = self.noise_groups.astype(np.int64)
        self.theta0 = self._init_theta(self.x, self.sigma2)

    def select(self, posterior):
        obj = GaussianObjective(posterior)
        sel = greedy_multiview(obj, self.blocks, self.caps, lazy=self.lazy, workers=self.workers)
        return sel, np.asarray(sel.selected, dtype=np.int64)

    def split(self, w: np.ndarray) -> list:
        return [w[b] for b in self.blocks]


@dataclass
class PccaFit:
    fit: FactorFit
    weights: list
    supports: list

    @property
    def x(self):
        return self.fit.theta.x

    @property
    def trace(self):
        return self.fit.trace


def pcca_fit(m: PccaModel, max_iters: int = 100, tol: float = 1e-10) -> PccaFit:
    fit = _fit_em(m, max_iters, tol)
    if fit.q is None:
        weights = [np.zeros(d) for d in m.dims]
    else:
        weights = m.split(fit.q.mean)
    supports = []
    sup = set() if fit.q is None else set(fit.q.support.tolist())
    for b in m.blocks:
        supports.append(np.array([i - b[0] for i in b if i in sup], dtype=np.int64))
    return PccaFit(fit, weights, supports)
