import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from conftest import density_from_seed, random_subset
from infoproj.gaussian import (
    GainState,
    GaussianDensity,
    GaussianObjective,
    NotPositiveDefiniteError,
    block_gains,
    condition_on_zero,
    kl_from_support,
    kl_gaussian,
    log_mass_at_zero,
    marginal_gain,
    objective_jtilde,
)

LOG_2PI = math.log(2 * math.pi)


def iso(mean):
    mean = np.asarray(mean, dtype=float)
    return GaussianDensity.from_moments(mean, np.eye(mean.size))


# ---------------------------------------------------------------- density


def test_density_rejects_asymmetric():
    with pytest.raises(ValueError):
        GaussianDensity(np.array([[1.0, 0.5], [0.0, 1.0]]), np.zeros(2))


def test_density_rejects_indefinite():
    with pytest.raises(NotPositiveDefiniteError):
        GaussianDensity(np.array([[1.0, 2.0], [2.0, 1.0]]), np.zeros(2))


def test_jitter_rescues_singular_precision():
    lam = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(NotPositiveDefiniteError):
        GaussianDensity(lam, np.zeros(2))
    p = GaussianDensity(lam, np.zeros(2), jitter=1e-6)
    assert p.precision[0, 0] == pytest.approx(1.0 + 1e-6)


def test_moments_round_trip():
    p = density_from_seed(3, 6)
    q = GaussianDensity.from_moments(p.mean, p.covariance)
    np.testing.assert_allclose(q.precision, p.precision, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(q.potential, p.potential, rtol=1e-9, atol=1e-9)


def test_log_density_matches_scipy():
    p = density_from_seed(4, 5)
    x = np.linspace(-1, 1, 5)
    ref = stats.multivariate_normal(p.mean, p.covariance).logpdf(x)
    assert p.log_density(x) == pytest.approx(ref, rel=1e-10)


# ---------------------------------------------------------------- KL


def test_kl_self_is_zero():
    p = density_from_seed(0, 4)
    assert kl_gaussian(p, p) == pytest.approx(0.0, abs=1e-12)


def test_kl_mean_shift():
    assert kl_gaussian(iso([0, 0]), iso([1, 0])) == pytest.approx(0.5, abs=1e-12)


def test_kl_variance_ratio_against_quadrature():
    q = GaussianDensity.from_moments([0.0], [[2.0]])
    p = GaussianDensity.from_moments([0.0], [[1.0]])
    fq, fp = stats.norm(0, math.sqrt(2)), stats.norm(0, 1)
    ref, _ = integrate.quad(lambda x: fq.pdf(x) * (fq.logpdf(x) - fp.logpdf(x)), -40, 40)
    assert ref == pytest.approx(0.15343, abs=1e-5)
    assert kl_gaussian(q, p) == pytest.approx(ref, abs=1e-9)
    assert kl_gaussian(q, p) == pytest.approx(0.5 * (2 - 1 - math.log(2)), abs=1e-12)


def test_kl_dimension_mismatch():
    with pytest.raises(ValueError):
        kl_gaussian(iso([0.0]), iso([0.0, 0.0]))
    with pytest.raises(TypeError):
        kl_gaussian("q", iso([0.0]))


@given(st.integers(0, 10_000), st.integers(1, 6))
def test_kl_nonnegative(seed, d):
    q, p = density_from_seed(seed, d), density_from_seed(seed + 1, d)
    assert kl_gaussian(q, p) >= 0.0


# ---------------------------------------------------------------- conditioning


def test_condition_identity_precision():
    p = iso([1.0, -2.0, 3.0])
    c = condition_on_zero(p, [1])
    assert c.mean[0] == pytest.approx(-2.0)
    assert c.covariance[0, 0] == pytest.approx(1.0)


def test_condition_two_dim_example():
    p = GaussianDensity(np.array([[2.0, 1.0], [1.0, 2.0]]), np.array([1.0, 2.0]))
    c = condition_on_zero(p, [0])
    assert c.precision[0, 0] == 2.0 and c.potential[0] == 1.0
    assert c.mean[0] == pytest.approx(0.5) and c.covariance[0, 0] == pytest.approx(0.5)
    # brute-force conditioning from the moment form
    mu, cov = p.mean, p.covariance
    cond_mean = mu[0] + cov[0, 1] / cov[1, 1] * (0 - mu[1])
    cond_var = cov[0, 0] - cov[0, 1] ** 2 / cov[1, 1]
    assert c.mean[0] == pytest.approx(cond_mean) and c.covariance[0, 0] == pytest.approx(cond_var)


def test_condition_full_support_is_identity():
    p = density_from_seed(1, 4)
    c = condition_on_zero(p, range(4))
    np.testing.assert_array_equal(c.precision, p.precision)
    np.testing.assert_array_equal(c.potential, p.potential)


def test_condition_errors():
    p = iso([0.0, 0.0])
    with pytest.raises(ValueError):
        condition_on_zero(p, [])
    with pytest.raises(IndexError):
        condition_on_zero(p, [2])
    with pytest.raises(ValueError):
        condition_on_zero(p, [0, 0])


def test_log_mass_examples():
    p = iso([1.0, 2.0])
    assert log_mass_at_zero(p, [0, 1]) == 0.0
    assert log_mass_at_zero(p, []) == pytest.approx(-LOG_2PI - 2.5, abs=1e-12)
    assert log_mass_at_zero(p, []) == pytest.approx(-4.3379, abs=1e-4)
    assert log_mass_at_zero(p, [1]) == pytest.approx(-0.5 * LOG_2PI - 0.5, abs=1e-12)
    assert log_mass_at_zero(p, [1]) == pytest.approx(-1.4189, abs=1e-4)


@given(st.integers(0, 10_000), st.integers(1, 8))
def test_log_mass_is_marginal_density_at_zero(seed, d):
    p = density_from_seed(seed, d)
    s = random_subset(np.random.default_rng(seed), d)
    comp = np.setdiff1d(np.arange(d), s)
    if comp.size == 0:
        return
    marg = stats.multivariate_normal(p.mean[comp], p.covariance[np.ix_(comp, comp)])
    assert log_mass_at_zero(p, s) == pytest.approx(marg.logpdf(np.zeros(comp.size)),
                                                   rel=1e-8, abs=1e-8)


# ---------------------------------------------------------------- objective


def test_jtilde_examples():
    p = iso([1.0, 2.0])
    assert objective_jtilde(p, []) == 0.0
    assert objective_jtilde(p, [1]) == pytest.approx(2 + 0.5 * LOG_2PI, abs=1e-12)
    assert objective_jtilde(p, [1]) == pytest.approx(2.9189, abs=1e-4)


@given(st.integers(0, 10_000), st.integers(1, 10))
def test_jtilde_is_log_mass_difference(seed, d):
    p = density_from_seed(seed, d)
    s = random_subset(np.random.default_rng(seed), d)
    expected = log_mass_at_zero(p, s) - log_mass_at_zero(p, [])
    assert abs(objective_jtilde(p, s) - expected) <= 1e-8 * max(1.0, abs(expected))


@given(st.integers(0, 10_000), st.integers(1, 8))
def test_kl_of_projection_is_minus_log_mass(seed, d):
    p = density_from_seed(seed, d)
    s = random_subset(np.random.default_rng(seed), d, size=None)
    if s.size == 0:
        return
    q = condition_on_zero(p, s)
    assert kl_from_support(q, s, p) == pytest.approx(-log_mass_at_zero(p, s), abs=1e-8)


def test_jtilde_equals_negative_direct_kl_plus_offset():
    # KL between the zero-extended projection and p, evaluated by Monte Carlo-free
    # closed form: E_q[log q(x_S)] - E_q[log p(x_S, 0)]
    p = density_from_seed(11, 5)
    s = np.array([0, 2, 3])
    q = condition_on_zero(p, s)
    ent = 0.5 * (s.size * (1 + LOG_2PI) - q.logdet_precision)
    # E_q log p(x_S, 0) = log p at mean + quadratic correction
    x0 = np.zeros(5)
    x0[s] = q.mean
    e_logp = p.log_density(x0) - 0.5 * np.sum(p.precision[np.ix_(s, s)] * q.covariance)
    kl = -ent - e_logp
    offset = log_mass_at_zero(p, [])
    assert objective_jtilde(p, s) == pytest.approx(-kl - offset, abs=1e-10)


def test_projection_is_kl_optimal():
    rng = np.random.default_rng(7)
    p = density_from_seed(21, 6)
    s = np.array([1, 3, 4])
    best = kl_from_support(condition_on_zero(p, s), s, p)
    for _ in range(100):
        q0 = condition_on_zero(p, s)
        a = rng.standard_normal((3, 3)) * 0.3
        cov = q0.covariance + a @ a.T
        q = GaussianDensity.from_moments(q0.mean + 0.3 * rng.standard_normal(3), cov)
        assert kl_from_support(q, s, p) >= best - 1e-12


def test_not_submodular_counterexample():
    # Strong correlation with zero potential: the pair is worth more than the
    # two singletons together, so diminishing returns fails.
    p = GaussianDensity(np.array([[1.0, 0.9], [0.9, 1.0]]), np.zeros(2))
    lhs = objective_jtilde(p, [0, 1]) + objective_jtilde(p, [])
    rhs = objective_jtilde(p, [0]) + objective_jtilde(p, [1])
    assert lhs - rhs == pytest.approx(-0.5 * math.log(0.19), abs=1e-12)
    assert lhs > rhs


@given(st.integers(0, 10_000), st.integers(2, 8))
def test_diagonal_precision_is_modular(seed, d):
    rng = np.random.default_rng(seed)
    p = GaussianDensity(np.diag(rng.uniform(0.2, 3.0, d)), rng.standard_normal(d))
    a, b = random_subset(rng, d), random_subset(rng, d)
    union, inter = np.union1d(a, b), np.intersect1d(a, b)
    lhs = objective_jtilde(p, union) + objective_jtilde(p, inter)
    rhs = objective_jtilde(p, a) + objective_jtilde(p, b)
    assert lhs == pytest.approx(rhs, abs=1e-9)


# ---------------------------------------------------------------- incremental gains


def test_gain_from_empty_is_singleton_value():
    p = density_from_seed(5, 4)
    for i in range(4):
        g, st_ = marginal_gain(p, [], [i], GainState())
        assert g == pytest.approx(objective_jtilde(p, [i]), abs=1e-12)
        assert st_.support == (i,)


def test_gains_at_singleton_match_naive():
    p = density_from_seed(6, 6)
    _, state = marginal_gain(p, [], [0], GainState())
    for i in range(1, 6):
        g, _ = marginal_gain(p, [0], [i], state)
        naive = objective_jtilde(p, [0, i]) - objective_jtilde(p, [0])
        assert g == pytest.approx(naive, rel=1e-7, abs=1e-10)


@given(st.integers(0, 10_000), st.integers(2, 12), st.integers(1, 3))
def test_gain_path_telescopes(seed, d, b):
    rng = np.random.default_rng(seed)
    p = density_from_seed(seed, d)
    perm = rng.permutation(d)
    state, total, current = GainState(), 0.0, []
    for start in range(0, d, b):
        block = perm[start:start + b]
        g, state = marginal_gain(p, current, block, state)
        naive = objective_jtilde(p, np.concatenate([current, block]).astype(int)) \
            - objective_jtilde(p, np.asarray(current, dtype=int))
        assert g == pytest.approx(naive, rel=1e-7, abs=1e-9)
        total += g
        current = list(current) + block.tolist()
    assert total == pytest.approx(objective_jtilde(p, range(d)), rel=1e-7, abs=1e-9)
    assert state.value == pytest.approx(total, abs=1e-9)


def test_block_gains_match_single():
    p = density_from_seed(8, 9)
    state = GainState.from_support(p, [4, 0])
    blocks = np.array([[1, 2], [3, 5], [6, 8]])
    batched = block_gains(p, state, blocks)
    for blk, g in zip(blocks, batched):
        assert g == pytest.approx(marginal_gain(p, [0, 4], blk, state)[0], rel=1e-10)
    singles = block_gains(p, state, np.array([[1], [7]]))
    assert singles[1] == pytest.approx(marginal_gain(p, [0, 4], [7], state)[0], rel=1e-10)


def test_gain_errors():
    p = density_from_seed(9, 4)
    state = GainState.from_support(p, [0, 1])
    with pytest.raises(ValueError):
        marginal_gain(p, [0, 1], [1, 2], state)  # overlap
    with pytest.raises(ValueError):
        marginal_gain(p, [0], [2], state)  # desync
    with pytest.raises(IndexError):
        marginal_gain(p, [0, 1], [4], state)


def test_objective_over_groups():
    from infoproj.constraints import GroupStructure
    p = density_from_seed(10, 6)
    g = GroupStructure(6, ((0, 3), (1,), (2, 4, 5)))
    obj = GaussianObjective(p, g)
    assert obj.ground == (0, 1, 2)
    assert obj.value([0, 2]) == pytest.approx(objective_jtilde(p, [0, 2, 3, 4, 5]))
    gains = obj.gains(obj.initial_state(), [0, 1, 2])
    np.testing.assert_allclose(gains, [obj.value([i]) for i in range(3)], rtol=1e-10)


@given(st.integers(0, 10_000), st.integers(1, 8))
def test_small_precision_objective_is_monotone(seed, d):
    p = density_from_seed(seed, d)
    obj = GaussianObjective(p)
    if not obj.monotone:
        return
    rng = np.random.default_rng(seed)
    s = random_subset(rng, d)
    rest = np.setdiff1d(np.arange(d), s)
    if rest.size:
        gains = obj.gains(GainState.from_support(p, s), rest.tolist())
        assert np.all(gains >= -1e-12)


def test_large_precision_flagged_nonmonotone():
    # a confident posterior: unit-potential coordinate with precision 100 loses value
    p = GaussianDensity(np.diag([100.0, 1.0]), np.array([1.0, 3.0]))
    obj = GaussianObjective(p)
    assert not obj.monotone
    assert obj.value([0]) < 0.0
    assert GaussianObjective(p, monotone=True).monotone
