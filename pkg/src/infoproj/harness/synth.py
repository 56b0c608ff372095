"""Synthetic data: planted group-sparse regression and random test densities."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..constraints import GroupStructure
from ..gaussian import GaussianDensity

SNR_LIST = (10000.0, 1000.0, 100.0, 10.0, 1.0, 0.1)
SPLIT = (0.5, 0.1, 0.4)
TRAIN, VAL, TEST = 0, 1, 2

# stream ids for rng_stream
BETA, DESIGN, NOISE, SPLITS, PICK = range(5)


def rng_stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for a (seed, component, ...) key.

    Streams are derived by key rather than drawn in sequence, so the order in
    which components consume randomness never changes their values.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(keys)))


@dataclass
class RegressionData:
    Z: np.ndarray
    y: np.ndarray
    beta: np.ndarray
    groups: GroupStructure
    true_groups: tuple
    split: np.ndarray
    sigma2: float
    snr: float

    def part(self, which: int):
        mask = self.split == which
        return self.Z[mask], self.y[mask]


def gen_synthetic_regression(d: int = 1000, n: int = 1000, true_groups=5, snr: float = 10000.0,
                             seed: int = 0, group_size: int = 4, rep: int = 0,
                             split=SPLIT) -> RegressionData:
    """Planted group-sparse linear model with iid standard normal features.

    ``true_groups`` is a count of planted groups (picked at random among the
    contiguous size-``group_size`` blocks) or an explicit list of block ids.
    Noise variance is |beta|^2 / snr, the population signal variance over the
    noise variance. The planted groups and beta depend on the seed only; Z, the
    noise and the split are redrawn for each ``rep``. Nothing but the noise
    scale depends on snr.
    """
    if snr <= 0:
        raise ValueError("snr must be positive")
    groups = GroupStructure.uniform_blocks(d, group_size)
    full_blocks = [i for i, g in enumerate(groups.groups) if len(g) == group_size]
    if isinstance(true_groups, int):
        if true_groups * group_size > d or true_groups > len(full_blocks):
            raise ValueError(f"{true_groups} groups of {group_size} do not fit in d={d}")
        picked = rng_stream(seed, PICK).choice(full_blocks, size=true_groups, replace=False)
        true = tuple(sorted(int(i) for i in picked))
    else:
        true = tuple(sorted(int(i) for i in true_groups))
        if any(i not in full_blocks for i in true):
            raise ValueError(f"planted groups {true} are not valid blocks")
    beta = np.zeros(d)
    idx = groups.expand(true)
    rb = rng_stream(seed, BETA)
    beta[idx] = rb.choice([-1.0, 1.0], size=idx.size) * rb.uniform(0.5, 1.5, size=idx.size)
    Z = rng_stream(seed, rep, DESIGN).standard_normal((n, d))
    sigma2 = float(beta @ beta) / snr
    eps = rng_stream(seed, rep, NOISE).standard_normal(n) * np.sqrt(sigma2)
    y = Z @ beta + eps
    perm = rng_stream(seed, rep, SPLITS).permutation(n)
    bounds = np.round(np.cumsum(split) * n).astype(int)
    labels = np.empty(n, dtype=np.int64)
    labels[perm[:bounds[0]]] = TRAIN
    labels[perm[bounds[0]:bounds[1]]] = VAL
    labels[perm[bounds[1]:]] = TEST
    return RegressionData(Z, y, beta, groups, true, labels, sigma2, float(snr))


def random_density(rng: np.random.Generator, d: int, ridge: float = 0.1,
                   potential_scale: float = 1.0) -> GaussianDensity:
    """Generic test density: precision A A'/d + ridge I, standard normal potential."""
    a = rng.standard_normal((d, d))
    lam = a @ a.T / d + ridge * np.eye(d)
    return GaussianDensity(lam, potential_scale * rng.standard_normal(d))


def planted_factor_data(rng: np.random.Generator, n: int, d: int, support, noise: float = 0.01,
                        strength: float = 3.0):
    """T = x w' + noise with w nonzero only on ``support``."""
    x = rng.standard_normal(n)
    w = np.zeros(d)
    support = np.asarray(support, dtype=np.int64)
    w[support] = rng.choice([-1.0, 1.0], size=support.size) * rng.uniform(1.0, 2.0, support.size)
    w *= strength / np.sqrt(max(support.size, 1))
    T = np.outer(x, w) + np.sqrt(noise) * rng.standard_normal((n, d))
    return T, x, w
