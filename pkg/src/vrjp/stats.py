"""Statistical test helpers shared by the experiments and the test suite."""

from __future__ import annotations

from collections import Counter

import numpy as np
from scipy import stats as sps


def mc_mean_stderr(x) -> tuple[float, float]:
    """Plain Monte Carlo mean and standard error."""
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x)))


def batch_means_stderr(x, n_batches: int = 100) -> tuple[float, float]:
    """Batch-means standard error, robust to residual autocorrelation."""
    x = np.asarray(x, dtype=float)
    n = len(x) - len(x) % n_batches
    means = x[:n].reshape(n_batches, -1).mean(axis=1)
    return float(x.mean()), float(means.std(ddof=1) / np.sqrt(n_batches))


def _pooled_categories(count_a: Counter, count_b: Counter, min_expected: float):
    """Pool categories whose pooled expected count falls below the threshold."""
    na, nb = sum(count_a.values()), sum(count_b.values())
    cats = sorted(set(count_a) | set(count_b))
    total = na + nb
    keep, other_a, other_b = [], 0, 0
    for c in cats:
        pooled = count_a.get(c, 0) + count_b.get(c, 0)
        exp_a = pooled * na / total
        exp_b = pooled * nb / total
        if min(exp_a, exp_b) >= min_expected:
            keep.append(c)
        else:
            other_a += count_a.get(c, 0)
            other_b += count_b.get(c, 0)
    rows_a = [count_a.get(c, 0) for c in keep]
    rows_b = [count_b.get(c, 0) for c in keep]
    if other_a + other_b > 0:
        rows_a.append(other_a)
        rows_b.append(other_b)
    return np.array(rows_a, dtype=float), np.array(rows_b, dtype=float)


def chi2_two_sample(sample_a, sample_b, min_expected: float = 5.0) -> tuple[float, float, int]:
    """Two-sample chi-square homogeneity test on categorical data.

    Accepts raw hashable observations or Counters.  Returns (statistic,
    p-value, dof); degenerate tables give p = 1.
    """
    ca = sample_a if isinstance(sample_a, Counter) else Counter(sample_a)
    cb = sample_b if isinstance(sample_b, Counter) else Counter(sample_b)
    a, b = _pooled_categories(ca, cb, min_expected)
    if len(a) < 2:
        return 0.0, 1.0, 0
    na, nb = a.sum(), b.sum()
    pooled = (a + b) / (na + nb)
    ea, eb = na * pooled, nb * pooled
    stat = float(np.sum((a - ea) ** 2 / ea) + np.sum((b - eb) ** 2 / eb))
    dof = len(a) - 1
    return stat, float(sps.chi2.sf(stat, dof)), dof


def chi2_gof(observed, probs, min_expected: float = 5.0) -> tuple[float, float, int]:
    """One-sample chi-square goodness of fit against given category probabilities."""
    obs = np.asarray(observed, dtype=float)
    p = np.asarray(probs, dtype=float)
    n = obs.sum()
    exp = n * p
    keep = exp >= min_expected
    if (~keep).any():
        obs = np.append(obs[keep], obs[~keep].sum())
        exp = np.append(exp[keep], exp[~keep].sum())
    if len(obs) < 2 or exp[-1] == 0:
        return 0.0, 1.0, 0
    stat = float(np.sum((obs - exp) ** 2 / exp))
    dof = len(obs) - 1
    return stat, float(sps.chi2.sf(stat, dof)), dof


def ks_two_sample(a, b) -> tuple[float, float]:
    res = sps.ks_2samp(np.asarray(a), np.asarray(b))
    return float(res.statistic), float(res.pvalue)


def poisson_dispersion_test(counts) -> float:
    """Index-of-dispersion test: (n-1) s^2 / mean ~ chi2(n-1) under Poisson."""
    c = np.asarray(counts, dtype=float)
    n = len(c)
    mean = c.mean()
    if mean == 0:
        return 1.0
    stat = (n - 1) * c.var(ddof=1) / mean
    # two-sided via the smaller tail
    lo = sps.chi2.cdf(stat, n - 1)
    hi = sps.chi2.sf(stat, n - 1)
    return float(2 * min(lo, hi))


def sequence_tv_distance(sample_a, sample_b) -> float:
    """Total-variation distance between empirical category distributions."""
    ca, cb = Counter(sample_a), Counter(sample_b)
    na, nb = sum(ca.values()), sum(cb.values())
    cats = set(ca) | set(cb)
    return 0.5 * sum(abs(ca.get(c, 0) / na - cb.get(c, 0) / nb) for c in cats)


def mutual_information(x, y) -> float:
    """Empirical mutual information (nats) of paired categorical samples."""
    joint = Counter(zip(x, y))
    cx, cy = Counter(x), Counter(y)
    n = len(x)
    mi = 0.0
    for (a, b), c in joint.items():
        p = c / n
        mi += p * np.log(p * n * n / (cx[a] * cy[b]))
    return float(mi)


def permutation_independence_test(x, y, rng: np.random.Generator, n_perm: int = 500) -> float:
    """Permutation p-value for independence of two categorical samples (MI statistic)."""
    x = list(x)
    y = np.asarray(list(y), dtype=object)
    observed = mutual_information(x, y)
    hits = 1
    for _ in range(n_perm):
        perm = rng.permutation(len(y))
        if mutual_information(x, y[perm]) >= observed:
            hits += 1
    return hits / (n_perm + 1)
