"""Statistical procedures used to validate framing effects.

All routines are deterministic; the resampling ones take an explicit seed and
draw from the counter-based generator in :mod:`svi_audit.rng`, so results are
identical across platforms and across the compiled/NumPy kernel backends.
Distribution tails (chi-square, normal, noncentral chi-square) come from
SciPy; the test statistics and exact null distributions are computed here.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _sps

from ._core import kernels

# Exact/asymptotic switchover points.
MWU_EXACT_MAX_MIN_SIZE = 12
WILCOXON_EXACT_MAX_PAIRS = 20


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    df: int | None = None
    effect_size: float | None = None
    effect_name: str | None = None
    p_adjusted: float | None = None
    method: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "df": self.df,
            "effect_size": self.effect_size,
            "effect_name": self.effect_name,
            "p_adjusted": self.p_adjusted,
            "method": self.method,
        }
        d.update(self.extra)
        return d


@dataclass(frozen=True)
class IntervalEstimate:
    point: float
    lo: float
    hi: float
    level: float = 0.95
    method: str = "bootstrap_percentile"

    def to_dict(self) -> dict:
        return {"point": self.point, "lo": self.lo, "hi": self.hi, "level": self.level, "method": self.method}


@dataclass(frozen=True)
class PosteriorSummary:
    group: str
    mu_post: float
    sd_post: float
    ci95: IntervalEstimate
    prob_greater: dict

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "mu_post": self.mu_post,
            "sd_post": self.sd_post,
            "ci95": self.ci95.to_dict(),
            "prob_greater": dict(self.prob_greater),
        }


def _clip_p(p: float) -> float:
    return float(min(1.0, max(0.0, p)))


def midranks(values) -> np.ndarray:
    """1-based ranks with ties given the average of the positions they span."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=np.float64)
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _tie_sizes(values) -> np.ndarray:
    _, counts = np.unique(np.asarray(values, dtype=np.float64), return_counts=True)
    return counts.astype(np.float64)


# ---------------------------------------------------------------- Cochran's Q


def cochran_q(matrix) -> TestResult:
    """Cochran's Q for an n-blocks by k-treatments binary matrix.

    A matrix with no within-row variation is degenerate and returns Q=0, p=1.
    """
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise ValueError("expected a 2-D block matrix")
    n, k = m.shape
    if k < 2 or n < 2:
        raise ValueError(f"need at least 2 blocks and 2 treatments, got {n}x{k}")
    if not np.isin(m, (0, 1)).all():
        raise ValueError("Cochran's Q needs binary entries")
    q = float(kernels.cochran_q(m.astype(np.int64)))
    p = 1.0 if q == 0.0 else float(_sps.chi2.sf(q, k - 1))
    return TestResult(q, _clip_p(p), df=k - 1, method="cochran_q")


def cochran_q_many(stack) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised Q and p for a stack of equally shaped binary matrices."""
    s = np.asarray(stack, dtype=np.int64)
    k = s.shape[2]
    q = np.asarray(kernels.cochran_q_many(s))
    p = np.where(q == 0.0, 1.0, _sps.chi2.sf(q, k - 1))
    return q, p


# ------------------------------------------------------------ Benjamini-Hochberg


def bh_fdr(p_values: Sequence[float], q: float = 0.05) -> set[int]:
    """Indices rejected by the Benjamini-Hochberg step-up procedure at level q."""
    p = np.asarray(list(p_values), dtype=np.float64)
    if p.size == 0:
        return set()
    if np.isnan(p).any() or (p < 0).any() or (p > 1).any():
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="mergesort")
    below = p[order] <= q * np.arange(1, m + 1) / m
    if not below.any():
        return set()
    cutoff = p[order][np.nonzero(below)[0].max()]
    return {int(i) for i in np.nonzero(p <= cutoff)[0]}


def bh_adjusted(p_values: Sequence[float]) -> np.ndarray:
    """BH-adjusted p-values (q-values), same order as the input."""
    p = np.asarray(list(p_values), dtype=np.float64)
    m = p.size
    if m == 0:
        return p
    order = np.argsort(p, kind="mergesort")
    scaled = p[order] * m / np.arange(1, m + 1)
    adj = np.minimum.accumulate(scaled[::-1])[::-1]
    out = np.empty(m)
    out[order] = np.minimum(adj, 1.0)
    return out


# --------------------------------------------------------------- Kruskal-Wallis


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> TestResult:
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    if any(g.size == 0 for g in groups):
        raise ValueError("every group must be nonempty")
    k = len(groups)
    pooled = np.concatenate(groups)
    N = pooled.size
    ranks = midranks(pooled)
    h = 0.0
    start = 0
    for g in groups:
        r = ranks[start : start + g.size]
        h += r.sum() ** 2 / g.size
        start += g.size
    h = 12.0 / (N * (N + 1)) * h - 3.0 * (N + 1)
    t = _tie_sizes(pooled)
    correction = 1.0 - (t**3 - t).sum() / (N**3 - N) if N > 1 else 0.0
    if correction <= 0:
        h, p = 0.0, 1.0
    else:
        h /= correction
        p = float(_sps.chi2.sf(h, k - 1))
    eps2 = float((h - k + 1) / (N - k)) if N > k else float("nan")
    return TestResult(float(h), _clip_p(p), df=k - 1, effect_size=eps2,
                      effect_name="epsilon_squared", method="kruskal_wallis")


# ----------------------------------------------------------------- Mann-Whitney


def cliffs_delta(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    u = kernels.mann_whitney_u(a, b)
    return 2.0 * u / (a.size * b.size) - 1.0


def _subset_rank_sum_counts(doubled_ranks: np.ndarray, m: int) -> np.ndarray:
    """counts[s] = number of size-m subsets whose doubled rank sum is s."""
    total = int(doubled_ranks.sum())
    dp = np.zeros((m + 1, total + 1), dtype=np.float64)
    dp[0, 0] = 1.0
    for r in doubled_ranks.astype(np.int64):
        # iterate subset sizes downward so each item is used at most once
        dp[1:, r:] += dp[:-1, : total + 1 - r].copy()
    return dp[m]


def _mwu_exact_p(a: np.ndarray, b: np.ndarray) -> float:
    pooled = np.concatenate([a, b])
    doubled = np.rint(2 * midranks(pooled)).astype(np.int64)
    m, N = a.size, pooled.size
    counts = _subset_rank_sum_counts(doubled, m)
    sums = np.arange(counts.size)
    expected = m * (N + 1)  # E[2 * rank sum]
    obs = int(doubled[:m].sum())
    extreme = np.abs(sums - expected) >= abs(obs - expected) - 1e-9
    return float(counts[extreme].sum() / counts.sum())


def _mwu_normal_p(u: float, n1: int, n2: int, pooled) -> float:
    N = n1 + n2
    t = _tie_sizes(pooled)
    var = n1 * n2 / 12.0 * ((N + 1) - (t**3 - t).sum() / (N * (N - 1)))
    if var <= 0:
        return 1.0
    dev = abs(u - n1 * n2 / 2.0) - 0.5
    return float(2.0 * _sps.norm.sf(max(dev, 0.0) / math.sqrt(var)))


def mann_whitney(a, b, corrections: int = 1) -> TestResult:
    """Two-sided Mann-Whitney U with Cliff's delta and Bonferroni adjustment.

    U counts pairs with a > b (ties 0.5), so delta < 0 means ``a`` tends to be
    smaller than ``b``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    if corrections < 1:
        raise ValueError("corrections must be >= 1")
    u = float(kernels.mann_whitney_u(a, b))
    if min(a.size, b.size) <= MWU_EXACT_MAX_MIN_SIZE:
        p, method = _mwu_exact_p(a, b), "mann_whitney_exact"
    else:
        p, method = _mwu_normal_p(u, a.size, b.size, np.concatenate([a, b])), "mann_whitney_normal"
    p = _clip_p(p)
    delta = 2.0 * u / (a.size * b.size) - 1.0
    return TestResult(u, p, effect_size=delta, effect_name="cliffs_delta",
                      p_adjusted=min(1.0, p * corrections), method=method)


# -------------------------------------------------------------------- Wilcoxon


def wilcoxon_signed_rank(paired_a, paired_b) -> TestResult:
    a = np.asarray(paired_a, dtype=np.float64)
    b = np.asarray(paired_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 1:
        raise ValueError("need at least one pair")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n == 0:
        return TestResult(0.0, 1.0, method="wilcoxon_exact", extra={"n_nonzero": 0})
    ranks = midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus)
    if n <= WILCOXON_EXACT_MAX_PAIRS:
        doubled = np.rint(2 * ranks).astype(np.int64)
        total = int(doubled.sum())
        counts = np.zeros(total + 1)
        counts[0] = 1.0
        for r in doubled:
            shifted = np.zeros_like(counts)
            shifted[r:] = counts[: total + 1 - r]
            counts = counts + shifted
        sums = np.arange(total + 1)
        center = total / 2.0
        obs = 2 * w_plus
        extreme = np.abs(sums - center) >= abs(obs - center) - 1e-9
        p = float(counts[extreme].sum() / counts.sum())
        method = "wilcoxon_exact"
    else:
        t = _tie_sizes(np.abs(d))
        var = n * (n + 1) * (2 * n + 1) / 24.0 - (t**3 - t).sum() / 48.0
        z = (w_plus - n * (n + 1) / 4.0) / math.sqrt(var) if var > 0 else 0.0
        p = float(2.0 * _sps.norm.sf(abs(z)))
        method = "wilcoxon_normal"
    return TestResult(stat, _clip_p(p), method=method,
                      extra={"w_plus": w_plus, "w_minus": w_minus, "n_nonzero": n})


# ------------------------------------------------------------------- bootstrap


def _is_mean(statistic) -> bool:
    return statistic is None or statistic == "mean" or statistic in (np.mean, np.average)


def bootstrap_distribution(data, statistic=None, resamples: int = 5000, seed: int = 0,
                           stream: int = 0) -> np.ndarray:
    x = np.asarray(data, dtype=np.float64)
    if x.size == 0:
        raise ValueError("bootstrap needs nonempty data")
    if _is_mean(statistic):
        return np.asarray(kernels.bootstrap_means(x, seed, stream, resamples))
    idx = kernels.resample_indices(seed, stream, x.size, resamples)
    return np.array([statistic(x[row]) for row in idx], dtype=np.float64)


def bootstrap_ci(data, statistic: Callable | str | None = None, resamples: int = 5000,
                 level: float = 0.95, seed: int = 0, stream: int = 0) -> IntervalEstimate:
    """Percentile bootstrap interval; bit-reproducible for a given seed."""
    if resamples < 1000:
        raise ValueError("use at least 1000 resamples")
    x = np.asarray(data, dtype=np.float64)
    if x.size == 0:
        raise ValueError("bootstrap needs nonempty data")
    point = float(np.mean(x)) if _is_mean(statistic) else float(statistic(x))
    dist = bootstrap_distribution(x, statistic, resamples, seed, stream)
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(dist, [tail, 1.0 - tail])
    return IntervalEstimate(point, float(lo), float(hi), level, "bootstrap_percentile")


# -------------------------------------------------------------------- Bayesian


def normal_update(prior_mean: float, prior_var: float, data, known_var: float) -> tuple[float, float]:
    """Conjugate normal update with known likelihood variance; returns (mean, var)."""
    x = np.asarray(data, dtype=np.float64)
    if x.size == 0:
        return prior_mean, prior_var
    precision = 1.0 / prior_var + x.size / known_var
    mean = (prior_mean / prior_var + x.sum() / known_var) / precision
    return float(mean), float(1.0 / precision)


def bayesian_group_compare(groups: Mapping[str, Sequence[float]], prior_mean: float = 0.5,
                           prior_sd: float = 0.3, seed: int | None = None) -> dict[str, PosteriorSummary]:
    """Normal-normal posterior for each group mean.

    The likelihood variance is each group's sample variance, taken as known.
    ``seed`` is accepted for interface symmetry; everything here is analytic.
    """
    del seed
    post = {}
    for name, values in groups.items():
        x = np.asarray(values, dtype=np.float64)
        if x.size < 2:
            raise ValueError(f"group {name!r} needs at least 2 values for a sample variance")
        var = float(np.var(x, ddof=1))
        if var == 0.0:
            # degenerate: a constant group pins the mean exactly
            var = 1e-12
        post[name] = normal_update(prior_mean, prior_sd**2, x, var)
    z = float(_sps.norm.ppf(0.975))
    out = {}
    for name, (mu, v) in post.items():
        sd = math.sqrt(v)
        greater = {}
        for other, (mu2, v2) in post.items():
            if other == name:
                continue
            greater[other] = float(_sps.norm.cdf((mu - mu2) / math.sqrt(v + v2)))
        ci = IntervalEstimate(mu, mu - z * sd, mu + z * sd, 0.95, "posterior")
        out[name] = PosteriorSummary(name, mu, sd, ci, greater)
    return out


# ----------------------------------------------------------------------- power


def chisq_power(w: float, n_total: int, df: int = 3, alpha: float = 0.05) -> float:
    crit = _sps.chi2.isf(alpha, df)
    lam = n_total * w * w
    if lam == 0:
        return float(_sps.chi2.sf(crit, df))
    return float(_sps.ncx2.sf(crit, df, lam))


def chisq_power_mde(alpha: float = 0.05, df: int = 3, n_total: int = 120,
                    target_power: float = 0.80, tol: float = 1e-4) -> float:
    """Smallest effect size w reaching ``target_power`` (bisection)."""
    if n_total < 2:
        raise ValueError("n_total must be >= 2")
    if chisq_power(0.0, n_total, df, alpha) >= target_power:
        return 0.0
    w_max = math.sqrt(df)  # largest w attainable with df + 1 categories
    if chisq_power(w_max, n_total, df, alpha) < target_power:
        raise ValueError(f"power {target_power} unattainable with n_total={n_total}")
    lo, hi = 0.0, w_max
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if chisq_power(mid, n_total, df, alpha) >= target_power:
            hi = mid
        else:
            lo = mid
    return hi
