"""Independent verifiers for every certified quantity.

Each oracle deliberately avoids the code path it checks: the subset
factor is verified by exhaustive enumeration and by Monte Carlo sampling
instead of the product formula, and the Beta quantile is verified by
numeric integration of the density instead of the continued fraction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb, exp, lgamma, log, log1p, sqrt
from typing import AbstractSet, Callable, Optional

import numpy as np

from .certification import beta_factor, estimate_bounds
from .code_model import KIND_IDENTIFIER, CodeSnippet
from .errors import NumericsError
from .perturbation import SmoothingConfig, retained_count, round_half_up


@dataclass(frozen=True)
class OracleReport:
    """Comparison of an analytic value against an independent oracle."""

    quantity: str
    analytic_value: float
    oracle_value: float
    trials_or_enumerated: int
    abs_error: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "abs_error", abs(self.analytic_value - self.oracle_value)
        )


def mc_beta_estimate(h: int, k: int, r: int, trials: int, seed: int) -> float:
    """Monte Carlo estimate of the k-subset intersection probability.

    Draws uniform k-subsets of {0, ..., h - 1} and counts how often they
    intersect {0, ..., r - 1}.
    """
    if not 0 <= k <= h:
        raise ValueError(f"k must satisfy 0 <= k <= h, got k={k}, h={h}")
    if not 0 <= r <= h:
        raise ValueError(f"r must satisfy 0 <= r <= h, got r={r}, h={h}")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if r == 0 or k == 0:
        return 0.0
    if k == h:
        return 1.0
    rng = np.random.default_rng(seed)
    hits = 0
    remaining = trials
    chunk_rows = max(1, 2_000_000 // h)
    while remaining:
        rows = min(chunk_rows, remaining)
        uniforms = rng.random((rows, h))
        subsets = np.argpartition(uniforms, k, axis=1)[:, :k]
        hits += int((subsets < r).any(axis=1).sum())
        remaining -= rows
    return hits / trials


def enumerate_beta(h: int, k: int, r: int) -> float:
    """Exact intersection probability by full enumeration of C(h, k)
    subsets, using rational arithmetic."""
    if not 0 <= k <= h:
        raise ValueError(f"k must satisfy 0 <= k <= h, got k={k}, h={h}")
    if not 0 <= r <= h:
        raise ValueError(f"r must satisfy 0 <= r <= h, got r={r}, h={h}")
    if h > 20:
        raise ValueError("enumeration is limited to h <= 20")
    total = comb(h, k)
    hits = sum(
        1 for subset in itertools.combinations(range(h), k) if any(i < r for i in subset)
    )
    return float(Fraction(hits, total))


def _hit_probability(h: int, k: int, member_mask: int, always_hit: bool) -> Fraction:
    """Exact probability that a uniform retained k-subset sees a watched
    name, by enumeration over all C(h, k) subsets."""
    if always_hit:
        return Fraction(1)
    hits = 0
    for subset in itertools.combinations(range(h), k):
        if any(member_mask >> i & 1 for i in subset):
            hits += 1
    return Fraction(hits, comb(h, k))


def exact_smoothed_score(
    snippet: CodeSnippet,
    label: int,
    k: int,
    watch: AbstractSet[str],
    hit_label: int = 1,
    miss_label: int = 0,
) -> float:
    """Exact smoothed vote share of a label for the identifier-presence
    toy classifier under mask mode.

    The toy depends only on whether a retained name is watched, so the
    score is exact by enumerating all C(h, k) retained subsets. Watched
    names should not look like positional mask tokens; masked entries are
    assumed never to hit the watch set. Identifier tokens outside the
    table are never masked, so any watched one makes the score constant.
    """
    table = snippet.identifiers
    h = len(table)
    if h > 20:
        raise ValueError("exact enumeration is limited to h <= 20 identifiers")
    if not 0 <= k <= h:
        raise ValueError(f"k must satisfy 0 <= k <= h, got k={k}, h={h}")
    table_names = set(table.names())
    outside = {
        t.text
        for t in snippet.tokens
        if t.kind == KIND_IDENTIFIER and t.text not in table_names
    }
    always_hit = bool(outside & set(watch))
    member_mask = 0
    for i, entry in enumerate(table.entries):
        if entry.name in watch:
            member_mask |= 1 << i
    p_hit = _hit_probability(h, k, member_mask, always_hit)
    if label == hit_label:
        return float(p_hit if hit_label != miss_label else 1)
    if label == miss_label:
        return float(1 - p_hit)
    return 0.0


def _exact_argmax(p_hit: Fraction, hit_label: int, miss_label: int) -> int:
    """Label with the larger exact score; ties go to the smaller label."""
    if hit_label == miss_label:
        return hit_label
    p_miss = 1 - p_hit
    if p_hit > p_miss:
        return hit_label
    if p_miss > p_hit:
        return miss_label
    return min(hit_label, miss_label)


def _soundness_sweep_detailed(
    snippet: CodeSnippet,
    config: SmoothingConfig,
    watch: AbstractSet[str],
    alpha: Optional[float] = None,
    hit_label: int = 1,
    miss_label: int = 0,
    beta_fn: Callable[[int, int, int], float] = beta_factor,
) -> tuple[int, int, int]:
    """Run the sweep; returns (violations, adversaries enumerated, radius)."""
    if hit_label == miss_label:
        raise ValueError("hit_label and miss_label must differ")
    table = snippet.identifiers
    h = len(table)
    if h > 12:
        raise ValueError("soundness sweep enumeration is limited to h <= 12")
    if h == 0:
        return 0, 0, 0
    alpha = config.alpha if alpha is None else alpha
    k = retained_count(h, config.perturb_fraction)
    n = config.n_samples
    table_names = set(table.names())
    outside = {
        t.text
        for t in snippet.tokens
        if t.kind == KIND_IDENTIFIER and t.text not in table_names
    }
    if outside & set(watch):
        raise ValueError("watch must not contain identifiers outside the table")

    @lru_cache(maxsize=None)
    def hit_prob(mask: int) -> Fraction:
        return _hit_probability(h, k, mask, False)

    mask0 = 0
    for i, entry in enumerate(table.entries):
        if entry.name in watch:
            mask0 |= 1 << i

    p0 = hit_prob(mask0)
    predicted = _exact_argmax(p0, hit_label, miss_label)
    p_pred = p0 if predicted == hit_label else 1 - p0
    n_c = min(n, max(0, round_half_up(float(p_pred) * n)))
    if n_c < 1:
        return 0, 0, 0
    bounds = estimate_bounds(n_c, n, alpha)
    if not bounds.lower - beta_fn(h, k, 0) * bounds.upper > 0.5:
        return 0, 0, 0
    radius = 0
    for r in range(1, h + 1):
        if bounds.lower - beta_fn(h, k, r) * bounds.upper > 0.5:
            radius = r
        else:
            break

    violations = 0
    enumerated = 0
    for d in range(1, radius + 1):
        for flips in itertools.combinations(range(h), d):
            mask = mask0
            for i in flips:
                mask ^= 1 << i
            enumerated += 1
            p_adv = hit_prob(mask)
            if _exact_argmax(p_adv, hit_label, miss_label) != predicted:
                violations += 1
    return violations, enumerated, radius


def soundness_sweep(
    snippet: CodeSnippet,
    config: SmoothingConfig,
    watch: AbstractSet[str],
    alpha: Optional[float] = None,
    hit_label: int = 1,
    miss_label: int = 0,
    beta_fn: Callable[[int, int, int], float] = beta_factor,
) -> int:
    """Exhaustively test a certificate for the identifier-presence toy.

    The certificate is computed from exact vote shares scaled to the
    sample count, then every adversary flipping the watch membership of
    at most radius identifiers (in either direction) is enumerated and
    the exact smoothed argmax is required to stay unchanged. Returns the
    number of violations; beta_fn exists so tests can corrupt the factor
    and prove the sweep would catch an unsound certificate.
    """
    violations, _, _ = _soundness_sweep_detailed(
        snippet, config, watch, alpha, hit_label, miss_label, beta_fn
    )
    return violations


def _adaptive_simpson(
    f: Callable[[float], float], a: float, b: float, tol: float, max_depth: int = 60
) -> float:
    """Adaptive Simpson integration with Richardson acceptance."""

    def simpson(lo: float, hi: float, flo: float, fmid: float, fhi: float) -> float:
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(
        lo: float,
        hi: float,
        flo: float,
        fmid: float,
        fhi: float,
        whole: float,
        eps: float,
        depth: int,
    ) -> float:
        mid = 0.5 * (lo + hi)
        lmid = 0.5 * (lo + mid)
        rmid = 0.5 * (mid + hi)
        flmid = f(lmid)
        frmid = f(rmid)
        left = simpson(lo, mid, flo, flmid, fmid)
        right = simpson(mid, hi, fmid, frmid, fhi)
        if depth >= max_depth:
            raise NumericsError("adaptive integration exceeded maximum depth")
        if abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return recurse(lo, mid, flo, flmid, fmid, left, eps / 2.0, depth + 1) + recurse(
            mid, hi, fmid, frmid, fhi, right, eps / 2.0, depth + 1
        )

    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = simpson(a, b, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, tol, 0)


def beta_quantile_oracle(p: float, a: float, b: float) -> float:
    """Quantile via numeric integration of the Beta density plus bisection.

    Independent of the continued-fraction path; requires a >= 1 and
    b >= 1 so the density is bounded. The integration domain is split at
    mean +/- c * sd landmarks so a spike narrow relative to [0, x] is
    never missed by the initial Simpson samples.
    """
    if not 0.0 < p < 1.0:
        raise NumericsError(f"p must lie in (0, 1), got {p}")
    if a < 1.0 or b < 1.0:
        raise NumericsError("integration oracle requires a >= 1 and b >= 1")
    ln_norm = lgamma(a + b) - lgamma(a) - lgamma(b)
    mean = a / (a + b)
    sd = sqrt(a * b / ((a + b) ** 2 * (a + b + 1.0)))

    def density(x: float) -> float:
        if x <= 0.0:
            return exp(ln_norm) if a == 1.0 else 0.0
        if x >= 1.0:
            return exp(ln_norm) if b == 1.0 else 0.0
        return exp(ln_norm + (a - 1.0) * log(x) + (b - 1.0) * log1p(-x))

    def cdf(x: float) -> float:
        if x <= 0.0:
            return 0.0
        if x >= 1.0:
            return 1.0
        points = [0.0]
        for c in (-8.0, -4.0, -2.0, 0.0, 2.0, 4.0, 8.0):
            t = mean + c * sd
            if points[-1] < t < x:
                points.append(t)
        points.append(x)
        tol = 1e-12 / (len(points) - 1)
        return sum(
            _adaptive_simpson(density, lo, hi, tol)
            for lo, hi in zip(points, points[1:])
        )

    lo, hi = 0.0, 1.0
    while hi - lo > 1e-11:
        mid = 0.5 * (lo + hi)
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def coverage_experiment(
    p_true: float, n: int, alpha: float, trials: int, seed: int
) -> float:
    """Fraction of simulated binomial draws whose bound interval covers
    the true success probability.

    A draw of zero successes falls back to the trivial interval [0, 1];
    with the probabilities used in practice that case never occurs.
    """
    if not 0.0 < p_true < 1.0:
        raise ValueError("p_true must lie in (0, 1)")
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be at least 1")
    rng = np.random.default_rng(seed)
    draws = rng.binomial(n, p_true, size=trials)
    values, counts = np.unique(draws, return_counts=True)
    covered = 0
    for value, count in zip(values, counts):
        if value == 0:
            lower, upper = 0.0, 1.0
        else:
            bounds = estimate_bounds(int(value), n, alpha)
            lower, upper = bounds.lower, bounds.upper
        if lower <= p_true <= upper:
            covered += int(count)
    return covered / trials


def make_report(
    quantity: str, analytic: float, oracle: float, trials_or_enumerated: int
) -> OracleReport:
    """Convenience constructor filling in the absolute error."""
    return OracleReport(quantity, analytic, oracle, trials_or_enumerated)
