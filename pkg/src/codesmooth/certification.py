"""Vote aggregation, confidence bounds, and the certified L0 radius.

The certified radius is the largest number of identifier renames that
provably cannot flip the smoothed prediction. It combines a Beta-quantile
confidence interval on the top-label vote share with a combinatorial
factor: the probability that a uniformly retained k-subset of h
identifiers intersects a fixed set of r changed ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import exp, lgamma, log, log1p
from typing import Mapping, Optional, Sequence

from .adapters import ClassifierAdapter, ClassifyItem, ClassifyResult, classify_batch
from .code_model import CodeSnippet, snippet_from_source
from .errors import NumericsError
from .perturbation import (
    SmoothingConfig,
    generate_batch,
    generate_smoothed_sample,
    retained_count,
)

CERTIFICATE_FIELDS = (
    "id",
    "predicted",
    "truth",
    "abstained",
    "radius",
    "h",
    "k",
    "n_c",
    "n",
    "lower",
    "upper",
    "uncertified",
)


@dataclass(frozen=True)
class VoteTally:
    """Per-label vote counts over one batch of classifier calls."""

    counts: Mapping[int, int]
    total: int
    top_label: int
    top_count: int


@dataclass(frozen=True)
class ConfidenceBounds:
    """Two one-sided Beta-quantile bounds on the top-label vote share."""

    lower: float
    upper: float
    alpha: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.lower <= self.upper <= 1.0:
            raise ValueError("bounds must satisfy 0 <= lower <= upper <= 1")


@dataclass(frozen=True)
class Certificate:
    """Certification outcome for one snippet.

    abstained means the smoothed prediction disagreed with the ground
    truth; the radius is then reported as -1 in serialized form.
    uncertified_flag marks predictions that matched the ground truth but
    failed the radius condition already at r = 0, which is weaker than a
    certified radius of 0.
    """

    predicted_label: int
    ground_truth_label: int
    abstained: bool
    radius: int
    h: int
    k: int
    n_c: int
    n: int
    bounds: ConfidenceBounds
    beta_at_radius: float
    uncertified_flag: bool


def tally_votes(labels: Sequence[int]) -> VoteTally:
    """Count votes; ties go to the smallest label id."""
    if not labels:
        raise ValueError("cannot tally an empty label list")
    counts: dict[int, int] = {}
    for label in labels:
        counts[label] = counts.get(label, 0) + 1
    top_count = max(counts.values())
    top_label = min(label for label, c in counts.items() if c == top_count)
    return VoteTally(dict(counts), len(labels), top_label, top_count)


def _beta_contfrac(x: float, a: float, b: float) -> float:
    """Continued fraction for the incomplete beta, evaluated by the
    modified Lentz method."""
    tiny = 1e-300
    eps = 1e-15
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 500):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise NumericsError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """I_x(a, b) to absolute error at most 1e-12.

    Uses the continued fraction with the standard symmetry split at
    x = (a + 1) / (a + b + 2).
    """
    if a <= 0.0 or b <= 0.0:
        raise NumericsError(f"shape parameters must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise NumericsError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = lgamma(a + b) - lgamma(a) - lgamma(b) + a * log(x) + b * log1p(-x)
    front = exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_contfrac(x, a, b) / a
    return 1.0 - front * _beta_contfrac(1.0 - x, b, a) / b


def beta_quantile(p: float, a: float, b: float) -> float:
    """x in [0, 1] with |I_x(a, b) - p| <= 1e-12.

    Bracketed bisection refined with Newton steps; the bracket keeps the
    iteration safe where the CDF is nearly flat or nearly vertical.
    """
    if not 0.0 < p < 1.0:
        raise NumericsError(f"p must lie in (0, 1), got {p}")
    if a <= 0.0 or b <= 0.0:
        raise NumericsError(f"shape parameters must be positive, got a={a}, b={b}")
    ln_norm = lgamma(a + b) - lgamma(a) - lgamma(b)
    lo, hi = 0.0, 1.0
    x = a / (a + b)
    for _ in range(300):
        f = regularized_incomplete_beta(x, a, b) - p
        if abs(f) <= 1e-13:
            return x
        if f > 0.0:
            hi = x
        else:
            lo = x
        if hi - lo <= 1e-16:
            break
        pdf = 0.0
        if 0.0 < x < 1.0:
            pdf = exp(ln_norm + (a - 1.0) * log(x) + (b - 1.0) * log1p(-x))
        if pdf > 0.0:
            candidate = x - f / pdf
            if not lo < candidate < hi:
                candidate = 0.5 * (lo + hi)
        else:
            candidate = 0.5 * (lo + hi)
        x = candidate
    f = regularized_incomplete_beta(x, a, b) - p
    if abs(f) <= 1e-12:
        return x
    raise NumericsError("beta quantile iteration failed to reach tolerance")


def estimate_bounds(n_c: int, n: int, alpha: float) -> ConfidenceBounds:
    """Beta-quantile bounds on the vote share from n_c successes out of n."""
    if n_c < 1 or n_c > n:
        raise ValueError(f"n_c must satisfy 1 <= n_c <= n, got n_c={n_c}, n={n}")
    lower = beta_quantile(alpha, n_c, n - n_c + 1)
    upper = beta_quantile(1.0 - alpha, n_c, n - n_c + 1)
    return ConfidenceBounds(lower, upper, alpha)


def beta_factor(h: int, k: int, r: int) -> float:
    """Probability that a uniform k-subset of h intersects a fixed r-set.

    Equals 1 - C(h - r, k) / C(h, k), computed as a running product of
    ratios so large h never overflows.
    """
    if not 0 <= k <= h:
        raise ValueError(f"k must satisfy 0 <= k <= h, got k={k}, h={h}")
    if not 0 <= r <= h:
        raise ValueError(f"r must satisfy 0 <= r <= h, got r={r}, h={h}")
    if k == 0 or r == 0:
        return 0.0
    if r > h - k:
        return 1.0
    product = 1.0
    for i in range(k):
        product *= (h - r - i) / (h - i)
    return 1.0 - product


def _scan_radius(bounds: ConfidenceBounds, h: int, k: int) -> tuple[int, float, bool]:
    """Largest r with lower - beta_factor(h, k, r) * upper > 0.5.

    Returns (radius, beta at radius, certified flag); the scan is exact
    because the factor is nondecreasing in r.
    """
    if not bounds.lower - beta_factor(h, k, 0) * bounds.upper > 0.5:
        return 0, beta_factor(h, k, 0), False
    radius = 0
    for r in range(1, h + 1):
        if bounds.lower - beta_factor(h, k, r) * bounds.upper > 0.5:
            radius = r
        else:
            break
    return radius, beta_factor(h, k, radius), True


def certified_radius(
    tally: VoteTally, ground_truth: int, h: int, k: int, alpha: float
) -> Certificate:
    """Certificate from one tally: abstain, or the largest safe radius.

    If the top label disagrees with the ground truth the result abstains.
    Otherwise the radius is the largest r in [0, h] satisfying
    lower - beta_factor(h, k, r) * upper > 0.5; failing already at r = 0
    yields radius 0 with uncertified_flag set.
    """
    if tally.total < 1:
        raise ValueError("tally must cover at least one vote")
    n_c = tally.top_count
    n = tally.total
    bounds = estimate_bounds(n_c, n, alpha)
    predicted = tally.top_label
    if predicted != ground_truth:
        return Certificate(
            predicted, ground_truth, True, 0, h, k, n_c, n, bounds, 0.0, False
        )
    radius, beta_at, certified = _scan_radius(bounds, h, k)
    return Certificate(
        predicted, ground_truth, False, radius, h, k, n_c, n, bounds, beta_at, not certified
    )


class SmoothedClassifier:
    """Adapter-shaped wrapper exposing the smoothed model as a classifier.

    Each item is answered by generating the configured sample batch for
    that snippet, querying the base adapter, and majority voting.
    """

    kind = "smoothed"

    def __init__(self, base: ClassifierAdapter, config: SmoothingConfig):
        self.base = base
        self.config = config
        self.spec = f"smoothed({getattr(base, 'spec', '')})"
        self.label_space = getattr(base, "label_space", None)
        self.batch_limit = 32

    def _classify_chunks(self, chunks):
        return [self._classify_chunk(chunk) for chunk in chunks]

    def _classify_chunk(self, items: Sequence[ClassifyItem]) -> list[ClassifyResult]:
        results = []
        for item in items:
            snippet = snippet_from_source(item.code, item.language)
            label, _tally = smoothed_predict(snippet, self.config, self.base)
            results.append(ClassifyResult(item.id, label))
        return results

    def close(self) -> None:
        pass


def smoothed_predict(
    snippet: CodeSnippet, config: SmoothingConfig, adapter: ClassifierAdapter
) -> tuple[int, VoteTally]:
    """Majority vote over the smoothed sample batch."""
    samples = generate_batch(snippet, config)
    items = [
        ClassifyItem(str(s.sample_index), s.snippet.source, snippet.language)
        for s in samples
    ]
    results = classify_batch(adapter, items)
    tally = tally_votes([r.label for r in results])
    return tally.top_label, tally


def _degenerate_bounds(alpha: float) -> ConfidenceBounds:
    return ConfidenceBounds(0.0, 1.0, alpha)


def _certify_with_tally(
    snippet: CodeSnippet,
    ground_truth: int,
    config: SmoothingConfig,
    adapter: ClassifierAdapter,
    allow_unsound_edit_certificates: bool = False,
) -> tuple[Certificate, VoteTally]:
    """Certification pipeline returning the selection tally as well."""
    if config.mode != "mask" and not allow_unsound_edit_certificates:
        raise ValueError(
            "certificates are only sound in mask mode; pass "
            "allow_unsound_edit_certificates=True to override"
        )
    h = snippet.identifier_count
    k = retained_count(h, config.perturb_fraction)
    n = config.n_samples
    if not config.two_batch:
        _, tally = smoothed_predict(snippet, config, adapter)
        return certified_radius(tally, ground_truth, h, k, config.alpha), tally

    samples = [generate_smoothed_sample(snippet, config, i) for i in range(2 * n)]
    items = [
        ClassifyItem(str(s.sample_index), s.snippet.source, snippet.language)
        for s in samples
    ]
    results = classify_batch(adapter, items)
    labels = [r.label for r in results]
    selection = tally_votes(labels[:n])
    estimation = labels[n:]
    predicted = selection.top_label
    n_c = sum(1 for label in estimation if label == predicted)
    if n_c >= 1:
        bounds = estimate_bounds(n_c, n, config.alpha)
    else:
        bounds = _degenerate_bounds(config.alpha)
    if predicted != ground_truth:
        cert = Certificate(
            predicted, ground_truth, True, 0, h, k, n_c, n, bounds, 0.0, False
        )
        return cert, selection
    if n_c < 1:
        cert = Certificate(
            predicted, ground_truth, False, 0, h, k, n_c, n, bounds, 0.0, True
        )
        return cert, selection
    radius, beta_at, certified = _scan_radius(bounds, h, k)
    cert = Certificate(
        predicted, ground_truth, False, radius, h, k, n_c, n, bounds, beta_at, not certified
    )
    return cert, selection


def certify(
    snippet: CodeSnippet,
    ground_truth: int,
    config: SmoothingConfig,
    adapter: ClassifierAdapter,
    allow_unsound_edit_certificates: bool = False,
) -> Certificate:
    """Generate, classify, tally, and certify one snippet."""
    cert, _ = _certify_with_tally(
        snippet, ground_truth, config, adapter, allow_unsound_edit_certificates
    )
    return cert


def certificate_row(record_id: str, cert: Certificate) -> dict:
    """Serializable row for one certificate; abstention encodes radius -1."""
    return {
        "id": record_id,
        "predicted": cert.predicted_label,
        "truth": cert.ground_truth_label,
        "abstained": cert.abstained,
        "radius": -1 if cert.abstained else cert.radius,
        "h": cert.h,
        "k": cert.k,
        "n_c": cert.n_c,
        "n": cert.n,
        "lower": cert.bounds.lower,
        "upper": cert.bounds.upper,
        "uncertified": cert.uncertified_flag,
    }


def row_to_certificate(row: Mapping) -> tuple[str, Certificate]:
    """Rebuild (record id, Certificate) from a serialized row."""
    missing = [f for f in CERTIFICATE_FIELDS if f not in row]
    if missing:
        raise ValueError(f"certificate row is missing fields: {missing}")
    abstained = bool(row["abstained"])
    radius = int(row["radius"])
    cert = Certificate(
        predicted_label=int(row["predicted"]),
        ground_truth_label=int(row["truth"]),
        abstained=abstained,
        radius=0 if abstained else radius,
        h=int(row["h"]),
        k=int(row["k"]),
        n_c=int(row["n_c"]),
        n=int(row["n"]),
        bounds=ConfidenceBounds(float(row["lower"]), float(row["upper"]), float("nan")),
        beta_at_radius=float("nan"),
        uncertified_flag=bool(row["uncertified"]),
    )
    return str(row["id"]), cert


def certificate_line(record_id: str, cert: Certificate) -> str:
    """One JSON line for a certificate row, with a fixed field order."""
    return json.dumps(certificate_row(record_id, cert))
