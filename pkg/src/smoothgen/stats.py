"""Rank correlation and least-squares primitives.

Kendall's tau is computed with Knight's O(n log n) merge-sort algorithm in
exact integer arithmetic; the tie-corrected tau-b is the default, with tau-a
available for sensitivity checks. The linear model is the closed-form
one-variable ordinary least squares fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import DegenerateSampleError


def _validate_pair(xs: Sequence[float], ys: Sequence[float], min_len: int = 2):
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < min_len:
        raise ValueError(f"need at least {min_len} points, got {len(xs)}")
    for v in xs:
        if not math.isfinite(v):
            raise ValueError("non-finite value in xs")
    for v in ys:
        if not math.isfinite(v):
            raise ValueError("non-finite value in ys")


def _merge_count(ys: list, lo: int, hi: int, buf: list) -> int:
    """Count strict inversions (ys[i] > ys[j], i < j) while sorting in place."""
    if hi - lo < 2:
        return 0
    mid = (lo + hi) // 2
    inv = _merge_count(ys, lo, mid, buf) + _merge_count(ys, mid, hi, buf)
    i, j, k = lo, mid, lo
    while i < mid and j < hi:
        if ys[j] < ys[i]:
            inv += mid - i
            buf[k] = ys[j]
            j += 1
        else:
            buf[k] = ys[i]
            i += 1
        k += 1
    buf[k:hi] = ys[i:mid] if i < mid else ys[j:hi]
    ys[lo:hi] = buf[lo:hi]
    return inv


def _tie_term(values: Sequence) -> int:
    """Sum of t*(t-1)/2 over groups of equal consecutive values (input sorted)."""
    total = 0
    run = 1
    for a, b in zip(values, values[1:]):
        if a == b:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    total += run * (run - 1) // 2
    return total


def kendall_tau(xs: Sequence[float], ys: Sequence[float], variant: str = "b") -> float:
    """Kendall rank correlation; variant 'b' is tie-corrected, 'a' is not."""
    if variant not in ("a", "b"):
        raise ValueError(f"variant must be 'a' or 'b', got {variant!r}")
    _validate_pair(xs, ys)
    n = len(xs)
    pairs = sorted(zip(xs, ys))
    n0 = n * (n - 1) // 2
    sorted_x = [p[0] for p in pairs]
    n1 = _tie_term(sorted_x)
    n3 = _tie_term(pairs)
    y_seq = [p[1] for p in pairs]
    discordant = _merge_count(y_seq, 0, n, [None] * n)
    n2 = _tie_term(y_seq)  # y_seq is sorted after the merge pass
    c_minus_d = n0 - n1 - n2 + n3 - 2 * discordant
    if variant == "a":
        return c_minus_d / n0
    if n0 == n1 or n0 == n2:
        raise DegenerateSampleError(
            "tau-b undefined: all values tied in one variable"
        )
    return c_minus_d / math.sqrt((n0 - n1) * (n0 - n2))


@dataclass(frozen=True)
class LinearFit:
    a: float
    b: float

    def predict(self, x: float) -> float:
        return self.a * x + self.b


def ols_fit(xs: Sequence[float], ys: Sequence[float]) -> LinearFit:
    """Least-squares line through (xs, ys) via the normal equations."""
    _validate_pair(xs, ys)
    n = len(xs)
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    if sxx == 0.0:
        raise DegenerateSampleError("singular design: all x values identical")
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    a = sxy / sxx
    return LinearFit(a=a, b=my - a * mx)


def r_squared(predicted: Sequence[float], actual: Sequence[float]) -> float:
    """Coefficient of determination; may be negative for bad predictors."""
    _validate_pair(predicted, actual)
    n = len(actual)
    mean = math.fsum(actual) / n
    ss_tot = math.fsum((y - mean) ** 2 for y in actual)
    if ss_tot == 0.0:
        raise DegenerateSampleError("R^2 undefined: actual values have zero variance")
    ss_res = math.fsum((p - y) ** 2 for p, y in zip(predicted, actual))
    return 1.0 - ss_res / ss_tot


def mae(predicted: Sequence[float], actual: Sequence[float]) -> float:
    """Mean absolute error."""
    _validate_pair(predicted, actual, min_len=1)
    return math.fsum(abs(p - y) for p, y in zip(predicted, actual)) / len(actual)
