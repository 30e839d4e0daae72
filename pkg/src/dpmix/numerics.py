"""Log-space special functions and the combinatorial summation engines.

Everything downstream (prior weight integrals, partition posteriors, bound
checks) is built on the functions in this module.  All probability-like
quantities are kept in the log domain; ``-inf`` encodes an exact zero and is
propagated, never replaced by a tiny float.

Conventions
-----------
* A *log weight vector* is a 1-d float array ``w`` of length >= n whose entry
  ``w[a-1]`` is ``log(weight of a block of size a)``.  Entries may be ``-inf``
  but never NaN.
* Set partitions of ``{0, ..., n-1}`` are tuples of tuples; each block is
  sorted and blocks are ordered by their smallest element (canonical form).
* Compositions of n into s parts are tuples of s positive ints summing to n.
"""

import math
from itertools import combinations

import numpy as np
from scipy.special import gammainc, gammaln
from scipy.special import gamma as _gamma_fn

from .errors import ResourceLimitError

# Direct product is cheaper and exactly telescoping below this length.
_DIRECT_PRODUCT_MAX_N = 32

# Bell(13) ~ 2.8e7 partitions is the last desk-scale size.
SET_PARTITION_MAX_N = 13

__all__ = [
    "log_ascending_factorial",
    "lower_incomplete_gamma",
    "log_lower_incomplete_gamma",
    "log_sum_exp",
    "log_binomial",
    "enumerate_compositions",
    "composition_count",
    "enumerate_set_partitions",
    "bell_number",
    "partial_bell_log_sum",
    "partial_bell_log_column",
    "OnlineLogSumExp",
    "SET_PARTITION_MAX_N",
]


def log_ascending_factorial(alpha, n):
    """log of alpha^(n) = alpha (alpha+1) ... (alpha+n-1).

    ``alpha`` may be a positive scalar or array; ``n`` is a nonnegative int.
    Small ``n`` uses the direct product of logs, large ``n`` the log-gamma
    difference ``gammaln(alpha+n) - gammaln(alpha)``.
    """
    if n < 0 or n != int(n):
        raise ValueError(f"n must be a nonnegative integer, got {n!r}")
    alpha = np.asarray(alpha, dtype=float)
    if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0.0):
        raise ValueError("alpha must be finite and > 0")
    if n == 0:
        out = np.zeros_like(alpha)
    elif n <= _DIRECT_PRODUCT_MAX_N:
        out = np.log(alpha[..., None] + np.arange(n)).sum(axis=-1)
    else:
        out = gammaln(alpha + n) - gammaln(alpha)
    return float(out) if out.ndim == 0 else out


def lower_incomplete_gamma(x, y):
    """Unregularized lower incomplete gamma gamma(x, y) = int_0^y t^(x-1) e^-t dt."""
    if not (np.all(np.isfinite(x)) and np.all(x > 0)):
        raise ValueError("x must be finite and > 0")
    if np.any(np.asarray(y) < 0):
        raise ValueError("y must be >= 0")
    return gammainc(x, y) * _gamma_fn(x)


def log_lower_incomplete_gamma(x, y):
    """log gamma(x, y); stays finite where the linear-domain value overflows."""
    if not (np.all(np.isfinite(x)) and np.all(x > 0)):
        raise ValueError("x must be finite and > 0")
    if np.any(np.asarray(y) < 0):
        raise ValueError("y must be >= 0")
    reg = gammainc(x, y)
    with np.errstate(divide="ignore"):
        return np.log(reg) + gammaln(x)


def log_sum_exp(xs):
    """log sum exp of a nonempty sequence of log-domain reals.

    Exact for a single entry, ``-inf`` when every entry is ``-inf``.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise ValueError("log_sum_exp of an empty sequence")
    if np.any(np.isnan(xs)):
        raise ValueError("log_sum_exp input contains NaN")
    m = np.max(xs)
    if not np.isfinite(m):
        return float(m)  # all -inf, or +inf dominates
    return float(m + np.log(np.sum(np.exp(xs - m))))


class OnlineLogSumExp:
    """Streaming log-sum-exp accumulator (running max with rescaling)."""

    def __init__(self):
        self._max = -math.inf
        self._acc = 0.0

    def add(self, x):
        if x == -math.inf:
            return
        if x <= self._max:
            self._acc += math.exp(x - self._max)
        else:
            self._acc = self._acc * math.exp(self._max - x) + 1.0
            self._max = x

    def value(self):
        if self._max == -math.inf:
            return -math.inf
        return self._max + math.log(self._acc)


def log_binomial(n, k):
    """log C(n, k) via log-gamma; -inf outside 0 <= k <= n."""
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    out = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    bad = (k < 0) | (k > n)
    if np.any(bad):
        out = np.where(bad, -np.inf, out)
    return float(out) if out.ndim == 0 else out


def composition_count(n, s):
    """Number of ordered compositions of n into s positive parts: C(n-1, s-1)."""
    return math.comb(n - 1, s - 1)


def enumerate_compositions(n, s):
    """Every ordered composition of n into s positive parts, exactly once.

    Returns an iterator; compositions are emitted in lexicographic order of
    their cut points.  Preconditions are checked eagerly.
    """
    if n < 1 or s < 1:
        raise ValueError("n and s must be positive")
    if s > n:
        raise ValueError(f"cannot split n={n} into s={s} positive parts")

    def gen():
        if s == 1:
            yield (n,)
            return
        for cuts in combinations(range(1, n), s - 1):
            prev = 0
            parts = []
            for c in cuts:
                parts.append(c - prev)
                prev = c
            parts.append(n - prev)
            yield tuple(parts)

    return gen()


def enumerate_set_partitions(n, s=None):
    """Every set partition of {0, ..., n-1} in canonical form, exactly once.

    Canonical form: each block sorted ascending, blocks ordered by smallest
    element.  With ``s`` given, only partitions into exactly ``s`` blocks are
    produced (count = Stirling2(n, s)); otherwise all Bell(n) partitions.

    Returns an iterator; preconditions (including the hard size cap) are
    checked eagerly.  This enumerator is the brute-force oracle and is only
    meant for desk-scale checks.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if n > SET_PARTITION_MAX_N:
        raise ResourceLimitError(
            f"set-partition enumeration capped at n={SET_PARTITION_MAX_N} "
            f"(Bell({SET_PARTITION_MAX_N}) ~ 2.8e7); got n={n}"
        )
    if s is not None and not (1 <= s <= n):
        raise ValueError(f"block count s={s} out of range for n={n}")

    blocks = [[0]]

    def rec(e):
        if e == n:
            if s is None or len(blocks) == s:
                yield tuple(tuple(b) for b in blocks)
            return
        remaining = n - e
        for b in blocks:
            # pruning: adding to an existing block cannot raise the count
            if s is None or len(blocks) + remaining - 1 >= s:
                b.append(e)
                yield from rec(e + 1)
                b.pop()
        if s is None or len(blocks) < s:
            blocks.append([e])
            yield from rec(e + 1)
            blocks.pop()

    return rec(1)


def bell_number(n):
    """Bell(n) by the triangle recurrence (exact ints)."""
    row = [1]
    for _ in range(n):
        new = [row[-1]]
        for v in row:
            new.append(new[-1] + v)
        row = new
    return row[0]


def _validate_log_weights(log_w, n):
    log_w = np.asarray(log_w, dtype=float)
    if log_w.ndim != 1 or log_w.shape[0] < n:
        raise ValueError(f"need log weights for block sizes 1..{n}")
    if np.any(np.isnan(log_w[:n])):
        raise ValueError("log weight vector contains NaN")
    return log_w


def partial_bell_log_column(log_w, n, s_max):
    """log of B_{n,s} = sum over partitions of {1..n} into s blocks of the
    product of per-block-size weights, for every s = 1..s_max.

    Returns an array ``col`` with ``col[s-1] = log B_{n,s}``.

    The computation runs on the factorially normalized triangle
    ``b_{i,k} = B_{i,k} / i!`` which satisfies the convolution recurrence

        b_{i,k} = (1/i) * sum_j u_j b_{i-j,k-1},    u_j = w_j / (j-1)!

    all of whose terms are nonnegative, so the log-domain evaluation is free
    of cancellation.  Cost O(n^2 * s_max) log-adds, O(n) memory per column.
    """
    if not (1 <= s_max <= n):
        raise ValueError(f"need 1 <= s_max <= n, got s_max={s_max}, n={n}")
    log_w = _validate_log_weights(log_w, n)

    sizes = np.arange(1, n + 1)
    log_u = log_w[:n] - gammaln(sizes)  # log u_j, j = 1..n
    log_i = np.log(np.arange(1, n + 1))

    # column for k = 1: b_{i,1} = u_i / i
    col = np.full(n + 1, -np.inf)
    col[1:] = log_u - log_i

    out = np.empty(s_max)
    out[0] = col[n] + gammaln(n + 1)

    chunk = max(1, int(2**22 // max(n, 1)))  # ~32 MB working set
    buf = np.empty((chunk, n))
    for k in range(2, s_max + 1):
        # P[m] = col[n - m] padded right with -inf, so the contiguous window
        # P[n-i+1 : 2n-i+1] is exactly (col[i-1], col[i-2], ..., col[i-n]).
        p = np.concatenate([col[::-1], np.full(n - 1, -np.inf)])
        windows = np.lib.stride_tricks.sliding_window_view(p, n)
        new = np.full(n + 1, -np.inf)
        for lo in range(k, n + 1, chunk):
            hi = min(lo + chunk, n + 1)
            rows = windows[n - hi + 2 : n - lo + 2][::-1]  # i = lo..hi-1
            m = np.add(rows, log_u, out=buf[: hi - lo])
            mx = np.max(m, axis=1)
            finite = np.isfinite(mx)
            if np.any(finite):
                with np.errstate(invalid="ignore", over="ignore"):
                    np.subtract(m, mx[:, None], out=m)
                    np.exp(m, out=m)
                    sums = np.log(np.sum(m, axis=1))
                vals = mx + sums
                new[lo:hi] = np.where(finite, vals - log_i[lo - 1 : hi - 1], -np.inf)
        col = new
        out[k - 1] = col[n] + gammaln(n + 1)
    return out


def partial_bell_log_sum(log_w, n, s):
    """log sum over partitions of {1..n} into exactly s blocks of the product
    of per-block-size weights (partial Bell polynomial in log domain)."""
    if not (1 <= s <= n):
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    return float(partial_bell_log_column(log_w, n, s)[s - 1])
