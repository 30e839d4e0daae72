"""Exact posterior of the number of clusters and the ratio diagnostics.

The joint law of the data and the cluster count factorizes as

    pr(x_{1:n}, K_n = s) = I(n, s) * sum_{A in tau_s(n)} prod_j (a_j - 1)! m(x_{A_j})

with I(n, s) the prior weight integral from :mod:`dpmix.priors`.  Three
computation routes are provided:

* brute force -- full set-partition enumeration, n <= 13;
* size-only  -- when m(x_A) depends on A only through |A| (constant data, or
  any user-supplied per-size weight vector), the partition sum is a partial
  Bell polynomial and costs O(n^2 s_max);
* truncated  -- size-only up to s_max < n with a geometric tail-mass bound,
  with automatic doubling of s_max when the observed decay is too slow to
  certify the bound.

Posterior odds decompose as pr(K=s|x)/pr(K=t|x) = C(n,t,s) * R(n,t,s) where C
is the concentration-prior factor and R the partition/likelihood factor; the
report object carries both factors per s.
"""

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, zeta

from .errors import ResourceLimitError
from .kernels import GaussianConjugate, UniformLocation
from .numerics import (
    OnlineLogSumExp,
    composition_count,
    enumerate_compositions,
    enumerate_set_partitions,
    log_sum_exp,
    partial_bell_log_column,
)
from .priors import truncated_weight_integral, weight_integral

BRUTE_FORCE_MAX_N = 13
SIZE_ONLY_MAX_N = 10**5
SIZE_ONLY_COMFORT_N = 2 * 10**4
DEFAULT_S_MAX = 64

__all__ = [
    "PosteriorKnTable",
    "RatioReport",
    "brute_force_partition_log_terms",
    "partition_size_log_terms",
    "posterior_kn_bruteforce",
    "posterior_kn_sizeonly",
    "ratio_report",
    "posterior_alpha_cdf",
    "mc_expected_r",
    "McIdentityResult",
    "lemma_s6_exhaustive",
    "CompositionBoundReport",
    "fixed_alpha_ratio_lower_bound",
]


@dataclass
class PosteriorKnTable:
    """Normalized posterior of K_n over s = 1..s_max with a tail-mass bound.

    ``log_joint[s-1]`` is log pr(x, K_n = s); ``log_posterior`` is normalized
    so that sum(exp(log_posterior)) + tail_bound == 1, where ``tail_bound``
    (an upper bound on the posterior mass beyond s_max) is 0 for exact
    methods.  ``log_i[s-1]`` stores log I(n, s) for reuse in diagnostics.
    """

    n: int
    log_joint: np.ndarray
    log_posterior: np.ndarray
    tail_log_mass_bound: float
    method: str
    log_i: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def s_values(self):
        return np.arange(1, len(self.log_joint) + 1)

    @property
    def s_max(self):
        return len(self.log_joint)

    def posterior(self, s):
        if not (1 <= s <= self.s_max):
            raise ValueError(f"s={s} outside table range 1..{self.s_max}")
        return float(np.exp(self.log_posterior[s - 1]))

    def log_ratio(self, t, s):
        """log [pr(K=s|x) / pr(K=t|x)] straight from the table."""
        return float(self.log_joint[s - 1] - self.log_joint[t - 1])

    def mode(self):
        return int(np.argmax(self.log_posterior)) + 1

    def to_csv(self, path):
        tail = float(np.exp(self.tail_log_mass_bound))
        with open(path, "w", newline="") as fh:
            fh.write("s,log_joint,posterior,method,tail_bound\n")
            for s, lj, lp in zip(self.s_values, self.log_joint, self.log_posterior):
                fh.write(f"{s},{lj:.17g},{math.exp(lp):.17g},{self.method},{tail:.17g}\n")

    def to_json(self, path):
        doc = {
            "n": int(self.n),
            "method": self.method,
            "s_values": self.s_values.tolist(),
            "log_joint": self.log_joint.tolist(),
            "log_posterior": self.log_posterior.tolist(),
            "tail_mass_bound": float(np.exp(self.tail_log_mass_bound)),
            "log_weight_integrals": self.log_i.tolist(),
            **self.metadata,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _normalize(n, log_joint, log_tail, method, log_i, metadata):
    log_z_body = log_sum_exp(log_joint)
    log_z = np.logaddexp(log_z_body, log_tail)
    return PosteriorKnTable(
        n=n,
        log_joint=np.asarray(log_joint, dtype=float),
        log_posterior=np.asarray(log_joint, dtype=float) - log_z,
        tail_log_mass_bound=float(log_tail - log_z),
        method=method,
        log_i=np.asarray(log_i, dtype=float),
        metadata=metadata or {},
    )


def brute_force_partition_log_terms(model, x, s_values=None):
    """Per-s log of sum_{A in tau_s(n)} prod_j (a_j-1)! m(x_{A_j}), by full
    enumeration with per-subset marginal caching.  n <= 13."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n > BRUTE_FORCE_MAX_N:
        raise ResourceLimitError(
            f"brute-force posterior capped at n={BRUTE_FORCE_MAX_N}, got n={n}"
        )
    if s_values is None:
        s_values = range(1, n + 1)
    cache = {}

    def block_term(block):
        v = cache.get(block)
        if v is None:
            v = gammaln(len(block)) + model.block_log_marginal(x[list(block)])
            cache[block] = v
        return v

    acc = {s: OnlineLogSumExp() for s in s_values}
    for part in enumerate_set_partitions(n):
        s = len(part)
        if s not in acc:
            continue
        tot = 0.0
        for block in part:
            tot += block_term(block)
            if tot == -math.inf:
                break
        acc[s].add(tot)
    return np.array([acc[s].value() for s in s_values])


def posterior_kn_bruteforce(model, prior, x, tol=1e-10, metadata=None):
    """Exact posterior over s = 1..n by full partition enumeration (n <= 13)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 1:
        raise ValueError("need at least one observation")
    terms = brute_force_partition_log_terms(model, x)
    log_i = np.array([weight_integral(prior, n, s, tol) for s in range(1, n + 1)])
    log_joint = log_i + terms
    return _normalize(n, log_joint, -math.inf, "brute", log_i, metadata)


def partition_size_log_terms(size_log_marginals, n, s_max):
    """Per-s log partition sums when m depends only on block size.

    ``size_log_marginals[a-1]`` must hold log m_a for a = 1..n; the partition
    sum is then the partial Bell polynomial with weights w_a = (a-1)! m_a.
    Returns the array for s = 1..s_max.
    """
    size_log_marginals = np.asarray(size_log_marginals, dtype=float)
    if size_log_marginals.shape[0] < n:
        raise ValueError("need per-size marginals for a = 1..n")
    log_w = gammaln(np.arange(1, n + 1)) + size_log_marginals[:n]
    return partial_bell_log_column(log_w, n, s_max)


def _tail_log_bound(log_joint):
    """Geometric tail bound from the monotone envelope of the last 5 points.

    Returns (ok, log_bound): ok is False when the observed decay is too slow
    (envelope ratio above 1/2) to certify a geometric bound.
    """
    if len(log_joint) < 6:
        return False, math.inf
    gaps = np.diff(log_joint[-6:])
    if np.any(~np.isfinite(gaps)):
        # joint already hit exact zero: nothing beyond
        if log_joint[-1] == -math.inf:
            return True, -math.inf
        return False, math.inf
    log_r = float(np.max(gaps))
    if log_r > -math.log(2.0):
        return False, math.inf
    r = math.exp(log_r)
    return True, log_joint[-1] + math.log(r / (1.0 - r))


def posterior_kn_sizeonly(
    prior, size_log_marginals, n, s_max=DEFAULT_S_MAX, tol=1e-10, metadata=None
):
    """Posterior over K_n through the partial-Bell fast path.

    Valid whenever the model/data pair makes m(x_A) a function of |A| alone
    (constant data under the conjugate Gaussian or uniform models, or any
    user-supplied per-size weight vector).  When s_max < n the table is
    truncated and carries a certified geometric tail bound; if the decay seen
    at s_max is too slow to certify one, s_max is doubled (up to n).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > SIZE_ONLY_MAX_N:
        raise ResourceLimitError(
            f"size-only engine capped at n={SIZE_ONLY_MAX_N}, got n={n}"
        )
    if n > SIZE_ONLY_COMFORT_N:
        warnings.warn(
            f"size-only posterior at n={n} costs O(n^2 s_max) log-adds; "
            "expect minutes", stacklevel=2,
        )
    if s_max > n:
        warnings.warn(f"s_max={s_max} clamped to n={n}", stacklevel=2)
        s_max = n
    if s_max < 1:
        raise ValueError("s_max must be >= 1")

    while True:
        terms = partition_size_log_terms(size_log_marginals, n, s_max)
        log_i = np.array([weight_integral(prior, n, s, tol) for s in range(1, s_max + 1)])
        log_joint = log_i + terms
        if s_max == n:
            return _normalize(n, log_joint, -math.inf, "size-only", log_i, metadata)
        ok, log_tail = _tail_log_bound(log_joint)
        if ok:
            return _normalize(n, log_joint, log_tail, "truncated", log_i, metadata)
        s_max = min(n, 2 * s_max)


@dataclass
class RatioReport:
    """Per-s decomposition of the posterior odds against a reference t.

    ``log_c[s-1] + log_r[s-1]`` equals the direct posterior log ratio
    pr(K=s|x)/pr(K=t|x); ``sum_ratio_excl_t`` is sum_{s != t} of the ratio,
    the quantity whose vanishing is equivalent to consistency at t.
    """

    n: int
    t: int
    s_values: np.ndarray
    log_c: np.ndarray
    log_r: np.ndarray

    @property
    def log_ratio(self):
        return self.log_c + self.log_r

    @property
    def sum_ratio_excl_t(self):
        mask = self.s_values != self.t
        vals = self.log_ratio[mask]
        if vals.size == 0:
            return 0.0
        return float(np.exp(log_sum_exp(vals)))

    def implied_posterior_t(self):
        """pr(K=t|x) reconstructed as 1 / (1 + sum of odds)."""
        return 1.0 / (1.0 + self.sum_ratio_excl_t)


def ratio_report(prior, partition_log_terms, n, t, tol=1e-10):
    """Decompose posterior odds into the prior factor C and partition factor R.

    ``partition_log_terms[s-1]`` is the per-s log partition sum (from
    :func:`brute_force_partition_log_terms` or :func:`partition_size_log_terms`).
    Requires a feasible reference: the term at s = t must be > -inf.
    """
    terms = np.asarray(partition_log_terms, dtype=float)
    s_max = terms.shape[0]
    if not (1 <= t <= s_max):
        raise ValueError(f"reference t={t} outside 1..{s_max}")
    if terms[t - 1] == -math.inf:
        raise ValueError(
            f"reference cluster count t={t} has zero partition mass for these data"
        )
    s_values = np.arange(1, s_max + 1)
    if prior.is_degenerate:
        log_c = (s_values - t) * math.log(prior.alpha_star)
    else:
        log_i_t = weight_integral(prior, n, t, tol)
        log_c = np.array([
            0.0 if s == t else weight_integral(prior, n, int(s), tol) - log_i_t
            for s in s_values
        ])
    log_r = terms - terms[t - 1]
    return RatioReport(n=n, t=t, s_values=s_values, log_c=log_c, log_r=log_r)


def posterior_alpha_cdf(table, prior, alpha_grid, tol=1e-10, weight_floor=1e-13):
    """CDF of the concentration parameter given the data, on a grid.

    Mixes the conditional laws pi(alpha | K_n = s) (each proportional to
    alpha^s / alpha^(n) pi(alpha)) with the posterior weights of the table.
    Returns an array of shape (len(grid), 2) with columns (alpha, cdf).
    Truncated tables ignore the (bounded, tiny) tail mass, so values are
    conservative from below by at most the tail bound.
    """
    if prior.is_degenerate:
        raise ValueError("posterior_alpha_cdf needs a prior with a density")
    grid = np.asarray(alpha_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("alpha_grid must be a nonempty increasing 1-d array")
    if np.any(grid <= 0):
        raise ValueError("alpha grid points must be > 0")
    n = table.n
    weights = np.exp(table.log_posterior)
    keep = np.nonzero(weights > weight_floor)[0]
    cdf = np.zeros(grid.size)
    for idx in keep:
        s = idx + 1
        log_i = table.log_i[idx]
        for j, a in enumerate(grid):
            if a >= prior.support_upper:
                cond = 1.0
            else:
                log_head = truncated_weight_integral(prior, n, s, float(a), tol)
                cond = min(1.0, math.exp(log_head - log_i))
            cdf[j] += weights[idx] * cond
    cdf = np.clip(np.maximum.accumulate(cdf), 0.0, 1.0)
    return np.column_stack([grid, cdf])


# ---------------------------------------------------------------------------
# exchangeability identity (expected partition factor) by Monte Carlo
# ---------------------------------------------------------------------------

@dataclass
class McIdentityResult:
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float
    diff: float
    diff_se: float
    reps: int
    partial: bool = False

    def consistent(self, k=3.0):
        return abs(self.diff) <= k * max(self.diff_se, 1e-300)


def _subset_log_marginals(model, xmat, subsets):
    """log m over each subset, vectorized across Monte Carlo replicates."""
    out = {}
    if isinstance(model, UniformLocation):
        log_2c = math.log(2 * model.c)
        for sub in subsets:
            cols = xmat[:, list(sub)]
            mx = np.maximum(cols.max(axis=1), model.theta_star)
            mn = np.minimum(cols.min(axis=1), model.theta_star)
            room = 2 * model.c - (mx - mn)
            with np.errstate(divide="ignore"):
                out[sub] = np.where(
                    room > 0, np.log(np.maximum(room, 1e-300)), -np.inf
                ) - (len(sub) + 1) * log_2c
    elif isinstance(model, GaussianConjugate):
        for sub in subsets:
            cols = xmat[:, list(sub)]
            a = len(sub)
            sx = cols.sum(axis=1)
            sxx = (cols * cols).sum(axis=1)
            out[sub] = (
                -0.5 * a * math.log(2 * math.pi)
                - 0.5 * math.log(a + 1.0)
                - 0.5 * sxx
                + sx * sx / (2.0 * (a + 1.0))
            )
    else:
        for sub in subsets:
            cols = xmat[:, list(sub)]
            out[sub] = np.array([model.block_log_marginal(row) for row in cols])
    return out


def mc_expected_r(
    model, truth, n, s, composition_budget=10**6, mc_reps=10**5, seed=0
):
    """Monte Carlo check of the exchangeability identity for E{R(n, 1, s)}.

    Both sides are estimated from the *same* data draws (common random
    numbers): the left side sums the partition factor over all of tau_s(n),
    the right side sums over ordered compositions with one representative
    partition per size profile.  Exact enumeration throughout; n <= 13.
    """
    if not (1 <= s <= n):
        raise ValueError("need 1 <= s <= n")
    if n > BRUTE_FORCE_MAX_N:
        raise ResourceLimitError(
            f"identity check needs full partition enumeration; capped at "
            f"n={BRUTE_FORCE_MAX_N}"
        )
    rng = np.random.default_rng(seed)
    xs, _ = truth.sample(n * mc_reps, seed=rng.integers(2**63))
    xmat = xs.reshape(mc_reps, n)

    partitions = list(enumerate_set_partitions(n, s))
    comps = []
    partial = False
    total_comps = composition_count(n, s)
    for i, comp in enumerate(enumerate_compositions(n, s)):
        if i >= composition_budget:
            partial = True
            break
        comps.append(comp)

    subsets = {tuple(range(n))}
    for part in partitions:
        subsets.update(part)
    for comp in comps:
        start = 0
        for a in comp:
            subsets.add(tuple(range(start, start + a)))
            start += a
    logm = _subset_log_marginals(model, xmat, sorted(subsets))
    log_full = logm[tuple(range(n))]

    lhs = np.zeros(mc_reps)
    log_nfac = gammaln(n)
    for part in partitions:
        tot = -log_nfac - log_full
        for block in part:
            tot = tot + gammaln(len(block)) + logm[block]
        lhs += np.exp(tot)

    rhs = np.zeros(mc_reps)
    log_sfac = gammaln(s + 1)
    for comp in comps:
        start = 0
        tot = math.log(n) - log_sfac - float(np.sum(np.log(comp))) - log_full
        for a in comp:
            tot = tot + logm[tuple(range(start, start + a))]
            start += a
        rhs += np.exp(tot)
    if partial:
        warnings.warn(
            f"composition budget hit ({composition_budget} of {total_comps}); "
            "right-hand side is a partial sum", stacklevel=2,
        )

    diff = lhs - rhs
    sqrt_r = math.sqrt(mc_reps)
    return McIdentityResult(
        lhs=float(lhs.mean()),
        lhs_se=float(lhs.std(ddof=1) / sqrt_r),
        rhs=float(rhs.mean()),
        rhs_se=float(rhs.std(ddof=1) / sqrt_r),
        diff=float(diff.mean()),
        diff_se=float(diff.std(ddof=1) / sqrt_r),
        reps=mc_reps,
        partial=partial,
    )


# ---------------------------------------------------------------------------
# composition-sum bound (the combinatorial engine of the consistency proofs)
# ---------------------------------------------------------------------------

@dataclass
class CompositionBoundReport:
    all_strict: bool
    worst_abs_slack: float
    worst_rel_slack: float
    worst_case: tuple  # (p, n, s)
    cells: int

    def __str__(self):
        status = "strict" if self.all_strict else "VIOLATED"
        p, n, s = self.worst_case
        return (
            f"composition bound {status} over {self.cells} cells; worst slack "
            f"{self.worst_abs_slack:.6g} (rel {self.worst_rel_slack:.3g}) at "
            f"p={p}, n={n}, s={s}"
        )


def composition_power_sum(n, s, p):
    """sum over ordered compositions of n into s parts of (n / prod a_j)^p."""
    total = 0.0
    for comp in enumerate_compositions(n, s):
        prod = 1.0
        for a in comp:
            prod *= a
        total += (n / prod) ** p
    return total


def lemma_s6_exhaustive(n_max=20, s_max=6, p_list=(1.5, 2.0)):
    """Exhaustively confirm  sum (n/prod a_j)^p < (2^p zeta(p))^(s-1)
    for all 2 <= s <= s_max, s <= n <= n_max and each p > 1."""
    if n_max > 25:
        raise ResourceLimitError("composition enumeration capped at n_max=25")
    all_strict = True
    worst = (math.inf, math.inf, (None, None, None))
    cells = 0
    for p in p_list:
        if not p > 1:
            raise ValueError("bound requires p > 1")
        cp = 2.0**p * float(zeta(p))
        for s in range(2, s_max + 1):
            for n in range(s, n_max + 1):
                total = composition_power_sum(n, s, p)
                bound = cp ** (s - 1)
                slack = bound - total
                cells += 1
                if not total < bound:
                    all_strict = False
                if slack < worst[0]:
                    worst = (slack, slack / bound, (p, n, s))
    return CompositionBoundReport(
        all_strict=all_strict,
        worst_abs_slack=worst[0],
        worst_rel_slack=worst[1],
        worst_case=worst[2],
        cells=cells,
    )


def fixed_alpha_ratio_lower_bound(model, x, component_blocks, alpha_star):
    """log of the fixed-concentration lower bound on pr(K=t+1|x)/pr(K=t|x):

        alpha* sum_{i in C_1} m(x_i) m(x_{C_1 \\ i}) / ((n_1 - 1) m(x_{C_1}))

    where C_1 is the first true component block (size >= 2 required).
    """
    x = np.asarray(x, dtype=float)
    c1 = list(component_blocks[0])
    n1 = len(c1)
    if n1 < 2:
        raise ValueError("the first component block must have size >= 2")
    log_mc1 = model.block_log_marginal(x[c1])
    acc = OnlineLogSumExp()
    for i in c1:
        rest = [j for j in c1 if j != i]
        acc.add(
            model.block_log_marginal(x[[i]])
            + model.block_log_marginal(x[rest])
            - log_mc1
        )
    return math.log(alpha_star) - math.log(n1 - 1) + acc.value()
