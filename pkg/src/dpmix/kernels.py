"""Mixture kernels with tractable block marginals, and data-generating truths.

A kernel model pairs a likelihood kernel with a base measure and exposes the
integrated (block) log marginal

    m(x_A) = int prod_i k(x_i | theta) q0(theta) d(theta)

for a block of observations assumed to share one latent parameter.  Three
variants are provided:

* ``UniformLocation(theta_star, c)`` -- kernel Unif(theta-c, theta+c) with the
  base measure tied to the truth location, q0 = Unif(theta*-c, theta*+c).  The
  marginal has the closed form
  [2c - (max(x, theta*) - min(x, theta*))] / (2c)^(a+1).
* ``GaussianConjugate`` -- kernel N(theta, 1) with base N(0, 1); conjugate
  closed form.
* ``BoundedLocation(g, q0)`` -- location family k(x|theta) = g(x - theta) with
  a tabulated, piecewise-linear kernel density g on a compact support and a
  tabulated base density q0.  The marginal is integrated over the feasibility
  interval [max(x) - b, min(x) + a]; outside it the integrand is exactly zero,
  so blocks mixing well-separated components get an exact -inf.

Block marginals of -inf are meaningful (separation structure) and must be
propagated, never clipped.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import QuadratureError

__all__ = [
    "TabulatedDensity",
    "UniformLocation",
    "GaussianConjugate",
    "BoundedLocation",
    "kernel_model_from_dict",
    "constant_data_size_log_marginal",
    "scaled_range_statistic",
    "MixtureTruth",
    "sample_truth",
    "write_data",
    "read_data",
    "write_truth_sidecar",
]

_LOG_2PI = math.log(2.0 * math.pi)


class TabulatedDensity:
    """Piecewise-linear density on a compact interval, given by grid values.

    Values are clamped to the endpoint values at the boundary and are exactly
    zero outside [grid[0], grid[-1]].  The input values are normalized by the
    (exact) trapezoid integral, so any positive shape works.
    """

    def __init__(self, grid, values):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or values.shape != grid.shape:
            raise ValueError("need matching 1-d grid and values with >= 2 points")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(values < 0) or not np.any(values > 0):
            raise ValueError("density values must be >= 0 and not all zero")
        total = np.trapezoid(values, grid)
        self.grid = grid
        self.values = values / total
        self._cum = np.concatenate(
            [[0.0], np.cumsum(np.diff(grid) * (self.values[1:] + self.values[:-1]) / 2.0)]
        )

    @property
    def support(self):
        return float(self.grid[0]), float(self.grid[-1])

    @classmethod
    def uniform(cls, lo, hi):
        if not hi > lo:
            raise ValueError("need hi > lo")
        return cls(np.array([lo, hi]), np.array([1.0, 1.0]))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.grid, self.values)
        out = np.where((x < self.grid[0]) | (x > self.grid[-1]), 0.0, out)
        return float(out) if out.ndim == 0 else out

    def logpdf(self, x):
        with np.errstate(divide="ignore"):
            out = np.log(self.pdf(x))
        return float(out) if np.ndim(out) == 0 else out

    def interval_mass(self, lo, hi):
        """Exact integral of the density over [lo, hi]."""
        if hi <= lo:
            return 0.0
        lo = max(lo, self.grid[0])
        hi = min(hi, self.grid[-1])
        if hi <= lo:
            return 0.0
        return float(self._cdf_inside(hi) - self._cdf_inside(lo))

    def _cdf_inside(self, x):
        i = np.searchsorted(self.grid, x, side="right") - 1
        i = min(max(i, 0), len(self.grid) - 2)
        x0, x1 = self.grid[i], self.grid[i + 1]
        v0, v1 = self.values[i], self.values[i + 1]
        dt = x - x0
        vx = v0 + (v1 - v0) * dt / (x1 - x0)
        return self._cum[i] + dt * (v0 + vx) / 2.0

    def to_dict(self):
        return {"grid": self.grid.tolist(), "values": self.values.tolist()}


def _as_block(x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size == 0:
        raise ValueError("block must be nonempty")
    if np.any(~np.isfinite(x)):
        raise ValueError("block contains non-finite values")
    return x


@dataclass(frozen=True)
class UniformLocation:
    """Uniform location kernel of half-width c with the base tied to theta_star."""

    theta_star: float
    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("UniformLocation needs c > 0")

    @property
    def support(self):
        return self.theta_star - self.c, self.theta_star + self.c

    def block_log_marginal(self, x_block):
        x = _as_block(x_block)
        lo, hi = self.support
        if np.any(x < lo) or np.any(x > hi):
            raise ValueError(
                "datum outside the kernel/base support "
                f"[{lo:g}, {hi:g}]; impossible under the matching truth"
            )
        spread = max(x.max(), self.theta_star) - min(x.min(), self.theta_star)
        room = 2 * self.c - spread
        if room <= 0:
            return -math.inf
        return math.log(room) - (x.size + 1) * math.log(2 * self.c)

    def size_log_marginals_constant(self, x0, n):
        """log m_a, a = 1..n, for blocks of a copies of x0 (size-only data)."""
        d = abs(x0 - self.theta_star)
        if d > self.c:
            raise ValueError("constant value outside the support")
        a = np.arange(1, n + 1)
        room = 2 * self.c - d
        if room <= 0:
            return np.full(n, -np.inf)
        return math.log(room) - (a + 1) * math.log(2 * self.c)

    def make_tracker(self, data):
        return _RangeTracker(data, self._log_marginal_range)

    def _log_marginal_range(self, a, mn, mx):
        spread = max(mx, self.theta_star) - min(mn, self.theta_star)
        room = 2 * self.c - spread
        if room <= 0:
            return -math.inf
        return math.log(room) - (a + 1) * math.log(2 * self.c)

    def to_dict(self):
        return {"kind": "uniform", "theta_star": self.theta_star, "c": self.c}


@dataclass(frozen=True)
class GaussianConjugate:
    """Kernel N(theta, 1) with base measure N(0, 1) (parameter free)."""

    def block_log_marginal(self, x_block):
        x = _as_block(x_block)
        a = x.size
        sx = float(x.sum())
        sxx = float((x * x).sum())
        return self._log_marginal_stats(a, sx, sxx)

    @staticmethod
    def _log_marginal_stats(a, sx, sxx):
        return (
            -0.5 * a * _LOG_2PI
            - 0.5 * math.log(a + 1.0)
            - 0.5 * sxx
            + sx * sx / (2.0 * (a + 1.0))
        )

    def size_log_marginals_constant(self, x0, n):
        return constant_data_size_log_marginal(np.arange(1, n + 1), x0)

    def make_tracker(self, data):
        return _GaussianTracker(data)

    def to_dict(self):
        return {"kind": "gaussian"}


def constant_data_size_log_marginal(a, theta_star):
    """log m(block of a copies of theta_star) under the Gaussian model:

        m = (a+1)^(-1/2) q0(theta*)^a exp{theta*^2 a^2 / (2(a+1))}

    with q0 the standard normal density.  ``a`` may be an int or array.
    """
    a = np.asarray(a, dtype=float)
    if np.any(a < 1):
        raise ValueError("block size must be >= 1")
    log_q0 = -0.5 * _LOG_2PI - 0.5 * theta_star**2
    out = -0.5 * np.log(a + 1.0) + a * log_q0 + theta_star**2 * a * a / (2.0 * (a + 1.0))
    return float(out) if out.ndim == 0 else out


class BoundedLocation:
    """Location family with tabulated kernel density g and base density q0.

    ``block_log_marginal`` integrates over the feasibility interval
    [max(x) - b, min(x) + a] intersected with the support of q0, where [a, b]
    is the support of g; an empty interval gives an exact -inf.  When g is
    exactly uniform (built via :meth:`uniform_kernel`) the marginal reduces to
    a closed form using the exact interval mass of q0.
    """

    def __init__(self, g, q0, quad_tol=1e-10, _exact_uniform=False):
        if not isinstance(g, TabulatedDensity) or not isinstance(q0, TabulatedDensity):
            raise ValueError("g and q0 must be TabulatedDensity instances")
        if np.any(g.values <= 0):
            raise ValueError("kernel density g must be strictly positive on its support")
        self.g = g
        self.q0 = q0
        self.quad_tol = quad_tol
        self._exact_uniform = _exact_uniform

    @classmethod
    def uniform_kernel(cls, c, base_lo, base_hi, quad_tol=1e-10):
        """Uniform kernel of half-width c with a uniform base on [base_lo, base_hi].

        The base may be wider than the kernel, which is what multi-component
        separated truths require.
        """
        g = TabulatedDensity.uniform(-c, c)
        q0 = TabulatedDensity.uniform(base_lo, base_hi)
        return cls(g, q0, quad_tol=quad_tol, _exact_uniform=True)

    @property
    def kernel_support(self):
        return self.g.support

    def feasible_theta_interval(self, x):
        # g(x - theta) > 0 iff theta in [x - b, x - a]
        a, b = self.g.support
        lo = float(np.max(x)) - b
        hi = float(np.min(x)) - a
        qlo, qhi = self.q0.support
        return max(lo, qlo), min(hi, qhi)

    def block_log_marginal(self, x_block):
        x = _as_block(x_block)
        lo, hi = self.feasible_theta_interval(x)
        if hi <= lo:
            return -math.inf
        if self._exact_uniform:
            ga, gb = self.g.support
            width = gb - ga
            mass = self.q0.interval_mass(lo, hi)
            if mass <= 0.0:
                return -math.inf
            return -x.size * math.log(width) + math.log(mass)
        return self._quad_log_marginal(x, lo, hi)

    def _quad_log_marginal(self, x, lo, hi):
        def log_f(theta):
            v = float(np.sum(self.g.logpdf(x - theta))) + self.q0.logpdf(theta)
            return v

        grid = np.linspace(lo, hi, 65)
        vals = np.array([log_f(t) for t in grid])
        peak = float(np.max(vals))
        if not math.isfinite(peak):
            return -math.inf

        def f(theta):
            v = log_f(theta)
            return math.exp(v - peak) if math.isfinite(v) else 0.0

        val, err = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=self.quad_tol, limit=500)
        if val <= 0:
            return -math.inf
        if err / val > 10 * self.quad_tol:
            raise QuadratureError(
                "block marginal quadrature did not converge", achieved=err / val
            )
        return peak + math.log(val)

    def size_log_marginals_constant(self, x0, n):
        return np.array(
            [self.block_log_marginal(np.full(a, float(x0))) for a in range(1, n + 1)]
        )

    def make_tracker(self, data):
        if self._exact_uniform:
            return _RangeTracker(data, self._log_marginal_range)
        return _MemberTracker(data, self.block_log_marginal)

    def _log_marginal_range(self, a, mn, mx):
        ga, gb = self.g.support
        qlo, qhi = self.q0.support
        lo, hi = max(mx - gb, qlo), min(mn - ga, qhi)
        if hi <= lo:
            return -math.inf
        mass = self.q0.interval_mass(lo, hi)
        if mass <= 0.0:
            return -math.inf
        return -a * math.log(gb - ga) + math.log(mass)

    def to_dict(self):
        return {"kind": "bounded", "g": self.g.to_dict(), "q0": self.q0.to_dict()}


def kernel_model_from_dict(spec):
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "uniform":
        return UniformLocation(**spec)
    if kind == "gaussian":
        if spec:
            raise ValueError(f"gaussian model takes no parameters, got {sorted(spec)}")
        return GaussianConjugate()
    if kind == "bounded":
        if "c" in spec:  # uniform-kernel convenience form
            return BoundedLocation.uniform_kernel(
                spec.pop("c"), spec.pop("base_lo"), spec.pop("base_hi"), **spec
            )
        g = TabulatedDensity(**spec.pop("g"))
        q0 = TabulatedDensity(**spec.pop("q0"))
        return BoundedLocation(g, q0, **spec)
    raise ValueError(f"unknown kernel model kind {kind!r}")


def scaled_range_statistic(model, x_block):
    """(2c - Range(x)) / (2c) for a uniform-location block of size >= 2."""
    if not isinstance(model, UniformLocation):
        raise ValueError("scaled_range_statistic is defined for UniformLocation")
    x = _as_block(x_block)
    if x.size < 2:
        raise ValueError("range statistic needs a block of size >= 2")
    return float((2 * model.c - (x.max() - x.min())) / (2 * model.c))


# ---------------------------------------------------------------------------
# cluster trackers used by the collapsed Gibbs sampler
# ---------------------------------------------------------------------------

class _GaussianTracker:
    """Per-cluster sufficient statistics (a, sum x, sum x^2)."""

    needs_members = False

    def __init__(self, data):
        self.data = data

    def new(self):
        return (0, 0.0, 0.0)

    def add(self, stat, i):
        a, sx, sxx = stat
        xi = self.data[i]
        return (a + 1, sx + xi, sxx + xi * xi)

    def remove(self, stat, i, members):
        a, sx, sxx = stat
        xi = self.data[i]
        return (a - 1, sx - xi, sxx - xi * xi)

    def log_marginal(self, stat):
        a, sx, sxx = stat
        if a == 0:
            return 0.0
        return GaussianConjugate._log_marginal_stats(a, sx, sxx)


class _RangeTracker:
    """Per-cluster (a, min, max) with multiplicity counters for the extremes.

    Removing a non-extreme point is O(1); removing the last copy of an
    extreme recomputes min/max over the remaining members (rare for
    continuous data, O(1) amortized; constant data never triggers it).
    """

    needs_members = True

    def __init__(self, data, log_marginal_range):
        self.data = data
        self._log_marginal_range = log_marginal_range

    def new(self):
        return (0, math.inf, -math.inf, 0, 0)

    def add(self, stat, i):
        a, mn, mx, cmn, cmx = stat
        xi = self.data[i]
        if xi < mn:
            mn, cmn = xi, 1
        elif xi == mn:
            cmn += 1
        if xi > mx:
            mx, cmx = xi, 1
        elif xi == mx:
            cmx += 1
        return (a + 1, mn, mx, cmn, cmx)

    def remove(self, stat, i, members):
        a, mn, mx, cmn, cmx = stat
        xi = self.data[i]
        a -= 1
        if a == 0:
            return self.new()
        if xi == mn:
            cmn -= 1
        if xi == mx:
            cmx -= 1
        if (xi == mn and cmn == 0) or (xi == mx and cmx == 0):
            vals = self.data[list(members)]
            mn, mx = float(vals.min()), float(vals.max())
            cmn = int(np.sum(vals == mn))
            cmx = int(np.sum(vals == mx))
        return (a, mn, mx, cmn, cmx)

    def log_marginal(self, stat):
        a, mn, mx, _, _ = stat
        if a == 0:
            return 0.0
        return self._log_marginal_range(a, mn, mx)


class _MemberTracker:
    """Fallback tracker that re-evaluates the block marginal from members."""

    needs_members = True

    def __init__(self, data, block_log_marginal):
        self.data = data
        self._marginal = block_log_marginal

    def new(self):
        return ()

    def add(self, stat, i):
        return stat + (i,)

    def remove(self, stat, i, members):
        return tuple(j for j in stat if j != i)

    def log_marginal(self, stat):
        if not stat:
            return 0.0
        return self._marginal(self.data[list(stat)])


# ---------------------------------------------------------------------------
# data-generating truths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixtureTruth:
    """Finite mixture truth: weights, component locations, kernel family.

    ``family`` is one of "uniform" (components Unif(loc-c, loc+c)),
    "gaussian" (components N(loc, 1)) or "degenerate" (all data equal to the
    single location).
    """

    weights: tuple
    locations: tuple
    family: str
    c: Optional[float] = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        locs = np.asarray(self.locations, dtype=float)
        if self.family not in ("uniform", "gaussian", "degenerate"):
            raise ValueError(f"unknown truth family {self.family!r}")
        if w.ndim != 1 or locs.shape != w.shape or w.size == 0:
            raise ValueError("weights and locations must be matching 1-d sequences")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be strictly positive and sum to 1")
        if len(set(self.locations)) != len(self.locations):
            raise ValueError("component locations must be distinct")
        if self.family == "uniform" and not (self.c and self.c > 0):
            raise ValueError("uniform truth needs c > 0")
        if self.family == "degenerate" and w.size != 1:
            raise ValueError("degenerate truth has exactly one component")
        object.__setattr__(self, "weights", tuple(float(v) for v in w))
        object.__setattr__(self, "locations", tuple(float(v) for v in locs))

    @property
    def t(self):
        return len(self.weights)

    @property
    def completely_separated(self):
        """True when component supports cannot overlap (uniform kernel width 2c)."""
        if self.family != "uniform":
            return self.t == 1
        locs = np.asarray(self.locations)
        if self.t == 1:
            return True
        gaps = np.abs(locs[:, None] - locs[None, :])
        np.fill_diagonal(gaps, np.inf)
        return bool(np.min(gaps) > 2 * self.c)

    def sample(self, n, seed):
        return sample_truth(self, n, seed)

    def to_dict(self):
        d = {
            "weights": list(self.weights),
            "locations": list(self.locations),
            "family": self.family,
        }
        if self.c is not None:
            d["c"] = self.c
        return d


def truth_from_dict(spec):
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "constant":
        return MixtureTruth(
            weights=(1.0,), locations=(spec.pop("theta_star"),), family="degenerate"
        )
    if kind == "mixture":
        return MixtureTruth(
            weights=tuple(spec.pop("weights")),
            locations=tuple(spec.pop("locations")),
            family=spec.pop("family"),
            c=spec.pop("c", None),
        )
    raise ValueError(f"unknown truth kind {kind!r}")


def sample_truth(truth, n, seed):
    """n i.i.d. draws from the truth; returns (values, component labels)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    if truth.family == "degenerate":
        return np.full(n, truth.locations[0]), np.zeros(n, dtype=int)
    labels = rng.choice(truth.t, size=n, p=np.asarray(truth.weights))
    locs = np.asarray(truth.locations)[labels]
    if truth.family == "uniform":
        x = rng.uniform(locs - truth.c, locs + truth.c)
    else:
        x = rng.normal(locs, 1.0)
    return x, labels


def write_data(path, x):
    """One real per line, plain text."""
    np.savetxt(path, np.asarray(x, dtype=float), fmt="%.17g")


def read_data(path):
    x = np.atleast_1d(np.loadtxt(path, dtype=float))
    if x.ndim != 1:
        raise ValueError("data file must contain one real per line")
    return x


def write_truth_sidecar(path, truth, seed, n):
    meta = {"truth": truth.to_dict(), "seed": int(seed), "n": int(n)}
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
