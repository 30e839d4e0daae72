"""Prior families for the concentration parameter and their weight integrals.

The central quantities are the prior-weighted integrals

    I(n, k) = int_0^inf  alpha^k / alpha^(n)  pi(alpha) d(alpha)

and the ratio C(n, t, s) = I(n, s) / I(n, t), which is the concentration-prior
factor of the posterior odds between s and t clusters.  C(n, t, t+s) is also
the s-th posterior moment of alpha given K_n = t.

All integrals are evaluated in the transformed variable u = log(alpha); the
integrand is log-concave in u for every supported family, which makes the
mode-centred adaptive quadrature below reliable even when n is 10^6 and the
integrand is sharply peaked near the origin.

The module also certifies the polynomial-origin and subfactorial-moment
regularity conditions numerically and evaluates the explicit finite-n bounds
on C(n, t, t+s) built from the lower incomplete gamma function.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.special import gammaln

from .errors import CertificationError, QuadratureError
from .numerics import log_ascending_factorial, log_lower_incomplete_gamma

__all__ = [
    "ConcentrationPrior",
    "GammaPrior",
    "GeneralizedGammaPrior",
    "BoundedPolyPrior",
    "PointMassPrior",
    "prior_from_dict",
    "weight_integral",
    "truncated_weight_integral",
    "tail_weight_integral",
    "c_ratio",
    "conditional_alpha_moment",
    "A2Certificate",
    "A3Certificate",
    "fit_a2_certificate",
    "verify_a3",
    "prop1_upper_bound",
    "lemma_s2_sandwich",
    "truncated_c_ratio",
    "lemma_s3_constant",
]

DEFAULT_TOL = 1e-10
MAX_A2_DELTA = 1e6
MAX_A3_D = 1e9


class ConcentrationPrior:
    """Common interface of the concentration-parameter prior families."""

    is_degenerate = False
    #: upper end of the support (may be inf); lower end is always 0
    support_upper = math.inf

    def log_density(self, alpha):
        raise NotImplementedError

    def log_density_from_log(self, u):
        """log pi(exp(u)) computed directly from u = log(alpha).

        Stable for arbitrarily negative u, where exp(u) underflows to 0.
        """
        raise NotImplementedError

    def log_moment(self, s):
        """log E(alpha^s) for integer s >= 0."""
        raise NotImplementedError

    @property
    def origin_exponent(self):
        """Exponent b such that pi(alpha) ~ alpha^b near the origin."""
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


def _check_alpha(alpha):
    alpha = np.asarray(alpha, dtype=float)
    if np.any(~np.isfinite(alpha)) or np.any(alpha <= 0):
        raise ValueError("alpha must be finite and > 0")
    return alpha


def _exp(u):
    """exp without OverflowError; huge u maps to inf."""
    return math.exp(u) if u < 709.0 else math.inf


@dataclass(frozen=True)
class GammaPrior(ConcentrationPrior):
    """Gamma prior with shape ``shape`` and rate ``rate``."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("Gamma prior needs shape > 0 and rate > 0")

    def log_density(self, alpha):
        alpha = _check_alpha(alpha)
        out = (
            self.shape * math.log(self.rate)
            - gammaln(self.shape)
            + (self.shape - 1) * np.log(alpha)
            - self.rate * alpha
        )
        return float(out) if np.ndim(out) == 0 else out

    def log_density_from_log(self, u):
        return (
            self.shape * math.log(self.rate)
            - gammaln(self.shape)
            + (self.shape - 1) * u
            - self.rate * _exp(u)
        )

    def log_moment(self, s):
        if s < 0:
            raise ValueError("moment order must be >= 0")
        return float(
            gammaln(self.shape + s) - gammaln(self.shape) - s * math.log(self.rate)
        )

    @property
    def origin_exponent(self):
        return self.shape - 1.0

    def to_dict(self):
        return {"family": "gamma", "shape": self.shape, "rate": self.rate}


@dataclass(frozen=True)
class GeneralizedGammaPrior(ConcentrationPrior):
    """Density proportional to alpha^(d-1) exp(-(alpha/a)^p); needs p > 1.

    p > 1 is what makes the moments subfactorial for every rate, so it is
    enforced at construction.
    """

    d: float
    a: float
    p: float

    def __post_init__(self):
        if not (self.d > 0 and self.a > 0):
            raise ValueError("GeneralizedGamma prior needs d > 0 and a > 0")
        if not self.p > 1:
            raise ValueError(
                "GeneralizedGamma prior requires p > 1 "
                "(subfactorial-moment condition fails otherwise)"
            )

    def _log_norm(self):
        return math.log(self.p) - self.d * math.log(self.a) - gammaln(self.d / self.p)

    def log_density(self, alpha):
        alpha = _check_alpha(alpha)
        out = self._log_norm() + (self.d - 1) * np.log(alpha) - (alpha / self.a) ** self.p
        return float(out) if np.ndim(out) == 0 else out

    def log_density_from_log(self, u):
        decay = _exp(self.p * (u - math.log(self.a)))
        if decay == math.inf:
            return -math.inf
        return self._log_norm() + (self.d - 1) * u - decay

    def log_moment(self, s):
        if s < 0:
            raise ValueError("moment order must be >= 0")
        return float(
            gammaln((self.d + s) / self.p)
            - gammaln(self.d / self.p)
            + s * math.log(self.a)
        )

    @property
    def origin_exponent(self):
        return self.d - 1.0

    def to_dict(self):
        return {"family": "generalized_gamma", "d": self.d, "a": self.a, "p": self.p}


@dataclass(frozen=True)
class BoundedPolyPrior(ConcentrationPrior):
    """Density proportional to alpha^beta on (0, c); beta = 0 is Unif(0, c)."""

    c: float
    beta: float = 0.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("BoundedPoly prior needs c > 0")
        if not self.beta > -1:
            raise ValueError("BoundedPoly prior needs beta > -1 (integrability)")

    @property
    def support_upper(self):
        return self.c

    def log_density(self, alpha):
        alpha = _check_alpha(alpha)
        out = np.where(
            alpha <= self.c,
            math.log(self.beta + 1)
            - (self.beta + 1) * math.log(self.c)
            + self.beta * np.log(alpha),
            -np.inf,
        )
        return float(out) if np.ndim(out) == 0 else out

    def log_density_from_log(self, u):
        if u > math.log(self.c):
            return -math.inf
        return (
            math.log(self.beta + 1)
            - (self.beta + 1) * math.log(self.c)
            + self.beta * u
        )

    def log_moment(self, s):
        if s < 0:
            raise ValueError("moment order must be >= 0")
        return float(
            math.log(self.beta + 1)
            - math.log(s + self.beta + 1)
            + s * math.log(self.c)
        )

    @property
    def origin_exponent(self):
        return self.beta

    def to_dict(self):
        return {"family": "bounded_poly", "c": self.c, "beta": self.beta}


@dataclass(frozen=True)
class PointMassPrior(ConcentrationPrior):
    """Degenerate prior at alpha_star (the fixed-concentration model)."""

    alpha_star: float
    is_degenerate = True

    def __post_init__(self):
        if not self.alpha_star > 0:
            raise ValueError("PointMass prior needs alpha_star > 0")

    def log_density(self, alpha):
        raise ValueError("degenerate (point mass) prior has no density")

    def log_density_from_log(self, u):
        raise ValueError("degenerate (point mass) prior has no density")

    def log_moment(self, s):
        if s < 0:
            raise ValueError("moment order must be >= 0")
        return s * math.log(self.alpha_star)

    @property
    def origin_exponent(self):
        raise ValueError("degenerate prior has no polynomial origin exponent")

    def to_dict(self):
        return {"family": "point_mass", "alpha_star": self.alpha_star}


_FAMILIES = {
    "gamma": (GammaPrior, ("shape", "rate")),
    "generalized_gamma": (GeneralizedGammaPrior, ("d", "a", "p")),
    "bounded_poly": (BoundedPolyPrior, ("c", "beta")),
    "point_mass": (PointMassPrior, ("alpha_star",)),
}


def prior_from_dict(spec):
    """Build a prior from a JSON-style dict, e.g. {"family": "gamma", ...}."""
    spec = dict(spec)
    family = spec.pop("family", None)
    if family not in _FAMILIES:
        raise ValueError(f"unknown prior family {family!r}")
    cls, fields = _FAMILIES[family]
    unknown = set(spec) - set(fields)
    if unknown:
        raise ValueError(f"unknown prior parameters for {family}: {sorted(unknown)}")
    return cls(**spec)


# ---------------------------------------------------------------------------
# mode-centred adaptive quadrature in u = log(alpha)
# ---------------------------------------------------------------------------

def _log_integral_u(log_f, lo, hi, tol, budget=10**6):
    """log of int exp(log_f(u)) du over (lo, hi), to relative tolerance tol.

    ``log_f`` must be unimodal on (lo, hi) (log-concave integrands only).
    Returns -inf if the integrand is identically zero on the interval.
    Raises QuadratureError when the error estimate exceeds the tolerance.
    """
    if hi <= lo:
        return -math.inf
    evals = [0]

    def f(u):
        evals[0] += 1
        return log_f(u)

    # anchor inside the interval
    if math.isfinite(lo) and math.isfinite(hi):
        anchor = 0.5 * (lo + hi)
    elif math.isfinite(hi):
        anchor = hi - 1.0
    elif math.isfinite(lo):
        anchor = lo + 1.0
    else:
        anchor = 0.0

    # coarse bidirectional scan for a finite value / rough peak
    offsets = [0.0]
    step = 1.0
    while step <= 2**16:
        offsets.extend((step, -step))
        step *= 2.0
    pts = [min(max(anchor + o, lo), hi) for o in offsets]
    pts = sorted({p for p in pts if lo <= p <= hi and math.isfinite(p)})
    vals = [f(p) for p in pts]
    finite = [(p, v) for p, v in zip(pts, vals) if math.isfinite(v)]
    if not finite:
        return -math.inf
    u_peak, peak = max(finite, key=lambda t: t[1])

    # refine the peak (only needed for a good exp-shift)
    lo_b = max(lo, u_peak - 2.0) if math.isfinite(lo) else u_peak - 64.0
    hi_b = min(hi, u_peak + 2.0) if math.isfinite(hi) else u_peak + 64.0
    if hi_b > lo_b:
        res = optimize.minimize_scalar(
            lambda u: -f(u), bounds=(lo_b, hi_b), method="bounded",
            options={"xatol": 1e-3},
        )
        if math.isfinite(-res.fun) and -res.fun > peak:
            peak, u_peak = -res.fun, float(res.x)

    # expand outward until the integrand has dropped `drop` nats below peak
    drop = 60.0 + max(0.0, -math.log(tol))

    def expand(direction):
        u, step = u_peak, 0.5
        bound = hi if direction > 0 else lo
        while True:
            nxt = u + direction * step
            if (direction > 0 and nxt >= bound) or (direction < 0 and nxt <= bound):
                return bound
            v = f(nxt)
            u = nxt
            if not math.isfinite(v) or v < peak - drop:
                return u
            step *= 1.6
            if evals[0] > budget:
                raise QuadratureError("evaluation budget exhausted during bracketing")

    a, b = expand(-1), expand(+1)

    def g(u):
        v = f(u)
        return math.exp(v - peak) if math.isfinite(v) else 0.0

    last_err = math.nan
    for limit in (200, 2000):
        val, err, *rest = integrate.quad(
            g, a, b, epsabs=0.0, epsrel=tol, limit=limit,
            points=[u_peak] if a < u_peak < b else None, full_output=1,
        )
        if val > 0 and err / val <= 10 * tol:
            return peak + math.log(val)
        last_err = err / val if val > 0 else math.inf
        if evals[0] > budget:
            break
    raise QuadratureError(
        f"quadrature did not reach relative tolerance {tol:g}", achieved=last_err
    )


def _weight_log_integrand(prior, n, k):
    # log alpha^(n) = u + gammaln(alpha + n) - gammaln(alpha + 1), which stays
    # finite as u -> -inf, so the integrand (with the du jacobian) is
    #       k u + gammaln(alpha+1) - gammaln(alpha+n) + log pi(e^u).
    def log_f(u):
        alpha = _exp(u)
        if alpha == math.inf:
            return -math.inf
        return (
            k * u
            + gammaln(alpha + 1.0)
            - gammaln(alpha + n)
            + prior.log_density_from_log(u)
        )

    return log_f


def _check_weight_integrand_converges(prior, k):
    if prior.is_degenerate:
        return
    if k + prior.origin_exponent <= 0:
        raise ValueError(
            f"integral of alpha^{k}/alpha^(n) diverges at the origin for a "
            f"prior with origin exponent {prior.origin_exponent:g}"
        )


def weight_integral(prior, n, k, tol=DEFAULT_TOL):
    """log I(n, k) = log int alpha^k / alpha^(n) pi(alpha) d(alpha)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if k < 0:
        raise ValueError("k must be >= 0")
    if k > n:
        warnings.warn(
            f"weight_integral called with k={k} > n={n}; outside the regime "
            "the posterior identities use", stacklevel=2,
        )
    if prior.is_degenerate:
        a = prior.alpha_star
        return k * math.log(a) - log_ascending_factorial(a, n)
    _check_weight_integrand_converges(prior, k)
    hi = math.log(prior.support_upper) if math.isfinite(prior.support_upper) else math.inf
    return _log_integral_u(_weight_log_integrand(prior, n, k), -math.inf, hi, tol)


def truncated_weight_integral(prior, n, k, upper, tol=DEFAULT_TOL):
    """log int_0^upper alpha^k / alpha^(n) pi(alpha) d(alpha)."""
    if upper <= 0:
        raise ValueError("upper must be > 0")
    if prior.is_degenerate:
        a = prior.alpha_star
        if a >= upper:
            return -math.inf
        return k * math.log(a) - log_ascending_factorial(a, n)
    _check_weight_integrand_converges(prior, k)
    hi = min(upper, prior.support_upper)
    return _log_integral_u(_weight_log_integrand(prior, n, k), -math.inf, math.log(hi), tol)


def tail_weight_integral(prior, n, k, lower, tol=DEFAULT_TOL):
    """log int_lower^inf alpha^k / alpha^(n) pi(alpha) d(alpha)."""
    if lower <= 0:
        raise ValueError("lower must be > 0")
    if prior.is_degenerate:
        a = prior.alpha_star
        if a < lower:
            return -math.inf
        return k * math.log(a) - log_ascending_factorial(a, n)
    if lower >= prior.support_upper:
        return -math.inf
    hi = math.log(prior.support_upper) if math.isfinite(prior.support_upper) else math.inf
    return _log_integral_u(_weight_log_integrand(prior, n, k), math.log(lower), hi, tol)


def c_ratio(prior, n, t, s, tol=DEFAULT_TOL):
    """log C(n, t, s) = log I(n, s) - log I(n, t).

    Under a point mass at alpha_star this collapses to (s - t) log(alpha_star)
    exactly; no quadrature is run on that path.
    """
    if not (1 <= t <= n) or not (1 <= s <= n):
        raise ValueError(f"need 1 <= t, s <= n; got t={t}, s={s}, n={n}")
    if prior.is_degenerate:
        return (s - t) * math.log(prior.alpha_star)
    if s == t:
        return 0.0
    return weight_integral(prior, n, s, tol) - weight_integral(prior, n, t, tol)


def conditional_alpha_moment(prior, n, t, s, tol=DEFAULT_TOL):
    """log E(alpha^s | K_n = t); identical to c_ratio(prior, n, t, t+s)."""
    if s < 0:
        raise ValueError("moment order must be >= 0")
    if t + s > n:
        raise ValueError(f"need t + s <= n; got t={t}, s={s}, n={n}")
    if s == 0:
        return 0.0
    return c_ratio(prior, n, t, t + s, tol)


# ---------------------------------------------------------------------------
# regularity certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class A2Certificate:
    """Numerically verified polynomial sandwich of the prior near the origin:
    alpha^beta / delta <= pi(alpha) <= delta * alpha^beta on (0, epsilon)."""

    epsilon: float
    delta: float
    beta: float

    def holds_on_grid(self, prior, grid_size=10**4):
        alphas = self.epsilon * np.arange(1, grid_size + 1) / (grid_size + 1.0)
        log_pi = prior.log_density(alphas)
        log_pow = self.beta * np.log(alphas)
        log_d = math.log(self.delta)
        return bool(
            np.all(log_pi <= log_pow + log_d + 1e-12)
            and np.all(log_pi >= log_pow - log_d - 1e-12)
        )


def default_a2_epsilon(prior):
    """epsilon < 1 is enough in general; bounded priors use half the support."""
    if isinstance(prior, BoundedPolyPrior):
        return min(prior.c / 2.0, 0.5)
    return 0.5


def fit_a2_certificate(prior, epsilon=None, grid_size=10**4):
    """Certify the polynomial-origin sandwich on a dense grid of (0, epsilon).

    The exponent is known analytically per family; delta is the smallest
    grid-verified constant, inflated by 10% whenever it exceeds 1 so that the
    certificate stays conservative between grid points.
    """
    if prior.is_degenerate:
        raise CertificationError(
            "point-mass prior is not absolutely continuous (A1 violated)"
        )
    if epsilon is None:
        epsilon = default_a2_epsilon(prior)
    if not (0 < epsilon < 1):
        raise ValueError("epsilon must lie in (0, 1)")
    beta = prior.origin_exponent
    alphas = epsilon * np.arange(1, grid_size + 1) / (grid_size + 1.0)
    log_ratio = prior.log_density(alphas) - beta * np.log(alphas)
    if np.any(~np.isfinite(log_ratio)):
        raise CertificationError(
            "prior density vanishes inside (0, epsilon); polynomial sandwich "
            "(A2) cannot hold"
        )
    needed = math.exp(max(np.max(log_ratio), -np.min(log_ratio)))
    delta = 1.0 if needed <= 1.0 + 1e-12 else 1.1 * needed
    if delta > MAX_A2_DELTA:
        raise CertificationError(
            f"no delta <= {MAX_A2_DELTA:g} certifies the polynomial sandwich "
            f"on (0, {epsilon}) (needed ~ {needed:.3g})"
        )
    return A2Certificate(epsilon=epsilon, delta=delta, beta=beta)


@dataclass(frozen=True)
class A3Certificate:
    """Numerically verified subfactorial moment growth:
    E(alpha^s) < D * rho^(-s) * Gamma(nu + s + 1) for all s <= s_checked."""

    D: float
    nu: float
    rho: float
    s_checked: int

    def holds(self, prior):
        for s in range(1, self.s_checked + 1):
            bound = (
                math.log(self.D)
                - s * math.log(self.rho)
                + gammaln(self.nu + s + 1)
            )
            if not prior.log_moment(s) < bound:
                return False
        return True


def verify_a3(prior, rho, s_max=50):
    """Search for (D, nu) certifying subfactorial moments at rate rho.

    Uses the closed-form moments of the family; nu is scanned over a small
    grid (including the shape-derived value for the Gamma family, where the
    bound is attained essentially exactly) and D is the smallest constant
    making the inequality strict for every s <= s_max.
    """
    if s_max < 1:
        raise ValueError("s_max must be >= 1")
    if not rho > 0:
        raise ValueError("rho must be > 0")
    s = np.arange(1, s_max + 1)
    log_moments = np.array([prior.log_moment(int(k)) for k in s])

    candidates = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0]
    if isinstance(prior, GammaPrior):
        # the Gamma family matches the bound essentially exactly at nu = shape
        # (or shape - 1, the proof's adjustment)
        if prior.shape > 1:
            candidates.insert(0, prior.shape - 1.0)
        candidates.insert(0, prior.shape)

    best_needed = math.inf
    for nu in sorted(set(candidates)):
        log_d_needed = float(
            np.max(log_moments + s * math.log(rho) - gammaln(nu + s + 1))
        )
        best_needed = min(best_needed, log_d_needed)
        if log_d_needed <= math.log(MAX_A3_D):
            D = math.exp(log_d_needed) * (1.0 + 1e-6)
            return A3Certificate(D=D, nu=nu, rho=rho, s_checked=int(s_max))
    raise CertificationError(
        f"subfactorial-moment certificate fails: moments outgrow "
        f"rho^-s Gamma(nu+s+1) at rate rho={rho:g} "
        f"(best needed D ~ exp({best_needed:.3g}))"
    )


# ---------------------------------------------------------------------------
# explicit finite-n bounds on C(n, t, t+s)
# ---------------------------------------------------------------------------

def _check_log_log_n(n, epsilon):
    v = math.log(n / (1.0 + epsilon))
    if v <= 0:
        raise ValueError(f"log(n/(1+epsilon)) must be positive; got n={n}")
    return v


def prop1_upper_bound(cert, prior, n, t, s, corollary=False):
    """log of the explicit upper bound on C(n, t, t+s).

    Default form (valid for 0 < s <= n - t, n >= 2):

        delta^2 * {1 + E(alpha^(t+s-1)) (t+s+beta) / eps^(t+s+beta)}
        * gamma(t+s+beta, eps log n) / gamma(t+beta, eps log n)
        * log(n/(1+eps))^(-s)

    With ``corollary=True`` (valid for n >= 4) the looser single-log form

        G Gamma(t+beta+1) 2^s s / eps * E(alpha^(t+s-1)) / log(n/(1+eps))

    is returned, with G = 4 delta^2 / (eps^(t+beta) gamma(t+beta, eps log 2)).
    """
    eps, delta, beta = cert.epsilon, cert.delta, cert.beta
    if s < 1:
        raise ValueError("s must be >= 1")
    if corollary:
        if n < 4:
            raise ValueError("corollary form needs n >= 4")
        if s >= n:
            raise ValueError("corollary form needs s < n")
    else:
        if n < 2:
            raise ValueError("n must be >= 2")
        if s > n - t:
            raise ValueError(f"need s <= n - t; got s={s}, t={t}, n={n}")
    log_log = math.log(_check_log_log_n(n, eps))
    log_e = prior.log_moment(t + s - 1)

    if corollary:
        log_g = (
            math.log(4.0)
            + 2 * math.log(delta)
            - (t + beta) * math.log(eps)
            - log_lower_incomplete_gamma(t + beta, eps * math.log(2.0))
        )
        return float(
            log_g
            + gammaln(t + beta + 1)
            + s * math.log(2.0)
            + math.log(s)
            - math.log(eps)
            + log_e
            - log_log
        )

    y = eps * math.log(n)
    log_brace = np.logaddexp(
        0.0, log_e + math.log(t + s + beta) - (t + s + beta) * math.log(eps)
    )
    return float(
        2 * math.log(delta)
        + log_brace
        + log_lower_incomplete_gamma(t + s + beta, y)
        - log_lower_incomplete_gamma(t + beta, y)
        - s * log_log
    )


def lemma_s2_sandwich(cert, prior, n, t, s):
    """(log lower, log upper) bounds for the epsilon-truncated ratio

        int_0^eps alpha^(t+s)/alpha^(n) pi / int_0^eps alpha^t/alpha^(n) pi

    for 1 <= s < n - t.  The truncated ratio itself is computed by
    ``truncated_c_ratio``.
    """
    eps, delta, beta = cert.epsilon, cert.delta, cert.beta
    if not (1 <= s < n - t):
        raise ValueError(f"need 1 <= s < n - t; got s={s}, t={t}, n={n}")
    log_log = math.log(_check_log_log_n(n, eps))
    y_lo = eps * (math.log(n) + 1.0)
    y_hi = eps * math.log(n)
    lower = (
        log_lower_incomplete_gamma(t + s + beta, y_lo)
        - 2 * math.log(delta)
        - log_lower_incomplete_gamma(t + beta, y_lo)
        - s * math.log(math.log(n) + 1.0)
    )
    upper = (
        2 * math.log(delta)
        + log_lower_incomplete_gamma(t + s + beta, y_hi)
        - log_lower_incomplete_gamma(t + beta, y_hi)
        - s * log_log
    )
    return float(lower), float(upper)


def truncated_c_ratio(prior, n, t, s, epsilon, tol=DEFAULT_TOL):
    """log of the epsilon-truncated ratio sandwiched by lemma_s2_sandwich."""
    num = truncated_weight_integral(prior, n, t + s, epsilon, tol)
    den = truncated_weight_integral(prior, n, t, epsilon, tol)
    return num - den


def _log_plain_moment_integral(prior, t, lo, hi, tol):
    """log int alpha^t pi(alpha) d(alpha) over (lo, hi), in u = log alpha."""

    def log_f(u):
        return (t + 1) * u + prior.log_density_from_log(u)

    lo_u = math.log(lo) if lo > 0 else -math.inf
    hi_eff = min(hi, prior.support_upper)
    hi_u = math.log(hi_eff) if math.isfinite(hi_eff) else math.inf
    return _log_integral_u(log_f, lo_u, hi_u, tol)


def lemma_s3_constant(prior, t, epsilon, tol=1e-8, verify_n=1000):
    """Constant M with M int_0^eps alpha^t/alpha^(n) pi >= tail, all n >= 1.

    Constructive recipe: with p = tail/head ratio of the plain t-th moment
    (tail over (eps, inf), head over (0, eps/2)), find m such that
    (eps/2)^(m) < eps^(m) / p; beyond m the head dominates the tail outright,
    and below m the ratio is maximized directly.  The tail/head ratio of the
    weighted integrals is nonincreasing in n (the 1/alpha^(n) weight shifts
    mass toward the origin), so evaluating it on a log-spaced grid of
    {1, ..., m} that includes i = 1 captures the maximum.

    The returned M is checked on a log-spaced n-grid up to ``verify_n``.
    """
    if prior.is_degenerate:
        raise ValueError("lemma_s3_constant needs a non-degenerate prior")
    if not (0 < epsilon):
        raise ValueError("epsilon must be > 0")
    log_tail_moment = _log_plain_moment_integral(prior, t, epsilon, math.inf, tol)
    if log_tail_moment == -math.inf:
        return 1.0  # support inside (0, epsilon]: zero tail
    log_head_moment = _log_plain_moment_integral(prior, t, 0.0, epsilon / 2.0, tol)
    log_p = log_tail_moment - log_head_moment

    def condition(m):
        return (
            log_ascending_factorial(epsilon / 2.0, m)
            < log_ascending_factorial(epsilon, m) - log_p
        )

    m = 1
    while not condition(m):
        m *= 2
        if m > 10**9:
            raise CertificationError("no m found for the head-dominance bound")
    lo, hi = max(1, m // 2), m
    while lo < hi:
        mid = (lo + hi) // 2
        if condition(mid):
            hi = mid
        else:
            lo = mid + 1
    m = lo

    grid = sorted({1, m} | {2**j for j in range(1, 40) if 2**j < m})
    log_ratio_max = -math.inf
    for i in grid:
        log_tail = tail_weight_integral(prior, i, t, epsilon, tol)
        log_head = truncated_weight_integral(prior, i, t, epsilon, tol)
        log_ratio_max = max(log_ratio_max, log_tail - log_head)
    M = max(1.0, math.exp(log_ratio_max) * (1.0 + 1e-6))

    check = sorted({1, 2, 4, 16, 64, 256, verify_n, m} | {min(m, verify_n)})
    for nn in check:
        log_tail = tail_weight_integral(prior, nn, t, epsilon, tol)
        log_head = truncated_weight_integral(prior, nn, t, epsilon, tol)
        if not math.log(M) + log_head >= log_tail - 1e-9:
            raise CertificationError(
                f"head-dominance constant M={M:g} failed verification at n={nn}"
            )
    return M
