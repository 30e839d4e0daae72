"""The bound/identity verification battery behind the verify-bounds command.

Each check returns a :class:`CheckResult` with the measured slack (how far
the inequality or identity is from failing, in its natural units).  A
certification failure of the polynomial-origin sandwich gates the checks
that consume the certificate; those are reported as skipped.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import CertificationError
from .kernels import MixtureTruth, UniformLocation, scaled_range_statistic
from .posterior import (
    brute_force_partition_log_terms,
    composition_power_sum,
    lemma_s6_exhaustive,
    mc_expected_r,
    posterior_kn_bruteforce,
    ratio_report,
)
from .priors import (
    A2Certificate,
    GammaPrior,
    PointMassPrior,
    c_ratio,
    fit_a2_certificate,
    lemma_s2_sandwich,
    lemma_s3_constant,
    prop1_upper_bound,
    truncated_c_ratio,
    verify_a3,
)

__all__ = ["CheckResult", "run_bound_suite"]

BOUND_GRID_N = (100, 10**4, 10**6)
BOUND_GRID_S = (1, 2, 5)


@dataclass
class CheckResult:
    name: str
    passed: bool
    slack: float
    detail: str = ""
    skipped: bool = False

    def line(self):
        status = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name} slack={self.slack:.6g}{extra}"


def _a2_check(prior, epsilon, delta):
    if epsilon is not None and delta is not None:
        cert = A2Certificate(epsilon=float(epsilon), delta=float(delta),
                             beta=prior.origin_exponent)
        ok = cert.holds_on_grid(prior)
        return cert, CheckResult(
            "a2-certificate", ok, cert.delta,
            detail=f"user-supplied eps={cert.epsilon:g}, delta={cert.delta:g}"
            + ("" if ok else "; sandwich violated on grid"),
        )
    cert = fit_a2_certificate(prior, epsilon)
    return cert, CheckResult(
        "a2-certificate", True, cert.delta,
        detail=f"eps={cert.epsilon:g}, delta={cert.delta:g}, beta={cert.beta:g}",
    )


def _prop1_check(cert, prior, tol):
    worst = math.inf
    where = None
    for n in BOUND_GRID_N:
        for s in BOUND_GRID_S:
            log_c = c_ratio(prior, n, 1, 1 + s, tol)
            for flag in (False, True):
                ub = prop1_upper_bound(cert, prior, n, 1, s, corollary=flag)
                slack = ub - log_c
                if slack < worst:
                    worst, where = slack, (n, s, "corollary" if flag else "explicit")
    return CheckResult(
        "prop1-upper-bound", worst >= 0, worst,
        detail=f"min log-slack at n={where[0]}, s={where[1]} ({where[2]})",
    )


def _sandwich_check(cert, prior, tol):
    worst = math.inf
    where = None
    for n in BOUND_GRID_N:
        for s in BOUND_GRID_S:
            lo, up = lemma_s2_sandwich(cert, prior, n, 1, s)
            tr = truncated_c_ratio(prior, n, 1, s, cert.epsilon, tol)
            slack = min(tr - lo, up - tr)
            if slack < worst:
                worst, where = slack, (n, s)
    return CheckResult(
        "lemma-s2-sandwich", worst >= 0, worst,
        detail=f"min log-slack at n={where[0]}, s={where[1]}",
    )


def _s3_check(prior, cert, tol):
    M = lemma_s3_constant(prior, 1, cert.epsilon, tol=max(tol, 1e-8))
    return CheckResult(
        "lemma-s3-head-dominance", True, M, detail=f"M={M:g} verified on n-grid"
    )


def _s6_check():
    report = lemma_s6_exhaustive(20, 6, (1.5, 2.0))
    spot = composition_power_sum(3, 2, 2.0)
    spot_ok = abs(spot - 4.5) < 1e-12
    return CheckResult(
        "lemma-s6-composition-bound",
        report.all_strict and spot_ok,
        report.worst_abs_slack,
        detail=str(report) + f"; spot sum(3,2,p=2)={spot:g}",
    )


def _identity_check(seed, mc_reps):
    truth = MixtureTruth((1.0,), (0.0,), "uniform", c=1.0)
    model = UniformLocation(0.0, 1.0)
    res = mc_expected_r(model, truth, n=6, s=2, mc_reps=mc_reps, seed=seed)
    z = abs(res.diff) / max(res.diff_se, 1e-300)
    return CheckResult(
        "exchangeability-identity", res.consistent(3.0), 3.0 - z,
        detail=f"lhs={res.lhs:.6f} rhs={res.rhs:.6f} |z|={z:.2f}",
    )


def _beta_range_check(seed):
    model = UniformLocation(0.0, 1.0)
    truth = MixtureTruth((1.0,), (0.0,), "uniform", c=1.0)
    worst_p = 1.0
    for j, a in enumerate((3, 10, 50)):
        x, _ = truth.sample(a * 10**4, seed=[seed, 97 + j])
        blocks = x.reshape(10**4, a)
        samples = np.array([scaled_range_statistic(model, b) for b in blocks])
        p = stats.kstest(samples, stats.beta(2, a - 1).cdf).pvalue
        worst_p = min(worst_p, p)
    return CheckResult(
        "beta-range-law", worst_p > 0.01, worst_p - 0.01,
        detail=f"min KS p-value {worst_p:.4f} over a in (3, 10, 50)",
    )


def _ratio_identity_check(prior, seed, tol):
    truth = MixtureTruth((1.0,), (0.0,), "uniform", c=1.0)
    model = UniformLocation(0.0, 1.0)
    x, _ = truth.sample(8, seed=[seed, 11])
    table = posterior_kn_bruteforce(model, prior, x, tol)
    terms = brute_force_partition_log_terms(model, x)
    worst = 0.0
    for t in (1, 2, 3):
        rep = ratio_report(prior, terms, 8, t, tol)
        for s in range(1, 9):
            direct = table.log_ratio(t, s)
            worst = max(worst, abs(rep.log_ratio[s - 1] - direct))
    return CheckResult(
        "ratio-decomposition-identity", worst <= 1e-8, 1e-8 - worst,
        detail=f"max |log C + log R - direct| = {worst:.3g}",
    )


def _pointmass_check():
    pm = PointMassPrior(1.7)
    worst = 0.0
    for n in (10, 10**3, 10**5):
        for t, s in ((1, 3), (2, 2), (4, 1)):
            got = c_ratio(pm, n, t, s)
            want = (s - t) * math.log(1.7)
            worst = max(worst, abs(got - want))
    return CheckResult(
        "pointmass-exactness", worst <= 1e-14, 1e-14 - worst,
        detail=f"max deviation {worst:.3g}",
    )


def run_bound_suite(prior, rho=None, seed=0, tol=1e-8, mc_reps=2 * 10**4,
                    a2_epsilon=None, a2_delta=None):
    """Run every check; returns a list of CheckResult.

    A failed or impossible polynomial-origin certificate reports the failure
    and skips the checks that depend on it.
    """
    results = []
    cert = None
    if prior.is_degenerate:
        results.append(CheckResult(
            "a2-certificate", False, 0.0,
            detail="point-mass prior violates absolute continuity",
        ))
    else:
        try:
            cert, res = _a2_check(prior, a2_epsilon, a2_delta)
            results.append(res)
            if not res.passed:
                cert = None
        except CertificationError as exc:
            results.append(CheckResult("a2-certificate", False, 0.0, detail=str(exc)))

    if rho is None:
        rho = prior.rate if isinstance(prior, GammaPrior) else 1.0
    try:
        a3 = verify_a3(prior, rho)
        results.append(CheckResult(
            "a3-certificate", True, a3.D,
            detail=f"D={a3.D:.4g}, nu={a3.nu:g}, rho={rho:g}, s<= {a3.s_checked}",
        ))
    except CertificationError as exc:
        results.append(CheckResult("a3-certificate", False, 0.0, detail=str(exc)))

    for name, fn in (
        ("prop1-upper-bound", _prop1_check),
        ("lemma-s2-sandwich", _sandwich_check),
    ):
        if cert is None or prior.is_degenerate:
            results.append(CheckResult(
                name, False, 0.0, detail="skipped: no valid certificate", skipped=True
            ))
        else:
            results.append(fn(cert, prior, tol))
    if cert is None or prior.is_degenerate:
        results.append(CheckResult(
            "lemma-s3-head-dominance", False, 0.0,
            detail="skipped: no valid certificate", skipped=True,
        ))
    else:
        results.append(_s3_check(prior, cert, tol))

    results.append(_s6_check())
    results.append(_identity_check(seed, mc_reps))
    results.append(_beta_range_check(seed))
    results.append(_ratio_identity_check(prior, seed, max(tol, 1e-10)))
    results.append(_pointmass_check())
    return results
