"""Experiment drivers: turn a validated config into result files.

Every run writes into its own output directory: an echo of the config, one
CSV/JSON pair per grid point where applicable, a plot-ready long-format CSV
(columns n, quantity, value) and a summary.json.  File writes are atomic
(write-temp-then-rename) and CSV bodies are byte-deterministic given the
config and seed; wall-clock metadata lives only in summary.json.
"""

import json
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .checks import run_bound_suite
from .errors import CertificationError, ConfigError, ResourceLimitError
from .gibbs import effective_sample_size, run_chain
from .posterior import (
    BRUTE_FORCE_MAX_N,
    partition_size_log_terms,
    posterior_alpha_cdf,
    posterior_kn_bruteforce,
    posterior_kn_sizeonly,
    ratio_report,
)
from .priors import verify_a3

__all__ = ["run_experiment"]


def _atomic_write(path, write_fn):
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    os.close(fd)
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _json_default(obj):
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(path, doc):
    def w(tmp):
        with open(tmp, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")

    _atomic_write(path, w)


def _write_long_csv(path, rows):
    def w(tmp):
        with open(tmp, "w", newline="") as fh:
            fh.write("n,quantity,value\n")
            for n, quantity, value in rows:
                fh.write(f"{n},{quantity},{value:.17g}\n")

    _atomic_write(path, w)


def _echo_config(cfg):
    doc = dict(cfg.raw)
    doc["out_dir"] = cfg.out_dir
    doc["seed"] = cfg.seed
    doc["tol"] = cfg.tol
    _write_json(os.path.join(cfg.out_dir, "config.json"), doc)


def _grid_map(cfg, worker):
    """Apply worker(grid_index, n) across the n-grid, optionally threaded."""
    items = list(enumerate(cfg.n_grid))
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(lambda it: worker(*it), items))
    return [worker(i, n) for i, n in items]


def _exact_table(cfg, n, x):
    """Exact posterior table: size-only fast path for constant data, brute
    force for small n, resource error otherwise."""
    meta = {"prior": cfg.prior.to_dict(), "model": cfg.model.to_dict(),
            "tol": cfg.tol, "seed": cfg.seed}
    if x.size and np.all(x == x[0]):
        w = cfg.model.size_log_marginals_constant(float(x[0]), n)
        return posterior_kn_sizeonly(
            cfg.prior, w, n, s_max=min(cfg.s_max, n), tol=cfg.tol, metadata=meta
        ), w
    if n <= BRUTE_FORCE_MAX_N:
        return posterior_kn_bruteforce(cfg.model, cfg.prior, x, cfg.tol, metadata=meta), None
    raise ResourceLimitError(
        f"exact posterior for non-constant data needs n <= {BRUTE_FORCE_MAX_N}; "
        f"got n={n} (use the sample command instead)"
    )


def _cmd_exact(cfg):
    long_rows = []

    def worker(i, n):
        x = cfg.load_data(n, i)
        table, _ = _exact_table(cfg, n, x)
        table.to_csv(os.path.join(cfg.out_dir, f"posterior_n{n}.csv"))
        table.to_json(os.path.join(cfg.out_dir, f"posterior_n{n}.json"))
        return n, table

    results = _grid_map(cfg, worker)
    for n, table in results:
        long_rows.append((n, "pr_k_mode", math.exp(np.max(table.log_posterior))))
        long_rows.append((n, "k_mode", table.mode()))
        for s in range(1, min(table.s_max, 8) + 1):
            long_rows.append((n, f"pr_k_{s}", table.posterior(s)))
    _write_long_csv(os.path.join(cfg.out_dir, "results_long.csv"), long_rows)
    return {
        "tables": {str(n): f"posterior_n{n}.csv" for n, _ in results},
        "k_modes": {str(n): t.mode() for n, t in results},
    }


def _cmd_consistency_curve(cfg):
    try:
        a3 = verify_a3(cfg.prior, cfg.rho, cfg.a3_s_max)
    except CertificationError as exc:
        raise CertificationError(
            "consistency-curve refused: the prior fails the subfactorial-moment "
            f"hypothesis (A3) at rho={cfg.rho:g}: {exc}"
        ) from exc
    t = cfg.t

    def worker(i, n):
        x = cfg.load_data(n, i)
        if np.all(x == x[0]) or n <= BRUTE_FORCE_MAX_N:
            table, w = _exact_table(cfg, n, x)
            if w is not None:
                terms = partition_size_log_terms(w, n, table.s_max)
            else:
                from .posterior import brute_force_partition_log_terms

                terms = brute_force_partition_log_terms(cfg.model, x)
            rep = ratio_report(cfg.prior, terms, n, t, cfg.tol)
            pr_t = table.posterior(t)
            sum_ratio = rep.sum_ratio_excl_t
            method = table.method
        else:
            trace = run_chain(
                cfg.model, cfg.prior, x, sweeps=cfg.sweeps, burn_in=cfg.burn_in,
                thin=cfg.thin, seed=cfg.seed, chains=cfg.chains,
            )
            pr_t = trace.pr_k(t)
            if pr_t <= 0.0:
                sum_ratio = math.inf
            else:
                sum_ratio = (1.0 - pr_t) / pr_t
            method = "gibbs"
        return n, pr_t, sum_ratio, method

    results = _grid_map(cfg, worker)
    long_rows = []
    products = []
    for n, pr_t, sum_ratio, method in results:
        product = sum_ratio * math.log(n)
        products.append(product)
        long_rows.append((n, f"pr_k_{t}", pr_t))
        long_rows.append((n, "sum_ratio_excl_t", sum_ratio))
        long_rows.append((n, "sum_ratio_times_log_n", product))
    _write_long_csv(os.path.join(cfg.out_dir, "results_long.csv"), long_rows)
    nonincreasing = all(b <= a + 1e-12 for a, b in zip(products[1:], products[2:]))
    return {
        "reference_t": t,
        "a3_certificate": {"D": a3.D, "nu": a3.nu, "rho": a3.rho},
        "rho_margin_vs_2cp32": cfg.rho / (2.0 * 2.0**1.5 * 2.6123753486854883),
        "pr_t": {str(n): p for n, p, _, _ in results},
        "methods": {str(n): m for n, _, _, m in results},
        "product_nonincreasing_beyond_first": bool(nonincreasing),
    }


def _cmd_alpha_posterior(cfg):
    if cfg.alpha_grid is not None:
        grid = np.asarray(cfg.alpha_grid)
    else:
        hi = cfg.prior.support_upper
        hi = hi if math.isfinite(hi) else math.exp(cfg.prior.log_moment(1)) * 50
        grid = np.geomspace(1e-4, hi, 64)
    grid = np.unique(np.concatenate([grid, np.asarray(cfg.epsilons)]))

    def worker(i, n):
        x = cfg.load_data(n, i)
        table, _ = _exact_table(cfg, n, x)
        cdf = posterior_alpha_cdf(table, cfg.prior, grid, tol=cfg.tol)

        def w(tmp):
            with open(tmp, "w", newline="") as fh:
                fh.write("alpha,cdf\n")
                for a, v in cdf:
                    fh.write(f"{a:.17g},{v:.17g}\n")

        _atomic_write(os.path.join(cfg.out_dir, f"alpha_cdf_n{n}.csv"), w)
        return n, cdf

    results = _grid_map(cfg, worker)
    long_rows = []
    summary_eps = {}
    for n, cdf in results:
        for eps in cfg.epsilons:
            v = float(cdf[np.searchsorted(cdf[:, 0], eps), 1])
            long_rows.append((n, f"pr_alpha_below_{eps:g}", v))
            summary_eps.setdefault(f"{eps:g}", {})[str(n)] = v
    _write_long_csv(os.path.join(cfg.out_dir, "results_long.csv"), long_rows)
    return {"pr_alpha_below": summary_eps}


def _cmd_sample(cfg):
    def worker(i, n):
        x = cfg.load_data(n, i)
        trace = run_chain(
            cfg.model, cfg.prior, x, sweeps=cfg.sweeps, burn_in=cfg.burn_in,
            thin=cfg.thin, seed=cfg.seed, chains=cfg.chains,
        )
        trace.to_csv(os.path.join(cfg.out_dir, f"trace_n{n}.csv"))
        summary = trace.summary(cfg.epsilons)
        if n <= BRUTE_FORCE_MAX_N:
            table = posterior_kn_bruteforce(cfg.model, cfg.prior, x, cfg.tol)
            comparison = {}
            worst = 0.0
            for s in range(1, n + 1):
                p = table.posterior(s)
                if p < 1e-3:
                    continue
                est = trace.pr_k(s)
                ind = (trace.k == s).astype(float)
                ess = effective_sample_size(ind)
                se = math.sqrt(max(p * (1 - p), 1e-12) / ess)
                comparison[str(s)] = {"exact": p, "gibbs": est, "mc_se": se}
                worst = max(worst, abs(est - p) / se)
            summary["exact_comparison"] = comparison
            summary["max_abs_z"] = worst
        _write_json(os.path.join(cfg.out_dir, f"sample_summary_n{n}.json"), summary)
        return n, summary

    results = _grid_map(cfg, worker)
    long_rows = []
    for n, summary in results:
        long_rows.append((n, "k_mean", summary["k_mean"]))
        long_rows.append((n, "k_mode", summary["k_mode"]))
        for eps, v in summary["pr_alpha_below"].items():
            long_rows.append((n, f"pr_alpha_below_{eps}", v))
    _write_long_csv(os.path.join(cfg.out_dir, "results_long.csv"), long_rows)
    return {"k_modes": {str(n): s["k_mode"] for n, s in results}}


def _cmd_verify_bounds(cfg):
    results = run_bound_suite(
        cfg.prior, rho=cfg.rho, seed=cfg.seed, tol=max(cfg.tol, 1e-8),
        mc_reps=cfg.mc_reps, a2_epsilon=cfg.a2_epsilon, a2_delta=cfg.a2_delta,
    )
    lines = [r.line() for r in results]

    def w(tmp):
        with open(tmp, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    _atomic_write(os.path.join(cfg.out_dir, "verify_report.txt"), w)
    for line in lines:
        print(line)
    failed = [r.name for r in results if not r.passed and not r.skipped]
    skipped = [r.name for r in results if r.skipped]
    return {
        "checks": {r.name: {"passed": r.passed, "skipped": r.skipped,
                            "slack": r.slack, "detail": r.detail}
                   for r in results},
        "failed": failed,
        "skipped": skipped,
        "all_passed": not failed and not skipped,
    }


_COMMANDS = {
    "exact": _cmd_exact,
    "sample": _cmd_sample,
    "verify-bounds": _cmd_verify_bounds,
    "consistency-curve": _cmd_consistency_curve,
    "alpha-posterior": _cmd_alpha_posterior,
}


def run_experiment(cfg):
    """Execute the configured command; returns the summary dict.

    Raises ConfigError / ResourceLimitError / CertificationError for the
    corresponding CLI exit codes.
    """
    if not cfg.out_dir:
        raise ConfigError("an output directory is required (config out_dir or --out)")
    os.makedirs(cfg.out_dir, exist_ok=True)
    _echo_config(cfg)
    t0 = time.time()
    body = _COMMANDS[cfg.kind](cfg)
    summary = {
        "kind": cfg.kind,
        "seed": cfg.seed,
        "elapsed_seconds": round(time.time() - t0, 3),
        "written_at_unix": int(time.time()),
        **body,
    }
    _write_json(os.path.join(cfg.out_dir, "summary.json"), summary)
    if cfg.kind == "verify-bounds" and (summary["failed"] or summary["skipped"]):
        raise CertificationError(
            "verification failed: " + ", ".join(summary["failed"] + summary["skipped"])
        )
    return summary
