"""Collapsed (marginal) Gibbs sampler for the mixture partition with an
augmented concentration parameter.

Cluster parameters are never instantiated: every supported kernel model
exposes block marginals, so a datum is reassigned with the collapsed
predictive weights

    existing cluster j:  a_j * m(x_{A_j + i}) / m(x_{A_j})
    new cluster:         alpha * m(x_i)

The concentration parameter is refreshed from its full conditional
pi(alpha) * alpha^K / alpha^(n): exactly via the beta-augmentation draw for
the Gamma family, by random-walk Metropolis on log(alpha) otherwise, and not
at all for a point mass.

Chains use counter-based Philox streams keyed by (seed, chain id), so
parallel chains are reproducible independently of scheduling.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import GaussianConjugate
from .numerics import log_ascending_factorial
from .priors import GammaPrior, PointMassPrior

__all__ = [
    "ChainState",
    "ChainTrace",
    "gibbs_sweep",
    "alpha_update",
    "mh_log_acceptance",
    "run_chain",
    "effective_sample_size",
]


@dataclass
class ChainState:
    """Snapshot of the sampler: cluster labels, current alpha, bookkeeping.

    Labels are compacted to 0..K-1 in order of first appearance, so states
    are comparable across runs.
    """

    labels: np.ndarray
    alpha: float
    iteration: int = 0
    rng_stream: tuple = (0, 0)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("labels must be a nonempty 1-d integer array")
        self.labels = _compact_labels(labels)
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")

    @property
    def n(self):
        return self.labels.size

    @property
    def k(self):
        return int(self.labels.max()) + 1

    @property
    def sizes(self):
        return np.bincount(self.labels)


def _compact_labels(labels):
    order = {}
    out = np.empty_like(labels)
    for i, lab in enumerate(labels):
        if lab not in order:
            order[lab] = len(order)
        out[i] = order[lab]
    return out


def chain_rng(seed, chain_id):
    """Counter-based generator keyed by (seed, chain id)."""
    key = np.array([np.uint64(seed), np.uint64(chain_id)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class _Clusters:
    """Mutable cluster bookkeeping shared by sweep and trace code."""

    def __init__(self, tracker, labels):
        self.tracker = tracker
        self.members = {}
        self.stats = {}
        for i, lab in enumerate(labels):
            lab = int(lab)
            if lab not in self.members:
                self.members[lab] = set()
                self.stats[lab] = tracker.new()
            self.members[lab].add(i)
            self.stats[lab] = tracker.add(self.stats[lab], i)
        self._next_id = max(self.members) + 1 if self.members else 0

    @property
    def k(self):
        return len(self.members)

    def detach(self, i, lab):
        self.members[lab].discard(i)
        if not self.members[lab]:
            del self.members[lab]
            del self.stats[lab]
            return None
        self.stats[lab] = self.tracker.remove(self.stats[lab], i, self.members[lab])
        return lab

    def attach(self, i, lab):
        if lab is None:
            lab = self._next_id
            self._next_id += 1
            self.members[lab] = set()
            self.stats[lab] = self.tracker.new()
        self.members[lab].add(i)
        self.stats[lab] = self.tracker.add(self.stats[lab], i)
        return lab

    def labels_array(self, n):
        out = np.empty(n, dtype=int)
        for lab, mem in self.members.items():
            for i in mem:
                out[i] = lab
        return out


def _sweep_once(clusters, labels, alpha, rng):
    """One full reassignment pass; mutates clusters and labels in place."""
    tracker = clusters.tracker
    log_alpha = math.log(alpha)
    n = labels.size
    for i in range(n):
        old = int(labels[i])
        clusters.detach(i, old)
        ids = list(clusters.members)
        logw = np.empty(len(ids) + 1)
        for j, lab in enumerate(ids):
            stat = clusters.stats[lab]
            a = len(clusters.members[lab])
            logw[j] = (
                math.log(a)
                + tracker.log_marginal(tracker.add(stat, i))
                - tracker.log_marginal(stat)
            )
        logw[-1] = log_alpha + tracker.log_marginal(tracker.add(tracker.new(), i))
        m = np.max(logw)
        if m == -math.inf:
            raise ValueError(
                "every predictive weight is zero: the model cannot explain "
                f"datum {i} in any cluster"
            )
        w = np.exp(logw - m)
        cdf = np.cumsum(w)
        j = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        j = min(j, len(ids))
        new_lab = clusters.attach(i, ids[j] if j < len(ids) else None)
        labels[i] = new_lab


def gibbs_sweep(state, model, prior, x, rng):
    """One full collapsed-CRP sweep; returns the updated state.

    ``rng`` is a numpy Generator; pass a fresh keyed generator for
    reproducibility (see :func:`chain_rng`).
    """
    x = np.asarray(x, dtype=float)
    if x.size != state.n:
        raise ValueError("data length does not match chain state")
    tracker = model.make_tracker(x)
    labels = state.labels.copy()
    clusters = _Clusters(tracker, labels)
    _sweep_once(clusters, labels, state.alpha, rng)
    return ChainState(
        labels=labels,
        alpha=state.alpha,
        iteration=state.iteration + 1,
        rng_stream=state.rng_stream,
    )


def mh_log_acceptance(prior, n, k, alpha_from, alpha_to):
    """log acceptance ratio of the log-scale random-walk move alpha_from ->
    alpha_to targeting pi(alpha) alpha^k / alpha^(n) (Jacobian included)."""

    def log_target(a):
        return prior.log_density(a) + k * math.log(a) - log_ascending_factorial(a, n)

    return (
        log_target(alpha_to)
        - log_target(alpha_from)
        + math.log(alpha_to)
        - math.log(alpha_from)
    )


def _escobar_west_draw(prior, n, k, alpha, rng):
    """Exact full-conditional draw of alpha for a Gamma(shape, rate) prior via
    the beta augmentation eta ~ Beta(alpha + 1, n)."""
    eta = rng.beta(alpha + 1.0, n)
    rate = prior.rate - math.log(eta)
    odds = (prior.shape + k - 1.0) / (n * rate)
    if rng.random() < odds / (1.0 + odds):
        shape = prior.shape + k
    else:
        shape = prior.shape + k - 1.0
    return rng.gamma(shape, 1.0 / rate)


def alpha_update(state, prior, rng, mh_step=1.0):
    """Refresh alpha from its full conditional; returns (state, accepted).

    ``accepted`` is None for the exact (Gamma) and no-op (point mass) paths,
    and a bool for the Metropolis path.
    """
    if isinstance(prior, PointMassPrior):
        return state, None
    n, k = state.n, state.k
    if isinstance(prior, GammaPrior):
        new_alpha = _escobar_west_draw(prior, n, k, state.alpha, rng)
        accepted = None
    else:
        prop = state.alpha * math.exp(mh_step * rng.standard_normal())
        log_r = mh_log_acceptance(prior, n, k, state.alpha, prop)
        accepted = math.log(rng.random()) < log_r
        new_alpha = prop if accepted else state.alpha
    return (
        ChainState(
            labels=state.labels,
            alpha=float(new_alpha),
            iteration=state.iteration,
            rng_stream=state.rng_stream,
        ),
        accepted,
    )


@dataclass
class ChainTrace:
    """Recorded (sweep, K_n, alpha) samples, possibly merged over chains."""

    iterations: np.ndarray
    k: np.ndarray
    alpha: np.ndarray
    chain_ids: np.ndarray
    n: int
    meta: dict = field(default_factory=dict)

    def k_histogram(self):
        counts = np.bincount(self.k)
        return {s: counts[s] / self.k.size for s in range(1, counts.size) if counts[s]}

    def pr_k(self, s):
        return float(np.mean(self.k == s))

    def pr_alpha_below(self, eps):
        return float(np.mean(self.alpha < eps))

    def summary(self, epsilons=(0.1,)):
        hist = self.k_histogram()
        return {
            "n": int(self.n),
            "samples": int(self.k.size),
            "chains": int(len(np.unique(self.chain_ids))),
            "k_mean": float(self.k.mean()),
            "k_mode": int(max(hist, key=hist.get)),
            "k_histogram": {str(s): p for s, p in sorted(hist.items())},
            "k_ess": float(effective_sample_size(self.k)),
            "alpha_mean": float(self.alpha.mean()),
            "pr_alpha_below": {str(e): self.pr_alpha_below(e) for e in epsilons},
            **self.meta,
        }

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("iteration,K_n,alpha\n")
            for it, k, a in zip(self.iterations, self.k, self.alpha):
                fh.write(f"{it},{k},{a:.17g}\n")


def run_chain(
    model,
    prior,
    x,
    sweeps=10**4,
    burn_in=None,
    thin=1,
    seed=0,
    chains=1,
    alpha_init=None,
    mh_step=1.0,
):
    """Run one or more chains and merge the recorded traces.

    Defaults: 20% burn-in, no thinning.  The Metropolis step size (used for
    non-Gamma, non-degenerate priors) is tuned toward ~44% acceptance during
    burn-in only, so the post-burn-in kernel is fixed.
    """
    x = np.asarray(x, dtype=float)
    if burn_in is None:
        burn_in = sweeps // 5
    if not (sweeps > burn_in >= 0):
        raise ValueError("need sweeps > burn_in >= 0")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    if alpha_init is None:
        alpha_init = (
            prior.alpha_star
            if isinstance(prior, PointMassPrior)
            else math.exp(prior.log_moment(1))
        )

    its, ks, alphas, cids = [], [], [], []
    accept_counts = [0, 0]
    for chain_id in range(chains):
        rng = chain_rng(seed, chain_id)
        tracker = model.make_tracker(x)
        labels = np.zeros(x.size, dtype=int)
        clusters = _Clusters(tracker, labels)
        alpha = float(alpha_init)
        step = mh_step
        needs_mh = not isinstance(prior, (GammaPrior, PointMassPrior))
        for sweep in range(sweeps):
            _sweep_once(clusters, labels, alpha, rng)
            state = ChainState(
                labels=labels, alpha=alpha, iteration=sweep, rng_stream=(seed, chain_id)
            )
            state, accepted = alpha_update(state, prior, rng, mh_step=step)
            alpha = state.alpha
            if needs_mh and accepted is not None:
                if sweep < burn_in:
                    step *= math.exp((float(accepted) - 0.44) / math.sqrt(sweep + 1.0))
                else:
                    accept_counts[0] += int(accepted)
                    accept_counts[1] += 1
            if sweep >= burn_in and (sweep - burn_in) % thin == 0:
                its.append(sweep)
                ks.append(len(clusters.members))
                alphas.append(alpha)
                cids.append(chain_id)

    meta = {
        "sweeps": int(sweeps),
        "burn_in": int(burn_in),
        "thin": int(thin),
        "seed": int(seed),
    }
    if accept_counts[1]:
        meta["mh_acceptance"] = accept_counts[0] / accept_counts[1]
    return ChainTrace(
        iterations=np.array(its),
        k=np.array(ks),
        alpha=np.array(alphas),
        chain_ids=np.array(cids),
        n=int(x.size),
        meta=meta,
    )


def effective_sample_size(series):
    """ESS by Geyer's initial monotone positive sequence estimator."""
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    x = x - x.mean()
    var = float(np.dot(x, x) / n)
    if var == 0.0:
        return float(n)
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    pair = acf[: 2 * (n // 2)].reshape(-1, 2).sum(axis=1)
    keep = []
    running = math.inf
    for g in pair:
        if g <= 0:
            break
        running = min(running, g)
        keep.append(running)
    tau = -acf[0] + 2.0 * float(np.sum(keep)) if keep else 1.0
    tau = max(tau, 1.0 / n)
    return float(min(n, n / tau))
