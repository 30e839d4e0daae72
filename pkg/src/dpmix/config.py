"""Experiment configuration: a single strict JSON document per run.

Unknown keys are hard errors; silent typos in experiment configs are the main
reproducibility hazard, so nothing is ignored.  Specs for the prior, model
and truth are validated by constructing the actual objects up front.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

from .errors import ConfigError
from .kernels import kernel_model_from_dict, read_data, truth_from_dict
from .priors import prior_from_dict

KINDS = ("exact", "sample", "verify-bounds", "consistency-curve", "alpha-posterior")

_COMMON = {"kind", "prior", "out_dir", "seed", "tol", "threads"}
_ALLOWED = {
    "exact": _COMMON | {"model", "truth", "data_path", "n_grid", "s_max"},
    "sample": _COMMON
    | {"model", "truth", "data_path", "n_grid", "sweeps", "burn_in", "thin",
       "chains", "epsilons"},
    "consistency-curve": _COMMON
    | {"model", "truth", "n_grid", "s_max", "t", "rho", "a3_s_max", "sweeps",
       "burn_in", "thin", "chains"},
    "alpha-posterior": _COMMON
    | {"model", "truth", "n_grid", "s_max", "epsilons", "alpha_grid"},
    "verify-bounds": _COMMON | {"rho", "a2_epsilon", "a2_delta", "mc_reps"},
}
_REQUIRED = {
    "exact": {"model", "n_grid"},
    "sample": {"model", "n_grid"},
    "consistency-curve": {"model", "truth", "n_grid"},
    "alpha-posterior": {"model", "truth", "n_grid"},
    "verify-bounds": set(),
}


@dataclass
class ExperimentConfig:
    kind: str
    prior: object
    out_dir: str
    raw: dict
    model: object = None
    truth: object = None
    data_path: Optional[str] = None
    n_grid: tuple = ()
    s_max: int = 64
    tol: float = 1e-10
    seed: int = 0
    threads: int = 1
    t: Optional[int] = None
    rho: Optional[float] = None
    a3_s_max: int = 50
    epsilons: tuple = (0.1,)
    alpha_grid: Optional[tuple] = None
    sweeps: int = 10**4
    burn_in: Optional[int] = None
    thin: int = 1
    chains: int = 1
    mc_reps: int = 2 * 10**4
    a2_epsilon: Optional[float] = None
    a2_delta: Optional[float] = None

    def load_data(self, n, grid_index):
        """Data for one grid point: file data, or draws from the truth."""
        if self.data_path is not None:
            x = read_data(self.data_path)
            if x.size != n:
                raise ConfigError(
                    f"data file has {x.size} values but grid point asks for n={n}"
                )
            return x
        if self.truth is None:
            raise ConfigError("config needs either a truth spec or a data_path")
        x, _ = self.truth.sample(n, seed=[self.seed, grid_index])
        return x


def _type_check(name, value, types):
    if not isinstance(value, types):
        raise ConfigError(f"config key {name!r} has wrong type: {value!r}")
    return value


def config_from_dict(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"config 'kind' must be one of {KINDS}, got {kind!r}")
    allowed = _ALLOWED[kind]
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys for kind={kind}: {sorted(unknown)}")
    missing = ({"prior", "out_dir"} | _REQUIRED[kind]) - set(doc)
    # out_dir may be supplied on the command line instead
    missing.discard("out_dir")
    if missing:
        raise ConfigError(f"missing config keys for kind={kind}: {sorted(missing)}")

    try:
        prior = prior_from_dict(_type_check("prior", doc["prior"], dict))
    except ValueError as exc:
        raise ConfigError(f"invalid prior spec: {exc}") from exc

    cfg = ExperimentConfig(
        kind=kind, prior=prior, out_dir=doc.get("out_dir", ""), raw=dict(doc)
    )

    if "model" in doc:
        try:
            cfg.model = kernel_model_from_dict(_type_check("model", doc["model"], dict))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid model spec: {exc}") from exc
    if "truth" in doc:
        try:
            cfg.truth = truth_from_dict(_type_check("truth", doc["truth"], dict))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid truth spec: {exc}") from exc
    if "data_path" in doc:
        cfg.data_path = _type_check("data_path", doc["data_path"], str)

    if "n_grid" in doc:
        grid = _type_check("n_grid", doc["n_grid"], list)
        if not grid or any(not isinstance(v, int) or v < 1 for v in grid):
            raise ConfigError("n_grid must be a nonempty list of positive ints")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("n_grid must be strictly increasing")
        cfg.n_grid = tuple(grid)

    for key, types in (
        ("s_max", int), ("seed", int), ("threads", int), ("t", int),
        ("a3_s_max", int), ("sweeps", int), ("thin", int), ("chains", int),
        ("mc_reps", int), ("burn_in", int),
        ("tol", (int, float)), ("rho", (int, float)),
        ("a2_epsilon", (int, float)), ("a2_delta", (int, float)),
    ):
        if key in doc:
            setattr(cfg, key, _type_check(key, doc[key], types))
    for key in ("epsilons", "alpha_grid"):
        if key in doc:
            vals = _type_check(key, doc[key], list)
            if not vals or any(not isinstance(v, (int, float)) or v <= 0 for v in vals):
                raise ConfigError(f"{key} must be a list of positive reals")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ConfigError(f"{key} must be strictly increasing")
            setattr(cfg, key, tuple(float(v) for v in vals))

    _validate_semantics(cfg)
    return cfg


def _validate_semantics(cfg):
    if cfg.tol <= 0:
        raise ConfigError("tol must be > 0")
    if cfg.seed < 0:
        raise ConfigError("seed must be >= 0")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    if cfg.kind == "sample" and cfg.burn_in is not None:
        if not (cfg.sweeps > cfg.burn_in >= 0):
            raise ConfigError("need sweeps > burn_in >= 0")
    if cfg.kind == "consistency-curve":
        if cfg.truth is None:
            raise ConfigError("consistency-curve needs a truth spec")
        if cfg.t is None:
            cfg.t = cfg.truth.t
        if cfg.t != cfg.truth.t:
            raise ConfigError(
                f"reference t={cfg.t} does not match the truth's {cfg.truth.t} components"
            )
        if cfg.truth.t > 1 and not cfg.truth.completely_separated:
            raise ConfigError(
                "consistency-curve with t > 1 requires a completely separated "
                "truth (component gaps must exceed the kernel support width)"
            )
        if cfg.rho is None:
            from .priors import GammaPrior

            if isinstance(cfg.prior, GammaPrior):
                cfg.rho = cfg.prior.rate
            else:
                raise ConfigError(
                    "consistency-curve needs an explicit 'rho' for the "
                    "subfactorial-moment certificate of non-Gamma priors"
                )
    if cfg.kind == "alpha-posterior" and cfg.prior.is_degenerate:
        raise ConfigError(
            "alpha-posterior is undefined for a point-mass prior (no density)"
        )


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(doc)
