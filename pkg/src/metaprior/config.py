"""Flat ``key = value`` run configuration.

Precedence, lowest to highest: built-in defaults, the config file, the
``METAPRIOR_SEED`` environment variable, command-line flags.
"""

import os
from dataclasses import asdict, dataclass, fields, replace

from .acquisition import MCConfig, acquisition_kind
from .bo import BORunConfig
from .errors import ConfigError, MetaPriorError
from .gp import KernelParams
from .nn import mlp_layout
from .reptile import ReptileConfig
from .tasks import Boundary, TaskClassConfig

SEED_ENV = "METAPRIOR_SEED"


def available_cores() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


# keys that affect where and how fast things run, never what is computed
RUNTIME_KEYS = frozenset({
    "workers", "checkpoint_in", "checkpoint_out", "results_out",
    "log_level", "log_every", "checkpoint_every",
})


@dataclass(frozen=True)
class RunConfig:
    # meta-learner
    inner_step: float = 0.02
    inner_batch: int = 5
    inner_iters: int = 8
    outer_step: float = 0.1
    outer_iters: int = 10_000
    meta_batch: int = 10
    model_size: int = 64
    seed: int = 0
    # task class
    sample_radius: float = 4.0
    std_min: float = 0.5
    std_max: float = 2.0
    noise_var: float = 1e-4
    # surrogate and acquisition
    amplitude: float = 1.0
    length_scale: float = 1.0
    gp_noise_var: float = 1e-6
    acquisition: str = "expected_improvement"
    mc_samples: int = 100_000
    # evaluation
    eval_iterations: int = 32
    eval_batch: int = 10
    eval_grid_size: int = 256
    prior_grid_size: int = 1024
    k_max: int = 10
    # runtime
    workers: int = available_cores()
    log_every: int = 100
    checkpoint_every: int = 0
    checkpoint_in: str = ""
    checkpoint_out: str = "metaprior.ckpt"
    results_out: str = "results"
    log_level: str = "INFO"

    def reptile(self) -> ReptileConfig:
        return ReptileConfig(self.inner_step, self.inner_batch, self.inner_iters,
                             self.outer_step, self.outer_iters, self.meta_batch,
                             self.seed).validate()

    def task_class(self) -> TaskClassConfig:
        return TaskClassConfig(Boundary(self.sample_radius), self.std_min,
                               self.std_max, self.noise_var)

    def kernel(self) -> KernelParams:
        # the surrogate's likelihood noise covers the observation noise too
        return KernelParams(self.amplitude, (self.length_scale,),
                            self.gp_noise_var + self.noise_var)

    def bo(self, prior_kind="meta", shots=None) -> BORunConfig:
        return BORunConfig(shots or self.k_max, prior_kind, self.acquisition, self.kernel(),
                           MCConfig(self.mc_samples, self.seed), self.eval_grid_size,
                           self.seed)

    def layout(self):
        return mlp_layout(self.model_size)

    def validate(self) -> "RunConfig":
        try:
            self.reptile()
            self.task_class()
            self.bo()
            self.layout()
        except MetaPriorError as exc:
            raise ConfigError(str(exc)) from exc
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.log_level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ConfigError(f"unknown log_level {self.log_level!r}")
        return self

    def echo(self) -> dict:
        """Resolved configuration minus runtime-only keys."""
        return {k: v for k, v in asdict(self).items() if k not in RUNTIME_KEYS}


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"int": int, "float": float, "str": str, int: int, float: float, str: str}


def coerce(key: str, raw):
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    cast = _CASTS[_TYPES[key]]
    try:
        value = cast(raw)
        if cast is int and isinstance(raw, str):
            value = int(raw.replace("_", ""))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    if key == "acquisition":
        try:
            value = acquisition_kind(value)
        except MetaPriorError as exc:
            raise ConfigError(str(exc)) from exc
    return value


def parse(text: str, source: str = "<string>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        try:
            values[key] = coerce(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from exc
    return values


def load(path=None, overrides=None, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    values = {}
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
        values.update(parse(text, str(path)))
    if environ.get(SEED_ENV):
        values["seed"] = coerce("seed", environ[SEED_ENV])
    for key, raw in (overrides or {}).items():
        if raw is not None:
            values[key] = coerce(key, raw)
    return replace(RunConfig(), **values).validate()


def dumps(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in asdict(cfg).items())
