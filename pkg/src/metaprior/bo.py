"""Few-shot Bayesian optimization and the k-shot benchmark harness."""

import json
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .acquisition import EXPECTED_IMPROVEMENT, MCConfig, acquisition_kind, mc_acquire_argmax
from .errors import IllConditionedError, StructuralError
from .gp import GPPosterior, KernelParams, ObservationSet, fit
from .prior import (META, PRIOR_KINDS, STANDARD_NORMAL, UNIFORM, PriorDensity,
                    baseline_prior, from_network)
from .reptile import pool_context
from .tasks import GaussianTask, TaskClassConfig, observe, sample_task, task_density

EVAL_TASK_STREAM = 1
EVAL_RUN_STREAM = 2


@dataclass(frozen=True)
class BORunConfig:
    shots: int = 10
    prior_kind: str = META
    acquisition: str = EXPECTED_IMPROVEMENT
    kernel: KernelParams = field(default_factory=KernelParams)
    mc: MCConfig = field(default_factory=MCConfig)
    eval_grid_size: int = 256
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "acquisition", acquisition_kind(self.acquisition))
        if self.shots < 1:
            raise StructuralError("shots must be >= 1")
        if self.prior_kind not in PRIOR_KINDS:
            raise StructuralError(f"unknown prior kind {self.prior_kind!r}")
        if self.eval_grid_size < 2:
            raise StructuralError("eval_grid_size must be >= 2")


class BOStep(NamedTuple):
    x: float
    y: float
    score: float
    fallback: bool = False


@dataclass(frozen=True, eq=False)
class BOTrace:
    steps: tuple
    mse_history: tuple  # MSE after each step; entry k-1 is the k-shot error
    posterior: GPPosterior

    @property
    def final_mse(self) -> float:
        return self.mse_history[-1]


def posterior_mse(post: GPPosterior, task: GaussianTask, grid) -> float:
    mean, _ = post.predict_many(grid)
    return float(np.mean((mean - task_density(task, grid)) ** 2))


def run_bo(task: GaussianTask, prior: PriorDensity, cfg: BORunConfig,
           task_cfg: TaskClassConfig, rng: np.random.Generator) -> BOTrace:
    """Acquire, observe, augment and refit for ``cfg.shots`` iterations.

    The run consumes ``rng`` identically step by step, so a k-shot run is
    exactly the first k steps of any longer run on the same stream.
    """
    boundary = task_cfg.boundary
    grid = boundary.grid(cfg.eval_grid_size)
    obs = ObservationSet()
    post = fit(obs, cfg.kernel)
    steps, history = [], []
    for step in range(cfg.shots):
        pick = mc_acquire_argmax(post, obs.best_y(), cfg.acquisition, prior,
                                 boundary, cfg.mc, rng)
        y = float(observe(task, pick.x, task_cfg.noise_var, rng)[0])
        obs = obs.augment(pick.x, y)
        try:
            post = fit(obs, cfg.kernel)
        except IllConditionedError as exc:
            raise IllConditionedError(f"BO step {step}: {exc}", step=step) from exc
        steps.append(BOStep(pick.x, y, pick.score, pick.fallback))
        history.append(posterior_mse(post, task, grid))
    return BOTrace(tuple(steps), tuple(history), post)


@dataclass(frozen=True)
class BenchRow:
    k: int
    mse_uniform: float
    mse_meta: Optional[float]
    mse_standard_normal: Optional[float] = None


@dataclass(frozen=True, eq=False)
class BenchResult:
    rows: tuple
    seed: int = 0
    config: dict = field(default_factory=dict)

    def column(self, kind: str) -> np.ndarray:
        return np.array([getattr(r, f"mse_{kind}") for r in self.rows], dtype=float)

    def to_csv(self, header_comments: Sequence[str] = ()) -> str:
        lines = [f"# {c}" for c in header_comments]
        lines.append("k,mse_uniform,mse_meta")
        for r in self.rows:
            lines.append(f"{r.k},{_fmt(r.mse_uniform)},{_fmt(r.mse_meta)}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "config": self.config,
                           "rows": [asdict(r) for r in self.rows]},
                          indent=2, sort_keys=True) + "\n"


def _fmt(v):
    return "" if v is None else repr(float(v))


def eval_task(seed: int, index: int, task_cfg: TaskClassConfig) -> GaussianTask:
    return sample_task(task_cfg, np.random.default_rng([EVAL_TASK_STREAM, seed, index]))


def _cell(args):
    """All priors x repeats on one evaluation task: (n_priors, repeats, k_max)."""
    index, task, priors, cfg, task_cfg, eval_batch = args
    out = np.empty((len(priors), eval_batch, cfg.shots))
    for p, prior in enumerate(priors):
        for j in range(eval_batch):
            # common random numbers across priors
            rng = np.random.default_rng([EVAL_RUN_STREAM, cfg.seed, index, j])
            out[p, j] = run_bo(task, prior, cfg, task_cfg, rng).mse_history
    return out


def evaluate_kshot(meta, cfg: BORunConfig, task_cfg: TaskClassConfig,
                   eval_iterations: int = 32, eval_batch: int = 10,
                   kinds: Sequence[str] = (UNIFORM, META, STANDARD_NORMAL),
                   prior_grid_size: int = 1024, k_max: int = 10,
                   tasks: Optional[Sequence[GaussianTask]] = None,
                   workers: int = 1) -> BenchResult:
    """Mean k-shot posterior MSE per prior kind for k = 1..k_max.

    ``meta`` is a MetaState, or None when only baseline kinds are requested.
    Each of ``eval_iterations`` tasks is optimized ``eval_batch`` times with
    distinct seeds; the k-shot error of a run is read off its prefix.
    """
    if eval_iterations < 1 or eval_batch < 1 or k_max < 1:
        raise StructuralError("eval_iterations, eval_batch and k_max must be >= 1")
    if UNIFORM not in kinds:
        raise StructuralError("the uniform baseline is always evaluated")
    boundary = task_cfg.boundary
    priors = []
    for kind in kinds:
        if kind == META:
            if meta is None:
                raise StructuralError("meta prior requested without a trained state")
            priors.append(from_network(meta.theta, boundary, prior_grid_size))
        else:
            priors.append(baseline_prior(kind, boundary, prior_grid_size))

    if tasks is None:
        tasks = [eval_task(cfg.seed, i, task_cfg) for i in range(eval_iterations)]
    run_cfg = BORunConfig(k_max, cfg.prior_kind, cfg.acquisition, cfg.kernel, cfg.mc,
                          cfg.eval_grid_size, cfg.seed)
    jobs = [(i, t, priors, run_cfg, task_cfg, eval_batch) for i, t in enumerate(tasks)]
    if workers > 1:
        with pool_context().Pool(workers) as pool:
            cells = pool.map(_cell, jobs, chunksize=1)
    else:
        cells = [_cell(job) for job in jobs]
    # (tasks, priors, repeats, k) -> (priors, k)
    means = np.stack(cells).mean(axis=(0, 2))

    by_kind = dict(zip(kinds, means))
    rows = []
    for k in range(1, k_max + 1):
        rows.append(BenchRow(
            k,
            float(by_kind[UNIFORM][k - 1]),
            float(by_kind[META][k - 1]) if META in by_kind else None,
            float(by_kind[STANDARD_NORMAL][k - 1]) if STANDARD_NORMAL in by_kind else None,
        ))
    return BenchResult(tuple(rows), cfg.seed)


def log_mse_trend(ks, mses):
    """Least-squares slope and Pearson r of log(MSE) against k."""
    ks = np.asarray(ks, dtype=float)
    logs = np.log(np.asarray(mses, dtype=float))
    slope = np.polyfit(ks, logs, 1)[0]
    r = np.corrcoef(ks, logs)[0, 1]
    return float(slope), float(r)
