"""Batched Reptile: move the initialization toward task-adapted weights.

Every outer iteration samples a meta-batch of tasks, adapts a copy of the
current initialization to each with a few plain SGD steps, and then moves
the initialization a fraction ``outer_step`` of the way toward the average
adapted weights.

Random streams are derived from ``(seed, iteration, task_index)`` so the
candidates of one meta-batch can be computed in any order, in any process,
and still reduce to the same bits.
"""

import multiprocessing
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DivergenceError, NumericError, StructuralError
from .nn import (WeightVector, init_weights, loss_grad_values, mse_loss_grad,
                 validate_layout)
from .tasks import GaussianTask, TaskClassConfig, sample_minibatch, sample_task

# leading entry of every training-time seed sequence; evaluation uses others
TRAIN_STREAM = 0


@dataclass(frozen=True)
class ReptileConfig:
    inner_step: float = 0.02
    inner_batch: int = 5
    inner_iters: int = 8
    outer_step: float = 0.1
    outer_iters: int = 10_000
    meta_batch: int = 10
    seed: int = 0

    def validate(self) -> "ReptileConfig":
        if not (self.inner_step > 0 and self.outer_step > 0):
            raise StructuralError("step sizes must be positive")
        if min(self.inner_batch, self.inner_iters, self.meta_batch) < 1:
            raise StructuralError("inner_batch, inner_iters and meta_batch must be >= 1")
        if self.outer_iters < 0:
            raise StructuralError("outer_iters must be >= 0")
        if self.seed < 0:
            raise StructuralError("seed must be non-negative")
        return self


@dataclass(frozen=True)
class MetaState:
    theta: WeightVector
    iteration: int = 0


def pool_context():
    methods = multiprocessing.get_all_start_methods()
    return multiprocessing.get_context("fork" if "fork" in methods else "spawn")


def task_stream(seed: int, iteration: int, index: int) -> np.random.Generator:
    return np.random.default_rng([TRAIN_STREAM, seed, iteration, index])


def _adapt(theta: WeightVector, task: GaussianTask, task_cfg: TaskClassConfig,
           cfg: ReptileConfig, rng: np.random.Generator):
    """Inner SGD; returns the adapted weights and the mean pre-step loss."""
    if cfg.inner_iters == 0 or cfg.inner_step == 0:
        return theta, float("nan")
    values = theta.values.copy()
    losses = []
    for step in range(cfg.inner_iters):
        batch = sample_minibatch(task, task_cfg, cfg.inner_batch, rng)
        try:
            loss, grad = loss_grad_values(values, theta.layout, batch.xs, batch.ys)
        except NumericError as exc:
            raise DivergenceError(f"inner step {step}: {exc}", iteration=step) from exc
        with np.errstate(over="ignore", invalid="ignore"):
            values -= cfg.inner_step * grad
        if not np.all(np.isfinite(values)):
            raise DivergenceError(f"inner step {step}: non-finite weights", iteration=step)
        losses.append(loss)
    return theta.with_values(values), float(np.mean(losses))


def inner_adapt(theta: WeightVector, task: GaussianTask, task_cfg: TaskClassConfig,
                cfg: ReptileConfig, rng: np.random.Generator) -> WeightVector:
    """Candidate weights after ``inner_iters`` SGD steps on fresh minibatches."""
    return _adapt(theta, task, task_cfg, cfg, rng)[0]


def meta_step(state: MetaState, candidates: Sequence[WeightVector],
              cfg: ReptileConfig) -> MetaState:
    """theta + outer_step * mean(W_i - theta), reduced in candidate order."""
    if not candidates:
        raise StructuralError("meta_step needs at least one candidate")
    theta = state.theta
    total = np.zeros_like(theta.values)
    for w in candidates:
        if w.layout != theta.layout:
            raise StructuralError("candidate layout differs from theta")
        total += w.values - theta.values
    if cfg.outer_step == 1.0:
        # full interpolation lands on the candidate mean without round-off
        new = sum(w.values for w in candidates) / len(candidates)
    else:
        new = theta.values + cfg.outer_step * (total / len(candidates))
    return MetaState(theta.with_values(new), state.iteration + 1)


def _candidate(theta, iteration, index, task_cfg, cfg):
    rng = task_stream(cfg.seed, iteration, index)
    task = sample_task(task_cfg, rng)
    return _adapt(theta, task, task_cfg, cfg, rng)


# process-pool plumbing: workers keep the configs, receive only weights
_WORKER = {}


def _init_worker(layout, task_cfg, cfg):
    _WORKER.update(layout=layout, task_cfg=task_cfg, cfg=cfg)


def _pool_job(args):
    values, iteration, index = args
    theta = WeightVector(values, _WORKER["layout"])
    w, loss = _candidate(theta, iteration, index, _WORKER["task_cfg"], _WORKER["cfg"])
    return w.values, loss


def train(cfg: ReptileConfig, task_cfg: TaskClassConfig, layout,
          workers: int = 1,
          initial: Optional[MetaState] = None,
          progress: Optional[Callable[[dict], None]] = None,
          log_every: int = 100,
          checkpoint: Optional[Callable[[MetaState], None]] = None,
          checkpoint_every: int = 0) -> MetaState:
    """Run Reptile until ``cfg.outer_iters`` iterations have been completed.

    The result depends only on the configs and seed, not on ``workers``.
    ``progress`` receives ``{"iteration", "mean_inner_loss"}`` records.
    """
    cfg.validate()
    layout = validate_layout(layout)
    state = initial or MetaState(init_weights(layout, cfg.seed), 0)
    if state.theta.layout != layout:
        raise StructuralError("initial state layout differs from requested layout")

    pool = None
    if workers > 1:
        pool = pool_context().Pool(workers, initializer=_init_worker, initargs=(layout, task_cfg, cfg))
    try:
        while state.iteration < cfg.outer_iters:
            t = state.iteration
            try:
                if pool is None:
                    results = [_candidate(state.theta, t, i, task_cfg, cfg)
                               for i in range(cfg.meta_batch)]
                else:
                    jobs = [(state.theta.values, t, i) for i in range(cfg.meta_batch)]
                    results = [(state.theta.with_values(v), loss)
                               for v, loss in pool.map(_pool_job, jobs)]
            except DivergenceError as exc:
                raise DivergenceError(f"outer iteration {t}: {exc}", iteration=t) from exc
            state = meta_step(state, [w for w, _ in results], cfg)
            if not state.theta.is_finite():
                raise DivergenceError(f"outer iteration {t}: non-finite theta", iteration=t)

            done = state.iteration
            if progress is not None and (done % max(log_every, 1) == 0 or done == cfg.outer_iters):
                progress({"iteration": done,
                          "mean_inner_loss": float(np.mean([loss for _, loss in results]))})
            if checkpoint is not None and checkpoint_every > 0 and done % checkpoint_every == 0:
                checkpoint(state)
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    return state


def post_adaptation_loss(theta: WeightVector, tasks: Sequence[GaussianTask],
                         task_cfg: TaskClassConfig, cfg: ReptileConfig,
                         seed: int, holdout: int = 64) -> float:
    """Mean held-out loss after inner adaptation, averaged over ``tasks``."""
    losses = []
    for i, task in enumerate(tasks):
        rng = np.random.default_rng([3, seed, i])
        adapted = inner_adapt(theta, task, task_cfg, cfg, rng)
        batch = sample_minibatch(task, task_cfg, holdout, rng)
        losses.append(mse_loss_grad(adapted, batch)[0])
    return float(np.mean(losses))
