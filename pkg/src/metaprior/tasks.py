"""The task class: random Gaussian densities on a symmetric interval."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError
from .nn import Minibatch

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Boundary:
    radius: float = 4.0

    def __post_init__(self):
        if not self.radius > 0:
            raise StructuralError(f"boundary radius must be positive, got {self.radius}")

    @property
    def low(self) -> float:
        return -self.radius

    @property
    def high(self) -> float:
        return self.radius

    @property
    def width(self) -> float:
        return 2.0 * self.radius

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all((x >= self.low) & (x <= self.high)))

    def grid(self, n: int) -> np.ndarray:
        return np.linspace(self.low, self.high, n)


@dataclass(frozen=True)
class GaussianTask:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise StructuralError(f"task std must be positive, got {self.std}")


@dataclass(frozen=True)
class TaskClassConfig:
    boundary: Boundary = field(default_factory=Boundary)
    std_min: float = 0.5
    std_max: float = 2.0
    noise_var: float = 1e-4

    def __post_init__(self):
        if not 0 < self.std_min <= self.std_max:
            raise StructuralError(
                f"need 0 < std_min <= std_max, got {self.std_min}, {self.std_max}"
            )
        if self.noise_var < 0:
            raise StructuralError("noise_var must be non-negative")


def sample_task(cfg: TaskClassConfig, rng: np.random.Generator) -> GaussianTask:
    mean = rng.uniform(cfg.boundary.low, cfg.boundary.high)
    std = rng.uniform(cfg.std_min, cfg.std_max)
    return GaussianTask(float(mean), float(std))


def task_density(task: GaussianTask, x):
    """Gaussian pdf of ``task`` at ``x`` (scalar or array)."""
    z = (np.asarray(x, dtype=np.float64) - task.mean) / task.std
    out = np.exp(-0.5 * z * z) / (task.std * _SQRT_2PI)
    return float(out) if np.ndim(out) == 0 else out


def observe(task: GaussianTask, xs, noise_var: float, rng: np.random.Generator):
    """Noisy evaluations of the task density; exact when ``noise_var`` is 0."""
    ys = np.atleast_1d(task_density(task, xs))
    if noise_var > 0:
        ys = ys + rng.normal(0.0, math.sqrt(noise_var), size=ys.shape)
    return ys


def sample_minibatch(task: GaussianTask, cfg: TaskClassConfig, size: int,
                     rng: np.random.Generator) -> Minibatch:
    if size < 1:
        raise StructuralError(f"minibatch size must be >= 1, got {size}")
    xs = rng.uniform(cfg.boundary.low, cfg.boundary.high, size=size)
    return Minibatch(xs, observe(task, xs, cfg.noise_var, rng))
