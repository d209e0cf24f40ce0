"""Exact Gaussian-process regression with a squared-exponential kernel."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import IllConditionedError, StructuralError

JITTER_START = 1e-10
JITTER_MAX = 1e-4


@dataclass(frozen=True)
class KernelParams:
    amplitude: float = 1.0
    length_scales: tuple = (1.0,)
    noise_var: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "length_scales", tuple(float(l) for l in self.length_scales))
        if not self.amplitude > 0:
            raise StructuralError("kernel amplitude must be positive")
        if len(self.length_scales) != 1 or not all(l > 0 for l in self.length_scales):
            raise StructuralError("expected a single positive length scale for 1-D inputs")
        if self.noise_var < 0:
            raise StructuralError("noise_var must be non-negative")

    @property
    def length_scale(self) -> float:
        return self.length_scales[0]


def kernel(a, b, p: KernelParams):
    """amplitude * exp(-(a - b)^2 / (2 l^2)), broadcasting over a and b."""
    d = (np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) / p.length_scale
    out = p.amplitude * np.exp(-0.5 * d * d)
    return float(out) if np.ndim(out) == 0 else out


def gram(xa, xb, p: KernelParams) -> np.ndarray:
    xa = np.asarray(xa, dtype=np.float64).ravel()
    xb = np.asarray(xb, dtype=np.float64).ravel()
    return kernel(xa[:, None], xb[None, :], p)


@dataclass(frozen=True, eq=False)
class ObservationSet:
    xs: tuple = ()
    ys: tuple = ()

    def __post_init__(self):
        xs = tuple(float(x) for x in self.xs)
        ys = tuple(float(y) for y in self.ys)
        if len(xs) != len(ys):
            raise StructuralError("observation xs and ys differ in length")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    def __len__(self):
        return len(self.xs)

    def augment(self, x: float, y: float) -> "ObservationSet":
        return ObservationSet(self.xs + (x,), self.ys + (y,))

    def best_y(self) -> float:
        """Incumbent minimum; 0 against the zero-mean prior when empty."""
        return min(self.ys) if self.ys else 0.0


@dataclass(frozen=True, eq=False)
class GPPosterior:
    obs: ObservationSet
    params: KernelParams
    chol: tuple = None       # scipy cho_factor output, None for the prior
    alpha: np.ndarray = None  # (K + s I)^-1 y
    jitter: float = 0.0

    def predict_many(self, xs):
        """Posterior mean and (clamped) variance at an array of queries."""
        xs = np.asarray(xs, dtype=np.float64).ravel()
        if self.chol is None:
            return np.zeros_like(xs), np.full_like(xs, self.params.amplitude)
        Ks = gram(self.obs.xs, xs, self.params)  # (n, q)
        mean = Ks.T @ self.alpha
        v = cho_solve(self.chol, Ks, check_finite=False)
        var = self.params.amplitude - np.einsum("ij,ij->j", Ks, v)
        return mean, np.maximum(var, 0.0)


def fit(obs: ObservationSet, p: KernelParams) -> GPPosterior:
    if len(obs) == 0:
        return GPPosterior(obs, p)
    K = gram(obs.xs, obs.xs, p)
    y = np.asarray(obs.ys)
    jitter = JITTER_START * p.amplitude
    while jitter <= JITTER_MAX * p.amplitude * (1 + 1e-9):
        A = K + (p.noise_var + jitter) * np.eye(len(obs))
        try:
            chol = cho_factor(A, lower=True, check_finite=False)
        except LinAlgError:
            jitter *= 10.0
            continue
        alpha = cho_solve(chol, y, check_finite=False)
        return GPPosterior(obs, p, chol, alpha, jitter)
    raise IllConditionedError(
        f"Gram matrix of {len(obs)} points not positive definite up to jitter "
        f"{JITTER_MAX * p.amplitude:g}"
    )


def predict(post: GPPosterior, x: float):
    mean, var = post.predict_many([x])
    return float(mean[0]), float(var[0])
