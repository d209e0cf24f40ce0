"""Acquisition functions and the prior-weighted Monte-Carlo argmax.

Improvement is measured as a decrease below the incumbent minimum
observation, so both acquisitions favour points whose posterior mean is
low relative to their uncertainty.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import erfc

from .errors import StructuralError

PROBABILITY_OF_IMPROVEMENT = "probability_of_improvement"
EXPECTED_IMPROVEMENT = "expected_improvement"
KINDS = (PROBABILITY_OF_IMPROVEMENT, EXPECTED_IMPROVEMENT)
_ALIASES = {"pi": PROBABILITY_OF_IMPROVEMENT, "ei": EXPECTED_IMPROVEMENT}

SIGMA_FLOOR = 1e-9
LARGE = 1e12

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def acquisition_kind(name: str) -> str:
    kind = _ALIASES.get(name, name)
    if kind not in KINDS:
        raise StructuralError(f"unknown acquisition {name!r}")
    return kind


@dataclass(frozen=True)
class MCConfig:
    sample_count: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.sample_count < 1:
            raise StructuralError("sample_count must be >= 1")


class Acquisition(NamedTuple):
    x: float
    score: float
    fallback: bool = False


def std_normal_cdf(z):
    """Phi(z) = erfc(-z / sqrt 2) / 2.

    The complementary error function keeps full relative precision in the
    lower tail, where ``1 + erf`` would cancel.
    """
    out = 0.5 * erfc(-np.asarray(z, dtype=np.float64) * _INV_SQRT2)
    return float(out) if np.ndim(out) == 0 else out


def std_normal_pdf(z):
    z = np.asarray(z, dtype=np.float64)
    out = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    return float(out) if np.ndim(out) == 0 else out


def improvement_scores(mean, var, best_y):
    """Vectorised (best_y - mean) / sigma with the sigma-floor substitution."""
    mean = np.asarray(mean, dtype=np.float64)
    sigma = np.sqrt(np.maximum(np.asarray(var, dtype=np.float64), 0.0))
    gap = best_y - mean
    safe = sigma >= SIGMA_FLOOR
    gamma = np.where(safe, gap / np.where(safe, sigma, 1.0), np.where(gap > 0, LARGE, -LARGE))
    return gamma, sigma


def improvement_score(x, post, best_y) -> float:
    mean, var = post.predict_many([x])
    return float(improvement_scores(mean, var, best_y)[0][0])


def acquisition_values(mean, var, best_y, kind=EXPECTED_IMPROVEMENT):
    gamma, sigma = improvement_scores(mean, var, best_y)
    if kind == PROBABILITY_OF_IMPROVEMENT:
        return std_normal_cdf(gamma)
    if kind == EXPECTED_IMPROVEMENT:
        safe = sigma >= SIGMA_FLOOR
        g = np.where(safe, gamma, 0.0)
        ei = sigma * (g * std_normal_cdf(g) + std_normal_pdf(g))
        # the closed form can dip a few ulps below zero deep in the lower tail
        return np.where(safe, np.maximum(ei, 0.0), 0.0)
    raise StructuralError(f"unknown acquisition {kind!r}")


def acquire(x, post, best_y, kind=EXPECTED_IMPROVEMENT) -> float:
    mean, var = post.predict_many([x])
    return float(acquisition_values(mean, var, best_y, kind)[0])


def weighted_argmax(candidates, scores):
    """Index of the best score; ties go to the smallest candidate."""
    candidates = np.asarray(candidates)
    scores = np.asarray(scores)
    best = scores.max()
    tied = np.flatnonzero(scores == best)
    return int(tied[np.argmin(candidates[tied])])


def mc_acquire_argmax(post, best_y, kind, prior, boundary, mc: MCConfig,
                      rng: np.random.Generator) -> Acquisition:
    """Score uniform candidates by acquisition times prior density.

    Falls back to the prior mode when every candidate scores zero.
    """
    if prior.grid[0] != boundary.low or prior.grid[-1] != boundary.high:
        raise StructuralError("prior grid does not span the boundary")
    candidates = rng.uniform(boundary.low, boundary.high, size=mc.sample_count)
    mean, var = post.predict_many(candidates)
    scores = acquisition_values(mean, var, best_y, kind) * prior.pdf(candidates)
    i = weighted_argmax(candidates, scores)
    if scores[i] <= 0:
        return Acquisition(prior.mode, 0.0, True)
    return Acquisition(float(candidates[i]), float(scores[i]), False)
