"""Plaintext noisy-argmax machinery: samplers, rounding and the central mechanism."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Histogram:
    """Aggregated counts x = sum of the owners' binary vectors.

    Attributes:
      counts: nonnegative integer count per index, length d.
      n: bound on the number of contributing input vectors. Defaults to the
        total count, which is exact for one-hot contributions.
    """

    counts: np.ndarray
    n: int | None = None

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size < 1:
            raise ValueError("histogram must be a non-empty 1-d vector")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(np.equal(np.mod(counts, 1), 0)):
                raise ValueError("histogram counts must be integers")
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise ValueError("histogram counts must be nonnegative")
        if self.n is None:
            self.n = int(counts.sum())
        if counts.max() > self.n:
            raise ValueError(f"count {counts.max()} exceeds n={self.n}")
        self.counts = counts

    @property
    def d(self) -> int:
        return int(self.counts.size)

    def error_of(self, index: int) -> int:
        return int(self.counts.max() - self.counts[index])


@dataclass(frozen=True)
class DpParams:
    """Parameters of the central mechanism.

    ``p`` and ``gamma`` are derived: p = 1 - exp(-epsilon/2), gamma = 2**c.
    ``delta_round`` is the rounding slack; a single round-half-up division
    has slack 1/2.
    """

    epsilon: float
    c: int = 0
    delta_round: float = 0.5

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.c < 0:
            raise ValueError("truncation bit count must be nonnegative")

    @property
    def p(self) -> float:
        return geometric_p(self.epsilon)

    @property
    def gamma(self) -> int:
        return 1 << self.c


@dataclass
class SelectionResult:
    index: int
    error: int

    def __post_init__(self):
        if self.error < 0:
            raise ValueError("selection error is nonnegative")


@dataclass
class NoiseVector:
    values: np.ndarray
    origin: str = "geometric"
    share_param: float | None = field(default=None)


def geometric_p(epsilon: float) -> float:
    # -expm1 keeps full relative precision for small epsilon.
    return float(-math.expm1(-epsilon / 2.0))


def _check_rng(rng):
    if not isinstance(rng, np.random.Generator):
        raise TypeError("rng must be a numpy Generator")


def sample_geometric(p: float, rng: np.random.Generator, size=None):
    """Draw X with P[X = x] = p (1 - p)**x on x = 0, 1, 2, ...

    Returns an int for ``size=None`` and an int64 array otherwise.
    """
    _check_rng(rng)
    if not (0.0 < p <= 1.0):
        raise ValueError(f"geometric p must lie in (0, 1], got {p}")
    # numpy counts trials (support starts at 1).
    draws = rng.geometric(p, size=size) - 1
    if size is None:
        return int(draws)
    return draws.astype(np.int64)


def sample_negative_binomial(r_param: float, p: float, rng: np.random.Generator,
                             size=None):
    """Draw NB(r_param, p) through the gamma-Poisson mixture.

    Uses the failures-before-success convention of :func:`sample_geometric`,
    so NB(1, p) is Geometric(p) and a sum of m iid NB(1/m, p) draws is
    Geometric(p). Fractional ``r_param`` is supported. ``p = 1`` is accepted
    as the degenerate limit (all mass at 0), which large epsilon produces
    once 1 - exp(-epsilon/2) rounds to 1.0.
    """
    _check_rng(rng)
    if not r_param > 0:
        raise ValueError(f"negative binomial shape must be positive, got {r_param}")
    if not (0.0 < p <= 1.0):
        raise ValueError(f"negative binomial p must lie in (0, 1], got {p}")
    scale = (1.0 - p) / p
    lam = rng.gamma(shape=r_param, scale=scale, size=size) if scale > 0 else (
        0.0 if size is None else np.zeros(size))
    draws = rng.poisson(lam, size=size)
    if size is None:
        return int(draws)
    return np.asarray(draws, dtype=np.int64)


def round_div(value, gamma: int):
    """Round-half-up division by a power of two, floor((value + gamma/2) / gamma).

    Exact on Python ints, int64 arrays and object arrays of ints.
    """
    if gamma < 1 or gamma & (gamma - 1):
        raise ValueError(f"gamma must be a power of two, got {gamma}")
    if gamma == 1:
        return value
    return (value + gamma // 2) // gamma


def noisy_argmax(counts, noise, gamma: int = 1) -> int:
    """Lowest index maximising round_div(counts + noise, gamma)."""
    w = round_div(np.asarray(counts) + np.asarray(noise), gamma)
    return int(np.argmax(w))


def central_noisy_argmax(hist: Histogram, params: DpParams,
                         rng: np.random.Generator) -> SelectionResult:
    """Report-noisy-argmax with one-sided geometric noise and rounding."""
    eta = sample_geometric(params.p, rng, size=hist.d)
    index = noisy_argmax(hist.counts, eta, params.gamma)
    return SelectionResult(index, hist.error_of(index))


def central_noisy_argmax_batch(hist: Histogram, params: DpParams, rng: np.random.Generator,
                               runs: int) -> np.ndarray:
    """Indices chosen by ``runs`` independent runs of :func:`central_noisy_argmax`."""
    eta = sample_geometric(params.p, rng, size=(runs, hist.d))
    return np.argmax(round_div(hist.counts + eta, params.gamma), axis=1)


def geometric_tail(p: float, threshold: float) -> float:
    """P[X > threshold] for X ~ Geometric(p) on {0, 1, ...}."""
    # P[X >= m] = (1-p)^m with m = floor(threshold) + 1
    m = math.floor(threshold) + 1
    if m <= 0:
        return 1.0
    return (1.0 - p) ** m
