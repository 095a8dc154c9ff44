"""Reference selection mechanisms used for utility comparisons."""

from __future__ import annotations

import numpy as np

from .dp import Histogram, SelectionResult, geometric_p, sample_geometric


def _check_epsilon(epsilon):
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")


def permute_and_flip(hist: Histogram, epsilon: float,
                     rng: np.random.Generator) -> SelectionResult:
    """Permute-and-flip (McKenna & Sheldon, 2020) with quality q_i = x_i.

    Candidates are visited in uniformly random order and candidate i is
    accepted with probability exp(epsilon (q_i - q*) / 2). The maximum is
    accepted with probability one, so a single pass always terminates.
    """
    _check_epsilon(epsilon)
    q = hist.counts.astype(float)
    accept = np.exp(0.5 * epsilon * (q - q.max()))
    order = rng.permutation(hist.d)
    flips = rng.random(hist.d) < accept[order]
    index = int(order[np.argmax(flips)])
    return SelectionResult(index, hist.error_of(index))


def exponential_mechanism(hist: Histogram, epsilon: float,
                          rng: np.random.Generator) -> SelectionResult:
    """Sample i with probability proportional to exp(epsilon x_i / 2)."""
    _check_epsilon(epsilon)
    logits = 0.5 * epsilon * hist.counts.astype(float)
    weights = np.exp(logits - logits.max())
    index = int(rng.choice(hist.d, p=weights / weights.sum()))
    return SelectionResult(index, hist.error_of(index))


def rr_flip_probability(epsilon: float, d: int) -> float:
    # budget split evenly over the d bits
    return 1.0 / (1.0 + np.exp(epsilon / d))


def rr_debias(noisy_sums, n: int, q: float):
    """Unbiased estimate of the true sums from flipped-bit sums."""
    return (np.asarray(noisy_sums, dtype=float) - n * q) / (1.0 - 2.0 * q)


def randomized_response(input_vectors, epsilon: float,
                        rng: np.random.Generator,
                        counts: np.ndarray | None = None) -> SelectionResult:
    """Bitwise randomized response on every owner's binary vector.

    Each owner flips each bit with probability 1/(1 + e^(epsilon/d)); the
    aggregator debiases the sums and reports their argmax. ``counts`` is the
    true histogram used for the error; it defaults to the column sums.
    """
    _check_epsilon(epsilon)
    x = np.asarray(input_vectors)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("randomized response needs at least one input vector")
    if np.any((x != 0) & (x != 1)):
        raise ValueError("input vectors must be binary")
    n, d = x.shape
    q = rr_flip_probability(epsilon, d)
    flips = rng.random(x.shape) < q
    noisy = np.bitwise_xor(x.astype(np.int8), flips.astype(np.int8)).sum(axis=0)
    index = int(np.argmax(rr_debias(noisy, n, q)))
    true = x.sum(axis=0) if counts is None else np.asarray(counts)
    return SelectionResult(index, int(true.max() - true[index]))


def randomized_response_counts(hist: Histogram, epsilon: float,
                               rng: np.random.Generator) -> SelectionResult:
    """Randomized response driven by the aggregate only.

    For one-hot owners the flipped column sums are distributed as
    Binomial(x_i, 1 - q) + Binomial(n - x_i, q), which is sampled directly
    instead of materialising n x d bits.
    """
    _check_epsilon(epsilon)
    n = int(hist.counts.sum())
    if n == 0:
        raise ValueError("randomized response needs at least one input vector")
    q = rr_flip_probability(epsilon, hist.d)
    kept = rng.binomial(hist.counts, 1.0 - q)
    flipped_on = rng.binomial(n - hist.counts, q)
    index = int(np.argmax(rr_debias(kept + flipped_on, n, q)))
    return SelectionResult(index, hist.error_of(index))


def discrete_laplace(epsilon: float, rng: np.random.Generator, size=None,
                     sensitivity: int = 2):
    """Two-sided geometric noise with P[k] proportional to exp(-epsilon |k| / sensitivity)."""
    _check_epsilon(epsilon)
    p = -np.expm1(-epsilon / sensitivity)
    return sample_geometric(p, rng, size) - sample_geometric(p, rng, size)


def secure_aggregation(hist: Histogram, epsilon: float,
                       rng: np.random.Generator) -> SelectionResult:
    """Argmax of the sum released with per-coordinate discrete Laplace noise."""
    noisy = hist.counts + discrete_laplace(epsilon, rng, size=hist.d)
    index = int(np.argmax(noisy))
    return SelectionResult(index, hist.error_of(index))


def uniform_random(hist_or_d, rng: np.random.Generator) -> SelectionResult:
    if isinstance(hist_or_d, Histogram):
        index = int(rng.integers(hist_or_d.d))
        return SelectionResult(index, hist_or_d.error_of(index))
    d = int(hist_or_d)
    if d < 1:
        raise ValueError("d must be positive")
    return SelectionResult(int(rng.integers(d)), 0)


__all__ = [
    "permute_and_flip",
    "exponential_mechanism",
    "randomized_response",
    "randomized_response_counts",
    "secure_aggregation",
    "discrete_laplace",
    "uniform_random",
    "geometric_p",
]
