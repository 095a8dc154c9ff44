"""Shared helpers for the test suite."""

from __future__ import annotations

import math
import threading

import numpy as np
from scipy import stats

from dpselect.argmax import MpcContext
from dpselect.transport import SimNetwork

ALPHA = 0.001


def geometric_pmf(p, support):
    k = np.arange(support)
    return p * (1 - p) ** k


def chi_square_pvalue(samples, pmf_fn, min_expected=5.0):
    """Goodness of fit of integer samples against a pmf on {0, 1, ...}.

    Cells with small expectation are merged into a tail cell.
    """
    samples = np.asarray(samples)
    n = samples.size
    top = int(samples.max()) + 1
    pmf = pmf_fn(top)
    expected = n * pmf
    # last cell with enough mass, everything beyond goes into the tail
    cut = int(np.nonzero(expected >= min_expected)[0].max()) + 1
    observed = np.bincount(np.minimum(samples, cut), minlength=cut + 1)[:cut + 1]
    exp = np.append(expected[:cut], n - expected[:cut].sum())
    if exp[-1] < min_expected:
        observed[-2] += observed[-1]
        exp[-2] += exp[-1]
        observed, exp = observed[:-1], exp[:-1]
    return stats.chisquare(observed, exp).pvalue


def hoeffding_slack(runs: int, confidence: float = 0.999) -> float:
    """Two-sided additive deviation of an empirical frequency at the given confidence."""
    return math.sqrt(math.log(2 / (1 - confidence)) / (2 * runs))


def dp_ratio_ok(p_hat, q_hat, runs, epsilon, confidence=0.999):
    """Check P[o] <= e^eps Q[o] allowing Hoeffding slack on both estimates."""
    s = hoeffding_slack(runs, confidence)
    return p_hat - s <= math.exp(epsilon) * (q_hat + s)


def run_parties(h: int, fn, *args_per_party, timeout=30.0):
    """Run fn(ctx_factory_result...) on h threads over an in-memory network.

    ``fn(i, endpoint)`` is called per party; returns results in id order.
    """
    net = SimNetwork(h, timeout=timeout)
    out, errors = {}, {}

    def body(i):
        try:
            out[i] = fn(i, net.endpoint(i))
        except BaseException as exc:  # noqa: BLE001
            errors[i] = exc
            net.abort_all()

    threads = [threading.Thread(target=body, args=(i,)) for i in range(h)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise next(iter(errors.values()))
    return [out[i] for i in range(h)]


def mpc(h, a, pools, fn):
    """Run fn(ctx, i) for every computing party with a fresh context."""
    def party(i, ep):
        ctx = MpcContext(ep, i, list(range(h)), a, pools[i])
        return fn(ctx, i), ctx
    return run_parties(h, party)
