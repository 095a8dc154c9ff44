"""Benchmark harness: histogram ingestion, synthetic data, utility and cost sweeps, CSV output."""

from __future__ import annotations

import csv
import io
import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import discrete_laplace, rr_debias, rr_flip_probability
from .config import ConfigError, ProtocolConfig
from .dp import DpParams, Histogram, central_noisy_argmax_batch
from .ideal import ideal_functionality
from .protocol import run_protocol

log = logging.getLogger(__name__)

MECHANISMS = (
    "ours-central",
    "ours-ideal-functionality",
    "permute-and-flip",
    "exponential",
    "randomized-response",
    "secure-agg",
    "uniform",
)

UTILITY_HEADER = ("dataset", "mechanism", "epsilon", "mean_error", "std_error", "runs")
COST_HEADER = ("d", "a", "online_bytes", "offline_bytes", "rounds", "wall_seconds")

# rows per vectorised chunk inside a sweep cell
CHUNK = 2000


class HistogramFormatError(ValueError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.lineno = lineno


def load_histogram(path) -> Histogram:
    """Read ``index,count`` rows; indices must be 0..d-1 in order, header optional."""
    path = Path(path)
    counts = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if lineno == 1 and [c.strip().lower() for c in row] == ["index", "count"]:
                continue
            if len(row) != 2:
                raise HistogramFormatError(path, lineno, f"expected 2 fields, got {len(row)}")
            try:
                index, count = int(row[0]), int(row[1])
            except ValueError:
                raise HistogramFormatError(path, lineno, f"cannot parse {row!r}") from None
            if count < 0:
                raise HistogramFormatError(path, lineno, f"negative count {count}")
            if index < len(counts):
                raise HistogramFormatError(path, lineno, f"duplicate index {index}")
            if index > len(counts):
                raise HistogramFormatError(path, lineno, f"missing index {len(counts)}")
            counts.append(count)
    if not counts:
        raise HistogramFormatError(path, 0, "no histogram rows")
    return Histogram(np.array(counts, dtype=np.int64))


def write_histogram(hist: Histogram, path):
    with open(path, "w", newline="") as fh:
        fh.write("index,count\n")
        for i, c in enumerate(hist.counts):
            fh.write(f"{i},{int(c)}\n")


def bits_required(max_value: int) -> int:
    if max_value < 0:
        raise ValueError("max_value must be nonnegative")
    return max(1, int(max_value).bit_length())


def discretize(raw, d: int) -> Histogram:
    """Sum contiguous equal-width ranges into d bins; leftover bins go to the last bin."""
    raw = np.asarray(raw, dtype=np.int64)
    if raw.ndim != 1 or raw.size == 0:
        raise ValueError("cannot discretize an empty histogram")
    if d < 1:
        raise ValueError("d must be at least 1")
    if raw.size < d:
        raise ValueError(f"cannot spread {raw.size} bins over d={d}")
    width = raw.size // d
    out = raw[:width * d].reshape(d, width).sum(axis=1)
    out[-1] += raw[width * d:].sum()
    return Histogram(out)


def trunc_bits_for_alpha(alpha: float, max_count: int, h: int = 2) -> int:
    """Truncation bits whose rounding error h * 2**c stays within alpha * max_count."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    budget = alpha * max_count / h
    return max(0, math.floor(math.log2(budget))) if budget >= 1 else 0


# Synthetic data

def hepth_like(rng: np.random.Generator, d: int = 1024, top: int = 1571, gap: int = 91,
               alpha: float = 0.145) -> Histogram:
    """Heavy-tailed histogram shaped like the HEPTH benchmark.

    One maximum ``top`` and a power-law body ``(top - gap) * rank**-alpha``
    whose head is the runner-up, placed at random positions.
    """
    rank = np.arange(1, d, dtype=float)
    body = np.floor((top - gap) * rank ** -alpha).astype(np.int64)
    counts = np.concatenate([[top], body])
    return Histogram(counts[rng.permutation(d)])


def uniform_clients(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """n random binary client vectors."""
    return rng.integers(0, 2, size=(n, d), dtype=np.int64)


def one_hot_clients(hist: Histogram) -> np.ndarray:
    """One one-hot client vector per unit of count."""
    idx = np.repeat(np.arange(hist.d), hist.counts)
    out = np.zeros((idx.size, hist.d), dtype=np.int64)
    out[np.arange(idx.size), idx] = 1
    return out


def synthetic_dataset(spec: str, seed: int, d: int = 1024) -> Histogram:
    """``hepth`` or ``uniform:<n>`` (a sum of n random binary vectors)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(99,)))
    if spec == "hepth":
        return hepth_like(rng, d=d)
    if spec.startswith("uniform:"):
        n = int(spec.split(":", 1)[1])
        x = uniform_clients(rng, n, d)
        return Histogram(x.sum(axis=0), n=n)
    raise ValueError(f"unknown synthetic dataset {spec!r}")


# Batched mechanisms: each returns `runs` selected indices.

def _chunks(runs):
    for start in range(0, runs, CHUNK):
        yield min(CHUNK, runs - start)


def _ours_central(hist, eps, rng, runs, bc):
    params = DpParams(eps, bc.trunc_bits)
    return np.concatenate([central_noisy_argmax_batch(hist, params, rng, m)
                           for m in _chunks(runs)])


def _ours_cfg(hist, eps, bc):
    return ProtocolConfig(epsilon=eps, trunc_bits=bc.trunc_bits, servers=bc.servers,
                          dims=hist.d, clients=max(hist.n, 1))


def _ours_ideal(hist, eps, rng, runs, bc):
    cfg = _ours_cfg(hist, eps, bc)
    out = []
    for m in _chunks(runs):
        idx, _ = ideal_functionality(hist, cfg, rng, batch=m)
        out.append(np.atleast_1d(idx))
    return np.concatenate(out)


def _ours_protocol(hist, eps, rng, runs, bc):
    cfg = _ours_cfg(hist, eps, bc)
    clients = one_hot_clients(hist)
    seed = int(rng.integers(1 << 62))
    out = []
    for i, m in enumerate(_chunks(runs)):
        res = run_protocol(clients, cfg.replace(clients=clients.shape[0]), seed=seed + i, batch=m)
        out.append(np.atleast_1d(res.index))
    return np.concatenate(out)


def _permute_and_flip(hist, eps, rng, runs, bc):
    q = hist.counts.astype(float)
    accept = np.exp(0.5 * eps * (q - q.max()))
    out = []
    for m in _chunks(runs):
        order = np.argsort(rng.random((m, hist.d)), axis=1)
        flips = rng.random((m, hist.d)) < accept[order]
        out.append(order[np.arange(m), np.argmax(flips, axis=1)])
    return np.concatenate(out)


def _exponential(hist, eps, rng, runs, bc):
    logits = 0.5 * eps * hist.counts.astype(float)
    w = np.exp(logits - logits.max())
    return rng.choice(hist.d, size=runs, p=w / w.sum())


def _randomized_response(hist, eps, rng, runs, bc):
    n = int(hist.counts.sum())
    if n == 0:
        raise ValueError("randomized response needs at least one input vector")
    q = rr_flip_probability(eps, hist.d)
    out = []
    for m in _chunks(runs):
        shape = (m, hist.d)
        noisy = rng.binomial(np.broadcast_to(hist.counts, shape), 1.0 - q) + \
            rng.binomial(np.broadcast_to(n - hist.counts, shape), q)
        out.append(np.argmax(rr_debias(noisy, n, q), axis=1))
    return np.concatenate(out)


def _secure_agg(hist, eps, rng, runs, bc):
    out = []
    for m in _chunks(runs):
        noisy = hist.counts + discrete_laplace(eps, rng, size=(m, hist.d))
        out.append(np.argmax(noisy, axis=1))
    return np.concatenate(out)


def _uniform(hist, eps, rng, runs, bc):
    return rng.integers(0, hist.d, size=runs)


_IMPLS = {
    "ours-central": _ours_central,
    "ours-ideal-functionality": _ours_ideal,
    "permute-and-flip": _permute_and_flip,
    "exponential": _exponential,
    "randomized-response": _randomized_response,
    "secure-agg": _secure_agg,
    "uniform": _uniform,
}


@dataclass
class BenchConfig:
    dataset: str = "synthetic:hepth"
    d: int = 1024
    epsilons: list[float] = field(default_factory=lambda: [0.02, 0.04, 0.06, 0.08, 0.10,
                                                           0.12, 0.14, 0.16, 0.18, 0.20])
    runs: int = 1000
    alpha: float | None = None
    mechanisms: list[str] = field(default_factory=lambda: list(MECHANISMS))
    seed: int = 0
    trunc_bits: int = 0
    servers: int = 3
    full_protocol: bool = False

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if not self.epsilons:
            raise ValueError("epsilon grid is empty")
        if any(not e > 0 for e in self.epsilons):
            raise ValueError("epsilons must be positive")
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        unknown = [m for m in self.mechanisms if m not in MECHANISMS]
        if unknown:
            raise ValueError(f"unknown mechanism(s): {', '.join(unknown)}")
        if not self.mechanisms:
            raise ValueError("no mechanisms selected")

    @property
    def dataset_name(self) -> str:
        if self.dataset.startswith("synthetic:"):
            return self.dataset.split(":", 1)[1]
        return Path(self.dataset).stem


def load_dataset(bc: BenchConfig) -> Histogram:
    if bc.dataset.startswith("synthetic:"):
        return synthetic_dataset(bc.dataset.split(":", 1)[1], bc.seed, bc.d)
    hist = load_histogram(bc.dataset)
    return hist if hist.d == bc.d else discretize(hist.counts, bc.d)


@dataclass
class UtilityRow:
    dataset: str
    mechanism: str
    epsilon: float
    mean_error: float
    std_error: float
    runs: int


@dataclass
class CostRow:
    d: int
    a: int
    online_bytes: int
    offline_bytes: int
    rounds: int
    wall_seconds: float


def _sig6(x: float) -> float:
    return float(f"{x:.6g}")


def cell_rng(seed: int, mechanism: str, epsilon: float) -> np.random.Generator:
    """Stream for one (mechanism, epsilon) cell, independent of sweep order."""
    key = (zlib.crc32(mechanism.encode()), int(round(epsilon * 1e9)))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def selection_errors(hist: Histogram, mechanism: str, epsilon: float, runs: int,
                     rng: np.random.Generator, bc: BenchConfig | None = None) -> np.ndarray:
    """Errors max(x) - x[chosen] of ``runs`` independent runs of one mechanism."""
    if mechanism not in _IMPLS:
        raise ValueError(f"unknown mechanism {mechanism!r}")
    bc = bc or BenchConfig()
    impl = _IMPLS[mechanism]
    if mechanism == "ours-ideal-functionality" and bc.full_protocol:
        impl = _ours_protocol
    idx = np.asarray(impl(hist, epsilon, rng, runs, bc))
    return hist.counts.max() - hist.counts[idx]


def run_utility_sweep(bc: BenchConfig, hist: Histogram | None = None) -> list[UtilityRow]:
    hist = load_dataset(bc) if hist is None else hist
    if bc.alpha is not None:
        bc.trunc_bits = trunc_bits_for_alpha(bc.alpha, int(hist.counts.max()),
                                              bc.servers - (bc.servers - 1) // 2)
    rows = []
    for mech in sorted(bc.mechanisms):
        for eps in sorted(bc.epsilons):
            err = selection_errors(hist, mech, eps, bc.runs, cell_rng(bc.seed, mech, eps), bc)
            rows.append(UtilityRow(bc.dataset_name, mech, eps, _sig6(err.mean()),
                                   _sig6(err.std()), bc.runs))
    return rows


# Cost sweep

def fit_ring(a: int, d: int, *, servers: int = 3, clients: int = 8, epsilon: float = 1.0,
             seed: int = 0) -> ProtocolConfig:
    """Smallest truncation that lets the aggregate fit a ring of exactly ``a`` bits."""
    for c in range(0, 64):
        try:
            return ProtocolConfig(epsilon=epsilon, trunc_bits=c, servers=servers, dims=d,
                                  clients=clients, ring_bits=a, seed=seed)
        except ConfigError:
            continue
    raise ConfigError(f"no truncation fits a {a}-bit ring")


@dataclass
class CostSweep:
    rows: list[CostRow]
    failures: list[tuple[int, int, str]]


def run_cost_sweep(d_grid, a_grid, *, servers: int = 3, clients: int = 8, epsilon: float = 1.0,
                   seed: int = 0, transport: str = "sim", timeout: float = 600.0) -> CostSweep:
    """Run the full protocol on random binary clients at every (d, a) point.

    A failing point is logged and recorded in ``failures``; the sweep goes on.
    """
    if not list(d_grid) or not list(a_grid):
        raise ValueError("cost grids must be non-empty")
    rows, failures = [], []
    for d in d_grid:
        for a in a_grid:
            try:
                cfg = fit_ring(a, d, servers=servers, clients=clients, epsilon=epsilon, seed=seed)
                rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(d, a)))
                x = uniform_clients(rng, clients, d)
                res = run_protocol(x, cfg, transport=transport, timeout=timeout)
            except (MemoryError, ConfigError, RuntimeError, OSError) as exc:
                log.warning("cost point d=%d a=%d failed: %s", d, a, exc)
                failures.append((d, a, f"{type(exc).__name__}: {exc}"))
                continue
            wall = _sig6(res.wall_seconds) if transport == "tcp" else 0.0
            rows.append(CostRow(d, a, res.stats.online_bytes, res.stats.offline_bytes,
                                res.stats.online_rounds, wall))
    return CostSweep(rows, failures)


def fit_rounds_model(points):
    """Least-squares c1, c2 for rounds = c1 log2(d) (log2(a) + c2).

    ``points`` are (d, a, rounds); returns (c1, c2, worst relative deviation).
    """
    L = np.array([math.log2(d) for d, _, _ in points])
    A = np.array([math.log2(a) for _, a, _ in points])
    R = np.array([r for _, _, r in points], dtype=float)
    design = np.column_stack([L * A, L])
    (c1, c1c2), *_ = np.linalg.lstsq(design, R, rcond=None)
    pred = design @ np.array([c1, c1c2])
    return float(c1), float(c1c2 / c1), float(np.max(np.abs(pred - R) / R))


# CSV

def _format(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}"
    return str(value)


def emit_plotdata(rows, path, kind: str | None = None):
    """Write utility or cost rows as CSV with a fixed header; floats at 6 significant digits."""
    if kind is None:
        kind = "cost" if rows and isinstance(rows[0], CostRow) else "utility"
    header = UTILITY_HEADER if kind == "utility" else COST_HEADER
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_format(getattr(row, col)) for col in header) + "\n")
    Path(path).write_text(buf.getvalue())


def read_plotdata(path):
    """Parse a file written by :func:`emit_plotdata` back into rows."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header == UTILITY_HEADER:
            return [UtilityRow(r[0], r[1], float(r[2]), float(r[3]), float(r[4]), int(r[5]))
                    for r in reader]
        if header == COST_HEADER:
            return [CostRow(int(r[0]), int(r[1]), int(r[2]), int(r[3]), int(r[4]), float(r[5]))
                    for r in reader]
    raise ValueError(f"{path}: unrecognised header {header}")
