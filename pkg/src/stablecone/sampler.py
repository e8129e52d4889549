"""Exact-in-law stable increments and grid-monitored exit times.

The isotropic alpha-stable increment over time ``h`` is Brownian motion run
at a one-sided (alpha/2)-stable clock: ``X = sqrt(2 S) Z`` with
``E exp(-lam S) = exp(-h lam^{alpha/2})``, so ``E exp(i xi.X) = exp(-h |xi|^alpha)``.
Paths are only observed at grid times, hence killing is grid killing.

Randomness is organised in fixed-size chunks of paths, each with its own
counter-based generator keyed by ``(master_seed, stream_index, *key, chunk)``.
Results therefore do not depend on how many worker processes share the chunks.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import Domain
from .kernel import StableParams

CHUNK_SIZE = 4096


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_index: int = 0
    key: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.stream_index < 0:
            raise ValueError("stream_index must be nonnegative")

    def spawn(self, *sub: int) -> "SeedSpec":
        """Independent child stream, e.g. one per grid node."""
        return SeedSpec(self.master_seed, self.stream_index, self.key + tuple(int(s) for s in sub))

    def generator(self, chunk: int = 0) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_index, *self.key, chunk))
        return np.random.Generator(np.random.Philox(seq))

    def __str__(self):
        tail = "".join(f"/{k}" for k in self.key)
        return f"{self.master_seed}:{self.stream_index}{tail}"


@dataclass(frozen=True)
class MCEstimate:
    value: float
    std_error: float
    n_paths: int
    seed: SeedSpec | None = None

    def __post_init__(self):
        if self.n_paths <= 0:
            raise ValueError("an estimate needs at least one path")
        if self.std_error < 0:
            raise ValueError("standard error must be nonnegative")

    @classmethod
    def from_samples(cls, samples: np.ndarray, seed: SeedSpec | None = None) -> "MCEstimate":
        samples = np.asarray(samples, dtype=float)
        n = len(samples)
        se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(float(samples.mean()), se, n, seed)

    def joint_z(self, other: "MCEstimate") -> float:
        """``|a - b|`` in units of the joint standard error of independent estimates."""
        se = math.hypot(self.std_error, other.std_error)
        diff = abs(self.value - other.value)
        return 0.0 if diff == 0 else (math.inf if se == 0 else diff / se)


@dataclass(frozen=True)
class ExitRecord:
    exited: bool
    tau: float
    exit_position: np.ndarray | None
    last_alive: np.ndarray


# ---------------------------------------------------------------------------
# increments


def sample_subordinator_increment(alpha_half: float, h: float, rng: np.random.Generator, size=None):
    """One-sided stable increment with Laplace transform ``exp(-h lam^{alpha_half})``.

    Chambers-Mallows-Stuck (Kanter) transform of a uniform angle and an
    exponential variable.
    """
    if not 0.0 < alpha_half < 1.0:
        raise ValueError("alpha_half must lie in (0, 1)")
    if h <= 0:
        raise ValueError("time step must be positive")
    a = alpha_half
    u = math.pi * (1.0 - rng.random(size))  # (0, pi]
    e = np.maximum(rng.standard_exponential(size), 1e-300)
    s = (np.sin(a * u) / np.sin(u) ** (1.0 / a)) * (np.sin((1.0 - a) * u) / e) ** ((1.0 - a) / a)
    return h ** (1.0 / a) * s


def sample_stable_increment(params: StableParams, h: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Isotropic increment(s) with characteristic function ``exp(-h |xi|^alpha)``; last axis is d."""
    n = 1 if size is None else int(size)
    s = sample_subordinator_increment(params.alpha / 2, h, rng, n)
    z = rng.standard_normal((n, params.d))
    out = np.sqrt(2.0 * s)[:, None] * z
    return out[0] if size is None else out


# ---------------------------------------------------------------------------
# time grids


def time_grid(horizon: float, h: float, rel_step: float | None = None, include: Sequence[float] = ()) -> np.ndarray:
    """Observation times in ``(0, horizon]``.

    Uniform with step ``h``; with ``rel_step`` the step grows like
    ``rel_step * t`` once that exceeds ``h`` (scale-free monitoring at large
    times). Every time in ``include`` is inserted exactly.
    """
    if horizon <= 0 or h <= 0:
        raise ValueError("horizon and step must be positive")
    if h > horizon:
        raise ValueError("step must not exceed the horizon")
    if rel_step is None:
        n = int(math.ceil(horizon / h - 1e-9))
        times = h * np.arange(1, n + 1, dtype=float)
    else:
        times = []
        t = 0.0
        while t < horizon * (1 - 1e-12):
            t = t + max(h, rel_step * t)
            times.append(t)
        times = np.array(times)
    times = np.minimum(times, horizon)
    extra = np.asarray([float(v) for v in include if 0 < v <= horizon] + [horizon])
    times = np.unique(np.concatenate([times, extra]))
    # merge near-duplicates produced by inserting requested times
    keep = np.concatenate([[True], np.diff(times) > 1e-12 * times[1:]])
    keep_idx = np.nonzero(keep)[0]
    times = times[keep_idx]
    for v in extra:
        times[np.argmin(np.abs(times - v))] = v
    return times


# ---------------------------------------------------------------------------
# path simulation


@dataclass
class PathBatch:
    """Outcome of ``n`` grid-monitored paths started at the same point."""

    tau: np.ndarray  # first grid time outside the domain, inf if none
    exit_position: np.ndarray  # (n, d), nan where not exited
    final_position: np.ndarray  # (n, d) position at the horizon, nan where exited
    snapshots: dict[float, np.ndarray] = field(default_factory=dict)  # time -> (n, d), nan where dead
    start: np.ndarray | None = None

    def __len__(self):
        return len(self.tau)

    @classmethod
    def concatenate(cls, batches: Sequence["PathBatch"]) -> "PathBatch":
        keys = batches[0].snapshots.keys()
        return cls(
            np.concatenate([b.tau for b in batches]),
            np.concatenate([b.exit_position for b in batches]),
            np.concatenate([b.final_position for b in batches]),
            {k: np.concatenate([b.snapshots[k] for b in batches]) for k in keys},
            batches[0].start,
        )


def simulate_batch(
    domain: Domain,
    params: StableParams,
    x,
    times: np.ndarray,
    rng: np.random.Generator,
    n: int,
    snapshot_times: Sequence[float] = (),
) -> PathBatch:
    """Walk ``n`` paths from ``x`` over the observation ``times``; stop each at its first exit."""
    d = params.d
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (d,):
        raise ValueError(f"start point must have {d} coordinates")
    times = np.asarray(times, dtype=float)
    tau = np.full(n, np.inf)
    exit_pos = np.full((n, d), np.nan)
    snaps = {float(s): np.full((n, d), np.nan) for s in snapshot_times}
    snap_at = {}
    for s in snaps:
        if s == 0.0:
            continue
        k = int(np.argmin(np.abs(times - s)))
        if abs(times[k] - s) > 1e-12 * max(1.0, s):
            raise ValueError(f"snapshot time {s} is not on the observation grid")
        snap_at.setdefault(k, []).append(s)

    if not domain.contains(x):
        tau[:] = 0.0
        exit_pos[:] = x
        return PathBatch(tau, exit_pos, np.full((n, d), np.nan), snaps, x)
    if 0.0 in snaps:
        snaps[0.0][:] = x

    ids = np.arange(n)
    pos = np.broadcast_to(x, (n, d)).copy()
    prev = 0.0
    for k, t in enumerate(times):
        if len(ids) == 0:
            break
        pos += sample_stable_increment(params, t - prev, rng, len(ids))
        prev = t
        inside = domain._contains(pos)
        if not inside.all():
            out = ~inside
            tau[ids[out]] = t
            exit_pos[ids[out]] = pos[out]
            pos = pos[inside]
            ids = ids[inside]
        for s in snap_at.get(k, ()):
            snaps[s][ids] = pos
    final = np.full((n, d), np.nan)
    final[ids] = pos
    return PathBatch(tau, exit_pos, final, snaps, x)


def simulate_until_exit(
    domain: Domain, params: StableParams, x, horizon: float, h: float, rng: np.random.Generator
) -> ExitRecord:
    """Single path on the grid ``h, 2h, ...``; records the first grid time outside the domain."""
    if h > horizon:
        raise ValueError("step must not exceed the horizon")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not domain.contains(x):
        return ExitRecord(True, 0.0, x.copy(), x.copy())
    pos = x.copy()
    prev = 0.0
    for t in time_grid(horizon, h):
        new = pos + sample_stable_increment(params, t - prev, rng)
        prev = t
        if not domain.contains(new):
            return ExitRecord(True, float(t), new, pos)
        pos = new
    return ExitRecord(False, float(prev), None, pos)


# ---------------------------------------------------------------------------
# chunked map-reduce


def chunk_sizes(n_paths: int, chunk: int = CHUNK_SIZE) -> list[int]:
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    full, rest = divmod(n_paths, chunk)
    return [chunk] * full + ([rest] if rest else [])


def _run_chunk(args):
    fn, seed, index, size, payload = args
    return fn(seed.generator(index), size, *payload)


def map_chunks(
    fn: Callable, n_paths: int, seed: SeedSpec, payload: tuple = (), workers: int = 1
) -> list:
    """Apply ``fn(rng, size, *payload)`` to each chunk; results come back in chunk order.

    ``fn`` must be a module-level function when ``workers > 1``.
    """
    tasks = [(fn, seed, i, size, payload) for i, size in enumerate(chunk_sizes(n_paths))]
    workers = max(1, min(int(workers), len(tasks), os.cpu_count() or 1)) if workers else 1
    if workers == 1:
        return [_run_chunk(t) for t in tasks]
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(_run_chunk, tasks))


def _batch_chunk(rng, size, domain, params, x, times, snapshot_times):
    return simulate_batch(domain, params, x, times, rng, size, snapshot_times)


def run_paths(
    domain: Domain,
    params: StableParams,
    x,
    times: np.ndarray,
    n_paths: int,
    seed: SeedSpec,
    snapshot_times: Sequence[float] = (),
    workers: int = 1,
) -> PathBatch:
    """Seeded, chunked version of :func:`simulate_batch`."""
    parts = map_chunks(
        _batch_chunk, n_paths, seed, (domain, params, np.asarray(x, dtype=float), times, tuple(snapshot_times)), workers
    )
    return PathBatch.concatenate(parts)


def default_step(t: float) -> float:
    return 1e-3 * t


def survival_probability(
    domain: Domain,
    params: StableParams,
    x,
    t: float,
    n_paths: int,
    h: float | None = None,
    seed: SeedSpec = SeedSpec(0),
    workers: int = 1,
) -> MCEstimate:
    """Fraction of grid-monitored paths still inside at time ``t``."""
    if not domain.contains(np.atleast_1d(np.asarray(x, dtype=float))):
        return MCEstimate(0.0, 0.0, n_paths, seed)
    h = default_step(t) if h is None else h
    batch = run_paths(domain, params, x, time_grid(t, h), n_paths, seed, workers=workers)
    return binomial_estimate(int(np.sum(batch.tau > t)), n_paths, seed)


def survival_curve(
    domain: Domain,
    params: StableParams,
    x,
    ts: Sequence[float],
    n_paths: int,
    times: np.ndarray,
    seed: SeedSpec,
    workers: int = 1,
) -> list[MCEstimate]:
    """Survival at several times ``ts`` (all on ``times``) from one set of paths."""
    batch = run_paths(domain, params, x, times, n_paths, seed, workers=workers)
    return [binomial_estimate(int(np.sum(batch.tau > t)), n_paths, seed) for t in ts]


def binomial_estimate(alive: int, n: int, seed: SeedSpec | None = None) -> MCEstimate:
    p = alive / n
    return MCEstimate(p, math.sqrt(p * (1 - p) / n), n, seed)


def write_exit_records(path, batch: PathBatch) -> None:
    """Line-delimited ``tau x_1 ... x_d`` for exited paths (``inf`` and nan otherwise)."""
    with open(path, "w") as fh:
        for tau, pos in zip(batch.tau, batch.exit_position):
            fh.write(" ".join([repr(float(tau))] + [repr(float(v)) for v in pos]) + "\n")
