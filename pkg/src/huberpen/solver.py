"""Randomized incremental penalty gradient method.

Iteration k (starting at k = 1) samples one constraint index ``i_k``
uniformly and updates::

    x <- x - step_k * (grad f(x) + gamma_k * grad h_{delta_k}(x; a_i, b_i))

Index streams
-------------
Each run owns a ``numpy.random.Generator`` backed by PCG64 and seeded with
the run's seed. Indices are drawn in blocks of :data:`BLOCK` with
``Generator.integers(0, m, size=BLOCK)`` (Lemire's unbiased bounded
rejection), and consumed in order. Indices are 0-based positions in the
problem's constraint list. This stream is part of the reproducibility
contract: a (problem, config) pair always yields the same trace.

Snapshots
---------
The snapshot labelled k records the iterate after update k together with
the ``gamma_k``, ``delta_k``, ``step_k`` and ``i_k`` used by that update.
The last snapshot is always ``k = iterations``.
"""

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, DomainError
from .oracle import project_polyhedron, solve_constrained_exact
from .penalty import _as_point
from .schedule import delta_at, gamma_at, step_at, validate

BLOCK = 4096
TRACE_COLUMNS = ("k", "f_value", "dist_feasible", "sq_err_to_opt", "gamma", "delta", "step", "index_sampled")


class IndexStream:
    """Uniform constraint indices in ``[0, m)`` from a seeded PCG64 stream."""

    def __init__(self, seed, m):
        if m < 1:
            raise DomainError("need m >= 1")
        self.m = int(m)
        self.rng = np.random.Generator(np.random.PCG64(seed))
        self._buf = np.empty(0, dtype=np.int64)
        self._pos = 0

    def _refill(self):
        self._buf = self.rng.integers(0, self.m, size=BLOCK)
        self._pos = 0

    def next(self):
        if self._pos >= self._buf.size:
            self._refill()
        i = int(self._buf[self._pos])
        self._pos += 1
        return i

    def take(self, count):
        out = np.empty(count, dtype=np.int64)
        filled = 0
        while filled < count:
            if self._pos >= self._buf.size:
                self._refill()
            n = min(count - filled, self._buf.size - self._pos)
            out[filled:filled + n] = self._buf[self._pos:self._pos + n]
            self._pos += n
            filled += n
        return out


def sample_index(stream, m=None):
    """Next index from ``stream``; ``m`` if given must match the stream's range."""
    if m is not None and m != stream.m:
        raise DomainError(f"stream draws from [0, {stream.m}), asked for m={m}")
    return stream.next()


@dataclass(frozen=True)
class SolverConfig:
    schedule: object
    iterations: int
    seed: int = 0
    record_every: int = 1
    grid: str = "geometric"
    ratio: float = 1.2
    checkpoints: tuple = ()
    initial_point: object = "witness"
    store_iterates: bool = False
    full_gradient: bool = False

    def __post_init__(self):
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise DomainError("iterations must be an integer >= 1")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise DomainError("record_every must be an integer >= 1")
        if self.grid not in ("geometric", "arithmetic"):
            raise DomainError(f"grid must be 'geometric' or 'arithmetic', got {self.grid!r}")
        if self.grid == "geometric" and not self.ratio > 1:
            raise DomainError("geometric grid needs ratio > 1")
        if not 0 <= int(self.seed) < 2**64:
            raise DomainError("seed must be an unsigned 64-bit integer")

    def to_dict(self):
        init = self.initial_point
        return {
            "schedule": self.schedule.to_dict(),
            "iterations": int(self.iterations),
            "seed": int(self.seed),
            "record_every": int(self.record_every),
            "grid": self.grid,
            "ratio": self.ratio,
            "checkpoints": [int(k) for k in self.checkpoints],
            "initial_point": init if isinstance(init, str) else np.asarray(init).tolist(),
            "store_iterates": self.store_iterates,
            "full_gradient": self.full_gradient,
        }


def snapshot_grid(cfg):
    """Sorted snapshot iterations; always contains ``cfg.iterations``."""
    N = int(cfg.iterations)
    if cfg.grid == "arithmetic":
        ks = set(range(cfg.record_every, N + 1, cfg.record_every))
    else:
        ks = set()
        j = 0
        while True:
            k = math.ceil(cfg.ratio**j)
            if k > N:
                break
            ks.add(k)
            j += 1
    ks.update(int(k) for k in cfg.checkpoints if 1 <= k <= N)
    ks.add(N)
    return np.array(sorted(ks), dtype=np.int64)


@dataclass
class SolverTrace:
    """Snapshot columns (one entry per snapshot) plus the final iterate."""

    k: np.ndarray
    f_value: np.ndarray
    dist_feasible: np.ndarray
    sq_err_to_opt: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    step: np.ndarray
    index_sampled: np.ndarray
    final_point: np.ndarray
    config: SolverConfig
    seed: int
    max_iterate_norm: float
    iterates: np.ndarray = None
    failed_at: int = None

    def __len__(self):
        return self.k.size

    def truncated(self, count):
        cols = {c: getattr(self, c)[:count] for c in TRACE_COLUMNS}
        its = None if self.iterates is None else self.iterates[:count]
        return SolverTrace(**cols, final_point=self.final_point, config=self.config, seed=self.seed,
                           max_iterate_norm=self.max_iterate_norm, iterates=its, failed_at=self.failed_at)

    def to_csv(self, path_or_buf=None):
        """Write the trace CSV; returns the text when no path is given."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for j in range(len(self)):
            sq = self.sq_err_to_opt[j]
            w.writerow([
                int(self.k[j]), repr(float(self.f_value[j])), repr(float(self.dist_feasible[j])),
                "" if np.isnan(sq) else repr(float(sq)),
                repr(float(self.gamma[j])), repr(float(self.delta[j])), repr(float(self.step[j])),
                int(self.index_sampled[j]),
            ])
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        with open(path_or_buf, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _initial_point(p, cfg):
    init = cfg.initial_point
    if isinstance(init, str):
        if init == "witness":
            return np.zeros(p.n) if p.witness is None else np.array(p.witness, dtype=float)
        if init == "zeros":
            return np.zeros(p.n)
        raise DomainError(f"unknown initial point token {init!r}")
    return _as_point(init, p.n).copy()


def _directions(p, X, idx, gamma, delta, full=False):
    """Stochastic directions for a batch of iterates, one row per run.

    Row results do not depend on the batch size, so a run is bit-identical
    whether it executes alone or inside an ensemble.
    """
    grad_f = np.einsum("jk,sk->sj", p.objective.Q, X) + p.objective.linear_term
    if full:
        s = np.einsum("ik,sk->si", p.A, X) - p.b
        coef = np.clip((s + delta) / (2.0 * delta), 0.0, 1.0) / p.norms
        return grad_f + (gamma / p.m) * np.einsum("si,ik->sk", coef, p.A)
    Ai = p.A[idx]
    s = np.einsum("sk,sk->s", Ai, X) - p.b[idx]
    coef = np.clip((s + delta) / (2.0 * delta), 0.0, 1.0) / p.norms[idx]
    return grad_f + gamma * (coef[:, None] * Ai)


def step(x, k, i, p, sch):
    """One update of the method from ``x`` at iteration ``k`` with constraint ``i``."""
    x = _as_point(x, p.n)
    if not 0 <= i < p.m:
        raise DomainError(f"constraint index {i} outside [0, {p.m})")
    gamma, delta, s_k = gamma_at(sch, k), delta_at(sch, k), step_at(sch, k)
    if not delta > 0:
        raise DomainError("delta_k must be > 0")
    with np.errstate(all="ignore"):
        x_new = x - s_k * _directions(p, x[None, :], np.array([i]), gamma, delta)[0]
    if not np.all(np.isfinite(x_new)):
        raise DivergenceError(f"non-finite iterate at k={k}", k=k, x_norm=float(np.linalg.norm(x)))
    return x_new


def _run_batch(p, cfg, seeds, x_star=None):
    """Run the method once per seed, vectorized over seeds."""
    diags = [d for d in validate(cfg.schedule) if d.level == "error"]
    if diags:
        raise DomainError("invalid schedule: " + "; ".join(d.message for d in diags))
    sch = cfg.schedule
    S = len(seeds)
    x1 = _initial_point(p, cfg)
    X = np.tile(x1, (S, 1))
    streams = [IndexStream(seed, p.m) for seed in seeds]
    grid = snapshot_grid(cfg)
    G = grid.size

    f_val = np.full((S, G), np.nan)
    dist = np.full((S, G), np.nan)
    sq = np.full((S, G), np.nan)
    index = np.full((S, G), -1, dtype=np.int64)
    gam_col, dlt_col, stp_col = np.empty(G), np.empty(G), np.empty(G)
    iterates = np.full((S, G, p.n), np.nan) if cfg.store_iterates else None
    max_sq = np.einsum("sk,sk->s", X, X)
    failed_at = np.zeros(S, dtype=np.int64)
    recorded = np.zeros(S, dtype=np.int64)
    alive = np.ones(S, dtype=bool)

    N = int(cfg.iterations)
    g_pos = 0
    k = 1
    with np.errstate(all="ignore"):
        while k <= N:
            chunk = min(BLOCK, N - k + 1)
            idx_block = np.stack([st.take(chunk) for st in streams])
            for j in range(chunk):
                idx = idx_block[:, j]
                gamma, delta, s_k = gamma_at(sch, k), delta_at(sch, k), step_at(sch, k)
                X = X - s_k * _directions(p, X, idx, gamma, delta, cfg.full_gradient)
                nsq = np.einsum("sk,sk->s", X, X)
                if not np.all(np.isfinite(nsq[alive])):
                    bad = alive & ~np.isfinite(nsq)
                    failed_at[bad] = k
                    alive &= ~bad
                    X[bad] = np.nan
                np.fmax(max_sq, nsq, out=max_sq)
                if g_pos < G and grid[g_pos] == k:
                    gam_col[g_pos], dlt_col[g_pos], stp_col[g_pos] = gamma, delta, s_k
                    for r in np.flatnonzero(alive):
                        x = X[r]
                        f_val[r, g_pos] = p.objective.value(x)
                        dist[r, g_pos] = 0.0 if p.is_feasible(x) else float(
                            np.linalg.norm(x - project_polyhedron(p, x)))
                        if x_star is not None:
                            sq[r, g_pos] = float(np.sum((x - x_star) ** 2))
                        index[r, g_pos] = idx[r]
                        if iterates is not None:
                            iterates[r, g_pos] = x
                        recorded[r] += 1
                    g_pos += 1
                k += 1
            if not alive.any():
                break

    traces = []
    for r, seed in enumerate(seeds):
        tr = SolverTrace(
            k=grid.copy(), f_value=f_val[r], dist_feasible=dist[r], sq_err_to_opt=sq[r],
            gamma=gam_col.copy(), delta=dlt_col.copy(), step=stp_col.copy(), index_sampled=index[r],
            final_point=X[r].copy(), config=cfg, seed=int(seed),
            max_iterate_norm=float(np.sqrt(max_sq[r])),
            iterates=None if iterates is None else iterates[r],
            failed_at=int(failed_at[r]) if failed_at[r] else None,
        )
        if tr.failed_at is not None:
            tr = tr.truncated(int(recorded[r]))
        traces.append(tr)
    return traces


def run(p, cfg, x_star=None):
    """Single run with ``cfg.seed``.

    Raises :class:`DivergenceError` carrying the partial trace if an
    iterate becomes non-finite.
    """
    xs = None if x_star is None else _as_point(x_star, p.n)
    tr = _run_batch(p, cfg, [int(cfg.seed)], xs)[0]
    if tr.failed_at is not None:
        raise DivergenceError(f"non-finite iterate at k={tr.failed_at}", k=tr.failed_at, trace=tr)
    return tr


@dataclass
class EnsembleResult:
    traces: list
    k: np.ndarray
    mean_sq_err: np.ndarray
    stderr_sq_err: np.ndarray
    mean_dist_feasible: np.ndarray
    failed_seeds: list = field(default_factory=list)
    x_star: np.ndarray = None

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("k", "mean_sq_err", "stderr", "mean_dist_feasible"))
        for j in range(self.k.size):
            w.writerow([int(self.k[j]), repr(float(self.mean_sq_err[j])),
                        repr(float(self.stderr_sq_err[j])), repr(float(self.mean_dist_feasible[j]))])
        text = buf.getvalue()
        if path is None:
            return text
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def aggregate(traces, failed_seeds=()):
    """Mean and standard error of squared error and mean distance per snapshot."""
    ok = [t for t in traces if t.failed_at is None and t.seed not in set(failed_seeds)]
    if not ok:
        raise DivergenceError("every run diverged", k=min(t.failed_at for t in traces))
    k = ok[0].k
    for t in ok[1:]:
        if not np.array_equal(t.k, k):
            raise DomainError("traces do not share a snapshot grid")
    sq = np.stack([t.sq_err_to_opt for t in ok])
    dist = np.stack([t.dist_feasible for t in ok])
    n = len(ok)
    stderr = sq.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(k.size)
    return k.copy(), sq.mean(axis=0), stderr, dist.mean(axis=0)


def run_ensemble(p, cfg, num_seeds, x_star=None, workers=1):
    """Independent runs with seeds ``cfg.seed + j`` for ``j < num_seeds``.

    ``x_star`` defaults to the exact oracle solution. Diverged runs are
    listed in ``failed_seeds`` and left out of the aggregate. With
    ``workers > 1`` the seeds are split over worker processes; results do
    not depend on the split.
    """
    if int(num_seeds) != num_seeds or num_seeds < 1:
        raise DomainError("num_seeds must be an integer >= 1")
    if x_star is None:
        x_star = solve_constrained_exact(p).x_star
    x_star = _as_point(x_star, p.n)
    seeds = [int(cfg.seed) + j for j in range(int(num_seeds))]
    workers = max(1, min(int(workers), len(seeds)))
    if workers == 1:
        traces = _run_batch(p, cfg, seeds, x_star)
    else:
        chunks = [seeds[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_batch, [p] * workers, [cfg] * workers, chunks, [x_star] * workers))
        by_seed = {t.seed: t for part in parts for t in part}
        traces = [by_seed[s] for s in seeds]
    failed = [t.seed for t in traces if t.failed_at is not None]
    k, mse, se, md = aggregate(traces)
    return EnsembleResult(traces=traces, k=k, mean_sq_err=mse, stderr_sq_err=se,
                          mean_dist_feasible=md, failed_seeds=failed, x_star=x_star)
