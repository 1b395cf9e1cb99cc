"""Replication engine, tail estimates and sweeps against predictions.

Randomness is organised in fixed blocks of ``BLOCK`` replicas.  Block b uses
a Philox stream keyed by ``(seed, b)``, so the counts produced by
:func:`mc_tail` depend only on ``(seed, reps)`` and never on how blocks are
spread over workers.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .errors import DegenerateGrid
from .predict import ld_prediction, window, x_tail_prediction

BLOCK = 4096
DEFAULT_GRID_SIZE = 12


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(2**32, replica))))


def default_workers() -> int:
    return int(os.environ.get("CRITGWI_WORKERS", "1"))


# --------------------------------------------------------------------------
# tail estimates
# --------------------------------------------------------------------------


def wilson_interval(hits: int, reps: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if reps <= 0:
        return 0.0, 1.0
    z = float(stats.norm.ppf(0.5 + level / 2))
    p = hits / reps
    denom = 1 + z * z / reps
    centre = (p + z * z / (2 * reps)) / denom
    half = z * math.sqrt(p * (1 - p) / reps + z * z / (4 * reps * reps)) / denom
    lo = 0.0 if hits == 0 else max(0.0, centre - half)
    hi = 1.0 if hits == reps else min(1.0, centre + half)
    return lo, hi


@dataclass
class TailEstimate:
    """Monte Carlo estimate of P(V > x).

    Aborted replicas whose known lower bound already exceeds x are counted
    as hits; the remaining ``aborted_reps`` may or may not be hits and are
    added to the upper end of the interval as one-sided slack.
    """

    x: float
    hits: int
    reps: int
    aborted_reps: int = 0
    level: float = 0.95
    p_hat: float = field(init=False)
    ci_lo: float = field(init=False)
    ci_hi: float = field(init=False)

    def __post_init__(self):
        self.p_hat = self.hits / self.reps if self.reps else 0.0
        lo, hi = wilson_interval(self.hits, self.reps, self.level)
        self.ci_lo = min(lo, self.p_hat)
        self.ci_hi = min(1.0, max(hi, self.p_hat) + (self.aborted_reps / self.reps if self.reps else 0.0))

    def merge(self, other: "TailEstimate") -> "TailEstimate":
        if other.x != self.x:
            raise ValueError("cannot merge estimates at different x")
        return TailEstimate(self.x, self.hits + other.hits, self.reps + other.reps,
                            self.aborted_reps + other.aborted_reps, self.level)

    def to_dict(self) -> dict:
        return asdict(self)


def _count_block(args):
    sampler, xs, seed, block, size = args
    rng = block_rng(seed, block)
    values, aborted = sampler(rng, size)
    values = np.asarray(values)
    aborted = np.asarray(aborted, dtype=bool)
    xs = np.asarray(xs)
    above = values[None, :] > xs[:, None]
    hits = above.sum(axis=1)
    unknown = (aborted[None, :] & ~above).sum(axis=1)
    return hits.astype(np.int64), unknown.astype(np.int64)


def _blocks(reps: int):
    n_blocks = -(-reps // BLOCK)
    return [(b, min(BLOCK, reps - b * BLOCK)) for b in range(n_blocks)]


def mc_tail(sampler, xs, reps: int, seed: int, workers: int | None = None, level: float = 0.95):
    """Estimate P(V > x) for every x in ``xs`` from one pass of ``reps`` replicas.

    ``sampler(rng, size)`` returns ``(values, aborted)`` arrays.  The result
    is identical for any number of workers.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    workers = default_workers() if workers is None else workers
    jobs = [(sampler, xs, seed, b, size) for b, size in _blocks(reps)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_count_block, jobs))
    else:
        parts = [_count_block(j) for j in jobs]
    hits = np.sum([p[0] for p in parts], axis=0)
    unknown = np.sum([p[1] for p in parts], axis=0)
    return [TailEstimate(float(x), int(h), reps, int(u), level) for x, h, u in zip(xs, hits, unknown)]


def mc_values(sampler, reps: int, seed: int, workers: int | None = None):
    """All replica values and abort flags, in replica order."""
    workers = default_workers() if workers is None else workers
    jobs = [(sampler, seed, b, size) for b, size in _blocks(reps)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_values_block, jobs))
    else:
        parts = [_values_block(j) for j in jobs]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _values_block(args):
    sampler, seed, block, size = args
    values, aborted = sampler(block_rng(seed, block), size)
    return np.asarray(values), np.asarray(aborted, dtype=bool)


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------


@dataclass
class SweepRow:
    x: float
    prediction: float
    p_hat: float | None = None
    ci_lo: float | None = None
    ci_hi: float | None = None
    ratio: float | None = None
    exact_lo: float | None = None
    exact_hi: float | None = None
    exact_ratio: float | None = None


COLUMNS = ["x", "p_hat", "ci_lo", "ci_hi", "prediction", "ratio", "exact_lo", "exact_hi", "exact_ratio"]


@dataclass
class SweepReport:
    """Ratios P(. > x) / prediction over a grid.

    ``sup_error`` is the largest |ratio - 1| over the finite grid (a lower
    bound for the supremum over the whole window).  It uses the exact channel
    when present and the Monte Carlo ratios otherwise.
    """

    kind: str
    params: dict
    rows: list

    def ratios(self, channel: str = "auto") -> np.ndarray:
        if channel == "auto":
            channel = "exact" if any(r.exact_ratio is not None for r in self.rows) else "mc"
        attr = "exact_ratio" if channel == "exact" else "ratio"
        return np.array([getattr(r, attr) for r in self.rows], dtype=float)

    @property
    def sup_error(self) -> float:
        r = self.ratios()
        return float(np.max(np.abs(r - 1))) if len(r) else float("nan")

    @property
    def mc_sup_error(self) -> float | None:
        r = [row.ratio for row in self.rows if row.ratio is not None]
        return float(np.max(np.abs(np.array(r) - 1))) if r else None

    def summary(self) -> dict:
        return {"kind": self.kind, "params": self.params, "grid_points": len(self.rows),
                "sup_error": self.sup_error, "mc_sup_error": self.mc_sup_error,
                "sup_is_grid_lower_bound": True}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in self.rows:
            w.writerow([_fmt(getattr(row, c)) for c in COLUMNS])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


def _fmt(v):
    if v is None:
        return ""
    return f"{float(v):.9e}"


def geometric_grid(lo: float, hi: float, size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Log-equispaced integer grid on [lo, hi] (rounded inwards)."""
    if size < 1:
        raise DegenerateGrid("grid must have at least one point")
    if not 0 < lo <= hi:
        raise DegenerateGrid(f"bad grid bounds [{lo}, {hi}]")
    pts = np.geomspace(lo, hi, size)
    pts = np.clip(np.round(pts), math.ceil(lo), math.floor(hi))
    return pts


def sweep_theorem(spec, n: int, k1: float, k2: float, reps: int = 0, grid_size: int = DEFAULT_GRID_SIZE,
                  seed: int = 0, workers: int | None = None, exact: bool = True, budget=None) -> SweepReport:
    """Compare P(S_n > x) with n x^(-delta/(1+nu)) L(x) over the large-deviation window.

    ``reps > 0`` adds a Monte Carlo channel; ``exact`` adds the series
    channel (Laplace-inverted S_n generating function with error bars).
    """
    from .series import sn_tail
    from .simulate import DEFAULT_BUDGET, SnSampler

    win = window(spec, n, k1, k2)
    xs = geometric_grid(win.x_lo, win.x_hi, grid_size)
    if len(xs) == 0:
        raise DegenerateGrid("empty grid")
    pred = np.asarray(ld_prediction(spec, n, xs), dtype=float)
    rows = [SweepRow(float(x), float(p)) for x, p in zip(xs, pred)]
    if exact:
        inv = sn_tail(spec, n, xs)
        for row, lo, hi, v, p in zip(rows, inv.lo, inv.hi, inv.value, pred):
            row.exact_lo, row.exact_hi, row.exact_ratio = float(lo), float(hi), float(v / p)
    if reps > 0:
        sampler = SnSampler(spec, n, budget or DEFAULT_BUDGET)
        ests = mc_tail(sampler, xs, reps, seed, workers)
        _fill_mc(rows, ests, pred)
    params = {"model": spec.to_dict(), "n": n, "k1": k1, "k2": k2, "x_lo": win.x_lo, "x_hi": win.x_hi,
              "reps": reps, "seed": seed, "grid_size": grid_size}
    return SweepReport("theorem", params, rows)


def _fill_mc(rows, ests, pred):
    for row, est, p in zip(rows, ests, pred):
        row.p_hat, row.ci_lo, row.ci_hi = est.p_hat, est.ci_lo, est.ci_hi
        row.ratio = est.p_hat / p


def sweep_stationary(spec, x_grid, reps: int = 0, seed: int = 0, workers: int | None = None, M: int = 200,
                     exact: bool = True, budget=None) -> SweepReport:
    """Compare P(X > x) for the stationary law with its power-law prediction."""
    from .series import stationary_tail
    from .simulate import DEFAULT_BUDGET, StationarySampler

    xs = np.atleast_1d(np.asarray(x_grid, dtype=float))
    if len(xs) == 0:
        raise DegenerateGrid("empty grid")
    pred = np.asarray(x_tail_prediction(spec, xs), dtype=float)
    rows = [SweepRow(float(x), float(p)) for x, p in zip(xs, pred)]
    if exact:
        inv = stationary_tail(spec, xs)
        for row, lo, hi, v, p in zip(rows, inv.lo, inv.hi, inv.value, pred):
            row.exact_lo, row.exact_hi, row.exact_ratio = float(lo), float(hi), float(v / p)
    if reps > 0:
        ests = mc_tail(StationarySampler(spec, M, budget or DEFAULT_BUDGET), xs, reps, seed, workers)
        _fill_mc(rows, ests, pred)
    params = {"model": spec.to_dict(), "reps": reps, "seed": seed, "M": M if reps > 0 else None}
    return SweepReport("stationary", params, rows)
