"""Path-level Monte Carlo for the branching process with immigration.

Single-replica functions (``gwi_step``, ``simulate_sn``, ``total_progeny``,
``simulate_coupled``, ``sample_stationary_x``) mirror the definitions one to
one and raise a :class:`~critgwi.errors.CapExceeded` subclass when a budget
is exhausted.  The ``*_batch`` variants run many replicas at once on numpy
arrays and never raise on caps; they return ``(values, aborted)`` where an
aborted entry holds a value the true outcome is known to be at least.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import GenCapExceeded, PopCapExceeded, StepCapExceeded
from .models import DEFAULT_CAP, draw_eta, draw_xi

CHUNK = 4_000_000


@dataclass(frozen=True)
class SimBudget:
    """Hard limits for one replica.

    pop_cap
        largest admissible generation size (and single offspring draw).
    gen_cap
        largest number of generations when running families to extinction.
    step_cap
        largest total progeny followed for any family (Otter-Dwass steps).
    """

    pop_cap: int = 10**7
    gen_cap: int = 10**5
    step_cap: int = 10**7
    draw_cap: int = DEFAULT_CAP

    def __post_init__(self):
        for name in ("pop_cap", "gen_cap", "step_cap", "draw_cap"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


DEFAULT_BUDGET = SimBudget()


# --------------------------------------------------------------------------
# offspring sums
# --------------------------------------------------------------------------


def _offspring_sums(rng, spec, sizes: np.ndarray, budget: SimBudget):
    """Sum of sizes[i] offspring draws for each i; returns (sums, overflow).

    ``overflow[i]`` is True when one draw (or the sum) exceeded ``pop_cap``;
    the corresponding sum is then a lower bound only.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    sums = np.zeros(len(sizes), dtype=np.int64)
    over = np.zeros(len(sizes), dtype=bool)
    if sizes.sum() == 0:
        return sums, over
    ends = np.cumsum(sizes)
    start = 0
    while start < len(sizes):
        base = ends[start] - sizes[start]
        stop = int(np.searchsorted(ends, base + CHUNK, side="right"))
        stop = max(stop, start + 1)
        sl = slice(start, stop)
        seg = sizes[sl]
        total = int(seg.sum())
        if total:
            d = draw_xi(rng, spec, total, budget.draw_cap)
            big = (d < 0) | (d > budget.pop_cap)
            if big.any():
                owner = np.searchsorted(np.cumsum(seg), np.flatnonzero(big), side="right")
                over[start + np.unique(owner)] = True
                d = np.where(d < 0, budget.pop_cap + 1, d)
                d = np.minimum(d, budget.pop_cap + 1)
            cs = np.concatenate([[0], np.cumsum(d)])
            e = np.cumsum(seg)
            sums[sl] = cs[e] - cs[e - seg]
        start = stop
    over |= sums > budget.pop_cap
    return sums, over


def _eta_draws(rng, spec, size, budget: SimBudget):
    d = draw_eta(rng, spec, size, budget.draw_cap)
    over = (d < 0) | (d > budget.pop_cap)
    d = np.where(d < 0, budget.pop_cap + 1, d)
    return np.minimum(d, budget.pop_cap + 1), over


# --------------------------------------------------------------------------
# single-replica operations
# --------------------------------------------------------------------------


def gwi_step(rng, spec, x_prev: int, budget: SimBudget = DEFAULT_BUDGET) -> int:
    """One step X_n = xi_1 + ... + xi_{X_{n-1}} + eta_n of the recursion."""
    if x_prev < 0:
        raise ValueError("x_prev must be >= 0")
    if x_prev > budget.pop_cap:
        raise PopCapExceeded(f"population {x_prev} above cap {budget.pop_cap}", lower_bound=int(x_prev))
    s, over = _offspring_sums(rng, spec, np.array([x_prev]), budget)
    e, e_over = _eta_draws(rng, spec, 1, budget)
    value = int(s[0] + e[0])
    if over[0] or e_over[0] or value > budget.pop_cap:
        raise PopCapExceeded(f"generation size above cap {budget.pop_cap}", lower_bound=value)
    return value


def simulate_path(rng, spec, n: int, budget: SimBudget = DEFAULT_BUDGET) -> list[int]:
    """X_1..X_n from X_0 = 0."""
    x = 0
    traj = []
    for _ in range(n):
        x = gwi_step(rng, spec, x, budget)
        traj.append(x)
    return traj


def simulate_sn(rng, spec, n: int, budget: SimBudget = DEFAULT_BUDGET) -> int:
    """S_n = X_1 + ... + X_n from X_0 = 0."""
    total = 0
    x = 0
    for _ in range(n):
        try:
            x = gwi_step(rng, spec, x, budget)
        except PopCapExceeded as exc:
            raise PopCapExceeded(str(exc), lower_bound=total + exc.lower_bound) from None
        total += x
    return total


def total_progeny(rng, spec, z0: int = 1, budget: SimBudget = DEFAULT_BUDGET) -> int:
    """T = number of steps for the walk W_k = z0 + sum_{j<=k} (xi_j - 1) to reach 0.

    From level W the walk needs at least W further steps, so W increments
    are drawn at once; the batch ends exactly at the next generation size,
    which keeps the count identical to the breadth-first total progeny.
    """
    if z0 < 1:
        raise ValueError("z0 must be >= 1")
    vals, ab = total_progeny_batch(rng, spec, 1, z0, budget)
    if ab[0]:
        raise StepCapExceeded(f"total progeny above step cap {budget.step_cap}", lower_bound=int(vals[0]))
    return int(vals[0])


@dataclass
class PathSample:
    """One coupled trajectory with its immigrant-family decomposition."""

    traj: list
    s_n: int
    s_n1: int
    s_n2: int
    per_immigrant: list = field(default_factory=list)

    def check(self) -> bool:
        return self.s_n == self.s_n1 - self.s_n2 and self.s_n2 >= 0 and self.s_n1 >= self.s_n

    def to_dict(self) -> dict:
        return asdict(self)


def simulate_coupled(rng, spec, n: int, budget: SimBudget = DEFAULT_BUDGET) -> PathSample:
    """Run X_1..X_n tracking each arrival cohort, then close every cohort.

    ``s_n`` is accumulated from the trajectory, ``s_n2`` from the generations
    born after time n, and ``s_n1`` from the per-cohort family totals; the
    identity s_n = s_n1 - s_n2 is then a genuine check of the bookkeeping.
    """
    sizes = np.zeros(n, dtype=np.int64)  # current generation of cohort j (arrived at j+1)
    totals = np.zeros(n, dtype=np.int64)
    etas = np.zeros(n, dtype=np.int64)
    traj = []
    s_n = 0
    for i in range(n):
        if i:
            live = sizes[:i]
            nxt, over = _offspring_sums(rng, spec, live, budget)
            if over.any():
                raise PopCapExceeded("cohort generation above cap", lower_bound=s_n + int(nxt.sum()))
            sizes[:i] = nxt
        e, e_over = _eta_draws(rng, spec, 1, budget)
        if e_over[0]:
            raise PopCapExceeded("immigrant batch above cap", lower_bound=s_n + int(e[0]))
        sizes[i] = e[0]
        etas[i] = e[0]
        totals += sizes
        x = int(sizes.sum())
        if x > budget.pop_cap:
            raise PopCapExceeded(f"population {x} above cap", lower_bound=s_n + x)
        traj.append(x)
        s_n += x
    s_n2 = 0
    gens = 0
    while sizes.any():
        gens += 1
        if gens > budget.gen_cap:
            raise GenCapExceeded(f"families alive after {budget.gen_cap} generations", lower_bound=int(totals.sum()))
        nxt, over = _offspring_sums(rng, spec, sizes, budget)
        if over.any():
            raise PopCapExceeded("closing generation above cap", lower_bound=int(totals.sum() + nxt.sum()))
        sizes = nxt
        totals += sizes
        s_n2 += int(sizes.sum())
        if totals.max() > budget.step_cap:
            raise StepCapExceeded(f"family total above {budget.step_cap}", lower_bound=int(totals.sum()))
    per = [(i + 1, int(etas[i]), int(totals[i])) for i in range(n)]
    sample = PathSample(traj, s_n, int(totals.sum()), s_n2, per)
    return sample


def sample_stationary_x(rng, spec, M: int, budget: SimBudget = DEFAULT_BUDGET) -> int:
    """D_0 + ... + D_M, with D_j a fresh immigrant batch pushed through j generations.

    Simulated as X_{M+1} of the chain started from 0, which has exactly this
    law (the batch arriving at time M+1-j has been through j generations).
    """
    if M < 0:
        raise ValueError("M must be >= 0")
    vals, ab = stationary_batch(rng, spec, 1, M, budget)
    if ab[0]:
        raise PopCapExceeded("population above cap", lower_bound=int(vals[0]))
    return int(vals[0])


def stationary_truncation_bound(spec, M: int) -> float:
    """Upper bound on P(sum_{n>M} D_n > 0) = P(truncation changes the value)."""
    from .series import iterate_gap, log_stationary_gap

    R = iterate_gap(spec, M + 1, np.array([1.0]))
    logp, _ = log_stationary_gap(spec, R)
    # sum_{n>M} P(D_n > 0) = sum_{n>M} (1 - g(f_n(0))) <= -log prod_{n>M} g(f_n(0))
    return float(-logp[0])


# --------------------------------------------------------------------------
# vectorised replicas
# --------------------------------------------------------------------------


def sn_batch(rng, spec, size: int, n: int, budget: SimBudget = DEFAULT_BUDGET):
    """``size`` independent copies of S_n; returns (values, aborted)."""
    x = np.zeros(size, dtype=np.int64)
    s = np.zeros(size, dtype=np.int64)
    aborted = np.zeros(size, dtype=bool)
    for _ in range(n):
        off, over = _offspring_sums(rng, spec, x, budget)
        e, e_over = _eta_draws(rng, spec, size, budget)
        x = off + e
        newly = (over | e_over | (x > budget.pop_cap)) & ~aborted
        s = s + np.where(aborted, 0, x)
        aborted |= newly
        x = np.where(aborted, 0, x)
    return s, aborted


def total_progeny_batch(rng, spec, size: int, z0: int = 1, budget: SimBudget = DEFAULT_BUDGET):
    """``size`` copies of the total progeny of z0 ancestors; returns (values, aborted).

    Aborted replicas report T + W (steps taken plus current walk level), a
    lower bound for the hitting time.
    """
    w = np.full(size, z0, dtype=np.int64)
    t = np.zeros(size, dtype=np.int64)
    aborted = np.zeros(size, dtype=bool)
    gens = 0
    while True:
        live = (w > 0) & ~aborted
        if not live.any():
            break
        gens += 1
        cap_hit = live & ((t + w > budget.step_cap) | (gens > budget.gen_cap))
        aborted |= cap_hit
        live &= ~cap_hit
        t = np.where(live, t + w, t)
        nxt, over = _offspring_sums(rng, spec, np.where(live, w, 0), budget)
        over &= live
        w = np.where(live, nxt, w)
        aborted |= over
    return np.where(aborted, t + w, t), aborted


def stationary_batch(rng, spec, size: int, M: int, budget: SimBudget = DEFAULT_BUDGET):
    """``size`` copies of D_0 + ... + D_M (= X_{M+1} from 0); returns (values, aborted)."""
    x = np.zeros(size, dtype=np.int64)
    aborted = np.zeros(size, dtype=bool)
    for _ in range(M + 1):
        off, over = _offspring_sums(rng, spec, np.where(aborted, 0, x), budget)
        e, e_over = _eta_draws(rng, spec, size, budget)
        new = off + e
        newly = (over | e_over | (new > budget.pop_cap)) & ~aborted
        x = np.where(aborted, x, new)
        aborted |= newly
    return x, aborted


def coupled_batch(seed: int, start: int, size: int, spec, n: int, budget: SimBudget = DEFAULT_BUDGET):
    """Coupled samples for replicas start..start+size-1, each on its own stream."""
    from .estimate import replica_rng

    out = []
    for rep in range(start, start + size):
        rng = replica_rng(seed, rep)
        try:
            out.append((rep, simulate_coupled(rng, spec, n, budget), None))
        except (PopCapExceeded, GenCapExceeded, StepCapExceeded) as exc:
            out.append((rep, None, exc))
    return out


# --------------------------------------------------------------------------
# samplers usable by the replication engine
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SnSampler:
    spec: object
    n: int
    budget: SimBudget = DEFAULT_BUDGET

    def __call__(self, rng, size):
        return sn_batch(rng, self.spec, size, self.n, self.budget)


@dataclass(frozen=True)
class ProgenySampler:
    spec: object
    z0: int = 1
    budget: SimBudget = DEFAULT_BUDGET

    def __call__(self, rng, size):
        return total_progeny_batch(rng, self.spec, size, self.z0, self.budget)


@dataclass(frozen=True)
class StationarySampler:
    spec: object
    M: int
    budget: SimBudget = DEFAULT_BUDGET

    def __call__(self, rng, size):
        return stationary_batch(rng, self.spec, size, self.M, self.budget)


# --------------------------------------------------------------------------
# JSON-lines output
# --------------------------------------------------------------------------


def jsonl_records(kind: str, values, aborted, first: int = 0):
    """Yield JSON-lines strings {replica, outcome, value, aborted}."""
    for i, (v, a) in enumerate(zip(values, aborted)):
        rec = {"replica": first + i, "outcome": kind, "value": int(v), "aborted": bool(a)}
        yield json.dumps(rec, sort_keys=True)


def coupled_record(rep: int, sample: PathSample | None, exc=None) -> str:
    if sample is None:
        rec = {"replica": rep, "outcome": "coupled", "aborted": True, "reason": type(exc).__name__,
               "lower_bound": getattr(exc, "lower_bound", None)}
    else:
        rec = {"replica": rep, "outcome": "coupled", "aborted": False, "traj": sample.traj, "s_n": sample.s_n,
               "s_n1": sample.s_n1, "s_n2": sample.s_n2, "per_immigrant": sample.per_immigrant}
    return json.dumps(rec, sort_keys=True)
