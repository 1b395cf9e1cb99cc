"""Exact distributional computations from generating functions.

All routines work in gap coordinates ``r = 1 - s``.  A function returning
``1 - F(1 - r)`` for a pgf ``F`` is called a *gap function* below; gap
functions keep full relative precision as ``s -> 1`` and can be chained
without cancellation (``1 - f_k(s)`` is just the k-th iterate of
``model.one_minus_f``).

Distributions are recovered in two ways:

* :func:`extract_series` reads coefficients off the tail generating function
  ``Q(z) = (1 - F(z)) / (1 - z) = sum_k P(>k) z^k`` on a circle of radius
  ``r < 1`` with an FFT;
* :func:`invert_tail` evaluates single tail values ``P(> x)`` for very large
  ``x`` by numerical Laplace inversion (Euler-accelerated Fourier series).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

from ._numerics import circle_gaps, log1p_c
from .errors import (
    DegenerateGrid,
    NegativeMass,
    NonConvergence,
    OutOfRange,
    RadiusIllConditioned,
    TruncationBudgetExceeded,
    UndefinedAsymptotic,
)
from .models import HeavyModel, VeryHeavyModel

GapFunction = Callable[[np.ndarray], np.ndarray]

MAX_FACTORS = 10**6
CLAMP_SILENT = 1e-12
CLAMP_LIMIT = 1e-9


# --------------------------------------------------------------------------
# power series container
# --------------------------------------------------------------------------


@dataclass
class PowerSeries:
    """Masses ``c_0..c_{N-1}`` of a distribution on the integers plus the mass beyond.

    ``tail_mass = 1 - sum(coeffs)`` is the probability of ``{N, N+1, ...}``.
    """

    coeffs: np.ndarray
    tail_mass: float
    n_points: int
    radius: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)

    def __len__(self):
        return len(self.coeffs)

    def tails(self) -> np.ndarray:
        """Lower ends of P(> k) for k = 0..N-1 (exact up to ``tail_mass``)."""
        c = self.coeffs
        return np.concatenate([np.cumsum(c[::-1])[::-1][1:], [0.0]])

    def to_csv(self, path_or_file) -> None:
        rows = [(k, float(c)) for k, c in enumerate(self.coeffs)]
        rows.append(("tail_mass", float(self.tail_mass)))
        _write_rows(path_or_file, ["k", "mass"], rows)

    def metadata(self) -> dict:
        return {"N": self.n_points, "radius": self.radius, "tail_mass": self.tail_mass, **self.meta}

    def to_json(self) -> str:
        return json.dumps(self.metadata(), sort_keys=True)


def _write_rows(path_or_file, header, rows):
    if hasattr(path_or_file, "write"):
        w = csv.writer(path_or_file, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        return
    with open(path_or_file, "w", newline="") as fh:
        _write_rows(fh, header, rows)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{v:.9e}"
    return str(v)


# --------------------------------------------------------------------------
# iteration of f
# --------------------------------------------------------------------------


@dataclass
class IterationState:
    """Gaps R_k = 1 - f_k(x) for a batch of points, advanced lazily."""

    spec: object
    R: np.ndarray
    k: int = 0

    @classmethod
    def start(cls, spec, x):
        return cls(spec, 1.0 - np.asarray(x))

    @classmethod
    def from_gap(cls, spec, r):
        return cls(spec, np.asarray(r))

    def advance(self, steps: int = 1) -> "IterationState":
        for _ in range(steps):
            self.R = self.spec.one_minus_f(self.R)
        self.k += steps
        return self

    @property
    def value(self):
        return 1.0 - self.R


def iterate_gap(spec, k: int, r):
    """1 - f_k(1 - r)."""
    return IterationState.from_gap(spec, r).advance(k).R


def iterate_f(spec, k: int, x):
    """k-fold composition f_k(x) = f(f(...f(x)))."""
    if k < 0:
        raise ValueError("k must be >= 0")
    x = np.asarray(x)
    out = 1.0 - iterate_gap(spec, k, 1.0 - x)
    out = np.where(x == 1, 1.0, out) if k > 0 else x
    return out[()] if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# total progeny h(x) = x f(h(x))
# --------------------------------------------------------------------------


def _f_prime_gap(spec, H):
    """d/dH of 1 - f(1 - H)."""
    if isinstance(spec, HeavyModel):
        return 1.0 - spec.c1 * (1 + spec.nu) * H**spec.nu
    # keep both H +- step inside the disk |1 - H| <= 1
    step = 1e-6 * np.maximum(np.minimum(np.abs(H), np.abs(1 - H)), 1e-300)
    return (spec.one_minus_f(H + step) - spec.one_minus_f(H - step)) / (2 * step)


def _progeny_residual(spec, H, R):
    # h - x f(h) expressed with H = 1 - h, R = 1 - x
    return R + (1 - R) * spec.one_minus_f(H) - H


def progeny_gap(spec, r, tol: float = 1e-12, max_iter: int = 200_000):
    """H = 1 - h(1 - r), where h solves h = x f(h).

    Real gaps use a bracketing root solve on [0, 1] (the residual is
    monotone there); complex gaps use Newton from a power-law guess,
    falling back to the fixed-point iteration ``h <- x f(h)`` from 0.
    """
    r = np.asarray(r)
    scalar = r.ndim == 0
    rr = np.atleast_1d(r)
    if np.iscomplexobj(rr) and np.any(rr.imag != 0):
        out = _progeny_complex(spec, rr.astype(complex), tol, max_iter)
    else:
        rr = rr.real.astype(float)
        out = np.array([_progeny_real(spec, float(v), tol) for v in rr])
    return out[0] if scalar else out


def _progeny_real(spec, R, tol):
    if R == 0:
        return 0.0
    if R >= 1:
        return 1.0

    def phi(H):
        # (1-R)(H - F(H)) - R(1-H): increasing in H, -R at 0, (1-R)P(xi=0) at 1
        return float((1 - R) * (H - spec.one_minus_f(H)) - R * (1 - H))

    lo = 0.0
    hi = 1.0
    if isinstance(spec, HeavyModel):
        guess = (R / (spec.c1 * (1 - R) + R)) ** (1 / (1 + spec.nu))
        hi = min(1.0, 2 * guess)
        if phi(hi) < 0:
            lo, hi = hi, 1.0
    H = optimize.brentq(phi, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    res = abs(float(_progeny_residual(spec, H, R)))
    if res > tol:
        raise NonConvergence(f"total progeny solve at x={1 - R}: residual {res:.3g}", residual=res)
    return H


def _progeny_complex(spec, R, tol, max_iter):
    if isinstance(spec, HeavyModel):
        H = (R / (spec.c1 * (1 - R) + R)) ** (1 / (1 + spec.nu))
    else:
        # a few fixed-point steps from H = 1 (h = 0) land near the root when |x| is small
        H = np.ones_like(R)
        for _ in range(3):
            H = R + (1 - R) * spec.one_minus_f(H)
    H = np.where(R == 0, 0.0, H)
    for _ in range(100):
        g = _progeny_residual(spec, H, R)
        dg = (1 - R) * _f_prime_gap(spec, H) - 1.0
        step = g / np.where(dg == 0, 1.0, dg)
        H = H - step
        if np.all(np.abs(step) <= 1e-15 * np.abs(H) + 1e-300):
            break
    bad = _progeny_bad(spec, H, R, tol)
    if np.any(bad):
        idx = np.flatnonzero(bad)
        Hb = np.ones(len(idx), dtype=complex)
        Rb = R[idx]
        for _ in range(max_iter):
            Hn = Rb + (1 - Rb) * spec.one_minus_f(Hb)
            if np.all(np.abs(Hn - Hb) <= 1e-16 * np.abs(Hn)):
                Hb = Hn
                break
            Hb = Hn
        H[idx] = Hb
        still = _progeny_bad(spec, H, R, tol)
        if np.any(still):
            worst = float(np.max(np.abs(_progeny_residual(spec, H[still], R[still]))))
            raise NonConvergence("total progeny solve failed at complex points", residual=worst)
    return H


def _progeny_bad(spec, H, R, tol):
    res = np.abs(_progeny_residual(spec, H, R))
    return ~np.isfinite(res) | (res > tol) | (np.abs(1 - H) > 1 + 1e-12)


def total_progeny_pgf(spec, x):
    """h(x) = E x^T for a single ancestor; solves h = x f(h)."""
    x = np.asarray(x)
    out = 1.0 - progeny_gap(spec, 1.0 - x)
    return out[()] if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# stationary law P(x) = prod_k g(f_k(x))
# --------------------------------------------------------------------------


def _log_g(spec, R):
    """log g(1 - R), accurate when 1 - g is tiny."""
    G = spec.one_minus_g(R)
    return log1p_c(-G) if np.iscomplexobj(G) else np.log1p(-G)


@dataclass(frozen=True)
class _FatouTail:
    """Closed-form sum over k >= K of -log g(f_k) for the heavy family.

    With w = R^-nu the offspring map becomes w -> w (1 - c1/w)^-nu, a
    near-translation.  The sum is turned into an integral in the flow time
    of that translation plus Euler-Maclaurin end corrections.
    """

    nu: float
    delta: float
    c1: float
    c2: float
    orders: int = 4

    @property
    def coeffs(self):
        nu, c1 = self.nu, self.c1
        c = [c1**m * special.poch(nu, m) / math.factorial(m) for m in range(1, 5)]
        A = c[0]
        B = c[1]
        D = c[2] + A * B / 2
        E = c[3] + (2 * A * D + B * B) / 2 - A * A * B / 3
        return A, B, D, E

    def flow(self, w):
        A, B, D, E = self.coeffs
        return A + B / w + D / w**2 + E / w**3

    def __call__(self, w):
        A, B, D, E = self.coeffs
        b1, b2, b3 = B / A, D / A, E / A
        d = [1.0, -b1, b1 * b1 - b2, -(b1**3) + 2 * b1 * b2 - b3]
        gam = self.delta / self.nu
        integral = 0.0
        for j in range(1, self.orders + 1):
            for i, di in enumerate(d):
                p = j * gam + i - 1
                integral = integral + self.c2**j / j * di / A * w ** (-p) / p
        u = self.c2 * w ** (-gam)
        phi = -log1p_c(-u) if np.iscomplexobj(u) else -np.log1p(-u)
        dphi = -self.c2 * gam * w ** (-gam - 1) / (1 - u)
        return integral + 0.5 * phi - dphi * self.flow(w) / 12.0


def _heavy_log_stationary(spec: HeavyModel, R, w_switch: float = 100.0):
    """log P at gaps R (array) and the number of explicit factors used."""
    R = np.array(R, copy=True)
    acc = np.zeros(R.shape, dtype=R.dtype)
    r_switch = w_switch ** (-1.0 / spec.nu)
    K = 0
    while np.any(np.abs(R) > r_switch):
        acc = acc + _log_g(spec, R)
        R = spec.one_minus_f(R)
        K += 1
        if K > MAX_FACTORS:
            raise TruncationBudgetExceeded(f"more than {MAX_FACTORS} factors")
    tail = _FatouTail(spec.nu, spec.delta, spec.c1, spec.c2)
    nz = R != 0
    w = np.where(nz, R, 1.0) ** (-spec.nu)
    acc = acc - np.where(nz, tail(w), 0.0)
    return acc, K


def _stationary_bound(spec, R):
    """Bound on the omitted part of -log P after the factor with gap R."""
    if isinstance(spec, VeryHeavyModel):
        return 2 * spec.p / spec.delta * np.abs(R) ** spec.delta
    raise UndefinedAsymptotic(f"no truncation bound for family {spec.family!r}")


def _brute_log_stationary(spec, R, tol: float, start: int = 0, max_factors: int = MAX_FACTORS):
    """Sum of log g(f_k) for k >= start until the remainder bound is below tol (relative)."""
    R = np.array(R, copy=True)
    R = iterate_gap(spec, start, R) if start else R
    acc = np.zeros(R.shape, dtype=complex if np.iscomplexobj(R) else float)
    K = 0
    while True:
        bound = _stationary_bound(spec, R)
        if np.all(bound <= tol * np.maximum(np.abs(acc), 1e-300)) and K > 0:
            break
        if np.all(R == 0):
            break
        if K >= max_factors:
            raise TruncationBudgetExceeded(
                f"remainder bound {float(np.max(bound)):.3g} after {K} factors exceeds tolerance"
            )
        acc = acc + _log_g(spec, R)
        R = spec.one_minus_f(R)
        K += 1
    return acc, K, float(np.max(bound))


def flow_tail_sum(spec, r: float, rel: float = 1e-11) -> float:
    """Estimate sum_{k>=0} -log g(f_k(1 - r)) for a real gap r by a flow-time integral.

    In l = -log R one step adds v(l) = -log(1 - decay(R)).  The steps are
    matched by the flow with velocity V = v - v v'/2, and the sum over
    integer flow times is Euler-Maclaurin: integral + first term / 2 - slope / 12.
    Accuracy is limited by the neglected O(v v'^2) terms, which are tiny
    when decay(R) is small.
    """
    l0 = -math.log(r)

    def phi(l):
        return float(-np.log1p(-spec.one_minus_g(math.exp(-l))))

    def v(l):
        return float(-np.log1p(-spec.decay(math.exp(-l))))

    def V(l, h=1e-3):
        dv = (v(l + h) - v(l - h)) / (2 * h)
        return v(l) * (1 - 0.5 * dv)

    top = min(l0 + 60.0 / spec.delta, 700.0)
    integral, _ = integrate.quad(lambda l: phi(l) / V(l), l0, top, epsabs=0, epsrel=rel, limit=200)
    h = 1e-3
    dphi = (phi(l0 + h) - phi(l0 - h)) / (2 * h)
    return integral + 0.5 * phi(l0) - dphi * V(l0) / 12.0


def log_stationary_gap(spec, r, tol: float = 1e-10, flow: bool = False):
    """(log P(1 - r), number of explicit factors) for an array of gaps.

    ``flow=True`` (log-corrected family, real gaps only) replaces the
    truncated product by :func:`flow_tail_sum`, which stays cheap for gaps
    far below machine epsilon.
    """
    r = np.asarray(r)
    if isinstance(spec, HeavyModel):
        return _heavy_log_stationary(spec, r)
    if isinstance(spec, VeryHeavyModel):
        if flow:
            if np.iscomplexobj(r):
                raise ValueError("flow summation is implemented for real gaps only")
            vals = np.array([-flow_tail_sum(spec, float(v)) if v > 0 else 0.0 for v in np.atleast_1d(r)])
            return vals.reshape(r.shape), 0
        acc, K, _ = _brute_log_stationary(spec, r, tol)
        return acc, K
    raise UndefinedAsymptotic(f"stationary law not available for family {spec.family!r}")


def stationary_gap(spec, r, tol: float = 1e-10, flow: bool = False):
    """1 - P(1 - r)."""
    logp, _ = log_stationary_gap(spec, r, tol, flow)
    return -np.expm1(logp)


def stationary_pgf(spec, x, tol: float = 1e-10):
    """P(x) = E x^X for the stationary law; returns ``(value, K)``.

    K is the number of factors g(f_k(x)) multiplied explicitly.  For the
    heavy family the remaining factors are summed in closed form to near
    machine precision; for the log-corrected family the product is
    truncated once the remainder bound drops below ``tol`` (relative).
    """
    x = np.asarray(x)
    logp, K = log_stationary_gap(spec, 1.0 - x, tol)
    val = np.exp(logp)
    return (val[()] if np.ndim(val) == 0 else val), K


def pn_gap(spec, n: int, r):
    """1 - P_n(1 - r) with P_n the law of X_n started from X_0 = 0."""
    R = np.asarray(r)
    acc = np.zeros(R.shape, dtype=complex if np.iscomplexobj(R) else float)
    for _ in range(n):
        acc = acc + _log_g(spec, R)
        R = spec.one_minus_f(R)
    return -np.expm1(acc)


def pn_pgf(spec, n: int, x):
    """P_n(x) = prod_{k<n} g(f_k(x))."""
    if n < 0:
        raise ValueError("n must be >= 0")
    x = np.asarray(x)
    out = 1.0 - pn_gap(spec, n, 1.0 - x)
    return out[()] if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# partial sums S_n and the immigrant-family laws
# --------------------------------------------------------------------------


def sn_gap(spec, n: int, r):
    """1 - E x^{S_n} at x = 1 - r.

    Uses E x^{S_n} = prod_{m<n} g(A_m(x)) with A_0 = x, A_{m+1} = x f(A_m);
    in gaps B_m = 1 - A_m this is B_{m+1} = r + (1 - r)(1 - f(1 - B_m)).
    """
    r = np.asarray(r)
    B = r
    acc = np.zeros(r.shape, dtype=complex if np.iscomplexobj(r) else float)
    for _ in range(n):
        acc = acc + _log_g(spec, B)
        B = r + (1 - r) * spec.one_minus_f(B)
    return -np.expm1(acc)


def sn_pgf(spec, n: int, x):
    x = np.asarray(x)
    out = 1.0 - sn_gap(spec, n, 1.0 - x)
    return out[()] if np.ndim(out) == 0 else out


def y_inf_gap(spec, r):
    """1 - g(h(x)): total progeny of one immigrant batch."""
    return spec.one_minus_g(progeny_gap(spec, r))


def s_inf_gap(spec, r, tol: float = 1e-10):
    """1 - P(f(h(x))): all future descendants of the stationary population."""
    return stationary_gap(spec, spec.one_minus_f(progeny_gap(spec, r)), tol)


def progeny_gap_fn(spec):
    return lambda r: progeny_gap(spec, r)


# --------------------------------------------------------------------------
# coefficient extraction
# --------------------------------------------------------------------------


ALIAS_TOL = 1e-14


def extraction_radius(n_points: int, x_target: int) -> float:
    return float(np.clip(n_points ** (-1.0 / (x_target + 1)), 0.9, 1 - 1e-6))


def extract_series(gap_fn: GapFunction, N: int, x_target: int | None = None, oversample: int = 4,
                   meta: dict | None = None) -> PowerSeries:
    """Masses c_0..c_{N-1} of the law whose pgf F satisfies gap_fn(r) = 1 - F(1 - r).

    The tail generating function Q(z) = gap_fn(1 - z) / (1 - z) is sampled at
    M = oversample * N points (doubled until rho^M <= 1e-14) on the circle
    |z| = rho, with rho = (oversample N)^(-1/(x_target+1)) clipped to
    [0.9, 1 - 1e-6].  Because every
    coefficient of Q is nonnegative, aliasing can only raise the recovered
    tail values, by at most rho^M times the tail value itself.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if x_target is None:
        x_target = N - 1
    M = oversample * N
    rho = extraction_radius(M, x_target)
    # small N: more points so the alias term stays below ALIAS_TOL
    while rho**M > ALIAS_TOL:
        M *= 2
    log_amp = -(N - 1) * math.log(rho)
    if log_amp > 690:
        raise RadiusIllConditioned(f"rho^-(N-1) = exp({log_amp:.1f}) overflows")
    R = circle_gaps(rho, M)
    Q = gap_fn(R) / R
    q = np.fft.fft(Q).real[:N] / M
    q = q * np.exp(-np.arange(N) * math.log(rho))
    masses = np.empty(N)
    masses[0] = 1.0 - q[0]
    masses[1:] = q[:-1] - q[1:]
    info = dict(meta or {})
    info.update(radius=rho, points=M, alias_factor=rho**M, amplification=math.exp(log_amp))
    masses, clamped = _clamp(masses)
    if clamped:
        info["clamped"] = clamped
    tail_mass = max(0.0, 1.0 - math.fsum(masses))
    return PowerSeries(masses, tail_mass, N, rho, info)


def _clamp(masses):
    neg = masses < 0
    if not neg.any():
        return masses, 0
    worst = float(masses.min())
    if worst < -CLAMP_LIMIT:
        k = int(np.argmin(masses))
        raise NegativeMass(f"extracted mass {worst:.3g} at k={k} below floor -{CLAMP_LIMIT:g}")
    noted = int(np.count_nonzero(masses < -CLAMP_SILENT))
    out = np.where(neg, 0.0, masses)
    return out, noted


def sn_pgf_series(spec, n: int, N: int, x_target: int | None = None) -> PowerSeries:
    """Law of S_n = X_1 + ... + X_n (X_0 = 0) as a truncated power series."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if N & (N - 1):
        raise ValueError("N must be a power of two")
    if n == 0:
        c = np.zeros(N)
        c[0] = 1.0
        return PowerSeries(c, 0.0, N, None, {"law": "S_n", "n": 0})
    return extract_series(lambda r: sn_gap(spec, n, r), N, x_target, meta={"law": "S_n", "n": n})


def y_inf_series(spec, N: int, x_target: int | None = None) -> PowerSeries:
    """Total progeny of one immigrant batch, pgf g(h(x))."""
    return extract_series(lambda r: y_inf_gap(spec, r), N, x_target, meta={"law": "Y_inf"})


def s_inf_series(spec, N: int, x_target: int | None = None) -> PowerSeries:
    """Future descendants of a stationary population, pgf P(f(h(x)))."""
    return extract_series(lambda r: s_inf_gap(spec, r), N, x_target, meta={"law": "S_inf"})


def stationary_series(spec, N: int, x_target: int | None = None) -> PowerSeries:
    """Stationary law of X_n, pgf P(x)."""
    return extract_series(lambda r: stationary_gap(spec, r), N, x_target, meta={"law": "X"})


def progeny_series(spec, N: int, x_target: int | None = None) -> PowerSeries:
    """Total progeny T of a single ancestor, pgf h(x)."""
    return extract_series(lambda r: progeny_gap(spec, r), N, x_target, meta={"law": "T"})


def pn_series(spec, n: int, N: int, x_target: int | None = None) -> PowerSeries:
    """Law of X_n started from X_0 = 0."""
    return extract_series(lambda r: pn_gap(spec, n, r), N, x_target, meta={"law": "X_n", "n": n})


def exact_tail(series: PowerSeries, x: int) -> tuple[float, float]:
    """Bracket [lo, hi] for P(> x) from a truncated series."""
    if x < 0:
        return 1.0, 1.0
    if x >= series.n_points:
        raise OutOfRange(f"x={x} beyond the series length {series.n_points}")
    lo = math.fsum(series.coeffs[x + 1 :])
    return lo, min(1.0, lo + series.tail_mass)


# --------------------------------------------------------------------------
# far tails by Laplace inversion
# --------------------------------------------------------------------------


@dataclass
class InvertedTail:
    x: np.ndarray
    value: np.ndarray
    error: np.ndarray

    @property
    def lo(self):
        return np.maximum(self.value - self.error, 0.0)

    @property
    def hi(self):
        return np.minimum(self.value + self.error, 1.0)


def _euler_sum(gap_fn, t, A, n_terms, m_terms):
    k = np.arange(n_terms + m_terms + 1)
    s = (A + 2j * np.pi * k[None, :]) / (2 * t[:, None])
    R = -np.expm1(-s)
    L = gap_fn(R.ravel()).reshape(R.shape) / s
    a = np.exp(A / 2) / t[:, None] * ((-1.0) ** k)[None, :] * L.real
    a[:, 0] *= 0.5
    partial = np.cumsum(a, axis=1)[:, n_terms:]
    weights = special.binom(m_terms, np.arange(m_terms + 1)) / 2.0**m_terms
    return partial @ weights


SMALL_X = 4096


def _cauchy_tail(gap_fn, x: int, alias: float = 1e-14):
    """P(> x) as one Taylor coefficient of Q(z) = (1 - F(z)) / (1 - z).

    Trapezoidal Cauchy integral with M = 8 (x + 1) points on |z| = rho where
    rho^M = alias; aliasing adds at most ``alias`` (all coefficients of Q lie in [0, 1]).
    """
    M = max(64, 8 * (x + 1))
    rho = alias ** (1.0 / M)
    R = circle_gaps(rho, M)
    Q = gap_fn(R) / R
    j = np.arange(M)
    phase = np.exp(-2j * np.pi * ((j * x) % M) / M)
    val = float(np.real(np.sum(Q * phase)) / M) * rho ** (-x)
    err = alias + 1e-15 * M * float(np.max(np.abs(Q))) * rho ** (-x)
    return val, err


def invert_tail(gap_fn: GapFunction, xs, A: float = 18.4) -> InvertedTail:
    """P(> x) for integers x >= 0 from a gap function.

    Large x use Euler-summed Laplace inversion: the step function
    q(t) = P(> floor(t)) has Laplace transform (1 - F(e^-s)) / s, inverted at
    the continuity points t = x + 1/2.  Two truncation settings are
    compared; their difference plus the e^-A discretisation term is reported
    as ``error``.  Below ``SMALL_X`` the lattice structure slows the Euler
    sums, so a single Cauchy coefficient is computed instead.
    """
    x = np.atleast_1d(np.asarray(xs, dtype=float))
    value = np.empty(len(x))
    error = np.empty(len(x))
    small = x < SMALL_X
    for i in np.flatnonzero(small):
        value[i], error[i] = _cauchy_tail(gap_fn, int(x[i]))
    big = ~small
    if big.any():
        t = np.floor(x[big]) + 0.5
        v1 = _euler_sum(gap_fn, t, A, 20, 12)
        v2 = _euler_sum(gap_fn, t, A, 32, 14)
        value[big] = v2
        error[big] = np.abs(v1 - v2) + 2 * math.exp(-A) * np.abs(v2) + 1e-15
    return InvertedTail(x, value, error)


def sn_tail(spec, n: int, xs) -> InvertedTail:
    return invert_tail(lambda r: sn_gap(spec, n, r), xs)


def stationary_tail(spec, xs) -> InvertedTail:
    return invert_tail(lambda r: stationary_gap(spec, r), xs)


def y_inf_tail(spec, xs) -> InvertedTail:
    return invert_tail(lambda r: y_inf_gap(spec, r), xs)


def s_inf_tail(spec, xs) -> InvertedTail:
    return invert_tail(lambda r: s_inf_gap(spec, r), xs)


# --------------------------------------------------------------------------
# Near-one stationary ratio and fits
# --------------------------------------------------------------------------


@dataclass
class LemmaRatio:
    n: int
    x: float
    ratio: float
    gap_n: float
    factors: int
    bound: float


def lemma1_ratio(spec, n: int, x: float, tol: float = 1e-7, detail: bool = False):
    """(P_n(x)/P(x) - 1) / (p delta^-1 (1 - f_n(x))^delta) for the log-corrected family.

    P_n(x)/P(x) = 1 / prod_{k>=n} g(f_k(x)), so only the factors from k = n on
    are needed.  ``tol`` bounds the omitted part relative to their sum.
    """
    if not isinstance(spec, VeryHeavyModel):
        raise UndefinedAsymptotic("the ratio is defined for the log-corrected (nu = 0) family only")
    if not 0 < x < 1:
        raise ValueError("x must lie in (0, 1)")
    R_n = float(iterate_gap(spec, n, 1.0 - x))
    acc, K, bound = _brute_log_stationary(spec, np.array([R_n]), tol)
    excess = math.expm1(-float(acc[0]))
    ratio = excess / (spec.p / spec.delta * R_n**spec.delta)
    if detail:
        return LemmaRatio(n, x, ratio, R_n, K, bound)
    return ratio


@dataclass
class ExponentFit:
    exponent: float
    prefactor: float
    tail_constant: float
    residual: float

    def __iter__(self):
        yield self.exponent
        yield self.prefactor


def near_one_exponent_fit(one_minus_F, s_grid=None, *, gaps=None) -> ExponentFit:
    """Fit 1 - F(s) ~ K (1 - s)^e by least squares on log-log axes.

    Pass either ``s_grid`` (values increasing to 1; ``one_minus_F`` receives s)
    or ``gaps`` (values 1 - s; ``one_minus_F`` receives the gaps, which keeps
    full precision extremely close to one).  The tail constant K / Gamma(1 - e)
    is the Tauberian conversion to P(> x) ~ const x^-e.
    """
    if (s_grid is None) == (gaps is None):
        raise TypeError("give exactly one of s_grid or gaps")
    if gaps is None:
        s = np.asarray(s_grid, dtype=float)
        if s.ndim != 1 or np.any(np.diff(s) <= 0) or np.any((s <= 0) | (s >= 1)):
            raise DegenerateGrid("s_grid must increase strictly inside (0, 1)")
        r = 1.0 - s
        vals = np.asarray([float(np.real(one_minus_F(v))) for v in s])
    else:
        r = np.asarray(gaps, dtype=float)
        if r.ndim != 1 or np.any(r <= 0) or np.any(r >= 1):
            raise DegenerateGrid("gaps must lie inside (0, 1)")
        vals = np.asarray([float(np.real(one_minus_F(v))) for v in r])
    if len(np.unique(r)) < 2:
        raise DegenerateGrid("need at least two distinct grid points")
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise DegenerateGrid("1 - F must be positive and finite on the grid")
    X = np.log(r)
    Y = np.log(vals)
    (slope, intercept), res, *_ = np.polyfit(X, Y, 1, full=True)
    resid = float(np.sqrt(res[0] / len(X))) if len(res) else 0.0
    prefactor = math.exp(intercept)
    return ExponentFit(float(slope), prefactor, prefactor * float(special.rgamma(1 - slope)), resid)

