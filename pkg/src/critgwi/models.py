"""Offspring and immigration laws with closed-form tails.

Three families are provided:

``HeavyModel``
    offspring pgf ``f(s) = s + c1 (1-s)^(1+nu)`` and scaled Sibuya immigration
    ``g(s) = 1 - c2 (1-s)^delta``, 0 < nu < delta < 1.
``VeryHeavyModel``
    nu = 0 family defined by its tails,
    ``P(xi > n) = kappa / ((n+1) log(n+1+e)^(1+a))`` for n >= 1 and
    ``P(eta > n) = min(1, cc (n+1)^-delta log(n+1+e)^-a)``; ``P(xi > 0) = q0`` is
    solved so that E xi = 1.
``FiniteModel``
    arbitrary finitely supported laws, used for brute-force cross checks.

Generating functions are evaluated in gap coordinates: for ``r = 1 - s``
every model exposes ``one_minus_f(r) = 1 - f(1-r)`` and
``one_minus_g(r) = 1 - g(1-r)``, both accepting complex arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np
from scipy import integrate, special

from ._numerics import log1p_c, log_rising_ratio, panel_nodes
from .errors import CapExceeded, InvalidModel, NoSolution

DEFAULT_CAP = 2**62
TABLE_SIZE = 2**16
_E = math.e


# --------------------------------------------------------------------------
# validation report
# --------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    required: bool = True


@dataclass
class ValidationReport:
    family: str
    params: dict
    checks: list[Check] = field(default_factory=list)
    criticality_residual: float | None = None
    stationarity_integral: float | None = None

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks if c.required)

    def add(self, name, passed, detail="", required=True):
        self.checks.append(Check(name, bool(passed), detail, required))

    def failures(self) -> list[Check]:
        return [c for c in self.checks if c.required and not c.passed]

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": self.params,
            "ok": self.ok,
            "criticality_residual": self.criticality_residual,
            "stationarity_integral": self.stationarity_integral,
            "checks": [
                {"name": c.name, "passed": c.passed, "detail": c.detail, "required": c.required}
                for c in self.checks
            ],
        }


# --------------------------------------------------------------------------
# smooth tails and their power sums (log-corrected family)
# --------------------------------------------------------------------------


class _SmoothTail:
    """A smooth, slowly decaying sequence tau(n) and its far power sums.

    ``power_sum(c)`` returns sum_{n > n0} tau(n) exp(-c n) for complex c with
    Re c >= 0.  Small |c| uses Euler-Maclaurin with the integral taken along a
    ray rotated halfway towards the decay direction of exp(-c x); larger |c|
    sums terms directly until they are negligible.
    """

    C_SWITCH = 0.05
    MAX_DIRECT = 2**23

    def __init__(self, func, n0: int):
        self.func = func
        self.n0 = n0
        h = 4.0
        x = float(n0)
        v = [func(np.array([x + k * h]))[0].real for k in (-2, -1, 0, 1, 2)]
        self.d0 = v[2]
        self.d1 = (v[3] - v[1]) / (2 * h)
        self.d2 = (v[3] - 2 * v[2] + v[1]) / h**2
        self.d3 = (v[4] - 2 * v[3] + 2 * v[1] - v[0]) / (2 * h**3)

    def power_sum(self, c: np.ndarray) -> np.ndarray:
        c = np.asarray(c, dtype=complex)
        out = np.zeros(c.shape, dtype=complex)
        if np.any(c.real < -1e-300):
            raise ValueError("power sums need |z| <= 1")
        small = np.abs(c) < self.C_SWITCH
        nonzero = c != 0
        idx = np.flatnonzero(small & nonzero)
        for chunk in np.array_split(idx, max(1, len(idx) // 128)):
            if len(chunk):
                out[chunk] = self._euler_maclaurin(c[chunk])
        for i in np.flatnonzero(~small):
            out[i] = self._direct(c[i])
        return out

    def _euler_maclaurin(self, c):
        n0 = float(self.n0)
        ec = np.exp(-c * n0)
        boundary = (
            -0.5 * self.d0
            - (self.d1 - c * self.d0) / 12.0
            + (self.d3 - 3 * c * self.d2 + 3 * c**2 * self.d1 - c**3 * self.d0) / 720.0
        ) * ec
        theta = np.angle(c)
        rot = np.exp(-0.5j * theta)
        speed = np.abs(c) * np.cos(0.5 * theta) * n0
        upper = np.log1p(50.0 / speed)
        nodes, weights = panel_nodes(float(upper.max()))
        ey = np.exp(nodes)[None, :]
        x = n0 + n0 * (ey - 1.0) * rot[:, None]
        damp = np.exp(-(c * rot)[:, None] * n0 * (ey - 1.0))
        vals = self.func(x) * damp * (n0 * ey) * rot[:, None]
        vals[:, :] = np.where(nodes[None, :] <= upper[:, None] + 1.0, vals, 0.0)
        integral = ec * (vals @ weights)
        return integral + boundary

    def _direct(self, c):
        if c.real <= 0:
            raise ValueError("direct power sum needs |z| < 1")
        n_end = self.n0 + int(math.ceil(42.0 / c.real)) + 1
        if n_end - self.n0 > self.MAX_DIRECT:
            from .errors import RadiusIllConditioned

            raise RadiusIllConditioned(
                f"power sum at |z|={math.exp(-c.real):.12f} needs {n_end - self.n0} terms"
            )
        total = 0j
        start = self.n0 + 1
        while start <= n_end:
            stop = min(n_end, start + 2**20)
            n = np.arange(start, stop + 1, dtype=float)
            total += np.sum(self.func(n.astype(complex)) * np.exp(-c * n))
            start = stop + 1
        return total


# --------------------------------------------------------------------------
# model families
# --------------------------------------------------------------------------


class _SamplingMixin:
    """Tabulated tails for inverse-transform sampling."""

    @cached_property
    def _xi_table(self) -> np.ndarray:
        return np.asarray(self.xi_tail(np.arange(TABLE_SIZE + 1)), dtype=float)

    @cached_property
    def _eta_table(self) -> np.ndarray:
        return np.asarray(self.eta_tail(np.arange(TABLE_SIZE + 1)), dtype=float)


@dataclass(frozen=True)
class HeavyModel(_SamplingMixin):
    """Constant slowly varying parts: L1 = c1, L2 = c2."""

    nu: float
    delta: float
    c1: float
    c2: float

    family = "heavy"

    def __post_init__(self):
        problems = _heavy_param_problems(self.nu, self.delta, self.c1, self.c2)
        if problems:
            raise InvalidModel("; ".join(problems))

    # -- tails and masses ------------------------------------------------
    def xi_tail(self, n):
        n = np.asarray(n)
        nf = np.maximum(n, 1).astype(float)
        coef = self.c1 * self.nu * special.rgamma(1 - self.nu)
        tail = coef * np.exp(log_rising_ratio(nf, -self.nu, 1.0))
        out = np.where(n == 0, 1.0 - self.c1, tail)
        return out[()] if out.ndim == 0 else out

    def xi_pmf(self, k):
        k = np.asarray(k)
        prev = self.xi_tail(np.maximum(k - 1, 1))
        generic = prev * (1 + self.nu) / np.maximum(k, 1)
        out = np.where(k == 0, self.c1, np.where(k == 1, 1 - self.c1 * (1 + self.nu), generic))
        return out[()] if out.ndim == 0 else out

    def eta_tail(self, n):
        n = np.asarray(n, dtype=float)
        out = self.c2 * special.rgamma(1 - self.delta) * np.exp(log_rising_ratio(n, 1 - self.delta, 1.0))
        return out[()] if out.ndim == 0 else out

    def eta_pmf(self, k):
        k = np.asarray(k)
        prev = self.eta_tail(np.maximum(k - 1, 0))
        out = np.where(k == 0, 1 - self.c2, prev * self.delta / np.maximum(k, 1))
        return out[()] if out.ndim == 0 else out

    def xi_tail_sum_beyond(self, n: int) -> float:
        """sum_{m > n} P(xi > m), in closed form."""
        return float(self.c1 * special.rgamma(1 - self.nu) * np.exp(log_rising_ratio(n + 1, -self.nu, 0.0)))

    # -- generating functions in gap coordinates --------------------------
    def one_minus_f(self, r):
        r = np.asarray(r)
        return r - self.c1 * r ** (1 + self.nu)

    def one_minus_g(self, r):
        return self.c2 * np.asarray(r) ** self.delta

    def decay(self, r):
        """(f(s) - s) / (1 - s) at s = 1 - r."""
        return self.c1 * np.asarray(r) ** self.nu

    def L1(self, y):
        return np.full_like(np.asarray(y, dtype=float), self.c1)

    def L2(self, y):
        return np.full_like(np.asarray(y, dtype=float), self.c2)

    def to_dict(self) -> dict:
        return {"family": self.family, "nu": self.nu, "delta": self.delta, "c1": self.c1, "c2": self.c2}


def _heavy_param_problems(nu, delta, c1, c2) -> list[str]:
    problems = []
    if not (0 < nu < 1):
        problems.append(f"nu={nu} must lie in (0,1)")
    if not (0 < delta < 1):
        problems.append(f"delta={delta} must lie in (0,1)")
    if not nu < delta:
        problems.append(f"nu={nu} >= delta={delta}: need 0 < nu < delta < 1")
    if not c1 > 0:
        problems.append(f"c1={c1} must be positive")
    elif 0 < nu < 1 and 1 - c1 * (1 + nu) < 0:
        problems.append(f"c1={c1} > 1/(1+nu): P(xi=1) = {1 - c1 * (1 + nu):.6g} < 0")
    if not (0 < c2 <= 1):
        problems.append(f"c2={c2} must lie in (0,1]: g(0) = 1 - c2")
    return problems


def _vh_xi_tail_func(a, kappa):
    def func(x):
        return kappa / ((x + 1.0) * np.log(x + 1.0 + _E) ** (1.0 + a))

    return func


def _vh_eta_tail_func(a, delta, cc):
    def func(x):
        return cc * (x + 1.0) ** (-delta) * np.log(x + 1.0 + _E) ** (-a)

    return func


_Q0_N0 = 2**16


def _vh_tail_total(a: float, kappa: float, start: int) -> float:
    """sum_{n > start} kappa / ((n+1) log(n+1+e)^(1+a)) by Euler-Maclaurin."""
    func = _vh_xi_tail_func(a, kappa)
    x0 = float(start)
    u0 = math.log(x0 + 1 + _E)
    # d/dx log(x+1+e)^-a = -a / ((x+1+e) log^(1+a)); the mismatch (x+1) vs (x+1+e)
    # leaves a rapidly decaying remainder integral.
    main = kappa / a * u0 ** (-a)

    def rest(y):
        ey = math.exp(y)
        return 1.0 / ((ey + _E) * math.log(ey + _E) ** (1 + a))

    y0 = math.log(x0 + 1)
    extra, _ = integrate.quad(rest, y0, max(y0 + 50.0, 700.0), epsabs=0, epsrel=1e-13, limit=200)
    integral = main + kappa * _E * extra
    h = 1.0
    t0 = func(x0)
    t1 = (func(x0 + h) - func(x0 - h)) / (2 * h)
    return integral - 0.5 * t0 - t1 / 12.0


def _unit_tail_mass(a: float) -> float:
    """sum_{n>=1} 1 / ((n+1) log(n+1+e)^(1+a)): exact head plus Euler-Maclaurin tail."""
    n = np.arange(1, _Q0_N0 + 1, dtype=float)
    head = math.fsum(_vh_xi_tail_func(a, 1.0)(n))
    return head + _vh_tail_total(a, 1.0, _Q0_N0)


def solve_q0(spec) -> float:
    """P(xi > 0) making the log-corrected offspring law critical.

    ``spec`` is a :class:`VeryHeavyModel` or a mapping with ``a`` and
    ``kappa``.  Raises :class:`NoSolution` when the prescribed tail already
    carries mean >= 1 or when q0 would fall below P(xi > 1).
    """
    if isinstance(spec, Mapping):
        a, kappa = float(spec["a"]), float(spec["kappa"])
    else:
        a, kappa = float(spec.a), float(spec.kappa)
    if not kappa > 0:
        raise NoSolution(f"kappa={kappa}: degenerate offspring law (xi in {{0,1}} only)")
    if not a > 0:
        raise NoSolution(f"a={a} must be positive")
    total = kappa * _unit_tail_mass(a)
    if total >= 1:
        raise NoSolution(f"sum_(n>=1) P(xi>n) = {total:.12g} >= 1 for kappa={kappa}")
    q0 = 1.0 - total
    t1 = float(_vh_xi_tail_func(a, kappa)(1.0))
    if q0 < t1:
        raise NoSolution(f"q0={q0:.6g} < P(xi>1)={t1:.6g}: tail not monotone (kappa too large)")
    return q0


def kappa_for_q0(a: float, q0: float) -> float:
    """Offspring scale kappa for which :func:`solve_q0` returns ``q0``.

    q0 = 1 - kappa * S(a) is linear in kappa, so this is a division.
    """
    kappa = (1.0 - q0) / _unit_tail_mass(a)
    solve_q0({"a": a, "kappa": kappa})  # raises NoSolution if not admissible
    return float(kappa)


@dataclass(frozen=True)
class VeryHeavyModel(_SamplingMixin):
    """nu = 0 family with matched log(.)^-a corrections in offspring and immigration."""

    a: float
    delta: float
    kappa: float
    cc: float
    q0: float = field(init=False)
    p: float = field(init=False)

    family = "very_heavy"
    nu = 0.0
    N0 = 4096

    def __post_init__(self):
        problems = []
        if not self.a > 0:
            problems.append(f"a={self.a} must be positive")
        if not (0 < self.delta < 1):
            problems.append(f"delta={self.delta} must lie in (0,1)")
        if not (0 < self.cc <= 1):
            problems.append(f"cc={self.cc} must lie in (0,1]")
        if not self.kappa > 0:
            problems.append(f"kappa={self.kappa} must be positive")
        if problems:
            raise InvalidModel("; ".join(problems))
        object.__setattr__(self, "q0", solve_q0(self))
        object.__setattr__(self, "p", self.cc * math.gamma(1 - self.delta) * self.a / self.kappa)

    # -- tails and masses ------------------------------------------------
    def xi_tail(self, n):
        n = np.asarray(n)
        out = np.where(n == 0, self.q0, _vh_xi_tail_func(self.a, self.kappa)(n.astype(float)))
        return out[()] if out.ndim == 0 else out

    def xi_pmf(self, k):
        k = np.asarray(k)
        prev = self.xi_tail(np.maximum(k - 1, 0))
        out = np.where(k == 0, 1.0 - self.q0, prev - self.xi_tail(k))
        return out[()] if out.ndim == 0 else out

    def eta_tail(self, n):
        n = np.asarray(n, dtype=float)
        out = np.minimum(1.0, _vh_eta_tail_func(self.a, self.delta, self.cc)(n))
        return out[()] if out.ndim == 0 else out

    def eta_pmf(self, k):
        k = np.asarray(k)
        prev = np.where(k == 0, 1.0, self.eta_tail(np.maximum(k - 1, 0)))
        out = prev - self.eta_tail(k)
        return out[()] if out.ndim == 0 else out

    def xi_tail_sum_beyond(self, n: int) -> float:
        """sum_{m > n} P(xi > m) for n >= 1."""
        if n >= _Q0_N0:
            return _vh_tail_total(self.a, self.kappa, n)
        m = np.arange(n + 1, _Q0_N0 + 1, dtype=float)
        return math.fsum(_vh_xi_tail_func(self.a, self.kappa)(m)) + _vh_tail_total(self.a, self.kappa, _Q0_N0)

    # -- power sums --------------------------------------------------------
    @cached_property
    def _xi_far(self):
        return _SmoothTail(_vh_xi_tail_func(self.a, self.kappa), self.N0)

    @cached_property
    def _eta_far(self):
        return _SmoothTail(_vh_eta_tail_func(self.a, self.delta, self.cc), self.N0)

    @cached_property
    def _xi_head(self):
        return np.asarray(self.xi_tail(np.arange(1, self.N0 + 1)), dtype=float)

    @cached_property
    def _eta_head(self):
        return np.asarray(self.eta_tail(np.arange(0, self.N0 + 1)), dtype=float)

    @cached_property
    def _xi_far_total(self):
        return self.xi_tail_sum_beyond(self.N0)

    def decay(self, r):
        """sum_{n>=1} P(xi>n) (1 - s^n) at s = 1 - r, i.e. (f(s)-s)/(1-s)."""
        r = np.asarray(r)
        scalar = r.ndim == 0
        rr = np.atleast_1d(r).astype(complex)
        at_zero = rr == 1  # s = 0: only the constant term survives
        rr = np.where(at_zero, 0.5, rr)
        logz = log1p_c(-rr)
        n = np.arange(1, self.N0 + 1, dtype=float)
        out = np.empty(rr.shape, dtype=complex)
        for sl in _chunks(len(rr), 256):
            out[sl] = (-np.expm1(logz[sl, None] * n[None, :])) @ self._xi_head
        far = self._xi_far.power_sum(-logz)
        out = out + self._xi_far_total - far
        out = np.where(rr == 0, 0.0, np.where(at_zero, 1.0 - self.q0, out))
        if not np.iscomplexobj(r):
            out = out.real
        return out[0] if scalar else out

    def one_minus_f(self, r):
        r = np.asarray(r)
        return r * (1.0 - self.decay(r))

    def one_minus_g(self, r):
        r = np.asarray(r)
        scalar = r.ndim == 0
        rr = np.atleast_1d(r).astype(complex)
        at_zero = rr == 1
        rr = np.where(at_zero, 0.5, rr)
        logz = log1p_c(-rr)
        n = np.arange(0, self.N0 + 1, dtype=float)
        head = np.empty(rr.shape, dtype=complex)
        for sl in _chunks(len(rr), 256):
            head[sl] = np.exp(logz[sl, None] * n[None, :]) @ self._eta_head
        total = head + self._eta_far.power_sum(-logz)
        out = np.where(rr == 0, 0.0, np.where(at_zero, float(self.eta_tail(0)), rr * total))
        if not np.iscomplexobj(r):
            out = out.real
        return out[0] if scalar else out

    def L1(self, y):
        return self.kappa / self.a * np.log(np.asarray(y, dtype=float)) ** (-self.a)

    def L2(self, y):
        return self.cc * math.gamma(1 - self.delta) * np.log(np.asarray(y, dtype=float)) ** (-self.a)

    def to_dict(self) -> dict:
        return {"family": self.family, "a": self.a, "delta": self.delta, "kappa": self.kappa, "cc": self.cc}


def _chunks(n, size):
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))


@dataclass(frozen=True, eq=False)
class FiniteModel(_SamplingMixin):
    """Finitely supported offspring and immigration laws (test models)."""

    xi: tuple
    eta: tuple

    family = "finite"
    nu = None
    delta = None

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        eta = np.asarray(self.eta, dtype=float)
        for name, pmf in (("xi", xi), ("eta", eta)):
            if pmf.ndim != 1 or len(pmf) == 0:
                raise InvalidModel(f"{name} must be a non-empty probability vector")
            if np.any(pmf < 0) or abs(pmf.sum() - 1) > 1e-12:
                raise InvalidModel(f"{name} is not a probability vector")
        object.__setattr__(self, "xi", tuple(xi.tolist()))
        object.__setattr__(self, "eta", tuple(eta.tolist()))

    @cached_property
    def _xi_tails(self):
        p = np.asarray(self.xi)
        return np.maximum(1.0 - np.cumsum(p), 0.0)

    @cached_property
    def _eta_tails(self):
        p = np.asarray(self.eta)
        return np.maximum(1.0 - np.cumsum(p), 0.0)

    @staticmethod
    def _lookup(table, n):
        n = np.asarray(n)
        idx = np.minimum(np.asarray(n, dtype=np.int64), len(table) - 1)
        out = np.where(n >= len(table), 0.0, table[idx])
        return out[()] if out.ndim == 0 else out

    def xi_tail(self, n):
        return self._lookup(self._xi_tails, n)

    def eta_tail(self, n):
        return self._lookup(self._eta_tails, n)

    def xi_pmf(self, k):
        return self._lookup(np.asarray(self.xi), k)

    def eta_pmf(self, k):
        return self._lookup(np.asarray(self.eta), k)

    @property
    def xi_mean(self) -> float:
        return float(np.dot(np.arange(len(self.xi)), self.xi))

    def xi_tail_sum_beyond(self, n: int) -> float:
        return float(self._xi_tails[n + 1 :].sum())

    @staticmethod
    def _tail_poly(tails, r):
        # 1 - P(s) = (1 - s) sum_n P(>n) s^n, Horner in s = 1 - r
        r = np.asarray(r)
        s = 1 - r
        acc = np.zeros_like(s)
        for t in tails[::-1]:
            acc = acc * s + t
        return r * acc

    def one_minus_f(self, r):
        return self._tail_poly(self._xi_tails, r)

    def one_minus_g(self, r):
        return self._tail_poly(self._eta_tails, r)

    def decay(self, r):
        r = np.asarray(r)
        return 1.0 - self.one_minus_f(r) / r

    def to_dict(self) -> dict:
        return {"family": self.family, "xi": list(self.xi), "eta": list(self.eta)}


# --------------------------------------------------------------------------
# construction, validation, serialization
# --------------------------------------------------------------------------

_FIELDS = {
    "heavy": ("nu", "delta", "c1", "c2"),
    "very_heavy": ("a", "delta", "kappa", "cc"),
    "finite": ("xi", "eta"),
}


def model_from_dict(data: Mapping):
    """Build a model from its JSON form, e.g. ``{"family": "heavy", "nu": 0.3, ...}``."""
    data = dict(data)
    family = data.pop("family", None)
    if family not in _FIELDS:
        raise InvalidModel(f"unknown family {family!r}; expected one of {sorted(_FIELDS)}")
    expected = set(_FIELDS[family])
    missing = expected - set(data)
    unknown = set(data) - expected
    if missing or unknown:
        raise InvalidModel(f"{family}: missing fields {sorted(missing)}, unknown fields {sorted(unknown)}")
    if family == "heavy":
        return HeavyModel(**{k: float(v) for k, v in data.items()})
    if family == "very_heavy":
        return VeryHeavyModel(**{k: float(v) for k, v in data.items()})
    return FiniteModel(xi=tuple(data["xi"]), eta=tuple(data["eta"]))


def _stationarity_integral(model) -> float:
    """int_0^1 (1-g(s)) / (f(s)-s) ds, computed as int_0^inf G(e^-u)/decay(e^-u) du."""

    def integrand(u):
        r = math.exp(-u)
        if r < 1e-300:
            return 0.0
        return float(model.one_minus_g(r)) / float(model.decay(r))

    value, err = integrate.quad(integrand, 0, 690.0, limit=400, epsrel=1e-9)
    if not np.isfinite(value) or err > 1e-4 * max(1.0, abs(value)):
        return math.inf
    return value


def validate_spec(spec) -> ValidationReport:
    """Check every admissibility condition and report each one.

    ``spec`` is a model instance or its dict form.  Raises
    :class:`InvalidModel` (carrying the report) when a required check fails.
    """
    if isinstance(spec, Mapping):
        data = dict(spec)
        family = data.get("family")
        report = ValidationReport(str(family), {k: v for k, v in data.items() if k != "family"})
        if family == "heavy":
            try:
                nu, delta, c1, c2 = (float(data[k]) for k in _FIELDS["heavy"])
            except (KeyError, TypeError, ValueError) as exc:
                report.add("parameters present", False, str(exc))
                raise InvalidModel(f"bad heavy parameters: {exc}", report) from exc
            report.add("0 < nu < 1", 0 < nu < 1, f"nu={nu}")
            report.add("0 < delta < 1", 0 < delta < 1, f"delta={delta}")
            report.add("nu < delta", nu < delta, f"nu={nu}, delta={delta}")
            p1 = 1 - c1 * (1 + nu)
            report.add("P(xi=0) = c1 > 0", c1 > 0, f"c1={c1}")
            report.add("P(xi=1) = 1 - c1(1+nu) >= 0", p1 >= 0, f"p1={p1:.6g}")
            report.add("g coefficients >= 0 (0 < c2 <= 1)", 0 < c2 <= 1, f"c2={c2}")
            if not report.ok:
                raise InvalidModel("; ".join(c.name + " violated (" + c.detail + ")" for c in report.failures()), report)
        try:
            model = model_from_dict(data)
        except NoSolution as exc:
            report.add("q0 solvable", False, str(exc))
            raise NoSolution(str(exc), report) from exc
        except InvalidModel as exc:
            report.add("parameters admissible", False, str(exc))
            raise InvalidModel(str(exc), report) from exc
        return _numeric_checks(model, report)
    model = spec
    report = ValidationReport(model.family, model.to_dict())
    return _numeric_checks(model, report)


def _numeric_checks(model, report: ValidationReport) -> ValidationReport:
    k = np.arange(0, 10_001)
    pmf = np.asarray(model.xi_pmf(k))
    report.add("xi masses >= 0 (k <= 1e4)", np.all(pmf >= -1e-15), f"min={pmf.min():.3g}")
    eta_pmf = np.asarray(model.eta_pmf(k))
    report.add("eta masses >= 0 (k <= 1e4)", np.all(eta_pmf >= -1e-15), f"min={eta_pmf.min():.3g}")
    report.add("P(eta = 0) < 1", float(model.eta_pmf(0)) < 1, f"P(eta=0)={float(model.eta_pmf(0)):.6g}")
    if model.family == "finite":
        mean = model.xi_mean
        report.criticality_residual = abs(mean - 1)
        report.add("critical (E xi = 1)", abs(mean - 1) < 1e-12, f"E xi={mean:.12g}", required=False)
        return report
    n_head = 10_000
    head = math.fsum(np.asarray(model.xi_tail(np.arange(0, n_head + 1)), dtype=float))
    mean = head + model.xi_tail_sum_beyond(n_head)
    report.criticality_residual = abs(mean - 1)
    report.add("critical (|E xi - 1| < 1e-8)", abs(mean - 1) < 1e-8, f"E xi={mean:.14g}")
    if model.family == "very_heavy":
        t1 = float(model.xi_tail(1))
        report.add("q0 >= P(xi>1) (monotone tail)", model.q0 >= t1, f"q0={model.q0:.12g}")
        e_tail = np.asarray(model.eta_tail(np.arange(0, 1000)))
        report.add("eta tail nonincreasing", np.all(np.diff(e_tail) <= 0))
    integral = _stationarity_integral(model)
    report.stationarity_integral = integral
    report.add("stationary limit exists (int (1-g)/(f-x) < inf)", np.isfinite(integral), f"integral={integral:.8g}")
    if not report.ok:
        raise InvalidModel("; ".join(c.name for c in report.failures()), report)
    return report


# --------------------------------------------------------------------------
# exact samplers
# --------------------------------------------------------------------------


def _inverse_tail(u, table, tail_fn, cap):
    """min{n : tail(n) < u} for u in (0, 1]; -1 marks values beyond ``cap``."""
    u = np.asarray(u, dtype=float)
    asc = table[::-1]
    size = len(table)
    out = size - np.searchsorted(asc, u, side="left")
    out = out.astype(np.int64)
    far = np.flatnonzero(out == size)
    if len(far):
        uf = u[far]
        lo = np.full(len(far), size - 1, dtype=np.int64)
        hi = np.full(len(far), int(cap), dtype=np.int64)
        capped = np.asarray(tail_fn(hi.astype(float))) >= uf
        while True:
            active = (hi - lo > 1) & ~capped
            if not active.any():
                break
            mid = lo + (hi - lo) // 2
            below = np.asarray(tail_fn(mid.astype(float))) < uf
            hi = np.where(active & below, mid, hi)
            lo = np.where(active & ~below, mid, lo)
        out[far] = np.where(capped, -1, hi)
    return out


def xi_quantile(spec, u, cap: int = DEFAULT_CAP):
    """Inverse-transform map for the offspring law: min{n : P(xi > n) < u}."""
    u = np.asarray(u, dtype=float)
    out = _inverse_tail(np.atleast_1d(u), spec._xi_table, spec.xi_tail, cap)
    if np.any(out < 0):
        raise CapExceeded(f"offspring draw exceeds cap {cap}", lower_bound=int(cap))
    return int(out[0]) if u.ndim == 0 else out


def eta_quantile(spec, u, cap: int = DEFAULT_CAP):
    """Inverse-transform map for the immigration law: min{n : P(eta > n) < u}."""
    u = np.asarray(u, dtype=float)
    out = _inverse_tail(np.atleast_1d(u), spec._eta_table, spec.eta_tail, cap)
    if np.any(out < 0):
        raise CapExceeded(f"immigration draw exceeds cap {cap}", lower_bound=int(cap))
    return int(out[0]) if u.ndim == 0 else out


def _uniforms(rng, size):
    # (0, 1]: u = 0 would make every tail value fail the strict comparison
    return 1.0 - rng.random(size)


def draw_xi(rng, spec, size: int, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Vectorised offspring draws; entries beyond ``cap`` are returned as -1."""
    return _inverse_tail(_uniforms(rng, size), spec._xi_table, spec.xi_tail, cap)


def draw_eta(rng, spec, size: int, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Vectorised immigration draws; entries beyond ``cap`` are returned as -1."""
    return _inverse_tail(_uniforms(rng, size), spec._eta_table, spec.eta_tail, cap)


def sample_xi(rng, spec, size=None, cap: int = DEFAULT_CAP):
    """Exact offspring draw(s) by inverse transform of the closed-form tail."""
    out = draw_xi(rng, spec, 1 if size is None else size, cap)
    if np.any(out < 0):
        raise CapExceeded(f"offspring draw exceeds cap {cap}", lower_bound=int(cap))
    return int(out[0]) if size is None else out


def sample_eta(rng, spec, size=None, cap: int = DEFAULT_CAP):
    """Exact immigration draw(s) by inverse transform of the closed-form tail."""
    out = draw_eta(rng, spec, 1 if size is None else size, cap)
    if np.any(out < 0):
        raise CapExceeded(f"immigration draw exceeds cap {cap}", lower_bound=int(cap))
    return int(out[0]) if size is None else out


M1 = dict(family="heavy", nu=0.3, delta=0.7, c1=0.5, c2=1.0)
