"""Asymptotic right-hand sides with resolved constants.

For the heavy family every slowly varying factor is asymptotically constant
and the constants follow from the pgf expansions near s = 1 through the
Tauberian factor 1 / Gamma(1 - index).  For the log-corrected family the
immigrant-family factor L4(x) is evaluated numerically from g(h(1 - 1/x)).
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special

from .errors import InfeasibleWindow, UndefinedAsymptotic
from .models import HeavyModel, VeryHeavyModel


@dataclass(frozen=True)
class AsymptoticConstants:
    """Constants of the tail asymptotics; ``None`` marks a quantity that does not exist for the family."""

    family: str
    X_tail_const: float
    X_tail_index: float
    L3_limit: float | None = None
    L4_limit: float | None = None
    T_tail_const: float | None = None
    C: float | None = None
    p: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def constants(spec) -> AsymptoticConstants:
    if isinstance(spec, HeavyModel):
        nu, delta, c1, c2 = spec.nu, spec.delta, spec.c1, spec.c2
        C = c2 / (c1 * (delta - nu))
        L3 = c1 ** (-1 / (1 + nu))
        L4 = c2 * c1 ** (-delta / (1 + nu)) * special.rgamma(1 - delta / (1 + nu))
        return AsymptoticConstants(
            family=spec.family,
            X_tail_const=float(C * special.rgamma(1 + nu - delta)),
            X_tail_index=delta - nu,
            L3_limit=L3,
            L4_limit=float(L4),
            T_tail_const=float(L3 * special.rgamma(1 - 1 / (1 + nu))),
            C=C,
        )
    if isinstance(spec, VeryHeavyModel):
        return AsymptoticConstants(
            family=spec.family,
            X_tail_const=float(spec.p / spec.delta * special.rgamma(1 - spec.delta)),
            X_tail_index=spec.delta,
            p=spec.p,
        )
    raise UndefinedAsymptotic(f"no asymptotics for family {getattr(spec, 'family', spec)!r}")


def _tail_index_y(spec) -> float:
    return spec.delta / (1 + spec.nu)


def L4(spec, x):
    """Slowly varying factor of P(Y > x) ~ x^(-delta/(1+nu)) L4(x)."""
    x = np.asarray(x, dtype=float)
    if isinstance(spec, HeavyModel):
        return np.full_like(x, constants(spec).L4_limit)
    if isinstance(spec, VeryHeavyModel):
        from .series import y_inf_gap

        flat = np.atleast_1d(x)
        vals = np.array([float(y_inf_gap(spec, 1.0 / v)) for v in flat])
        out = vals * flat**spec.delta * special.rgamma(1 - spec.delta)
        return out.reshape(x.shape)
    raise UndefinedAsymptotic(f"no L4 for family {spec.family!r}")


def y_tail_prediction(spec, x):
    """P(Y > x) ~ x^(-delta/(1+nu)) L4(x) for the total progeny of one immigrant batch."""
    x = np.asarray(x, dtype=float)
    return x ** (-_tail_index_y(spec)) * L4(spec, x)


def ld_prediction(spec, n: int, x):
    """n x^(-delta/(1+nu)) L(x), the large-deviation approximation of P(S_n > x).

    Values above 1 are returned as is; the approximation is only claimed
    inside the windows of :func:`window`.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    return n * y_tail_prediction(spec, x)


def x_tail_prediction(spec, x):
    """Stationary tail P(X > x) ~ const x^-index."""
    c = constants(spec)
    return c.X_tail_const * np.asarray(x, dtype=float) ** (-c.X_tail_index)


def t_tail_prediction(spec, x):
    """Total progeny tail P(T > x) ~ L3 / Gamma(1 - 1/(1+nu)) x^(-1/(1+nu))."""
    c = constants(spec)
    if c.T_tail_const is None:
        raise UndefinedAsymptotic("the progeny tail constant vanishes for nu = 0; only a slowly varying form exists")
    return c.T_tail_const * np.asarray(x, dtype=float) ** (-1 / (1 + spec.nu))


@dataclass(frozen=True)
class Window:
    n: int
    x_lo: float
    x_hi: float
    k1: float
    k2: float
    regime: str


def window(spec, n: int, k1: float, k2: float) -> Window:
    """Range [x_n, y_n] on which the large-deviation approximation is uniform."""
    if not (k1 > 0 and k2 > 0):
        raise InfeasibleWindow(f"k1={k1}, k2={k2}: both must be positive")
    if isinstance(spec, HeavyModel):
        nu, delta = spec.nu, spec.delta
        limit = (1 + nu) * (1 / nu - 1 / delta)
        if not k1 + k2 < limit:
            raise InfeasibleWindow(f"k1 + k2 = {k1 + k2} must be < (1+nu)(1/nu - 1/delta) = {limit}")
        lo_exp = (1 + nu) / delta + k1
        hi_exp = (1 + nu) / nu - k2
        regime = "heavy"
    elif isinstance(spec, VeryHeavyModel):
        if not k2 - k1 > 1 / spec.delta:
            raise InfeasibleWindow(f"k2 - k1 = {k2 - k1} must be > 1/delta = {1 / spec.delta}")
        lo_exp = 1 / spec.delta + k1
        hi_exp = k2
        regime = "very_heavy"
    else:
        raise UndefinedAsymptotic(f"no window for family {spec.family!r}")
    x_lo = float(n) ** lo_exp
    x_hi = float(n) ** hi_exp
    if not x_lo < x_hi:
        raise InfeasibleWindow(f"empty window at n={n}: x_lo={x_lo} >= x_hi={x_hi}")
    return Window(n, x_lo, x_hi, k1, k2, regime)


@dataclass
class PredictionCurve:
    """Predicted values on an x-grid with the constants that produced them."""

    quantity: str
    x: np.ndarray
    prediction: np.ndarray
    constants: AsymptoticConstants
    provenance: str

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "prediction", "constant_provenance"])
        for x, p in zip(self.x, self.prediction):
            w.writerow([f"{x:.9e}", f"{p:.9e}", self.provenance])
        return buf.getvalue()


_PROVENANCE = {
    "x": "stationary tail constant (closed form)",
    "t": "progeny tail constant L3/Gamma(1-1/(1+nu)) (closed form)",
    "y": "immigrant-family constant L4 (closed form; numeric L4(x) when nu = 0)",
    "ld": "n times immigrant-family tail",
}


def prediction_curve(spec, quantity: str, xs, n: int | None = None) -> PredictionCurve:
    xs = np.asarray(xs, dtype=float)
    if quantity == "x":
        vals = x_tail_prediction(spec, xs)
    elif quantity == "t":
        vals = t_tail_prediction(spec, xs)
    elif quantity == "y":
        vals = y_tail_prediction(spec, xs)
    elif quantity == "ld":
        if n is None:
            raise ValueError("quantity 'ld' needs n")
        vals = ld_prediction(spec, n, xs)
    else:
        raise ValueError(f"unknown quantity {quantity!r}")
    prov = _PROVENANCE[quantity]
    if isinstance(spec, VeryHeavyModel) and quantity in ("y", "ld"):
        prov = "numeric L4(x) from g(h(1-1/x))"
    return PredictionCurve(quantity, xs, np.asarray(vals, dtype=float), constants(spec), prov)

