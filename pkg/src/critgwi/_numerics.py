"""Low-level numeric helpers shared by the model and series code.

Everything near the singular point s = 1 is handled in "gap" coordinates
r = 1 - s, so that quantities like 1 - f(s) keep full relative precision.
"""
from __future__ import annotations

import numpy as np
from scipy import special

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def log1p_c(z):
    """log(1 + z) accurate for small complex or real ``z``.

    numpy's complex log1p loses relative precision in the real part when
    |z| is tiny, which matters for products of factors close to one.
    """
    z = np.asarray(z)
    if not np.iscomplexobj(z):
        return np.log1p(z)
    x, y = z.real, z.imag
    near = np.abs(z) < 0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        re = np.where(near, 0.5 * np.log1p(x * (2.0 + x) + y * y), np.log(np.abs(1.0 + z)))
    im = np.arctan2(y, 1.0 + x)
    return re + 1j * im


def neg_expm1(z):
    """1 - exp(z), accurate for small ``z`` (real or complex)."""
    return -np.expm1(z)


def circle_gaps(radius: float, m: int) -> np.ndarray:
    """Return 1 - radius * exp(2 pi i j / m) for j = 0..m-1 without cancellation."""
    phi = 2.0 * np.pi * np.arange(m) / m
    half = np.sin(0.5 * phi)
    one_minus_unit = 2.0 * half * half - 1j * np.sin(phi)
    return (1.0 - radius) + radius * one_minus_unit


_STIRLING = (1 / 12, -1 / 360, 1 / 1260, -1 / 1680, 1 / 1188)


def log_rising_ratio(n, a: float, b: float):
    """log(Gamma(n + a) / Gamma(n + b)) for arrays of n >= 0.

    Small n use the Pochhammer symbol; from n = 20 on, the difference of two
    Stirling series written with log1p keeps the absolute error near 1e-15
    (a difference of two log-gamma values would lose digits to cancellation).
    """
    n = np.asarray(n, dtype=float)
    small = n < 20
    out = np.empty_like(n)
    if small.any():
        out[small] = -np.log(special.poch(n[small] + a, b - a))
    big = ~small
    if big.any():
        x = n[big]
        val = (a - b) * np.log(x) + (x + a - 0.5) * np.log1p(a / x) - (x + b - 0.5) * np.log1p(b / x) - (a - b)
        xa, xb = x + a, x + b
        for k, c in enumerate(_STIRLING):
            p = 2 * k + 1
            val = val + c * (xa**-p - xb**-p)
        out[big] = val
    return out


def panel_nodes(upper: float, width: float = 0.5):
    """Composite 16-point Gauss-Legendre nodes/weights on [0, upper]."""
    n_panels = max(1, int(np.ceil(upper / width)))
    edges = np.linspace(0.0, upper, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    weights = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return nodes, weights


def rgamma(x):
    """1 / Gamma(x), zero at the poles."""
    return special.rgamma(x)
