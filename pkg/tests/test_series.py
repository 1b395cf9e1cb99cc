import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critgwi import series as S
from critgwi.errors import DegenerateGrid, OutOfRange, UndefinedAsymptotic
from critgwi.models import FiniteModel


# ----- oracles -----


def lagrange_progeny_pmf(spec, K):
    """P(T = k) = P(xi_1 + ... + xi_k = k - 1) / k, by repeated convolution."""
    pmf = spec.xi_pmf(np.arange(K))
    out = np.zeros(K + 1)
    power = np.array([1.0])
    for k in range(1, K + 1):
        power = np.convolve(power, pmf)[:K]
        out[k] = power[k - 1] / k
    return out


def enumerate_sn(spec, n, xi, eta):
    """Exact law of S_n for finitely supported laws: dynamic programme over (X_k, S_k)."""
    xi, eta = np.asarray(xi), np.asarray(eta)
    state = {(0, 0): 1.0}
    for _ in range(n):
        nxt = {}
        for (x, s), p in state.items():
            law = np.array([1.0])
            for _ in range(x):
                law = np.convolve(law, xi)
            law = np.convolve(law, eta)
            for y, q in enumerate(law):
                if q:
                    nxt[(y, s + y)] = nxt.get((y, s + y), 0.0) + p * q
        state = nxt
    top = max(s for _, s in state)
    out = np.zeros(top + 1)
    for (_, s), p in state.items():
        out[s] += p
    return out


def brute_stationary(spec, x, K):
    R = 1.0 - x
    acc = 0.0
    for _ in range(K):
        acc += math.log1p(-float(spec.one_minus_g(R)))
        R = float(spec.one_minus_f(R))
    return math.exp(acc)


# ----- iteration -----


def test_iterate_f_basic(m1):
    assert S.iterate_f(m1, 0, 0.3) == 0.3
    assert S.iterate_f(m1, 7, 1.0) == 1.0
    assert S.iterate_f(m1, 1, 0.0) == pytest.approx(0.5, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(j=st.integers(0, 40), k=st.integers(0, 40), x=st.floats(0.0, 0.999))
def test_iterate_f_composition(m1, j, k, x):
    lhs = S.iterate_f(m1, j, S.iterate_f(m1, k, x))
    assert lhs == pytest.approx(S.iterate_f(m1, j + k, x), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(k=st.integers(1, 30), rad=st.floats(0, 1), ang=st.floats(0, 2 * math.pi))
def test_iterate_f_complex_bound(m1, k, rad, ang):
    z = rad * np.exp(1j * ang)
    assert abs(S.iterate_f(m1, k, z)) <= S.iterate_f(m1, k, rad) + 1e-12


def test_gaps_nonincreasing(m1):
    R = [float(S.iterate_gap(m1, k, 0.7)) for k in range(50)]
    assert np.all(np.diff(R) <= 0)


# ----- progeny -----


def test_progeny_endpoints(m1):
    assert S.total_progeny_pgf(m1, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert S.total_progeny_pgf(m1, 1.0) == pytest.approx(1.0, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(0.0, 1.0, exclude_max=True))
def test_progeny_fixed_point_real(m1, x):
    h = S.total_progeny_pgf(m1, x)
    f_h = 1 - m1.one_minus_f(1 - h)
    assert abs(h - x * f_h) < 1e-12


@settings(max_examples=50, deadline=None)
@given(rad=st.floats(0, 0.999999), ang=st.floats(0, 2 * math.pi))
def test_progeny_fixed_point_complex(m2, rad, ang):
    x = rad * np.exp(1j * ang)
    h = S.total_progeny_pgf(m2, x)
    f_h = 1 - m2.one_minus_f(1 - h)
    assert abs(h - x * f_h) < 1e-11
    assert abs(h) <= 1 + 1e-12


def test_progeny_near_one(m1):
    # 1 - h(x) ~ ((1 - x)/c1)^(1/(1+nu))
    ratios = [float(S.progeny_gap(m1, r)) / (r / 0.5) ** (1 / 1.3) for r in (1e-4, 1e-8, 1e-12)]
    assert abs(ratios[-1] - 1) < 1e-3
    assert abs(ratios[0] - 1) > abs(ratios[1] - 1) > abs(ratios[2] - 1)


def test_progeny_series_lagrange(m1):
    ser = S.progeny_series(m1, 64)
    oracle = lagrange_progeny_pmf(m1, 63)
    np.testing.assert_allclose(ser.coeffs[:64], oracle[:64], atol=1e-12)
    assert ser.coeffs[1] == pytest.approx(0.5, abs=1e-12)


# ----- products -----


def test_pn_basic(m1_partial):
    assert S.pn_pgf(m1_partial, 0, 0.4) == 1.0
    assert S.pn_pgf(m1_partial, 1, 0.0) == pytest.approx(0.2, abs=1e-15)
    vals = [S.pn_pgf(m1_partial, n, 0.6) for n in range(30)]
    assert np.all(np.diff(vals) < 0)


def test_stationary_vs_brute_product(m1_partial):
    for x in (0.0, 0.3, 0.9):
        val, K = S.stationary_pgf(m1_partial, x)
        brute = brute_stationary(m1_partial, x, 200_000)
        # the brute product omits factors whose log-sum is bounded by the flow-time remainder
        assert val == pytest.approx(brute, rel=2e-3)
        assert val < S.pn_pgf(m1_partial, 500, x)
    assert S.stationary_pgf(m1_partial, 0.0)[0] > 0


def test_stationary_tail_of_product_oracle(m1):
    # the accelerated sum of log g over k >= K matches a long direct sum plus the flow integral
    x = 0.3
    R = 1 - x
    direct = 0.0
    for _ in range(400_000):
        direct += math.log1p(-float(m1.one_minus_g(R)))
        R = float(m1.one_minus_f(R))
    # remaining factors: sum_k R_k^delta with R_k ~ (c1 nu k)^(-1/nu), integral from 400000
    rem = (0.5 * 0.3) ** (-0.7 / 0.3) * (400_000) ** (1 - 0.7 / 0.3) / (0.7 / 0.3 - 1)
    logp = float(S.log_stationary_gap(m1, 1 - x)[0])
    assert logp == pytest.approx(direct - rem, rel=1e-4)


def test_stationary_near_one(m1, m2):
    for m in (m1, m2):
        assert S.stationary_pgf(m, 1 - 1e-12)[0] == pytest.approx(1.0, abs=1e-3)


def test_stationary_flow_matches_brute(m2):
    # the flow form is an end-corrected integral; its error shrinks as the gap does
    errs = []
    for r in (1e-3, 1e-6):
        brute = float(S.stationary_gap(m2, r, tol=1e-12))
        errs.append(abs(float(S.stationary_gap(m2, r, flow=True)) / brute - 1))
    assert errs[0] < 1e-4 and errs[1] < 1e-5 and errs[1] < errs[0]


# ----- S_n -----


def test_sn_zero_is_point_mass(m1):
    ser = S.sn_pgf_series(m1, 0, 16)
    assert ser.coeffs[0] == 1.0 and ser.coeffs[1:].sum() == 0


def test_s1_matches_eta(m1):
    ser = S.sn_pgf_series(m1, 1, 2**16)
    k = np.arange(2**16)
    assert np.max(np.abs(ser.coeffs - m1.eta_pmf(k))) < 1e-10


def test_s3_toy_enumeration(toy):
    oracle = enumerate_sn(toy, 3, toy.xi, toy.eta)
    ser = S.sn_pgf_series(toy, 3, 64)
    tv = 0.5 * np.abs(ser.coeffs[: len(oracle)] - oracle).sum() + 0.5 * ser.coeffs[len(oracle):].sum()
    assert tv < 1e-6 + ser.tail_mass


def test_sn_recursion(m1):
    # E x^{S_{n+1}} = g(A_n(x)) E x^{S_n}
    x = 0.55
    A = x
    for n in range(6):
        lhs = S.sn_pgf(m1, n + 1, x)
        g_a = 1 - m1.one_minus_g(1 - A)
        assert lhs == pytest.approx(g_a * S.sn_pgf(m1, n, x), abs=1e-12)
        A = x * (1 - m1.one_minus_f(1 - A))


def test_series_sum_matches_pgf(m1):
    ser = S.sn_pgf_series(m1, 3, 4096)
    k = np.arange(4096)
    assert math.fsum(ser.coeffs * 0.5**k) == pytest.approx(S.sn_pgf(m1, 3, 0.5), abs=1e-10)


# ----- brackets -----


def test_exact_tail_edges(m1):
    ser = S.sn_pgf_series(m1, 2, 256)
    assert S.exact_tail(ser, -1) == (1.0, 1.0)
    lo, hi = S.exact_tail(ser, 255)
    assert lo == 0.0 and hi == pytest.approx(ser.tail_mass)
    with pytest.raises(OutOfRange):
        S.exact_tail(ser, 256)


def test_bracket_shrinks(m1):
    widths = []
    for N in (64, 256, 1024):
        lo, hi = S.exact_tail(S.sn_pgf_series(m1, 2, N), 20)
        widths.append(hi - lo)
    assert widths[0] > widths[1] > widths[2]


def test_inversion_inside_bracket(m1):
    ser = S.sn_pgf_series(m1, 3, 8192)
    xs = [0, 5, 50, 1000, 8000]
    inv = S.sn_tail(m1, 3, xs)
    for x, lo, hi in zip(xs, inv.lo, inv.hi):
        blo, bhi = S.exact_tail(ser, x)
        assert lo <= bhi + 1e-12 and hi >= blo - 1e-12
        assert hi - lo < 1e-7


def test_far_inversion_continuity(m1):
    # the inversion switches method at x = 4096; values must join up smoothly
    inv = S.sn_tail(m1, 3, [4095, 4096, 4097])
    assert np.all(np.diff(inv.value) < 0)
    assert inv.value[0] / inv.value[2] - 1 < 1e-3


def test_csv_dump(m1, tmp_path):
    ser = S.sn_pgf_series(m1, 1, 16)
    path = tmp_path / "s.csv"
    ser.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "k,mass"
    assert lines[-1].startswith("tail_mass,")
    assert len(lines) == 18


# ----- immigrant families -----


def test_y_inf_series(m1_partial):
    ser = S.y_inf_series(m1_partial, 1024)
    assert ser.coeffs[0] == pytest.approx(0.2, abs=1e-12)
    assert math.fsum(ser.coeffs) + ser.tail_mass == pytest.approx(1.0, abs=1e-12)


def test_s_inf_series(m1_partial):
    ser = S.s_inf_series(m1_partial, 1024)
    p_f0, _ = S.stationary_pgf(m1_partial, 0.5)
    assert ser.coeffs[0] == pytest.approx(p_f0, rel=1e-9)
    assert float(S.s_inf_gap(m1_partial, 1e-14)) < 1e-3


# ----- near-one ratio and fits -----


def test_near_one_ratio_sanity(m2):
    # n = 0: (1/P(x) - 1) / (p/delta (1 - x)^delta)
    x = 0.5
    P, _ = S.stationary_pgf(m2, x, tol=1e-12)
    expected = (1 / P - 1) / (m2.p / m2.delta * (1 - x) ** m2.delta)
    assert S.lemma1_ratio(m2, 0, x, tol=1e-12) == pytest.approx(expected, rel=1e-6)
    assert all(S.lemma1_ratio(m2, n, x) > 0 for n in (1, 4, 16))


def test_near_one_ratio_family(m1):
    with pytest.raises(UndefinedAsymptotic):
        S.lemma1_ratio(m1, 4, 0.5)


def test_fit_identity():
    fit = S.near_one_exponent_fit(lambda s: 1 - s, np.linspace(0.9, 0.999, 10))
    assert fit.exponent == pytest.approx(1.0, abs=1e-12)


def test_fit_sibuya(m1):
    fit = S.near_one_exponent_fit(m1.one_minus_g, gaps=np.geomspace(1e-8, 1e-3, 10))
    assert fit.exponent == pytest.approx(0.7, abs=1e-12)
    assert fit.prefactor == pytest.approx(1.0, rel=1e-10)


def test_fit_stationary_heavy(m1):
    fit = S.near_one_exponent_fit(lambda r: S.stationary_gap(m1, r), gaps=np.geomspace(1e-13, 1e-9, 8))
    assert fit.exponent == pytest.approx(0.4, abs=2e-3)


def test_fit_degenerate():
    with pytest.raises(DegenerateGrid):
        S.near_one_exponent_fit(lambda s: 1 - s, [0.5])
    with pytest.raises(DegenerateGrid):
        S.near_one_exponent_fit(lambda s: 1 - s, [0.9, 0.5])


def test_finite_model_pgf(toy):
    assert isinstance(toy, FiniteModel)
    assert toy.one_minus_f(0.5) == pytest.approx(1 - sum(p * 0.5**k for k, p in enumerate(toy.xi)))
