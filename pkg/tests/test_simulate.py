import json
import math

import numpy as np
import pytest
from scipy import stats

from critgwi import series as S
from critgwi.errors import PopCapExceeded, StepCapExceeded
from critgwi.estimate import replica_rng
from critgwi.models import FiniteModel
from critgwi.simulate import (
    PathSample,
    SimBudget,
    coupled_batch,
    coupled_record,
    gwi_step,
    jsonl_records,
    sample_stationary_x,
    simulate_coupled,
    simulate_path,
    simulate_sn,
    sn_batch,
    stationary_batch,
    stationary_truncation_bound,
    total_progeny,
    total_progeny_batch,
)


def chi2_pvalue(counts, probs):
    probs = np.asarray(probs, dtype=float)
    expected = probs / probs.sum() * counts.sum()
    return stats.chisquare(counts, expected).pvalue


def test_gwi_step_from_zero_is_eta(toy, rng):
    draws = np.array([gwi_step(rng, toy, 0) for _ in range(20_000)])
    counts = np.bincount(draws, minlength=3)
    assert chi2_pvalue(counts, toy.eta) > 1e-3


def test_gwi_step_from_one_is_convolution(toy, rng):
    draws = np.array([gwi_step(rng, toy, 1) for _ in range(20_000)])
    law = np.convolve(toy.xi, toy.eta)
    counts = np.bincount(draws, minlength=len(law))
    assert chi2_pvalue(counts, law) > 1e-3


def test_gwi_step_median_matches_pn(m1):
    # X_3 from 0 has pgf P_3; compare the empirical median with the series median
    rng = np.random.default_rng(3)
    xs = np.array([simulate_path(rng, m1, 3)[-1] for _ in range(4000)])
    cdf = np.cumsum(S.pn_series(m1, 3, 1024).coeffs)
    med = int(np.searchsorted(cdf, 0.5))
    lo, hi = np.quantile(xs, [0.45, 0.55])
    assert lo <= med <= hi


def test_sn_small_n(m1, rng):
    assert simulate_sn(rng, m1, 0) == 0
    v = np.array([simulate_sn(rng, m1, 1) for _ in range(20_000)])
    for n in (1, 10):
        p = float(m1.eta_tail(n))
        assert abs(np.mean(v > n) - p) < 4 * math.sqrt(p * (1 - p) / len(v))


def test_s3_within_exact_bracket(m1):
    vals, ab = sn_batch(np.random.default_rng(11), m1, 200_000, 3)
    assert not ab.any()
    ser = S.sn_pgf_series(m1, 3, 8192)
    for x in (0, 5, 50, 500):
        lo, hi = S.exact_tail(ser, x)
        p_hat = np.mean(vals > x)
        z = stats.norm.ppf(0.995) * math.sqrt(hi * (1 - hi) / len(vals)) + 1e-12
        assert lo - z <= p_hat <= hi + z


def test_pop_cap_aborts(m1, rng):
    with pytest.raises(PopCapExceeded) as info:
        for _ in range(200):
            simulate_sn(rng, m1, 20, SimBudget(pop_cap=5))
    assert info.value.lower_bound > 0
    vals, ab = sn_batch(rng, m1, 1000, 20, SimBudget(pop_cap=5))
    assert ab.any() and not ab.all()


def test_progeny_degenerate():
    dead = FiniteModel(xi=(1.0,), eta=(1.0,))
    rng = np.random.default_rng(0)
    assert total_progeny(rng, dead, 1) == 1
    assert total_progeny(rng, dead, 7) == 7


def test_progeny_pmf_matches_h(m1):
    vals, ab = total_progeny_batch(np.random.default_rng(2), m1, 200_000, 1, SimBudget(step_cap=60))
    coef = S.progeny_series(m1, 64).coeffs
    counts = np.array([np.sum(vals == k) for k in range(1, 11)] + [np.sum(vals > 10)])
    probs = np.concatenate([coef[1:11], [1 - coef[:11].sum()]])
    assert chi2_pvalue(counts, probs) > 1e-3


def test_progeny_far_tail(m1):
    from critgwi.predict import t_tail_prediction

    vals, ab = total_progeny_batch(np.random.default_rng(4), m1, 100_000, 1, SimBudget(step_cap=10**4))
    # aborted replicas already exceed 1e3 (their lower bound is above the cap)
    p_hat = np.mean(vals > 1000)
    exact = float(S.invert_tail(lambda r: S.progeny_gap(m1, r), [1000]).value[0])
    se = math.sqrt(exact * (1 - exact) / len(vals))
    assert abs(p_hat - exact) < 4 * se
    # the asymptotic form is within a few percent at this level
    assert float(t_tail_prediction(m1, 1000)) / exact == pytest.approx(1, abs=0.1)


def test_step_cap(m1):
    rng = np.random.default_rng(5)
    with pytest.raises(StepCapExceeded):
        for _ in range(10_000):
            total_progeny(rng, m1, 1, SimBudget(step_cap=3))


@pytest.mark.slow
def test_coupled_identity(m1):
    for rep in range(300):
        s = simulate_coupled(replica_rng(9, rep), m1, 8)
        assert isinstance(s, PathSample)
        assert s.check()
        assert s.s_n == sum(s.traj)
        assert sum(t for _, _, t in s.per_immigrant) == s.s_n1


def _coupled_runs(spec, seed, n, reps, budget):
    runs = coupled_batch(seed, 0, reps, spec, n, budget)
    aborted = np.array([exc is not None for _, _, exc in runs])
    return runs, aborted


@pytest.mark.slow
def test_coupled_s_n1_law(m1):
    # S_{n,1} is a sum of n independent copies of Y; aborted runs have S_{n,1} above the cap
    n, reps = 2, 6000
    runs, aborted = _coupled_runs(m1, 1, n, reps, SimBudget(step_cap=10**5))
    s1 = np.array([smp.s_n1 if smp is not None else exc.lower_bound for _, smp, exc in runs])
    y = S.y_inf_series(m1, 4096).coeffs
    conv = np.convolve(y, y)[:4096]
    for x in (0, 3, 30):
        p = 1 - conv[: x + 1].sum()
        assert abs(np.mean(s1 > x) - p) <= 4 * math.sqrt(p * (1 - p) / reps) + 1e-12
    assert aborted.mean() < 0.01


@pytest.mark.slow
def test_coupled_s_n2_dominated(m1):
    reps = 6000
    runs, aborted = _coupled_runs(m1, 2, 4, reps, SimBudget(step_cap=10**5))
    s2 = np.array([smp.s_n2 for _, smp, _ in runs if smp is not None])
    ser = S.s_inf_series(m1, 4096)
    for x in (0, 10, 100):
        _, hi = S.exact_tail(ser, x)
        assert np.sum(s2 > x) / reps <= hi + 4 * math.sqrt(hi * (1 - hi) / reps) + aborted.mean()


def test_coupled_all_extinct():
    dead = FiniteModel(xi=(1.0,), eta=(0.5, 0.5))
    s = simulate_coupled(np.random.default_rng(0), dead, 5)
    assert s.s_n2 == 0 and s.check()


def test_stationary_m0_is_eta(toy):
    vals, _ = stationary_batch(np.random.default_rng(0), toy, 20_000, 0)
    assert chi2_pvalue(np.bincount(vals, minlength=3), toy.eta) > 1e-3
    assert sample_stationary_x(np.random.default_rng(1), toy, 0) in (0, 1, 2)


@pytest.mark.slow
def test_stationary_pgf_match(m1_partial):
    # D_0 + ... + D_M has pgf P_{M+1} exactly; the truncation bound covers the gap to P
    M = 10
    vals, ab = stationary_batch(np.random.default_rng(6), m1_partial, 20_000, M)
    w = 0.5 ** np.minimum(vals, 2000)
    emp = np.where(ab, 0.0, w).mean()
    truncated = S.pn_pgf(m1_partial, M + 1, 0.5)
    se = np.std(w) / math.sqrt(len(vals))
    assert abs(emp - truncated) < 4 * se + ab.mean()
    exact, _ = S.stationary_pgf(m1_partial, 0.5)
    bound = stationary_truncation_bound(m1_partial, M)
    assert 0 <= truncated - exact <= bound


def test_determinism(m1):
    a = [simulate_coupled(replica_rng(3, r), m1, 6).to_dict() for r in range(20)]
    b = [simulate_coupled(replica_rng(3, r), m1, 6).to_dict() for r in range(20)]
    assert a == b
    v1 = sn_batch(np.random.default_rng(8), m1, 1000, 5)
    v2 = sn_batch(np.random.default_rng(8), m1, 1000, 5)
    assert np.array_equal(v1[0], v2[0])


def test_jsonl(m1):
    recs = [json.loads(r) for r in jsonl_records("sn", [3, 4], [False, True])]
    assert recs[1] == {"replica": 1, "outcome": "sn", "value": 4, "aborted": True}
    rep, sample, exc = coupled_batch(0, 5, 1, m1, 3)[0]
    assert rep == 5
    rec = json.loads(coupled_record(rep, sample, exc))
    assert rec["s_n"] == rec["s_n1"] - rec["s_n2"]
