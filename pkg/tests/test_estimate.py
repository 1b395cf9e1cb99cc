import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critgwi import estimate as E
from critgwi.errors import DegenerateGrid, InfeasibleWindow
from critgwi.simulate import SnSampler


class Constant:
    def __init__(self, value):
        self.value = value

    def __call__(self, rng, size):
        return np.full(size, self.value), np.zeros(size, dtype=bool)


class Bernoulli:
    def __init__(self, p):
        self.p = p

    def __call__(self, rng, size):
        return (rng.random(size) < self.p).astype(np.int64), np.zeros(size, dtype=bool)


class HalfAborted:
    def __call__(self, rng, size):
        ab = np.arange(size) % 2 == 0
        return np.where(ab, 3, 0), ab


def test_constant_sampler():
    lo, hi = E.mc_tail(Constant(5), [4, 6], 1000, seed=0)
    assert lo.p_hat == 1.0 and hi.p_hat == 0.0
    assert 0 <= hi.ci_lo <= hi.p_hat <= hi.ci_hi <= 1


def test_bernoulli_stub():
    (est,) = E.mc_tail(Bernoulli(0.3), [0], 1_000_000, seed=1)
    assert 0.2986 <= est.p_hat <= 0.3014


def test_wilson_matches_closed_form():
    # oracle: Wilson bounds solve (p - phat)^2 = z^2 p (1 - p) / n
    hits, n, z = 7, 50, 1.959963984540054
    lo, hi = E.wilson_interval(hits, n)
    phat = hits / n
    for p in (lo, hi):
        assert (p - phat) ** 2 == pytest.approx(z * z * p * (1 - p) / n, rel=1e-9)
    assert E.wilson_interval(0, 10)[0] == 0.0
    assert E.wilson_interval(10, 10)[1] == 1.0


def test_wilson_calibration():
    rng = np.random.default_rng(17)
    p, n = 0.05, 200
    hits = rng.binomial(n, p, size=1000)
    cover = np.mean([lo <= p <= hi for lo, hi in (E.wilson_interval(int(h), n) for h in hits)])
    assert cover >= 0.93


@settings(max_examples=50, deadline=None)
@given(parts=st.lists(st.tuples(st.integers(0, 100), st.integers(0, 100), st.integers(0, 5)), min_size=1, max_size=6),
       perm_seed=st.integers(0, 1000))
def test_merge_associative(parts, perm_seed):
    ests = [E.TailEstimate(1.0, min(h, r), max(r, 1), min(a, max(r, 1) - min(h, r))) for h, r, a in parts]
    order = np.random.default_rng(perm_seed).permutation(len(ests))
    a = ests[0]
    for e in ests[1:]:
        a = a.merge(e)
    b = ests[order[0]]
    for i in order[1:]:
        b = b.merge(ests[i])
    assert a.to_dict() == b.to_dict()
    assert 0 <= a.ci_lo <= a.p_hat <= a.ci_hi <= 1


def test_abort_slack():
    (est,) = E.mc_tail(HalfAborted(), [5], 1000, seed=0)
    assert est.aborted_reps == 500
    assert est.ci_hi >= 0.5


def test_merge_mismatch():
    with pytest.raises(ValueError):
        E.TailEstimate(1.0, 1, 2).merge(E.TailEstimate(2.0, 1, 2))


def test_worker_invariance(m1):
    s = SnSampler(m1, 4)
    a = E.mc_tail(s, [10, 100], 3 * E.BLOCK + 7, seed=5, workers=1)
    b = E.mc_tail(s, [10, 100], 3 * E.BLOCK + 7, seed=5, workers=3)
    assert [x.to_dict() for x in a] == [x.to_dict() for x in b]
    v1 = E.mc_values(s, 5000, seed=2, workers=1)
    v2 = E.mc_values(s, 5000, seed=2, workers=2)
    assert np.array_equal(v1[0], v2[0])


def test_block_streams_distinct():
    a = E.block_rng(1, 0).random(4)
    b = E.block_rng(1, 1).random(4)
    c = E.replica_rng(1, 0).random(4)
    assert not np.allclose(a, b) and not np.allclose(a, c)


def test_geometric_grid():
    g = E.geometric_grid(10.5, 1000.2, 5)
    assert g[0] >= 10.5 and g[-1] <= 1000.2
    assert np.all(np.diff(g) > 0)
    with pytest.raises(DegenerateGrid):
        E.geometric_grid(10, 5, 3)
    with pytest.raises(DegenerateGrid):
        E.geometric_grid(1, 5, 0)


def test_n1_exact_channel(m1):
    # the window is empty at n = 1, but the exact channel reduces to eta_tail there
    from critgwi.predict import ld_prediction
    from critgwi.series import sn_tail

    xs = [1, 10, 10_000]
    inv = sn_tail(m1, 1, xs)
    np.testing.assert_allclose(inv.value, m1.eta_tail(np.array(xs)), rtol=1e-7)
    ratio = inv.value / ld_prediction(m1, 1, np.array(xs, dtype=float))
    assert np.all(np.isfinite(ratio) & (ratio > 0))
    with pytest.raises(InfeasibleWindow):
        E.sweep_theorem(m1, 1, 0.1, 0.5)


def test_sweep_infeasible(m1):
    with pytest.raises(InfeasibleWindow):
        E.sweep_theorem(m1, 64, 2.0, 2.0)


def test_sweep_mc_vs_exact(m1):
    rep = E.sweep_theorem(m1, 8, 0.1, 0.5, reps=20_000, grid_size=6, seed=3)
    inside = [r.ci_lo - 1e-3 <= r.exact_hi and r.exact_lo <= r.ci_hi + 1e-3 for r in rep.rows]
    assert np.mean(inside) >= 0.99 - 1e-9 or sum(inside) >= len(inside) - 1
    assert rep.sup_error >= 0
    s = json.loads(rep.to_json())
    assert s["sup_is_grid_lower_bound"] is True
    header = rep.to_csv().splitlines()[0]
    assert header == ",".join(E.COLUMNS)


def test_sweep_stationary(m1):
    rep = E.sweep_stationary(m1, [1e2, 1e3, 1e4])
    r = rep.ratios()
    assert abs(r[-1] - 1) < 0.10
    assert abs(r[0] - 1) > abs(r[1] - 1) > abs(r[2] - 1)
    single = E.sweep_stationary(m1, [1e3])
    assert len(single.rows) == 1
    with pytest.raises(DegenerateGrid):
        E.sweep_stationary(m1, [])
