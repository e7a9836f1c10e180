import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from wpcn import allocator as al
from wpcn.eh_model import EhCurve, EhuProfile
from wpcn.numerics import z_of

# Single-user instance with N0*eta*x^2 = 2, P_H*x = 1 (N0 = 10, eta = 0.2, x = 1,
# P_H = 1). Reference values from mpmath at 40 digits.
N0 = 10.0
ONE = [EhuProfile(0.2, 1.0)]
C_HALF = 1.648721270700128146848650787814163571654
TAU0 = 0.3934693402873665763962004650088195465581
TAU1 = 0.6065306597126334236037995349911804534419
RATE = 0.303265329856316711801899767495590226721
RHO = 0.1756393646499359265756746060929182141731
# Same channel with P_H = 10 (threshold 5), p_max = 2, lambda = 0.1:
# root of ln C - (C-1)/C + 0.2 = 4/C.
C_CAPPED = 4.400558980667172998777275503596578136504


def one_user(p_sat=1.0):
    profs = [EhuProfile(0.2, p_sat)]
    return al.EpochChannel.from_gains([1.0], profs, N0), profs


def test_coefficients_examples():
    profs = [EhuProfile(0.5, 0.5), EhuProfile(0.75, 2.0)]
    ep = al.EpochChannel.from_gains([2.0, 2.0], profs, 1.0)
    assert al.coefficients(ep, profs, 1) == pytest.approx((3.0, 1.0))
    assert al.coefficients(ep, profs, 2)[0] == 0.0
    assert al.coefficients(ep, profs, 0)[1] == 0.0


def test_select_s_star_examples():
    ep, profs = one_user()
    assert al.select_s_star(ep, profs, 3.0) is None
    assert al.select_s_star(ep, profs, 1.0) == 1
    profs3 = [EhuProfile(0.3, 1e-6)] * 3
    ep3 = al.EpochChannel.from_gains([1e4, 2e4, 3e4], profs3, 1e-10)
    assert al.select_s_star(ep3, profs3, 0.0) == 3


def test_worked_instance():
    ep, profs = one_user()
    c, rho = al.solve_c_theorem1(ep, profs, 1.0, 1)
    assert c == pytest.approx(C_HALF, rel=1e-12)
    assert rho == pytest.approx(RHO, rel=1e-10)
    a = al.allocate_theorem1(ep, profs, 1.0)
    assert a.p0 == pytest.approx(0.5, rel=1e-15)
    assert a.tau0 == pytest.approx(TAU0, rel=1e-12)
    assert a.tau[0] == pytest.approx(TAU1, rel=1e-12)
    assert a.tau0 + a.tau[0] == pytest.approx(1.0, abs=1e-15)
    assert a.regime == ("boundary",)
    r = al.epoch_rates(a, ep, profs)
    assert r[0] == pytest.approx(RATE, rel=1e-12)


def test_rho_tends_to_zero_near_activity_threshold():
    ep, profs = one_user()
    lam = 2.0 * (1 - 1e-9)
    c, rho = al.solve_c_theorem1(ep, profs, lam, 1)
    assert 0 < rho < 1e-6
    assert c == pytest.approx(z_of(0.0), abs=1e-4)


def test_idle_when_lambda_large():
    ep, profs = one_user()
    a = al.allocate_theorem1(ep, profs, 2.0)
    assert a.p0 == 0.0 and a.tau0 == 0.0 and np.all(a.tau == 0)
    assert np.all(al.epoch_rates(a, ep, profs) == 0.0)


def test_theorem2_capped_example():
    ep, profs = one_user(p_sat=10.0)
    a = al.allocate_theorem2(ep, profs, 0.1, 2.0)
    assert a.p0 == 2.0
    assert a.g == 0 and a.s_star is None
    assert a.regime == ("linear",)
    c = a.c_const
    assert math.log(c) - (c - 1) / c + 0.2 - 4 / c == pytest.approx(0.0, abs=1e-10)
    assert c == pytest.approx(C_CAPPED, rel=1e-10)


def test_theorem2_uncapped_matches_theorem1():
    ep, profs = one_user()
    a1 = al.allocate_theorem1(ep, profs, 1.0)
    a2 = al.allocate_theorem2(ep, profs, 1.0, 100.0)
    assert (a1.p0, a1.tau0, a1.c_const) == (a2.p0, a2.tau0, a2.c_const)


def test_baseline1_is_binary_and_proportional():
    profs = [EhuProfile(0.2, 1e-6), EhuProfile(0.5, 3e-6), EhuProfile(0.3, 2e-5)]
    ep = al.EpochChannel.from_gains([1e4, 3e4, 2e4], profs, 1e-10)
    a0 = sum(1e-10 * p.eta * x**2 for p, x in zip(profs, ep.x))
    a = al.baseline1(ep, profs, 0.3 * a0, 20.0)
    assert a.p0 == 20.0
    w = np.array([1e-10 * p.eta * x**2 for p, x in zip(profs, ep.x)])
    assert a.tau / a.tau.sum() == pytest.approx(w / w.sum(), rel=1e-12)
    assert al.baseline1(ep, profs, 1.01 * a0, 20.0).p0 == 0.0


@pytest.mark.parametrize("p_max, p_avg, k, tau0, tau_k", [
    (10.0, 1.0, 5, 0.1, 0.18), (3.0, 3.0, 2, 1.0, 0.0), (2.0, 1.0, 1, 0.5, 0.5)])
def test_baseline2_examples(p_max, p_avg, k, tau0, tau_k):
    ep = al.EpochChannel.from_gains(np.full(k, 1e4), [EhuProfile(0.2, 1e-6)] * k, 1e-10)
    a = al.baseline2(ep, al.NetworkConfig(k, p_avg=p_avg, p_max=p_max))
    assert a.p0 == p_max
    assert a.tau0 == pytest.approx(tau0, rel=1e-15)
    assert a.tau == pytest.approx(np.full(k, tau_k), abs=1e-15)


def test_baseline2_rejects_avg_above_peak():
    ep = al.EpochChannel.from_gains([1e4], ONE, 1e-10)
    with pytest.raises(ValueError):
        al.baseline2(ep, al.NetworkConfig(1, p_avg=3.0, p_max=2.0))


def test_truth_below_design_lowers_rates():
    profs = [EhuProfile(0.2, 9.2e-6)] * 2
    ep = al.EpochChannel.from_gains([1e4, 4e4], profs, 1e-10)
    a = al.allocate_theorem1(ep, profs, 1e-3)
    design = al.epoch_rates(a, ep, profs)
    truth = al.epoch_rates(a, ep, profs, [EhCurve.logistic(0.2, 9.2e-6)] * 2)
    assert np.all(truth <= design)


def test_find_lambda_inverse_consistency():
    ep, profs = one_user()
    cfg = al.NetworkConfig(1, n0=N0, p_avg=0.5 * TAU0)
    res = al.find_lambda(ep.batch(profs), cfg, al.THEOREM1)
    assert res.constraint_active and res.budget_met
    assert res.lam == pytest.approx(1.0, rel=1e-6)


def test_find_lambda_inactive_and_tiny_budget():
    profs = [EhuProfile(0.2, 9.2e-6)] * 3
    rng = np.random.default_rng(5)
    batch = al.prepare_batch(rng.exponential(1e4, (200, 3)), np.full(3, 0.2),
                             np.full(3, 9.2e-6), 1e-10)
    big = al.find_lambda(batch, al.NetworkConfig(3, p_avg=1e9), al.THEOREM1)
    assert big.lam == 0.0 and not big.constraint_active
    tiny = al.find_lambda(batch, al.NetworkConfig(3, p_avg=1e-9, p_max=1e3), al.THEOREM2)
    assert tiny.lam == pytest.approx(np.max(batch.a_coef[:, 0]), rel=1e-3)


# -- properties on random epochs ----------------------------------------------


@st.composite
def epochs(draw, k_max=5):
    k = draw(st.integers(1, k_max))
    eta = [draw(st.floats(0.05, 0.95)) for _ in range(k)]
    p_sat = [10 ** draw(st.floats(-7.0, -4.0)) for _ in range(k)]
    xp = [10 ** draw(st.floats(-8.0, -4.5)) for _ in range(k)]
    n0 = 1e-10
    profs = [EhuProfile(e, p) for e, p in zip(eta, p_sat)]
    x = np.array(xp) / n0
    a0 = float(np.sum(n0 * np.array(eta) * x**2))
    lam = a0 * 10 ** draw(st.floats(-3.0, -1e-6))
    return al.EpochChannel.from_gains(x, profs, n0), profs, lam


def _sorted_regimes(a, ep):
    return [a.regime[i] for i in ep.order]


@settings(max_examples=200, deadline=None)
@given(epochs())
def test_theorem1_structure(case):
    ep, profs, lam = case
    a = al.allocate_theorem1(ep, profs, lam)
    assert a.active
    # share closure
    assert a.tau0 + math.fsum(a.tau) == pytest.approx(1.0, abs=1e-10)
    # regime ordering: saturated*, boundary, linear*
    reg = _sorted_regimes(a, ep)
    s = reg.index("boundary")
    assert reg.count("boundary") == 1
    assert all(r == "saturated" for r in reg[:s]) and all(r == "linear" for r in reg[s + 1:])
    # boundary inversion and branch membership
    eta = np.array([p.eta for p in profs])
    p_sat = np.array([p.p_sat for p in profs])
    incident = ep.n0 * eta * ep.x * a.p0
    b = ep.order[s]
    assert incident[b] == pytest.approx(p_sat[b], rel=4e-16)
    for pos, k in enumerate(ep.order):
        if pos < s:
            assert incident[k] >= p_sat[k] * (1 - 4e-16)
        elif pos > s:
            assert incident[k] < p_sat[k]
    # equal SNR under the design model
    energy = np.minimum(incident, p_sat) * a.tau0
    pos = a.tau > 0
    snr = energy[pos] * ep.x[pos] / a.tau[pos]
    assert snr == pytest.approx(np.full(snr.size, a.c_const - 1.0), rel=1e-8)


@settings(max_examples=200, deadline=None)
@given(epochs())
def test_s_star_unique_by_scan(case):
    ep, profs, lam = case
    b = ep.batch(profs)
    a, z = b.a_coef[0], b.z[0]
    k = len(profs)
    hits = [s for s in range(1, k + 1) if a[s - 1] > lam * z[s - 1] and a[s] <= lam * z[s]]
    assert hits == [al.select_s_star(ep, profs, lam)]


@settings(max_examples=200, deadline=None)
@given(epochs(), st.floats(0.01, 100.0))
def test_theorem2_peak_and_consistency(case, ratio):
    ep, profs, lam = case
    t1 = al.allocate_theorem1(ep, profs, lam)
    t_inf = al.allocate_theorem2(ep, profs, lam, math.inf)
    assert (t1.p0, t1.tau0, t1.c_const) == (t_inf.p0, t_inf.tau0, t_inf.c_const)
    assert np.array_equal(t1.tau, t_inf.tau)
    p_max = ratio * float(np.min(ep.thresholds))
    t2 = al.allocate_theorem2(ep, profs, lam, p_max)
    assert t2.p0 <= p_max
    assert t2.tau0 + math.fsum(t2.tau) == pytest.approx(1.0, abs=1e-10)
    reg = _sorted_regimes(t2, ep)
    if t2.s_star is None:
        # capped: saturated run then linear, no boundary user
        n = reg.count("saturated")
        assert reg == ["saturated"] * n + ["linear"] * (len(reg) - n)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.floats(0.05, 20.0))
def test_consumption_non_increasing_along_trace(seed, k, p_avg):
    rng = np.random.default_rng(seed)
    batch = al.prepare_batch(rng.exponential(1e4, (300, k)), rng.uniform(0.1, 0.9, k),
                             10 ** rng.uniform(-6.5, -4.5, k), 1e-10)
    cfg = al.NetworkConfig(k, p_avg=p_avg, p_max=15.0 * p_avg)
    res = al.find_lambda(batch, cfg, al.THEOREM2)
    trace = sorted(res.trace)
    cons = [c for _, c in trace]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(cons, cons[1:]))
    if res.constraint_active:
        alloc = al.allocate_for(batch, al.THEOREM2, res, cfg)
        assert al.average(alloc.consumption) == pytest.approx(p_avg, rel=1e-4)
        assert np.all(alloc.p0 <= cfg.p_max)
