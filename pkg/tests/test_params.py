import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exactq import AlgorithmParams, LatticePareto, check_feasibility, degenerate, minimize_m
from exactq.params import (BETA_1_2, InfeasibleParams, check_ci1, check_ci2, check_ci2_beta12, check_cm0, ci1_lhs,
                           ci2_lhs, require_feasible)

LIGHT = LatticePareto(7, 3, 0.1)
HEAVY_HT = LatticePareto(2.9, 8, 0.1)
INF_VAR = LatticePareto(1.99, 0.05, 0.1)


def light(**kw):
    base = dict(mu=1.0, m=16, L=1.1, alpha=4, gamma=1.7, delta=0.38)
    base.update(kw)
    return AlgorithmParams(**base)


def ci2_by_hand(p, d, z):
    """The second inequality written out term by term."""
    ex2 = d.second_moment()
    tail = d.tail_prob((z + p.m) ** (1 - p.delta))
    expo = (-p.gamma * (p.m + z) ** p.delta
            + p.gamma**2 * math.exp(p.gamma) * ex2 * z / ((p.m + z) ** (2 * (1 - p.delta)) * p.mu)
            + 4 * z / p.mu * tail)
    pre = 3 * (1 + 2 * z + p.m) ** p.alpha / ((p.alpha - 1) * (p.m + 1) ** (p.alpha - 1) * z)
    return pre * math.exp(expo)


def test_parameter_validation():
    with pytest.raises(ValueError):
        light(delta=0.6)
    with pytest.raises(ValueError):
        light(mu=0.0)
    with pytest.raises(ValueError):
        light(alpha=1.0)
    # structural index constraint of the 1+eps mode
    with pytest.raises(ValueError):
        AlgorithmParams(mu=1.0, m=10, alpha=1.6, gamma=1, delta=0.2, mode=BETA_1_2, eps=0.5)


def test_light_row_feasible():
    rep = check_feasibility(light(), LIGHT)
    assert rep.feasible, rep.failed()
    assert rep.ci1_sup <= 1 and rep.ci2_sup <= 1


def test_tiny_m_fails_first_inequality():
    p = light(m=0.01)
    assert ci1_lhs(p, LIGHT, [p.mu])[0] > 1
    rep = check_feasibility(p, LIGHT)
    assert not rep.ci1 and not rep.feasible


def test_zero_law_first_inequality_passes():
    for m in (1.0, 5.0, 100.0):
        assert check_ci1(light(m=m), degenerate())[0]


def test_second_inequality_matches_hand_evaluation():
    p = AlgorithmParams(mu=1.0, m=400, alpha=2.01, gamma=0.74, delta=0.38)
    for z in (1.0, 64.0, 400.0, 4096.0):
        assert ci2_lhs(p, HEAVY_HT, [z])[0] == pytest.approx(ci2_by_hand(p, HEAVY_HT, z), rel=1e-9)


@pytest.mark.xfail(strict=True, reason="the reference heavy-traffic tuple gives a left side near 25 at z = m; "
                                       "alpha/(1-delta) = 3.24 also exceeds the law's moment index 2.9")
def test_reference_heavy_row_passes_second_inequality():
    p = AlgorithmParams(mu=1.0, m=400, alpha=2.01, gamma=0.74, delta=0.38)
    assert check_ci2(p, HEAVY_HT)[0]


def test_heavy_row_m1_fails():
    p = AlgorithmParams(mu=1.0, m=1, alpha=2.01, gamma=0.74, delta=0.38)
    assert not check_ci2(p, HEAVY_HT)[0]
    assert not check_feasibility(p, HEAVY_HT).feasible


def test_second_inequality_vanishes_in_m():
    vals = [ci2_lhs(light(gamma=0.05, m=m), LIGHT, [m]).item() for m in (1e3, 1e5, 1e7)]
    assert vals[0] > vals[1] > vals[2]


def test_minimize_m_light_row():
    p = minimize_m(LIGHT, 1.0, 4, 0.38, 1.7)
    assert p.m <= 16
    assert check_feasibility(p, LIGHT).feasible
    assert not check_feasibility(p.with_m(p.m * 0.99), LIGHT).feasible


@pytest.mark.xfail(strict=True, reason="with X = 0 the second inequality still carries a polynomial factor "
                                       "that exp(-gamma (m+z)^delta) only beats once m is near 9")
def test_minimize_m_zero_law_is_one():
    assert minimize_m(degenerate(), 1.0, 4, 0.38, 1.7).m == 1.0


def test_minimize_m_zero_law_small_and_feasible():
    p = minimize_m(degenerate(), 1.0, 4, 0.38, 1.7)
    assert 1.0 <= p.m < 10.0
    assert check_feasibility(p, degenerate()).feasible


def test_minimize_m_heavy_row_infeasible():
    with pytest.raises(InfeasibleParams) as err:
        minimize_m(HEAVY_HT, 1.0, 2.01, 0.38, 0.74)
    assert "cond_alpha" in err.value.report.failed()


def test_require_feasible_raises():
    with pytest.raises(InfeasibleParams):
        require_feasible(light(m=1.0), LIGHT)


def test_beta12_closed_form():
    p = AlgorithmParams(mu=1.0, m=366.0, alpha=1.1, gamma=1.5, delta=0.35, mode=BETA_1_2, eps=0.8)
    ok, val, in1, delta_ok = check_ci2_beta12(p, INF_VAR)
    assert ok and in1 and delta_ok
    assert check_feasibility(p, INF_VAR).feasible
    # the bound decreases to zero as m grows
    vals = [check_ci2_beta12(p.with_m(m), INF_VAR)[1] for m in (1e3, 1e6, 1e9)]
    assert vals[0] > vals[1] > vals[2]
    with pytest.raises(ValueError):
        check_ci2_beta12(light(), LIGHT)


def test_beta12_bisection_eps_half():
    p = minimize_m(INF_VAR, 1.0, 1.2, 0.2, 1.5, mode=BETA_1_2, eps=0.5, m_max=1e12, rel_tol=1e-3)
    assert check_feasibility(p, INF_VAR).feasible
    assert not check_feasibility(p.with_m(p.m / 1.01), INF_VAR).feasible


def test_peak_term_is_true_maximum():
    # the closed form bounds max u^a exp(-u^de); check it against a dense grid
    from exactq.params import _log_peak
    for a, de, g, m in [(1.1, 0.35, 1.5, 1.0), (4.0, 0.38, 1.7, 1.0), (2.02, 0.25, 2.5, 30.0), (1.02, 0.02, 2.0, 14.0)]:
        lo = math.log(g) / de + math.log(m)
        logu = np.linspace(lo, lo + 400, 400001)
        grid = np.max(a * logu - np.exp(de * logu))
        assert _log_peak(a, de, g, m) >= grid - 1e-9
        assert _log_peak(a, de, g, m) == pytest.approx(grid, abs=1e-3)


def test_cm0_examples():
    status, freq = check_cm0(light(), LIGHT, np.random.default_rng(0), length=10**6)
    assert status == "verified" and freq > 0
    with pytest.warns(UserWarning):
        status, _ = check_cm0(light(), degenerate(), np.random.default_rng(0), length=10**4)
    assert status == "assumed"
    status, _ = check_cm0(light(m=1.0, L=50.0), LIGHT, np.random.default_rng(0), length=10**5)
    assert status == "verified"


@settings(max_examples=20, deadline=None)
@given(st.floats(2.05, 6.0), st.floats(0.1, 0.5), st.floats(0.3, 3.0), st.floats(1.0, 2000.0))
def test_feasibility_monotone_in_m(alpha, delta, gamma, m):
    d = LatticePareto(7, 3, 0.1)
    p = AlgorithmParams(mu=1.0, m=m, alpha=alpha, gamma=gamma, delta=delta)
    if check_feasibility(p, d).feasible:
        for factor in (1.5, 4.0, 50.0):
            assert check_feasibility(p.with_m(m * factor), d).feasible
