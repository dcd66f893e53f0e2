import math

import numpy as np
import pytest
from scipy import stats

from exactq import DiscreteLaw, LatticePareto, ShiftedPareto, build_coupling, refine_increment
from exactq.lattice import CoupledSampler, psi_lattice_eval, refine_cells, solve_lattice_params

from conftest import philox

TARGET = ShiftedPareto(7, 3)


@pytest.fixture(scope="module")
def coupled():
    cp = build_coupling(TARGET, 0.1, 1.0)
    params = solve_lattice_params(cp, 4, 0.38, 1.7)
    return cp, params


def test_span_bounds():
    with pytest.raises(ValueError):
        build_coupling(TARGET, 0.0, 1.0)
    with pytest.raises(ValueError):
        build_coupling(TARGET, 1.5, 1.0)
    assert build_coupling(TARGET, None, 2.0).h == pytest.approx(0.2)


def test_dominating_drift_positive_and_formula():
    for h in (0.05, 0.1, 0.5, 1.0):
        cp = build_coupling(TARGET, h, 1.0)
        assert cp.mu_prime > 0
        # E[h floor(X/h)] by a direct sample mean brackets the closed-form centering
        x = TARGET.sample(philox(1), 10**6)
        est = np.mean(h * np.floor(x / h))
        se = np.std(h * np.floor(x / h)) / 1e3
        assert abs(est - cp.mean_floor) < 5 * se
        assert cp.mu_prime == pytest.approx(1.0 - cp.mean_floor - h)


def test_step_domination_on_draws():
    cp = build_coupling(TARGET, 0.1, 1.0)
    x = TARGET.sample(philox(2), 10**6)
    xp = 0.1 * np.floor(x / 0.1) - cp.mean_floor
    assert np.all(xp - cp.mu_prime >= x - cp.mu - 1e-12)


def test_refined_increments_lie_in_their_cells():
    cp = build_coupling(TARGET, 0.1, 1.0)
    rng = philox(3)
    xp = cp.lattice.sample(rng, 50_000)
    x = cp.refine(xp, rng)
    cells = cp.atom_index(xp)
    assert np.all(x >= cells * 0.1 - 1e-12) and np.all(x < (cells + 1) * 0.1 + 1e-12)
    assert np.all(np.floor(x / 0.1 + 1e-12) == cells)


def test_refined_marginal_is_target_law():
    cp = build_coupling(TARGET, 0.1, 1.0)
    rng = philox(4)
    x = cp.refine(cp.lattice.sample(rng, 100_000), rng)
    cdf = lambda t: 1.0 - TARGET.tail_prob(t)
    assert stats.kstest(x, cdf).pvalue > 0.01


def test_single_refinement():
    cp = build_coupling(TARGET, 0.1, 1.0)
    v = refine_increment(cp.lattice.value(3), cp, philox(5))
    assert math.floor(v / 0.1 + 1e-12) == cp.atom_index(cp.lattice.value(3))


def test_lattice_target_refines_to_itself():
    d = LatticePareto(2.9, 0.85, 0.1)
    cp = build_coupling(d, 0.1, 1.0)
    rng = philox(6)
    xp = cp.lattice.sample(rng, 20_000)
    x = cp.refine(xp, rng)
    # one target atom per cell, sitting at or above the cell's lower edge
    assert np.all(x >= cp.atom_index(xp) * 0.1 - 1e-9)
    assert np.all(x < (cp.atom_index(xp) + 1) * 0.1)
    assert np.all(xp - cp.mu_prime >= x - 1.0 - 1e-9)
    np.testing.assert_allclose(d.value(np.arange(5)), refine_cells(np.arange(5) + cp.index_shift, cp, rng))
    with pytest.raises(ValueError):
        build_coupling(d, 0.05, 1.0)


def test_discrete_target():
    d = DiscreteLaw([-1.0, 0.25, 2.33], [0.5, 0.3, 0.2])
    cp = build_coupling(d, 0.1, 1.0)
    rng = philox(7)
    xp = cp.lattice.sample(rng, 10_000)
    x = cp.refine(xp, rng)
    assert set(np.round(x, 9)) <= set(np.round(d.values, 9))
    assert np.all(xp - cp.mu_prime >= x - 1.0 - 1e-9)


def test_psi_lattice_eval():
    d = DiscreteLaw([-1.0, 0.0, 2.0], [0.5, 0.25, 0.25], lattice_span=1.0)
    # mean zero, so the atoms are unchanged; cutoff 1 drops the atom at 2
    want = math.log((0.5 * math.exp(-0.3) + 0.25) / 0.75)
    assert psi_lattice_eval(0.3, 1.0, d) == pytest.approx(want, rel=1e-12)
    with pytest.raises(TypeError):
        psi_lattice_eval(0.3, 1.0, TARGET)


def test_coupled_sampler_domination_and_stop(coupled):
    cp, params = coupled
    sampler = CoupledSampler(cp, params)
    rng = philox(8)
    for n in (0, 5, 40):
        for _ in range(30):
            out = sampler.sample(n, rng)
            assert out.dominated()
            t = out.target
            assert out.N >= n
            # the stop: the dominating walk's future maximum lies at or below the target's low point
            assert out.dominating_top[out.N] <= out.floor_level + 1e-9
            assert np.all(out.dominating_top[n:out.N] > out.floor_level)
            # target suffix maxima obey the backward Lindley recursion
            np.testing.assert_allclose(t.M[:-1], np.maximum(t.M[1:] + t.S[1:] - t.S[:-1], 0.0), atol=1e-9)
            assert np.all(t.M >= 0)
    assert not sampler.inner.stats.violations


def test_coupled_sampler_rejects_wrong_drift(coupled):
    cp, params = coupled
    with pytest.raises(ValueError):
        CoupledSampler(cp, params.__class__(**{**params.to_dict(), "mu": 1.0}))
    with pytest.raises(ValueError):
        CoupledSampler(cp, params).sample(-1, philox(9))


def test_coupled_m0_matches_lindley(coupled):
    """The refined M_0 agrees in law with a long forward chain on the target."""
    from exactq.oracles import ks_distance, lindley_chain
    cp, params = coupled
    sampler = CoupledSampler(cp, params)
    rng = philox(10)
    m0 = np.array([sampler.sample(0, rng).target.M[0] for _ in range(4000)])
    chain = lindley_chain(TARGET, 1.0, 4_000_000, philox(11))[::1000]
    _, pval = ks_distance(m0, chain)
    assert pval > 0.01
