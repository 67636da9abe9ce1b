import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import osgood_exact
from rough_euler.biotsavart import DiscQuadrature
from rough_euler.energy import (
    DISPLACEMENT_GUARD,
    SEPARATION_GUARD,
    EnergyTrace,
    EquivalenceBracket,
    energy_E,
    energy_E1,
    energy_E2,
    envelope_check,
    equivalence_bracket,
    fit_osgood_constant,
    gronwall_envelope,
    jitter_positions,
    osgood_solution,
    phi,
    twin_run,
)
from rough_euler.flow import init_ensemble, integrate, patch_vorticity


def disc_points(rng, m, rmax=1.0):
    return np.sqrt(rng.uniform(0, rmax**2, m)) * np.exp(2j * np.pi * rng.uniform(0, 1, m))


# -- phi ------------------------------------------------------------------------------


def test_phi_examples():
    assert phi(0.0) == 0.0
    assert phi(math.exp(-1)) == pytest.approx(math.exp(-1), rel=1e-15)
    assert phi(0.01) == pytest.approx(0.01 * math.log(100), rel=1e-15)
    assert phi(0.01) == pytest.approx(0.046052, abs=1e-6)
    assert phi(2.0) == 2.0


def test_phi_monotone_on_dense_grid():
    x = np.linspace(0, 5, 200_001)
    assert np.all(np.diff(phi(x)) >= 0)


@given(a=st.floats(0, 0.1), b=st.floats(0, 0.1))
def test_phi_midpoint_concave(a, b):
    assert phi((a + b) / 2) >= (phi(a) + phi(b)) / 2 - 1e-16


@given(x=st.floats(0, 10), c=st.floats(1, 100))
def test_phi_bounds(x, c):
    assert x <= phi(x) + 1e-300
    assert phi(c * x) <= c * phi(x) * (1 + 1e-12) + 1e-300


def test_phi_rejects_negative():
    with pytest.raises(ValueError):
        phi(-1e-3)


# -- energies -------------------------------------------------------------------------


def test_identical_runs_zero(quad_map, quad_cov, rng):
    y = disc_points(rng, 300, 0.9)
    w = rng.uniform(0, 1, 300)
    assert energy_E1(quad_map.psi(y), quad_map.psi(y), w) == 0.0
    assert energy_E2(y, y, w) == 0.0
    assert energy_E(y, y, quad_cov, w) == 0.0


def test_uniform_shift_gives_eps_times_area(rng):
    x = disc_points(rng, 500)
    w = np.full(500, 1.0 / 500)
    eps = 3e-4
    assert energy_E1(x, x + eps * np.exp(0.7j), w) == pytest.approx(eps, rel=1e-12)


def test_E_equals_E2_inside_identity_region(identity_cov, rng):
    y1 = disc_points(rng, 400, 0.24)
    y2 = y1 + 1e-3 * np.exp(2j * np.pi * rng.uniform(0, 1, 400))
    w = rng.uniform(0, 1, 400)
    assert energy_E(y1, y2, identity_cov, w) == pytest.approx(energy_E2(y1, y2, w), rel=1e-14)


def test_E_equals_E2_for_identity_map(identity_cov, rng):
    # the density is constant so F is the identity everywhere
    y1 = disc_points(rng, 400, 0.95)
    y2 = 0.99 * y1
    w = rng.uniform(0, 1, 400)
    assert energy_E(y1, y2, identity_cov, w) == pytest.approx(energy_E2(y1, y2, w), rel=1e-10)


def test_stacked_snapshots(rng):
    a = disc_points(rng, (4, 50), 0.9)
    b = disc_points(rng, (4, 50), 0.9)
    w = rng.uniform(0, 1, 50)
    out = energy_E2(a, b, w)
    assert out.shape == (4,)
    assert out[2] == pytest.approx(energy_E2(a[2], b[2], w))


def test_mismatched_sets_rejected():
    with pytest.raises(ValueError):
        energy_E1(np.zeros(3), np.zeros(4), np.ones(3))
    with pytest.raises(ValueError):
        energy_E2(np.zeros(3), np.zeros(3), np.ones(2))


def test_E1_matches_fine_quadrature(quad_map):
    # E1 for the contraction y -> 0.99 y against Gauss-Legendre x trapezoid
    quad = DiscQuadrature(128, 128)
    y = quad.nodes
    m = np.abs(quad_map.psi_z(y)) ** 2 * quad.weights
    e1 = energy_E1(quad_map.psi(y), quad_map.psi(0.99 * y), m)

    r, wr = np.polynomial.legendre.leggauss(400)
    r, wr = (r + 1) / 2, wr / 2
    t = np.linspace(0, 2 * np.pi, 1024, endpoint=False)
    z = r[:, None] * np.exp(1j * t[None, :])
    f = np.abs(quad_map.psi(z) - quad_map.psi(0.99 * z)) * np.abs(quad_map.psi_z(z)) ** 2
    ref = float(np.sum(wr[:, None] * r[:, None] * f) * (2 * np.pi / t.size))
    assert e1 == pytest.approx(ref, rel=0.01)


# -- envelopes ------------------------------------------------------------------------


def test_envelope_at_zero():
    lo, hi = gronwall_envelope(1e-3, 2.0, 0.5, 0.0)
    assert lo == pytest.approx(1e-3 / 15, rel=1e-12)
    assert hi == pytest.approx(15e-3, rel=1e-12)


def test_envelope_worked_example():
    _, hi = gronwall_envelope(1e-6, 1.0, 1.0, 1.0)
    assert hi == pytest.approx(20 * (1e-6) ** math.exp(-1), rel=1e-12)
    assert hi == pytest.approx(0.1237, rel=5e-3)


@pytest.mark.parametrize("bad", [(0.0, 1.0, 1.0), (-1.0, 1.0, 1.0), (1e-3, 0.0, 1.0), (1e-3, 1.0, 0.0)])
def test_envelope_rejects_bad_parameters(bad):
    with pytest.raises(ValueError):
        gronwall_envelope(*bad, 0.5)


@given(y0=st.floats(1e-12, 0.99), c=st.floats(0.01, 5), R=st.floats(0.01, 10))
def test_upper_envelope_nondecreasing(y0, c, R):
    _, hi = gronwall_envelope(y0, c, R, np.linspace(0, 3, 200))
    assert np.all(np.diff(hi) >= -1e-15 * hi[1:])


def test_tiny_start_does_not_underflow():
    lo, hi = gronwall_envelope(1e-300, 1.0, 1.0, [0.0, 1.0])
    assert hi[1] > 0 and np.isfinite(hi[1])


@pytest.mark.parametrize("sign", [1, -1])
def test_osgood_solution_matches_closed_form(sign):
    t = np.linspace(0, 1, 51)
    y = osgood_solution(1e-4, 1.5, t, sign=sign)
    ref = osgood_exact(1e-4, 1.5, t, sign=sign)
    assert np.max(np.abs(np.log(y) - np.log(ref))) < 1e-9


def test_osgood_solution_past_crossover():
    # above 1/e the equation is linear growth
    t = np.linspace(0, 1, 11)
    y = osgood_solution(0.5, 1.0, t)
    np.testing.assert_allclose(y, 0.5 * np.exp(t), rtol=1e-9)


def test_osgood_solution_validates():
    with pytest.raises(ValueError):
        osgood_solution(0.0, 1.0, [0, 1])
    with pytest.raises(ValueError):
        osgood_solution(1e-3, 1.0, [1, 0])


def test_fifty_draws_inside_envelopes():
    rng = np.random.default_rng(50)
    t = np.linspace(0, 1, 101)
    for _ in range(50):
        y0 = 10 ** rng.uniform(-8, -1)
        c = rng.uniform(0.1, 3.0)
        for sign in (1, -1):
            y = osgood_solution(y0, c, t, sign=sign)
            env = envelope_check(t, y, c, R=float(y.max()))
            assert env["below_upper"] and env["above_lower"]


def test_envelope_check_detects_violation():
    t = np.linspace(0, 1, 11)
    y = 1e-6 * np.exp(40 * t)
    env = envelope_check(t, y, 0.1)
    assert not env["below_upper"]
    assert env["log_upper_margin"] < 0


def test_envelope_check_default_R():
    t = np.linspace(0, 1, 11)
    y = osgood_solution(1e-3, 1.0, t)
    assert envelope_check(t, y, 1.0)["R"] == pytest.approx(y.max())


# -- fit and jitter ------------------------------------------------------------------------


def test_fit_recovers_rate_of_exact_solution():
    t = np.linspace(0, 0.5, 5001)
    e = osgood_exact(1e-5, 2.0, t)
    C, steps = fit_osgood_constant(t, e)
    assert steps == 5000
    assert C == pytest.approx(2.0, rel=2e-3)


def test_fit_zero_trace():
    assert fit_osgood_constant(np.linspace(0, 1, 5), np.zeros(5)) == (None, 0)


def test_fit_decreasing_trace_clipped():
    C, _ = fit_osgood_constant(np.linspace(0, 1, 5), np.array([1e-3, 9e-4, 8e-4, 7e-4, 6e-4]))
    assert C == 0.0


def test_fit_window():
    t = np.arange(6.0)
    e = np.array([1e-3, 1e-3, 1e-3, 1.0, 1.0, 1.0])
    assert fit_osgood_constant(t, e, window=3) == (0.0, 2)


@given(eta=st.floats(1e-10, 1e-2))
def test_jitter_magnitude_and_containment(eta):
    rng = np.random.default_rng(1)
    nodes = disc_points(rng, 200, 1 - 1e-9)
    out = jitter_positions(nodes, eta, rng)
    np.testing.assert_allclose(np.abs(out - nodes), eta, rtol=1e-6)
    assert np.all(np.abs(out) < 1)


# -- bracket ---------------------------------------------------------------------------------


def test_bracket_identity(identity_cov):
    br = equivalence_bracket(identity_cov, 2000, np.random.default_rng(0))
    assert br.F == pytest.approx((1.0, 1.0), abs=1e-9)
    assert br.Psi == pytest.approx((1.0, 1.0), abs=1e-12)
    assert br.Lambda == pytest.approx(1.0, abs=1e-9)


def test_bracket_quadratic(quad_cov):
    br = equivalence_bracket(quad_cov, 5000, np.random.default_rng(0))
    # |1 + 0.6 z| ranges over [0.4, 1.6] on the boundary
    assert br.psi_z_sq == pytest.approx((0.16, 2.56), rel=1e-9)
    assert 0.4 <= br.Psi[0] < br.Psi[1] <= 1.6
    assert br.F[0] < 1 < br.F[1]
    assert br.Lambda == max(br.F[1], 1 / br.F[0], br.Psi[1], 1 / br.Psi[0])


def test_equivalence_check_flags_outside_ratio():
    t = np.array([0.0, 1.0])
    tr = EnergyTrace(t, np.array([1.0, 1.0]), np.array([1.0, 1.0]), np.array([1.0, 3.0]), 1.0, 1, 1.0, {},
                     bracket=EquivalenceBracket((0.5, 2.0), (0.5, 2.0), (1.0, 1.0)))
    assert not tr.equivalence_ok()
    tr.E[1] = 1.5
    assert tr.equivalence_ok()


def test_equivalence_needs_bracket():
    tr = EnergyTrace(np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1), None, 0, 0.0, {})
    with pytest.raises(ValueError):
        tr.equivalence_ok()


# -- twin runs --------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_twin(quad_map, quad_cov):
    sampler = patch_vorticity(0.3, 0.2, 1.0)
    quad = DiscQuadrature(16, 16)
    ref = integrate(init_ensemble(quad_map, sampler, quad), 0.1, 5e-3, record_every=2)
    br = equivalence_bracket(quad_cov, 5000, np.random.default_rng(0))
    return quad_map, quad_cov, sampler, quad, ref, br


def test_zero_perturbation_exact_zero(small_twin):
    cmap, cov, sampler, quad, ref, br = small_twin
    tr = twin_run(cmap, sampler, quad, 0.1, 5e-3, eta=0.0, cov=cov, bracket=br)
    assert tr.exact_zero
    assert tr.C is None and tr.fit_steps == 0
    assert tr.summary()["exact_zero"]


def test_small_jitter_run(small_twin):
    cmap, cov, sampler, quad, ref, br = small_twin
    tr = twin_run(cmap, sampler, quad, 0.1, 5e-3, eta=1e-6, rng=np.random.default_rng(4),
                  cov=cov, bracket=br, reference=ref)
    assert tr.times.size == 11
    assert np.all(tr.E > 0)
    # every particle starts 1e-6 away, so E2(0) is 1e-6 times the physical area
    assert tr.E2[0] == pytest.approx(1e-6 * np.sum(init_ensemble(cmap, sampler, quad).mass), rel=1e-9)
    assert tr.C is not None and np.isfinite(tr.C)
    assert all(v is None for v in tr.breaches.values())
    assert tr.envelope["below_upper"] and tr.envelope["above_lower"]
    assert tr.equivalence_ok()


def test_reference_reuse_matches_fresh_run(small_twin):
    cmap, cov, sampler, quad, ref, br = small_twin
    a = twin_run(cmap, sampler, quad, 0.1, 5e-3, eta=1e-6, rng=np.random.default_rng(4), cov=cov, reference=ref)
    b = twin_run(cmap, sampler, quad, 0.1, 5e-3, eta=1e-6, rng=np.random.default_rng(4), cov=cov)
    np.testing.assert_array_equal(a.E, b.E)


def test_large_jitter_breaches_window(small_twin):
    cmap, cov, sampler, quad, ref, br = small_twin
    assert SEPARATION_GUARD < 0.2
    tr = twin_run(cmap, sampler, quad, 0.1, 5e-3, eta=0.2, rng=np.random.default_rng(4), cov=cov, reference=ref)
    assert tr.breaches["separation_1_10"] == 0.0
    assert tr.fit_end == 0.0


def test_displacement_guard_value():
    assert DISPLACEMENT_GUARD == 1 / 16


def test_resolution_perturbation(small_twin):
    cmap, cov, sampler, quad, ref, br = small_twin
    tr = twin_run(cmap, sampler, quad, 0.1, 5e-3, perturbation="resolution", cov=cov, bracket=br, reference=ref)
    assert tr.label == "halved resolution"
    assert tr.E2[0] == 0.0
    assert tr.E[-1] > 0


def test_twin_run_validation(small_twin):
    cmap, cov, sampler, quad, ref, br = small_twin
    with pytest.raises(ValueError):
        twin_run(cmap, sampler, quad, 0.1, 5e-3, perturbation="shake", cov=cov)
    with pytest.raises(ValueError):
        twin_run(cmap, sampler, quad, 0.1, 5e-3, eta=-1.0, cov=cov)
    with pytest.raises(ValueError):
        twin_run(cmap, sampler, quad, 0.1, 3e-3, record_interval=0.01, cov=cov)
