import math

import numpy as np
import pytest

from oracles import patch_circulation, vortex_period
from rough_euler.biotsavart import DiscQuadrature, btilde, context_from_samples
from rough_euler.conformal import make_family
from rough_euler.errors import DomainViolationError, ParticleEscapeError
from rough_euler.flow import (
    PatchTriangulation,
    backward_flow,
    constant_vorticity,
    init_ensemble,
    integrate,
    material_disc_mask,
    measure_preservation_report,
    orbital_period,
    patch_vorticity,
    rhs,
    single_vortex,
    step,
    two_patch_vorticity,
    vorticity_at,
)


def disc_points(rng, m, rmax=1.0):
    return np.sqrt(rng.uniform(0, rmax**2, m)) * np.exp(2j * np.pi * rng.uniform(0, 1, m))


@pytest.fixture(scope="module")
def quad_patch_run():
    cmap = make_family("polynomial(0.3, 2)")
    ens = init_ensemble(cmap, patch_vorticity(0.3, 0.2, 1.0), DiscQuadrature(32, 32))
    start = ens.copy()
    seeds = disc_points(np.random.default_rng(3), 100, 0.8)
    hist = integrate(ens, 0.5, 5e-3, tracers=seeds)
    return start, ens, hist, seeds


@pytest.fixture(scope="module")
def solid_run():
    # 12 x 96: adjacent rings barely feel each other's lattice and the
    # innermost ring holds few enough vortices to stay put over T = 1
    ens = init_ensemble(make_family("identity"), constant_vorticity(1.0), DiscQuadrature(12, 96))
    start = ens.copy()
    hist = integrate(ens, 1.0, 1e-2)
    return start, hist


# -- ensembles -----------------------------------------------------------------------


def test_zero_vorticity_weights(quad_map):
    ens = init_ensemble(quad_map, constant_vorticity(0.0), DiscQuadrature(8, 16))
    assert np.all(ens.weights == 0)


def test_unit_vorticity_total_is_area(identity_map):
    ens = init_ensemble(identity_map, constant_vorticity(1.0), DiscQuadrature(32, 64))
    assert ens.total_circulation == pytest.approx(math.pi, rel=1e-6)


def test_patch_circulation_closed_form(quad_map):
    exact = patch_circulation(0.3, 0.3, 0.2)
    for n, tol in ((64, 0.01), (128, 0.01)):
        ens = init_ensemble(quad_map, patch_vorticity(0.3, 0.2, 1.0), DiscQuadrature(n, n))
        assert ens.total_circulation == pytest.approx(exact, rel=tol)


def test_two_patch_sampler_adds():
    f = two_patch_vorticity(0.3, 0.2, 1.0, -0.3, 0.2, -2.0)
    np.testing.assert_array_equal(f(np.array([0.3, -0.3, 0.0])), [1.0, -2.0, 0.0])


def test_bad_sampler_rejected(quad_map):
    with pytest.raises(ValueError):
        init_ensemble(quad_map, lambda y: np.full(y.shape, np.nan), DiscQuadrature(4, 8))


def test_weights_are_frozen(quad_map):
    ens = init_ensemble(quad_map, constant_vorticity(1.0), DiscQuadrature(4, 8))
    with pytest.raises(ValueError):
        ens.weights[0] = 2.0


def test_single_vortex_inside_only(identity_map):
    with pytest.raises(DomainViolationError):
        single_vortex(identity_map, 1.0, 1.0)


# -- right-hand side --------------------------------------------------------------


def test_rhs_identity_equals_velocity_coefficient(identity_map, rng):
    quad = DiscQuadrature(16, 32)
    ens = init_ensemble(identity_map, patch_vorticity(0.3, 0.2), quad)
    y = disc_points(rng, 50, 0.99)
    ctx = context_from_samples(quad, identity_map, ens.omega0)
    np.testing.assert_allclose(rhs(ens, y), btilde(ctx, y), atol=1e-15)


def test_rhs_divides_by_jacobian(quad_map, rng):
    quad = DiscQuadrature(16, 32)
    ens = init_ensemble(quad_map, patch_vorticity(0.3, 0.2), quad)
    y = disc_points(rng, 50, 0.99)
    ctx = context_from_samples(quad, quad_map, ens.omega0)
    np.testing.assert_allclose(rhs(ens, y), btilde(ctx, y) / np.abs(quad_map.psi_z(y)) ** 2, rtol=1e-13)


def test_rhs_solid_rotation(identity_map):
    # first order: the excluded cell costs about one cell width of velocity
    y = np.array([0.5, 0.5j, 0.3 + 0.1j, 0.71])
    for n in (32, 64, 128):
        ens = init_ensemble(identity_map, constant_vorticity(1.0), DiscQuadrature(n, n))
        assert np.max(np.abs(rhs(ens, y) - 0.5j * y)) <= 1.5 / n


def test_rhs_empty(quad_map):
    ens = init_ensemble(quad_map, constant_vorticity(0.0), DiscQuadrature(4, 8))
    assert np.all(rhs(ens, np.array([0.1, 0.5j])) == 0)


def test_rhs_open_disc_only(quad_map):
    ens = init_ensemble(quad_map, constant_vorticity(1.0), DiscQuadrature(4, 8))
    with pytest.raises(DomainViolationError):
        rhs(ens, np.array([1.0]))


# -- time stepping -------------------------------------------------------------------


def test_zero_vorticity_static(quad_map, rng):
    ens = init_ensemble(quad_map, constant_vorticity(0.0), DiscQuadrature(8, 16))
    seeds = disc_points(rng, 10, 0.9)
    hist = integrate(ens, 0.1, 1e-2, tracers=seeds)
    assert np.array_equal(hist.positions[-1], ens.initial)
    assert np.array_equal(hist.tracers[-1], seeds)


def test_single_vortex_orbit(identity_map):
    rho = 0.5
    gamma = 4 * math.pi**2 * (1 - rho**2)  # period 1
    ens = single_vortex(identity_map, rho, gamma)
    hist = integrate(ens, 1.1, 1e-3)
    period = orbital_period(hist.times, hist.positions[:, 0])
    assert period == pytest.approx(vortex_period(gamma, rho), rel=0.005)
    assert np.max(np.abs(np.abs(hist.positions[:, 0]) - rho)) < 1e-10


def test_solid_rotation_radii_constant(solid_run):
    start, hist = solid_run
    drift = np.abs(np.abs(hist.positions) - np.abs(start.initial)[None, :])
    assert drift.max() < 1e-6


def test_solid_rotation_starts_tangential(identity_map):
    ens = init_ensemble(identity_map, constant_vorticity(1.0), DiscQuadrature(16, 128))
    v, _ = ens.velocity(ens.positions)
    assert np.max(np.abs((v * np.conj(ens.positions)).real)) < 1e-14


def test_containment_and_speed(quad_patch_run):
    _, _, hist, _ = quad_patch_run
    assert hist.min_gap > 0
    assert np.all(np.abs(hist.positions) < 1)
    assert np.all(np.diff(hist.times) > 0)
    assert np.isfinite(hist.max_speed)


def test_weights_conserved(quad_patch_run):
    start, ens, _, _ = quad_patch_run
    assert ens.total_circulation == start.total_circulation


def test_history_interpolation_hits_nodes(quad_patch_run):
    _, _, hist, _ = quad_patch_run
    for i in (0, 7, hist.times.size - 1):
        assert np.array_equal(hist.positions_at(hist.times[i]), hist.positions[i])
    with pytest.raises(ValueError):
        hist.positions_at(1.0)


def test_bad_step_arguments(quad_map):
    ens = init_ensemble(quad_map, constant_vorticity(1.0), DiscQuadrature(4, 8))
    with pytest.raises(ValueError):
        step(ens, 0.0)
    with pytest.raises(ValueError):
        integrate(ens, 0.105, 1e-2)


def test_escaping_tracer_aborts(quad_map):
    ens = init_ensemble(quad_map, constant_vorticity(1.0), DiscQuadrature(4, 8))
    with pytest.raises(ParticleEscapeError):
        integrate(ens, 0.01, 1e-2, tracers=np.array([1.0 - 1e-13]))


# -- backward flow and transported vorticity ----------------------------------------------


def test_backward_at_time_zero(quad_patch_run):
    start, _, hist, seeds = quad_patch_run
    np.testing.assert_array_equal(backward_flow(start, hist, seeds, 0.0), seeds)


def test_backward_round_trip(quad_patch_run):
    start, _, hist, seeds = quad_patch_run
    back = backward_flow(start, hist, hist.tracers[-1], 0.5)
    assert np.max(np.abs(back - seeds)) < 1e-4


def test_round_trip_order(quad_map, rng):
    # Tracers skip their nearest vortex, so a tracer crossing a Voronoi edge
    # sees a jump in velocity and converges at lower order; the typical
    # tracer shows the scheme's order.
    seeds = disc_points(rng, 50, 0.8)
    errs = []
    for dt in (2.5e-2, 1.25e-2):
        ens = init_ensemble(quad_map, patch_vorticity(0.3, 0.2), DiscQuadrature(32, 32))
        start = ens.copy()
        hist = integrate(ens, 0.5, dt, tracers=seeds)
        errs.append(np.abs(backward_flow(start, hist, hist.tracers[-1], 0.5) - seeds))
    assert np.median(errs[0]) / np.median(errs[1]) >= 4.0
    assert errs[1].max() < errs[0].max()


def test_backward_history_coverage(quad_patch_run):
    start, _, hist, seeds = quad_patch_run
    with pytest.raises(ValueError):
        backward_flow(start, hist, seeds, 0.8)


def test_backward_solid_rotation_is_rotation(solid_run, rng):
    start, hist = solid_run
    x = disc_points(rng, 50, 0.8)
    back = backward_flow(start, hist, x, 1.0)
    # angular velocity 1/2
    assert np.max(np.abs(back - x * np.exp(-0.5j))) < 0.02


def test_vorticity_at_time_zero(quad_patch_run, rng):
    start, _, hist, _ = quad_patch_run
    y = disc_points(rng, 100, 0.9)
    np.testing.assert_array_equal(vorticity_at(start, hist, y, 0.0), start.sampler(y))


def test_constant_field_stays_constant(quad_patch_run, rng):
    start, _, hist, _ = quad_patch_run
    y = disc_points(rng, 30, 0.9)
    assert np.all(vorticity_at(start, hist, y, 0.5, sampler=constant_vorticity(2.0)) == 2.0)


def test_rotated_patch_classification(solid_run, rng):
    start, hist = solid_run
    y = disc_points(rng, 1000, 0.95)
    probe = patch_vorticity(0.4, 0.25)
    got = vorticity_at(start, hist, y, 1.0, sampler=probe)
    expected = probe(y * np.exp(-0.5j))
    assert np.mean(got == expected) >= 0.99


# -- measure preservation --------------------------------------------------------------


def test_zero_flow_no_drift(quad_map):
    ens = init_ensemble(quad_map, constant_vorticity(0.0), DiscQuadrature(8, 16))
    tri = PatchTriangulation.from_ensemble(ens, material_disc_mask(ens, 0.2, 0.5))
    assert measure_preservation_report(ens, ens.initial, tri)["drift"] == 0.0


def test_solid_rotation_measure_drift(solid_run):
    start, hist = solid_run
    tri = PatchTriangulation.from_ensemble(start, material_disc_mask(start, 0.0, 0.6))
    rep = measure_preservation_report(start, hist.positions[-1], tri)
    assert abs(rep["drift"]) < 1e-6
    assert not rep["degenerate"]


def test_weighted_area_is_hull_area_for_identity(identity_map):
    from scipy.spatial import ConvexHull

    ens = init_ensemble(identity_map, constant_vorticity(1.0), DiscQuadrature(16, 32))
    mask = material_disc_mask(ens, 0.3, 0.4)
    tri = PatchTriangulation.from_ensemble(ens, mask)
    area, signed = tri.weighted_area(identity_map, ens.initial)
    pts = ens.initial[mask]
    assert area == pytest.approx(ConvexHull(np.column_stack([pts.real, pts.imag])).volume, rel=1e-12)
    assert np.all(signed > 0)


def test_patch_drift_small_for_material_disc(quad_patch_run):
    start, ens, _, _ = quad_patch_run
    tri = PatchTriangulation.from_ensemble(start, material_disc_mask(start, 0.3, 0.3))
    assert abs(measure_preservation_report(start, ens.positions, tri)["drift"]) < 1e-3


def test_triangulation_needs_three_points(quad_map):
    ens = init_ensemble(quad_map, constant_vorticity(0.0), DiscQuadrature(4, 8))
    with pytest.raises(ValueError):
        PatchTriangulation.from_ensemble(ens)


def test_orbital_period_needs_full_turn():
    t = np.linspace(0, 1, 11)
    with pytest.raises(ValueError):
        orbital_period(t, np.exp(1j * t))
    assert orbital_period(t, np.exp(2j * np.pi * 1.5 * t)) == pytest.approx(2 / 3, rel=1e-2)
