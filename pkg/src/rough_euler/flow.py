"""
Vortex-particle discretisation of the disc-side flow.

Particles start at quadrature nodes ``s_k`` with frozen circulation weights
``w_k = omega0(s_k) |Psi_z(s_k)|^2 dA_k`` and move by

    dY/dt = b(Y, t) / |Psi_z(Y)|^2,

where ``b`` is the velocity coefficient generated by the particles
themselves (each particle skips its own contribution). All particles are
advanced together with classical fourth-order Runge-Kutta; the velocity is
recomputed from the stage positions at every stage.

Zero-weight particles and explicit tracers are passive: they follow the
flow without generating it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike
from scipy.spatial import Delaunay

from .biotsavart import DiscQuadrature, VelocityContext, btilde, context_from_particles
from .conformal import ConformalMap
from .errors import DomainViolationError, ParticleEscapeError

__all__ = [
    "VortexEnsemble",
    "Trajectory",
    "init_ensemble",
    "single_vortex",
    "rhs",
    "step",
    "integrate",
    "backward_flow",
    "vorticity_at",
    "measure_preservation_report",
    "PatchTriangulation",
    "material_disc_mask",
    "constant_vorticity",
    "patch_vorticity",
    "two_patch_vorticity",
]

ESCAPE_RADIUS = 1.0 - 1e-12

Sampler = Callable[[np.ndarray], np.ndarray]


def constant_vorticity(value: float = 1.0) -> Sampler:
    def sample(y):
        return np.full(np.shape(y), float(value))

    return sample


def patch_vorticity(center: complex, radius: float, value: float = 1.0) -> Sampler:
    """Indicator of the disc ``|y - center| < radius`` scaled by ``value``."""
    center = complex(center)

    def sample(y):
        return np.where(np.abs(np.asarray(y) - center) < radius, float(value), 0.0)

    return sample


def two_patch_vorticity(c1: complex, r1: float, v1: float, c2: complex, r2: float, v2: float) -> Sampler:
    p1 = patch_vorticity(c1, r1, v1)
    p2 = patch_vorticity(c2, r2, v2)

    def sample(y):
        return p1(y) + p2(y)

    return sample


@dataclass
class VortexEnsemble:
    """Particles discretising the disc-side vorticity.

    Attributes
    ----------
    cmap : ConformalMap
    positions : ndarray of complex
        Current particle positions ``Y(s_k, t)``.
    initial : ndarray of complex
        Starting positions ``s_k``.
    omega0 : ndarray
        ``omega0(s_k)``.
    areas : ndarray
        Quadrature weights ``dA_k``.
    weights : ndarray
        Circulation weights ``omega0 |Psi_z(s_k)|^2 dA_k``; read-only.
    mass : ndarray
        ``|Psi_z(s_k)|^2 dA_k``, the physical area each particle carries.
    time : float
    quadrature : DiscQuadrature or None
    sampler : callable or None
        ``omega0`` as a function on the disc, used by :func:`vorticity_at`.
    """

    cmap: ConformalMap
    positions: np.ndarray
    initial: np.ndarray
    omega0: np.ndarray
    areas: np.ndarray
    weights: np.ndarray
    mass: np.ndarray
    time: float = 0.0
    quadrature: DiscQuadrature | None = None
    sampler: Sampler | None = None

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=float)
        self.weights.setflags(write=False)

    @property
    def size(self) -> int:
        return self.positions.size

    @property
    def total_circulation(self) -> float:
        return float(np.sum(self.weights))

    def copy(self) -> "VortexEnsemble":
        return VortexEnsemble(
            cmap=self.cmap,
            positions=self.positions.copy(),
            initial=self.initial.copy(),
            omega0=self.omega0.copy(),
            areas=self.areas.copy(),
            weights=self.weights,
            mass=self.mass.copy(),
            time=self.time,
            quadrature=self.quadrature,
            sampler=self.sampler,
        )

    def context(self, positions: np.ndarray | None = None) -> VelocityContext:
        pos = self.positions if positions is None else positions
        return context_from_particles(pos, self.weights)

    def velocity(self, positions: np.ndarray, tracers: np.ndarray | None = None):
        """Disc-side velocities ``b / |Psi_z|^2`` of particles and tracers at
        the given configuration."""
        ctx = self.context(positions)
        ids = np.arange(positions.size)
        vp = btilde(ctx, positions, target_ids=ids) / np.abs(self.cmap.psi_z(positions)) ** 2
        vt = None
        if tracers is not None:
            vt = np.zeros(0, dtype=np.complex128)
            if tracers.size:
                vt = btilde(ctx, tracers) / np.abs(self.cmap.psi_z(tracers)) ** 2
        return vp, vt


def init_ensemble(cmap: ConformalMap, sampler: Sampler, quad: DiscQuadrature) -> VortexEnsemble:
    """Place one particle per quadrature node.

    Raises
    ------
    ValueError
        If the sampler returns non-finite values.
    """
    nodes = quad.nodes
    om = np.asarray(sampler(nodes), dtype=float)
    if om.shape != nodes.shape:
        om = np.broadcast_to(om, nodes.shape).astype(float)
    if not np.all(np.isfinite(om)):
        raise ValueError("vorticity sampler returned non-finite values")
    mass = np.abs(cmap.psi_z(nodes)) ** 2 * quad.weights
    return VortexEnsemble(
        cmap=cmap,
        positions=nodes.copy(),
        initial=nodes.copy(),
        omega0=om,
        areas=quad.weights,
        weights=om * mass,
        mass=mass,
        quadrature=quad,
        sampler=sampler,
    )


def single_vortex(cmap: ConformalMap, position: complex, circulation: float) -> VortexEnsemble:
    """One particle carrying circulation ``circulation``."""
    p = np.array([complex(position)])
    if abs(p[0]) >= 1:
        raise DomainViolationError("vortex must lie inside the disc")
    return VortexEnsemble(
        cmap=cmap,
        positions=p.copy(),
        initial=p.copy(),
        omega0=np.array([1.0]),
        areas=np.array([float(circulation)]),
        weights=np.array([float(circulation)]),
        mass=np.array([0.0]),
    )


def rhs(ens: VortexEnsemble, y: ArrayLike) -> np.ndarray:
    """Disc-side velocity at passive points ``y``.

    The particle nearest to each point is skipped; while the ensemble sits on
    its quadrature grid this is the particle owning the point's cell.
    """
    y = np.asarray(y, dtype=np.complex128)
    if np.any(np.abs(y) >= 1.0):
        raise DomainViolationError("rhs is evaluated inside the open disc")
    if not np.any(ens.weights):
        return np.zeros(y.shape, dtype=np.complex128)
    ctx = ens.context()
    if ens.quadrature is not None and np.array_equal(ens.positions, ens.initial):
        ctx = VelocityContext(ctx.sources, ctx.strengths, ctx.node_to_source, ctx.positions, ens.quadrature)
    return btilde(ctx, y) / np.abs(ens.cmap.psi_z(y)) ** 2


@dataclass
class Trajectory:
    """Recorded states of an integration.

    Attributes
    ----------
    times : ndarray, shape (m,)
    positions : ndarray, shape (m, n)
        Particle positions at each recorded time.
    velocities : ndarray, shape (m, n)
        Particle velocities at the recorded positions (for Hermite
        interpolation in time).
    tracers : ndarray, shape (m, n_tracers)
    dt : float
    min_gap : float
        ``min over run of 1 - |y|`` over particles and tracers.
    max_speed : float
        Largest particle speed seen at recorded times.
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    tracers: np.ndarray
    dt: float
    min_gap: float
    max_speed: float
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def positions_at(self, t: float) -> np.ndarray:
        """Particle positions at time ``t`` by cubic Hermite interpolation."""
        times = self.times
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise ValueError(f"time {t} outside recorded history [{times[0]}, {times[-1]}]")
        i = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2))
        t0, t1 = times[i], times[i + 1]
        h = t1 - t0
        s = (t - t0) / h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return (h00 * self.positions[i] + h10 * h * self.velocities[i]
                + h01 * self.positions[i + 1] + h11 * h * self.velocities[i + 1])


def _check_inside(pos: np.ndarray, t: float, what: str):
    r = np.abs(pos)
    if r.size and r.max() >= ESCAPE_RADIUS:
        k = int(np.argmax(r))
        raise ParticleEscapeError(
            f"{what} {k} reached |y| = {r[k]!r} at t = {t!r}; the run is under-resolved",
            time=t,
            index=k,
        )


def step(ens: VortexEnsemble, dt: float, tracers: np.ndarray | None = None):
    """Advance particles (and tracers) by one RK4 step in place.

    Returns the new tracer positions and the particle velocity at the start
    of the step.
    """
    if not dt > 0:
        raise ValueError("time step must be positive")
    y0 = ens.positions
    tr0 = tracers
    t = ens.time
    k1, l1 = ens.velocity(y0, tr0)
    y1 = y0 + 0.5 * dt * k1
    tr1 = None if tr0 is None else tr0 + 0.5 * dt * l1
    _check_inside(y1, t + 0.5 * dt, "particle")
    k2, l2 = ens.velocity(y1, tr1)
    y2 = y0 + 0.5 * dt * k2
    tr2 = None if tr0 is None else tr0 + 0.5 * dt * l2
    _check_inside(y2, t + 0.5 * dt, "particle")
    k3, l3 = ens.velocity(y2, tr2)
    y3 = y0 + dt * k3
    tr3 = None if tr0 is None else tr0 + dt * l3
    _check_inside(y3, t + dt, "particle")
    k4, l4 = ens.velocity(y3, tr3)
    ens.positions = y0 + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    ens.time = t + dt
    _check_inside(ens.positions, ens.time, "particle")
    new_tr = None
    if tr0 is not None:
        new_tr = tr0 + (dt / 6.0) * (l1 + 2 * l2 + 2 * l3 + l4)
        _check_inside(new_tr, ens.time, "tracer")
    return new_tr, k1


def integrate(
    ens: VortexEnsemble,
    T: float,
    dt: float,
    tracers: ArrayLike | None = None,
    record_every: int = 1,
    callback: Callable[[VortexEnsemble, np.ndarray | None], None] | None = None,
) -> Trajectory:
    """Integrate to time ``T`` with fixed step ``dt``.

    ``record_every`` thins the stored history; backward integration needs
    ``record_every = 1``. ``callback(ens, tracers)`` runs after every step.

    Raises
    ------
    ParticleEscapeError
        When a particle or tracer reaches ``|y| >= 1 - 1e-12``.
    """
    if not T >= 0 or not dt > 0:
        raise ValueError("need T >= 0 and dt > 0")
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer multiple of dt")
    tr = None if tracers is None else np.asarray(tracers, dtype=np.complex128).ravel().copy()
    if tr is not None:
        _check_inside(tr, ens.time, "tracer")
    static = not np.any(ens.weights)
    times, pos, vel, trs = [], [], [], []
    min_gap = float(np.min(1.0 - np.abs(ens.positions))) if ens.size else 1.0
    if tr is not None and tr.size:
        min_gap = min(min_gap, float(np.min(1.0 - np.abs(tr))))
    max_speed = 0.0
    for n in range(n_steps):
        start_pos = ens.positions.copy()
        start_tr = None if tr is None else tr.copy()
        start_t = ens.time
        if static:
            ens.time = start_t + dt
            k1 = np.zeros_like(start_pos)
        else:
            tr, k1 = step(ens, dt, tr)
        if n % record_every == 0:
            times.append(start_t)
            pos.append(start_pos)
            vel.append(k1)
            trs.append(start_tr if start_tr is not None else np.zeros(0, dtype=np.complex128))
        if k1.size:
            max_speed = max(max_speed, float(np.max(np.abs(k1))))
        min_gap = min(min_gap, float(np.min(1.0 - np.abs(ens.positions))) if ens.size else 1.0)
        if tr is not None and tr.size:
            min_gap = min(min_gap, float(np.min(1.0 - np.abs(tr))))
        if callback is not None:
            callback(ens, tr)
    # Final state with its velocity closes the history.
    if static:
        kf = np.zeros_like(ens.positions)
    else:
        kf, _ = ens.velocity(ens.positions)
    if n_steps % record_every == 0 or not times or times[-1] < ens.time:
        times.append(ens.time)
        pos.append(ens.positions.copy())
        vel.append(kf)
        trs.append(tr.copy() if tr is not None else np.zeros(0, dtype=np.complex128))
    if kf.size:
        max_speed = max(max_speed, float(np.max(np.abs(kf))))
    return Trajectory(
        times=np.array(times),
        positions=np.array(pos),
        velocities=np.array(vel),
        tracers=np.array(trs),
        dt=dt * record_every,
        min_gap=min_gap,
        max_speed=max_speed,
        weights=np.asarray(ens.weights),
    )


def _passive_velocity(ens_like: VortexEnsemble, weights, positions, y):
    if not np.any(weights):
        return np.zeros_like(y)
    ctx = context_from_particles(positions, weights)
    return btilde(ctx, y) / np.abs(ens_like.cmap.psi_z(y)) ** 2


def backward_flow(ens: VortexEnsemble, history: Trajectory, x: ArrayLike, t: float, dt: float | None = None) -> np.ndarray:
    """Backward characteristic: the point at time 0 that the flow carries to
    ``x`` at time ``t``.

    Integrates ``dX/dtau = -v(X, t - tau)`` with RK4, reconstructing the
    particle configuration at intermediate times by cubic Hermite
    interpolation of the recorded history.

    Raises
    ------
    ValueError
        If the history does not cover ``[0, t]``.
    """
    x = np.asarray(x, dtype=np.complex128)
    if t < 0:
        raise ValueError("time must be nonnegative")
    if t == 0:
        return x.copy()
    if history.times[0] > 1e-12 or history.times[-1] < t - 1e-12:
        raise ValueError("history does not cover the requested time interval")
    h = history.dt if dt is None else dt
    n = max(1, int(round(t / h)))
    h = t / n
    y = x.ravel().copy()
    w = history.weights if history.weights.size else ens.weights
    s = t
    for _ in range(n):
        p0 = history.positions_at(s)
        pm = history.positions_at(max(s - 0.5 * h, 0.0))
        p1 = history.positions_at(max(s - h, 0.0))
        k1 = -_passive_velocity(ens, w, p0, y)
        k2 = -_passive_velocity(ens, w, pm, y + 0.5 * h * k1)
        k3 = -_passive_velocity(ens, w, pm, y + 0.5 * h * k2)
        k4 = -_passive_velocity(ens, w, p1, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        s -= h
        _check_inside(y, s, "backward point")
    return y.reshape(x.shape)


def vorticity_at(
    ens: VortexEnsemble,
    history: Trajectory,
    y: ArrayLike,
    t: float,
    sampler: Sampler | None = None,
) -> np.ndarray:
    """Transported scalar ``omega0(X^{-1}(y, t))`` at disc points ``y``.

    ``sampler`` defaults to the ensemble's initial vorticity; any initial
    scalar field may be passed instead.
    """
    f = sampler or ens.sampler
    if f is None:
        raise ValueError("no initial field available")
    y0 = backward_flow(ens, history, y, t)
    return np.asarray(f(y0), dtype=float)


@dataclass
class PatchTriangulation:
    """Delaunay triangulation of a tracked particle subset at ``t = 0``."""

    indices: np.ndarray
    simplices: np.ndarray

    @classmethod
    def from_ensemble(cls, ens: VortexEnsemble, mask: np.ndarray | None = None) -> "PatchTriangulation":
        sel = np.flatnonzero(ens.weights != 0) if mask is None else np.flatnonzero(mask)
        if sel.size < 3:
            raise ValueError("need at least three particles to triangulate")
        pts = ens.initial[sel]
        tri = Delaunay(np.column_stack([pts.real, pts.imag]))
        simp = tri.simplices
        # Drop slivers on the hull, which are unstable under deformation.
        a = _signed_areas(pts, simp)
        keep = np.abs(a) > 1e-10 * np.max(np.abs(a))
        return cls(indices=sel, simplices=simp[keep])

    def weighted_area(self, cmap: ConformalMap, positions: np.ndarray) -> tuple[float, np.ndarray]:
        """Area in the measure ``|Psi_z|^2 dy`` using the edge-midpoint rule
        (exact for quadratic densities on each triangle)."""
        p = positions[self.indices]
        a, b, c = p[self.simplices[:, 0]], p[self.simplices[:, 1]], p[self.simplices[:, 2]]
        signed = 0.5 * (np.conj(b - a) * (c - a)).imag
        dens = (np.abs(cmap.psi_z(0.5 * (a + b))) ** 2 + np.abs(cmap.psi_z(0.5 * (b + c))) ** 2
                + np.abs(cmap.psi_z(0.5 * (c + a))) ** 2) / 3.0
        return float(np.sum(signed * dens)), signed


def material_disc_mask(ens: VortexEnsemble, center: complex, radius: float) -> np.ndarray:
    """Particles starting in the disc ``|y - center| < radius``.

    Choosing ``radius`` larger than a vortex patch gives a tracked region
    whose boundary moves in the smooth far field of the point vortices
    rather than along the vorticity jump.
    """
    return np.abs(ens.initial - complex(center)) < radius


def _signed_areas(pts, simp):
    a, b, c = pts[simp[:, 0]], pts[simp[:, 1]], pts[simp[:, 2]]
    return 0.5 * (np.conj(b - a) * (c - a)).imag


def measure_preservation_report(
    ens: VortexEnsemble,
    positions_t: np.ndarray,
    patch: PatchTriangulation | None = None,
) -> dict:
    """Relative drift of the weighted area of a triangulated patch.

    Compares the patch at the ensemble's initial positions with the same
    triangles at ``positions_t``. Triangles whose orientation flipped are
    counted and flagged.
    """
    patch = PatchTriangulation.from_ensemble(ens) if patch is None else patch
    a0, s0 = patch.weighted_area(ens.cmap, ens.initial)
    a1, s1 = patch.weighted_area(ens.cmap, positions_t)
    inverted = int(np.count_nonzero(np.sign(s0) != np.sign(s1)))
    return {
        "area_initial": a0,
        "area_final": a1,
        "drift": (a1 - a0) / a0,
        "triangles": int(patch.simplices.shape[0]),
        "inverted_triangles": inverted,
        "degenerate": inverted > 0,
    }


def orbital_period(times: np.ndarray, positions: np.ndarray) -> float:
    """Time for one full revolution about the origin, by linear interpolation
    of the unwrapped angle."""
    ang = np.unwrap(np.angle(positions))
    turn = np.abs(ang - ang[0])
    idx = np.flatnonzero(turn >= 2 * math.pi)
    if idx.size == 0:
        raise ValueError("trajectory does not complete a revolution")
    i = idx[0]
    f = (2 * math.pi - turn[i - 1]) / (turn[i] - turn[i - 1])
    return float(times[i - 1] + f * (times[i] - times[i - 1]))
