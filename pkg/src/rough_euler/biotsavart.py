"""
Green's function, Biot-Savart kernel and the disc-side velocity coefficient.

For a map ``Psi`` with inverse ``Phi``, the Green's function of the domain is

    G(z1, z2) = (1/2pi) (ln|w1 - w2| - ln|1 - conj(w2) w1|),   w = Phi(z),

and the velocity at ``x`` is ``u(x) = b(Phi(x)) conj(Phi_z(x))`` with

    b(y) = (i/2pi) int_D [1/(conj(y) - conj(s)) - s/(conj(y) s - 1)]
                          omega(s) |Psi_z(s)|^2 ds

where ``omega`` is the vorticity pulled back to the disc. The second term is
the image of the first in the unit circle, which makes ``b`` tangent to the
circle:

    conj(y) b(y) = (i/2pi) int_D (1 - |s|^2)/|y - s|^2 omega |Psi_z|^2 ds,  |y| = 1.

The integral over the disc is a direct sum over quadrature nodes or vortex
particles; the source nearest to the target (the cell containing it) is left
out of the direct term (its image term is kept), which removes the integrable
singularity at ``s = y``. For a single particle this leaves exactly the image
vortex dynamics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy.spatial import cKDTree

from . import _kernels
from .conformal import ConformalMap, invert_phi
from .errors import DomainViolationError

__all__ = [
    "DiscQuadrature",
    "VelocityContext",
    "context_from_samples",
    "context_from_particles",
    "greens",
    "kernel",
    "btilde",
    "boundary_formula",
    "stream_function",
    "physical_velocity",
    "measure_btil_properties",
    "phiabest_integral",
    "phiabest_check",
    "conjugate_point_margin",
    "phi",
]

INV_2PI = 1.0 / (2.0 * math.pi)
# Points this close to the circle count as boundary points and own no cell.
INTERIOR_RADIUS = 1.0 - 1e-12


def phi(x: ArrayLike) -> np.ndarray:
    """Osgood modulus ``x max(-ln x, 1)`` with ``phi(0) = 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("phi is defined for x >= 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = x * np.maximum(-np.log(x), 1.0)
    return np.where(x == 0.0, 0.0, out)


@dataclass(frozen=True)
class DiscQuadrature:
    """Tensor polar midpoint quadrature on the unit disc.

    Node ``(i, j)`` sits at ``r_i = (i + 1/2)/n_r``, ``theta_j = 2 pi j/n_theta``
    and carries weight ``r_i dr dtheta``; the weights sum to ``pi`` exactly
    in exact arithmetic. Flat node index is ``i * n_theta + j``.
    """

    n_r: int
    n_theta: int

    def __post_init__(self):
        if self.n_r < 1 or self.n_theta < 1:
            raise ValueError("quadrature sizes must be positive")

    @property
    def dr(self) -> float:
        return 1.0 / self.n_r

    @property
    def dtheta(self) -> float:
        return 2.0 * math.pi / self.n_theta

    @property
    def radii(self) -> np.ndarray:
        return (np.arange(self.n_r) + 0.5) / self.n_r

    @property
    def angles(self) -> np.ndarray:
        return self.dtheta * np.arange(self.n_theta)

    @property
    def nodes(self) -> np.ndarray:
        return (self.radii[:, None] * np.exp(1j * self.angles)[None, :]).ravel()

    @property
    def weights(self) -> np.ndarray:
        w = self.radii * self.dr * self.dtheta
        return np.repeat(w, self.n_theta)

    @property
    def size(self) -> int:
        return self.n_r * self.n_theta

    def cell_index(self, y: ArrayLike) -> np.ndarray:
        """Flat index of the cell containing each point, ``-1`` for points on
        or outside the unit circle (to within ``1e-12``)."""
        y = np.asarray(y, dtype=np.complex128)
        r = np.abs(y)
        i = np.floor(r * self.n_r).astype(np.int64)
        j = np.mod(np.rint(np.angle(y) / self.dtheta).astype(np.int64), self.n_theta)
        idx = i * self.n_theta + j
        return np.where(r < INTERIOR_RADIUS, idx, -1)


@dataclass(frozen=True)
class VelocityContext:
    """Sources of the velocity coefficient and the rule for self-exclusion.

    Attributes
    ----------
    sources : ndarray of complex
        Positions of sources with nonzero strength.
    strengths : ndarray of float
        ``q_k = omega_k |Psi_z(s_k)|^2 dA_k`` for each source.
    node_to_source : ndarray of int
        For every node or particle, its source index or ``-1``.
    positions : ndarray of complex
        Current positions of all nodes or particles.
    quadrature : DiscQuadrature or None
        Set when ``positions`` are the undeformed quadrature nodes, enabling
        the exact polar cell lookup.
    """

    sources: np.ndarray
    strengths: np.ndarray
    node_to_source: np.ndarray
    positions: np.ndarray
    quadrature: DiscQuadrature | None = None

    def skip_indices(self, y: np.ndarray, target_ids: ArrayLike | None = None) -> np.ndarray:
        """Source index excluded for each target (``-1`` for none)."""
        if target_ids is not None:
            ids = np.asarray(target_ids, dtype=np.int64)
            return np.where(ids >= 0, self.node_to_source[np.maximum(ids, 0)], -1)
        if self.sources.size == 0:
            return np.full(y.shape, -1, dtype=np.int64)
        if self.quadrature is not None:
            cell = self.quadrature.cell_index(y)
            return np.where(cell >= 0, self.node_to_source[np.maximum(cell, 0)], -1)
        # Deformed particle cloud: the nearest particle owns the target.
        inside = np.abs(y) < INTERIOR_RADIUS
        tree = cKDTree(np.column_stack([self.positions.real, self.positions.imag]))
        _, near = tree.query(np.column_stack([y.real, y.imag]))
        return np.where(inside, self.node_to_source[near], -1)

    @property
    def total_strength(self) -> float:
        return float(np.sum(self.strengths))

    @property
    def max_abs_vorticity_scale(self) -> float:
        return float(np.max(np.abs(self.strengths))) if self.strengths.size else 0.0


def _compress(positions, q, quad=None) -> VelocityContext:
    positions = np.ascontiguousarray(positions, dtype=np.complex128)
    q = np.asarray(q, dtype=float)
    if q.shape != positions.shape:
        raise ValueError("strengths and positions must have the same shape")
    if not np.all(np.isfinite(q)):
        raise ValueError("source strengths must be finite")
    live = np.flatnonzero(q != 0.0)
    n2s = np.full(positions.size, -1, dtype=np.int64)
    n2s[live] = np.arange(live.size)
    return VelocityContext(
        sources=np.ascontiguousarray(positions[live]),
        strengths=np.ascontiguousarray(q[live]),
        node_to_source=n2s,
        positions=positions,
        quadrature=quad,
    )


def context_from_samples(quad: DiscQuadrature, cmap: ConformalMap, omega: ArrayLike) -> VelocityContext:
    """Context for vorticity samples ``omega`` at the quadrature nodes."""
    omega = np.broadcast_to(np.asarray(omega, dtype=float), (quad.size,))
    nodes = quad.nodes
    q = omega * np.abs(cmap.psi_z(nodes)) ** 2 * quad.weights
    return _compress(nodes, q, quad)


def context_from_particles(positions: ArrayLike, weights: ArrayLike) -> VelocityContext:
    """Context for particles carrying circulation weights."""
    return _compress(np.asarray(positions, dtype=np.complex128).ravel(), np.asarray(weights, dtype=float).ravel())


def btilde(ctx: VelocityContext, y: ArrayLike, target_ids: ArrayLike | None = None) -> np.ndarray:
    """Velocity coefficient at ``y`` in the closed disc.

    Parameters
    ----------
    ctx : VelocityContext
    y : array_like of complex
        Targets with ``|y| <= 1``.
    target_ids : array_like of int, optional
        Particle index of each target, whose own direct term is skipped. If
        omitted the source owning the target's cell is skipped.
    """
    y = np.asarray(y, dtype=np.complex128)
    if np.any(np.abs(y) > 1.0 + 1e-12):
        raise DomainViolationError("btilde targets must lie in the closed unit disc")
    flat = np.ascontiguousarray(y.ravel())
    if ctx.sources.size == 0:
        return np.zeros(y.shape, dtype=np.complex128)
    skip = ctx.skip_indices(flat, None if target_ids is None else np.asarray(target_ids).ravel())
    out = _kernels.btilde_direct(flat, ctx.sources, ctx.strengths, np.ascontiguousarray(skip, dtype=np.int64))
    return (1j * INV_2PI) * out.reshape(y.shape)


def boundary_formula(ctx: VelocityContext, y: ArrayLike, tol: float = 1e-12) -> np.ndarray:
    """``b(y)`` on the unit circle from the positive-density representation

    ``b(y) = y (i/2pi) sum_k q_k (1 - |s_k|^2) / |y - s_k|^2``.
    """
    y = np.asarray(y, dtype=np.complex128)
    if np.any(np.abs(np.abs(y) - 1.0) > tol):
        raise DomainViolationError("boundary formula needs |y| = 1")
    flat = np.ascontiguousarray(y.ravel())
    if ctx.sources.size == 0:
        return np.zeros(y.shape, dtype=np.complex128)
    # Points on the circle own no cell, so nothing is excluded.
    skip = np.full(flat.shape, -1, dtype=np.int64)
    dens = _kernels.boundary_density(flat, ctx.sources, ctx.strengths, skip)
    return (flat * (1j * INV_2PI) * dens).reshape(y.shape)


def stream_function(ctx: VelocityContext, y: ArrayLike) -> np.ndarray:
    """Disc-side stream function ``sum_k q_k G_D(y, s_k)`` (Green's potential)."""
    y = np.asarray(y, dtype=np.complex128)
    flat = np.ascontiguousarray(y.ravel())
    if ctx.sources.size == 0:
        return np.zeros(y.shape)
    skip = ctx.skip_indices(flat)
    out = _kernels.stream_direct(flat, ctx.sources, ctx.strengths, np.ascontiguousarray(skip, dtype=np.int64))
    return INV_2PI * out.reshape(y.shape)


def physical_velocity(ctx: VelocityContext, cmap: ConformalMap, x: ArrayLike) -> np.ndarray:
    """``u(x) = b(Phi(x)) conj(Phi_z(x))`` at physical points ``x``."""
    y = invert_phi(cmap, x)
    return btilde(ctx, y) * np.conj(1.0 / cmap.psi_z(y))


def _check_distinct(z1, z2):
    if np.any(z1 == z2):
        raise DomainViolationError("Green's function and kernel need distinct points")


def greens(cmap: ConformalMap, z1: ArrayLike, z2: ArrayLike) -> np.ndarray:
    """Green's function of the domain, zero on its boundary.

    With ``w = Phi(z)`` this is ``(1/2pi)(ln|w1 - w2| - ln|1 - conj(w2) w1|)``,
    which needs no separate treatment when ``Phi(z2) = 0``.
    """
    z1, z2 = np.broadcast_arrays(np.asarray(z1, dtype=np.complex128), np.asarray(z2, dtype=np.complex128))
    _check_distinct(z1, z2)
    w1 = invert_phi(cmap, z1)
    w2 = invert_phi(cmap, z2)
    return INV_2PI * (np.log(np.abs(w1 - w2)) - np.log(np.abs(1.0 - np.conj(w2) * w1)))


def kernel(cmap: ConformalMap, z1: ArrayLike, z2: ArrayLike) -> np.ndarray:
    """Biot-Savart kernel ``K(z1, z2) = grad-perp_{z1} G(z1, z2)`` as a complex
    number ``K_x + i K_y``."""
    z1, z2 = np.broadcast_arrays(np.asarray(z1, dtype=np.complex128), np.asarray(z2, dtype=np.complex128))
    _check_distinct(z1, z2)
    w1 = invert_phi(cmap, z1)
    w2 = invert_phi(cmap, z2)
    phi_z = 1.0 / cmap.psi_z(w1)
    w1b = np.conj(w1)
    bracket = 1.0 / (w1b - np.conj(w2)) - w2 / (w1b * w2 - 1.0)
    return 1j * INV_2PI * np.conj(phi_z) * bracket


def conjugate_point_margin(z: ArrayLike, s: ArrayLike) -> np.ndarray:
    """``|z - 1/conj(s)| - |z - s|``, nonnegative for ``z, s`` in the disc."""
    z = np.asarray(z, dtype=np.complex128)
    s = np.asarray(s, dtype=np.complex128)
    return np.abs(z - 1.0 / np.conj(s)) - np.abs(z - s)


# ---------------------------------------------------------------------------
# measured properties


def _probe_points(n_angle: int = 64) -> np.ndarray:
    radii = np.concatenate([np.linspace(0.0, 0.9, 10), 1.0 - 2.0 ** -np.arange(4, 9), [1.0]])
    ang = 2.0 * math.pi * (np.arange(n_angle) + 0.5) / n_angle
    pts = (radii[:, None] * np.exp(1j * ang)[None, :]).ravel()
    return np.unique(pts)


def measure_btil_properties(
    ctx: VelocityContext,
    rng: np.random.Generator | None = None,
    n_base: int = 200,
    min_separation: float = 1e-2,
    max_separation: float = 0.5,
    n_boundary: int = 256,
) -> dict:
    """Sampled versions of the four properties of the velocity coefficient.

    Returns
    -------
    dict with

    ``sup_abs``
        ``max |b|`` over a polar probe set reaching the unit circle.
    ``phi_lipschitz``
        ``max |b(z1) - b(z2)| / phi(|z1 - z2|)`` over pairs with separations
        log-spaced in ``[min_separation, max_separation]``. The floor is kept
        fixed so the ratio is comparable across quadrature resolutions.
    ``boundary_normal``
        ``max |Re(b(y) conj(y))|`` on ``n_boundary`` points of the circle.
    ``radial_decay``
        ``max |Re(b(z) conj(z)/|z|)| / phi(1 - |z|)`` over probes with
        ``1e-3 < |z| < 1``.
    """
    rng = np.random.default_rng(7) if rng is None else rng
    probes = _probe_points()
    b = btilde(ctx, probes)
    sup_abs = float(np.max(np.abs(b)))

    base = np.sqrt(rng.uniform(0, 1, n_base)) * np.exp(1j * rng.uniform(0, 2 * math.pi, n_base))
    seps = np.geomspace(min_separation, max_separation, 8)
    z1 = np.repeat(base, seps.size)
    d = np.tile(seps, n_base)
    z2 = z1 + d * np.exp(1j * rng.uniform(0, 2 * math.pi, z1.size))
    # Pull partners that left the disc back onto the segment inside it.
    out = np.abs(z2) > 1.0
    z2[out] = z2[out] / np.abs(z2[out])
    keep = z1 != z2
    z1, z2 = z1[keep], z2[keep]
    bz = btilde(ctx, np.concatenate([z1, z2]))
    b1, b2 = bz[: z1.size], bz[z1.size :]
    lip = float(np.max(np.abs(b1 - b2) / phi(np.abs(z1 - z2))))

    yb = np.exp(2j * math.pi * (np.arange(n_boundary) + 0.5) / n_boundary)
    normal = float(np.max(np.abs((btilde(ctx, yb) * np.conj(yb)).real)))

    sel = (np.abs(probes) > 1e-3) & (np.abs(probes) < 1.0)
    zp = probes[sel]
    rad = (b[sel] * np.conj(zp) / np.abs(zp)).real
    decay = float(np.max(np.abs(rad) / phi(1.0 - np.abs(zp))))
    return {
        "sup_abs": sup_abs,
        "phi_lipschitz": lip,
        "boundary_normal": normal,
        "radial_decay": decay,
        "strength_scale": float(np.sum(np.abs(ctx.strengths))),
        "min_separation": min_separation,
        "n_probe": int(probes.size),
    }


def phiabest_integral(a: complex, b: complex, n: int = 10**6) -> float:
    """``int_D |a - b| / (|s - a||s - b|) ds`` by split polar quadrature.

    The integrand is split with the partition of unity
    ``|s-b|/(|s-a|+|s-b|) + |s-a|/(|s-a|+|s-b|)``; each part is integrated in
    polar coordinates centred at its own singular point, where the Jacobian
    ``rho`` cancels the ``1/rho`` singularity. ``n`` is the total number of
    quadrature points.
    """
    a, b = complex(a), complex(b)
    if a == b:
        raise ValueError("phiabest integral needs a != b")
    if abs(a) > 1 or abs(b) > 1:
        raise DomainViolationError("points must lie in the closed disc")
    m = max(int(math.sqrt(n / 4)), 8)
    n_ang, n_rad = 2 * m, m
    dist = abs(a - b)
    total = 0.0
    for c, o in ((a, b), (b, a)):
        ang = 2 * math.pi * (np.arange(n_ang) + 0.5) / n_ang
        e = np.exp(1j * ang)
        # Distance from c to the unit circle along direction e.
        p = (np.conj(c) * e).real
        rho_max = -p + np.sqrt(np.maximum(p * p + 1.0 - abs(c) ** 2, 0.0))
        t = (np.arange(n_rad) + 0.5) / n_rad
        rho = rho_max[:, None] * t[None, :]
        s = c + rho * e[:, None]
        so = np.abs(s - o)
        # |a-b| / (|s-c| |s-o|) * |s-o|/(|s-c|+|s-o|) * rho  with |s-c| = rho
        integrand = dist / (rho + so)
        total += float(np.sum(integrand * (rho_max[:, None] / n_rad)) * (2 * math.pi / n_ang))
    return total


def phiabest_check(pairs: ArrayLike, n: int = 10**6) -> dict:
    """Max over pairs of ``phiabest_integral(a, b) / phi(|a - b|)``."""
    pairs = np.asarray(pairs, dtype=np.complex128).reshape(-1, 2)
    ratios = []
    for a, b in pairs:
        ratios.append(phiabest_integral(a, b, n) / float(phi(abs(a - b))))
    return {"max_ratio": float(max(ratios)), "ratios": [float(r) for r in ratios]}
