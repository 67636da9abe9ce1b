"""
Angle-reparametrising diffeomorphism of the disc built from a Riemann map.

With a cutoff ``g`` rising from 0 on ``[0, 1/4]`` to 1 on ``[1/2, 1]`` the
density

    G(z) = g(|z|) |Psi_z(z)|^2 + 1 - g(|z|)

is averaged over circles, ``c(r) = (1/2pi) int G(r e^{is}) ds``, and

    L(r, theta) = (1/c(r)) int_0^theta G(r e^{is}) ds,
    F(r e^{i theta}) = r e^{i L(r, theta)}.

F keeps radii fixed and redistributes angle in proportion to ``G``, so
``det DF = L_theta = G / c``. On each circle ``G`` is a trigonometric
polynomial, so ``c`` and ``L`` are evaluated from its Fourier coefficients
without quadrature drift: writing ``A(theta) = int_0^theta (G - c)``,

    L = theta + A / c,   L_r = A_r / c - c' A / c^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from . import spectral
from .conformal import ConformalMap, circle_values, trace_size
from .errors import ConstructionError, DomainViolationError, NonConvergenceError

__all__ = [
    "Cutoff",
    "ChangeOfVariable",
    "build_changevar",
    "eval_G",
    "eval_c",
    "eval_L",
    "eval_F",
    "eval_F_inverse",
    "jacobian_det",
    "jacobian_det_fd",
    "derivative_fields",
    "bilipschitz_constants",
    "sample_pairs",
    "verify_derivative_estimates",
    "default_table_radii",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Cutoff:
    """Quintic smoothstep from 0 at ``lo`` to 1 at ``hi``.

    ``g(x) = s^3 (6 s^2 - 15 s + 10)`` with ``s = (x - lo)/(hi - lo)``; C^2
    with vanishing first and second derivatives at both ends.
    """

    lo: float = 0.25
    hi: float = 0.5

    def _s(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def g(self, x):
        s = self._s(x)
        return s**3 * (6.0 * s * s - 15.0 * s + 10.0)

    def dg(self, x):
        s = self._s(x)
        return 30.0 * s * s * (1.0 - s) ** 2 / (self.hi - self.lo)

    def d2g(self, x):
        s = self._s(x)
        return 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) / (self.hi - self.lo) ** 2


def default_table_radii(n_uniform: int = 64, m_max: int = 12) -> np.ndarray:
    """Midpoint radii on ``(0, 1)`` plus ``1 - 2^{-m}`` toward the boundary."""
    mid = (np.arange(n_uniform) + 0.5) / n_uniform
    geo = 1.0 - 2.0 ** -np.arange(1, m_max + 1)
    return np.unique(np.concatenate([mid, geo]))


@dataclass(frozen=True)
class _CircleData:
    """Per-point spectral data of ``G`` and ``G_r`` on the point's circle."""

    r: np.ndarray
    c: np.ndarray
    dc: np.ndarray
    ghat: np.ndarray  # (M, N) oscillatory coefficients, zero mode removed
    grhat: np.ndarray
    k: np.ndarray


class ChangeOfVariable:
    """Tabulated change of variable for a map, with exact evaluators.

    Parameters
    ----------
    cmap : ConformalMap
    radii : array_like, optional
        Table radii in ``(0, 1)``; see :func:`default_table_radii`.
    n : int, optional
        Angular sample count; at least ``max(64, 2K + 2)`` rounded up to a
        power of two, which resolves ``G`` on every circle exactly.
    cutoff : Cutoff
    check : bool
        Enforce the bounds ``min(1, c0^2) <= G, c <= c1^2 + 1`` on the tables.

    Attributes
    ----------
    c0, c1 : float
        ``min`` and ``max`` of ``|Psi_z|`` on the unit circle, which bound
        ``|Psi_z|`` on the whole disc for a univalent polynomial map.
    G, L, L_r, L_theta : ndarray, shape (len(radii), n)
    c, dc : ndarray, shape (len(radii),)
    """

    def __init__(
        self,
        cmap: ConformalMap,
        radii: ArrayLike | None = None,
        n: int | None = None,
        cutoff: Cutoff | None = None,
        check: bool = True,
    ):
        self.cmap = cmap
        self.cutoff = cutoff or Cutoff()
        need = max(64, trace_size(cmap, factor=2))
        self.n = need if n is None else max(int(n), need)
        if self.n & (self.n - 1):
            raise ValueError("angular size must be a power of two")
        rs = default_table_radii() if radii is None else np.asarray(radii, dtype=float)
        if np.any(rs <= 0) or np.any(rs >= 1):
            raise DomainViolationError("table radii must lie in (0, 1)")
        self.radii = np.sort(rs)
        self.theta = spectral.nodes(self.n)
        bd = np.abs(circle_values(cmap.dcoeffs, 1.0, max(self.n, 4096)))
        self.c0 = float(bd.min())
        self.c1 = float(bd.max())
        self.lower_bound = min(1.0, self.c0**2)
        self.upper_bound = self.c1**2 + 1.0

        data = self._circle_data(self.radii)
        self.c = data.c.copy()
        self.dc = data.dc.copy()
        self.G, a, a_r = self._node_tables(data)
        c = self.c[:, None]
        self.L = self.theta[None, :] + a / c
        self.L_r = a_r / c - self.dc[:, None] * a / c**2
        self.L_theta = self.G / c
        for arr in (self.radii, self.theta, self.c, self.dc, self.G, self.L, self.L_r, self.L_theta):
            arr.setflags(write=False)
        if check:
            self.check_bounds()

    # -- core evaluators ---------------------------------------------------

    def _density(self, z: np.ndarray):
        """``G`` and ``G_r`` at points ``z``."""
        r = np.abs(z)
        g = self.cutoff.g(r)
        dg = self.cutoff.dg(r)
        pz = self.cmap.psi_z(z)
        mod2 = pz.real**2 + pz.imag**2
        G = g * mod2 + 1.0 - g
        # d/dr |Psi_z|^2 = 2 Re(conj(Psi_z) Psi_zz e^{i theta})
        with np.errstate(invalid="ignore", divide="ignore"):
            e = np.where(r > 0, z / np.where(r > 0, r, 1.0), 1.0)
        pzz = self.cmap.psi_zz(z)
        dmod2 = 2.0 * (np.conj(pz) * pzz * e).real
        Gr = dg * (mod2 - 1.0) + g * dmod2
        return G, Gr

    def _density_on_circles(self, r: np.ndarray):
        """``G`` and ``G_r`` at the ``n`` nodes of each circle ``|z| = r_i``.

        ``Psi_z`` and ``Psi_zz`` come from one FFT of the rescaled
        coefficients per circle rather than Horner at every node.
        """
        n = self.n
        lr = np.log(r)[:, None]
        d1 = self.cmap.dcoeffs
        d2 = self.cmap.ddcoeffs
        buf = np.zeros((r.size, n), dtype=np.complex128)
        buf[:, : d1.size] = d1[None, :] * np.exp(lr * np.arange(d1.size)[None, :])
        pz = np.fft.ifft(buf, axis=1) * n
        buf[:] = 0.0
        # Psi_zz e^{i theta} = sum_k d2_k r^k e^{i(k+1) theta}
        buf[:, 1 : d2.size + 1] = d2[None, :] * np.exp(lr * np.arange(d2.size)[None, :])
        pzz_e = np.fft.ifft(buf, axis=1) * n
        g = self.cutoff.g(r)[:, None]
        dg = self.cutoff.dg(r)[:, None]
        mod2 = pz.real**2 + pz.imag**2
        G = g * mod2 + 1.0 - g
        Gr = dg * (mod2 - 1.0) + g * 2.0 * (np.conj(pz) * pzz_e).real
        return G, Gr

    def _density_theta(self, z: np.ndarray) -> np.ndarray:
        """``G_theta`` at points ``z``: ``g * 2 Re(conj(Psi_z) Psi_zz i z)``."""
        g = self.cutoff.g(np.abs(z))
        pz = self.cmap.psi_z(z)
        return g * 2.0 * (np.conj(pz) * self.cmap.psi_zz(z) * 1j * z).real

    def _circle_data(self, r: np.ndarray) -> _CircleData:
        r = np.asarray(r, dtype=float).ravel()
        n = self.n
        k = spectral.mode_numbers(n)
        c = np.ones(r.size)
        dc = np.zeros(r.size)
        ghat = np.zeros((r.size, n), dtype=np.complex128)
        grhat = np.zeros((r.size, n), dtype=np.complex128)
        # G is identically 1 on |z| <= lo; keep those rows exact.
        active = np.flatnonzero(r > self.cutoff.lo)
        for start in range(0, active.size, 1024):
            idx = active[start : start + 1024]
            G, Gr = self._density_on_circles(r[idx])
            gh = np.fft.fft(G, axis=1) / n
            grh = np.fft.fft(Gr, axis=1) / n
            c[idx] = gh[:, 0].real
            dc[idx] = grh[:, 0].real
            gh[:, 0] = 0.0
            grh[:, 0] = 0.0
            # G is resolved, so the Nyquist slot holds only roundoff.
            gh[:, n // 2] = 0.0
            grh[:, n // 2] = 0.0
            ghat[idx] = gh
            grhat[idx] = grh
        return _CircleData(r=r, c=c, dc=dc, ghat=ghat, grhat=grhat, k=k)

    def _node_tables(self, data: _CircleData):
        """``G``, ``A`` and ``A_r`` at the grid nodes of every circle.

        At the nodes the antiderivative is one inverse FFT of the
        coefficients divided by ``i k``, shifted so that ``A(0) = 0``.
        """
        n = self.n
        k = data.k
        wmul = np.zeros(n, dtype=np.complex128)
        nz = k != 0
        wmul[nz] = 1.0 / (1j * k[nz])
        wmul[n // 2] = 0.0
        shape = (data.r.size, n)
        G = np.ones(shape)
        a = np.zeros(shape)
        a_r = np.zeros(shape)
        active = np.flatnonzero(data.r > self.cutoff.lo)
        for start in range(0, active.size, 256):
            idx = active[start : start + 256]
            G[idx] = self._density_on_circles(data.r[idx])[0]
            for hat, out in ((data.ghat, a), (data.grhat, a_r)):
                w = hat[idx] * wmul[None, :]
                vals = np.fft.ifft(w, axis=1) * n
                out[idx] = (vals - vals[:, :1]).real
        return G, a, a_r

    def _antiderivatives(self, data: _CircleData, rows: np.ndarray, theta: np.ndarray):
        """``A = int_0^theta (G - c)`` and ``A_r`` for point ``i`` on circle
        ``rows[i]``."""
        k = data.k
        kk = np.where(k == 0, 1.0, k)
        wmul = np.zeros(k.size, dtype=np.complex128)
        nz = k != 0
        wmul[nz] = 1.0 / (1j * k[nz])
        wmul[self.n // 2] = 0.0
        a = np.zeros(theta.size)
        a_r = np.zeros(theta.size)
        for start in range(0, theta.size, 1024):
            sl = slice(start, start + 1024)
            rw = rows[sl]
            live = data.r[rw] > self.cutoff.lo
            if not np.any(live):
                continue
            th = theta[sl][live]
            ph = (np.exp(1j * np.multiply.outer(th, kk)) - 1.0) * wmul[None, :]
            a_blk = np.zeros(live.size)
            ar_blk = np.zeros(live.size)
            a_blk[live] = np.sum(data.ghat[rw[live]] * ph, axis=1).real
            ar_blk[live] = np.sum(data.grhat[rw[live]] * ph, axis=1).real
            a[sl] = a_blk
            a_r[sl] = ar_blk
        return a, a_r

    def _polar(self, z: ArrayLike, allow_zero: bool = True):
        z = np.asarray(z, dtype=np.complex128)
        r = np.abs(z)
        if np.any(r >= 1.0):
            raise DomainViolationError("change of variable is defined for |z| < 1")
        if not allow_zero and np.any(r == 0.0):
            raise DomainViolationError("point must be nonzero")
        theta = np.mod(np.angle(z), TWO_PI)
        return z, r, theta

    def _chunk(self) -> int:
        # Bound the per-chunk (points x n) spectral workspace to ~32 MB.
        return max(16, (1 << 21) // self.n)

    def evaluate(self, z: ArrayLike) -> dict:
        """All first-order quantities at points ``z``.

        Returns a dict of arrays shaped like ``z``: ``r, theta, G, G_r, c, dc,
        A, A_r, L, L_r, L_theta, F, F_r, F_theta``.
        """
        z, r, theta = self._polar(z)
        shape = z.shape
        z, r, theta = z.ravel(), r.ravel(), theta.ravel()
        step = self._chunk()
        parts = [
            self._evaluate_flat(z[i : i + step], r[i : i + step], theta[i : i + step])
            for i in range(0, max(z.size, 1), step)
        ]
        return {k: np.concatenate([p[k] for p in parts]).reshape(shape) for k in parts[0]}

    def _evaluate_flat(self, z, r, theta) -> dict:
        data = self._circle_data(r)
        rows = np.arange(r.size)
        a, a_r = self._antiderivatives(data, rows, theta)
        G, Gr = self._density(z)
        c, dc = data.c, data.dc
        L = theta + a / c
        L_r = a_r / c - dc * a / c**2
        L_theta = G / c
        # Delta = L - theta is exactly 0 on the cutoff plateau and on theta = 0.
        F = z * np.exp(1j * (a / c))
        eL = np.exp(1j * L)
        F_theta = 1j * r * eL * L_theta
        F_r = eL * (1.0 + 1j * r * L_r)
        return dict(z=z, r=r, theta=theta, G=G, G_r=Gr, c=c, dc=dc, A=a, A_r=a_r,
                    L=L, L_r=L_r, L_theta=L_theta, F=F, F_r=F_r, F_theta=F_theta)

    # -- public evaluators -------------------------------------------------

    def G_at(self, z: ArrayLike) -> np.ndarray:
        z, _, _ = self._polar(z)
        return self._density(z)[0]

    def c_at(self, r: ArrayLike) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0) or np.any(r >= 1):
            raise DomainViolationError("c(r) is defined for 0 < r < 1")
        c = self._circle_data(r.ravel()).c.reshape(r.shape)
        if np.any(c < self.lower_bound * (1 - 1e-12)) or np.any(c > self.upper_bound * (1 + 1e-12)):
            raise ConstructionError(
                f"c(r) outside [{self.lower_bound}, {self.upper_bound}]; map and grid are inconsistent"
            )
        return c

    def L_at(self, r: ArrayLike, theta: ArrayLike) -> np.ndarray:
        """``L(r, theta)`` for any real ``theta``, including the ``2 pi``
        winding."""
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        r, theta = np.broadcast_arrays(r, theta)
        if np.any(r <= 0) or np.any(r >= 1):
            raise DomainViolationError("L is defined for 0 < r < 1")
        turns = np.floor(theta / TWO_PI).ravel()
        base = (theta.ravel() - TWO_PI * turns)
        rf = r.ravel()
        L = np.empty(rf.size)
        step = self._chunk()
        for i in range(0, rf.size, step):
            sl = slice(i, i + step)
            data = self._circle_data(rf[sl])
            a, _ = self._antiderivatives(data, np.arange(data.r.size), base[sl])
            L[sl] = base[sl] + a / data.c
        return (L + TWO_PI * turns).reshape(r.shape)

    def F(self, z: ArrayLike) -> np.ndarray:
        return self.evaluate(z)["F"]

    def F_inverse(self, w: ArrayLike, tol: float = 1e-14, max_iter: int = 100) -> np.ndarray:
        """Invert ``F`` by solving ``L(r, theta) = arg w`` per point.

        Newton steps use ``L_theta = G / c > 0``; a bracket on ``[0, 2 pi]``
        is kept and bisection replaces any step leaving it.

        Raises
        ------
        NonConvergenceError
        """
        w = np.asarray(w, dtype=np.complex128)
        flat = w.ravel()
        step = self._chunk()
        out = np.concatenate(
            [self._inverse_flat(flat[i : i + step], tol, max_iter) for i in range(0, max(flat.size, 1), step)]
        )
        return out[: flat.size].reshape(w.shape)

    def _inverse_flat(self, w, tol, max_iter):
        w, r, phi = self._polar(w)
        shape = w.shape
        r, phi = r.ravel(), phi.ravel()
        out = r.astype(np.complex128)
        live = np.flatnonzero((r > self.cutoff.lo) & (phi > 0))
        out[(r <= self.cutoff.lo) | (phi == 0)] = w.ravel()[(r <= self.cutoff.lo) | (phi == 0)]
        if live.size:
            rl, target = r[live], phi[live]
            data = self._circle_data(rl)
            rows = np.arange(rl.size)
            lo = np.zeros(rl.size)
            hi = np.full(rl.size, TWO_PI)
            th = target.copy()
            conv = np.zeros(rl.size, dtype=bool)
            for _ in range(max_iter):
                a, _ = self._antiderivatives(data, rows, th)
                f = th + a / data.c - target
                conv = np.abs(f) <= tol * TWO_PI
                if np.all(conv):
                    break
                lo = np.where(f < 0, th, lo)
                hi = np.where(f > 0, th, hi)
                G, _ = self._density(rl * np.exp(1j * th))
                newton = th - f / (G / data.c)
                bad = (newton <= lo) | (newton >= hi)
                th = np.where(conv, th, np.where(bad, 0.5 * (lo + hi), newton))
            if not np.all(conv):
                raise NonConvergenceError(
                    f"F inverse did not converge for {np.count_nonzero(~conv)} point(s)"
                )
            out[live] = rl * np.exp(1j * th)
        return out.reshape(shape)

    def second_derivatives(self, z: ArrayLike, h: float | None = None) -> dict:
        """``F_theta_theta`` (analytic) and ``F_theta_r``, ``F_rr`` by centred
        differences of the analytic first derivatives in ``r``."""
        z, r, theta = self._polar(z)
        ev = self.evaluate(z)
        G_theta = self._density_theta(z)
        L_tt = G_theta / ev["c"]
        eL = np.exp(1j * ev["L"])
        F_tt = 1j * r * eL * (1j * ev["L_theta"] ** 2 + L_tt)
        step = np.minimum(1e-5, (1.0 - r) / 10.0) if h is None else np.full(r.shape, h)
        step = np.minimum(step, np.maximum(r, 1e-300) / 2.0)
        u = np.exp(1j * theta)
        plus = self.evaluate((r + step) * u)
        minus = self.evaluate((r - step) * u)
        F_tr = (plus["F_theta"] - minus["F_theta"]) / (2 * step)
        F_rr = (plus["F_r"] - minus["F_r"]) / (2 * step)
        return dict(F_thth=F_tt, F_thr=F_tr, F_rr=F_rr, L_thth=L_tt)

    # -- table checks --------------------------------------------------------

    def check_bounds(self, tol: float = 1e-12) -> None:
        """Raise :class:`ConstructionError` unless the tables respect
        ``min(1, c0^2) <= G, c <= c1^2 + 1``."""
        lo = self.lower_bound * (1 - tol)
        hi = self.upper_bound * (1 + tol)
        if self.G.min() < lo or self.G.max() > hi:
            raise ConstructionError(f"G outside [{self.lower_bound}, {self.upper_bound}]")
        if self.c.min() < lo or self.c.max() > hi:
            raise ConstructionError(f"c outside [{self.lower_bound}, {self.upper_bound}]")

    def table_invariants(self) -> dict:
        """Grid-node checks of the table invariants."""
        F_nodes = self.radii[:, None] * np.exp(1j * self.L)
        z_nodes = self.radii[:, None] * np.exp(1j * self.theta[None, :])
        inner = self.radii <= self.cutoff.lo
        return {
            "G_min": float(self.G.min()),
            "G_max": float(self.G.max()),
            "c_min": float(self.c.min()),
            "c_max": float(self.c.max()),
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "L_theta_min": float(self.L_theta.min()),
            "L_theta_floor": self.lower_bound / self.upper_bound,
            "L_at_zero_max": float(np.max(np.abs(self.L[:, 0]))),
            "L_monotone": bool(np.all(np.diff(self.L, axis=1) > 0) and np.all(self.L[:, -1] < TWO_PI)),
            "inner_identity_max": float(np.max(np.abs(F_nodes[inner] - z_nodes[inner]))) if np.any(inner) else 0.0,
        }

    def table_rows(self):
        """Rows ``(r, theta, G, c, L)`` of the tables in row-major order."""
        for i, r in enumerate(self.radii):
            for j, t in enumerate(self.theta):
                yield (float(r), float(t), float(self.G[i, j]), float(self.c[i]), float(self.L[i, j]))


def build_changevar(cmap: ConformalMap, radii=None, n=None, check: bool = True) -> ChangeOfVariable:
    return ChangeOfVariable(cmap, radii=radii, n=n, check=check)


def eval_G(cov: ChangeOfVariable, z: ArrayLike) -> np.ndarray:
    """``G(z)`` by direct formula, ``|z| < 1``."""
    return cov.G_at(z)


def eval_c(cov: ChangeOfVariable, r: ArrayLike) -> np.ndarray:
    """Circle mean ``c(r)`` of ``G`` for ``0 < r < 1``; bounds enforced."""
    return cov.c_at(r)


def eval_L(cov: ChangeOfVariable, r: ArrayLike, theta: ArrayLike) -> np.ndarray:
    return cov.L_at(r, theta)


def eval_F(cov: ChangeOfVariable, z: ArrayLike) -> np.ndarray:
    return cov.F(z)


def eval_F_inverse(cov: ChangeOfVariable, w: ArrayLike) -> np.ndarray:
    return cov.F_inverse(w)


def jacobian_det(cov: ChangeOfVariable, z: ArrayLike) -> np.ndarray:
    """Analytic ``det DF(z) = G(z) / c(|z|)``."""
    return cov.evaluate(z)["L_theta"]


def jacobian_det_fd(cov: ChangeOfVariable, z: ArrayLike, h: float = 1e-5) -> np.ndarray:
    """``det DF`` from centred differences of ``F`` in ``x`` and ``y``."""
    z = np.asarray(z, dtype=np.complex128)
    pts = np.stack([z + h, z - h, z + 1j * h, z - 1j * h])
    F = cov.F(pts)
    Fx = (F[0] - F[1]) / (2 * h)
    Fy = (F[2] - F[3]) / (2 * h)
    return (np.conj(Fx) * Fy).imag


def derivative_fields(cov: ChangeOfVariable, r: ArrayLike, theta: ArrayLike):
    """``(F_r, F_theta, L_r, L_theta)`` at polar points ``(r, theta)``."""
    r, theta = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(theta, dtype=float))
    if np.any(r <= 0):
        raise DomainViolationError("derivative fields need r > 0")
    ev = cov.evaluate(r * np.exp(1j * theta))
    return ev["F_r"], ev["F_theta"], ev["L_r"], ev["L_theta"]


def L_r_finite_difference(cov: ChangeOfVariable, r: ArrayLike, theta: ArrayLike) -> np.ndarray:
    """Centred radial difference of ``L`` with ``h = min(1e-5, (1 - r)/10)``."""
    r, theta = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(theta, dtype=float))
    h = np.minimum(1e-5, (1.0 - r) / 10.0)
    h = np.minimum(h, r / 2.0)
    return (cov.L_at(r + h, theta) - cov.L_at(r - h, theta)) / (2 * h)


# ---------------------------------------------------------------------------
# sampled estimates


def _uniform_disc(rng, m, r_lo=0.0, r_hi=1.0):
    rad = np.sqrt(rng.uniform(r_lo**2, r_hi**2, m))
    return rad * np.exp(1j * rng.uniform(0, TWO_PI, m))


def sample_pairs(
    m: int,
    rng: np.random.Generator,
    r_min: float = 0.0,
    r_max: float = 1.0 - 1e-6,
    gap_range: tuple[float, float] = (1e-6, 1e-2),
) -> tuple[np.ndarray, np.ndarray]:
    """Stratified point pairs in the annulus ``r_min <= |z| <= r_max``.

    A third of the pairs are independent uniform points, a third lie within
    ``1e-2`` of the outer radius, and a third are near-diagonal with
    separations log-uniform in ``gap_range``.
    """
    m1 = m // 3
    m2 = m // 3
    m3 = m - m1 - m2
    x1 = _uniform_disc(rng, m1, r_min, r_max)
    y1 = _uniform_disc(rng, m1, r_min, r_max)
    span = min(1e-2, r_max - r_min)
    gap = np.exp(rng.uniform(math.log(1e-6 * span + 1e-300), math.log(span), (2, m2)))
    x2 = (r_max - gap[0]) * np.exp(1j * rng.uniform(0, TWO_PI, m2))
    y2 = (r_max - gap[1]) * np.exp(1j * rng.uniform(0, TWO_PI, m2))
    # Half of the near-boundary pairs are also close to each other.
    half = m2 // 2
    y2[:half] = (r_max - gap[1, :half]) * np.exp(1j * (np.angle(x2[:half]) + rng.normal(0, 1e-2, half)))
    x3 = _uniform_disc(rng, m3, r_min, r_max)
    d = np.exp(rng.uniform(math.log(gap_range[0]), math.log(gap_range[1]), m3))
    y3 = x3 + d * np.exp(1j * rng.uniform(0, TWO_PI, m3))
    # Keep the partner inside the annulus by reflecting its radius.
    ry = np.abs(y3)
    fix = (ry > r_max) | (ry < r_min)
    y3[fix] = x3[fix] - (y3[fix] - x3[fix])
    x = np.concatenate([x1, x2, x3])
    y = np.concatenate([y1, y2, y3])
    keep = (np.abs(y) <= r_max) & (np.abs(y) >= r_min) & (x != y)
    return x[keep], y[keep]


@dataclass
class BilipschitzResult:
    lower: float
    upper: float
    pairs: int
    flagged: bool

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "pairs": self.pairs, "flagged": self.flagged}


def bilipschitz_constants(
    cov: ChangeOfVariable,
    m: int = 10_000,
    rng: np.random.Generator | None = None,
    r_max: float = 1.0 - 1e-6,
) -> BilipschitzResult:
    """Min and max of ``|F(x) - F(y)| / |x - y|`` over stratified pairs.

    Ratios below ``1e-6`` or above ``1e6`` set ``flagged``.
    """
    if m < 10_000:
        raise ValueError("bi-Lipschitz estimate needs at least 1e4 pairs")
    rng = np.random.default_rng(0) if rng is None else rng
    x, y = sample_pairs(m, rng, r_max=r_max)
    ratio = np.abs(cov.F(x) - cov.F(y)) / np.abs(x - y)
    lo, hi = float(ratio.min()), float(ratio.max())
    return BilipschitzResult(lo, hi, int(x.size), bool(lo < 1e-6 or hi > 1e6 or not np.isfinite(hi)))


def verify_derivative_estimates(
    cov: ChangeOfVariable,
    m: int = 10_000,
    rng: np.random.Generator | None = None,
    r_min: float = 0.01,
    r_max: float = 1.0 - 1e-6,
    n_radii: int = 64,
) -> dict:
    """Sampled suprema of the derivative estimates behind the energy argument.

    Returns
    -------
    dict with

    ``int_G_r_sup``
        ``sup |int_0^theta G_r ds|`` over a polar grid.
    ``theta_field_lipschitz``
        Lipschitz ratio of ``V(z) = |Psi_z|^{-2} F_theta / |z|`` over pairs
        with ``r_min < |z| <= r_max``.
    ``radial_field_ratio``
        ``|W(z1) - W(z2)| * min(1 - |z1|, 1 - |z2|) / |z1 - z2|`` for
        ``W = |Psi_z|^{-2} F_r``.
    ``second_derivative_sup``
        ``sup (1 - r)(|F_thth| + |F_thr| + |F_rr|)``.
    """
    rng = np.random.default_rng(1) if rng is None else rng
    # (i) on a polar grid refining toward r_max
    rad = np.unique(np.concatenate([
        np.linspace(r_min, r_max, n_radii),
        1.0 - np.geomspace(1.0 - r_max, 0.5, n_radii),
    ]))
    rad = rad[(rad > 0) & (rad <= r_max)]
    theta = spectral.nodes(64)
    R, T = np.meshgrid(rad, theta, indexing="ij")
    ev = cov.evaluate((R * np.exp(1j * T)).ravel())
    int_Gr = ev["dc"] * ev["theta"] + ev["A_r"]
    sup_i = float(np.max(np.abs(int_Gr)))

    x, y = sample_pairs(m, rng, r_min=r_min, r_max=r_max)
    ex = cov.evaluate(x)
    ey = cov.evaluate(y)
    jx = np.abs(cov.cmap.psi_z(x)) ** -2
    jy = np.abs(cov.cmap.psi_z(y)) ** -2
    Vx = jx * ex["F_theta"] / np.abs(x)
    Vy = jy * ey["F_theta"] / np.abs(y)
    dz = np.abs(x - y)
    sup_ii = float(np.max(np.abs(Vx - Vy) / dz))
    Wx = jx * ex["F_r"]
    Wy = jy * ey["F_r"]
    weight = np.minimum(1.0 - np.abs(x), 1.0 - np.abs(y))
    sup_iii = float(np.max(np.abs(Wx - Wy) * weight / dz))

    pts = (R * np.exp(1j * T)).ravel()
    sd = cov.second_derivatives(pts)
    tot = np.abs(sd["F_thth"]) + np.abs(sd["F_thr"]) + np.abs(sd["F_rr"])
    sup_iv = float(np.max((1.0 - np.abs(pts)) * tot))
    return {
        "int_G_r_sup": sup_i,
        "theta_field_lipschitz": sup_ii,
        "radial_field_ratio": sup_iii,
        "second_derivative_sup": sup_iv,
        "pairs": int(x.size),
        "r_min": r_min,
        "r_max": r_max,
        "finite": bool(np.all(np.isfinite([sup_i, sup_ii, sup_iii, sup_iv]))),
    }
