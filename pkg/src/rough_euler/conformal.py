"""
Riemann maps of the unit disc represented as finite power series.

A map ``Psi(z) = psi_0 + sum_{k>=1} psi_k z^k`` is stored by its coefficient
vector. Evaluation at scattered points uses Horner's rule; traces on circles
``|z| = r`` use one FFT of the rescaled coefficients, which is exact at the
nodes.

The module also builds the test families used throughout the toolkit and
measures the regularity constants ``c0..c3`` of a map:

* ``c0 <= |Psi_z| <= c1`` on the disc,
* ``c2 = sup_r || Psi_z(r e^{i.}) ||_{H^{1/2}}``,
* ``c3 = sup_r || H(|Psi_z|^2(r e^{i.})) ||_inf``.

The suprema over ``r`` are estimated on a radius grid that accumulates at
``r = 1``; the growth of the running maximum along that grid is reported as a
refinement trend.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from numpy.typing import ArrayLike
from shapely.geometry import LinearRing

from . import spectral
from .errors import DomainViolationError, NonConvergenceError, UnivalenceError

__all__ = [
    "ConformalMap",
    "BoundaryTrace",
    "AssumptionReport",
    "eval_psi",
    "eval_psi_z",
    "eval_psi_zz",
    "invert_phi",
    "eval_phi_z",
    "boundary_trace",
    "circle_values",
    "default_radii",
    "check_assumption",
    "make_family",
    "parse_family",
    "check_univalence",
    "is_convex_map",
    "holder_exponent_estimate",
    "cauchy_riemann_residual",
    "trace_size",
]

# Refinement levels close in on the boundary as r_max = 1 - 2^{-3 l}.
LEVEL_STEP = 3
BOUNDED_RATIO = 1.1
DIVERGENT_RATIO = 1.5


@dataclass(frozen=True)
class ConformalMap:
    """Polynomial Riemann map ``Psi(z) = sum_k coeffs[k] z^k``.

    Parameters
    ----------
    coeffs : array_like of complex
        Taylor coefficients ``psi_0, ..., psi_K``.
    name : str
        Family label used in reports.
    params : dict
        Family parameters, kept for provenance.
    """

    coeffs: np.ndarray
    name: str = "explicit"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128).ravel()
        if c.size < 2:
            raise ValueError("a map needs at least the linear coefficient")
        if not np.all(np.isfinite(c)):
            raise ValueError("map coefficients must be finite")
        # Trailing zeros carry no information.
        last = np.flatnonzero(c)
        if last.size == 0 or last[-1] == 0:
            raise ValueError("map must be non-constant")
        c = c[: max(last[-1] + 1, 2)]
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    @property
    def dcoeffs(self) -> np.ndarray:
        """Coefficients of ``Psi_z``."""
        k = np.arange(1, self.coeffs.size)
        return k * self.coeffs[1:]

    @property
    def ddcoeffs(self) -> np.ndarray:
        """Coefficients of ``Psi_zz`` (length at least one)."""
        d = self.dcoeffs
        if d.size < 2:
            return np.zeros(1, dtype=np.complex128)
        return np.arange(1, d.size) * d[1:]

    def psi(self, z: ArrayLike) -> np.ndarray:
        return _horner(self.coeffs, z)

    def psi_z(self, z: ArrayLike) -> np.ndarray:
        return _horner(self.dcoeffs, z)

    def psi_zz(self, z: ArrayLike) -> np.ndarray:
        return _horner(self.ddcoeffs, z)

    def label(self) -> str:
        if not self.params:
            return self.name
        args = ", ".join(f"{k}={v}" for k, v in self.params.items())
        return f"{self.name}({args})"


def _horner(c: np.ndarray, z: ArrayLike) -> np.ndarray:
    z = np.asarray(z, dtype=np.complex128)
    out = np.full(z.shape, c[-1], dtype=np.complex128)
    for ck in c[-2::-1]:
        out = out * z + ck
    return out


def _check_closed_disc(z: ArrayLike, tol: float = 1e-12) -> np.ndarray:
    z = np.asarray(z, dtype=np.complex128)
    if np.any(np.abs(z) > 1.0 + tol):
        raise DomainViolationError("evaluation point outside the closed unit disc")
    return z


def eval_psi(cmap: ConformalMap, z: ArrayLike) -> np.ndarray:
    """``Psi(z)`` for ``|z| <= 1``."""
    return cmap.psi(_check_closed_disc(z))


def eval_psi_z(cmap: ConformalMap, z: ArrayLike) -> np.ndarray:
    """``Psi_z(z)`` for ``|z| <= 1``."""
    return cmap.psi_z(_check_closed_disc(z))


def eval_psi_zz(cmap: ConformalMap, z: ArrayLike) -> np.ndarray:
    """``Psi_zz(z)`` for ``|z| <= 1``."""
    return cmap.psi_zz(_check_closed_disc(z))


# ---------------------------------------------------------------------------
# circle traces


def trace_size(cmap: ConformalMap, n: int | None = None, factor: int = 2) -> int:
    """Power-of-two sample count resolving ``factor`` times the degree.

    ``factor=2`` leaves room for products such as ``|Psi_z|^2`` without
    aliasing.
    """
    need = factor * (cmap.degree + 1)
    m = 4
    while m < need:
        m *= 2
    if n is not None:
        m = max(m, int(n))
    return m


def circle_values(coeffs: np.ndarray, r: float, n: int) -> np.ndarray:
    """Values of ``sum_k coeffs[k] z^k`` at ``z = r e^{2 pi i j/n}``.

    Coefficients beyond ``n`` are folded modulo ``n``, so the node values are
    exact for any degree.
    """
    c = np.asarray(coeffs, dtype=np.complex128)
    k = np.arange(c.size)
    if r == 0.0:
        scaled = np.zeros_like(c)
        scaled[0] = c[0]
    else:
        # Logs avoid underflow warnings for very high degrees.
        scaled = c * np.exp(k * math.log(r))
    folded = np.zeros(n, dtype=np.complex128)
    np.add.at(folded, k % n, scaled)
    # sum_k a_k e^{i k theta_j} = n * ifft(a)_j
    return np.fft.ifft(folded) * n


@dataclass(frozen=True)
class BoundaryTrace:
    """Real and imaginary parts of ``Psi_z`` on the circle of radius ``r``.

    Attributes
    ----------
    r : float
        Radius of the circle.
    a, b : ndarray
        ``Re Psi_z`` and ``Im Psi_z`` at ``theta_j = 2 pi j / N``.
    """

    r: float
    a: np.ndarray
    b: np.ndarray

    @property
    def psi_z(self) -> np.ndarray:
        return self.a + 1j * self.b

    @property
    def theta(self) -> np.ndarray:
        return spectral.nodes(self.a.size)


def boundary_trace(cmap: ConformalMap, r: float, n: int | None = None) -> BoundaryTrace:
    """Samples of ``a = Re Psi_z`` and ``b = Im Psi_z`` on ``|z| = r``.

    ``r = 1`` is accepted and gives the trace of the polynomial on the unit
    circle. ``n`` defaults to :func:`trace_size`.
    """
    r = float(r)
    if not 0.0 <= r <= 1.0:
        raise DomainViolationError(f"trace radius must lie in [0, 1], got {r}")
    n = trace_size(cmap) if n is None else int(n)
    vals = circle_values(cmap.dcoeffs, r, n)
    return BoundaryTrace(r=r, a=vals.real.copy(), b=vals.imag.copy())


# ---------------------------------------------------------------------------
# inverse map


def _newton_inverse(cmap, x, y0, tol, max_iter):
    y = y0.copy()
    done = np.zeros(y.shape, dtype=bool)
    scale = max(1.0, float(np.max(np.abs(cmap.coeffs))))
    for _ in range(max_iter):
        res = cmap.psi(y) - x
        done = np.abs(res) < tol * scale
        if np.all(done):
            break
        dy = res / cmap.psi_z(y)
        # Damp steps that would leave a generous neighbourhood of the disc.
        step = np.abs(dy)
        damp = np.where(step > 0.25, 0.25 / np.maximum(step, 1e-300), 1.0)
        y = np.where(done, y, y - damp * dy)
    res = cmap.psi(y) - x
    done = np.abs(res) < tol * scale
    return y, done


def invert_phi(
    cmap: ConformalMap,
    x: ArrayLike,
    tol: float = 1e-12,
    max_iter: int = 60,
    seed_grid: tuple[int, int] = (32, 64),
) -> np.ndarray:
    """Solve ``Psi(y) = x`` for ``y`` in the closed disc, i.e. ``y = Phi(x)``.

    A coarse polar grid supplies the starting point, Newton's method refines
    it.

    Raises
    ------
    NonConvergenceError
        If the residual does not drop below ``tol`` (relative to the
        coefficient scale).
    DomainViolationError
        If the solution lies outside the closed unit disc, i.e. ``x`` is not
        in the domain.
    """
    xs = np.asarray(x, dtype=np.complex128)
    flat = xs.ravel()
    nr, nt = seed_grid
    rr = (np.arange(nr) + 0.5) / nr
    tt = spectral.nodes(nt)
    grid = (rr[:, None] * np.exp(1j * tt[None, :])).ravel()
    grid = np.concatenate([[0.0], grid, np.exp(1j * tt)])
    gvals = cmap.psi(grid)
    # Nearest image point, chunked to bound memory.
    seeds = np.empty_like(flat)
    for start in range(0, flat.size, 2048):
        chunk = flat[start : start + 2048]
        d = np.abs(chunk[:, None] - gvals[None, :])
        seeds[start : start + 2048] = grid[np.argmin(d, axis=1)]
    y, ok = _newton_inverse(cmap, flat, seeds, tol, max_iter)
    if not np.all(ok):
        # Retry stragglers from a few alternative seeds before giving up.
        bad = np.flatnonzero(~ok)
        for idx in bad:
            d = np.abs(flat[idx] - gvals)
            for cand in grid[np.argsort(d)[1:6]]:
                yy, good = _newton_inverse(cmap, flat[idx : idx + 1], np.array([cand]), tol, max_iter)
                if good[0]:
                    y[idx] = yy[0]
                    ok[idx] = True
                    break
    if not np.all(ok):
        raise NonConvergenceError(
            f"inverse map did not converge for {np.count_nonzero(~ok)} point(s)"
        )
    if np.any(np.abs(y) > 1.0 + 1e-10):
        raise DomainViolationError("point lies outside the image of the disc")
    return y.reshape(xs.shape)


def eval_phi_z(cmap: ConformalMap, x: ArrayLike) -> np.ndarray:
    """``Phi_z(x) = 1 / Psi_z(Phi(x))``."""
    return 1.0 / cmap.psi_z(invert_phi(cmap, x))


# ---------------------------------------------------------------------------
# univalence and family checks


def check_univalence(cmap: ConformalMap, n: int | None = None) -> dict:
    """Numerical univalence test.

    Checks that ``Psi_z`` has no zeros in the disc (winding number of the
    boundary trace of ``Psi_z`` about 0 equals 0 and its minimum modulus is
    positive) and that the sampled boundary curve is a simple polygon.
    """
    n = trace_size(cmap, n, factor=8)
    n = max(n, 1024)
    dpsi = circle_values(cmap.dcoeffs, 1.0, n)
    psi = circle_values(cmap.coeffs, 1.0, n)
    min_mod = float(np.min(np.abs(dpsi)))
    ang = np.angle(dpsi)
    winding = float(np.sum(np.angle(np.exp(1j * (np.roll(ang, -1) - ang)))) / (2 * np.pi))
    ring = LinearRing(np.column_stack([psi.real, psi.imag]))
    simple = bool(ring.is_simple)
    ok = min_mod > 0 and abs(winding) < 0.5 and simple
    return {
        "min_abs_psi_z": min_mod,
        "winding_psi_z": winding,
        "boundary_simple": simple,
        "univalent": bool(ok),
        "samples": n,
    }


def is_convex_map(cmap: ConformalMap, n: int | None = None) -> bool:
    """Boundary curvature sign test: ``Re(1 + z Psi_zz / Psi_z) >= 0`` on
    ``|z| = 1``."""
    n = max(trace_size(cmap, n, factor=8), 1024)
    z = np.exp(1j * spectral.nodes(n))
    q = 1.0 + z * circle_values(cmap.ddcoeffs, 1.0, n) / circle_values(cmap.dcoeffs, 1.0, n)
    return bool(np.min(q.real) >= 0.0)


def _lacunary_coeffs(alpha: float, sigma: float, levels: int) -> np.ndarray:
    """Coefficients of ``Psi`` with ``Psi(0) = 0`` and
    ``log Psi_z = sigma * sum_{j=1}^{J} 2^{-alpha j} z^{2^j}``.

    ``exp`` of the lacunary series is expanded by the recurrence
    ``k g_k = sum_j j h_j g_{k-j}`` and truncated at degree ``2^{J+1}``.
    """
    deg = 2 ** (levels + 1)
    h = np.zeros(deg + 1)
    for j in range(1, levels + 1):
        h[2**j] = sigma * 2.0 ** (-alpha * j)
    support = np.flatnonzero(h)
    g = np.zeros(deg + 1)
    g[0] = 1.0
    for k in range(1, deg + 1):
        m = support[support <= k]
        g[k] = np.dot(m * h[m], g[k - m]) / k
    # Psi = integral of g, Psi(0) = 0.
    psi = np.zeros(deg + 2, dtype=np.complex128)
    psi[1:] = g / np.arange(1, deg + 2)
    return psi


_PRESETS = {
    "convex_cubic": [0.0, 1.0, 0.0, 1.0 / 30.0],
    "convex_quintic": [0.0, 1.0, 0.0, 0.0, 0.0, 1.0 / 30.0],
    "convex_limacon": [0.0, 1.0, 0.2],
}


def make_family(spec: str | Mapping[str, Any], check: bool = True) -> ConformalMap:
    """Build a map from a family description.

    Accepted forms (string or mapping with a ``family`` key):

    * ``identity``
    * ``polynomial(eps, k)`` for ``z + eps z^k``
    * ``lacunary(alpha, sigma, J)``
    * ``convex_cubic``, ``convex_quintic``, ``convex_limacon``
    * ``coefficients(c0, c1, ...)`` with complex literals allowed

    Raises
    ------
    UnivalenceError
        If the resulting polynomial fails :func:`check_univalence`.
    ValueError
        For unknown families or bad parameters.
    """
    name, args = parse_family(spec)
    if name == "identity":
        if args:
            raise ValueError("identity takes no parameters")
        cmap = ConformalMap(np.array([0.0, 1.0]), name="identity")
    elif name == "polynomial":
        if len(args) != 2:
            raise ValueError("polynomial(eps, k) takes two parameters")
        eps, k = float(args[0].real), args[1].real
        if k != int(k) or k < 2:
            raise ValueError("polynomial degree k must be an integer >= 2")
        k = int(k)
        c = np.zeros(k + 1, dtype=np.complex128)
        c[1] = 1.0
        c[k] = eps
        cmap = ConformalMap(c, name="polynomial", params={"eps": eps, "k": k})
    elif name == "lacunary":
        if len(args) != 3:
            raise ValueError("lacunary(alpha, sigma, J) takes three parameters")
        alpha, sigma, lev = float(args[0].real), float(args[1].real), args[2].real
        if alpha <= 0 or lev != int(lev) or lev < 1 or lev > 20:
            raise ValueError("lacunary needs alpha > 0 and integer 1 <= J <= 20")
        lev = int(lev)
        cmap = ConformalMap(
            _lacunary_coeffs(alpha, sigma, lev),
            name="lacunary",
            params={"alpha": alpha, "sigma": sigma, "J": lev},
        )
    elif name in _PRESETS:
        if args:
            raise ValueError(f"{name} takes no parameters")
        cmap = ConformalMap(np.array(_PRESETS[name], dtype=np.complex128), name=name)
    elif name == "coefficients":
        cmap = ConformalMap(np.array(args, dtype=np.complex128), name="coefficients")
    else:
        raise ValueError(f"unknown map family {name!r}")
    if check:
        info = check_univalence(cmap)
        if not info["univalent"]:
            raise UnivalenceError(f"map {cmap.label()} failed the univalence check: {info}")
    return cmap


_CALL = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\((.*)\))?\s*$")


def parse_family(spec: str | Mapping[str, Any]) -> tuple[str, list[complex]]:
    """Split a family description into its name and numeric arguments."""
    if isinstance(spec, Mapping):
        spec = dict(spec)
        name = str(spec.pop("family"))
        args = list(spec.pop("args", []))
        if name == "polynomial" and not args:
            args = [spec.pop("eps"), spec.pop("k")]
        elif name == "lacunary" and not args:
            args = [spec.pop("alpha"), spec.pop("sigma"), spec.pop("J")]
        if spec:
            raise ValueError(f"unexpected family parameters {sorted(spec)}")
        return name, [complex(a) for a in args]
    m = _CALL.match(spec)
    if not m:
        raise ValueError(f"cannot parse map family {spec!r}")
    name, body = m.group(1), m.group(2)
    args: list[complex] = []
    if body is not None and body.strip():
        for tok in body.split(","):
            tok = tok.strip().replace(" ", "")
            try:
                args.append(complex(tok))
            except ValueError as exc:
                raise ValueError(f"bad numeric argument {tok!r} in {spec!r}") from exc
    return name, args


# ---------------------------------------------------------------------------
# regularity constants


def default_radii(m_max: int = 4 * LEVEL_STEP) -> np.ndarray:
    """Radii ``0, 1 - 2^{-m}`` for ``m = 1..m_max``."""
    return np.concatenate([[0.0], 1.0 - 2.0 ** -np.arange(1, m_max + 1)])


@dataclass
class AssumptionReport:
    """Measured constants of the three regularity conditions on a map.

    Attributes
    ----------
    c0, c1 : float
        Minimum and maximum of ``|Psi_z|`` over the grid, unit circle included.
    c2 : float
        Maximum over grid radii ``r < 1`` of ``||Psi_z(r .)||_{H^{1/2}}``.
    c3 : float
        Maximum over grid radii ``r < 1`` of ``||H(|Psi_z|^2(r .))||_inf``.
    radii : ndarray
        Radii used for ``c2``, ``c3``.
    c2_by_radius, c3_by_radius, hilbert_a2_by_radius : ndarray
        Per-radius values; the last is ``||H(a^2)||_inf``.
    level_radii : list of float
        Maximum radius ``1 - 2^{-3 l}`` of each refinement level.
    c2_levels, c3_levels : list of float
        Running maxima at each refinement level.
    verdicts : dict
        ``"pass"``, ``"fail"`` or ``"inconclusive"`` per condition.
    """

    map_label: str
    n: int
    c0: float
    c1: float
    c2: float
    c3: float
    radii: np.ndarray
    c2_by_radius: np.ndarray
    c3_by_radius: np.ndarray
    hilbert_a2_by_radius: np.ndarray
    level_radii: list
    c2_levels: list
    c3_levels: list
    verdicts: dict
    notes: list = field(default_factory=list)
    failed_radius: float | None = None

    @property
    def passed(self) -> bool:
        return all(v == "pass" for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "map": self.map_label,
            "N": self.n,
            "c0": self.c0,
            "c1": self.c1,
            "c2": self.c2,
            "c3": self.c3,
            "radii": [float(r) for r in self.radii],
            "c2_by_radius": [float(v) for v in self.c2_by_radius],
            "c3_by_radius": [float(v) for v in self.c3_by_radius],
            "hilbert_a2_by_radius": [float(v) for v in self.hilbert_a2_by_radius],
            "level_radii": [float(v) for v in self.level_radii],
            "c2_levels": [float(v) for v in self.c2_levels],
            "c3_levels": [float(v) for v in self.c3_levels],
            "verdicts": dict(self.verdicts),
            "passed": self.passed,
            "failed_radius": self.failed_radius,
            "notes": list(self.notes),
        }


def trend_verdict(levels: list[float], scale: float = 1.0) -> tuple[str, list[float]]:
    """Classify a running-maximum sequence by its last growth ratio.

    Returns ``("pass", ratios)`` if the final ratio is below 1.1 (or the
    values are negligible against ``scale``), ``("fail", ratios)`` if every
    ratio over the last two levels is at least 1.5, else
    ``"inconclusive"``.
    """
    vals = np.asarray(levels, dtype=float)
    if np.all(vals <= 1e-12 * scale):
        return "pass", [1.0] * max(len(vals) - 1, 0)
    ratios = [float(vals[i + 1] / vals[i]) if vals[i] > 0 else math.inf for i in range(len(vals) - 1)]
    if not ratios:
        return "inconclusive", ratios
    if ratios[-1] < BOUNDED_RATIO:
        return "pass", ratios
    if min(ratios[-2:]) >= DIVERGENT_RATIO:
        return "fail", ratios
    return "inconclusive", ratios


def check_assumption(
    cmap: ConformalMap,
    radii: ArrayLike | None = None,
    n: int | None = None,
    levels: int = 4,
) -> AssumptionReport:
    """Measure ``c0..c3`` and classify their behaviour as ``r -> 1``.

    Parameters
    ----------
    cmap : ConformalMap
    radii : array_like, optional
        Radii in ``[0, 1)``; defaults to ``0`` and ``1 - 2^{-m}``,
        ``m = 1..3*levels``.
    n : int, optional
        Minimum angular sample count; raised if needed to resolve
        ``|Psi_z|^2`` without aliasing.
    levels : int
        Number of refinement levels ``r_max = 1 - 2^{-3 l}``.
    """
    rs = default_radii(LEVEL_STEP * levels) if radii is None else np.sort(np.asarray(radii, dtype=float))
    if np.any(rs < 0) or np.any(rs >= 1):
        raise DomainViolationError("assumption radii must lie in [0, 1)")
    n = trace_size(cmap, n)
    notes: list[str] = []
    c2r, c3r, ha2 = [], [], []
    mods_min, mods_max = math.inf, 0.0
    failed = None
    for r in list(rs) + [1.0]:
        vals = circle_values(cmap.dcoeffs, float(r), n)
        if not np.all(np.isfinite(vals)):
            failed = float(r)
            notes.append(f"non-finite trace at r={r!r}")
            break
        mod = np.abs(vals)
        mods_min = min(mods_min, float(mod.min()))
        mods_max = max(mods_max, float(mod.max()))
        if r >= 1.0:
            break
        c2r.append(spectral.hhalf_fourier(vals))
        c3r.append(float(np.max(np.abs(spectral.hilbert(mod**2)))))
        ha2.append(float(np.max(np.abs(spectral.hilbert(vals.real**2)))))
    c2r, c3r, ha2 = np.array(c2r), np.array(c3r), np.array(ha2)
    if failed is not None:
        return AssumptionReport(
            cmap.label(), n, mods_min, mods_max, math.inf, math.inf, rs, c2r, c3r, ha2,
            [], [], [], {"bounds": "fail", "hhalf_trace": "fail", "hilbert_modulus": "fail"},
            notes, failed,
        )
    level_r = [1.0 - 2.0 ** (-LEVEL_STEP * l) for l in range(1, levels + 1)]
    c2l, c3l = [], []
    for rmax in level_r:
        sel = rs <= rmax + 1e-15
        c2l.append(float(c2r[sel].max()) if np.any(sel) else 0.0)
        c3l.append(float(c3r[sel].max()) if np.any(sel) else 0.0)
    scale = max(1.0, mods_max**2)
    v2, ratio2 = trend_verdict(c2l, scale)
    v3, ratio3 = trend_verdict(c3l, scale)
    v1 = "pass" if mods_min > 0 and math.isfinite(mods_max) else "fail"
    if v2 == "fail":
        notes.append(f"H^1/2 norm of the Psi_z trace diverges as r -> 1 (level ratios {ratio2})")
    if v3 == "fail":
        notes.append(f"Hilbert transform of |Psi_z|^2 diverges as r -> 1 (level ratios {ratio3})")
    notes.append("suprema over r < 1 are grid estimates with a refinement trend, not certified bounds")
    return AssumptionReport(
        map_label=cmap.label(),
        n=n,
        c0=mods_min,
        c1=mods_max,
        c2=float(c2r.max()),
        c3=float(c3r.max()),
        radii=rs,
        c2_by_radius=c2r,
        c3_by_radius=c3r,
        hilbert_a2_by_radius=ha2,
        level_radii=level_r,
        c2_levels=c2l,
        c3_levels=c3l,
        verdicts={"bounds": v1, "hhalf_trace": v2, "hilbert_modulus": v3},
        notes=notes,
    )


def holder_exponent_estimate(cmap: ConformalMap, min_block: int = 1) -> float:
    """Hoelder exponent of the unit-circle trace of ``Psi_z`` from the decay
    of its Fourier coefficients over dyadic blocks.

    Fits ``log2 max_{2^j <= k < 2^{j+1}} |coef_k| ~ -alpha j`` by least squares
    over complete blocks ``j >= min_block`` whose maxima exceed roundoff. The
    block holding the top coefficient is dropped since truncation leaves it
    partial.
    """
    d = np.abs(cmap.dcoeffs)
    js, logs = [], []
    j = min_block
    while 2 ** (j + 1) <= d.size - 1:
        block = d[2**j : 2 ** (j + 1)]
        mx = float(block.max())
        if mx > 1e-13 * d.max():
            js.append(j)
            logs.append(math.log2(mx))
        j += 1
    if len(js) < 2:
        raise ValueError("too few dyadic blocks to estimate a decay rate")
    slope = np.polyfit(np.array(js, dtype=float), np.array(logs), 1)[0]
    return float(-slope)


def cauchy_riemann_residual(cmap: ConformalMap, r: float, n: int | None = None, h: float = 1e-5) -> float:
    """Max over the circle of ``|a_r - b_theta / r| + |b_r + a_theta / r|``.

    Radial derivatives use a centred difference of width ``h``; angular ones
    are spectral.
    """
    if not 0.0 < r < 1.0:
        raise DomainViolationError(f"radius must lie in (0, 1), got {r}")
    h = min(h, (1.0 - r) / 2.0, r / 2.0)
    n = trace_size(cmap, n)
    mid = boundary_trace(cmap, r, n)
    hi = boundary_trace(cmap, r + h, n)
    lo = boundary_trace(cmap, r - h, n)
    a_r = (hi.a - lo.a) / (2 * h)
    b_r = (hi.b - lo.b) / (2 * h)
    a_t = spectral.derivative(mid.a)
    b_t = spectral.derivative(mid.b)
    res = np.abs(a_r - b_t / r) + np.abs(b_r + a_t / r)
    return float(res.max())
