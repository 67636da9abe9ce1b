"""
Separation energies between two flows and the Osgood growth experiment.

Two particle runs A and B share particle labels ``k``. Each label carries
the physical area ``m_k = |Psi_z(s_k)|^2 dA_k`` of its starting cell, and

    E1 = sum_k |Psi(Y_A,k) - Psi(Y_B,k)| m_k      (physical positions)
    E2 = sum_k |Y_A,k - Y_B,k| m_k                (disc positions)
    E  = sum_k |F(Y_A,k) - F(Y_B,k)| m_k          (after the change of variable)

The log-Lipschitz velocity bound predicts ``|dE/dt| <= C phi(E)`` while
``E`` stays small. :func:`twin_run` measures ``C`` and compares the trace
with the explicit Osgood envelopes of :func:`gronwall_envelope`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike
from scipy.integrate import solve_ivp

from .biotsavart import DiscQuadrature, phi
from .changevar import ChangeOfVariable, build_changevar, sample_pairs
from .conformal import ConformalMap, boundary_trace
from .flow import Sampler, Trajectory, init_ensemble, integrate

__all__ = [
    "phi",
    "energy_E1",
    "energy_E2",
    "energy_E",
    "gronwall_envelope",
    "osgood_solution",
    "envelope_check",
    "EquivalenceBracket",
    "equivalence_bracket",
    "EnergyTrace",
    "fit_osgood_constant",
    "jitter_positions",
    "twin_run",
    "DISPLACEMENT_GUARD",
    "SEPARATION_GUARD",
]

# Largest particle displacement |Y_i(y,t) - y| the estimate allows.
DISPLACEMENT_GUARD = 1.0 / 16.0
# Upper end of the window where phi is concave; applied to E and to the
# pointwise separation |F(Y_A) - F(Y_B)|.
SEPARATION_GUARD = 1.0 / 10.0
# Steps with E at or below this floor are excluded from the fit.
FIT_FLOOR = 10.0 * np.finfo(float).eps


def _matched(a: ArrayLike, b: ArrayLike, w: ArrayLike):
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    w = np.asarray(w, dtype=float)
    if a.shape != b.shape or a.shape[-1] != w.shape[-1]:
        raise ValueError(f"particle sets do not match: {a.shape}, {b.shape}, weights {w.shape}")
    return a, b, w


def energy_E1(X1: ArrayLike, X2: ArrayLike, weights: ArrayLike) -> float | np.ndarray:
    """``sum_k |X1_k - X2_k| w_k`` for physical positions ``X = Psi(Y)``.

    Accepts stacked snapshots of shape ``(m, n)`` and then returns one value
    per row.
    """
    X1, X2, w = _matched(X1, X2, weights)
    out = np.abs(X1 - X2) @ w
    return float(out) if np.ndim(out) == 0 else out


def energy_E2(Y1: ArrayLike, Y2: ArrayLike, weights: ArrayLike) -> float | np.ndarray:
    """``sum_k |Y1_k - Y2_k| w_k`` with ``w_k = |Psi_z(s_k)|^2 dA_k``."""
    return energy_E1(Y1, Y2, weights)


def energy_E(Y1: ArrayLike, Y2: ArrayLike, cov: ChangeOfVariable, weights: ArrayLike) -> float | np.ndarray:
    """``sum_k |F(Y1_k) - F(Y2_k)| w_k``."""
    Y1, Y2, w = _matched(Y1, Y2, weights)
    return energy_E1(cov.F(Y1), cov.F(Y2), w)


def _log_envelope(y0: float, c: float, R: float, t: np.ndarray):
    k = math.log(10.0 * (R + 1.0))
    return np.exp(c * t) * (math.log(y0) - k), k + np.exp(-c * t) * math.log(y0)


def gronwall_envelope(y0: float, c: float, R: float, t: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper Osgood envelopes.

    For ``0 < y <= R`` with ``|y'| <= c phi(y)``,

        [y0 / (10(R+1))]^(e^{ct}) <= y(t) <= 10(R+1) y0^(e^{-ct}).
    """
    if not y0 > 0:
        raise ValueError("y0 must be positive")
    if not c > 0 or not R > 0:
        raise ValueError("c and R must be positive")
    # Exponents are formed in logs so tiny y0 does not underflow early.
    lo, hi = _log_envelope(y0, c, R, np.asarray(t, dtype=float))
    return np.exp(lo), np.exp(hi)


def osgood_solution(y0: float, c: float, t: ArrayLike, sign: int = 1, rtol: float = 1e-11) -> np.ndarray:
    """Numerical solution of ``y' = sign * c * phi(y)``, ``y(0) = y0``.

    The equation is integrated for ``u = ln y``, where it reads
    ``u' = sign * c * max(-u, 1)``: bounded, Lipschitz and free of the
    stiffness ``phi`` has near zero.
    """
    if not y0 > 0:
        raise ValueError("y0 must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(np.diff(t) < 0) or t[0] < 0:
        raise ValueError("times must be nonnegative and sorted")
    s = 1.0 if sign >= 0 else -1.0

    def f(_, u):
        return s * c * np.maximum(-u, 1.0)

    sol = solve_ivp(f, (0.0, float(t[-1])), [math.log(y0)], t_eval=t, method="DOP853", rtol=rtol, atol=1e-13)
    if not sol.success:
        raise RuntimeError(sol.message)
    return np.exp(sol.y[0])


def envelope_check(times: ArrayLike, values: ArrayLike, c: float, R: float | None = None) -> dict:
    """Compare a positive trace with the envelopes started from its first value.

    ``R`` defaults to the trace maximum, the smallest admissible bound.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if R is None:
        R = float(np.max(y))
    if not c > 0 or not R > 0 or np.any(y <= 0):
        raise ValueError("need c > 0, R > 0 and a positive trace")
    lo, hi = _log_envelope(float(y[0]), c, R, t - t[0])
    ly = np.log(y)
    return {
        "R": float(R),
        "below_upper": bool(np.all(ly <= hi)),
        "above_lower": bool(np.all(ly >= lo)),
        "log_upper_margin": float(np.min(hi - ly)),
        "log_lower_margin": float(np.min(ly - lo)),
    }


@dataclass
class EquivalenceBracket:
    """Ranges the energy ratios must fall in.

    ``F`` and ``Psi`` difference quotients are sampled over point pairs;
    ``psi_z_sq`` holds the extreme values of ``|Psi_z|^2`` on the boundary.
    """

    F: tuple[float, float]
    Psi: tuple[float, float]
    psi_z_sq: tuple[float, float]

    @property
    def Lambda(self) -> float:
        return max(self.F[1], 1.0 / self.F[0], self.Psi[1], 1.0 / self.Psi[0])

    def to_dict(self) -> dict:
        return {"F": list(self.F), "Psi": list(self.Psi), "psi_z_sq": list(self.psi_z_sq), "Lambda": self.Lambda}


def equivalence_bracket(
    cov: ChangeOfVariable,
    m: int = 10_000,
    rng: np.random.Generator | None = None,
    r_max: float = 1.0 - 1e-6,
) -> EquivalenceBracket:
    """Measured difference-quotient ranges of ``F`` and ``Psi``.

    ``E/E2`` is an average of ``|F(a)-F(b)|/|a-b|`` over particle pairs and
    ``E1/E2`` an average of the same quotient for ``Psi``, so each energy
    ratio lies in the matching range.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    x, y = sample_pairs(m, rng, r_max=r_max)
    d = np.abs(x - y)
    qf = np.abs(cov.F(x) - cov.F(y)) / d
    qp = np.abs(cov.cmap.psi(x) - cov.cmap.psi(y)) / d
    dens = np.abs(boundary_trace(cov.cmap, 1.0).psi_z) ** 2
    return EquivalenceBracket(
        F=(float(qf.min()), float(qf.max())),
        Psi=(float(qp.min()), float(qp.max())),
        psi_z_sq=(float(dens.min()), float(dens.max())),
    )


@dataclass
class EnergyTrace:
    """Energies of a twin run at the recorded times.

    Attributes
    ----------
    times, E1, E2, E : ndarray
    C : float or None
        Smallest ``C`` with ``dE/dt <= C phi(E)`` over the fit window; None
        when ``E`` vanishes identically.
    fit_steps : int
        Number of forward differences used for ``C``.
    fit_end : float
        Last time of the fit window.
    breaches : dict
        First time each guard failed, or None.
    R : float or None
        Bound on ``E`` used for the envelopes.
    envelope : dict
        Result of :func:`envelope_check` over the fit window.
    bracket : EquivalenceBracket or None
    label : str
    """

    times: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    E: np.ndarray
    C: float | None
    fit_steps: int
    fit_end: float
    breaches: dict
    R: float | None = None
    envelope: dict = field(default_factory=dict)
    bracket: EquivalenceBracket | None = None
    label: str = ""

    @property
    def exact_zero(self) -> bool:
        return not (np.any(self.E) or np.any(self.E1) or np.any(self.E2))

    def ratios(self) -> dict:
        """``E/E2`` and ``E1/E2`` at times where ``E2 > 0``."""
        ok = self.E2 > 0
        return {"E_over_E2": self.E[ok] / self.E2[ok], "E1_over_E2": self.E1[ok] / self.E2[ok]}

    def equivalence_ok(self) -> bool:
        """Whether every recorded ratio lies inside the bracket."""
        if self.bracket is None:
            raise ValueError("trace carries no bracket")
        r = self.ratios()
        f, p = self.bracket.F, self.bracket.Psi
        return bool(np.all((r["E_over_E2"] >= f[0]) & (r["E_over_E2"] <= f[1]))
                    and np.all((r["E1_over_E2"] >= p[0]) & (r["E1_over_E2"] <= p[1])))

    def summary(self) -> dict:
        return {
            "label": self.label,
            "C": self.C,
            "exact_zero": self.exact_zero,
            "fit_steps": self.fit_steps,
            "fit_end": self.fit_end,
            "breaches": self.breaches,
            "R": self.R,
            "envelope": self.envelope,
            "bracket": None if self.bracket is None else self.bracket.to_dict(),
            "equivalence_ok": None if self.bracket is None else self.equivalence_ok(),
        }


def fit_osgood_constant(times: ArrayLike, E: ArrayLike, window: int | None = None) -> tuple[float | None, int]:
    """Smallest ``C`` with forward differences ``dE/dt <= C phi(E)``.

    Only steps whose starting value exceeds ``10 eps`` enter, and only the
    first ``window`` samples are considered. Returns ``(C, steps)``; ``C``
    is None when no step qualifies and is clipped at zero from below.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(E, dtype=float)
    if window is not None:
        t, e = t[:window], e[:window]
    if e.size < 2:
        return None, 0
    dE = np.diff(e) / np.diff(t)
    start = e[:-1]
    use = start > FIT_FLOOR
    if not np.any(use):
        return None, 0
    rate = dE[use] / phi(start[use])
    return max(0.0, float(rate.max())), int(use.sum())


def jitter_positions(nodes: np.ndarray, eta: float, rng: np.random.Generator) -> np.ndarray:
    """Move each node by ``eta`` in a random direction, pointing inward when
    the outward choice would leave the disc."""
    d = eta * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, nodes.shape))
    out = nodes + d
    bad = np.abs(out) >= 1.0 - 1e-12
    out[bad] = nodes[bad] - d[bad]
    return out


def _snapshots(tr: Trajectory, which: str) -> np.ndarray:
    return tr.positions if which == "particles" else tr.tracers


def twin_run(
    cmap: ConformalMap,
    sampler: Sampler,
    quad: DiscQuadrature,
    T: float,
    dt: float,
    perturbation: str = "jitter",
    eta: float = 1e-6,
    rng: np.random.Generator | None = None,
    record_interval: float = 0.01,
    cov: ChangeOfVariable | None = None,
    bracket: EquivalenceBracket | None = None,
    reference: Trajectory | None = None,
) -> EnergyTrace:
    """Run two flows from the same initial vorticity and record their energies.

    Parameters
    ----------
    perturbation : {"jitter", "resolution"}
        ``"jitter"`` moves every particle of run B by ``eta`` in a random
        direction; ``eta = 0`` makes B a bitwise copy of A. ``"resolution"``
        runs B on the quadrature with half as many rings and angles and
        follows A's starting nodes as tracers in B.
    reference : Trajectory, optional
        A finished run A with the same parameters, reused instead of
        recomputed (the sweep over ``eta`` shares one run A).

    The fit window ends at the first recorded time where a particle of
    either run has moved more than 1/16, or where ``E`` or the pointwise
    separation ``max_k |F(Y_A,k) - F(Y_B,k)|`` exceeds 1/10.
    """
    if perturbation not in ("jitter", "resolution"):
        raise ValueError(f"unknown perturbation {perturbation!r}")
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    every = int(round(record_interval / dt))
    if every < 1 or abs(every * dt - record_interval) > 1e-9:
        raise ValueError("record interval must be a positive multiple of dt")
    rng = np.random.default_rng(0) if rng is None else rng
    cov = build_changevar(cmap) if cov is None else cov

    ens_a = init_ensemble(cmap, sampler, quad)
    mass = ens_a.mass
    if reference is None:
        reference = integrate(ens_a.copy(), T, dt, record_every=every)
    ya = reference.positions
    origin = ens_a.initial

    if perturbation == "jitter":
        ens_b = init_ensemble(cmap, sampler, quad)
        if eta > 0:
            ens_b.positions = jitter_positions(ens_b.positions, eta, rng)
            ens_b.initial = ens_b.positions.copy()
        yb = integrate(ens_b, T, dt, record_every=every).positions
        label = f"jitter eta={eta:g}"
    else:
        coarse = DiscQuadrature(max(1, quad.n_r // 2), max(4, quad.n_theta // 2))
        ens_b = init_ensemble(cmap, sampler, coarse)
        yb = integrate(ens_b, T, dt, tracers=origin, record_every=every).tracers
        label = "halved resolution"

    times = reference.times
    E1 = energy_E1(cmap.psi(ya), cmap.psi(yb), mass)
    E2 = energy_E2(ya, yb, mass)
    fa = cov.F(ya)
    fb = cov.F(yb)
    E = energy_E1(fa, fb, mass)

    disp = np.maximum(np.max(np.abs(ya - origin), axis=1), np.max(np.abs(yb - yb[0]), axis=1))
    sep = np.max(np.abs(fa - fb), axis=1)
    breaches = {}
    for name, bad in (
        ("displacement_1_16", disp > DISPLACEMENT_GUARD),
        ("energy_1_10", E > SEPARATION_GUARD),
        ("separation_1_10", sep > SEPARATION_GUARD),
    ):
        breaches[name] = float(times[np.argmax(bad)]) if np.any(bad) else None
    first_bad = [np.argmax(b) for b in (disp > DISPLACEMENT_GUARD, E > SEPARATION_GUARD, sep > SEPARATION_GUARD) if np.any(b)]
    window = int(min(first_bad)) if first_bad else times.size

    C, steps = fit_osgood_constant(times, E, window)
    R = None
    env: dict = {}
    if C is not None:
        pos = np.nonzero(E[:window] > FIT_FLOOR)[0]
        i0 = int(pos[0])
        R = float(np.max(E[i0:window]))
        env = envelope_check(times[i0:window], E[i0:window], max(C, 1e-300), R)
    return EnergyTrace(
        times=times,
        E1=np.asarray(E1),
        E2=np.asarray(E2),
        E=np.asarray(E),
        C=C,
        fit_steps=steps,
        fit_end=float(times[window - 1]) if window else 0.0,
        breaches=breaches,
        R=R,
        envelope=env,
        bracket=bracket,
        label=label,
    )
