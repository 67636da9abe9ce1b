"""
Command-line front end.

Subcommands read an INI config (see ``configs/example.ini``), run one
experiment and write CSV/JSON reports plus ``manifest.json`` into the output
directory. The output directory is ``--out`` if given, else the
``ROUGH_EULER_OUT`` environment variable, else ``[output] directory``.

Exit status: 0 all checks passed, 1 expected failure (the domain or run lies
outside the regime the checks certify), 2 configuration error, 3 numerical
abort (particle escape, non-convergence).
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, spectral
from .biotsavart import DiscQuadrature, context_from_samples, measure_btil_properties, phiabest_check
from .changevar import (
    ChangeOfVariable,
    bilipschitz_constants,
    build_changevar,
    jacobian_det,
    jacobian_det_fd,
    verify_derivative_estimates,
)
from .config import ExperimentConfig, VorticitySpec, load_config
from .conformal import (
    ConformalMap,
    check_assumption,
    check_univalence,
    holder_exponent_estimate,
    is_convex_map,
    make_family,
)
from .energy import envelope_check, equivalence_bracket, osgood_solution, twin_run
from .errors import (
    ConfigError,
    ConstructionError,
    DomainViolationError,
    NonConvergenceError,
    ParticleEscapeError,
    UnivalenceError,
)
from .flow import (
    PatchTriangulation,
    backward_flow,
    constant_vorticity,
    init_ensemble,
    integrate,
    material_disc_mask,
    measure_preservation_report,
    orbital_period,
    patch_vorticity,
    single_vortex,
    two_patch_vorticity,
)
from .reporting import write_csv, write_json

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_EXPECTED_FAILURE", "EXIT_CONFIG", "EXIT_NUMERICAL"]

EXIT_OK = 0
EXIT_EXPECTED_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

OUT_ENV = "ROUGH_EULER_OUT"

# Tolerances of the pass/fail checks.
JACOBIAN_TOL = 1e-5
IDENTITY_TOL = 1e-12
INVERSE_TOL = 1e-10
HHALF_REL_TOL = 0.01
PRODUCT_RULE_TOL = 1e-6
STABILITY_TOL = 0.2
ROUNDOFF_SCALE = 1e-6


class Run:
    """Output directory, seed and strictness shared by a subcommand."""

    def __init__(self, cfg: ExperimentConfig, out: Path, seed: int, strict: bool, command: str):
        self.cfg = cfg
        self.out = out
        self.seed = seed
        self.strict = strict
        self.command = command
        self.files: list[str] = []

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream])

    def json(self, name: str, obj) -> None:
        write_json(self.out / name, obj)
        self.files.append(name)

    def csv(self, name: str, header, rows) -> None:
        write_csv(self.out / name, header, rows)
        self.files.append(name)


# ---------------------------------------------------------------------------
# helpers


def _sampler(spec: VorticitySpec):
    a = spec.args
    if spec.name == "zero":
        return constant_vorticity(0.0)
    if spec.name == "constant":
        return constant_vorticity(float(a[0]))
    if spec.name == "patch":
        return patch_vorticity(complex(a[0]), float(a[1]), float(a[2]))
    if spec.name == "two_patch":
        return two_patch_vorticity(complex(a[0]), float(a[1]), float(a[2]), complex(a[3]), float(a[4]), float(a[5]))
    raise ValueError(f"{spec.name} has no vorticity density")


def _quadrature(cfg: ExperimentConfig, scale: int = 1) -> DiscQuadrature:
    return DiscQuadrature(cfg.n_r * scale, cfg.n_theta * scale)


def _rel_change(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(b - a) / max(abs(a), abs(b))


def _map(cfg: ExperimentConfig) -> ConformalMap:
    return make_family(cfg.family)


def _hhalf_corpus(rng: np.random.Generator, count: int = 20, n: int = 512):
    """Real band-limited test functions with modes ``|k| <= n/32``."""
    t = spectral.nodes(n)
    k = np.arange(1, n // 32 + 1)
    out = []
    for _ in range(count):
        amp = rng.normal(size=k.size) * k**-1.5
        ph = rng.uniform(0, 2 * math.pi, k.size)
        out.append(np.cos(np.outer(t, k) + ph) @ amp)
    return out


# ---------------------------------------------------------------------------
# subcommands; each returns (passed, report)


def cmd_check_domain(run: Run) -> tuple[bool, dict]:
    cfg = run.cfg
    cmap = _map(cfg)
    rep = check_assumption(cmap, levels=cfg.levels)
    info = check_univalence(cmap)
    report = {"assumption": rep.to_dict(), "univalence": info, "convex": is_convex_map(cmap)}
    if cmap.name == "lacunary":
        report["holder_exponent"] = holder_exponent_estimate(cmap)
    run.csv(
        "assumption_radii.csv",
        ["r", "hhalf_trace", "hilbert_modulus", "hilbert_a2"],
        zip(rep.radii, rep.c2_by_radius, rep.c3_by_radius, rep.hilbert_a2_by_radius),
    )
    bad = [k for k, v in rep.verdicts.items() if v == "fail" or (run.strict and v != "pass")]
    report["failed_conditions"] = bad
    run.json("assumption.json", report)
    return not bad, {"c0": rep.c0, "c1": rep.c1, "c2": rep.c2, "c3": rep.c3, "verdicts": rep.verdicts}


def _changevar_checks(cov: ChangeOfVariable, rng: np.random.Generator, pairs: int) -> dict:
    r = np.sqrt(rng.uniform(0.0, (1.0 - 1e-3) ** 2, pairs))
    z = r * np.exp(1j * rng.uniform(0, 2 * math.pi, pairs))
    exact = jacobian_det(cov, z)
    fd = jacobian_det_fd(cov, z)
    jac = float(np.max(np.abs(fd - exact) / np.abs(exact)))
    inner = z[np.abs(z) <= cov.cutoff.lo]
    seg = np.linspace(0.0, 1.0 - 1e-9, 257)
    ident = max(
        float(np.max(np.abs(cov.F(inner) - inner))) if inner.size else 0.0,
        float(np.max(np.abs(cov.F(seg) - seg))),
    )
    back = float(np.max(np.abs(cov.F_inverse(cov.F(z)) - z)))
    return {"jacobian_rel_err": jac, "identity_err": ident, "inverse_err": back, "samples": int(pairs)}


def cmd_build_changevar(run: Run) -> tuple[bool, dict]:
    cfg = run.cfg
    cmap = _map(cfg)
    if run.strict:
        rep = check_assumption(cmap, levels=cfg.levels)
        if not rep.passed:
            run.json("verification.json", {"map": cmap.label(), "assumption": rep.to_dict(), "built": False})
            return False, {"assumption": rep.verdicts}
    cov = build_changevar(cmap)
    run.csv("changevar_table.csv", ["r", "theta", "G", "c", "L"], cov.table_rows())
    run.csv("changevar_radial.csv", ["r", "c", "dc"], zip(cov.radii, cov.c, cov.dc))
    checks = _changevar_checks(cov, run.rng(1), cfg.pairs)
    bl = bilipschitz_constants(cov, max(cfg.pairs, 10_000), run.rng(2))
    est = verify_derivative_estimates(cov, max(cfg.pairs, 10_000), run.rng(3))
    inv = cov.table_invariants()
    ok = (
        checks["jacobian_rel_err"] <= JACOBIAN_TOL
        and checks["identity_err"] <= IDENTITY_TOL
        and checks["inverse_err"] <= INVERSE_TOL
        and inv["L_monotone"]
        and est["finite"]
        and not (run.strict and bl.flagged)
    )
    run.json(
        "verification.json",
        {"map": cmap.label(), "N": cov.n, "checks": checks, "bilipschitz": bl, "estimates": est, "tables": inv, "passed": ok},
    )
    return ok, {"jacobian_rel_err": checks["jacobian_rel_err"], "bilipschitz": [bl.lower, bl.upper]}


def _tracer_seeds(run: Run, count: int) -> np.ndarray:
    rng = run.rng(4)
    return np.sqrt(rng.uniform(0.0, 0.8, count)) * np.exp(1j * rng.uniform(0, 2 * math.pi, count))


def cmd_simulate(run: Run) -> tuple[bool, dict]:
    cfg = run.cfg
    cmap = _map(cfg)
    spec = cfg.vorticity
    if spec.name == "single_vortex":
        ens = single_vortex(cmap, complex(spec.args[0]), float(spec.args[1]))
    else:
        ens = init_ensemble(cmap, _sampler(spec), _quadrature(cfg))
    seeds = _tracer_seeds(run, cfg.tracers)
    start = ens.copy()
    every = int(round(cfg.record_interval / cfg.dt))
    hist = integrate(ens, cfg.T, cfg.dt, tracers=seeds)
    rec = slice(None, None, every)
    times = hist.times[rec]
    pos = hist.positions[rec]
    run.csv(
        "trajectory.csv",
        ["t", "particle", "re", "im"],
        ((t, k, p.real, p.imag) for t, row in zip(times, pos) for k, p in enumerate(row)),
    )
    summary = {
        "map": cmap.label(),
        "vorticity": spec.text(),
        "particles": int(ens.size),
        "T": cfg.T,
        "dt": cfg.dt,
        "min_gap": hist.min_gap,
        "contained": bool(hist.min_gap > 0),
        "max_speed": hist.max_speed,
    }
    ok = summary["contained"]
    if seeds.size:
        back = backward_flow(start, hist, hist.tracers[-1], cfg.T)
        summary["round_trip_err"] = float(np.max(np.abs(back - seeds)))
        run.csv(
            "tracers.csv",
            ["t", "tracer", "re", "im"],
            ((t, k, p.real, p.imag) for t, row in zip(times, hist.tracers[rec]) for k, p in enumerate(row)),
        )
    if spec.name in ("patch", "two_patch") and np.count_nonzero(start.weights) >= 3:
        # Tracked region: a material disc around the first patch, plus the
        # vortex support itself, whose edge particles sit on the vorticity jump.
        c, r = complex(spec.args[0]), float(spec.args[1])
        radius = min(1.5 * r, 0.9 * (1.0 - abs(c)))
        patches = {
            "material": PatchTriangulation.from_ensemble(start, material_disc_mask(start, c, radius)),
            "support": PatchTriangulation.from_ensemble(start),
        }
        drift = {k: [measure_preservation_report(start, p, tri) for p in pos] for k, tri in patches.items()}
        run.csv(
            "patch_area.csv",
            ["t", "patch", "area", "drift", "inverted"],
            ((t, k, d["area_final"], d["drift"], d["inverted_triangles"])
             for k in patches for t, d in zip(times, drift[k])),
        )
        summary["patch"] = dict(drift["material"][-1], center=c, radius=radius)
        summary["support_patch"] = drift["support"][-1]
        ok = ok and not (run.strict and any(d[-1]["degenerate"] for d in drift.values()))
    if spec.name == "constant":
        dr = np.abs(np.abs(pos) - np.abs(start.initial)[None, :])
        summary["radius_drift"] = float(dr.max())
    if spec.name == "single_vortex":
        rho = abs(complex(spec.args[0]))
        gamma = float(spec.args[1])
        summary["radius_drift"] = float(np.max(np.abs(np.abs(hist.positions[:, 0]) - rho)))
        try:
            summary["period"] = orbital_period(hist.times, hist.positions[:, 0])
        except ValueError:
            summary["period"] = None
        if cmap.name == "identity" and gamma != 0:
            # angular velocity gamma / (2 pi (1 - rho^2)) from the image vortex
            closed = 4 * math.pi**2 * (1 - rho**2) / abs(gamma)
            summary["period_closed_form"] = closed
            if summary["period"] is not None:
                summary["period_rel_err"] = abs(summary["period"] - closed) / closed
    run.json("summary.json", summary)
    return ok, {k: summary[k] for k in ("min_gap", "max_speed") if k in summary}


def cmd_twin_run(run: Run) -> tuple[bool, dict]:
    cfg = run.cfg
    cmap = _map(cfg)
    if cfg.vorticity.name == "single_vortex":
        raise ConfigError("twin runs need a vorticity density, not a single vortex", field="flow.vorticity")
    sampler = _sampler(cfg.vorticity)
    quad = _quadrature(cfg)
    cov = build_changevar(cmap)
    bracket = equivalence_bracket(cov, cfg.pairs, run.rng(5))
    steps = [cfg.dt, cfg.dt / 2] if cfg.dt_halving else [cfg.dt]
    etas = cfg.eta if cfg.perturbation == "jitter" else (0.0,)
    table = []
    ok = True
    traces = {}
    for dt in steps:
        every = int(round(cfg.record_interval / dt))
        ref = integrate(init_ensemble(cmap, sampler, quad), cfg.T, dt, record_every=every)
        for j, eta in enumerate(etas):
            tr = twin_run(
                cmap, sampler, quad, cfg.T, dt, cfg.perturbation, eta,
                rng=run.rng(100 + j), record_interval=cfg.record_interval,
                cov=cov, bracket=bracket, reference=ref,
            )
            traces[(dt, eta)] = tr
    for j, eta in enumerate(etas):
        tr = traces[(cfg.dt, eta)]
        tag = "resolution" if cfg.perturbation == "resolution" else f"eta{j}"
        run.csv(f"energy_{tag}.csv", ["t", "E1", "E2", "E"], zip(tr.times, tr.E1, tr.E2, tr.E))
        row = {"perturbation": cfg.perturbation, "eta": eta, **tr.summary()}
        if cfg.dt_halving:
            half = traces[(cfg.dt / 2, eta)]
            row["C_half_dt"] = half.C
            if tr.C is not None and half.C is not None:
                row["C_rel_change"] = _rel_change(tr.C, half.C)
                ok = ok and row["C_rel_change"] <= STABILITY_TOL
            row["equivalence_ok_half_dt"] = half.equivalence_ok() if not half.exact_zero else True
            ok = ok and row["equivalence_ok_half_dt"]
        if not tr.exact_zero:
            ok = ok and tr.equivalence_ok()
            if tr.envelope:
                ok = ok and tr.envelope["below_upper"] and tr.envelope["above_lower"]
        if run.strict and any(v is not None for v in tr.breaches.values()):
            ok = False
        table.append(row)
    run.json("twin_summary.json", {"map": cmap.label(), "bracket": bracket, "runs": table, "passed": ok})
    return ok, {"C": [r["C"] for r in table]}


def _osgood_draws(rng: np.random.Generator, count: int = 50) -> dict:
    worst_up, worst_lo = math.inf, math.inf
    ok = True
    for _ in range(count):
        y0 = 10 ** rng.uniform(-8, -1)
        c = rng.uniform(0.1, 3.0)
        sign = 1 if rng.uniform() < 0.5 else -1
        t = np.linspace(0, 1.0, 101)
        y = osgood_solution(y0, c, t, sign=sign)
        env = envelope_check(t, y, c, R=float(np.max(y)))
        ok = ok and env["below_upper"] and env["above_lower"]
        worst_up = min(worst_up, env["log_upper_margin"])
        worst_lo = min(worst_lo, env["log_lower_margin"])
    return {"draws": count, "inside": ok, "min_log_upper_margin": worst_up, "min_log_lower_margin": worst_lo}


def cmd_verify_lemmas(run: Run) -> tuple[bool, dict]:
    cfg = run.cfg
    cmap = _map(cfg)
    results: dict = {"map": cmap.label()}
    status: dict = {}

    rep = check_assumption(cmap, levels=cfg.levels)
    results["assumption"] = rep.to_dict()
    status["assumption"] = rep.passed or (not run.strict and "fail" not in rep.verdicts.values())

    # spectral identities on a seeded corpus
    corpus = _hhalf_corpus(run.rng(6))
    gaps = [abs(spectral.hhalf_integral(f) - spectral.hhalf_fourier(f)) / spectral.hhalf_fourier(f) for f in corpus]
    prod = [spectral.product_rule_residual(f) for f in corpus]
    expo = [spectral.exp_hhalf_ratio(f) for f in corpus]
    results["hhalf_formula"] = {"max_rel_gap": max(gaps), "max_product_rule_residual": max(prod), "functions": len(corpus)}
    results["exp_hhalf"] = {"max_ratio_to_bound": max(a / b for a, b in expo), "functions": len(corpus)}
    status["hhalf_formula"] = max(gaps) <= HHALF_REL_TOL and max(prod) <= PRODUCT_RULE_TOL
    status["exp_hhalf"] = all(a <= b for a, b in expo)

    # Osgood envelopes for the scalar model equation
    results["osgood"] = _osgood_draws(run.rng(7))
    status["osgood"] = results["osgood"]["inside"]

    # phi-log bound of the pair integral
    prng = run.rng(8)
    pts = np.sqrt(prng.uniform(0, 0.95, (6, 2))) * np.exp(1j * prng.uniform(0, 2 * math.pi, (6, 2)))
    pab = phiabest_check(pts, n=200_000)
    results["pair_integral"] = pab
    status["pair_integral"] = math.isfinite(pab["max_ratio"])

    if not status["assumption"]:
        results["skipped"] = "velocity and change-of-variable lemmas need a domain satisfying the assumption"
        results["status"] = status
        run.json("lemmas.json", results)
        return False, status

    if cfg.vorticity.name == "single_vortex":
        raise ConfigError("lemma checks need a vorticity density, not a single vortex", field="flow.vorticity")
    sampler = _sampler(cfg.vorticity)
    props = []
    for scale in (1, 2):
        quad = _quadrature(cfg, scale)
        ctx = context_from_samples(quad, cmap, sampler(quad.nodes))
        props.append(measure_btil_properties(ctx, run.rng(9)))
    stab = {}
    for key in ("sup_abs", "phi_lipschitz", "boundary_normal", "radial_decay"):
        a, b = props[0][key], props[1][key]
        tiny = ROUNDOFF_SCALE * max(props[0]["strength_scale"], 1e-300)
        stab[key] = {"h": a, "h_half": b, "rel_change": _rel_change(a, b), "roundoff_level": a <= tiny and b <= tiny}
    results["velocity"] = {"properties": stab}
    status["velocity"] = all(
        math.isfinite(v["h"]) and math.isfinite(v["h_half"]) and (v["rel_change"] <= STABILITY_TOL or v["roundoff_level"])
        for v in stab.values()
    )

    cov = build_changevar(cmap)
    bl = bilipschitz_constants(cov, max(cfg.pairs, 10_000), run.rng(10))
    est = verify_derivative_estimates(cov, max(cfg.pairs, 10_000), run.rng(11))
    results["change_of_variable"] = {"bilipschitz": bl, "estimates": est}
    status["change_of_variable"] = (not bl.flagged) and est["finite"]
    results["status"] = status
    run.json("lemmas.json", results)
    return all(status.values()), status


COMMANDS = {
    "check-domain": cmd_check_domain,
    "build-changevar": cmd_build_changevar,
    "simulate": cmd_simulate,
    "twin-run": cmd_twin_run,
    "verify-lemmas": cmd_verify_lemmas,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI experiment configuration")
    common.add_argument("--out", metavar="DIR", help=f"output directory (overrides ${OUT_ENV} and the config)")
    common.add_argument("--seed", type=int, metavar="U64", help="random seed (overrides the config)")
    common.add_argument("--strict", action="store_true", help="treat inconclusive or flagged results as failures")
    parser = argparse.ArgumentParser(prog="rough-euler", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "check-domain": "measure the regularity constants of the domain map",
        "build-changevar": "tabulate the change of variable and verify it",
        "simulate": "run the particle flow",
        "twin-run": "run perturbed twin flows and record separation energies",
        "verify-lemmas": "measure the velocity, change-of-variable and scalar estimates",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def _output_dir(args, cfg: ExperimentConfig) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get(OUT_ENV)
    if env:
        return Path(env)
    return Path(cfg.output)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer", field="--seed")
            cfg = ExperimentConfig(**{**cfg.__dict__, "seed": args.seed})
    except ConfigError as exc:
        print(f"rough-euler: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _output_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    run = Run(cfg, out, cfg.seed, args.strict, args.command)
    t0 = time.time()
    status = EXIT_OK
    note = ""
    try:
        passed, brief = COMMANDS[args.command](run)
        status = EXIT_OK if passed else EXIT_EXPECTED_FAILURE
    except ConfigError as exc:
        print(f"rough-euler: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (UnivalenceError, ConstructionError) as exc:
        status, brief, note = EXIT_EXPECTED_FAILURE, {}, f"{type(exc).__name__}: {exc}"
    except (ParticleEscapeError, NonConvergenceError, DomainViolationError, FloatingPointError) as exc:
        status, brief, note = EXIT_NUMERICAL, {}, f"{type(exc).__name__}: {exc}"
    manifest = {
        "command": args.command,
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "version": __version__,
        "exit_status": status,
        "note": note,
        "reports": sorted(run.files),
        "strict": args.strict,
        "wall_clock": {"started": t0, "seconds": time.time() - t0},
    }
    write_json(out / "manifest.json", manifest)
    line = {EXIT_OK: "pass", EXIT_EXPECTED_FAILURE: "expected failure", EXIT_NUMERICAL: "numerical abort"}[status]
    print(f"{args.command}: {line} {note}".rstrip())
    for k, v in brief.items():
        print(f"  {k}: {v}")
    print(f"  reports in {out}")
    return status


if __name__ == "__main__":
    raise SystemExit(main())
