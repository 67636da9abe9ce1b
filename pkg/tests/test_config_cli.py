import json
from pathlib import Path

import pytest

from rough_euler.cli import EXIT_CONFIG, EXIT_EXPECTED_FAILURE, EXIT_NUMERICAL, EXIT_OK, main
from rough_euler.config import ExperimentConfig, load_config, parse_config, parse_vorticity
from rough_euler.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = """
[domain]
family = {family}
[quadrature]
n_r = 8
n_theta = 16
[flow]
dt = 1e-2
T = 0.05
vorticity = {vorticity}
tracers = 10
[perturbation]
eta = 1e-6
dt_halving = false
[checks]
pairs = 2000
levels = 3
"""


def write_config(tmp_path, family="polynomial(0.3, 2)", vorticity="patch(0.3, 0.2, 1.0)", extra=""):
    p = tmp_path / "run.ini"
    p.write_text(SMALL.format(family=family, vorticity=vorticity) + extra)
    return p


def run_cli(tmp_path, command, cfg, *more):
    out = tmp_path / command
    code = main([command, "--config", str(cfg), "--out", str(out), *more])
    return code, out


# -- config ----------------------------------------------------------------------------------


def test_empty_config_gives_defaults():
    assert parse_config("") == ExperimentConfig()


def test_defaults():
    cfg = load_config(None)
    assert cfg.family == "polynomial(0.3, 2)"
    assert cfg.eta == (1e-8, 1e-6, 1e-4)
    assert cfg.vorticity.name == "patch"


def test_parse_full_config(tmp_path):
    cfg = load_config(write_config(tmp_path))
    assert (cfg.n_r, cfg.n_theta, cfg.dt, cfg.T, cfg.tracers) == (8, 16, 1e-2, 0.05, 10)
    assert cfg.eta == (1e-6,)
    assert not cfg.dt_halving
    assert cfg.vorticity.args == (0.3, 0.2, 1.0)


def test_example_config_documents_defaults():
    cfg = load_config(CONFIGS / "example.ini")
    assert cfg == ExperimentConfig()


@pytest.mark.parametrize("name", ["example.ini", "solid_rotation.ini", "single_vortex.ini"])
def test_shipped_configs_parse(name):
    load_config(CONFIGS / name)


def test_inline_comments_and_case():
    cfg = parse_config("[Flow]\nDT = 0.005  # step\nT = 0.5\n")
    assert cfg.dt == 0.005


@pytest.mark.parametrize(
    "text, field, line",
    [
        ("[flow]\ndt = -1\n", "flow.dt", 2),
        ("[flow]\n\ndt = 0.01\nspeed = 3\n", "flow.speed", 4),
        ("[nowhere]\nx = 1\n", "nowhere", 1),
        ("[quadrature]\nn_r = 2.5\n", "quadrature.n_r", 2),
        ("[domain]\nfamily = blob(1)\n", "domain.family", 2),
        ("[flow]\nvorticity = swirl(1)\n", "flow.vorticity", 2),
        ("[perturbation]\nkind = shake\n", "perturbation.kind", 2),
        ("[perturbation]\neta = 1e-6 -1\n", "perturbation.eta", 2),
        ("[flow]\ndt = 0.003\nT = 0.5\n", "flow.t", 3),
        ("[flow]\ndt = 0.002\nrecord_interval = 0.003\n", "flow.record_interval", 3),
        ("[flow]\ndt = 0.01\ndt = 0.02\n", "flow.dt", 3),
    ],
)
def test_config_errors_name_field_and_line(text, field, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.field == field
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


def test_key_outside_section():
    with pytest.raises(ConfigError) as exc:
        parse_config("dt = 1\n")
    assert exc.value.line == 1


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


@pytest.mark.parametrize(
    "text",
    ["patch(0.3, -0.2, 1)", "patch(0.3, 0.2)", "single_vortex(1.2, 1)", "two_patch(0,0,1,0,0,1)", "constant(1, 2)"],
)
def test_bad_vorticity(text):
    with pytest.raises(ValueError):
        parse_vorticity(text)


def test_vorticity_presets():
    assert parse_vorticity("constant").args == (1.0,)
    assert parse_vorticity("patch(0.1+0.2j, 0.2, 1)").args[0] == 0.1 + 0.2j
    assert parse_vorticity("zero").args == ()
    v = parse_vorticity("single_vortex(0.5, 2.0)")
    assert parse_vorticity(v.text()) == v


def test_digest_tracks_content():
    a = ExperimentConfig()
    assert a.digest() == ExperimentConfig().digest()
    assert a.digest() != ExperimentConfig(seed=1).digest()


# -- exit codes and output directory -----------------------------------------------------------


def test_config_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[flow]\ndt = zero\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "flow.dt" in capsys.readouterr().err


def test_bad_seed_exit(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "-3"]) == EXIT_CONFIG


def test_out_flag_beats_environment(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, vorticity="zero")
    monkeypatch.setenv("ROUGH_EULER_OUT", str(tmp_path / "env"))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "flag")]) == EXIT_OK
    assert (tmp_path / "flag" / "manifest.json").exists()
    assert not (tmp_path / "env").exists()


def test_environment_beats_config(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, vorticity="zero", extra=f"[output]\ndirectory = {tmp_path / 'cfg'}\n")
    monkeypatch.setenv("ROUGH_EULER_OUT", str(tmp_path / "env"))
    assert main(["simulate", "--config", str(cfg)]) == EXIT_OK
    assert (tmp_path / "env" / "manifest.json").exists()
    assert not (tmp_path / "cfg").exists()


def test_config_directory_used_last(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, vorticity="zero", extra=f"[output]\ndirectory = {tmp_path / 'cfg'}\n")
    monkeypatch.delenv("ROUGH_EULER_OUT", raising=False)
    assert main(["simulate", "--config", str(cfg)]) == EXIT_OK
    assert (tmp_path / "cfg" / "manifest.json").exists()


def test_seed_flag_recorded(tmp_path):
    cfg = write_config(tmp_path, vorticity="zero")
    code, out = run_cli(tmp_path, "simulate", cfg, "--seed", "17")
    assert code == EXIT_OK
    assert json.loads((out / "manifest.json").read_text())["config"]["seed"] == 17


def test_particle_escape_is_numerical_abort(tmp_path):
    # a vortex next to the wall with a huge step jumps out of the disc
    cfg = write_config(tmp_path, vorticity="single_vortex(0.999, 50.0)")
    code, out = run_cli(tmp_path, "simulate", cfg)
    assert code == EXIT_NUMERICAL
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_status"] == EXIT_NUMERICAL
    assert "ParticleEscapeError" in man["note"]


def test_non_univalent_map_expected_failure(tmp_path):
    cfg = write_config(tmp_path, family="polynomial(0.6, 2)")
    code, _ = run_cli(tmp_path, "check-domain", cfg)
    assert code == EXIT_EXPECTED_FAILURE


# -- subcommands ---------------------------------------------------------------------------------


def test_check_domain_identity(tmp_path):
    code, out = run_cli(tmp_path, "check-domain", write_config(tmp_path, family="identity"))
    assert code == EXIT_OK
    rep = json.loads((out / "assumption.json").read_text())["assumption"]
    assert (rep["c0"], rep["c1"], rep["c2"], rep["c3"]) == (1.0, 1.0, 0.0, 0.0)
    man = json.loads((out / "manifest.json").read_text())
    assert set(man["reports"]) == {"assumption.json", "assumption_radii.csv"}
    assert len(man["config_sha256"]) == 64


def test_check_domain_rough_lacunary_fails(tmp_path):
    code, out = run_cli(tmp_path, "check-domain", write_config(tmp_path, family="lacunary(0.25, 0.5, 14)"))
    assert code == EXIT_EXPECTED_FAILURE
    rep = json.loads((out / "assumption.json").read_text())
    assert "hhalf_trace" in rep["failed_conditions"]


def test_build_changevar_identity(tmp_path):
    code, out = run_cli(tmp_path, "build-changevar", write_config(tmp_path, family="identity"))
    assert code == EXIT_OK
    ver = json.loads((out / "verification.json").read_text())
    assert ver["checks"]["identity_err"] == 0.0
    assert ver["bilipschitz"]["lower"] == pytest.approx(1.0, abs=1e-9)


def test_build_changevar_quadratic(tmp_path):
    code, out = run_cli(tmp_path, "build-changevar", write_config(tmp_path))
    assert code == EXIT_OK
    ver = json.loads((out / "verification.json").read_text())
    assert ver["checks"]["jacobian_rel_err"] < 1e-5
    header = (out / "changevar_table.csv").read_text().splitlines()[0]
    assert header == "r,theta,G,c,L"


def test_build_changevar_strict_rejects_rough_map(tmp_path):
    cfg = write_config(tmp_path, family="lacunary(0.25, 0.5, 14)")
    code, out = run_cli(tmp_path, "build-changevar", cfg, "--strict")
    assert code == EXIT_EXPECTED_FAILURE
    assert not json.loads((out / "verification.json").read_text())["built"]


def test_simulate_zero_vorticity_static(tmp_path):
    code, out = run_cli(tmp_path, "simulate", write_config(tmp_path, vorticity="zero"))
    assert code == EXIT_OK
    rows = (out / "trajectory.csv").read_text().splitlines()[1:]
    first = {}
    for row in rows:
        t, k, re_, im = row.split(",")
        first.setdefault(k, (re_, im))
        assert first[k] == (re_, im)


def test_simulate_single_vortex_period(tmp_path):
    # identity map, period 4 pi^2 (1 - 0.25) / gamma = 0.5 for gamma = 6 pi^2
    extra = "[flow]\n"
    cfg = write_config(tmp_path, family="identity", vorticity="single_vortex(0.5, 59.21762640653615)")
    text = cfg.read_text().replace("dt = 1e-2", "dt = 1e-3").replace("T = 0.05", "T = 0.6").replace("tracers = 10", "tracers = 0")
    cfg.write_text(text + extra.replace("[flow]\n", ""))
    code, out = run_cli(tmp_path, "simulate", cfg)
    assert code == EXIT_OK
    s = json.loads((out / "summary.json").read_text())
    assert s["period_closed_form"] == pytest.approx(0.5, rel=1e-12)
    assert s["period_rel_err"] < 5e-3


def test_simulate_patch_reports(tmp_path):
    code, out = run_cli(tmp_path, "simulate", write_config(tmp_path))
    assert code == EXIT_OK
    s = json.loads((out / "summary.json").read_text())
    assert s["contained"]
    assert s["round_trip_err"] < 1e-4
    assert {"patch", "support_patch"} <= set(s)
    assert (out / "patch_area.csv").read_text().startswith("t,patch,area,drift,inverted")


def test_twin_run_zero_eta(tmp_path):
    cfg = write_config(tmp_path)
    cfg.write_text(cfg.read_text().replace("eta = 1e-6", "eta = 0"))
    code, out = run_cli(tmp_path, "twin-run", cfg)
    assert code == EXIT_OK
    s = json.loads((out / "twin_summary.json").read_text())
    assert s["runs"][0]["exact_zero"]
    assert s["runs"][0]["C"] is None


def test_twin_run_sweep(tmp_path):
    cfg = write_config(tmp_path)
    cfg.write_text(cfg.read_text().replace("eta = 1e-6", "eta = 1e-8, 1e-6, 1e-4"))
    code, out = run_cli(tmp_path, "twin-run", cfg)
    s = json.loads((out / "twin_summary.json").read_text())
    assert len(s["runs"]) == 3
    assert all(r["C"] is not None for r in s["runs"])
    assert {"energy_eta0.csv", "energy_eta1.csv", "energy_eta2.csv"} <= {p.name for p in out.iterdir()}
    assert code in (EXIT_OK, EXIT_EXPECTED_FAILURE)
    assert code == (EXIT_OK if s["passed"] else EXIT_EXPECTED_FAILURE)


def test_twin_run_breach_flagged(tmp_path):
    cfg = write_config(tmp_path)
    cfg.write_text(cfg.read_text().replace("eta = 1e-6", "eta = 0.2"))
    code, out = run_cli(tmp_path, "twin-run", cfg, "--strict")
    assert code == EXIT_EXPECTED_FAILURE
    run = json.loads((out / "twin_summary.json").read_text())["runs"][0]
    assert run["breaches"]["separation_1_10"] == 0.0


def test_twin_run_rejects_single_vortex(tmp_path):
    code, _ = run_cli(tmp_path, "twin-run", write_config(tmp_path, vorticity="single_vortex(0.5, 1.0)"))
    assert code == EXIT_CONFIG


def test_verify_lemmas_identity(tmp_path):
    # a patch away from the wall; with constant vorticity the sampled ratios
    # measure lattice noise at the circle and halve with h
    cfg = write_config(tmp_path, family="identity")
    cfg.write_text(cfg.read_text().replace("n_r = 8", "n_r = 32").replace("n_theta = 16", "n_theta = 32"))
    code, out = run_cli(tmp_path, "verify-lemmas", cfg)
    rep = json.loads((out / "lemmas.json").read_text())
    assert code == EXIT_OK, rep["status"]
    assert all(rep["status"].values())


def test_verify_lemmas_quadratic_records_ratios(tmp_path):
    cfg = write_config(tmp_path)
    cfg.write_text(cfg.read_text().replace("n_r = 8", "n_r = 32").replace("n_theta = 16", "n_theta = 32"))
    code, out = run_cli(tmp_path, "verify-lemmas", cfg)
    rep = json.loads((out / "lemmas.json").read_text())
    assert code == EXIT_OK, rep["status"]
    props = rep["velocity"]["properties"]
    assert props["sup_abs"]["h"] == pytest.approx(0.157, rel=0.05)
    assert all(v["rel_change"] <= 0.2 or v["roundoff_level"] for v in props.values())
    assert rep["change_of_variable"]["bilipschitz"]["lower"] > 0


def test_verify_lemmas_rough_map(tmp_path):
    code, out = run_cli(tmp_path, "verify-lemmas", write_config(tmp_path, family="lacunary(0.25, 0.5, 14)"))
    assert code == EXIT_EXPECTED_FAILURE
    rep = json.loads((out / "lemmas.json").read_text())
    assert not rep["status"]["assumption"]
    assert "skipped" in rep


# -- determinism ----------------------------------------------------------------------------------


@pytest.mark.parametrize("command", ["simulate", "twin-run"])
def test_byte_identical_reruns(tmp_path, command):
    cfg = write_config(tmp_path)
    a = tmp_path / "a"
    b = tmp_path / "b"
    main([command, "--config", str(cfg), "--out", str(a), "--seed", "5"])
    main([command, "--config", str(cfg), "--out", str(b), "--seed", "5"])
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        if name == "manifest.json":
            ma = json.loads((a / name).read_text())
            mb = json.loads((b / name).read_text())
            ma.pop("wall_clock")
            mb.pop("wall_clock")
            assert ma == mb
        else:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
