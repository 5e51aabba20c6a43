import json

import numpy as np
import pytest

import cavityef.cli as cli
from cavityef.config import RunConfig, config_from_artifact, load_config, parse_config
from cavityef.efactor import PotentialCurve
from cavityef.errors import ConfigurationError, SolverError
from cavityef.output import CurveTable, format_value, read_table

SMALL = """
[model]
lambda_c = {lam}
omega_c = {omega}

[grid]
nx = 61
nq = 41

[solver]
k = 4

[figures]
couplings = 0.1:0.3767626
"""


def write_config(tmp_path, text=None, lam=0.1, omega=0.3767626, name="run.ini"):
    path = tmp_path / name
    path.write_text(text if text is not None else SMALL.format(lam=lam, omega=omega))
    return path


def run_cli(args, capsys):
    code = cli.main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_config_round_trip():
    cfg = RunConfig()
    again = parse_config(cfg.to_ini())
    assert again == cfg
    assert again.sha256() == cfg.sha256()
    assert again.to_ini() == cfg.to_ini()


def test_config_defaults_and_overrides(tmp_path):
    cfg = load_config(write_config(tmp_path))
    assert cfg.grid.nx == 61 and cfg.model.lambda_c == 0.1
    assert cfg.couplings == ((0.1, 0.3767626),)
    moved = cfg.with_overrides(task="approx", output_dir=str(tmp_path / "o"))
    assert moved.task == "approx" and moved.output_dir.endswith("o")
    with pytest.raises(ConfigurationError):
        cfg.with_overrides(task="plot")


@pytest.mark.parametrize(
    "text",
    [
        "[model]\nlambda_c = 0.1\n[mystery]\nx = 1\n",
        "[model]\nspin = 0.5\n",
        "[grid]\nnx = 12.5\n",
        "[grid]\nnx = 3\n",
        "[model]\nomega_c = -1\n",
        "[solver]\nmethod = magic\n",
        "[figures]\ncouplings = 0.1\n",
        "no section header\n",
    ],
)
def test_bad_configs_are_rejected(text):
    with pytest.raises(ConfigurationError):
        parse_config(text)


def test_malformed_config_exits_2_without_output(tmp_path, capsys):
    path = write_config(tmp_path, "[model]\nspin = 0.5\n")
    out = tmp_path / "out"
    code, stdout, err = run_cli(["solve", "--config", str(path), "--out", str(out)], capsys)
    assert code == 2
    assert not out.exists()
    record = json.loads(err.strip().splitlines()[-1])
    assert record["kind"] == "configuration" and record["exit_code"] == 2


def test_missing_config_file_exits_2(tmp_path, capsys):
    code, _, err = run_cli(["solve", "--config", str(tmp_path / "none.ini")], capsys)
    assert code == 2 and json.loads(err)["status"] == "error"


def test_solve_writes_spectrum_and_densities(tmp_path, capsys):
    out = tmp_path / "out"
    code, stdout, _ = run_cli(["solve", "--config", str(write_config(tmp_path)), "--out", str(out)], capsys)
    assert code == 0
    assert sorted(p.name for p in out.iterdir()) == ["densities.csv", "spectrum.csv"]
    spectrum = read_table(out / "spectrum.csv")
    assert np.all(np.diff(spectrum["energy"]) > 0)
    assert np.all(spectrum["residual"] <= 1e-9)
    dens = read_table(out / "densities.csv")
    assert dens["x"].size == 61
    for name in ("uncoupled_0", "coupled_0", "coupled_3"):
        assert np.sum(dens[name]) * (dens["x"][1] - dens["x"][0]) == pytest.approx(1.0)


def test_artifact_embeds_its_configuration(tmp_path, capsys):
    out = tmp_path / "out"
    cli.main(["solve", "--config", str(write_config(tmp_path)), "--out", str(out)])
    capsys.readouterr()
    recovered = config_from_artifact(out / "spectrum.csv")
    assert recovered == load_config(tmp_path / "run.ini").with_overrides("solve", str(out))
    header = (out / "spectrum.csv").read_text().splitlines()
    assert header[0].startswith("# cavityef ")
    assert f"# config_sha256: {recovered.sha256()}" in header


def test_resonant_solve_has_small_polariton_gap(tmp_path, capsys):
    text = "[model]\nlambda_c = 0.5\nomega_c = 0.39495042\n"
    out = tmp_path / "out"
    code, _, _ = run_cli(["solve", "--config", str(write_config(tmp_path, text)), "--out", str(out)], capsys)
    assert code == 0
    spectrum = read_table(out / "spectrum.csv")
    assert spectrum["energy"][2] - spectrum["energy"][1] < 1e-2


def test_deterministic_runs_are_byte_identical(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    args = ["factorize", "--config", str(cfg), "--out", str(out), "--deterministic"]
    assert cli.main(args) == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert cli.main(args) == 0
    capsys.readouterr()
    assert "potential_state0.csv" in first and "excited_potentials.csv" in first
    assert {p.name: p.read_bytes() for p in out.iterdir()} == first


def test_compare_output_layout(tmp_path, capsys):
    out = tmp_path / "out"
    code, _, _ = run_cli(["compare", "--config", str(write_config(tmp_path)), "--out", str(out)], capsys)
    assert code == 0
    table = read_table(out / "compare_potentials.csv")
    expected = {"x", "bare_V"} | {
        f"{kind}_{b}" for kind in ("exact_total", "approx_total", "mask_exact", "mask_approx") for b in ("minus", "plus")
    }
    assert set(table) == expected
    assert table["x"].size == 61
    summary = read_table(out / "compare_summary.csv")
    assert list(summary["branch"]) == ["minus", "plus"]
    assert list(summary["state"]) == [1.0, 2.0]


def test_approx_peak_heights_approach_the_limit(tmp_path, capsys):
    out = tmp_path / "out"
    code, _, _ = run_cli(["approx", "--config", str(write_config(tmp_path)), "--out", str(out)], capsys)
    assert code == 0
    table = read_table(out / "peak_heights.csv")
    assert table["lambda_c"].size == 101
    limit = 2.35**2 * 1.6**2 / 2
    assert table["height_minus"][0] == pytest.approx(limit, rel=1e-12)
    assert table["height_minus"][-1] == pytest.approx(limit, rel=1e-3)
    assert np.all(table["height_minus"] <= table["height_plus"] + 1e-12)
    polaritons = read_table(out / "approx_polaritons.csv")
    assert list(polaritons["branch"]) == ["minus", "plus"]
    assert polaritons["energy"][0] < polaritons["energy"][1]


def test_bracketing_failure_exits_4_with_trace(tmp_path, capsys):
    text = SMALL.format(lam=0.1, omega=0.3767626) + "\n[resonance]\nlambda_values = 0.1\nbracket = 0.42, 0.55\n"
    out = tmp_path / "out"
    code, _, err = run_cli(["resonance", "--config", str(write_config(tmp_path, text)), "--out", str(out)], capsys)
    assert code == 4
    record = json.loads(err.strip().splitlines()[-1])
    assert record["kind"] == "bracketing" and len(record["trace"]) == 11
    assert not out.exists()


def test_solver_failure_exits_3(tmp_path, capsys, monkeypatch):
    def fail(*args, **kwargs):
        raise SolverError("forced", {"method": "lanczos"})

    monkeypatch.setattr(cli, "solve_lowest", fail)
    out = tmp_path / "out"
    code, _, err = run_cli(["solve", "--config", str(write_config(tmp_path)), "--out", str(out)], capsys)
    assert code == 3
    assert json.loads(err)["diagnostics"] == {"method": "lanczos"}
    assert not out.exists()


def test_unwritable_output_exits_5(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run_cli(["solve", "--config", str(write_config(tmp_path)), "--out", str(blocker)], capsys)
    assert code == 5 and json.loads(err)["kind"] == "io"


@pytest.mark.parametrize("value", ["zero", "0", "-2"])
def test_bad_thread_setting_exits_2(tmp_path, capsys, monkeypatch, value):
    monkeypatch.setenv(cli.THREADS_ENV, value)
    code, _, _ = run_cli(["solve", "--config", str(write_config(tmp_path)), "--out", str(tmp_path / "o")], capsys)
    assert code == 2


def test_thread_limit_values(monkeypatch):
    monkeypatch.delenv(cli.THREADS_ENV, raising=False)
    assert cli.thread_limit(False) is None
    assert cli.thread_limit(True) == 1
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert cli.thread_limit(False) == 3


def test_fully_masked_curve_is_written_with_sentinels():
    x = np.linspace(-1, 1, 5)
    curve = PotentialCurve(x, x**2, x, x, np.zeros(5, dtype=bool), warnings=["all nodes masked"])
    table = CurveTable.from_curve(curve)
    text = table.render(RunConfig())
    assert "# warnings: 1" in text and "# warning: all nodes masked" in text
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert body[0] == "x,bare_V,eph_em,eph_kin,total,density,mask"
    assert len(body) == 6
    assert all(ln.split(",")[2:5] == ["nan", "nan", "nan"] for ln in body[1:])


def test_number_format_round_trips():
    for v in (0.1, 1 / 3, -2.5e-300, 7.0688):
        assert float(format_value(v)) == v
    assert format_value(np.nan) == "nan" and format_value(True) == "1" and format_value(3) == "3"
