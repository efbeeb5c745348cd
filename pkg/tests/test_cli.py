import csv
import json

import numpy as np
import pytest

from fbmlab import cli, errors


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = cli.main([*argv, "--out", str(out), "--workers", "1"])
    return code, out


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_fbm_split_at_half_has_zero_history(tmp_path):
    code, out = run(tmp_path, "fbm", "--hurst", "0.5", "--n", "64", "--paths", "2", "--split")
    assert code == 0
    rows = read_rows(out / "fbm.csv")
    assert len(rows) == 2 * 65
    assert all(float(r["Bbar_1"]) == 0.0 for r in rows)
    man = json.loads((out / "manifest.json").read_text())
    assert man["derived"]["alpha_H"] == pytest.approx(1.0)
    assert man["outputs"] == ["fbm.csv"]


def test_couple_without_singular_drift_recovers_rate(tmp_path):
    code, out = run(tmp_path, "couple", "--hurst", "0.3", "--T", "5", "--ensemble", "5")
    assert code == 0
    summary = json.loads((out / "coupling.json").read_text())
    assert summary["beta_hat"] == pytest.approx(-1.0, abs=1e-6)


def test_rerun_is_byte_identical(tmp_path):
    code, out = run(tmp_path, "fbm", "--hurst", "0.7", "--n", "128", "--paths", "3", "--seed", "11")
    assert code == 0
    assert cli.main(["rerun", str(out / "manifest.json"), "--out", str(tmp_path / "again")]) == 0
    assert (out / "fbm.csv").read_bytes() == (tmp_path / "again" / "fbm.csv").read_bytes()


def test_config_file_then_set_then_flag(tmp_path):
    conf = tmp_path / "run.cfg"
    conf.write_text("# fbm settings\nhurst = 0.6\nn = 32\npaths = 1\nseed = 4\n")
    cfg = cli.build_config("fbm", [cli.read_config_file(conf), {"seed": "5"}, {"n": "16"}])
    assert cfg.get("hurst") == 0.6 and cfg.get("seed") == 5 and cfg.get("n") == 16
    code, out = run(tmp_path, "fbm", "--config", str(conf), "--set", "seed=5", "--n", "16")
    assert code == 0
    assert json.loads((out / "manifest.json").read_text())["config"]["seed"] == 5


@pytest.mark.parametrize("argv", [
    ["fbm", "--hurst", "1.2"],
    ["fbm", "--set", "colour=blue"],
    ["fbm", "--set", "n=2.5"],
    ["verify", "--prop", "reg9"],
    ["simulate", "--set", "h=-0.1"],
])
def test_configuration_errors_exit_3(tmp_path, argv):
    code, _ = run(tmp_path, *argv)
    assert code == cli.EXIT_CONFIG


def test_divergence_exits_2(tmp_path):
    code, _ = run(tmp_path, "simulate", "--kappa1", "-1000", "--h", "0.01", "--T", "10", "--ensemble", "1")
    assert code == cli.EXIT_DIVERGENCE


def test_unknown_key_raises_config_error():
    with pytest.raises(errors.ConfigError):
        cli.build_config("couple", [{"hurst": "0.5", "paths": "3"}])


def test_csv_floats_round_trip(tmp_path):
    path = tmp_path / "x.csv"
    vals = [0.1, 1 / 3, 2.0 ** -50, 12345.678901234567]
    cli.write_csv(path, ["v"], ([v] for v in vals))
    assert [float(r["v"]) for r in read_rows(path)] == vals


def test_plot_is_rendered_from_csv(tmp_path):
    code, out = run(tmp_path, "couple", "--T", "2", "--ensemble", "3", "--plot")
    assert code == 0
    svg = (out / "coupling.svg").read_text()
    assert svg.startswith("<svg") or "<svg" in svg[:200]
    assert json.loads((out / "manifest.json").read_text())["plots"] == ["coupling.svg"]


def test_verify_subcommand_writes_fit(tmp_path):
    code, out = run(tmp_path, "verify", "--prop", "reg1", "--hurst", "0.25", "--gamma", "-1", "--n", "200",
                    "--set", "n_sub=128")
    assert code == 0
    summary = json.loads((out / "verify_reg1.json").read_text())
    assert summary["predicted_exponent"] == pytest.approx(0.75)
    rows = read_rows(out / "verify_reg1.csv")
    assert np.all(np.diff([float(r["lag"]) for r in rows]) > 0)


def test_results_do_not_depend_on_worker_count(tmp_path):
    argv = ["fbm", "--hurst", "0.35", "--n", "256", "--paths", "8", "--seed", "3"]
    assert cli.main([*argv, "--out", str(tmp_path / "one"), "--workers", "1"]) == 0
    assert cli.main([*argv, "--out", str(tmp_path / "four"), "--workers", "4"]) == 0
    assert (tmp_path / "one" / "fbm.csv").read_bytes() == (tmp_path / "four" / "fbm.csv").read_bytes()


def test_environment_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("FBMLAB_OUT", str(tmp_path / "env_out"))
    monkeypatch.setenv("FBMLAB_THREADS", "2")
    assert cli.main(["fbm", "--n", "16", "--paths", "1"]) == 0
    assert (tmp_path / "env_out" / "manifest.json").exists()
    monkeypatch.setenv("FBMLAB_THREADS", "many")
    assert cli.main(["fbm", "--n", "16", "--paths", "1"]) == cli.EXIT_CONFIG
