import json

import pytest

from stablelab.cli import THREADS_ENV, resolve_config, run
from stablelab.stable_core import ConfigError


def read_all(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "manifest.json"}


@pytest.fixture
def sim_cfg(tmp_path):
    p = tmp_path / "sim.toml"
    p.write_text("T = 0.05\ndt = 1e-3\nn_paths = 3\nrecord_every = 5\n")
    return p


def test_simulate_writes_tables_and_manifest(tmp_path, sim_cfg):
    out = tmp_path / "a"
    assert run(["simulate", "--config", str(sim_cfg), "--seed", "2", "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["seed"] == 2 and man["subcommand"] == "simulate"
    assert sorted(man["outputs"]) == ["paths.csv", "summary.json"]


def test_rerun_is_byte_identical(tmp_path, sim_cfg):
    for name in ("a", "b"):
        assert run(["simulate", "--config", str(sim_cfg), "--seed", "5", "--out", str(tmp_path / name)]) == 0
    assert run(["simulate", "--config", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "c")]) == 0
    assert read_all(tmp_path / "a") == read_all(tmp_path / "b") == read_all(tmp_path / "c")


def test_json_format(tmp_path, sim_cfg):
    out = tmp_path / "j"
    assert run(["simulate", "--config", str(sim_cfg), "--format", "json", "--out", str(out)]) == 0
    assert json.loads((out / "paths.json").read_text())["columns"] == ["path_id", "t", "X", "A"]


def test_config_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("alpha = 2.5\n")
    assert run(["potential", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    bad.write_text("nonsense = 1\n")
    assert run(["potential", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert run(["potential", "--format", "xml", "--out", str(tmp_path / "o")]) == 2
    assert run(["potential", "--config", str(tmp_path / "missing.toml")]) == 2


def test_non_contraction_exit_3(tmp_path):
    cfg = tmp_path / "p.toml"
    cfg.write_text("lam = 0.01\n[measure]\natoms = [{x = -0.1, w = 3.0}, {x = 0.1, w = -3.0}]\n")
    assert run(["potential", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_kato_check_lebesgue(tmp_path, capsys):
    out = tmp_path / "k"
    assert run(["kato-check", "--out", str(out)]) == 0
    assert "PASS" in capsys.readouterr().out


def test_zvonkin_picks_lambda(tmp_path):
    out = tmp_path / "z"
    assert run(["zvonkin", "--out", str(out)]) == 0
    assert (out / "zvonkin.csv").exists()


def test_sharpness_summary(tmp_path):
    out = tmp_path / "s"
    assert run(["sharpness", "--out", str(out)]) == 0
    assert len(list(out.iterdir())) >= 2


def test_resolve_config_table_and_types(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("[simulate]\nT = 2\n")
    assert resolve_config("simulate", p)["T"] == 2.0
    p.write_text('T = "long"\n')
    with pytest.raises(ConfigError):
        resolve_config("simulate", p)
    with pytest.raises(ConfigError):
        resolve_config("kato-check", None, seed=1)


def test_threads_env(monkeypatch, tmp_path):
    monkeypatch.setenv(THREADS_ENV, "many")
    assert run(["potential", "--out", str(tmp_path / "o")]) == 2
