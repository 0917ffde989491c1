import csv
import json

import pytest
import yaml
from click.testing import CliRunner

from cta_lab.cli import ConfigError, load_config, main, run


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_unknown_subcommand_prints_usage():
    res = CliRunner().invoke(main, ["nonsense"])
    assert res.exit_code != 0
    assert "Usage" in res.output


def test_help_lists_subcommands():
    res = CliRunner().invoke(main, ["--help"])
    assert res.exit_code == 0
    for name in ("quasimode", "forward", "linearize", "identity", "wkb", "vectors", "recover", "boundary",
                 "carleman", "all", "default-config"):
        assert name in res.output


def test_default_config_round_trips():
    res = CliRunner().invoke(main, ["default-config"])
    assert res.exit_code == 0
    assert yaml.safe_load(res.output) == load_config(None)


def test_unknown_key_reports_line(tmp_path):
    p = _write(tmp_path, "seed: 1\ngrid:\n  n: 8\n  bogus: 3\n")
    with pytest.raises(ConfigError, match=r"line 4: unknown key 'grid.bogus'"):
        load_config(p)
    assert run("vectors", p, out=tmp_path / "o") == 2


def test_bad_formula_reports_line(tmp_path):
    p = _write(tmp_path, "potentials:\n  q1: \"sqrt(x1\"\n")
    with pytest.raises(ConfigError, match="line 2"):
        load_config(p)


def test_yaml_syntax_error_exits_2(tmp_path):
    p = _write(tmp_path, "grid: [1, 2\n")
    res = CliRunner().invoke(main, ["vectors", "--config", str(p), "--out", str(tmp_path / "o")])
    assert res.exit_code == 2


def test_geometry_error_is_config_error(tmp_path):
    p = _write(tmp_path, "geometry:\n  chart: perturbed-square\n  epsilon: -3\n")
    assert run("vectors", p, out=tmp_path / "o") == 2


def test_vectors_csv_reproduces_d12(tmp_path):
    p = _write(tmp_path, "vectors:\n  deltas: [0.1, 0.05, 0.025]\n")
    res = CliRunner().invoke(main, ["vectors", "--config", str(p), "--out", str(tmp_path / "o")])
    rows = list(csv.DictReader(open(tmp_path / "o" / "vectors.csv")))
    d12 = {float(r["delta"]): float(r["value"]) for r in rows if r["name"] == "D12"}
    assert d12 == pytest.approx({0.1: 0.2, 0.05: 0.1, 0.025: 0.05}, abs=1e-12)
    assert "vectors.D12_equals_2delta: pass" in res.output
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert "vectors.csv" in man["files"]
    assert man["steps"]["vectors"]["checks"]["D12_equals_2delta"] is True


def test_env_overrides(tmp_path, monkeypatch):
    p = _write(tmp_path, "boundary:\n  n: 8\n  eps0: [0.01]\n")
    monkeypatch.setenv("CTA_LAB_OUT", str(tmp_path / "env-out"))
    monkeypatch.setenv("CTA_LAB_JOBS", "2")
    assert run("boundary", p) == 0
    assert (tmp_path / "env-out" / "boundary.csv").exists()
    # explicit flag beats the environment
    assert run("boundary", p, out=tmp_path / "flag-out") == 0
    assert (tmp_path / "flag-out" / "manifest.json").exists()


def test_manifest_reproducible_across_jobs(tmp_path):
    p = _write(tmp_path, "grid:\n  n: 8\nforward:\n  m: 2\n")
    run("forward", p, out=tmp_path / "a", jobs=1, seed=5)
    run("forward", p, out=tmp_path / "b", jobs=3, seed=5)
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma == mb
    assert ma["seed"] == 5


def test_forward_cache_hit_on_rerun(tmp_path):
    p = _write(tmp_path, "grid:\n  n: 8\n")
    out = tmp_path / "o"
    assert run("forward", p, out=out) == 0
    first = (out / "dn_map.csv").read_bytes()
    assert list((out / "cache").rglob("*.bin"))
    assert run("forward", p, out=out) == 0
    assert (out / "dn_map.csv").read_bytes() == first


def test_identity_default_potentials_order2(tmp_path):
    p = _write(tmp_path, "identity:\n  orders: [2]\n")
    out = tmp_path / "o"
    assert run("identity", p, out=out) == 0
    rows = list(csv.DictReader(open(out / "identity.csv")))
    assert int(rows[0]["grid"]) == 32
    assert float(rows[0]["rel_discrepancy"]) <= 5e-2


def test_identity_rejects_variable_potential(tmp_path):
    p = _write(tmp_path, "grid:\n  n: 8\npotentials:\n  V: \"1 + x1\"\n")
    assert run("identity", p, out=tmp_path / "o") == 2


def test_too_few_deltas_is_config_error(tmp_path):
    p = _write(tmp_path, "vectors:\n  deltas: [0.1, 0.05]\n")
    assert run("vectors", p, out=tmp_path / "o") == 2


def test_threshold_failure_exits_4(tmp_path):
    # a coarse sweep cannot reach the asymptotic orders
    p = _write(tmp_path, "vectors:\n  deltas: [0.8, 0.4, 0.2]\n")
    assert run("vectors", p, out=tmp_path / "o") == 4
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["steps"]["vectors"]["status"] == "threshold-missed"


def test_newton_divergence_exits_3(tmp_path):
    p = _write(tmp_path, "grid:\n  n: 8\npotentials:\n  q1: \"-1\"\nforward:\n  boundary_data: \"200\"\n")
    assert run("forward", p, out=tmp_path / "o") == 3
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert man["steps"]["forward"]["status"] == "numerical-failure"
