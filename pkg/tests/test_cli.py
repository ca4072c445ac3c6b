import json
import math
from pathlib import Path

import numpy as np
import pytest

from openrg.cli import main
from openrg.config import ConfigError, build_config, load_config
from openrg.report import csv_text, dumps, write_atomic

from conftest import FIXTURES


def run(capsys, *argv):
    code = main([*argv, "--fixed-clock"])
    out = capsys.readouterr()
    return code, (json.loads(out.out) if out.out.strip() else None), out.err


def fx(name: str) -> str:
    return str(FIXTURES / name)


# ---------------------------------------------------------------- config

def test_config_defaults_and_overrides():
    cfg = build_config({}, {"seed": 11, "tol": 1e-9})
    assert cfg.model.length == 4 and cfg.seed == 11 and cfg.tol == 1e-9
    assert cfg.raw["run"]["seed"] == 11
    cfg = build_config({"boundary": {"xi": [0.1, 0.2]}})
    assert cfg.expansion.xi == complex(0.1, 0.2)


@pytest.mark.parametrize("data, match", [
    ({"modle": {}}, "unknown section"),
    ({"model": {"zz": [1.0]}}, "unknown key"),
    ({"model": {"z": [1.0, 1.0]}}, "distinct"),
    ({"model": {"z": [1.0, 2.0], "L": 3}}, "L = 3"),
    ({"model": {"G": "big"}}, "finite number"),
    ({"boundary": {"xi": [1.0, 2.0, 3.0]}}, "pair"),
    ({"boundary": {"psi": 1.0, "phi": -1.0}}, "branch point"),
    ({"boundary": {"eta": 0.0}}, "nonzero"),
    ({"run": {"tol": -1.0}}, "positive"),
    ({"run": {"gamma_path": []}}, "non-empty"),
    ({"run": {"roots": [1.0]}}, "squared roots"),
    ({"run": {"state": 99}}, "below"),
    ({"run": {"corrupt_r": 1}}, "true or false"),
    ({"run": {"cap": 3}}, "exceeds the cap"),
])
def test_config_rejections(data, match):
    with pytest.raises(ConfigError, match=match):
        build_config(data)


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[model\nz = 1")
    with pytest.raises(ConfigError, match="malformed"):
        load_config(bad)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.toml")


# ---------------------------------------------------------------- report encoding

def test_report_encoding_round_trips():
    x = 0.1 + 0.2
    text = dumps({"b": x, "a": complex(1 / 3, -2.5e-300), "n": [math.nan, math.inf, -math.inf],
                  "arr": np.array([1.5, 2.0]), "flag": np.bool_(True), "i": np.int64(3)})
    data = json.loads(text)
    assert list(data) == sorted(data)
    assert data["b"] == x and data["a"] == {"re": 1 / 3, "im": -2.5e-300}
    assert data["n"] == ["nan", "inf", "-inf"]
    assert data["arr"] == [1.5, 2.0] and data["flag"] is True and data["i"] == 3
    assert "0.30000000000000004" in text
    with pytest.raises(TypeError):
        dumps({"x": object()})


def test_atomic_write_and_csv(tmp_path):
    target = tmp_path / "sub" / "r.json"
    write_atomic(target, "hello\n")
    assert target.read_text() == "hello\n"
    assert [p.name for p in target.parent.iterdir()] == ["r.json"]
    assert csv_text(["a", "b"], [(1, 0.1)]) == "a,b\n1,0.10000000000000001\n"


# ---------------------------------------------------------------- verify

def test_verify_default_passes(capsys):
    code, rep, _ = run(capsys, "verify", "--config", fx("verify_default.toml"))
    assert code == 0 and rep["status"] == "pass" and rep["exit_code"] == 0
    names = {r["name"] for r in rep["rows"]}
    assert {"ybe", "reflection_minus", "reflection_plus", "rll", "lax_inverse", "transfer_commute",
            "tau_star_commute", "hamiltonian_commute", "hamiltonian_sum", "sum_rule", "second_family"} <= names
    assert all(r["passed"] for r in rep["rows"])
    assert rep["timestamp"] == "1970-01-01T00:00:00Z" and rep["seed"] == 7
    assert "transfer_parity" in rep["probes"]


def test_verify_small_adds_gauge_and_quasiclassical_rows(capsys):
    code, rep, _ = run(capsys, "verify", "--config", fx("verify_small.toml"))
    assert code == 0
    names = {r["name"] for r in rep["rows"]}
    assert {"gauge_gauge", "gauge_chain", "gauge_reduction", "quasiclassical"} <= names


def test_verify_corrupted_r_fails(capsys):
    code, rep, err = run(capsys, "verify", "--config", fx("fault_corrupt_r.toml"))
    assert code == 1 and rep["status"] == "fail"
    assert not next(r for r in rep["rows"] if r["name"] == "ybe")["passed"]
    assert "numerical check failed" in err


def test_duplicate_eps_is_config_error(capsys):
    code, rep, err = run(capsys, "verify", "--config", fx("fault_duplicate_eps.toml"))
    assert code == 2 and rep is None
    assert "distinct" in err


def test_length_cap(capsys):
    code, _, err = run(capsys, "spectrum", "--config", fx("fault_length_13.toml"))
    assert code == 2 and "cap" in err
    code, _, _ = run(capsys, "verify", "--config", fx("verify_small.toml"), "--cap", "2")
    assert code == 2


def test_negative_seed_rejected(capsys):
    code, _, err = run(capsys, "verify", "--seed", "-1")
    assert code == 2 and "seed" in err


# ---------------------------------------------------------------- spectrum

def test_spectrum_l5_all_matched(capsys, tmp_path):
    out, table = tmp_path / "r.json", tmp_path / "r.csv"
    code = main(["spectrum", "--config", fx("spectrum_l5.toml"), "--out", str(out), "--csv", str(table),
                 "--fixed-clock"])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["summary"]["states"] == 32 and rep["summary"]["matched"] == 32
    assert rep["summary"]["max_rel_error"] < 1e-8
    assert all(set(r["energy_bethe"]) == {"re", "im"} for r in rep["records"])
    lines = table.read_text().splitlines()
    assert lines[0].startswith("state,E_ED") and len(lines) == 33


def test_spectrum_single_site_closed_form(capsys):
    code, rep, _ = run(capsys, "spectrum", "--config", fx("spectrum_l1.toml"))
    assert code == 0 and len(rep["records"]) == 2
    ref = math.sqrt(1.7**4 / 4 + 0.09 * 1.7**2)
    got = sorted(r["energy_bethe"]["re"] for r in rep["records"])
    assert got == pytest.approx([-ref, ref], abs=1e-12)


def test_spectrum_gamma_zero_sector_mode(capsys):
    code, rep, err = run(capsys, "spectrum", "--config", fx("spectrum_gamma0.toml"))
    assert code == 0 and rep["summary"]["mode"] == "sector"
    assert "warning" in err


def test_spectrum_byte_identical(tmp_path):
    paths = [tmp_path / f"r{i}.json" for i in range(2)]
    for p in paths:
        assert main(["spectrum", "--config", fx("spectrum_l5.toml"), "--seed", "9", "--out", str(p),
                     "--fixed-clock"]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


# ---------------------------------------------------------------- solve

def _spectrum_energies(tmp_path: Path, gamma: float) -> list[float]:
    cfg = tmp_path / f"g{gamma}.toml"
    cfg.write_text(f"[model]\nz = [1.3, 1.6]\nG = 0.8\nGamma = {gamma}\n")
    out = tmp_path / f"g{gamma}.json"
    assert main(["spectrum", "--config", str(cfg), "--out", str(out), "--fixed-clock"]) == 0
    return [r["energy_bethe"]["re"] for r in json.loads(out.read_text())["records"]]


def test_solve_path_matches_spectrum_at_endpoints(capsys, tmp_path):
    code, rep, _ = run(capsys, "solve", "--config", fx("solve_l2.toml"))
    assert code == 0 and [p["Gamma"] for p in rep["points"]] == [0.3, 0.2, 0.1]
    for pt in (rep["points"][0], rep["points"][-1]):
        energies = _spectrum_energies(tmp_path, pt["Gamma"])
        assert min(abs(e - pt["energy"]["re"]) for e in energies) < 1e-10
        assert pt["residual"] < 1e-8


def test_solve_single_point_passthrough(capsys, tmp_path):
    cfg = tmp_path / "one.toml"
    cfg.write_text("[model]\nz = [1.3, 1.6]\nG = 0.8\nGamma = 0.3\n\n[run]\nstate = 2\n")
    code, rep, _ = run(capsys, "solve", "--config", str(cfg))
    assert code == 0 and len(rep["points"]) == 1
    assert rep["points"][0]["energy_ed_gap"] < 1e-10


def test_solve_from_given_roots(capsys, tmp_path):
    code, rep, _ = run(capsys, "solve", "--config", fx("solve_l2.toml"))
    x = rep["points"][0]["squared_roots"]
    roots = ", ".join(f"[{r['re']!r}, {r['im']!r}]" for r in x)
    cfg = tmp_path / "given.toml"
    cfg.write_text(f"[model]\nz = [1.3, 1.6]\nG = 0.8\nGamma = 0.3\n\n[run]\ngamma_path = [0.3, 0.25]\n"
                   f"roots = [{roots}]\n")
    code, rep2, _ = run(capsys, "solve", "--config", str(cfg))
    assert code == 0 and rep2["seed_source"] == "config"
    assert rep2["points"][0]["energy"] == pytest.approx(rep["points"][0]["energy"], abs=1e-12)


def test_solve_collision_exits_one(capsys):
    code, rep, _ = run(capsys, "solve", "--config", fx("solve_collision.toml"))
    assert code == 1 and rep["status"] == "fail"
    assert "root collision" in rep["error"]
    assert 0.5 <= rep["last_good_gamma"] < 0.7
    assert [p["Gamma"] for p in rep["points"]] == [0.3, 0.5]
    assert rep["stalled_point"]["Gamma"] == rep["last_good_gamma"]
