import copy
import json
import math
from pathlib import Path

import numpy as np
import pytest

from stochnls import config as cf
from stochnls.cli import main
from stochnls.integrator import ObservableSeries
from stochnls.output import read_manifest, read_series_csv, read_xy, series_to_csv

BASE = {
    "schema_version": "1.0",
    "model": {"domain_length": math.pi, "n_modes": 8, "sigma": 1.0, "alpha": -1, "beta": 1.0},
    "noise": {"family": "flat_k", "k": 8, "hs_norm_sq": 1.0},
    "integrator": {"dt": 0.01, "seed": 3, "record_every": 5},
    "experiment": {"kind": "stationary", "gamma": 1.0, "T": 6.0, "burn_in": 2.0, "n_traj": 8},
    "output": {"formats": ["csv", "json", "xy", "svg"], "csv_trajectories": 2},
}


def _raw(**sections):
    raw = copy.deepcopy(BASE)
    for name, values in sections.items():
        raw[name].update(values)
    return raw


def _write(tmp_path, raw, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def test_defaults_are_filled_in():
    cfg = cf.parse_config({"experiment": {"gamma": 0.5, "T": 100, "burn_in": 20},
                           "noise": {"k": 4, "hs_norm_sq": 1.0}})
    assert cfg.model["n_modes"] == 32 and cfg.model["alpha"] == -1
    assert cfg.integrator["dt"] == 1e-3 and cfg.integrator["scheme"] == "strang_split"
    assert cfg.basis().grid_points == 32
    assert cfg.noise_operator().phi_plus[:4] == pytest.approx([math.sqrt(1 / 8)] * 4)


def test_unknown_keys_and_multiple_errors_are_all_reported():
    raw = _raw(model={"n_modez": 8, "sigma": -1.0}, integrator={"dt": 0})
    with pytest.raises(cf.ConfigValidationError) as info:
        cf.parse_config(raw)
    paths = {p for p, _ in info.value.errors}
    assert {"model.n_modez", "model.sigma", "integrator.dt"} <= paths
    assert info.value.exit_code == 3


def test_power_decay_admissibility():
    ok = _raw(noise={"family": "power_decay", "p": 2.0, "cutoff": 8, "k": None, "hs_norm_sq": None})
    cf.parse_config(ok)
    bad = _raw(noise={"family": "power_decay", "p": 1.0, "cutoff": 8, "k": None, "hs_norm_sq": None})
    with pytest.raises(cf.ConfigValidationError) as info:
        cf.parse_config(bad)
    assert any(p.startswith("noise") for p, _ in info.value.errors)


def test_supercritical_focusing_is_rejected():
    with pytest.raises(cf.ConfigValidationError) as info:
        cf.parse_config(_raw(model={"sigma": 3.0, "alpha": 1}))
    assert any(p.startswith("model") for p, _ in info.value.errors)


def test_newer_schema_is_rejected():
    with pytest.raises(cf.ConfigValidationError):
        cf.parse_config({**BASE, "schema_version": "2.0"})


def test_digest_ignores_key_order_and_whitespace():
    a = cf.parse_config(BASE)
    reordered = {k: dict(reversed(list(v.items()))) if isinstance(v, dict) else v
                 for k, v in reversed(list(BASE.items()))}
    assert cf.parse_config(reordered).digest() == a.digest()
    assert cf.parse_config(_raw(integrator={"seed": 4})).digest() != a.digest()


def test_replace_revalidates():
    cfg = cf.parse_config(BASE)
    assert cfg.replace("integrator", seed=9).integrator["seed"] == 9
    with pytest.raises(cf.ConfigValidationError):
        cfg.replace("integrator", dt=-1.0)


def test_cli_exit_codes(tmp_path, capsys):
    bad_json = tmp_path / "bad.json"
    bad_json.write_text("{not json")
    assert main(["stationary", "--config", str(bad_json), "--out", str(tmp_path / "o")]) == 2
    assert main(["stationary", "--config", str(tmp_path / "missing.json")]) == 2
    invalid = _write(tmp_path, _raw(model={"sigma": "one"}), "invalid.json")
    assert main(["stationary", "--config", invalid, "--out", str(tmp_path / "o")]) == 3
    assert "model.sigma" in capsys.readouterr().err
    blocker = tmp_path / "file"
    blocker.write_text("")
    good = _write(tmp_path, BASE)
    assert main(["stationary", "--config", good, "--out", str(blocker / "sub"), "--quiet"]) == 4
    blow = _write(tmp_path, _raw(noise={"hs_norm_sq": None, "amplitude": 1e160},
                                 experiment={"kind": "simulate", "T": 0.1}), "blow.json")
    out = tmp_path / "blow"
    assert main(["simulate", "--config", blow, "--out", str(out), "--quiet"]) == 5
    assert json.loads((out / "failure.json").read_text())["trajectories"] == list(range(8))
    assert read_manifest(out / "manifest.json")["exit_code"] == 5


def test_stationary_run_is_reproducible(tmp_path):
    cfg = _write(tmp_path, BASE)
    for k in range(2):
        assert main(["stationary", "--config", cfg, "--out", str(tmp_path / f"r{k}"), "--quiet"]) == 0
    m0 = read_manifest(tmp_path / "r0" / "manifest.json")
    m1 = read_manifest(tmp_path / "r1" / "manifest.json")
    assert m0["files"] == m1["files"]
    assert m0["config_sha256"] == m1["config_sha256"]
    names = {f["path"] for f in m0["files"]}
    assert {"traj_0000.csv", "traj_0001.csv", "summary.json", "stats_gamma_1.json",
            "mass_vs_t.xy", "mass_vs_t.svg"} <= names
    assert "traj_0002.csv" not in names
    summary = json.loads((tmp_path / "r0" / "summary.json").read_text())
    assert summary["target"] == pytest.approx(0.5)


def test_seed_override_changes_data(tmp_path):
    cfg = _write(tmp_path, BASE)
    main(["stationary", "--config", cfg, "--out", str(tmp_path / "a"), "--quiet"])
    main(["stationary", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "4", "--quiet"])
    a = (tmp_path / "a" / "traj_0000.csv").read_bytes()
    assert a != (tmp_path / "b" / "traj_0000.csv").read_bytes()
    assert read_manifest(tmp_path / "b" / "manifest.json")["seed"] == 4


def test_sweep_writes_one_stats_file_per_gamma(tmp_path):
    raw = _raw(experiment={"kind": "sweep", "gamma": None, "gammas": [1.0, 0.5, 0.25, 0.125],
                           "T": 5.0, "burn_in": 2.0})
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", _write(tmp_path, raw), "--out", str(out), "--quiet"]) == 0
    stats = sorted(p.name for p in out.glob("stats_gamma_*.json"))
    assert stats == ["stats_gamma_0p125.json", "stats_gamma_0p25.json", "stats_gamma_0p5.json",
                     "stats_gamma_1.json"]
    summary = json.loads((out / "sweep_summary.json").read_text())
    assert len(summary["rows"]) == 4
    for row in summary["rows"]:
        assert set(row) == {"gamma", "mean_mass", "se", "target", "pass"}
        assert isinstance(row["pass"], bool)
    g, m = read_xy(out / "mean_mass_vs_gamma.xy")
    np.testing.assert_array_equal(g, [1.0, 0.5, 0.25, 0.125])
    assert m == pytest.approx([r["mean_mass"] for r in summary["rows"]], rel=0, abs=0)


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    t = np.cumsum(rng.uniform(0.1, 1, 20))
    cols = [rng.standard_normal(20) * 10.0 ** rng.uniform(-300, 300, 20) for _ in range(5)]
    cols[2][3] = np.nan
    s = ObservableSeries(t, *cols)
    path = tmp_path / "s.csv"
    path.write_text(series_to_csv(s))
    back = read_series_csv(path)
    assert path.read_text().splitlines()[0] == "t,mass,energy,modified_energy,v_norm_sq,residual_h"
    np.testing.assert_array_equal(back.times, s.times)
    for name in ObservableSeries.COLUMNS[1:]:
        np.testing.assert_array_equal(getattr(back, name), getattr(s, name))


def test_verify_table_and_report(tmp_path, capsys):
    cfg = str(Path(__file__).resolve().parents[1] / "configs" / "verify_quick.json")
    out = tmp_path / "v"
    code = main(["verify", "--config", cfg, "--out", str(out), "--quiet"])
    table = (out / "verify_table.txt").read_text()
    ids = [int(line.split()[0]) for line in table.splitlines() if line[:1].strip().isdigit()]
    assert ids == list(range(1, 11))
    record = json.loads((out / "verify.json").read_text())
    assert code == (0 if record["passed"] else 1)
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    assert "0 modified" in capsys.readouterr().out
    with open(out / "verify_table.txt", "a") as fh:
        fh.write("tampered\n")
    assert main(["report", str(out / "manifest.json"), "--quiet"]) == 1
    assert main(["report", str(tmp_path / "nowhere")]) == 4


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("STOCHNLS_OUT", str(tmp_path / "env-out"))
    raw = _raw(experiment={"kind": "simulate", "T": 0.2})
    assert main(["simulate", "--config", _write(tmp_path, raw), "--quiet"]) == 0
    assert (tmp_path / "env-out" / "manifest.json").exists()
