import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from clockworm.cli import main as cli_main
from clockworm.harness import (
    ConfigError,
    RunManifest,
    config_from_dict,
    emit_plot_data,
    load_config,
    read_observables,
    run_sweep,
)

BASE = {
    "mode": "sharpening",
    "seed": 99,
    "channel": {"kind": "temperature", "n": 2},
    "grid": {"temperatures": [0.8, 1.2], "sizes": [[3, 3]], "realizations": 4},
    "schedule": {"burn_in": 16, "measurements": 32, "thin": 1},
}


def cfg_dict(**overrides):
    raw = json.loads(json.dumps(BASE))
    raw.update(overrides)
    return raw


def test_toml_and_json_configs_agree(tmp_path):
    toml_text = """
mode = "sharpening"
seed = 99

[channel]
kind = "temperature"
n = 2

[grid]
temperatures = [0.8, 1.2]
sizes = [[3, 3]]
realizations = 4

[schedule]
burn_in = 16
measurements = 32
thin = 1
"""
    (tmp_path / "c.toml").write_text(toml_text)
    (tmp_path / "c.json").write_text(json.dumps(BASE))
    a = load_config(tmp_path / "c.toml")
    b = load_config(tmp_path / "c.json")
    assert a.physics_dict() == b.physics_dict()
    assert a.config_hash() == b.config_hash()


def test_config_validation_messages():
    with pytest.raises(ConfigError, match="grid.temperatures"):
        config_from_dict(cfg_dict(grid={"temperatures": [], "sizes": [[3, 3]], "realizations": 2}))
    with pytest.raises(ConfigError, match="grid.sizes"):
        config_from_dict(cfg_dict(grid={"temperatures": [1.0], "sizes": [[1, 3]], "realizations": 2}))
    with pytest.raises(ConfigError, match="seed"):
        raw = cfg_dict()
        del raw["seed"]
        config_from_dict(raw)
    with pytest.raises(ConfigError, match="mode"):
        config_from_dict(cfg_dict(mode="bogus"))
    with pytest.raises(ConfigError, match="channel.beta"):
        config_from_dict(cfg_dict(channel={"kind": "couplings", "n": 4}))


def test_sizes_accept_scalars_as_square():
    cfg = config_from_dict(cfg_dict(grid={"temperatures": [1.0], "sizes": [4], "realizations": 1}))
    assert cfg.sizes == [(4, 4)]


def test_config_hash_tracks_physics_only(tmp_path):
    a = config_from_dict(cfg_dict(output_dir=str(tmp_path / "x")))
    b = config_from_dict(cfg_dict(output_dir=str(tmp_path / "y"), workers=3))
    assert a.config_hash() == b.config_hash()
    c = config_from_dict(cfg_dict(seed=100))
    assert c.config_hash() != a.config_hash()
    d = config_from_dict(cfg_dict(grid={"temperatures": [0.8, 1.2], "sizes": [[3, 3]], "realizations": 5}))
    assert d.config_hash() != a.config_hash()


def test_sweep_outputs_and_rerun_identical(tmp_path):
    cfg1 = config_from_dict(cfg_dict(output_dir=str(tmp_path / "a")))
    cfg2 = config_from_dict(cfg_dict(output_dir=str(tmp_path / "b")))
    m1 = run_sweep(cfg1, log=lambda *a: None)
    m2 = run_sweep(cfg2, log=lambda *a: None)
    csv1 = Path(m1.outputs[0]).read_bytes()
    csv2 = Path(m2.outputs[0]).read_bytes()
    assert csv1 == csv2
    rows = read_observables(m1.outputs[0])
    names = {r["observable"] for r in rows}
    assert names == {"order_parameter", "charge_variance", "coherent_information",
                     "coherent_information_normalized"}
    assert all(r["n_realizations"] == 4 for r in rows)
    summary = json.loads(Path(m1.outputs[1]).read_text())
    assert len(summary["points"]) == 2


def test_sweep_worker_count_invariance(tmp_path):
    cfg1 = config_from_dict(cfg_dict(output_dir=str(tmp_path / "w1")))
    cfg1.workers = 1
    cfg2 = config_from_dict(cfg_dict(output_dir=str(tmp_path / "w2")))
    cfg2.workers = 2
    m1 = run_sweep(cfg1, log=lambda *a: None)
    m2 = run_sweep(cfg2, log=lambda *a: None)
    assert Path(m1.outputs[0]).read_bytes() == Path(m2.outputs[0]).read_bytes()


def test_resume_safety(tmp_path):
    outdir = tmp_path / "full"
    cfg = config_from_dict(cfg_dict(output_dir=str(outdir)))
    manifest = run_sweep(cfg, log=lambda *a: None)
    full_csv = Path(manifest.outputs[0]).read_bytes()

    # simulate a killed run: keep only some task files, drop outputs
    partial = tmp_path / "partial"
    shutil.copytree(outdir, partial)
    kept = 0
    for i, f in enumerate(sorted((partial / "tasks").glob("*.json"))):
        if i % 2 == 0:
            f.unlink()
        else:
            kept += 1
    (partial / "observables.csv").unlink()
    cfg_resume = config_from_dict(cfg_dict(output_dir=str(partial)))
    resumed = run_sweep(cfg_resume, resume=True, log=lambda *a: None)
    assert Path(resumed.outputs[0]).read_bytes() == full_csv
    assert kept > 0


def test_resume_rejects_config_change(tmp_path):
    outdir = tmp_path / "r"
    cfg = config_from_dict(cfg_dict(output_dir=str(outdir)))
    run_sweep(cfg, log=lambda *a: None)
    changed = config_from_dict(cfg_dict(seed=123, output_dir=str(outdir)))
    with pytest.raises(ConfigError, match="hash"):
        run_sweep(changed, resume=True, log=lambda *a: None)


def test_oracle_check_mode(tmp_path):
    raw = cfg_dict(mode="oracle_check", output_dir=str(tmp_path / "oc"),
                   grid={"temperatures": [1.0], "sizes": [[2, 2]], "realizations": 3},
                   schedule={"burn_in": 64, "measurements": 192, "thin": 2})
    cfg = config_from_dict(raw)
    manifest = run_sweep(cfg, log=lambda *a: None)
    summary = json.loads(Path(manifest.outputs[1]).read_text())
    assert summary["oracle_check_passed"] is True
    rows = read_observables(manifest.outputs[0])
    assert any(r["observable"] == "worm_oracle_max_deviation" for r in rows)


def test_local_mode(tmp_path):
    raw = cfg_dict(mode="local", output_dir=str(tmp_path / "loc"),
                   grid={"temperatures": [0.4], "sizes": [[4, 4]], "realizations": 3},
                   schedule={"burn_in": 32, "measurements": 64, "thin": 1})
    cfg = config_from_dict(raw)
    manifest = run_sweep(cfg, log=lambda *a: None)
    rows = read_observables(manifest.outputs[0])
    vals = [r for r in rows if r["observable"] == "local_sharpening"]
    assert len(vals) == 1
    assert -0.2 <= vals[0]["value"] <= 1.05


def test_plot_data_emission(tmp_path):
    cfg = config_from_dict(cfg_dict(output_dir=str(tmp_path / "p"),
                                    grid={"temperatures": [0.8, 1.2],
                                          "sizes": [[3, 3], [4, 4]], "realizations": 2}))
    manifest = run_sweep(cfg, log=lambda *a: None)
    paths = emit_plot_data(manifest, "fig5_style", tmp_path / "plots")
    block = (tmp_path / "plots" / "fig5_style.dat").read_text()
    assert block.count("# L=") == 2  # one series per size
    csv = (tmp_path / "plots" / "fig5_style.csv").read_text()
    assert csv.splitlines()[0] == "series_L,series_t,T,value,stderr"
    paths6 = emit_plot_data(manifest, "fig6_style", tmp_path / "plots")
    content = Path(paths6[0]).read_text()
    assert len(content.splitlines()) == 1 + 4  # header + 2T x 2 sizes


def test_plot_data_incomplete_manifest(tmp_path):
    cfg = config_from_dict(cfg_dict(output_dir=str(tmp_path / "q")))
    manifest = run_sweep(cfg, log=lambda *a: None)
    manifest.tasks["t0_s0_r0"] = "pending"
    with pytest.raises(ValueError, match="missing tasks"):
        emit_plot_data(manifest, "fig5_style", tmp_path / "plots2")


def test_cli_end_to_end(tmp_path, capsys):
    config_path = tmp_path / "cfg.json"
    raw = cfg_dict(mode="oracle_check", output_dir=str(tmp_path / "cli"),
                   grid={"temperatures": [1.0], "sizes": [[2, 2]], "realizations": 2},
                   schedule={"burn_in": 64, "measurements": 128, "thin": 2})
    config_path.write_text(json.dumps(raw))
    code = cli_main(["oracle-check", "-c", str(config_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "PASSED" in out


def test_cli_fit_tsharp(tmp_path, capsys):
    csv = tmp_path / "obs.csv"
    lines = ["N,L,t,T,observable,value,stderr,n_realizations,seed"]
    for t, v in [(2, 0.2), (4, 0.4), (6, 0.7), (8, 0.9)]:
        lines.append(f"2,8,{t},0.5,order_parameter,{v},0.01,10,1")
    csv.write_text("\n".join(lines) + "\n")
    code = cli_main(["fit", "--csv", str(csv), "--tsharp"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report[0]["L"] == 8
    assert 4 < report[0]["t_sharp"] < 6
    assert not report[0]["censored"]


def test_cli_fit_scaling(tmp_path, capsys):
    csv = tmp_path / "obs.csv"
    lines = ["N,L,t,T,observable,value,stderr,n_realizations,seed"]
    for size_l in (8, 12, 16):
        for t in (8, 16):
            lines.append(f"8,{size_l},{t},0.6,lnratio,{1.5 * t / size_l:.6f},0.01,10,1")
    csv.write_text("\n".join(lines) + "\n")
    code = cli_main(["fit", "--csv", str(csv), "--regime", "qlro"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["slope"] == pytest.approx(1.5, abs=0.01)
    assert report["r_squared"] > 0.99
    assert report["beats_exp_t"] is True


def test_manifest_round_trip(tmp_path):
    cfg = config_from_dict(cfg_dict(output_dir=str(tmp_path / "m")))
    manifest = run_sweep(cfg, log=lambda *a: None)
    loaded = RunManifest.load(tmp_path / "m" / "manifest.json")
    assert loaded.config_hash == manifest.config_hash
    assert set(loaded.tasks.values()) == {"done"}
    assert loaded.outputs == manifest.outputs
