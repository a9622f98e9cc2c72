import csv
import json
import os
import subprocess
import sys

import pytest

from photon_reuse.cli import main, parse_dims, report, ReportError

SMALL = ["--paths", "2000", "--dm", "2x2x4x4", "--frames", "3"]


def run_cli(tmp_path, name, *args):
    out = tmp_path / name
    assert main([*SMALL, "--out", str(out), *args]) == 0
    with open(out / "stats.csv", newline="") as fh:
        return out, list(csv.DictReader(fh))


def test_static_box_reuses_everything_after_frame_zero(tmp_path):
    out, rows = run_cli(tmp_path, "s", "--scene", "builtin:static-box")
    assert int(rows[0]["rays_traced"]) > 0
    assert [int(r["rays_traced"]) for r in rows[1:]] == [0, 0]
    frames = [(out / f"frame_{f:04d}.ppm").read_bytes() for f in range(3)]
    assert frames[0] == frames[1] == frames[2]
    assert frames[0].startswith(b"P6\n64 48\n255\n")


def test_first_frame_is_mode_independent(tmp_path):
    imgs = {}
    for mode in ("baseline", "naive", "error"):
        out, _ = run_cli(tmp_path, mode, "--scene", "builtin:moving-cube", "--mode", mode)
        imgs[mode] = (out / "frame_0000.ppm").read_bytes()
    assert imgs["baseline"] == imgs["naive"] == imgs["error"]


def test_config_round_trip(tmp_path):
    out, rows = run_cli(tmp_path, "a", "--scene", "builtin:moving-cube", "--seed", "9",
                        "--threshold", "0.01", "--mode", "error", "--images", "off")
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["seed"] == 9 and cfg["mode"] == "error" and cfg["frames"] == 3
    assert "out" not in cfg and "workers" not in cfg
    again = tmp_path / "b"
    assert main(["--config", str(out / "config.json"), "--out", str(again)]) == 0
    with open(again / "stats.csv", newline="") as fh:
        rows2 = list(csv.DictReader(fh))
    strip = lambda rs: [{k: v for k, v in r.items() if not k.startswith("t_")} for r in rs]
    assert strip(rows) == strip(rows2)
    assert not list(out.glob("*.ppm"))


def test_explicit_flag_beats_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"scene": "builtin:static-box", "frames": 2, "paths": 1000,
                               "dm": "2x2x2x2", "images": "off"}))
    out = tmp_path / "o"
    assert main(["--config", str(cfg), "--frames", "1", "--out", str(out)]) == 0
    assert json.loads((out / "config.json").read_text())["frames"] == 1


def test_report_ratios(tmp_path, capsys):
    _, base = run_cli(tmp_path, "b", "--scene", "builtin:moving-cube", "--mode", "baseline",
                      "--images", "off")
    _, naive = run_cli(tmp_path, "n", "--scene", "builtin:moving-cube", "--mode", "naive",
                       "--images", "off")
    table = report([tmp_path / "b" / "stats.csv", tmp_path / "n" / "stats.csv"])
    for row, b, n in zip(table, base, naive):
        assert row["baseline_ratio"] == 1.0
        assert row["naive_ratio"] == pytest.approx(int(n["rays_traced"]) / int(b["rays_traced"]))
    assert "mean" in capsys.readouterr().out
    only = report([tmp_path / "b" / "stats.csv"])
    assert all(r["baseline_ratio"] == 1.0 for r in only)
    with pytest.raises(ReportError):
        report([tmp_path / "n" / "stats.csv"])


def test_report_rejects_mismatched_frame_counts(tmp_path):
    run_cli(tmp_path, "b", "--scene", "builtin:static-box", "--mode", "baseline", "--images", "off")
    out = tmp_path / "n"
    assert main(["--paths", "2000", "--dm", "2x2x4x4", "--frames", "2", "--mode", "naive",
                 "--images", "off", "--out", str(out)]) == 0
    with pytest.raises(ReportError, match="frame counts"):
        report([tmp_path / "b" / "stats.csv", out / "stats.csv"])
    assert main(["report", str(tmp_path / "b" / "stats.csv"), str(out / "stats.csv")]) == 1


@pytest.mark.parametrize("argv", [
    ["--mode", "fast"], ["--paths", "0"], ["--bounces", "17"], ["--dm", "3x0"],
    ["--threshold", "-1"], ["--radius", "0"], ["--workers", "0"], ["--frames", "-2"],
    ["--nonsense"], ["report"],
])
def test_usage_errors_exit_2(argv, tmp_path):
    assert main([*argv, "--out", str(tmp_path)] if argv != ["report"] else argv) == 2


def test_bad_scene_exits_1(tmp_path, capsys):
    assert main(["--scene", "builtin:nope", "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"objects": []}')
    assert main(["--scene", str(bad), "--out", str(tmp_path)]) == 1
    assert "scene error" in capsys.readouterr().err


def test_memory_budget_is_enforced(tmp_path):
    assert main(["--paths", "5000000", "--memory-budget", "10", "--out", str(tmp_path)]) == 2


def test_parse_dims():
    assert parse_dims("8x8x64x64") == (8, 8, 64, 64)
    assert parse_dims("4x4") == (4, 4)


def test_module_entry_point_and_help():
    done = subprocess.run([sys.executable, "-m", "photon_reuse", "--help"],
                          capture_output=True, text=True)
    assert done.returncode == 0 and "--threshold" in done.stdout


def test_pure_python_fallback_matches_compiled(tmp_path):
    """The interpreter fallback runs the same kernels and must agree bit for bit."""
    args = ["--scene", "builtin:moving-cube", "--mode", "error", "--paths", "150",
            "--bounces", "3", "--dm", "1x1x2x2", "--frames", "2", "--images", "off"]
    outs = {}
    for flag in ("1", "0"):
        out = tmp_path / f"jit{flag}"
        env = dict(os.environ, PHOTON_REUSE_JIT=flag)
        done = subprocess.run([sys.executable, "-m", "photon_reuse", *args, "--out", str(out)],
                              env=env, capture_output=True, text=True, timeout=600)
        assert done.returncode == 0, done.stderr
        with open(out / "stats.csv", newline="") as fh:
            outs[flag] = [{k: v for k, v in r.items() if not k.startswith("t_")}
                          for r in csv.DictReader(fh)]
    assert outs["1"] == outs["0"]
