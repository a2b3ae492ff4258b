import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mckv import cli
from mckv.config import ConfigError, parse_config, serialize_config
from mckv.particles import ParticleStateError

SIM = """
[run]
command = simulate
output_dir = {out}

[scenario]
name = pure-diffusion

[sim]
N = 4000
T = 1.0
dt = 0.015625
seed = 12
snapshot_times = 0, 0.0625, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 1.0

[initial]
kind = gaussian
lo = -10
hi = 10
cells = 2000
"""


def write(tmp_path, text, name="c.ini", **fmt):
    p = tmp_path / name
    p.write_text(text.format(out=tmp_path / "out", **fmt), encoding="utf-8")
    return p


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = parse_config(SIM.format(out="runs/a"))
        again = parse_config(serialize_config(cfg))
        assert again == cfg
        assert serialize_config(again) == serialize_config(cfg)

    @given(N=st.integers(1, 10**6), T=st.sampled_from([0.5, 1.0, 2.0]),
           seed=st.integers(0, 2**64 - 1), clip=st.floats(0.1, 10, allow_nan=False),
           formats=st.sampled_from(["csv", "json", "csv, json"]))
    @settings(max_examples=40, deadline=None)
    def test_round_trip_property(self, N, T, seed, clip, formats):
        text = (f"[run]\ncommand = converge\nformats = {formats}\n"
                f"[scenario]\nname = tanh-mean\nclip = {clip!r}\n"
                f"[sim]\nN = {N}\nT = {T}\ndt = 0.01\nseed = {seed}\n"
                f"[study]\nn_list = 2, 4, 8\n")
        cfg = parse_config(text)
        assert parse_config(serialize_config(cfg)) == cfg

    def test_error_position(self):
        text = SIM.format(out="x").replace("N = 4000", "N = -3")
        with pytest.raises(ConfigError) as ei:
            parse_config(text)
        assert ei.value.section == "sim" and ei.value.key == "N"
        assert ei.value.line == text.splitlines().index("N = -3") + 1

    def test_unknown_key_and_section(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(SIM.format(out="x") + "\nbogus = 1\n")
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config(SIM.format(out="x") + "\n[extra]\na = 1\n")

    def test_unknown_scenario(self):
        with pytest.raises(ConfigError, match="unknown scenario"):
            parse_config(SIM.format(out="x").replace("pure-diffusion", "swirl"))

    def test_snapshot_not_multiple_of_dt(self):
        with pytest.raises(ConfigError):
            parse_config(SIM.format(out="x").replace("0.0625,", "0.063,"))


class TestRun:
    def test_simulate_gaussian_and_determinism(self, tmp_path):
        cfg = write(tmp_path, SIM)
        assert cli.main(["simulate", "--config", str(cfg)]) == 0
        assert cli.main(["simulate", "--config", str(cfg), "--output-dir",
                         str(tmp_path / "b"), "--threads", "3"]) == 0
        m1 = json.loads((tmp_path / "out" / "manifest.json").read_text())
        m2 = json.loads((tmp_path / "b" / "manifest.json").read_text())
        assert m1["files"] == m2["files"]
        rows = np.loadtxt(tmp_path / "out" / "snapshots.csv", delimiter=",", skiprows=1)
        x = rows[rows[:, 0] == 1.0][:, 2]
        assert abs(x.var() - 2.0) <= 3 * 2 * np.sqrt(2 / 4000)

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MCKV_OUTPUT_DIR", str(tmp_path / "env"))
        assert cli.main(["simulate", "--config", str(write(tmp_path, SIM))]) == 0
        assert (tmp_path / "env" / "manifest.json").is_file()

    def test_tamper_detected(self, tmp_path):
        cli.main(["simulate", "--config", str(write(tmp_path, SIM))])
        run = tmp_path / "out"
        assert cli.verify_manifest(run) == []
        with open(run / "snapshots.csv", "a") as fh:
            fh.write("0.0,9999,1.0\r\n")
        assert cli.verify_manifest(run) == ["snapshots.csv"]
        assert cli.main(["verify", "--run-dir", str(run)]) == 1

    def test_validation_exit(self, tmp_path):
        bad = write(tmp_path, SIM.replace("N = 4000", "N = zero"))
        assert cli.main(["simulate", "--config", str(bad), "--output-dir", str(tmp_path / "e")]) == 1
        err = json.loads((tmp_path / "e" / "error.json").read_text())
        assert err["section"] == "sim" and err["key"] == "N" and err["line"]

    def test_command_mismatch(self, tmp_path):
        assert cli.main(["fp-solve", "--config", str(write(tmp_path, SIM)),
                         "--output-dir", str(tmp_path / "e")]) == 1

    def test_runtime_abort_exit(self, tmp_path, monkeypatch):
        def boom(cfg, out, threads):
            raise ParticleStateError("non-finite update for particle 3")
        monkeypatch.setitem(cli.COMMANDS, "simulate", boom)
        assert cli.main(["simulate", "--config", str(write(tmp_path, SIM))]) == 2
        err = json.loads((tmp_path / "out" / "error.json").read_text())
        assert err["exit_code"] == 2 and "particle 3" in err["message"]
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert "error.json" in manifest["files"]

    def test_inconclusive_exit(self, tmp_path):
        text = SIM.replace("command = simulate", "command = converge").replace(
            "pure-diffusion", "tanh-mean").replace("N = 4000", "N = 1000").replace(
            "T = 1.0", "T = 0.25").replace(
            "0, 0.0625, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 1.0", "0, 0.125, 0.25")
        text += "\n[study]\nn_list = 4, 8, 16\n"
        assert cli.main(["converge", "--config", str(write(tmp_path, text))]) == 3
        assert (tmp_path / "out" / "convergence.json").is_file()

    def test_transport_selftest(self, tmp_path):
        assert cli.main(["transport-selftest", "--output-dir", str(tmp_path / "t")]) == 0
        res = json.loads((tmp_path / "t" / "selftest.json").read_text())
        assert res["passed"] and res["max_oracle_gap"] <= 1e-9

    def test_check_assumptions(self, tmp_path):
        text = SIM.replace("command = simulate", "command = check-assumptions")
        text += "\n[study]\nsamples = 200\n"
        assert cli.main(["check-assumptions", "--config", str(write(tmp_path, text))]) == 0
        assert json.loads((tmp_path / "out" / "assumptions.json").read_text())["passed"]

    def test_formats_filter(self, tmp_path):
        text = SIM.replace("output_dir = {out}", "output_dir = {out}\nformats = json")
        cli.main(["simulate", "--config", str(write(tmp_path, text))])
        assert not (tmp_path / "out" / "snapshots.csv").exists()
        assert (tmp_path / "out" / "metadata.json").exists()


class TestPlotData:
    def test_fp_density_evolution(self, tmp_path):
        text = SIM.replace("command = simulate", "command = fp-solve").replace(
            "cells = 2000", "cells = 400").replace(
            "0, 0.0625, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 1.0", "0, 0.5, 1.0")
        text += "\n[fp]\ndt = 0.001\n"
        assert cli.main(["fp-solve", "--config", str(write(tmp_path, text))]) == 0
        out = cli.emit_plot_data(tmp_path / "out", "density-evolution")
        lines = out.read_text().splitlines()
        assert lines[0] == "t,x,density" and len(lines) == 1 + 3 * 400
        assert cli.verify_manifest(tmp_path / "out") == []

    def test_holder_fit(self, tmp_path):
        cli.main(["simulate", "--config", str(write(tmp_path, SIM))])
        out = cli.emit_plot_data(tmp_path / "out", "holder-fit")
        text = out.read_text().splitlines()
        assert text[0].startswith("# slope=") and "log_gap,log_w" in text

    def test_missing_upstream(self, tmp_path):
        cli.main(["simulate", "--config", str(write(tmp_path, SIM))])
        with pytest.raises(FileNotFoundError):
            cli.emit_plot_data(tmp_path / "out", "convergence")
        assert cli.main(["plot-data", "--run-dir", str(tmp_path / "nowhere"),
                         "--kind", "holder-fit"]) == 1

    def test_stability_and_convergence(self, tmp_path):
        base = SIM.replace("cells = 2000", "cells = 1000").replace(
            "0, 0.0625, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 1.0", "0, 0.25, 0.5").replace(
            "T = 1.0", "T = 0.5").replace("N = 4000", "N = 500")
        stab = base.replace("command = simulate", "command = stability").replace(
            "pure-diffusion", "tanh-mean") + "\n[fp]\ndt = 0.001\n[study]\nsamples = 100\n"
        assert cli.main(["stability", "--config", str(write(tmp_path, stab, "s.ini")),
                         "--output-dir", str(tmp_path / "s")]) == 0
        rows = cli.emit_plot_data(tmp_path / "s", "stability-ratio").read_text().splitlines()
        assert rows[0] == "t,path,weighted_tv,ratio" and len(rows) == 4
        conv = base.replace("command = simulate", "command = converge") + "\n[study]\nn_list = 2, 4, 8\n"
        assert cli.main(["converge", "--config", str(write(tmp_path, conv, "v.ini")),
                         "--output-dir", str(tmp_path / "v")]) == 0
        rows = cli.emit_plot_data(tmp_path / "v", "convergence").read_text().splitlines()
        assert rows[0] == "n_pair,sup_w1,mc_noise_floor" and rows[1].startswith("2-4,0.0,")
