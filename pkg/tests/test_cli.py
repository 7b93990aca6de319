"""Config ingestion and subcommand behaviour of the command line front end."""

import os

import numpy as np
import pytest

from capflow.cli import (
    ConfigError,
    build_norm,
    main,
    parse_config,
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


SIM_CFG = """
# demo configuration
norm.kind = sphere
flow.omega0 = -0.5
grid.n_beta = 32
grid.n_lambda = 64
flow.t_end = 0.01
flow.record_every = 20
output.dir = out
"""


class TestConfigParsing:
    def test_sections_comments_types(self, tmp_path):
        cfg = parse_config(write(tmp_path, "a.cfg", SIM_CFG))
        assert cfg["norm.kind"] == "sphere"
        assert cfg["flow.omega0"] == -0.5
        assert cfg["grid.n_beta"] == 32
        assert cfg["output.dir"] == os.path.join(str(tmp_path), "out")

    def test_list_values(self, tmp_path):
        cfg = parse_config(
            write(tmp_path, "b.cfg", "norm.kind = ellipsoid\nnorm.params = [4, 1, 1]\n")
        )
        assert cfg["norm.params"] == [4.0, 1.0, 1.0]
        norm = build_norm(cfg)
        assert norm.f0(np.array([2.0, 0.0, 0.0])) == pytest.approx(1.0)

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(write(tmp_path, "c.cfg", "flow.omega = 0.1\n"))

    def test_malformed_line(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(write(tmp_path, "d.cfg", "norm.kind sphere\n"))

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            parse_config("/nonexistent/path.cfg")

    def test_bad_number(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(write(tmp_path, "e.cfg", "flow.omega0 = fast\n"))


class TestSimulate:
    def test_short_run_exit_zero(self, tmp_path, capsys):
        path = write(tmp_path, "sim.cfg", SIM_CFG)
        assert main(["simulate", path]) == 0
        out = tmp_path / "out"
        assert (out / "trace.csv").exists()
        assert (out / "summary.txt").exists()
        header = (out / "trace.csv").read_text().splitlines()[0]
        assert header.startswith("t,dt,V0,V1_boundary")

    def test_reruns_bit_identical(self, tmp_path):
        path = write(tmp_path, "sim.cfg", SIM_CFG)
        main(["simulate", path])
        first = (tmp_path / "out" / "trace.csv").read_bytes()
        main(["simulate", path])
        assert (tmp_path / "out" / "trace.csv").read_bytes() == first

    def test_inadmissible_omega_exit_two(self, tmp_path, capsys):
        path = write(tmp_path, "bad.cfg", "norm.kind = sphere\nflow.omega0 = -2\n")
        assert main(["simulate", path]) == 2
        assert "(-1, 1)" in capsys.readouterr().err

    def test_blow_up_exit_three_with_partial_trace(self, tmp_path):
        cfg = SIM_CFG + "flow.dt_override = 0.5\nflow.t_end = 1.0\n"
        path = write(tmp_path, "blow.cfg", cfg)
        assert main(["simulate", path]) == 3
        assert (tmp_path / "out" / "trace.csv").exists()

    def test_snapshots_written(self, tmp_path):
        cfg = SIM_CFG + "output.snapshot_every = 25\n"
        path = write(tmp_path, "snap.cfg", cfg)
        main(["simulate", path])
        snaps = [f for f in os.listdir(tmp_path / "out") if f.startswith("snap_")]
        assert snaps and all(f.endswith(".obj") for f in snaps)


class TestCheckCondition:
    def test_report_files(self, tmp_path, capsys):
        cfg = (
            "norm.kind = quartic_a2\ncondition.omega0 = -0.3\n"
            "condition.samples = 32\noutput.dir = rep\n"
        )
        path = write(tmp_path, "cond.cfg", cfg)
        assert main(["check-condition", path]) == 0
        assert "satisfied = true" in capsys.readouterr().out
        assert (tmp_path / "rep" / "condition_report.txt").exists()
        csv = (tmp_path / "rep" / "condition_samples.csv").read_text().splitlines()
        assert len(csv) == 33

    def test_rejected_parameter(self, tmp_path, capsys):
        cfg = "norm.kind = quartic_a2\ncondition.omega0 = 0.1\ncondition.samples = 16\n"
        path = write(tmp_path, "cond2.cfg", cfg)
        assert main(["check-condition", path]) == 0
        assert "satisfied = false" in capsys.readouterr().out


class TestNormInfo:
    def test_prints_facts(self, tmp_path, capsys):
        path = write(tmp_path, "n.cfg", "norm.kind = ellipsoid\nnorm.params = [4,1,1]\n")
        assert main(["norm-info", path]) == 0
        out = capsys.readouterr().out
        assert "F(E3) = 1" in out
        assert "admissible_omega0 = (-1, 1)" in out
        assert "ellipticity_min_eigenvalue = 0.25" in out


class TestVerify:
    def test_unknown_suite(self, capsys):
        assert main(["verify", "nope"]) == 2

    def test_duality_suite_passes(self, capsys):
        assert main(["verify", "duality"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 3 and "FAIL" not in out

    def test_appendix_suite_passes(self, capsys):
        assert main(["verify", "appendix-a"]) == 0
