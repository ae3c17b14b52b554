import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from topoquench import cli, io
from topoquench.errors import ConfigError
from topoquench.lattice import RelationFamily, VerificationReport


def read_lines(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


class TestArgs:
    def test_quench_defaults(self):
        (cfg,) = cli.parse_args(["quench", "--tau-q", "50"])
        p = cfg.params
        assert p["tau_q"] == 50.0
        assert p["g_start"] == 10.0
        assert p["nk"] == 1024 and p["samples"] == 2000
        assert p["method"] == "ode" and p["out"] == "quench.csv"

    def test_negative_tau_names_key(self, capsys):
        assert cli.main(["quench", "--tau-q", "-1"]) == cli.EXIT_CONFIG
        assert "tau-q" in capsys.readouterr().err

    def test_unparsable_value(self, capsys):
        assert cli.main(["quench", "--tau-q", "fast"]) == cli.EXIT_CONFIG
        assert "tau-q" in capsys.readouterr().err

    def test_unknown_flag(self):
        assert cli.main(["quench", "--tau-q", "5", "--speed", "3"]) == cli.EXIT_CONFIG

    def test_unknown_key_in_validate(self):
        with pytest.raises(ConfigError, match="g-end"):
            io.validate("quench", {"tau_q": "5", "g_end": "0"})

    def test_bad_choice(self):
        with pytest.raises(ConfigError, match="method"):
            io.validate("quench", {"tau_q": "5", "method": "euler"})

    def test_dump_modes_needs_ode(self, tmp_path):
        argv = ["quench", "--tau-q", "5", "--method", "approx", "--dump-modes", str(tmp_path / "m.csv")]
        assert cli.main(argv) == cli.EXIT_CONFIG
        assert not (tmp_path / "m.csv").exists()

    def test_plot_script_needs_series(self):
        with pytest.raises(ConfigError):
            io.validate("scaling", {"tau_q": "10", "plot_script": "x.gp"})


class TestConfigFile:
    def test_comments_and_multiple_runs(self):
        text = """
        # ramp and its scaling fit
        subcommand = quench
        tau-q = 20    # slow enough
        method = approx
        subcommand = fig2
        tau_q_list = 10, 100
        """
        q, f = io.parse_config_text(text)
        assert q.params["tau_q"] == 20.0 and q.params["method"] == "approx"
        assert f.params["tau_q_list"] == (10.0, 100.0)

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            io.parse_config_text("subcommand = quench\ntau_q = 1\ntau_q = 2\n")

    def test_key_before_subcommand(self):
        with pytest.raises(ConfigError):
            io.parse_config_text("tau_q = 1\nsubcommand = quench\n")

    def test_empty(self):
        with pytest.raises(ConfigError):
            io.parse_config_text("# nothing\n")

    def test_missing_file_is_io_failure(self, tmp_path):
        assert cli.main(["run", str(tmp_path / "absent.cfg")]) == cli.EXIT_FAILURE

    @given(
        tau=st.floats(1e-3, 1e4, allow_nan=False),
        g_start=st.floats(1.0001, 100.0),
        nk=st.integers(1, 4096).map(lambda n: 2 * n),
        method=st.sampled_from(["ode", "lz", "approx"]),
        verbosity=st.integers(0, 3),
    )
    def test_render_round_trip(self, tau, g_start, nk, method, verbosity):
        cfg = io.validate("quench", {"tau_q": tau, "g_start": g_start, "nk": nk, "method": method}, verbosity)
        (back,) = io.parse_config_text(io.render(cfg))
        assert back == cfg

    @given(st.lists(st.floats(1.0, 1e5), min_size=1, max_size=6), st.booleans())
    def test_render_round_trip_lists(self, taus, clip):
        cfg = io.validate("fig2", {"tau_q_list": tuple(taus), "clip_negative": clip})
        assert io.parse_config_text(io.render(cfg)) == [cfg]


class TestCsv:
    def test_header_only_for_empty_table(self, tmp_path):
        path = tmp_path / "empty.csv"
        io.emit_csv(["a", "b"], [], str(path))
        assert path.read_text() == "a,b\n"

    def test_full_precision(self, tmp_path):
        path = tmp_path / "x.csv"
        io.emit_csv(["x", "n"], [[0.1, np.int64(3)], {"x": np.float64(1 / 3), "n": 4}], str(path))
        rows = read_lines(path)
        assert float(rows[1].split(",")[0]) == 0.1
        assert float(rows[2].split(",")[0]) == 1 / 3
        assert rows[1].split(",")[1] == "3"

    def test_row_width_mismatch_leaves_nothing(self, tmp_path):
        path = tmp_path / "bad.csv"
        with pytest.raises(ValueError):
            io.emit_csv(["a", "b"], [[1.0, 2.0], [3.0]], str(path))
        assert os.listdir(tmp_path) == []

    def test_failed_write_keeps_old_file(self, tmp_path):
        path = tmp_path / "keep.csv"
        io.emit_csv(["a"], [[1.0]], str(path))

        def rows():
            yield [2.0]
            raise RuntimeError("generator died")

        with pytest.raises(RuntimeError):
            io.emit_csv(["a"], rows(), str(path))
        assert read_lines(path) == ["a", "1"]
        assert os.listdir(tmp_path) == ["keep.csv"]


class TestRuns:
    def test_quench_header_and_determinism(self, tmp_path):
        out = tmp_path / "q.csv"
        argv = ["quench", "--tau-q", "2", "--nk", "64", "--samples", "50", "--out", str(out)]
        assert cli.main(argv) == cli.EXIT_OK
        first = out.read_bytes()
        assert cli.main(argv) == cli.EXIT_OK
        assert out.read_bytes() == first
        lines = first.decode().splitlines()
        assert lines[0] == "t,g,expectation_F,defect_density"
        assert len(lines) == 51
        t, g, f, n = map(float, lines[-1].split(","))
        assert t == 0.0 and g == 0.0
        assert n == pytest.approx((1 - f) / 2, abs=1e-15)

    def test_dump_modes(self, tmp_path):
        out, modes = tmp_path / "q.csv", tmp_path / "m.csv"
        argv = ["quench", "--tau-q", "1", "--nk", "8", "--samples", "3", "--out", str(out), "--dump-modes", str(modes)]
        assert cli.main(argv) == cli.EXIT_OK
        lines = read_lines(modes)
        assert lines[0] == "t,k,u_re,u_im,v_re,v_im"
        assert len(lines) == 1 + 3 * 8
        for line in lines[1:]:
            _, _, ur, ui, vr, vi = map(float, line.split(","))
            assert ur ** 2 + ui ** 2 + vr ** 2 + vi ** 2 == pytest.approx(1.0, abs=1e-8)

    def test_lz_single_row(self, tmp_path):
        out = tmp_path / "lz.csv"
        assert cli.main(["quench", "--tau-q", "50", "--method", "lz", "--out", str(out)]) == cli.EXIT_OK
        assert len(read_lines(out)) == 2

    def test_unwritable_output(self, tmp_path):
        out = tmp_path / "missing-dir" / "q.csv"
        argv = ["quench", "--tau-q", "2", "--nk", "16", "--samples", "5", "--method", "approx", "--out", str(out)]
        assert cli.main(argv) == cli.EXIT_FAILURE

    def test_scaling_config_run(self, tmp_path):
        cfg = tmp_path / "fig4.cfg"
        cfg.write_text(
            "subcommand = scaling\n"
            "tau_q = 10\n"
            "nk = 512\n"
            f"out = {tmp_path / 'fit.csv'}\n"
            f"series_out = {tmp_path / 'series.csv'}\n"
            f"plot_script = {tmp_path / 'plots' / 'fig4.gp'}\n"
        )
        (tmp_path / "plots").mkdir()
        assert cli.main(["run", str(cfg)]) == cli.EXIT_OK
        fit = read_lines(tmp_path / "fit.csv")
        assert fit[0] == "side,slope,intercept,r_squared,n_points"
        assert [r.split(",")[0] for r in fit[1:]] == ["before", "after", "both"]
        assert read_lines(tmp_path / "series.csv")[0] == "t,expectation_F,abs_dF_dt"
        script = (tmp_path / "plots" / "fig4.gp").read_text()
        assert '"../series.csv"' in script
        assert str(tmp_path) not in script
        assert 'set datafile separator ","' in script

    def test_fig2_plot_is_log_x(self, tmp_path):
        out, gp = tmp_path / "fig2.csv", tmp_path / "fig2.gp"
        argv = ["fig2", "--tau-q-list", "10,100", "--out", str(out), "--plot-script", str(gp)]
        assert cli.main(argv) == cli.EXIT_OK
        assert "set logscale x" in gp.read_text()
        assert read_lines(out)[0] == "tau_q,f1,f2,rel_diff"

    def test_statics_run(self, tmp_path):
        out = tmp_path / "s.csv"
        assert cli.main(["statics", "--g", "0.5,2", "--n", "8", "--nk", "256", "--out", str(out)]) == cli.EXIT_OK
        lines = read_lines(out)
        assert lines[0] == ",".join(cli.STATICS_COLUMNS)
        assert len(lines) == 3

    def test_ed_ground_state(self, tmp_path, capsys):
        out = tmp_path / "ed.csv"
        assert cli.main(["ed", "--n", "6", "--g", "0", "--out", str(out)]) == cli.EXIT_OK
        values = dict(line.split(",") for line in read_lines(out)[1:])
        assert float(values["energy"]) == pytest.approx(-6.0)
        assert float(values["zz_3"]) == pytest.approx(1.0, abs=1e-10)

    def test_ed_wen(self, tmp_path):
        out = tmp_path / "wen.csv"
        assert cli.main(["ed", "--model", "wen", "--lx", "2", "--ly", "2", "--g", "1", "--j", "0",
                         "--out", str(out)]) == cli.EXIT_OK
        values = dict(line.split(",") for line in read_lines(out)[1:])
        assert float(values["F_avg"]) == pytest.approx(1.0, abs=1e-10)

    def test_ed_wen_needs_lattice(self):
        assert cli.main(["ed", "--model", "wen", "--g", "1"]) == cli.EXIT_CONFIG


class TestVerifyMapping:
    def test_clean_lattice(self, tmp_path, capsys):
        out = tmp_path / "map.csv"
        assert cli.main(["verify-mapping", "--lx", "3", "--ly", "4", "--out", str(out)]) == cli.EXIT_OK
        assert "0 counterexamples" in capsys.readouterr().out
        assert read_lines(out)[0] == ",".join(cli.MAPPING_COLUMNS)

    def test_counterexample_exit_code(self, monkeypatch):
        def broken(lattice, convention):
            fam = RelationFamily("neighbour anticommutation", checked=6, counterexamples=[((0, 0), (1, 1))])
            return VerificationReport(lattice, convention, [fam])

        monkeypatch.setattr(cli, "verify_mapping", broken)
        assert cli.main(["verify-mapping", "--lx", "2", "--ly", "3"]) == cli.EXIT_COUNTEREXAMPLE

    def test_half_lattice_rejected(self):
        assert cli.main(["verify-mapping", "--lx", "3"]) == cli.EXIT_CONFIG


def test_module_entry_point(tmp_path):
    out = tmp_path / "q.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "topoquench", "quench", "--tau-q", "5", "--method", "lz", "--out", str(out)],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0, proc.stderr
    assert read_lines(out)[0] == "t,g,expectation_F,defect_density"
    bad = subprocess.run([sys.executable, "-m", "topoquench", "quench"], capture_output=True, text=True, timeout=120)
    assert bad.returncode == 1 and "tau-q" in bad.stderr
