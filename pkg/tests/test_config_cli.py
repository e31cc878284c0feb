import json
import subprocess

import numpy as np
import pytest

from mesoscatter import cli
from mesoscatter.config import dumps_report, load_config, parse_config
from mesoscatter.errors import ConfigError
from conftest import experiment_doc


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def run_cli(tmp_path, subcommand, doc, out="out"):
    code = cli.main([subcommand, "--config", str(write_config(tmp_path, doc)),
                     "--out-dir", str(tmp_path / out)])
    return code, tmp_path / out


class TestParseConfig:
    def test_defaults(self):
        cfg = parse_config(experiment_doc())
        assert cfg.solver.method == "auto" and cfg.convention == "depolarizing"
        assert cfg.outputs["report_json"] == "report.json"
        assert cfg.outputs["include_timing"] is False
        assert cfg.pol.P0_eps[0, 0] == pytest.approx(np.pi)

    @pytest.mark.parametrize("path, patch", [
        ("wave.P", {"wave": {"k": 1.0, "theta": [0, 0, 1.0], "P": [1.0, 0, 0.5]}}),
        ("wave.theta", {"wave": {"k": 1.0, "theta": [0, 0, 2.0], "P": [1.0, 0, 0]}}),
        ("wave.k", {"wave": {"k": -1.0, "theta": [0, 0, 1.0], "P": [1.0, 0, 0]}}),
        ("cluster.n_per_side", {"cluster": {"n_per_side": 2.5}}),
        ("sweep.c_r", {"sweep": {"c_r": [2.0, 0.5, 4.0]}}),
        ("solver.method", {"solver": {"method": "lu"}}),
        ("effective.convention", {"effective": {"convention": "other"}}),
        ("analysis.holder_alpha", {"analysis": {"holder_alpha": 1.5}}),
        ("shape.eps", {"shape": {"shape": "sphere", "mu": 1.5}}),
    ])
    def test_errors_name_the_field(self, path, patch):
        doc = experiment_doc()
        doc.update(patch)
        with pytest.raises(ConfigError) as info:
            parse_config(doc)
        assert info.value.path == path

    def test_missing_wave(self):
        with pytest.raises(ConfigError) as info:
            parse_config({})
        assert info.value.path == "wave"

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(bad)


class TestReportEncoding:
    def test_floats_keep_full_precision(self):
        text = dumps_report({"a": 0.1, "b": 2.0, "c": 1e-20, "d": 3})
        assert text == '{"a": 0.10000000000000001, "b": 2.0, "c": 9.9999999999999995e-21, "d": 3}\n'
        assert json.loads(text)["a"] == 0.1

    def test_non_finite_values(self):
        text = dumps_report({"x": float("inf"), "y": float("nan"), "z": [-np.inf]})
        assert text == '{"x": Infinity, "y": NaN, "z": [-Infinity]}\n'

    def test_key_order_is_insertion_order(self):
        assert dumps_report({"b": 1, "a": True, "c": None}) == '{"b": 1, "a": true, "c": null}\n'


class TestSubcommands:
    def test_k0(self, tmp_path, capsys):
        code, out = run_cli(tmp_path, "k0", experiment_doc())
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        np.testing.assert_allclose(report["K0"], -np.eye(3) / 3, atol=1e-6)
        assert "deviation from -I/3" in capsys.readouterr().out

    def test_foldy_lax(self, tmp_path):
        doc = experiment_doc(n=4)
        doc["cluster"]["c_r"] = 6.0
        code, out = run_cli(tmp_path, "foldy-lax", doc)
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["M"] == 64 and report["apriori_bounds"]["holds"]
        assert report["residual_norm"] < 1e-10
        assert report["far_field_remainder"]["added_to_far_field"] is False
        header = (out / "far_field.csv").read_text().splitlines()
        assert len(header) == 87

    def test_ls_solve_and_effective(self, tmp_path):
        doc = experiment_doc(N=6, analysis={"holder_alpha": 0.5},
                             outputs={"volume_json": "volume.json"})
        doc["cluster"]["c_r"] = 4.0
        assert run_cli(tmp_path, "ls-solve", doc)[0] == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["regularity_diagnostic"]["c_reg_assumed"] == 1.0
        assert report["holder_estimate"]["is_estimate"] is True
        assert json.loads((tmp_path / "out" / "volume.json").read_text())["N"] == 6
        code, out = run_cli(tmp_path, "effective", doc, out="eff")
        assert code == 0
        assert "eps_ring" in json.loads((out / "report.json").read_text())

    def test_counting(self, tmp_path):
        code, out = run_cli(tmp_path, "counting", experiment_doc(counting={"n_values": [4, 6, 8],
                                                                           "exponents": [2]}))
        assert code == 0
        fits = json.loads((out / "report.json").read_text())["fits"]
        assert len(fits) == 1 and -3.6 < fits[0]["fitted_slope"] < -2.8

    def test_compare_writes_both_far_fields(self, tmp_path):
        doc = experiment_doc(outputs={"effective_far_field_csv": "far_field_eff.csv"})
        doc["cluster"]["c_r"] = 4.0
        code, out = run_cli(tmp_path, "compare", doc)
        assert code == 0
        for name in ("report.json", "far_field.csv", "far_field_eff.csv"):
            assert (out / name).exists()

    def test_sweep(self, tmp_path):
        code, out = run_cli(tmp_path, "sweep", experiment_doc())
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert len(report["sweep"]) == 3
        assert np.isfinite(report["fitted_slope"])
        assert "runtime_s" not in report
        assert "runtime_s" in json.loads((out / "report.timing.json").read_text())

    def test_sweep_is_byte_identical(self, tmp_path):
        doc = experiment_doc()
        run_cli(tmp_path, "sweep", doc, out="a")
        run_cli(tmp_path, "sweep", doc, out="b")
        assert (tmp_path / "a" / "report.json").read_bytes() == \
            (tmp_path / "b" / "report.json").read_bytes()

    def test_timing_inline_on_request(self, tmp_path):
        code, out = run_cli(tmp_path, "sweep", experiment_doc(outputs={"include_timing": True}))
        assert code == 0
        assert "runtime_s" in json.loads((out / "report.json").read_text())


class TestExitCodes:
    def test_non_transverse_polarization(self, tmp_path, capsys):
        doc = experiment_doc()
        doc["wave"]["P"] = [1.0, 0.0, 0.3]
        code, _ = run_cli(tmp_path, "k0", doc)
        assert code == 2
        assert "wave.P" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert cli.main(["k0", "--config", str(tmp_path / "nope.json")]) == 2

    def test_missing_section_for_subcommand(self, tmp_path, capsys):
        doc = experiment_doc()
        del doc["sweep"]
        assert run_cli(tmp_path, "sweep", doc)[0] == 2
        assert "sweep" in capsys.readouterr().err

    def test_solver_failure_writes_history(self, tmp_path):
        doc = experiment_doc(n=4, solver={"method": "iterative", "tol": 1e-15, "restart": 2,
                                          "max_iter": 4})
        doc["cluster"]["c_r"] = 1.0
        code, out = run_cli(tmp_path, "foldy-lax", doc)
        assert code == 3
        history = json.loads((out / cli.RESIDUAL_HISTORY_FILE).read_text())
        assert len(history["residual_history"]) > 0

    def test_library_error(self, tmp_path):
        doc = experiment_doc(c_values=(2.0, 2.0, 4.0))
        assert run_cli(tmp_path, "sweep", doc)[0] == 1


def test_console_script(tmp_path):
    cfg = write_config(tmp_path, experiment_doc())
    done = subprocess.run(["mesoscatter", "k0", "--config", str(cfg), "--out-dir",
                           str(tmp_path / "out")], capture_output=True, text=True, check=False)
    assert done.returncode == 0, done.stderr
    assert (tmp_path / "out" / "report.json").exists()
