"""Configuration validation, CLI exit codes, artifact reproducibility."""

import json

import pytest

from cocyclelab.cli import main
from cocyclelab.config import ExperimentConfig
from cocyclelab.errors import ConfigError
from cocyclelab.reports import plot_series


SMALL = {
    "seed": 4242,
    "grids": {
        "n_max": 40, "fibers": 8, "trials": 400, "n_steps": 200,
        "N_grid": [20, 80], "variance_fibers": 60,
        "twisted_trials": 2000, "twisted_n_cf": 12, "twisted_n_norm": 20,
        "window_back": 70, "window_fwd": 90,
    },
    "counterexample": {"base_samples": 12, "tail_samples": 8000},
    "khitting": {"paths": 400, "n_max": 120, "k_max": 25, "a": None},
}


def write_config(tmp_path, extra=None, name="cfg.json"):
    data = dict(SMALL)
    if extra:
        data = {**data, **extra}
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


class TestConfig:
    def test_defaults_validate(self):
        cfg = ExperimentConfig.load(None)
        assert cfg.seed == 20260808
        assert cfg.cocycle().assignment[0].name == "doubling"

    def test_negative_tolerance_names_field(self, tmp_path):
        p = write_config(tmp_path, {"tolerances": {"pullback": -1e-9}})
        with pytest.raises(ConfigError) as err:
            ExperimentConfig.load(p)
        assert "tolerances.pullback" in str(err.value)

    def test_bad_weights_names_field(self, tmp_path):
        p = write_config(tmp_path, {"base": {"variant": "iid_finite", "weights": [0.5, 0.6]}})
        with pytest.raises(ConfigError) as err:
            ExperimentConfig.load(p)
        assert "base.weights" in str(err.value)

    def test_unknown_map_names_field(self, tmp_path):
        p = write_config(tmp_path, {"maps": {"0": "tripling", "1": "doubling"}})
        with pytest.raises(ConfigError) as err:
            ExperimentConfig.load(p)
        assert "maps.0" in str(err.value)

    def test_custom_map_in_config(self, tmp_path):
        p = write_config(tmp_path, {
            "maps": {
                "0": "doubling",
                "1": {"name": "skew", "branches": [["0", "1/2", "2", "0"], ["1/2", "1", "3/2", "-3/4"]]},
            }
        })
        cfg = ExperimentConfig.load(p)
        assert cfg.cocycle().assignment[1].name == "skew"

    def test_hash_stable_under_key_order(self, tmp_path):
        a = ExperimentConfig.load(write_config(tmp_path, name="a.json"))
        b = ExperimentConfig.load(write_config(tmp_path, name="b.json"))
        assert a.config_hash() == b.config_hash()

    def test_seed_override_changes_hash(self):
        cfg = ExperimentConfig.load(None)
        assert cfg.with_seed(1).config_hash() != cfg.config_hash()


class TestCliExitCodes:
    def test_validate_ok(self, tmp_path):
        assert main(["validate", "--config", write_config(tmp_path),
                     "--out", str(tmp_path / "out")]) == 0

    def test_validate_bad_config_is_one(self, tmp_path):
        p = write_config(tmp_path, {"tolerances": {"series": -1.0}})
        assert main(["validate", "--config", p, "--out", str(tmp_path / "out")]) == 1

    def test_missing_config_file_is_one(self, tmp_path):
        assert main(["validate", "--config", str(tmp_path / "nope.json")]) == 1

    def test_unknown_subcommand_rejected(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])

    def test_density_writes_artifacts(self, tmp_path):
        out = tmp_path / "out"
        assert main(["density", "--config", write_config(tmp_path), "--out", str(out)]) == 0
        assert (out / "manifest.json").exists()
        assert (out / "density.csv").exists()
        assert (out / "density.svg").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["constants"]["pullback_n"] == 1
        assert manifest["schema_version"] == 1

    def test_density_json_format(self, tmp_path):
        out = tmp_path / "outj"
        assert main(["density", "--config", write_config(tmp_path), "--out", str(out),
                     "--format", "json"]) == 0
        assert (out / "density.json").exists()
        assert not (out / "density.csv").exists()

    def test_counterexample_report(self, tmp_path):
        out = tmp_path / "ce"
        assert main(["counterexample", "--config", write_config(tmp_path), "--out", str(out)]) == 0
        report = json.loads((out / "counterexample_report.json").read_text())
        assert "loglog_slope" in report and "tail_exponent" in report
        assert report["psi_square_integral"] == 1.0

    def test_variance_uncertified_is_two(self, tmp_path):
        # the tower drive has no certifiable Green-Kubo tail: honest exit 2
        p = write_config(tmp_path, {
            "base": {"variant": "suspension", "inner": {"variant": "iid_heavy_tail", "delta": 0.5}},
            "maps": {"0": "doubling", "1": "buzzi_t1"},
            "grids": {**SMALL["grids"], "variance_fibers": 400, "N_grid": [20],
                      "trials": 200, "window_fwd": 600},
        })
        code = main(["variance", "--config", p, "--out", str(tmp_path / "tw"), "--seed", "1"])
        assert code == 2

    def test_seed_override(self, tmp_path):
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        main(["counterexample", "--config", write_config(tmp_path), "--out", str(out1),
              "--seed", "11"])
        main(["counterexample", "--config", write_config(tmp_path), "--out", str(out2),
              "--seed", "12"])
        a = (out1 / "blowup.csv").read_text()
        b = (out2 / "blowup.csv").read_text()
        assert a != b


class TestReproducibility:
    def test_byte_identical_across_thread_counts(self, tmp_path):
        cfgp = write_config(tmp_path, {"maps": {"0": "doubling", "1": "identity"}})
        outs = []
        for threads in ("1", "7"):
            out = tmp_path / f"t{threads}"
            assert main(["kestimate", "--config", cfgp, "--out", str(out),
                         "--threads", threads]) == 0
            outs.append(out)
        for name in ("khitting.csv", "khitting_tail.csv"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_svg_deterministic(self, tmp_path):
        series = [("x", [1.0, 2.0, 3.0], [1.0, 4.0, 9.0])]
        a = plot_series(tmp_path / "a.svg", series, "x", "y")
        b = plot_series(tmp_path / "b.svg", series, "x", "y")
        assert a.read_bytes() == b.read_bytes()

    def test_single_point_series(self, tmp_path):
        p = plot_series(tmp_path / "one.svg", [("pt", [2.0], [3.0])], "x", "y")
        assert p.exists() and p.stat().st_size > 0

    def test_empty_series_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            plot_series(tmp_path / "bad.svg", [("pt", [], [])], "x", "y")
