"""Experiment-runner tests: config schema, CSV conventions, exit codes.

Runs go through `main` in-process with configs written to tmp_path, so
every artifact lands in a throwaway directory.  Trial counts are kept
small; the statistical heavy lifting lives in the acceptance tests.
"""

import json
import subprocess
import sys

import numpy as np
import pytest

from lossless.cli import (
    EXPERIMENTS,
    ConfigError,
    build_config,
    config_schema,
    main,
    validate,
)
from lossless.thermal import BOLTZMANN_SI


def _write_config(tmp_path, name="config.json", **entries):
    path = tmp_path / name
    path.write_text(json.dumps(entries), encoding="utf-8")
    return path


class TestConfigSchema:
    def test_defaults_fill_in(self):
        cfg = build_config("approx-memoryless")
        assert cfg.params["tau"] == 1.0
        assert cfg.params["n_values"] == [4, 8, 16, 32, 64, 128, 256]
        assert cfg.seed is None
        assert cfg.threads == 1
        assert cfg.boltzmann == 1.0
        assert cfg.out == "results/approx-memoryless"

    def test_flags_beat_file_beats_defaults(self, tmp_path):
        path = _write_config(tmp_path, seed=1, threads=2, tau=3.0)
        cfg = build_config("approx-memoryless", path, seed=9, out="elsewhere")
        assert cfg.seed == 9
        assert cfg.threads == 2
        assert cfg.params["tau"] == 3.0
        assert cfg.out == "elsewhere"

    def test_missing_seed_on_stochastic_names_the_field(self):
        with pytest.raises(ConfigError, match="seed"):
            build_config("fdt")

    def test_negative_tau_rejected(self, tmp_path):
        path = _write_config(tmp_path, tau=-1.0)
        with pytest.raises(ConfigError, match="'tau'"):
            build_config("approx-memoryless", path)

    def test_unknown_field_named(self, tmp_path):
        path = _write_config(tmp_path, seed=1, bogus=2)
        with pytest.raises(ConfigError, match="'bogus'"):
            build_config("fdt", path)

    def test_experiment_mismatch_rejected(self, tmp_path):
        path = _write_config(tmp_path, experiment="fdt", seed=1)
        with pytest.raises(ConfigError, match="subcommand"):
            build_config("langevin", path)

    def test_malformed_json_reported_with_position(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{oops", encoding="utf-8")
        with pytest.raises(ConfigError, match="invalid JSON"):
            build_config("fdt", path)

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            build_config("fdt", tmp_path / "nope.json")

    def test_seed_must_be_a_nonnegative_integer(self, tmp_path):
        for bad in (3.5, True, "3", -1):
            path = _write_config(tmp_path, seed=bad)
            with pytest.raises(ConfigError, match="'seed'"):
                build_config("fdt", path)

    def test_boltzmann_presets(self, tmp_path):
        assert build_config("fdt", _write_config(tmp_path, seed=1, boltzmann="si")).boltzmann == BOLTZMANN_SI
        assert build_config("fdt", _write_config(tmp_path, seed=1, boltzmann="unit")).boltzmann == 1.0
        assert build_config("fdt", _write_config(tmp_path, seed=1, boltzmann=2.0)).boltzmann == 2.0
        with pytest.raises(ConfigError, match="'boltzmann'"):
            build_config("fdt", _write_config(tmp_path, seed=1, boltzmann="kelvin"))
        with pytest.raises(ConfigError, match="'boltzmann'"):
            build_config("fdt", _write_config(tmp_path, seed=1, boltzmann=-1.0))

    def test_measure_needs_a_seed_only_when_noisy(self, tmp_path):
        cfg = build_config("measure", _write_config(tmp_path, variant="M1"))
        assert cfg.seed is None
        with pytest.raises(ConfigError, match="seed"):
            build_config("measure", _write_config(tmp_path, variant="M1hat"))

    def test_model_file_must_exist(self, tmp_path):
        path = _write_config(tmp_path, seed=1, model={"file": "missing.json"})
        with pytest.raises(ConfigError, match="does not exist"):
            build_config("fdt", path)

    def test_model_file_resolved_next_to_the_config(self, tmp_path):
        (tmp_path / "model.json").write_text(
            json.dumps({"J": [[0.0, -1.0], [1.0, 0.0]], "B": [[1.0], [0.0]]}),
            encoding="utf-8",
        )
        path = _write_config(tmp_path, seed=1, model={"file": "model.json"})
        cfg = build_config("fdt", path)
        assert cfg.params["model"]["J"] == [[0.0, -1.0], [1.0, 0.0]]

    def test_model_requires_every_matrix(self, tmp_path):
        path = _write_config(tmp_path, seed=1, model={"J": [[0.0]]})
        with pytest.raises(ConfigError, match="missing matrix 'B'"):
            build_config("fdt", path)

    def test_kernel_shape_validation(self, tmp_path):
        path = _write_config(tmp_path, kernel={"dt": 0.1, "values": [[1.0, 0.0]]})
        with pytest.raises(ConfigError, match="'kernel'"):
            build_config("approx-dissipative", path)

    def test_variant_choices(self, tmp_path):
        path = _write_config(tmp_path, seed=1, variant="M3")
        with pytest.raises(ConfigError, match="'variant'"):
            build_config("measure", path)

    def test_validate_accepts_a_built_config(self):
        cfg = build_config("tradeoff", seed=1)
        assert validate(cfg) == []

    def test_echo_round_trips(self, tmp_path):
        cfg = build_config("tradeoff", seed=5, out="somewhere")
        path = tmp_path / "echo.json"
        path.write_text(json.dumps(cfg.echo()), encoding="utf-8")
        assert build_config("tradeoff", path) == cfg

    def test_schema_is_published(self):
        family = config_schema()
        assert set(family) == set(EXPERIMENTS)
        fdt = config_schema("fdt")
        assert fdt["additionalProperties"] is False
        assert fdt["properties"]["lag_count"]["default"] == 50
        assert fdt["properties"]["threads"]["minimum"] == 1


class TestRunsAndArtifacts:
    def test_memoryless_csv_contract(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, n_values=[4, 8, 16], dt=1e-3)
        out = tmp_path / "mem"
        assert main(["approx-memoryless", "--config", str(cfg), "--out", str(out)]) == 0
        raw = (out / "memoryless.csv").read_bytes()
        assert b"\r" not in raw
        lines = raw.decode("utf-8").splitlines()
        assert lines[0] == "N,measured_error,error_bound"
        assert len(lines) == 4
        for line in lines[1:]:
            n, measured, bound = line.split(",")
            assert float(measured) <= float(bound)
            # 17 significant digits round-trip: re-rendering reproduces the text
            assert format(float(measured), ".17g") == measured
            assert format(float(bound), ".17g") == bound
        assert "check bound_dominates: pass" in capsys.readouterr().out

    def test_manifest_contents(self, tmp_path):
        cfg = _write_config(tmp_path, n_values=[4, 8, 16], dt=1e-3)
        out = tmp_path / "mem"
        assert main(["approx-memoryless", "--config", str(cfg), "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["experiment"] == "approx-memoryless"
        assert manifest["outputs"] == ["memoryless.csv"]
        assert all(check["passed"] for check in manifest["checks"])
        assert set(manifest["versions"]) == {"lossless", "numpy", "scipy", "python"}
        # the config echo is itself a working config file
        echo = tmp_path / "echo.json"
        echo.write_text(json.dumps(manifest["config"]), encoding="utf-8")
        rebuilt = build_config("approx-memoryless", echo)
        assert rebuilt.params["n_values"] == [4, 8, 16]

    def test_rerun_is_bitwise_identical(self, tmp_path):
        cfg = _write_config(tmp_path, variant="M1hat", trials=300, seed=7)
        first, second, threaded = (tmp_path / n for n in ("a", "b", "c"))
        assert main(["measure", "--config", str(cfg), "--out", str(first)]) == 0
        assert main(["measure", "--config", str(cfg), "--out", str(second)]) == 0
        assert main(["measure", "--config", str(cfg), "--out", str(threaded), "--threads", "3"]) == 0
        for name in ("outcome.csv", "record.csv"):
            baseline = (first / name).read_bytes()
            assert (second / name).read_bytes() == baseline
            assert (threaded / name).read_bytes() == baseline

    def test_fdt_small_run(self, tmp_path):
        cfg = _write_config(tmp_path, seed=2, trials=600, lag_max=2.0, lag_count=5, samples=800)
        out = tmp_path / "fdt"
        assert main(["fdt", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "fdt.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "lag,analytic,empirical,stderr"
        assert len(lines) == 6
        first = lines[1].split(",")
        assert float(first[0]) == 0.0 and float(first[1]) == 1.0
        equi = (out / "equipartition.csv").read_text(encoding="utf-8").splitlines()
        assert equi[0] == "samples,mean_energy,expected_energy,stderr"
        assert float(equi[1].split(",")[2]) == 1.5

    def test_tradeoff_small_run(self, tmp_path):
        cfg = _write_config(
            tmp_path, seed=4, variant="M1hat", tm_values=[1e-3], km_values=[0.5, 2.0], trials=300
        )
        out = tmp_path / "tr"
        assert main(["tradeoff", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "tradeoff.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "t_m,k_m,lhs,rhs,ratio"
        rows = [line.split(",") for line in lines[1:]]
        assert [float(r[3]) for r in rows] == [2.0, 2.0]
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        notes = {obs["name"] for obs in manifest["observations"]}
        assert "product_ratio_range" in notes

    def test_table1_ideal_variants_are_deterministic(self, tmp_path):
        cfg = _write_config(
            tmp_path, seed=1, variants=["M1", "M2"], tm_values=[1e-3, 3e-3], trials=2
        )
        out = tmp_path / "t1"
        assert main(["table1", "--config", str(cfg), "--out", str(out)]) == 0
        fits = (out / "fits.csv").read_text(encoding="utf-8").splitlines()
        assert fits[0] == "variant,column,exponent,slope,coefficient,reference,ratio,note"
        m2 = [line for line in fits[1:] if line.startswith("M2,")]
        assert len(m2) == 4 and all("identically zero" in line for line in m2)

    def test_nonlinear_small_run(self, tmp_path):
        cfg = _write_config(tmp_path, seed=9, trials=3, e0_values=[1e2, 1e4, 1e6])
        out = tmp_path / "nl"
        assert main(["approx-nonlinear", "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "inequality.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "trial,e0,peak_input,max_error,running_margin,flat_margin"
        assert len(lines) == 4

    def test_failed_check_exits_3_and_still_writes(self, tmp_path):
        # far too short a window for the stationary variance to settle
        cfg = _write_config(tmp_path, seed=3, horizon=2.0, burn_in=0)
        out = tmp_path / "short"
        assert main(["langevin", "--config", str(cfg), "--out", str(out)]) == 3
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert any(not check["passed"] for check in manifest["checks"])

    def test_numerical_blowup_exits_4(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, seed=3, dt=2.5, horizon=5000.0, burn_in=0)
        with np.errstate(over="ignore", invalid="ignore"):
            code = main(["langevin", "--config", str(cfg), "--out", str(tmp_path / "div")])
        assert code == 4
        assert "numerical failure" in capsys.readouterr().err

    def test_validate_flag(self, tmp_path, capsys):
        assert main(["fdt", "--validate", "--seed", "1"]) == 0
        assert capsys.readouterr().out.strip() == "ok"
        assert main(["fdt", "--validate"]) == 2
        assert "'seed'" in capsys.readouterr().err

    def test_bad_config_exits_2(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, tau=-2.0)
        assert main(["approx-memoryless", "--config", str(cfg)]) == 2
        assert "'tau'" in capsys.readouterr().err

    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "lossless", "--version"],
            capture_output=True,
            text=True,
            check=False,
        )
        assert proc.returncode == 0
        assert "lossless" in proc.stdout
