"""
Test suite for configuration, the offline pipeline and the CLI

Tests config resolution and validation, filter runs with metrics, variant
comparison and the subcommand exit statuses.
"""

import json
import os
import sys

import numpy as np
import pytest
import yaml

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(__file__)), 'src'))

from core.adaptive_noise import FSA_NET, HOPENET, load_profile, raw_noise, save_profile
from core.errors import ConfigError, PipelineError
from core.pose import EulerPose, FrameRecord
from core.synth import FSA_NET_LIKE, benchmark_spec, corrupt, gen_trajectory
from pipeline import config as config_module
from pipeline.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, cli_dispatch
from pipeline.config import CONFIG_ENV_VAR, RunConfig, load_config, parse_address
from pipeline.runner import (
    METRICS_SCHEMA_VERSION,
    SessionFactory,
    compare_variants,
    evaluate_streams,
    filter_frames,
    run_filter_pipeline,
)
from pipeline.streams import read_stream, write_error_pairs, write_stream


def write_config(path, document):
    path.write_text(yaml.safe_dump(document))
    return str(path)


def benchmark_frames(seed=0):
    return corrupt(gen_trajectory(benchmark_spec()), FSA_NET_LIKE.with_seed(seed))


class TestLoadConfig:
    """Test config resolution and validation."""

    def test_defaults_without_file(self, tmp_path, monkeypatch, caplog):
        monkeypatch.setattr(config_module, "DEFAULT_CONFIG_PATH", tmp_path / "absent.yaml")
        config = load_config(environ={})
        assert config == RunConfig()
        assert config.noise.profile == "fsa_net"
        assert "using default configuration" in caplog.text

    def test_shipped_default_config_is_valid(self):
        config = load_config(str(config_module.DEFAULT_CONFIG_PATH))
        assert config.resolve_profile() is FSA_NET
        assert config.loop_closure.xi == 0.618

    def test_missing_explicit_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(str(tmp_path / "missing.yaml"))

    def test_env_var_path(self, tmp_path):
        path = write_config(tmp_path / "env.yaml", {"noise": {"profile": "hopenet"}})
        config = load_config(environ={CONFIG_ENV_VAR: path})
        assert config.resolve_profile() is HOPENET

    def test_flag_beats_env(self, tmp_path):
        env = write_config(tmp_path / "env.yaml", {"noise": {"profile": "hopenet"}})
        flag = write_config(tmp_path / "flag.yaml", {"noise": {"profile": "fsa_net"}})
        assert load_config(flag, environ={CONFIG_ENV_VAR: env}).noise.profile == "fsa_net"

    def test_flat_and_nested_keys(self, tmp_path):
        path = write_config(
            tmp_path / "flat.yaml",
            {"loop_closure.xi": 0.5, "loop_closure": {"enabled": True}, "kalman.joseph_form": True},
        )
        config = load_config(path)
        assert config.loop_closure.xi == 0.5
        assert config.loop_closure.enabled
        assert config.kalman.joseph_form

    def test_unknown_section_rejected(self, tmp_path):
        path = write_config(tmp_path / "bad.yaml", {"kalmann": {}})
        with pytest.raises(ConfigError, match="kalmann"):
            load_config(path)

    def test_invalid_value_rejected(self, tmp_path):
        path = write_config(tmp_path / "bad.yaml", {"loop_closure": {"xi": 2.0}})
        with pytest.raises(ConfigError, match="xi"):
            load_config(path)

    def test_input_and_listen_exclusive(self):
        with pytest.raises(ConfigError, match="exclusive"):
            RunConfig.from_document({"io": {"input": "a.jsonl", "listen": "127.0.0.1:9000"}})

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("kalman: [unclosed\n")
        with pytest.raises(ConfigError, match="invalid YAML"):
            load_config(str(path))

    def test_profile_path_relative_to_config(self, tmp_path):
        save_profile(HOPENET.model_copy(update={"name": "custom"}), tmp_path / "custom.yaml")
        path = write_config(tmp_path / "run.yaml", {"noise": {"profile": "custom.yaml"}})
        assert load_config(path).resolve_profile().name == "custom"

    def test_clamp_override_and_constant_mode(self):
        config = RunConfig.from_document({"noise": {"profile": "fsa_net", "r_max": 100.0, "mode": "constant"}})
        profile = config.resolve_profile()
        assert profile.pitch.r_max == 100.0
        assert profile.yaw.lambda_ == 0.0

    def test_unknown_profile(self):
        config = RunConfig.from_document({"noise": {"profile": "nope"}})
        with pytest.raises(ConfigError, match="noise.profile"):
            config.resolve_profile()

    def test_with_overrides_skips_none(self):
        config = RunConfig().with_overrides({"io.input": "x.jsonl", "io.output": None})
        assert config.io.input == "x.jsonl"
        assert config.io.output is None

    def test_parse_address(self):
        assert parse_address("0.0.0.0:9999") == ("0.0.0.0", 9999)
        assert parse_address(":7000") == ("127.0.0.1", 7000)
        with pytest.raises(ConfigError):
            parse_address("localhost")


class TestFilterPipeline:
    """Test the offline filter run."""

    def test_filters_benchmark_with_metrics(self, tmp_path):
        source = write_stream(tmp_path / "in.jsonl", benchmark_frames())
        config = RunConfig.from_document(
            {
                "io": {
                    "input": str(source),
                    "output": str(tmp_path / "out" / "filtered.jsonl"),
                    "metrics": str(tmp_path / "out" / "metrics.json"),
                }
            }
        )
        result = run_filter_pipeline(config)
        metrics = json.loads((tmp_path / "out" / "metrics.json").read_text())
        assert metrics == json.loads(json.dumps(result.metrics))
        assert metrics["schema_version"] == METRICS_SCHEMA_VERSION
        assert metrics["frames"] == 1800
        assert metrics["profile"] == "fsa_net"
        for axis in ("pitch", "yaw", "roll"):
            assert metrics["jitter"][axis] < metrics["raw_jitter"][axis]

        filtered = read_stream(result.output_path)
        assert len(filtered) == 1800
        assert [f.pose for f in filtered] == [s.pose for s in result.run.states]

    def test_first_frame_initializes(self):
        frames = [FrameRecord(0.0, EulerPose(5, -3, 1)), FrameRecord(0.1, EulerPose(5, -3, 1))]
        run = filter_frames(SessionFactory.from_config(RunConfig()), frames)
        assert run.states[0].pose == EulerPose(5, -3, 1)
        assert len(run.latencies_ms) == 2

    def test_session_error_carries_frame_index(self):
        frames = [FrameRecord(1.0, EulerPose.zero()), FrameRecord(0.5, EulerPose.zero())]
        with pytest.raises(PipelineError) as info:
            filter_frames(SessionFactory.from_config(RunConfig()), frames)
        assert info.value.index == 1

    def test_no_input(self):
        with pytest.raises(ValueError, match="io.input"):
            run_filter_pipeline(RunConfig())

    def test_loop_closure_origin_reported(self):
        frames = [FrameRecord(k / 30.0, EulerPose(1.0, 2.0, 3.0)) for k in range(40)]
        config = RunConfig.from_document({"loop_closure": {"enabled": True}})
        result = run_filter_pipeline(config, frames)
        assert result.metrics["loop_closure_origin"] == {"pitch": 1.0, "yaw": 2.0, "roll": 3.0}
        assert result.metrics["settle_target"] == {"pitch": 0.0, "yaw": 0.0, "roll": 0.0}
        assert result.metrics["settle_time"] is None
        assert result.metrics["rmse"] is None

    def test_explicit_settle_target(self):
        frames = [FrameRecord(k / 30.0, EulerPose(1.0, 2.0, 3.0)) for k in range(40)]
        config = RunConfig.from_document({"io": {"settle_target": [1.0, 2.0, 3.0]}})
        result = run_filter_pipeline(config, frames)
        assert result.metrics["settle_target"] == {"pitch": 1.0, "yaw": 2.0, "roll": 3.0}
        assert result.metrics["settle_time"] == 0.0

    def test_loop_closure_settles_no_later_on_dwell_benchmark(self):
        frames = benchmark_frames()
        results = {}
        for enabled in (False, True):
            config = RunConfig.from_document(
                {
                    "loop_closure": {"enabled": enabled, "norm_mode": "per_axis"},
                    "io": {"settle_window": [25.0, 35.0]},
                }
            )
            results[enabled] = run_filter_pipeline(config, frames).metrics

        off, on = results[False], results[True]
        assert off["settle_target"] == on["settle_target"] == {"pitch": 0.0, "yaw": 0.0, "roll": 0.0}
        # calibrated from the benchmark's rest lead-in
        origin = np.array([on["loop_closure_origin"][axis] for axis in ("pitch", "yaw", "roll")])
        assert np.linalg.norm(origin) < 2.0
        assert on["settle_time"] is not None
        assert off["settle_time"] is None or on["settle_time"] <= off["settle_time"]

    def test_compare_variants(self):
        report = compare_variants(RunConfig(), benchmark_frames())
        assert list(report) == ["original", "standard", "adaptive", "adaptive_loop_closure"]
        assert report["standard"]["profile"] == "fsa_net-constant"
        assert report["original"]["jitter"] == report["original"]["raw_jitter"]
        assert report["adaptive_loop_closure"]["loop_closure_origin"] is not None

    def test_evaluate_streams(self):
        frames = benchmark_frames()
        report = evaluate_streams(frames, frames)
        assert report["difference_rmse"] == {"pitch": 0.0, "yaw": 0.0, "roll": 0.0}
        assert report["candidate_rmse"] == report["reference_rmse"]
        with pytest.raises(ValueError):
            evaluate_streams(frames, frames[:-1])


class TestCli:
    """Test subcommands and exit statuses."""

    def setup_method(self):
        self.config_document = {"noise": {"profile": "fsa_net"}, "logging": {"level": "WARNING"}}

    def config_path(self, tmp_path):
        return write_config(tmp_path / "tracker.yaml", self.config_document)

    def test_usage_error(self, capsys):
        assert cli_dispatch([]) == EXIT_USAGE
        assert cli_dispatch(["bogus"]) == EXIT_USAGE
        assert cli_dispatch(["fit"]) == EXIT_USAGE

    def test_help(self, capsys):
        assert cli_dispatch(["--help"]) == EXIT_OK

    def test_missing_input_is_data_error(self, tmp_path, capsys):
        status = cli_dispatch(["filter", "--config", self.config_path(tmp_path), "--in", str(tmp_path / "nope.jsonl")])
        assert status == EXIT_DATA
        assert "nope.jsonl" in capsys.readouterr().err

    def test_bad_config_is_data_error(self, tmp_path, capsys):
        path = write_config(tmp_path / "bad.yaml", {"kalman": {"fixed_dt": -1}})
        assert cli_dispatch(["filter", "--config", path, "--in", "x.jsonl"]) == EXIT_DATA

    def test_simulate_then_filter(self, tmp_path, capsys):
        config = self.config_path(tmp_path)
        stream = tmp_path / "bench.jsonl"
        errors = tmp_path / "errors.csv"
        assert cli_dispatch(
            ["simulate", "--config", config, "--out", str(stream), "--errors-csv", str(errors), "--seed", "3"]
        ) == EXIT_OK
        frames = read_stream(stream)
        assert len(frames) == 1800
        assert all(f.ground_truth is not None for f in frames)
        assert errors.exists()

        capsys.readouterr()
        out = tmp_path / "filtered.csv"
        assert cli_dispatch(["filter", "--config", config, "--in", str(stream), "--out", str(out)]) == EXIT_OK
        metrics = json.loads(capsys.readouterr().out)
        assert metrics["frames"] == 1800
        assert len(read_stream(out)) == 1800

    def test_simulate_is_seeded(self, tmp_path, capsys):
        config = self.config_path(tmp_path)
        for name in ("a", "b"):
            cli_dispatch(["simulate", "--config", config, "--out", str(tmp_path / f"{name}.jsonl"), "--seed", "7"])
        assert (tmp_path / "a.jsonl").read_text() == (tmp_path / "b.jsonl").read_text()

    def test_fit_yaw_inherits_other_axes(self, tmp_path, capsys):
        centers = np.arange(-85.0, 90.0, 10.0)
        pairs = [
            (EulerPose(0.0, c, 0.0), EulerPose(0.0, c + raw_noise(FSA_NET.yaw, c), 0.0))
            for c in centers
            for _ in range(3)
        ]
        errors = write_error_pairs(tmp_path / "errors.csv", pairs)
        profile_path = tmp_path / "fitted.yaml"
        report_path = tmp_path / "report.json"
        status = cli_dispatch(
            [
                "fit", "--config", self.config_path(tmp_path), "--in", str(errors), "--axis", "yaw",
                "--out", str(profile_path), "--report", str(report_path), "--name", "bench",
            ]
        )
        assert status == EXIT_OK
        profile = load_profile(profile_path)
        assert profile.name == "bench"
        assert profile.yaw.lambda_ == pytest.approx(4.11, rel=1e-2)
        assert profile.yaw.sigma == pytest.approx(30.87, rel=1e-2)
        assert profile.yaw.tau == pytest.approx(7.64, rel=1e-2)
        assert profile.pitch == FSA_NET.pitch
        assert profile.metadata["provenance"]["pitch"] == {"inherited_from": "fsa_net"}
        assert profile.metadata["provenance"]["sample_count"] == len(pairs)
        report = json.loads(report_path.read_text())
        assert "yaw" in report["axes"]

    def test_compare_writes_json(self, tmp_path, capsys):
        stream = write_stream(tmp_path / "bench.jsonl", benchmark_frames())
        out = tmp_path / "compare.json"
        status = cli_dispatch(["compare", "--config", self.config_path(tmp_path), "--in", str(stream), "--json", str(out)])
        assert status == EXIT_OK
        assert set(json.loads(out.read_text())) == {"original", "standard", "adaptive", "adaptive_loop_closure"}

    def test_eval(self, tmp_path, capsys):
        stream = write_stream(tmp_path / "bench.jsonl", benchmark_frames())
        out = tmp_path / "eval.json"
        status = cli_dispatch(["eval", "--config", self.config_path(tmp_path), str(stream), str(stream), "--json", str(out)])
        assert status == EXIT_OK
        assert json.loads(out.read_text())["difference_rmse"]["yaw"] == 0.0
