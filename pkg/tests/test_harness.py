"""Runner determinism, resume, caching, timing, and report round trips."""

import json
from pathlib import Path

import pytest

from crop_vqa.backends.synthetic import ConstantScorer, DelayScorer
from crop_vqa.harness.config import (
    BackendsConfig,
    ConfigError,
    DatasetConfig,
    RunConfig,
    parse_dataset_arg,
)
from crop_vqa.harness.fixtures import make_synthetic_dataset
from crop_vqa.harness.reporting import (
    ReportError,
    RunReport,
    aggregate_run,
    combine_method_runs,
    load_run_dir,
    reaggregate,
    read_question_results,
    write_run_outputs,
)
from crop_vqa.harness.runner import load_dataset, run_experiment
from crop_vqa.harness.timing import measure_timing
from crop_vqa.strategies import StrategyConfig


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synthetic")
    records_path = make_synthetic_dataset(root, n=12, seed=7)
    return DatasetConfig(kind="records", path=str(records_path))


def make_config(dataset, out_dir, strategy="iterative", **kwargs) -> RunConfig:
    strategy_cfg = StrategyConfig(kind=strategy, iterations=kwargs.pop("iterations", 4))
    return RunConfig(
        dataset=dataset,
        strategy=strategy_cfg,
        backends=BackendsConfig(mode="synthetic"),
        out_dir=str(out_dir),
        **kwargs,
    )


class TestConfig:
    def test_parse_dataset_specs(self):
        spec = parse_dataset_arg("records:/data/records.jsonl")
        assert (spec.kind, spec.path) == ("records", "/data/records.jsonl")
        spec = parse_dataset_arg("vqav2:/q.json:/a.json", image_dir="/imgs")
        assert spec.extra_path == "/a.json" and spec.image_dir == "/imgs"
        with pytest.raises(ConfigError):
            parse_dataset_arg("vqav2:/only-one-path.json")
        with pytest.raises(ConfigError):
            parse_dataset_arg("parquet:/x")

    def test_subset_requires_seed(self):
        with pytest.raises(ConfigError):
            DatasetConfig(kind="records", path="x.jsonl", subset_size=5)

    def test_env_url_overrides(self):
        cfg = BackendsConfig(mode="remote", scorer_url="http://explicit")
        env = {
            "CROP_VQA_SCORER_URL": "http://from-env",
            "CROP_VQA_VQA_URL": "http://vqa-env",
        }
        merged = cfg.with_env_overrides(env)
        assert merged.scorer_url == "http://explicit"  # explicit wins
        assert merged.vqa_url == "http://vqa-env"

    def test_resolved_embeds_everything(self, dataset, tmp_path):
        cfg = make_config(dataset, tmp_path / "out")
        resolved = cfg.resolved()
        assert resolved["strategy"]["kind"] == "iterative"
        assert resolved["dataset"]["path"] == dataset.path
        assert resolved["backends"]["mode"] == "synthetic"


class TestSubsetting:
    def test_seeded_subset_is_deterministic_and_ordered(self, dataset):
        cfg_a = DatasetConfig(kind="records", path=dataset.path, subset_size=5, seed=3)
        cfg_b = DatasetConfig(kind="records", path=dataset.path, subset_size=5, seed=3)
        a = [r.question_id for r in load_dataset(cfg_a)]
        b = [r.question_id for r in load_dataset(cfg_b)]
        assert a == b and len(a) == 5
        assert a == sorted(a)  # dataset order preserved
        different = [r.question_id for r in load_dataset(
            DatasetConfig(kind="records", path=dataset.path, subset_size=5, seed=4)
        )]
        assert different != a


class TestRunnerDeterminism:
    def test_identical_configs_byte_identical_records(self, dataset, tmp_path):
        report_a = run_experiment(make_config(dataset, tmp_path / "a"))
        report_b = run_experiment(make_config(dataset, tmp_path / "b"))
        bytes_a = (tmp_path / "a" / "records.jsonl").read_bytes()
        bytes_b = (tmp_path / "b" / "records.jsonl").read_bytes()
        assert bytes_a == bytes_b
        agg_a = {k: v for k, v in report_a.aggregates.items() if k != "timing"}
        agg_b = {k: v for k, v in report_b.aggregates.items() if k != "timing"}
        assert agg_a == agg_b

    def test_parallel_equals_serial_after_id_sort(self, dataset, tmp_path):
        run_experiment(make_config(dataset, tmp_path / "serial", jobs=1))
        run_experiment(make_config(dataset, tmp_path / "parallel", jobs=8))
        serial = sorted(
            (tmp_path / "serial" / "records.jsonl").read_text().splitlines()
        )
        parallel = sorted(
            (tmp_path / "parallel" / "records.jsonl").read_text().splitlines()
        )
        assert serial == parallel

    def test_warm_cache_equals_cold_cache(self, dataset, tmp_path):
        cache_dir = tmp_path / "cache"
        cold = run_experiment(
            make_config(dataset, tmp_path / "cold", cache_dir=str(cache_dir))
        )
        warm = run_experiment(
            make_config(dataset, tmp_path / "warm", cache_dir=str(cache_dir))
        )
        assert (tmp_path / "cold" / "records.jsonl").read_bytes() == (
            tmp_path / "warm" / "records.jsonl"
        ).read_bytes()
        assert warm.aggregates["cache"]["hits"] > 0
        agg_cold = dict(cold.aggregates)
        agg_warm = dict(warm.aggregates)
        agg_cold.pop("cache"), agg_warm.pop("cache")
        agg_cold.pop("timing"), agg_warm.pop("timing")
        assert agg_cold == agg_warm


class TestResume:
    def test_resume_after_kill_matches_uninterrupted(self, dataset, tmp_path):
        full = run_experiment(make_config(dataset, tmp_path / "full"))

        # Simulate a mid-run kill: keep a 5-record prefix, one of them torn.
        partial_dir = tmp_path / "partial"
        run_experiment(make_config(dataset, partial_dir))
        records_path = partial_dir / "records.jsonl"
        timings_path = partial_dir / "timings.jsonl"
        record_lines = records_path.read_text().splitlines(keepends=True)
        timing_lines = timings_path.read_text().splitlines(keepends=True)
        records_path.write_text("".join(record_lines[:5]) + record_lines[5][:20])
        timings_path.write_text("".join(timing_lines[:4]))
        (partial_dir / "report.json").unlink()

        resumed = run_experiment(make_config(dataset, partial_dir))
        assert records_path.read_bytes() == (tmp_path / "full" / "records.jsonl").read_bytes()
        assert resumed.aggregates["overall"] == full.aggregates["overall"]

    def test_resume_rejects_different_config(self, dataset, tmp_path):
        out = tmp_path / "out"
        run_experiment(make_config(dataset, out))
        with pytest.raises(ConfigError):
            run_experiment(make_config(dataset, out, strategy="none"))

    def test_no_resume_starts_fresh(self, dataset, tmp_path):
        out = tmp_path / "out"
        run_experiment(make_config(dataset, out))
        report = run_experiment(make_config(dataset, out, resume=False))
        assert len(report.records) == 12


class TestErrorsAndStrategies:
    def test_human_strategy_without_boxes_errors_per_question(
        self, dataset, tmp_path, stub_server
    ):
        # Strip the ground-truth boxes from some records; those questions must
        # be recorded as errored and excluded, not kill the run.
        from crop_vqa.backends.synthetic import ScriptedVqaModel
        from crop_vqa.datasets.analysis import most_frequent_answer
        from crop_vqa.datasets.records import write_records

        records = load_dataset(dataset)
        stripped = [r.with_gt_box(None) for r in records[:3]] + records[3:]
        stripped_path = tmp_path / "stripped.jsonl"
        write_records(stripped_path, stripped)

        answers = {r.question: most_frequent_answer(r.answers) for r in records}
        server = stub_server(vqa=ScriptedVqaModel(answers))
        cfg = RunConfig(
            dataset=DatasetConfig(kind="records", path=str(stripped_path)),
            strategy=StrategyConfig(kind="human"),
            backends=BackendsConfig(mode="remote", vqa_url=server.base_url),
            out_dir=str(tmp_path / "out"),
        )
        report = run_experiment(cfg)
        assert report.aggregates["errors"]["n_errored"] == 3
        assert report.aggregates["errors"]["by_kind"] == {"not-applicable": 3}
        assert report.aggregates["overall"]["n_evaluated"] == 9
        assert report.aggregates["overall"]["mean_accuracy"] == 1.0

    def test_transport_failures_error_questions_not_the_run(self, dataset, tmp_path):
        # Unreachable VQA endpoint: every question fails as backend-errored,
        # the run still completes and counts them.
        cfg = RunConfig(
            dataset=dataset,
            strategy=StrategyConfig(kind="none"),
            backends=BackendsConfig(
                mode="remote", vqa_url="http://127.0.0.1:9", timeout_s=0.3
            ),
            out_dir=str(tmp_path / "out"),
        )
        report = run_experiment(cfg)
        assert report.aggregates["errors"]["n_errored"] == 12
        assert report.aggregates["errors"]["by_kind"] == {"backend": 12}
        assert report.aggregates["overall"]["n_evaluated"] == 0

    def test_every_synthetic_strategy_kind_runs(self, dataset, tmp_path):
        for kind in ("none", "human", "iterative", "detector", "segmenter", "sliding_window", "patchmap"):
            cfg = make_config(dataset, tmp_path / kind, strategy=kind)
            report = run_experiment(cfg)
            assert report.aggregates["errors"]["n_errored"] == 0, kind
            assert report.aggregates["overall"]["n_evaluated"] == 12

    def test_crop_strategies_beat_no_crop_on_planted_fixture(self, dataset, tmp_path):
        baseline = run_experiment(make_config(dataset, tmp_path / "none", strategy="none"))
        human = run_experiment(make_config(dataset, tmp_path / "human", strategy="human"))
        iterative = run_experiment(
            make_config(dataset, tmp_path / "iter", strategy="iterative", iterations=20)
        )
        base_acc = baseline.aggregates["overall"]["mean_accuracy"]
        assert human.aggregates["overall"]["mean_accuracy"] > base_acc
        assert iterative.aggregates["overall"]["mean_accuracy"] > base_acc


class TestReporting:
    def test_aggregates_recomputable_from_emitted_files(self, dataset, tmp_path):
        out = tmp_path / "out"
        report = run_experiment(make_config(dataset, out))
        recomputed = reaggregate(out / "records.jsonl", out / "timings.jsonl")
        original = dict(report.aggregates)
        original.pop("cache", None)
        assert recomputed == original

    def test_reaggregated_csv_tables_identical_to_emitted(self, dataset, tmp_path):
        from crop_vqa.harness.reporting import render_run_tables

        out = tmp_path / "out"
        report = run_experiment(make_config(dataset, out))
        rebuilt = RunReport(
            config=report.config,
            records=report.records,
            timings=report.timings,
            aggregates=reaggregate(out / "records.jsonl", out / "timings.jsonl"),
        )
        for name, content in render_run_tables(rebuilt).items():
            assert (out / f"{name}.csv").read_text() == content

    def test_emitted_files_exist_with_expected_shapes(self, dataset, tmp_path):
        out = tmp_path / "out"
        run_experiment(make_config(dataset, out))
        for name in (
            "records.jsonl",
            "timings.jsonl",
            "report.json",
            "report.md",
            "accuracy.csv",
            "accuracy_by_size_group.csv",
            "accuracy_by_question_type.csv",
            "timing.csv",
        ):
            assert (out / name).exists(), name
        markdown = (out / "report.md").read_text()
        assert "| Method |" in markdown
        report_json = json.loads((out / "report.json").read_text())
        assert report_json["config"]["strategy"]["kind"] == "iterative"

    def test_empty_report_is_an_error(self, tmp_path):
        report = RunReport(config={}, records=[], timings=[], aggregates=aggregate_run([], []))
        with pytest.raises(ReportError):
            write_run_outputs(tmp_path, report)

    def test_combined_runs_and_gains(self, dataset, tmp_path):
        base_dir = tmp_path / "none"
        iter_dir = tmp_path / "iter"
        run_experiment(make_config(dataset, base_dir, strategy="none"))
        run_experiment(make_config(dataset, iter_dir, strategy="iterative", iterations=20))
        combined = combine_method_runs([base_dir, iter_dir], baseline_dir=base_dir)
        methods = [row["method"] for row in combined["methods"]]
        assert methods == ["none", "iterative"]
        gains = combined["gains_vs_baseline"][1]["gain_by_type"]
        assert sum(gains.values()) > 0  # cropping helped somewhere

    def test_load_run_dir_accepts_records_file(self, dataset, tmp_path):
        out = tmp_path / "out"
        run_experiment(make_config(dataset, out))
        report = load_run_dir(out / "records.jsonl")
        assert report.aggregates["overall"]["n_evaluated"] == 12


def _delayed_suite_builder(delay_s: float):
    from crop_vqa.harness.runner import build_backend_suite as original_builder

    def build(cfg, records, loader):
        suite = original_builder(cfg, records, loader)
        suite.scorer = DelayScorer(suite.scorer, delay_s)
        return suite

    return build


class TestTiming:
    def test_iterative_timing_tracks_call_count(self, dataset, monkeypatch):
        # 4*20+1 = 81 scorer calls at 10ms each: about 0.81s per question.
        from crop_vqa.harness import timing as timing_module

        monkeypatch.setattr(timing_module, "build_backend_suite", _delayed_suite_builder(0.010))
        cfg = RunConfig(
            dataset=DatasetConfig(kind="records", path=dataset.path, subset_size=1, seed=0),
            backends=BackendsConfig(mode="synthetic"),
            out_dir="unused",
        )
        means = measure_timing(
            cfg, [StrategyConfig(kind="iterative", iterations=20)], n_warmup=0, n_measure=1
        )
        assert 0.7 <= means["iterative"] <= 1.3

    def test_strategy_ratio_matches_call_count_ratio(self, dataset, monkeypatch):
        # iterative(5 iters) makes 21 calls; sliding 0.5/0.5 makes 10.
        from crop_vqa.harness import timing as timing_module

        monkeypatch.setattr(timing_module, "build_backend_suite", _delayed_suite_builder(0.005))
        cfg = RunConfig(
            dataset=DatasetConfig(kind="records", path=dataset.path, subset_size=1, seed=0),
            backends=BackendsConfig(mode="synthetic"),
            out_dir="unused",
        )
        means = measure_timing(
            cfg,
            [
                StrategyConfig(kind="iterative", iterations=5),
                StrategyConfig(kind="sliding_window", window_fractions=(0.5,)),
            ],
            n_warmup=0,
            n_measure=2,
        )
        ratio = means["iterative"] / means["sliding_window"]
        assert ratio == pytest.approx(21 / 10, rel=0.2)

    def test_zero_measure_is_config_error(self, dataset):
        cfg = RunConfig(
            dataset=dataset, backends=BackendsConfig(mode="synthetic"), out_dir="unused"
        )
        with pytest.raises(ConfigError):
            measure_timing(cfg, [StrategyConfig(kind="none")], n_measure=0)
