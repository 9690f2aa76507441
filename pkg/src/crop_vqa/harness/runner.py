"""Experiment runner: dataset x strategy x backends -> per-question records.

Records stream to disk in dataset order as workers finish (a reorder buffer,
`ThreadPoolExecutor.map`, keeps the file order independent of scheduling), so
an interrupted run resumes from a clean prefix and reruns of the same config
produce byte-identical ``records.jsonl`` regardless of the worker count.
"""

from __future__ import annotations

import json
import random
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional

from ..backends.cache import ScoreCache, cache_key
from ..backends.interfaces import BackendError, BackendSuite
from ..backends.remote import (
    RemoteDetector,
    RemoteSaliencySource,
    RemoteScorer,
    RemoteSegmenter,
    RemoteVqaModel,
)
from ..datasets.analysis import attach_derived_boxes, size_group_for
from ..datasets.question_types import classify_question_type
from ..datasets.records import VqaRecord, read_records
from ..datasets.textvqa import ingest_textvqa
from ..datasets.vqav2 import ingest_vqav2
from ..geometry import BoundsError, GeometryError, Image, crop_image, rel_size
from ..imaging import load_image
from ..metrics import MetricError, accuracy_fn, normalize_metric_variant
from ..strategies import (
    MissingBackendError,
    NotApplicableError,
    StrategyError,
    apply_strategy,
    required_capabilities,
)
from .config import BackendsConfig, ConfigError, DatasetConfig, RunConfig
from .reporting import (
    CONFIG_FILENAME,
    QuestionResult,
    RECORDS_FILENAME,
    RunReport,
    TIMINGS_FILENAME,
    TimingRecord,
    aggregate_run,
    read_question_results,
    read_timings,
    write_run_outputs,
)
from .synth import build_synthetic_suite

# Failures that break one question but must not kill the run.
_PER_QUESTION_ERRORS = (
    BackendError,
    StrategyError,
    MetricError,
    GeometryError,
    OSError,
)


def _error_kind(exc: Exception) -> str:
    if isinstance(exc, NotApplicableError):
        return "not-applicable"
    if isinstance(exc, BackendError):
        return "backend"
    if isinstance(exc, MetricError):
        return "metric"
    if isinstance(exc, BoundsError):
        return "bad-box"
    if isinstance(exc, FileNotFoundError):
        return "image-missing"
    if isinstance(exc, StrategyError):
        return "strategy"
    return "data"


def load_dataset(cfg: DatasetConfig) -> list[VqaRecord]:
    """Load and optionally subsample records per the dataset config."""
    if cfg.kind == "records":
        records = read_records(cfg.path)
    elif cfg.kind == "vqav2":
        records = ingest_vqav2(cfg.path, cfg.extra_path, cfg.image_dir).records
    else:
        records = ingest_textvqa(cfg.path, cfg.extra_path, cfg.image_dir).records
    if cfg.derive_boxes:
        records, _ = attach_derived_boxes(records)
    if cfg.subset_size is not None and cfg.subset_size < len(records):
        rng = random.Random(cfg.seed)
        keep = sorted(rng.sample(range(len(records)), cfg.subset_size))
        records = [records[i] for i in keep]
    return records


def _record_image_path(record: VqaRecord, image_dir: Optional[str]) -> Path:
    path = Path(record.image_ref)
    if not path.is_absolute() and image_dir:
        path = Path(image_dir) / path
    return path


def build_backend_suite(
    cfg: RunConfig, records: list[VqaRecord], image_loader: Callable[[VqaRecord], Image]
) -> BackendSuite:
    backends = cfg.backends
    if backends.mode == "synthetic":
        return build_synthetic_suite(records, image_loader, backends)
    suite = BackendSuite()
    if backends.scorer_url:
        suite.scorer = RemoteScorer(backends.scorer_url, backends.timeout_s)
    if backends.detector_url:
        suite.detector = RemoteDetector(backends.detector_url, backends.timeout_s)
    if backends.segmenter_url:
        suite.segmenter = RemoteSegmenter(backends.segmenter_url, backends.timeout_s)
    if backends.vqa_url:
        suite.vqa = RemoteVqaModel(backends.vqa_url, backends.timeout_s)
    if backends.saliency_url:
        suite.saliency = RemoteSaliencySource(backends.saliency_url, backends.timeout_s)
    return suite


def check_required_backends(
    strategy_kind: str, suite: BackendSuite, need_vqa: bool = True
) -> None:
    missing = [
        capability
        for capability in required_capabilities(strategy_kind)
        if getattr(suite, capability) is None
    ]
    if need_vqa and suite.vqa is None:
        missing.append("vqa")
    if missing:
        raise ConfigError(
            f"strategy {strategy_kind!r} needs backends {sorted(set(missing))}; "
            "configure their endpoint URLs or use synthetic mode"
        )


def _error_text(kind: str, exc: Exception) -> str:
    detail = " ".join(str(exc).split())
    return f"{kind}: {detail[:300]}"


class _QuestionWorker:
    """Processes one record end to end; shared across pool threads."""

    def __init__(
        self,
        cfg: RunConfig,
        suite: BackendSuite,
        cache: Optional[ScoreCache],
        image_loader: Callable[[VqaRecord], Image],
    ):
        self.cfg = cfg
        self.suite = suite
        self.cache = cache
        self.load_image = image_loader
        self.score_answers = accuracy_fn(cfg.metric_variant)

    def _answer(self, images, record: VqaRecord, crop_rect):
        vqa = self.suite.vqa
        if self.cache is not None:
            key = cache_key(vqa.identity, images[0].content_hash(), crop_rect, record.question)
            hit = self.cache.get(key)
            if hit is not None:
                return hit["answer"], hit.get("answer_score")
        result = vqa.answer(images, record.question)
        payload = {"answer": result.text, "answer_score": result.score}
        if self.cache is not None:
            self.cache.put(key, payload)
        return payload["answer"], payload.get("answer_score")

    def __call__(self, record: VqaRecord) -> tuple[QuestionResult, TimingRecord]:
        question_type = classify_question_type(record.question).value
        strategy = self.cfg.strategy
        try:
            image = self.load_image(record)
            size_group = None
            if record.gt_box is not None:
                size_group = size_group_for(rel_size(record.gt_box, image)).value

            t0 = time.perf_counter()
            crop = apply_strategy(
                strategy,
                image,
                record.question,
                self.suite,
                gt_box=record.gt_box,
                cache=self.cache,
            )
            crop_s = time.perf_counter() - t0

            if strategy.kind == "none":
                images = [image]
                rect_for_cache = None
            else:
                cropped = crop_image(image, crop.rect)
                if strategy.feed_mode == "crop_only":
                    images = [cropped]
                else:
                    images = [image, cropped]
                rect_for_cache = crop.rect

            t1 = time.perf_counter()
            answer, answer_score = self._answer(images, record, rect_for_cache)
            answer_s = time.perf_counter() - t1

            accuracy = self.score_answers(answer, record.answers)
            result = QuestionResult(
                question_id=record.question_id,
                question_type=question_type,
                size_group=size_group,
                crop_rect=None if strategy.kind == "none" else crop.rect.as_tuple(),
                crop_score=crop.score,
                answer=answer,
                answer_score=answer_score,
                accuracy=accuracy,
                error=None,
            )
            return result, TimingRecord(record.question_id, crop_s, answer_s)
        except _PER_QUESTION_ERRORS as exc:
            kind = _error_kind(exc)
            result = QuestionResult(
                question_id=record.question_id,
                question_type=question_type,
                size_group=None,
                crop_rect=None,
                crop_score=None,
                answer=None,
                answer_score=None,
                accuracy=None,
                error=_error_text(kind, exc),
            )
            return result, TimingRecord(record.question_id, 0.0, 0.0)


def _count_complete_lines(path: Path) -> int:
    if not path.exists():
        return 0
    count = 0
    with path.open("rb") as handle:
        for line in handle:
            if line.endswith(b"\n"):
                count += 1
    return count


def _truncate_to_lines(path: Path, keep: int) -> None:
    if not path.exists():
        return
    kept: list[bytes] = []
    with path.open("rb") as handle:
        for line in handle:
            if len(kept) >= keep or not line.endswith(b"\n"):
                break
            kept.append(line)
    with path.open("wb") as handle:
        handle.writelines(kept)


def _prepare_resume(out_dir: Path, resolved_config: dict, resume: bool) -> int:
    """Validate any previous partial output and return how many records stand."""
    config_path = out_dir / CONFIG_FILENAME
    records_path = out_dir / RECORDS_FILENAME
    timings_path = out_dir / TIMINGS_FILENAME

    if records_path.exists() and resume:
        if not config_path.exists():
            raise ConfigError(f"{out_dir} has partial output but no {CONFIG_FILENAME}")
        previous = json.loads(config_path.read_text(encoding="utf-8"))
        if previous != resolved_config:
            raise ConfigError(
                f"{out_dir} holds output for a different configuration; "
                "pick a fresh --out directory or disable resume"
            )
        done = min(_count_complete_lines(records_path), _count_complete_lines(timings_path))
        _truncate_to_lines(records_path, done)
        _truncate_to_lines(timings_path, done)
        return done

    for path in (records_path, timings_path):
        if path.exists():
            path.unlink()
    config_path.parent.mkdir(parents=True, exist_ok=True)
    config_path.write_text(
        json.dumps(resolved_config, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return 0


def run_experiment(
    cfg: RunConfig, progress: Optional[Callable[[int, int], None]] = None
) -> RunReport:
    """Execute a full run and write records, timings, and the report to disk."""
    # JSON round trip so the stored config compares equal after reload.
    resolved = json.loads(json.dumps(cfg.resolved(), sort_keys=True))
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    records = load_dataset(cfg.dataset)
    if not records:
        raise ConfigError("dataset is empty; nothing to run")

    cache = None
    if cfg.cache_dir:
        cache = ScoreCache(Path(cfg.cache_dir) / "responses.jsonl")

    def image_loader(record: VqaRecord) -> Image:
        return load_image(_record_image_path(record, cfg.dataset.image_dir))

    suite = build_backend_suite(cfg, records, image_loader)
    check_required_backends(cfg.strategy.kind, suite)
    worker = _QuestionWorker(cfg, suite, cache, image_loader)

    done = _prepare_resume(out_dir, resolved, cfg.resume)
    pending = records[done:]

    records_path = out_dir / RECORDS_FILENAME
    timings_path = out_dir / TIMINGS_FILENAME
    if progress:
        progress(done, len(records))
    if pending:
        with records_path.open("a", encoding="utf-8") as records_out, timings_path.open(
            "a", encoding="utf-8"
        ) as timings_out, ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            # executor.map yields in submission order: the write order (and
            # therefore the output bytes) cannot depend on thread scheduling.
            for result, timing in pool.map(worker, pending):
                records_out.write(result.to_json_line() + "\n")
                records_out.flush()
                timings_out.write(timing.to_json_line() + "\n")
                timings_out.flush()
                done += 1
                if progress:
                    progress(done, len(records))

    all_results = read_question_results(records_path)
    all_timings = read_timings(timings_path)
    report = RunReport(
        config=resolved,
        records=all_results,
        timings=all_timings,
        aggregates=aggregate_run(all_results, all_timings),
    )
    if cache is not None:
        report.aggregates["cache"] = cache.stats()
    write_run_outputs(out_dir, report)
    return report
