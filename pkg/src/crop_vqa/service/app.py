"""FastAPI service wrapping the cropping engine and evaluation harness.

Experiment runs execute in background threads (they can take hours against
real model servers); clients submit a config, poll the run status, and fetch
the report. One-shot cropping, ingestion, timing, and report aggregation are
synchronous endpoints. The CLI is a thin client of exactly this API.
"""

from __future__ import annotations

import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..backends.cache import ScoreCache
from ..backends.interfaces import BackendError, BackendSuite
from ..backends.remote import (
    RemoteDetector,
    RemoteSaliencySource,
    RemoteScorer,
    RemoteSegmenter,
    RemoteVqaModel,
)
from ..backends.synthetic import PlantedTargetScorer
from ..datasets.analysis import attach_derived_boxes
from ..datasets.records import IngestError, write_records
from ..datasets.textvqa import ingest_textvqa
from ..datasets.vqav2 import ingest_vqav2
from ..geometry import GeometryError, Rect
from ..harness.config import ConfigError, RunConfig
from ..harness.reporting import (
    ReportError,
    combine_method_runs,
    load_run_dir,
    render_combined_csvs,
    render_combined_markdown,
)
from ..harness.runner import run_experiment
from ..harness.timing import measure_timing
from ..imaging import ImageDecodeError, decode_png_base64
from ..strategies import StrategyError, apply_strategy
from .models import (
    AggregateRequest,
    AggregateResponse,
    CropRequest,
    CropResponse,
    HealthResponse,
    IngestRequest,
    IngestResponse,
    RunRequest,
    RunStatus,
    RunSubmitted,
    TimingRequest,
    TimingResponse,
    TraceEntryModel,
)

_BAD_REQUEST_ERRORS = (
    ConfigError,
    StrategyError,
    GeometryError,
    IngestError,
    ImageDecodeError,
    ReportError,
    ValueError,
)


class _RunRegistry:
    """In-memory registry of submitted runs and their background threads."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._runs: dict[str, RunStatus] = {}

    def submit(self, cfg: RunConfig) -> str:
        run_id = uuid.uuid4().hex[:12]
        status = RunStatus(run_id=run_id, status="pending", out_dir=cfg.out_dir)
        with self._lock:
            self._runs[run_id] = status

        def progress(done: int, total: int) -> None:
            with self._lock:
                entry = self._runs[run_id]
                entry.status = "running"
                entry.n_done = done
                entry.n_total = total

        def execute() -> None:
            try:
                report = run_experiment(cfg, progress=progress)
                with self._lock:
                    entry = self._runs[run_id]
                    entry.status = "done"
                    entry.n_errored = report.n_errored
            except Exception as exc:
                with self._lock:
                    entry = self._runs[run_id]
                    entry.status = "error"
                    entry.error = f"{type(exc).__name__}: {exc}"

        threading.Thread(target=execute, daemon=True, name=f"run-{run_id}").start()
        return run_id

    def get(self, run_id: str) -> RunStatus:
        with self._lock:
            status = self._runs.get(run_id)
            if status is None:
                raise HTTPException(status_code=404, detail=f"unknown run {run_id}")
            return status.model_copy()

    def list(self) -> list[RunStatus]:
        with self._lock:
            return [status.model_copy() for status in self._runs.values()]


def _crop_backend_suite(request: CropRequest) -> BackendSuite:
    if request.synthetic_target is not None:
        target = Rect(*request.synthetic_target)
        return BackendSuite(scorer=PlantedTargetScorer(target))
    backends = request.backends.to_core()
    suite = BackendSuite()
    timeout = backends.timeout_s
    if backends.scorer_url:
        suite.scorer = RemoteScorer(backends.scorer_url, timeout)
    if backends.detector_url:
        suite.detector = RemoteDetector(backends.detector_url, timeout)
    if backends.segmenter_url:
        suite.segmenter = RemoteSegmenter(backends.segmenter_url, timeout)
    if backends.saliency_url:
        suite.saliency = RemoteSaliencySource(backends.saliency_url, timeout)
    if backends.vqa_url:
        suite.vqa = RemoteVqaModel(backends.vqa_url, timeout)
    return suite


def create_app(cache_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="crop-vqa", version=__version__)
    registry = _RunRegistry()
    crop_cache = ScoreCache(Path(cache_dir) / "responses.jsonl") if cache_dir else None

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/runs", response_model=RunSubmitted)
    def submit_run(request: RunRequest) -> RunSubmitted:
        try:
            cfg = request.to_core()
        except (_BAD_REQUEST_ERRORS) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        run_id = registry.submit(cfg)
        return RunSubmitted(run_id=run_id, status="pending")

    @app.get("/runs", response_model=list[RunStatus])
    def list_runs() -> list[RunStatus]:
        return registry.list()

    @app.get("/runs/{run_id}", response_model=RunStatus)
    def run_status(run_id: str) -> RunStatus:
        return registry.get(run_id)

    @app.get("/runs/{run_id}/report")
    def run_report(run_id: str) -> dict:
        status = registry.get(run_id)
        if status.status != "done":
            raise HTTPException(
                status_code=409, detail=f"run {run_id} is {status.status}, not done"
            )
        report = load_run_dir(status.out_dir)
        return {"config": report.config, "aggregates": report.aggregates}

    @app.get("/runs/{run_id}/records")
    def run_records(run_id: str) -> dict:
        status = registry.get(run_id)
        records_path = Path(status.out_dir or "") / "records.jsonl"
        if not records_path.exists():
            raise HTTPException(status_code=404, detail="no records written yet")
        return {"records_jsonl": records_path.read_text(encoding="utf-8")}

    @app.post("/crop", response_model=CropResponse)
    def crop(request: CropRequest) -> CropResponse:
        try:
            image = decode_png_base64(request.image)
            suite = _crop_backend_suite(request)
            gt_box = Rect(*request.gt_box) if request.gt_box else None
            result = apply_strategy(
                request.strategy.to_core(),
                image,
                request.question,
                suite,
                gt_box=gt_box,
                cache=crop_cache,
            )
        except BackendError as exc:
            raise HTTPException(status_code=502, detail=str(exc))
        except _BAD_REQUEST_ERRORS as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        trace = None
        if request.include_trace:
            trace = [
                TraceEntryModel(rect=list(entry.rect.as_tuple()), score=entry.score, note=entry.note)
                for entry in result.trace
            ]
        return CropResponse(rect=list(result.rect.as_tuple()), score=result.score, trace=trace)

    @app.post("/ingest", response_model=IngestResponse)
    def ingest(request: IngestRequest) -> IngestResponse:
        try:
            if request.format == "vqav2":
                if not request.annotations_path:
                    raise ConfigError("vqav2 ingestion needs annotations_path")
                result = ingest_vqav2(
                    request.questions_path, request.annotations_path, request.image_dir
                )
            else:
                if not request.ocr_path:
                    raise ConfigError("textvqa ingestion needs ocr_path")
                result = ingest_textvqa(
                    request.questions_path, request.ocr_path, request.image_dir
                )
            records = result.records
            n_without_box = None
            if request.derive_boxes:
                records, n_without_box = attach_derived_boxes(records)
            write_records(request.out_path, records, meta={"source": request.format})
        except _BAD_REQUEST_ERRORS as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return IngestResponse(
            n_records=len(records),
            n_skipped_missing_image=len(result.skipped_missing_image),
            n_without_box=n_without_box,
            out_path=request.out_path,
        )

    @app.post("/timing", response_model=TimingResponse)
    def timing(request: TimingRequest) -> TimingResponse:
        try:
            cfg = RunConfig(
                dataset=request.dataset.to_core(),
                backends=request.backends.to_core(),
                out_dir="unused",
            )
            means = measure_timing(
                cfg,
                [s.to_core() for s in request.strategies],
                n_warmup=request.n_warmup,
                n_measure=request.n_measure,
            )
        except BackendError as exc:
            raise HTTPException(status_code=502, detail=str(exc))
        except _BAD_REQUEST_ERRORS as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return TimingResponse(mean_crop_s=means)

    @app.post("/reports/aggregate", response_model=AggregateResponse)
    def aggregate(request: AggregateRequest) -> AggregateResponse:
        try:
            combined = combine_method_runs(request.runs, request.baseline)
        except _BAD_REQUEST_ERRORS as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return AggregateResponse(
            combined=combined,
            markdown=render_combined_markdown(combined),
            csv=render_combined_csvs(combined),
        )

    return app
