"""Pydantic request/response models for the evaluation service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

from ..harness.config import BackendsConfig, DatasetConfig, RunConfig
from ..strategies import StrategyConfig


class StrategyModel(BaseModel):
    kind: Literal[
        "human", "iterative", "detector", "segmenter", "sliding_window", "patchmap", "none"
    ] = "iterative"
    ratio: float = 0.9
    iterations: int = 20
    detector_conf: float = 0.25
    window_fractions: list[float] = Field(default_factory=lambda: [0.5, 0.65, 0.8])
    window_stride_fraction: float = 0.5
    patch_threshold: float = 0.5
    include_full_image_candidate: bool = True
    feed_mode: Literal["concat_with_original", "crop_only"] = "concat_with_original"

    def to_core(self) -> StrategyConfig:
        return StrategyConfig(
            kind=self.kind,
            ratio=self.ratio,
            iterations=self.iterations,
            detector_conf=self.detector_conf,
            window_fractions=tuple(self.window_fractions),
            window_stride_fraction=self.window_stride_fraction,
            patch_threshold=self.patch_threshold,
            include_full_image_candidate=self.include_full_image_candidate,
            feed_mode=self.feed_mode,
        )


class BackendsModel(BaseModel):
    mode: Literal["synthetic", "remote"] = "synthetic"
    scorer_url: Optional[str] = None
    detector_url: Optional[str] = None
    segmenter_url: Optional[str] = None
    vqa_url: Optional[str] = None
    saliency_url: Optional[str] = None
    timeout_s: float = 30.0
    synthetic_iou_threshold: float = 0.5
    synthetic_wrong_answer: str = "unknown"

    def to_core(self) -> BackendsConfig:
        return BackendsConfig(
            mode=self.mode,
            scorer_url=self.scorer_url,
            detector_url=self.detector_url,
            segmenter_url=self.segmenter_url,
            vqa_url=self.vqa_url,
            saliency_url=self.saliency_url,
            timeout_s=self.timeout_s,
            synthetic_iou_threshold=self.synthetic_iou_threshold,
            synthetic_wrong_answer=self.synthetic_wrong_answer,
        ).with_env_overrides()


class DatasetModel(BaseModel):
    kind: Literal["records", "vqav2", "textvqa"]
    path: str
    extra_path: Optional[str] = None
    image_dir: Optional[str] = None
    subset_size: Optional[int] = None
    seed: Optional[int] = None
    derive_boxes: bool = False

    def to_core(self) -> DatasetConfig:
        return DatasetConfig(
            kind=self.kind,
            path=self.path,
            extra_path=self.extra_path,
            image_dir=self.image_dir,
            subset_size=self.subset_size,
            seed=self.seed,
            derive_boxes=self.derive_boxes,
        )


class RunRequest(BaseModel):
    dataset: DatasetModel
    strategy: StrategyModel = Field(default_factory=StrategyModel)
    backends: BackendsModel = Field(default_factory=BackendsModel)
    metric: str = "simple"
    jobs: int = 1
    cache_dir: Optional[str] = None
    out_dir: str
    resume: bool = True

    def to_core(self) -> RunConfig:
        return RunConfig(
            dataset=self.dataset.to_core(),
            strategy=self.strategy.to_core(),
            backends=self.backends.to_core(),
            metric_variant=self.metric,
            jobs=self.jobs,
            cache_dir=self.cache_dir,
            out_dir=self.out_dir,
            resume=self.resume,
        )


class RunSubmitted(BaseModel):
    run_id: str
    status: str


class RunStatus(BaseModel):
    run_id: str
    status: Literal["pending", "running", "done", "error"]
    n_total: int = 0
    n_done: int = 0
    n_errored: int = 0
    out_dir: Optional[str] = None
    error: Optional[str] = None


class TraceEntryModel(BaseModel):
    rect: list[int]
    score: Optional[float]
    note: str = ""


class CropRequest(BaseModel):
    image: str = Field(description="base64-encoded PNG")
    question: str
    strategy: StrategyModel = Field(default_factory=StrategyModel)
    backends: BackendsModel = Field(default_factory=lambda: BackendsModel(mode="remote"))
    gt_box: Optional[list[int]] = None
    synthetic_target: Optional[list[int]] = Field(
        default=None,
        description="planted target rect; scores crops by overlap instead of a remote scorer",
    )
    include_trace: bool = False


class CropResponse(BaseModel):
    rect: list[int]
    score: Optional[float]
    trace: Optional[list[TraceEntryModel]] = None


class IngestRequest(BaseModel):
    format: Literal["vqav2", "textvqa"]
    questions_path: str
    annotations_path: Optional[str] = None
    ocr_path: Optional[str] = None
    image_dir: Optional[str] = None
    out_path: str
    derive_boxes: bool = False


class IngestResponse(BaseModel):
    n_records: int
    n_skipped_missing_image: int
    n_without_box: Optional[int] = None
    out_path: str


class TimingRequest(BaseModel):
    dataset: DatasetModel
    strategies: list[StrategyModel]
    backends: BackendsModel = Field(default_factory=BackendsModel)
    n_warmup: int = 1
    n_measure: int = 5


class TimingResponse(BaseModel):
    mean_crop_s: dict[str, float]


class AggregateRequest(BaseModel):
    runs: list[str] = Field(description="run directories (or records.jsonl paths)")
    baseline: Optional[str] = None


class AggregateResponse(BaseModel):
    combined: dict
    markdown: str
    csv: dict[str, str]


class HealthResponse(BaseModel):
    status: str
    version: str
