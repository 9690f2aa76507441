"""Run configuration: dataset spec, backends, and the resolved-config echo.

Every report embeds the fully resolved configuration (including the subset
seed) so a run can be reproduced from its own output directory.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field
from typing import Optional

from ..metrics import normalize_metric_variant
from ..strategies import StrategyConfig

DATASET_KINDS = ("records", "vqav2", "textvqa")
BACKEND_MODES = ("synthetic", "remote")

ENDPOINT_ENV_VARS = {
    "scorer_url": "CROP_VQA_SCORER_URL",
    "detector_url": "CROP_VQA_DETECTOR_URL",
    "segmenter_url": "CROP_VQA_SEGMENTER_URL",
    "vqa_url": "CROP_VQA_VQA_URL",
    "saliency_url": "CROP_VQA_SALIENCY_URL",
}


class ConfigError(ValueError):
    """The run configuration is unusable; nothing has been executed."""


@dataclass(frozen=True)
class DatasetConfig:
    """Where the records come from and how they are (optionally) subsetted."""

    kind: str
    path: str
    extra_path: Optional[str] = None
    image_dir: Optional[str] = None
    subset_size: Optional[int] = None
    seed: Optional[int] = None
    derive_boxes: bool = False

    def __post_init__(self) -> None:
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"dataset kind must be one of {DATASET_KINDS}, got {self.kind!r}")
        if self.kind in ("vqav2", "textvqa") and not self.extra_path:
            raise ConfigError(f"dataset kind {self.kind!r} needs its second file")
        if self.subset_size is not None:
            if self.subset_size < 1:
                raise ConfigError(f"subset_size must be >= 1, got {self.subset_size}")
            if self.seed is None:
                raise ConfigError("subsetting requires a seed so the sample is reproducible")


def parse_dataset_arg(
    text: str,
    image_dir: Optional[str] = None,
    subset_size: Optional[int] = None,
    seed: Optional[int] = None,
    derive_boxes: bool = False,
) -> DatasetConfig:
    """Parse ``kind:path[:second_path]`` dataset specs from the command line."""
    parts = text.split(":")
    kind = parts[0]
    if kind == "records" and len(parts) == 2:
        return DatasetConfig(
            kind=kind,
            path=parts[1],
            image_dir=image_dir,
            subset_size=subset_size,
            seed=seed,
            derive_boxes=derive_boxes,
        )
    if kind in ("vqav2", "textvqa") and len(parts) == 3:
        return DatasetConfig(
            kind=kind,
            path=parts[1],
            extra_path=parts[2],
            image_dir=image_dir,
            subset_size=subset_size,
            seed=seed,
            derive_boxes=derive_boxes,
        )
    raise ConfigError(
        f"bad dataset spec {text!r}; expected records:PATH, vqav2:QUESTIONS:ANNOTATIONS, "
        f"or textvqa:QUESTIONS:OCR"
    )


@dataclass(frozen=True)
class BackendsConfig:
    """Which backends a run talks to.

    ``synthetic`` builds deterministic planted-target backends out of the
    dataset's own ground-truth boxes; ``remote`` talks to model servers over
    the wire protocol. Endpoint URLs may come from the environment.
    """

    mode: str = "synthetic"
    scorer_url: Optional[str] = None
    detector_url: Optional[str] = None
    segmenter_url: Optional[str] = None
    vqa_url: Optional[str] = None
    saliency_url: Optional[str] = None
    timeout_s: float = 30.0
    synthetic_iou_threshold: float = 0.5
    synthetic_wrong_answer: str = "unknown"

    def __post_init__(self) -> None:
        if self.mode not in BACKEND_MODES:
            raise ConfigError(f"backend mode must be one of {BACKEND_MODES}, got {self.mode!r}")
        if self.timeout_s <= 0:
            raise ConfigError(f"timeout_s must be positive, got {self.timeout_s}")

    def with_env_overrides(self, env: Optional[dict] = None) -> "BackendsConfig":
        """Fill unset endpoint URLs from CROP_VQA_*_URL environment variables."""
        env = os.environ if env is None else env
        updates = {}
        for attr, var in ENDPOINT_ENV_VARS.items():
            if getattr(self, attr) is None and env.get(var):
                updates[attr] = env[var]
        if not updates:
            return self
        data = asdict(self)
        data.update(updates)
        return BackendsConfig(**data)


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetConfig
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    backends: BackendsConfig = field(default_factory=BackendsConfig)
    metric_variant: str = "simple"
    jobs: int = 1
    cache_dir: Optional[str] = None
    out_dir: str = "runs/latest"
    resume: bool = True

    def __post_init__(self) -> None:
        normalize_metric_variant(self.metric_variant)
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")

    def resolved(self) -> dict:
        """Plain nested dict of every knob, embedded into reports."""
        data = asdict(self)
        data["metric_variant"] = normalize_metric_variant(self.metric_variant)
        data["strategy"]["window_fractions"] = list(self.strategy.window_fractions)
        return data
