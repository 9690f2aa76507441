"""Build a fully synthetic backend suite out of a dataset's own records.

Questions are answered correctly only when the crop handed to the scripted
model overlaps the record's ground-truth box well enough, and the planted
scorer rewards exactly that overlap. This gives hermetic end-to-end runs a
known causal structure: better cropping must mean better accuracy.
"""

from __future__ import annotations

from typing import Callable, Iterable

from ..backends.interfaces import BackendSuite, Detection
from ..backends.synthetic import (
    ImageKeyedDetector,
    ImageKeyedSegmenter,
    PlantedSuiteScorer,
    ScriptedVqaModel,
    planted_saliency,
)
from ..datasets.analysis import most_frequent_answer
from ..datasets.records import VqaRecord
from ..geometry import Image, Rect
from .config import BackendsConfig, ConfigError


def _decoy_box(target: Rect, width: int, height: int) -> Rect:
    # Deterministic second proposal: the other half of the image when the
    # target sits left of center, and vice versa.
    if target.x0 >= width // 2:
        return Rect(0, 0, max(width // 2, 1), height)
    return Rect(min(width // 2, width - 1), 0, width, height)


def build_synthetic_suite(
    records: Iterable[VqaRecord],
    load_image: Callable[[VqaRecord], Image],
    cfg: BackendsConfig,
) -> BackendSuite:
    """Planted-target backends keyed on each record's question and image.

    Every record must carry a ground-truth box and a unique question string
    (the scorer and scripted model can only see the question text and the
    pixels).
    """
    targets: dict[str, Rect] = {}
    answers: dict[str, str] = {}
    detections_by_hash: dict[str, list[Detection]] = {}
    boxes_by_hash: dict[str, list[Rect]] = {}

    for record in records:
        if record.gt_box is None:
            raise ConfigError(
                f"synthetic backends need a ground-truth box; record "
                f"{record.question_id!r} has none"
            )
        if record.question in targets:
            raise ConfigError(
                f"synthetic backends need unique question texts; "
                f"{record.question!r} repeats"
            )
        if not record.answers:
            raise ConfigError(f"record {record.question_id!r} has no annotations")
        targets[record.question] = record.gt_box
        answers[record.question] = most_frequent_answer(record.answers)

        image = load_image(record)
        image_hash = image.content_hash()
        if image_hash in detections_by_hash:
            raise ConfigError(
                "synthetic detector/segmenter proposals are keyed on image "
                f"content, which record {record.question_id!r} duplicates"
            )
        decoy = _decoy_box(record.gt_box, image.width, image.height)
        detections_by_hash[image_hash] = [
            Detection(box=record.gt_box, confidence=0.9, label="target"),
            Detection(box=decoy, confidence=0.6, label="decoy"),
        ]
        boxes_by_hash[image_hash] = [record.gt_box, decoy]

    return BackendSuite(
        scorer=PlantedSuiteScorer(targets),
        detector=ImageKeyedDetector(detections_by_hash),
        segmenter=ImageKeyedSegmenter(boxes_by_hash),
        vqa=ScriptedVqaModel(
            answers=answers,
            planted=targets,
            iou_threshold=cfg.synthetic_iou_threshold,
            fallback_answer=cfg.synthetic_wrong_answer,
        ),
        saliency=planted_saliency(targets),
    )
