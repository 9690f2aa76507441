"""Loader for the official VQAv2-style question/annotation JSON pair."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .records import IngestError, VqaRecord


@dataclass
class IngestResult:
    records: list[VqaRecord]
    skipped_missing_image: list[str] = field(default_factory=list)


def _load_json(path: str | Path) -> dict:
    try:
        with Path(path).open("r", encoding="utf-8") as handle:
            return json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc


def coco_image_filename(image_id: int, subtype: str) -> str:
    return f"COCO_{subtype}_{image_id:012d}.jpg"


def ingest_vqav2(
    questions_file: str | Path,
    annotations_file: str | Path,
    image_dir: Optional[str | Path] = None,
) -> IngestResult:
    """Join questions with their annotations into normalized records.

    Each question must have an annotation (an unmatched id is an error that
    names the id). When ``image_dir`` is given, records whose image file is
    absent are dropped and their question ids reported in
    ``skipped_missing_image``; without it, image references are kept
    unchecked, which is enough for question-text analyses.
    """
    questions_doc = _load_json(questions_file)
    annotations_doc = _load_json(annotations_file)
    questions = questions_doc.get("questions")
    annotations = annotations_doc.get("annotations")
    if not isinstance(questions, list) or not isinstance(annotations, list):
        raise IngestError("expected official-format 'questions' and 'annotations' lists")

    subtype = questions_doc.get("data_subtype") or annotations_doc.get("data_subtype") or "val2014"
    by_question_id = {}
    for ann in annotations:
        by_question_id[ann["question_id"]] = ann

    image_dir = Path(image_dir) if image_dir is not None else None
    result = IngestResult(records=[])
    for q in questions:
        qid = q["question_id"]
        ann = by_question_id.get(qid)
        if ann is None:
            raise IngestError(f"question {qid} has no matching annotation")
        answers = tuple(a["answer"] for a in ann.get("answers", []))
        filename = coco_image_filename(int(q["image_id"]), subtype)
        if image_dir is not None:
            image_path = image_dir / filename
            if not image_path.exists():
                result.skipped_missing_image.append(str(qid))
                continue
            image_ref = str(image_path)
        else:
            image_ref = filename
        result.records.append(
            VqaRecord(
                question_id=str(qid),
                image_ref=image_ref,
                question=q["question"],
                answers=answers,
            )
        )
    return result
