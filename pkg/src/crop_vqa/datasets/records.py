"""Normalized question records and their line-delimited JSON form.

Every loader lands on :class:`VqaRecord`; the harness and the analyses only
ever see this shape. Normalized files carry one record per line plus a
leading meta line with the schema version, since re-ingesting the raw
distributions is slow.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional

from ..geometry import Rect

SCHEMA_VERSION = 1
MAX_ANNOTATIONS = 10


class IngestError(ValueError):
    """Raw dataset files are malformed or inconsistent."""


@dataclass(frozen=True)
class OcrToken:
    text: str
    box: Rect


@dataclass(frozen=True)
class VqaRecord:
    """One question about one image, with its human annotations.

    ``answers`` holds up to ten annotator answers in annotator order.
    ``gt_box`` is the answer bounding box (native or derived from OCR).
    ``ocr_tokens`` is None when the dataset has no OCR channel and an empty
    tuple when the image simply had no OCR hits.
    """

    question_id: str
    image_ref: str
    question: str
    answers: tuple[str, ...]
    gt_box: Optional[Rect] = None
    ocr_tokens: Optional[tuple[OcrToken, ...]] = None
    image_size: Optional[tuple[int, int]] = None

    def __post_init__(self) -> None:
        if not self.question:
            raise IngestError(f"record {self.question_id!r} has an empty question")
        if len(self.answers) > MAX_ANNOTATIONS:
            raise IngestError(
                f"record {self.question_id!r} has {len(self.answers)} answers, "
                f"at most {MAX_ANNOTATIONS} are allowed"
            )

    def with_gt_box(self, box: Optional[Rect]) -> "VqaRecord":
        return replace(self, gt_box=box)


def _box_to_json(box: Optional[Rect]) -> Optional[list[int]]:
    return list(box.as_tuple()) if box is not None else None


def _box_from_json(value) -> Optional[Rect]:
    if value is None:
        return None
    return Rect(*[int(v) for v in value])


def record_to_dict(record: VqaRecord) -> dict:
    return {
        "question_id": record.question_id,
        "image_ref": record.image_ref,
        "question": record.question,
        "answers": list(record.answers),
        "gt_box": _box_to_json(record.gt_box),
        "ocr_tokens": (
            None
            if record.ocr_tokens is None
            else [{"text": t.text, "box": _box_to_json(t.box)} for t in record.ocr_tokens]
        ),
        "image_size": list(record.image_size) if record.image_size else None,
    }


def record_from_dict(data: dict) -> VqaRecord:
    ocr = data.get("ocr_tokens")
    tokens = (
        None
        if ocr is None
        else tuple(OcrToken(text=t["text"], box=_box_from_json(t["box"])) for t in ocr)
    )
    size = data.get("image_size")
    return VqaRecord(
        question_id=str(data["question_id"]),
        image_ref=data["image_ref"],
        question=data["question"],
        answers=tuple(data["answers"]),
        gt_box=_box_from_json(data.get("gt_box")),
        ocr_tokens=tokens,
        image_size=(int(size[0]), int(size[1])) if size else None,
    )


def write_records(path: str | Path, records: Iterable[VqaRecord], meta: dict | None = None) -> int:
    """Write records as JSONL with a leading schema meta line; returns the count."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    header = {"__meta__": {"schema_version": SCHEMA_VERSION, **(meta or {})}}
    with path.open("w", encoding="utf-8") as handle:
        handle.write(json.dumps(header, sort_keys=True) + "\n")
        for record in records:
            handle.write(json.dumps(record_to_dict(record), sort_keys=True) + "\n")
            count += 1
    return count


def read_records(path: str | Path) -> list[VqaRecord]:
    """Read a normalized records file, tolerating a missing meta line."""
    records: list[VqaRecord] = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            data = json.loads(line)
            if "__meta__" in data:
                version = data["__meta__"].get("schema_version")
                if version != SCHEMA_VERSION:
                    raise IngestError(
                        f"{path}: schema version {version!r} not supported "
                        f"(expected {SCHEMA_VERSION})"
                    )
                continue
            try:
                records.append(record_from_dict(data))
            except (KeyError, TypeError, ValueError) as exc:
                raise IngestError(f"{path}:{line_no}: bad record: {exc}") from exc
    return records
