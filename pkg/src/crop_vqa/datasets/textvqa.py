"""Loader for TextVQA-style question JSON plus its OCR annotation JSON.

OCR boxes arrive normalized to [0, 1] of the image; they are converted to
half-open pixel rectangles here (round half up, clamped), using the image
dimensions carried by each question entry. Tokens whose boxes collapse to
nothing are dropped.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from ..geometry import Rect, round_half_up
from .records import IngestError, OcrToken, VqaRecord
from .vqav2 import IngestResult


def _load_data_list(path: str | Path, what: str) -> list:
    try:
        with Path(path).open("r", encoding="utf-8") as handle:
            doc = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    data = doc.get("data") if isinstance(doc, dict) else doc
    if not isinstance(data, list):
        raise IngestError(f"{what} file {path} has no 'data' list")
    return data


def _pixel_box(raw: dict, width: int, height: int) -> Optional[Rect]:
    try:
        x = float(raw["top_left_x"])
        y = float(raw["top_left_y"])
        w = float(raw["width"])
        h = float(raw["height"])
    except (KeyError, TypeError, ValueError):
        return None
    x0 = min(max(round_half_up(x * width), 0), width)
    y0 = min(max(round_half_up(y * height), 0), height)
    x1 = min(max(round_half_up((x + w) * width), 0), width)
    y1 = min(max(round_half_up((y + h) * height), 0), height)
    if x0 >= x1 or y0 >= y1:
        return None
    return Rect(x0, y0, x1, y1)


def ingest_textvqa(
    questions_file: str | Path,
    ocr_file: str | Path,
    image_dir: Optional[str | Path] = None,
) -> IngestResult:
    """Join TextVQA questions with per-image OCR tokens.

    Records keep their reported image size so size analyses do not need the
    image files. An image with no OCR entry yields an empty token tuple, not
    a dropped record.
    """
    entries = _load_data_list(questions_file, "questions")
    ocr_entries = _load_data_list(ocr_file, "OCR")

    ocr_by_image: dict[str, list[dict]] = {}
    for entry in ocr_entries:
        image_id = str(entry.get("image_id"))
        if image_id not in ocr_by_image:
            ocr_by_image[image_id] = entry.get("ocr_info") or []

    image_dir = Path(image_dir) if image_dir is not None else None
    result = IngestResult(records=[])
    for entry in entries:
        qid = str(entry["question_id"])
        image_id = str(entry["image_id"])
        try:
            width = int(entry["image_width"])
            height = int(entry["image_height"])
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestError(f"question {qid} lacks image dimensions: {exc}") from exc

        tokens: list[OcrToken] = []
        for info in ocr_by_image.get(image_id, []):
            word = info.get("word")
            raw_box = info.get("bounding_box")
            if not isinstance(word, str) or not isinstance(raw_box, dict):
                continue
            box = _pixel_box(raw_box, width, height)
            if box is not None:
                tokens.append(OcrToken(text=word, box=box))

        filename = f"{image_id}.jpg"
        if image_dir is not None:
            image_path = image_dir / filename
            if not image_path.exists():
                result.skipped_missing_image.append(qid)
                continue
            image_ref = str(image_path)
        else:
            image_ref = filename

        result.records.append(
            VqaRecord(
                question_id=qid,
                image_ref=image_ref,
                question=entry["question"],
                answers=tuple(entry.get("answers", [])),
                ocr_tokens=tuple(tokens),
                image_size=(width, height),
            )
        )
    return result
