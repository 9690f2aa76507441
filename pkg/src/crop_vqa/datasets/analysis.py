"""Answer-box derivation from OCR and partitioning by relative answer size."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Optional

from ..geometry import Rect, area, rel_size
from .records import VqaRecord

SIMILARITY_MEASURES = ("levenshtein", "token_jaccard")

# Matches below this similarity are treated as "no usable OCR box"; garbage
# matches would otherwise flood the smallest-size group.
DEFAULT_MIN_SIMILARITY = 0.5


class SizeGroup(str, Enum):
    """Relative answer-box size S = box area / image area, three bands."""

    G1 = "S<0.005"
    G2 = "0.005<=S<0.05"
    G3 = "S>=0.05"


def size_group_for(s: float) -> SizeGroup:
    if s < 0.005:
        return SizeGroup.G1
    if s < 0.05:
        return SizeGroup.G2
    return SizeGroup.G3


def levenshtein(a: str, b: str) -> int:
    """Classic edit distance, two-row dynamic program."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def string_similarity(a: str, b: str, measure: str = "levenshtein") -> float:
    """Similarity in [0, 1] between case-folded, whitespace-trimmed strings.

    ``levenshtein`` is ``1 - distance / max(len)``; ``token_jaccard`` compares
    whitespace token sets. Two empty strings are identical (1.0).
    """
    a = a.strip().casefold()
    b = b.strip().casefold()
    if measure == "levenshtein":
        longest = max(len(a), len(b))
        if longest == 0:
            return 1.0
        return 1.0 - levenshtein(a, b) / longest
    if measure == "token_jaccard":
        ta, tb = set(a.split()), set(b.split())
        if not ta and not tb:
            return 1.0
        return len(ta & tb) / len(ta | tb)
    raise ValueError(f"measure must be one of {SIMILARITY_MEASURES}, got {measure!r}")


def most_frequent_answer(answers: Iterable[str]) -> str:
    """Majority annotation; frequency ties keep the earliest annotator's answer."""
    answers = list(answers)
    if not answers:
        raise ValueError("no annotations")
    counts = Counter(a.strip().casefold() for a in answers)
    best_raw = None
    best_count = -1
    for raw in answers:
        key = raw.strip().casefold()
        if counts[key] > best_count:
            best_count = counts[key]
            best_raw = raw
    assert best_raw is not None
    return best_raw


def derive_answer_bbox(
    record: VqaRecord,
    measure: str = "levenshtein",
    min_similarity: Optional[float] = DEFAULT_MIN_SIMILARITY,
) -> Optional[Rect]:
    """Pick the OCR box whose text best matches the majority answer.

    Tie chain, in order: similarity, larger box area, reading order (top to
    bottom, then left to right). Returns None when there are no OCR tokens or
    no token clears ``min_similarity`` (pass None to keep any best match).
    """
    if not record.ocr_tokens or not record.answers:
        return None
    target = most_frequent_answer(record.answers)
    best = None
    for token in record.ocr_tokens:
        sim = string_similarity(token.text, target, measure=measure)
        key = (
            -sim,
            -area(token.box),
            token.box.y0,
            token.box.x0,
            token.box.y1,
            token.box.x1,
            token.text,
        )
        if best is None or key < best[0]:
            best = (key, sim, token.box)
    assert best is not None
    _, sim, box = best
    if min_similarity is not None and sim <= min_similarity:
        return None
    return box


def attach_derived_boxes(
    records: Iterable[VqaRecord],
    measure: str = "levenshtein",
    min_similarity: Optional[float] = DEFAULT_MIN_SIMILARITY,
) -> tuple[list[VqaRecord], int]:
    """Fill ``gt_box`` from OCR where missing; returns (records, boxless count)."""
    out: list[VqaRecord] = []
    without_box = 0
    for record in records:
        if record.gt_box is None:
            box = derive_answer_bbox(record, measure=measure, min_similarity=min_similarity)
            record = record.with_gt_box(box)
        if record.gt_box is None:
            without_box += 1
        out.append(record)
    return out, without_box


@dataclass
class PartitionResult:
    groups: dict[SizeGroup, list[VqaRecord]] = field(
        default_factory=lambda: {g: [] for g in SizeGroup}
    )
    skipped: int = 0

    def sizes(self) -> dict[SizeGroup, int]:
        return {g: len(records) for g, records in self.groups.items()}


def partition_by_size(
    records: Iterable[VqaRecord],
    sizes: Optional[Mapping[str, tuple[int, int]]] = None,
) -> PartitionResult:
    """Split records into the three size bands by their answer box.

    Image dimensions come from ``sizes`` (keyed by image_ref) when given,
    else from the record itself. Records without a box or without known
    dimensions are skipped and counted.
    """
    result = PartitionResult()
    for record in records:
        dims = sizes.get(record.image_ref) if sizes is not None else record.image_size
        if record.gt_box is None or dims is None:
            result.skipped += 1
            continue
        s = rel_size(record.gt_box, dims)
        result.groups[size_group_for(s)].append(record)
    return result
