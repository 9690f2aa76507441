"""Generate synthetic datasets on disk for hermetic runs, demos, and tests.

Images are coordinate-encoded PNGs (see :mod:`crop_vqa.backends.synthetic`)
with one planted answer box per question. Question texts rotate through the
typed prefixes so per-type tables have something to show.
"""

from __future__ import annotations

import random
from pathlib import Path

from ..backends.synthetic import coordinate_image
from ..datasets.records import VqaRecord, write_records
from ..geometry import Rect
from ..imaging import save_png

_QUESTION_SHAPES = (
    "how many {} markers are planted",
    "what color is the {} marker",
    "where is the {} marker",
    "is there a {} marker",
    "which corner holds the {} marker",
)
_WORDS = (
    "amber", "birch", "cobalt", "dune", "ember", "fjord", "garnet", "heron",
    "indigo", "juniper", "krill", "lumen", "maple", "nickel", "onyx", "pine",
    "quartz", "rowan", "saffron", "tundra",
)
_ANSWERS = ("1", "2", "3", "red", "blue", "green", "left", "right", "yes", "no")


def make_synthetic_dataset(
    out_dir: str | Path,
    n: int = 16,
    seed: int = 0,
    image_size: tuple[int, int] = (200, 200),
    target_span: tuple[float, float] = (0.15, 0.35),
) -> Path:
    """Write ``n`` coordinate images plus a records file; returns the records path.

    ``target_span`` bounds each planted box's side length as a fraction of the
    image side. Questions are unique and so is each image's content; all ten
    annotations agree, so a correct scripted answer scores exactly 1.0.
    """
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    base_width, base_height = image_size

    records = []
    for i in range(n):
        # Unique dimensions per record: the synthetic detector and segmenter
        # key their planted proposals on image content.
        width = base_width + (i % 16)
        height = base_height + (i // 16)
        image_path = images_dir / f"synthetic_{i:04d}.png"
        save_png(coordinate_image(width, height), image_path)

        w = max(2, round(rng.uniform(*target_span) * width))
        h = max(2, round(rng.uniform(*target_span) * height))
        x0 = rng.randrange(0, width - w)
        y0 = rng.randrange(0, height - h)
        box = Rect(x0, y0, x0 + w, y0 + h)

        template = _QUESTION_SHAPES[i % len(_QUESTION_SHAPES)]
        word = _WORDS[i % len(_WORDS)]
        question = template.format(word) + f" {i:04d}?"
        answer = _ANSWERS[rng.randrange(len(_ANSWERS))]

        records.append(
            VqaRecord(
                question_id=f"syn-{i:04d}",
                image_ref=str(image_path),
                question=question,
                answers=(answer,) * 10,
                gt_box=box,
                image_size=(width, height),
            )
        )

    records_path = out_dir / "records.jsonl"
    write_records(records_path, records, meta={"generator": "synthetic", "seed": seed})
    return records_path
