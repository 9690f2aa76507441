"""Wall-clock measurement of the cropping stage, per strategy.

Only the crop search itself is timed; loading the image and answering the
question are excluded, and nothing is cached (a cache hit would make the
numbers lie). Measurement is strictly serial so invocations do not contend.
"""

from __future__ import annotations

import time
from itertools import islice
from statistics import fmean
from typing import Sequence

from ..imaging import load_image
from ..strategies import StrategyConfig, apply_strategy
from .config import ConfigError, RunConfig
from .runner import (
    _record_image_path,
    build_backend_suite,
    check_required_backends,
    load_dataset,
)


def measure_timing(
    cfg: RunConfig,
    strategies: Sequence[StrategyConfig],
    n_warmup: int = 1,
    n_measure: int = 5,
) -> dict[str, float]:
    """Mean crop-stage seconds per strategy kind over ``n_measure`` questions.

    The first ``n_warmup`` invocations are discarded; the dataset is cycled
    when it is shorter than ``n_warmup + n_measure``.
    """
    if n_measure < 1:
        raise ConfigError(f"n_measure must be >= 1, got {n_measure}")
    if n_warmup < 0:
        raise ConfigError(f"n_warmup must be >= 0, got {n_warmup}")
    if not strategies:
        raise ConfigError("no strategies to time")

    records = load_dataset(cfg.dataset)
    if not records:
        raise ConfigError("dataset is empty; nothing to time")

    def image_loader(record):
        return load_image(_record_image_path(record, cfg.dataset.image_dir))

    suite = build_backend_suite(cfg, records, image_loader)

    def cycle_records():
        while True:
            yield from records

    results: dict[str, float] = {}
    total = n_warmup + n_measure
    for strategy in strategies:
        check_required_backends(strategy.kind, suite, need_vqa=False)
        durations = []
        for i, record in enumerate(islice(cycle_records(), total)):
            image = image_loader(record)
            t0 = time.perf_counter()
            apply_strategy(strategy, image, record.question, suite, gt_box=record.gt_box)
            elapsed = time.perf_counter() - t0
            if i >= n_warmup:
                durations.append(elapsed)
        results[strategy.kind] = fmean(durations)
    return results
