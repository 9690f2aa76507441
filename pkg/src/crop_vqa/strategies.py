"""Question-guided cropping strategies.

Each strategy maps ``(image, question, backends)`` to a :class:`CropResult`
carrying the chosen rectangle, its score, and the full ordered trace of every
candidate that was evaluated. Determinism rules used everywhere:

* ties between equal scores go to the earliest candidate evaluated;
* per-iteration shrink sides are tried in the fixed order top, bottom,
  left, right;
* when the full image participates as a candidate it is scored first, so a
  constant scorer keeps the full image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .backends.cache import ScoreCache, cache_key
from .backends.interfaces import (
    BackendSuite,
    Detector,
    ProtocolError,
    RelevanceScorer,
    SaliencySource,
    Segmenter,
)
from .geometry import (
    DegenerateRectError,
    Image,
    PatchMap,
    Rect,
    SIDES,
    crop_image,
    patch_to_pixel_rect,
    round_half_up,
    shrink_side,
)

STRATEGY_KINDS = (
    "human",
    "iterative",
    "detector",
    "segmenter",
    "sliding_window",
    "patchmap",
    "none",
)
FEED_MODES = ("concat_with_original", "crop_only")

FALLBACK_NOTE = "fallback:no-candidates"


class StrategyError(ValueError):
    """Base class for strategy-level failures."""


class NotApplicableError(StrategyError):
    """The strategy cannot run on this record (e.g. no ground-truth box)."""


class MissingBackendError(StrategyError):
    """The strategy needs a backend the suite does not provide."""


class DegenerateSaliencyError(StrategyError):
    """The saliency map is all zero; no region can be extracted."""


@dataclass(frozen=True)
class TraceEntry:
    """One evaluated candidate: where it was, what it scored, and why."""

    rect: Rect
    score: Optional[float]
    note: str = ""


@dataclass(frozen=True)
class CropResult:
    """Chosen crop rectangle plus the evaluation trace that selected it.

    ``score`` is None for strategies that never consult a scorer (ground-truth
    cropping, the no-candidate fallback); otherwise it equals the maximum
    score in the trace.
    """

    rect: Rect
    score: Optional[float]
    trace: tuple[TraceEntry, ...]


@dataclass(frozen=True)
class StrategyConfig:
    """Parameters shared by all strategies; unused fields are ignored.

    The sliding-window fractions/stride and the patch-map threshold are not
    pinned by any reference procedure; they are defaults of this
    implementation and are echoed into every run report.
    """

    kind: str = "iterative"
    ratio: float = 0.9
    iterations: int = 20
    detector_conf: float = 0.25
    window_fractions: tuple[float, ...] = (0.5, 0.65, 0.8)
    window_stride_fraction: float = 0.5
    patch_threshold: float = 0.5
    include_full_image_candidate: bool = True
    feed_mode: str = "concat_with_original"

    def __post_init__(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise StrategyError(f"kind must be one of {STRATEGY_KINDS}, got {self.kind!r}")
        if not (0.0 < self.ratio < 1.0):
            raise StrategyError(f"ratio must be in (0, 1), got {self.ratio!r}")
        if self.iterations < 1:
            raise StrategyError(f"iterations must be >= 1, got {self.iterations!r}")
        if not (0.0 <= self.detector_conf <= 1.0):
            raise StrategyError(f"detector_conf must be in [0, 1], got {self.detector_conf!r}")
        if not self.window_fractions:
            raise StrategyError("window_fractions must be non-empty")
        for f in self.window_fractions:
            if not (0.0 < f <= 1.0):
                raise StrategyError(f"window fractions must be in (0, 1], got {f!r}")
        if self.window_stride_fraction <= 0.0:
            raise StrategyError(
                f"window_stride_fraction must be > 0, got {self.window_stride_fraction!r}"
            )
        if not (0.0 < self.patch_threshold <= 1.0):
            raise StrategyError(
                f"patch_threshold must be in (0, 1], got {self.patch_threshold!r}"
            )
        if self.feed_mode not in FEED_MODES:
            raise StrategyError(f"feed_mode must be one of {FEED_MODES}, got {self.feed_mode!r}")


class _RegionScorer:
    """Scores sub-rectangles of one image against one text, through the cache."""

    def __init__(
        self,
        image: Image,
        text: str,
        scorer: RelevanceScorer,
        cache: Optional[ScoreCache] = None,
    ):
        self.image = image
        self.text = text
        self.scorer = scorer
        self.cache = cache
        self._image_hash = image.content_hash() if cache is not None else ""

    def score_rect(self, rect: Rect) -> float:
        if self.cache is not None:
            key = cache_key(self.scorer.identity, self._image_hash, rect, self.text)
            hit = self.cache.get(key)
            if hit is not None:
                return float(hit)
        value = float(self.scorer.score(crop_image(self.image, rect), self.text))
        if not math.isfinite(value):
            raise ProtocolError(f"scorer {self.scorer.identity} returned non-finite {value!r}")
        if self.cache is not None:
            self.cache.put(key, value)
        return value


def _best_entry(trace: Sequence[TraceEntry]) -> TraceEntry:
    best = None
    for entry in trace:
        if entry.score is None:
            continue
        if best is None or entry.score > best.score:
            best = entry
    if best is None:
        raise StrategyError("no scored candidates in trace")
    return best


def human_crop(gt_box: Optional[Rect]) -> CropResult:
    """Crop to the record's ground-truth answer box; the intervention ceiling."""
    if gt_box is None:
        raise NotApplicableError("record carries no ground-truth box")
    return CropResult(rect=gt_box, score=None, trace=())


def iterative_refine(
    image: Image,
    question: str,
    scorer: RelevanceScorer,
    cfg: StrategyConfig,
    cache: Optional[ScoreCache] = None,
) -> CropResult:
    """Progressively shrink toward the region most relevant to the question.

    Starting from the full image, each iteration scores the four single-side
    shrinks (top, bottom, left, right) of the current rect at ``cfg.ratio``
    and advances to the best one. The returned rect is the globally
    highest-scoring candidate over all iterations, plus the full image itself
    when ``include_full_image_candidate`` is set. Refinement stops early if
    any side's shrink would round away to nothing.
    """
    region = _RegionScorer(image, question, scorer, cache)
    trace: list[TraceEntry] = []
    full = image.full_rect()
    if cfg.include_full_image_candidate:
        trace.append(TraceEntry(full, region.score_rect(full), note="full-image"))

    current = full
    for iteration in range(cfg.iterations):
        try:
            shrinks = [shrink_side(current, side, cfg.ratio) for side in SIDES]
        except DegenerateRectError:
            break
        step_best: TraceEntry | None = None
        for side, candidate in zip(SIDES, shrinks):
            entry = TraceEntry(candidate, region.score_rect(candidate), note=f"iter{iteration}:{side}")
            trace.append(entry)
            if step_best is None or entry.score > step_best.score:
                step_best = entry
        assert step_best is not None
        current = step_best.rect

    best = _best_entry(trace)
    return CropResult(rect=best.rect, score=best.score, trace=tuple(trace))


def select_best_candidate(
    image: Image,
    question: str,
    candidates: Sequence[Rect],
    scorer: RelevanceScorer,
    cache: Optional[ScoreCache] = None,
    note: str = "candidate",
) -> CropResult:
    """Score each candidate crop and keep the argmax (first wins ties).

    An empty candidate list falls back to the uncropped image, flagged in the
    trace, with no score attached.
    """
    full = image.full_rect()
    if not candidates:
        return CropResult(
            rect=full,
            score=None,
            trace=(TraceEntry(full, None, note=FALLBACK_NOTE),),
        )
    region = _RegionScorer(image, question, scorer, cache)
    trace = [
        TraceEntry(rect, region.score_rect(rect), note=f"{note}{i}")
        for i, rect in enumerate(candidates)
    ]
    best = _best_entry(trace)
    return CropResult(rect=best.rect, score=best.score, trace=tuple(trace))


def _with_full_candidate(
    image: Image, boxes: Sequence[Rect], cfg: StrategyConfig
) -> list[Rect]:
    # Full image goes first so it wins ties; exact duplicates keep their
    # earliest position and are scored once.
    candidates: list[Rect] = []
    if cfg.include_full_image_candidate:
        candidates.append(image.full_rect())
    seen = set(candidates)
    for box in boxes:
        if box not in seen:
            seen.add(box)
            candidates.append(box)
    return candidates


def detector_crop(
    image: Image,
    question: str,
    detector: Detector,
    scorer: RelevanceScorer,
    cfg: StrategyConfig,
    cache: Optional[ScoreCache] = None,
) -> CropResult:
    """Object-proposal cropping: detector boxes scored by the relevance model."""
    detections = detector.detect(image, cfg.detector_conf)
    boxes = [d.box for d in detections]
    return select_best_candidate(
        image, question, _with_full_candidate(image, boxes, cfg), scorer, cache, note="det"
    )


def segmenter_crop(
    image: Image,
    question: str,
    segmenter: Segmenter,
    scorer: RelevanceScorer,
    cfg: StrategyConfig,
    cache: Optional[ScoreCache] = None,
) -> CropResult:
    """Segmentation cropping: mask covering boxes scored by the relevance model."""
    boxes = segmenter.segment(image)
    return select_best_candidate(
        image, question, _with_full_candidate(image, boxes, cfg), scorer, cache, note="seg"
    )


def _window_positions(extent: int, window: int, stride: Fraction) -> list[int]:
    """Start offsets for a window slid across one axis, end snapped to the edge."""
    last = extent - window
    positions = [0]
    step = stride * window
    k = 1
    while True:
        pos = round_half_up(k * step)
        if pos > last:
            break
        if pos > positions[-1]:
            positions.append(pos)
        k += 1
    if positions[-1] != last and last > 0:
        positions.append(last)
    return positions


def sliding_window_candidates(
    width: int, height: int, fractions: Sequence[float], stride_fraction: float
) -> list[Rect]:
    """Enumerate sliding windows: one size per fraction, row-major placement."""
    stride = Fraction(str(stride_fraction))
    windows: list[Rect] = []
    for f in fractions:
        frac = Fraction(str(f))
        w = min(max(round_half_up(frac * width), 1), width)
        h = min(max(round_half_up(frac * height), 1), height)
        for y in _window_positions(height, h, stride):
            for x in _window_positions(width, w, stride):
                windows.append(Rect(x, y, x + w, y + h))
    return windows


def sliding_window_crop(
    image: Image,
    question: str,
    scorer: RelevanceScorer,
    cfg: StrategyConfig,
    cache: Optional[ScoreCache] = None,
) -> CropResult:
    """Exhaustive multi-scale window search scored by the relevance model."""
    windows = sliding_window_candidates(
        image.width, image.height, cfg.window_fractions, cfg.window_stride_fraction
    )
    return select_best_candidate(
        image, question, _with_full_candidate(image, windows, cfg), scorer, cache, note="win"
    )


def extract_patch_component(
    patch_map: PatchMap, threshold: float
) -> tuple[list[tuple[int, int]], Rect]:
    """Cells of the above-threshold component containing the hottest cell.

    The map is normalized by its maximum, binarized at ``threshold``, and the
    4-connected component containing the argmax cell (first in row-major order
    on ties) is returned along with its covering grid rect.
    """
    peak = patch_map.max_value()
    if peak <= 0.0:
        raise DegenerateSaliencyError("saliency map has no positive values")
    rows, cols = patch_map.rows, patch_map.cols
    passing = [
        [patch_map.value_at(r, c) / peak >= threshold for c in range(cols)]
        for r in range(rows)
    ]
    argmax = (0, 0)
    best_value = patch_map.value_at(0, 0)
    for r in range(rows):
        for c in range(cols):
            value = patch_map.value_at(r, c)
            if value > best_value:
                best_value = value
                argmax = (r, c)

    component: list[tuple[int, int]] = []
    seen = {argmax}
    queue = [argmax]
    while queue:
        r, c = queue.pop(0)
        component.append((r, c))
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < rows and 0 <= nc < cols and (nr, nc) not in seen and passing[nr][nc]:
                seen.add((nr, nc))
                queue.append((nr, nc))

    min_r = min(r for r, _ in component)
    max_r = max(r for r, _ in component)
    min_c = min(c for _, c in component)
    max_c = max(c for _, c in component)
    return component, Rect(min_c, min_r, max_c + 1, max_r + 1)


def patchmap_crop(
    image: Image,
    question: str,
    saliency_source: SaliencySource,
    cfg: StrategyConfig,
) -> CropResult:
    """Crop to the hottest connected region of a question-conditioned saliency grid."""
    patch_map = saliency_source.saliency(image, question)
    component, grid_rect = extract_patch_component(patch_map, cfg.patch_threshold)
    rect = patch_to_pixel_rect(grid_rect, patch_map, image)
    score = math.fsum(patch_map.value_at(r, c) for r, c in component) / len(component)
    return CropResult(
        rect=rect,
        score=score,
        trace=(TraceEntry(rect, score, note="patchmap-component"),),
    )


def required_capabilities(kind: str) -> tuple[str, ...]:
    """Backend slots a strategy kind needs before a run may start."""
    return {
        "human": (),
        "none": (),
        "iterative": ("scorer",),
        "sliding_window": ("scorer",),
        "detector": ("detector", "scorer"),
        "segmenter": ("segmenter", "scorer"),
        "patchmap": ("saliency",),
    }[kind]


def apply_strategy(
    cfg: StrategyConfig,
    image: Image,
    question: str,
    backends: BackendSuite,
    gt_box: Optional[Rect] = None,
    cache: Optional[ScoreCache] = None,
) -> CropResult:
    """Dispatch one record through the configured strategy."""
    for capability in required_capabilities(cfg.kind):
        if getattr(backends, capability) is None:
            raise MissingBackendError(f"strategy {cfg.kind!r} requires a {capability} backend")
    if cfg.kind == "none":
        return CropResult(rect=image.full_rect(), score=None, trace=())
    if cfg.kind == "human":
        return human_crop(gt_box)
    if cfg.kind == "iterative":
        return iterative_refine(image, question, backends.scorer, cfg, cache)
    if cfg.kind == "sliding_window":
        return sliding_window_crop(image, question, backends.scorer, cfg, cache)
    if cfg.kind == "detector":
        return detector_crop(image, question, backends.detector, backends.scorer, cfg, cache)
    if cfg.kind == "segmenter":
        return segmenter_crop(image, question, backends.segmenter, backends.scorer, cfg, cache)
    if cfg.kind == "patchmap":
        return patchmap_crop(image, question, backends.saliency, cfg)
    raise StrategyError(f"unknown strategy kind {cfg.kind!r}")
