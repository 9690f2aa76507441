"""Backend interfaces: the seam between the deterministic core and inference.

Every cropping strategy and the experiment runner talk to models exclusively
through these protocols. Implementations must be deterministic for a fixed
``identity``, image bytes, and text; that is what makes caching and replayed
runs sound. Scores are opaque reals: they are only ever compared against each
other under the same scorer identity, never across backends.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence, runtime_checkable

from ..geometry import Image, PatchMap, Rect


class BackendError(Exception):
    """Base class for backend failures; one question fails, the run continues."""


class TransportError(BackendError):
    """The endpoint could not be reached (connect/timeout, after retry)."""


class ProtocolError(BackendError):
    """The endpoint answered, but the payload violates the wire contract."""


@dataclass(frozen=True)
class Detection:
    """One detected object proposal in source-image pixel coordinates."""

    box: Rect
    confidence: float
    label: str

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence!r}")


@dataclass(frozen=True)
class VqaAnswer:
    """Free-form answer text plus an optional model-internal score."""

    text: str
    score: Optional[float] = None


@runtime_checkable
class RelevanceScorer(Protocol):
    """Scores how relevant an image is to a piece of text (higher = more)."""

    @property
    def identity(self) -> str: ...

    def score(self, image: Image, text: str) -> float: ...


@runtime_checkable
class Detector(Protocol):
    """Returns object proposals with confidence at or above the threshold."""

    @property
    def identity(self) -> str: ...

    def detect(self, image: Image, confidence_threshold: float) -> list[Detection]: ...


@runtime_checkable
class Segmenter(Protocol):
    """Returns covering boxes of segmentation masks, within image bounds."""

    @property
    def identity(self) -> str: ...

    def segment(self, image: Image) -> list[Rect]: ...


@runtime_checkable
class VqaModel(Protocol):
    """Answers a question about one or more images.

    When two images are supplied the order is (original, crop).
    """

    @property
    def identity(self) -> str: ...

    def answer(self, images: Sequence[Image], question: str) -> VqaAnswer: ...


@runtime_checkable
class SaliencySource(Protocol):
    """Produces a question-conditioned saliency grid over the image.

    Grid dimensions are fixed per backend identity.
    """

    @property
    def identity(self) -> str: ...

    def saliency(self, image: Image, question: str) -> PatchMap: ...


@dataclass
class BackendSuite:
    """The backends one experiment run has available; unused slots stay None."""

    scorer: Optional[RelevanceScorer] = None
    detector: Optional[Detector] = None
    segmenter: Optional[Segmenter] = None
    vqa: Optional[VqaModel] = None
    saliency: Optional[SaliencySource] = None
    extras: dict = field(default_factory=dict)
