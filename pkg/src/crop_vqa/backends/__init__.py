"""Backend interfaces, synthetic oracles, wire clients, and the score cache."""

from .interfaces import (
    BackendError,
    BackendSuite,
    Detection,
    Detector,
    ProtocolError,
    RelevanceScorer,
    SaliencySource,
    Segmenter,
    TransportError,
    VqaAnswer,
    VqaModel,
)

__all__ = [
    "BackendError",
    "BackendSuite",
    "Detection",
    "Detector",
    "ProtocolError",
    "RelevanceScorer",
    "SaliencySource",
    "Segmenter",
    "TransportError",
    "VqaAnswer",
    "VqaModel",
]
