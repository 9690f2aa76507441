"""The protocol conformance suite, against healthy and broken servers."""

import pytest

from crop_vqa.backends.interfaces import Detection
from crop_vqa.backends.synthetic import (
    PlantedTargetScorer,
    ScriptedVqaModel,
    StaticDetector,
    StaticSaliency,
    StaticSegmenter,
)
from crop_vqa.conformance import PROBE_QUESTION, run_conformance, summarize
from crop_vqa.geometry import PatchMap, Rect


def healthy_backends():
    return dict(
        scorer=PlantedTargetScorer(Rect(8, 8, 40, 40)),
        detector=StaticDetector(
            [
                Detection(Rect(8, 8, 40, 40), 0.9, "target"),
                Detection(Rect(0, 0, 20, 20), 0.5, "decoy"),
            ]
        ),
        segmenter=StaticSegmenter([Rect(8, 8, 40, 40), Rect(1, 1, 5, 5)]),
        vqa=ScriptedVqaModel({PROBE_QUESTION: "a marker"}),
        saliency=StaticSaliency(patch_map=PatchMap(4, 4, tuple([0.5] * 16))),
    )


def test_full_stub_passes_every_check(stub_server):
    server = stub_server(**healthy_backends())
    results = run_conformance(server.base_url)
    failures = [r for r in results if not r.passed]
    assert not failures, failures
    passed, total = summarize(results)
    assert passed == total == len(results)


def test_nondeterministic_scorer_fails_determinism_check(stub_server):
    class FlakyScorer:
        identity = "flaky"

        def __init__(self):
            self.n = 0

        def score(self, image, text):
            self.n += 1
            return float(self.n)

    backends = healthy_backends()
    backends["scorer"] = FlakyScorer()
    server = stub_server(**backends)
    results = {r.name: r.passed for r in run_conformance(server.base_url)}
    assert not results["score: deterministic for identical payloads"]
    assert results["vqa: deterministic for identical payloads"]


def test_threshold_leak_fails_detect_check(stub_server):
    class LeakyDetector:
        identity = "leaky"

        def detect(self, image, confidence_threshold):
            return [Detection(Rect(0, 0, 5, 5), 0.1, "weak")]

    backends = healthy_backends()
    backends["detector"] = LeakyDetector()
    server = stub_server(**backends)
    results = {r.name: r.passed for r in run_conformance(server.base_url)}
    assert not results["detect: honors the confidence threshold"]


def test_unconfigured_capability_fails_unless_allowed(stub_server):
    backends = healthy_backends()
    backends.pop("saliency")
    server = stub_server(**backends)

    strict = {r.name: r for r in run_conformance(server.base_url)}
    assert not strict["saliency: returns a non-negative grid"].passed

    lenient = {r.name: r for r in run_conformance(server.base_url, allow_unconfigured=True)}
    assert lenient["saliency: returns a non-negative grid"].passed
    assert "not configured" in lenient["saliency: returns a non-negative grid"].detail


def test_unreachable_server_fails_with_transport_details():
    results = run_conformance("http://127.0.0.1:9", timeout_s=0.3)
    assert all(not r.passed for r in results)
    assert any("transport failure" in r.detail for r in results)
