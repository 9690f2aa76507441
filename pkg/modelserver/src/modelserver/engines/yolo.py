"""Object detection over an ultralytics YOLO checkpoint."""

from __future__ import annotations

from PIL import Image

from .base import Box, DetectEngine, EngineError


class YoloDetectEngine(DetectEngine):
    """options: model (weights path or id, default yolov8n.pt), device."""

    def __init__(self, options: dict | None = None):
        options = options or {}
        try:
            from ultralytics import YOLO
        except ImportError as exc:
            raise EngineError(f"yolo engine needs the ultralytics package: {exc}") from exc
        try:
            self.model = YOLO(options.get("model", "yolov8n.pt"))
        except Exception as exc:
            raise EngineError(f"cannot load YOLO weights: {exc}") from exc
        self.device = options.get("device", "cpu")

    def detect(self, image: Image.Image, conf_threshold: float) -> list[tuple[Box, float, str]]:
        results = self.model.predict(
            image.convert("RGB"), conf=conf_threshold, device=self.device, verbose=False
        )
        detections: list[tuple[Box, float, str]] = []
        for result in results:
            names = result.names
            for row in result.boxes:
                x0, y0, x1, y1 = (float(v) for v in row.xyxy[0].tolist())
                conf = float(row.conf[0])
                label = names.get(int(row.cls[0]), str(int(row.cls[0])))
                box = (int(round(x0)), int(round(y0)), int(round(x1)), int(round(y1)))
                detections.append((box, conf, label))
        return detections
