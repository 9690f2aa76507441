"""Image-text similarity over a dual-encoder checkpoint (transformers CLIP)."""

from __future__ import annotations

from PIL import Image

from .base import EngineError, ScoreEngine


class ClipScoreEngine(ScoreEngine):
    """Cosine similarity between the image and text embeddings.

    options:
        model: checkpoint id or local path (default openai/clip-vit-base-patch32)
        device: torch device string
    """

    def __init__(self, options: dict | None = None):
        options = options or {}
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise EngineError(f"clip engine needs torch+transformers installed: {exc}") from exc
        self._torch = torch
        model_id = options.get("model", "openai/clip-vit-base-patch32")
        self.device = options.get("device", "cpu")
        try:
            self.model = CLIPModel.from_pretrained(model_id).to(self.device).eval()
            self.processor = CLIPProcessor.from_pretrained(model_id)
        except Exception as exc:
            raise EngineError(f"cannot load CLIP checkpoint {model_id!r}: {exc}") from exc

    def score(self, image: Image.Image, text: str) -> float:
        torch = self._torch
        inputs = self.processor(
            text=[text], images=[image.convert("RGB")], return_tensors="pt",
            padding=True, truncation=True,
        ).to(self.device)
        with torch.no_grad():
            outputs = self.model(**inputs)
            image_embeds = outputs.image_embeds / outputs.image_embeds.norm(dim=-1, keepdim=True)
            text_embeds = outputs.text_embeds / outputs.text_embeds.norm(dim=-1, keepdim=True)
            similarity = (image_embeds * text_embeds).sum()
        return float(similarity.item())
