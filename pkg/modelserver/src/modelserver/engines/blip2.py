"""Zero-shot VQA over a BLIP2-style checkpoint, with multi-image support.

The language model sees the concatenation of every supplied image's query
tokens, in the order given (original first, crop second), followed by the
prompt. Saliency is the absolute input gradient of the generated answer's
log-likelihood, pooled onto a fixed grid.
"""

from __future__ import annotations

from typing import Optional, Sequence

from PIL import Image

from .base import EngineError, SaliencyEngine, VqaEngine

DEFAULT_PROMPT = "Question: {question} Short answer:"


class _Blip2Runtime:
    """Shared model/processor pair so /vqa and /saliency load weights once."""

    _instances: dict[tuple[str, str], "_Blip2Runtime"] = {}

    def __init__(self, model_id: str, device: str):
        try:
            import torch
            from transformers import AutoProcessor, Blip2ForConditionalGeneration
        except ImportError as exc:
            raise EngineError(f"blip2 engine needs torch+transformers installed: {exc}") from exc
        self.torch = torch
        self.device = device
        try:
            self.processor = AutoProcessor.from_pretrained(model_id)
            self.model = Blip2ForConditionalGeneration.from_pretrained(model_id).to(device).eval()
        except Exception as exc:
            raise EngineError(f"cannot load BLIP2 checkpoint {model_id!r}: {exc}") from exc

    @classmethod
    def get(cls, model_id: str, device: str) -> "_Blip2Runtime":
        key = (model_id, device)
        if key not in cls._instances:
            cls._instances[key] = cls(model_id, device)
        return cls._instances[key]

    def image_token_embeds(self, pixel_values):
        """Vision tower -> query transformer -> language projection, one image."""
        vision_out = self.model.vision_model(pixel_values=pixel_values)[0]
        attention = self.torch.ones(vision_out.size()[:-1], dtype=self.torch.long).to(self.device)
        query_tokens = self.model.query_tokens.expand(vision_out.shape[0], -1, -1)
        query_out = self.model.qformer(
            query_embeds=query_tokens,
            encoder_hidden_states=vision_out,
            encoder_attention_mask=attention,
        )[0]
        return self.model.language_projection(query_out)

    def build_inputs(self, images: Sequence[Image.Image], prompt: str):
        torch = self.torch
        token_blocks = []
        for image in images:
            pixels = self.processor(images=image.convert("RGB"), return_tensors="pt").pixel_values
            token_blocks.append(self.image_token_embeds(pixels.to(self.device)))
        image_embeds = torch.cat(token_blocks, dim=1)

        text = self.processor.tokenizer(prompt, return_tensors="pt").to(self.device)
        text_embeds = self.model.get_input_embeddings()(text.input_ids)
        inputs_embeds = torch.cat([image_embeds, text_embeds], dim=1)
        attention_mask = torch.ones(inputs_embeds.shape[:-1], dtype=torch.long).to(self.device)
        return inputs_embeds, attention_mask


class Blip2VqaEngine(VqaEngine):
    """options: model (checkpoint id/path), device, prompt_template, max_new_tokens."""

    def __init__(self, options: dict | None = None):
        options = options or {}
        self.runtime = _Blip2Runtime.get(
            options.get("model", "Salesforce/blip2-flan-t5-xl"),
            options.get("device", "cpu"),
        )
        self.prompt_template = options.get("prompt_template", DEFAULT_PROMPT)
        self.max_new_tokens = int(options.get("max_new_tokens", 10))

    def answer(self, images: Sequence[Image.Image], question: str) -> tuple[str, Optional[float]]:
        torch = self.runtime.torch
        prompt = self.prompt_template.format(question=question)
        with torch.no_grad():
            inputs_embeds, attention_mask = self.runtime.build_inputs(images, prompt)
            generated = self.runtime.model.language_model.generate(
                inputs_embeds=inputs_embeds,
                attention_mask=attention_mask,
                max_new_tokens=self.max_new_tokens,
                do_sample=False,
                num_beams=1,
            )
        text = self.runtime.processor.tokenizer.decode(
            generated[0], skip_special_tokens=True
        ).strip()
        return text, None


class Blip2SaliencyEngine(SaliencyEngine):
    """|d log p(answer) / d pixels| pooled to a grid.

    options: model, device, prompt_template, grid (default 16).
    """

    def __init__(self, options: dict | None = None):
        options = options or {}
        self.runtime = _Blip2Runtime.get(
            options.get("model", "Salesforce/blip2-flan-t5-xl"),
            options.get("device", "cpu"),
        )
        self.prompt_template = options.get("prompt_template", DEFAULT_PROMPT)
        self.grid = int(options.get("grid", 16))
        self.max_new_tokens = int(options.get("max_new_tokens", 10))

    def saliency(self, image: Image.Image, question: str) -> tuple[int, int, list[float]]:
        torch = self.runtime.torch
        runtime = self.runtime
        prompt = self.prompt_template.format(question=question)

        pixels = runtime.processor(images=image.convert("RGB"), return_tensors="pt").pixel_values
        pixels = pixels.to(runtime.device).requires_grad_(True)

        image_embeds = runtime.image_token_embeds(pixels)
        text = runtime.processor.tokenizer(prompt, return_tensors="pt").to(runtime.device)
        text_embeds = runtime.model.get_input_embeddings()(text.input_ids)
        inputs_embeds = torch.cat([image_embeds, text_embeds], dim=1)
        attention_mask = torch.ones(inputs_embeds.shape[:-1], dtype=torch.long).to(runtime.device)

        with torch.no_grad():
            generated = runtime.model.language_model.generate(
                inputs_embeds=inputs_embeds.detach(),
                attention_mask=attention_mask,
                max_new_tokens=self.max_new_tokens,
                do_sample=False,
                num_beams=1,
            )
        outputs = runtime.model.language_model(
            inputs_embeds=inputs_embeds,
            attention_mask=attention_mask,
            labels=generated[:, : self.max_new_tokens],
        )
        outputs.loss.backward()

        grad = pixels.grad.detach().abs().mean(dim=1, keepdim=True)  # channel-pooled
        pooled = torch.nn.functional.adaptive_avg_pool2d(grad, (self.grid, self.grid))
        values = pooled.flatten().cpu().tolist()
        return self.grid, self.grid, [max(0.0, float(v)) for v in values]
