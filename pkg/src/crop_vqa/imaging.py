"""PNG and base64 codecs plus file loading for the RGB8 image type.

PNG is used on every wire and disk boundary because it is lossless: backend
scores are only reproducible if the pixels survive the round trip bit for bit.
"""

from __future__ import annotations

import base64
import binascii
import io
from pathlib import Path

from PIL import Image as PILImage

from .geometry import Image


class ImageDecodeError(ValueError):
    """Payload could not be decoded into an RGB8 image."""


def from_pil(pil_image: PILImage.Image) -> Image:
    rgb = pil_image.convert("RGB")
    return Image(width=rgb.width, height=rgb.height, pixels=rgb.tobytes())


def to_pil(image: Image) -> PILImage.Image:
    return PILImage.frombytes("RGB", (image.width, image.height), image.pixels)


def encode_png(image: Image) -> bytes:
    buffer = io.BytesIO()
    to_pil(image).save(buffer, format="PNG")
    return buffer.getvalue()


def decode_png(data: bytes) -> Image:
    try:
        pil = PILImage.open(io.BytesIO(data))
        pil.load()
    except Exception as exc:
        raise ImageDecodeError(f"not a decodable image payload: {exc}") from exc
    return from_pil(pil)


def encode_png_base64(image: Image) -> str:
    return base64.b64encode(encode_png(image)).decode("ascii")


def decode_png_base64(text: str) -> Image:
    try:
        raw = base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ImageDecodeError(f"invalid base64 image payload: {exc}") from exc
    return decode_png(raw)


def load_image(path: str | Path) -> Image:
    with PILImage.open(path) as pil:
        return from_pil(pil)


def save_png(image: Image, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    to_pil(image).save(path, format="PNG")


__all__ = [
    "ImageDecodeError",
    "decode_png",
    "decode_png_base64",
    "encode_png",
    "encode_png_base64",
    "from_pil",
    "load_image",
    "save_png",
    "to_pil",
]
