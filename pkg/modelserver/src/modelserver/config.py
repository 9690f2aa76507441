"""Server configuration: which engine backs each capability.

The /identity version is a digest of the resolved engine configuration, so
clients caching by (identity, payload) can never mix responses from different
checkpoints or engine settings.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field

CAPABILITIES = ("score", "detect", "segment", "vqa", "saliency")

DEFAULT_PROMPT_TEMPLATE = "Question: {question} Short answer:"


class EngineSpec(BaseModel):
    engine: str
    options: dict = Field(default_factory=dict)


class ServerConfig(BaseModel):
    name: str = "crop-vqa-modelserver"
    device: str = "cpu"
    max_image_side: int = 1024
    engines: dict[str, EngineSpec] = Field(default_factory=dict)

    def version(self) -> str:
        payload = {
            "device": self.device,
            "max_image_side": self.max_image_side,
            "engines": {k: v.model_dump() for k, v in sorted(self.engines.items())},
        }
        digest = hashlib.sha256(
            json.dumps(payload, sort_keys=True).encode("utf-8")
        ).hexdigest()[:12]
        return f"cfg-{digest}"

    @classmethod
    def from_file(cls, path: str | Path) -> "ServerConfig":
        with Path(path).open("r", encoding="utf-8") as handle:
            return cls.model_validate(json.load(handle))

    @classmethod
    def all_toy(cls, name: str = "crop-vqa-modelserver", **engine_options) -> "ServerConfig":
        return cls(
            name=name,
            engines={
                capability: EngineSpec(engine="toy", options=dict(engine_options))
                for capability in CAPABILITIES
            },
        )


def validate_capabilities(cfg: ServerConfig) -> Optional[str]:
    unknown = [c for c in cfg.engines if c not in CAPABILITIES]
    if unknown:
        return f"unknown capabilities in config: {unknown}; expected {list(CAPABILITIES)}"
    return None
