"""Disk-backed cache for backend responses.

Keys bind the backend identity, the source-image content hash, the region
being scored (None for whole-payload calls), and the text. Values are the
JSON-serializable response payloads. The cache only ever removes latency: a
hit must round-trip to exactly the value that was stored, and concurrent
writers of the same key are writing the same value by construction.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Any, Optional

from ..geometry import Rect

KEY_VERSION = "v1"


def cache_key(identity: str, image_hash: str, rect: Optional[Rect], text: str) -> str:
    box = list(rect.as_tuple()) if rect is not None else None
    return json.dumps(
        [KEY_VERSION, identity, image_hash, box, text],
        separators=(",", ":"),
        ensure_ascii=True,
    )


class ScoreCache:
    """Append-only JSONL key/value store, loaded fully at open.

    Thread-safe within one process; incomplete trailing lines (from a killed
    run) are ignored on load. Later entries for a key win, which is harmless
    because identical keys always carry identical values.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._data: dict[str, Any] = {}
        self.hits = 0
        self.misses = 0
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self.path.exists():
            with self.path.open("r", encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        entry = json.loads(line)
                    except json.JSONDecodeError:
                        continue
                    if isinstance(entry, dict) and "k" in entry:
                        self._data[entry["k"]] = entry.get("v")

    def __len__(self) -> int:
        return len(self._data)

    def get(self, key: str) -> Any:
        with self._lock:
            if key in self._data:
                self.hits += 1
                return self._data[key]
            self.misses += 1
            return None

    def put(self, key: str, value: Any) -> None:
        line = json.dumps({"k": key, "v": value}, separators=(",", ":"))
        with self._lock:
            if key in self._data:
                return
            self._data[key] = value
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")

    def stats(self) -> dict[str, int]:
        with self._lock:
            return {"entries": len(self._data), "hits": self.hits, "misses": self.misses}
