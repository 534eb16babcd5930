"""Content-addressed stage cache.

A stage's output directory is named by a hash of its input file contents
and the configuration slice that affects it, so re-runs with unchanged
inputs reuse finished work and any change reruns exactly the stages it
touches.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


def hash_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_obj(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, default=str).encode()
    ).hexdigest()


class StageCache:
    """Directory-per-key cache with completion markers."""

    MARKER = ".complete"

    def __init__(self, root: str | Path, enabled: bool = True):
        self.root = Path(root)
        self.enabled = enabled

    def dir_for(self, stage: str, key: dict) -> Path:
        digest = hash_obj({"stage": stage, **key})[:24]
        d = self.root / stage / digest
        d.mkdir(parents=True, exist_ok=True)
        return d

    def is_complete(self, d: Path) -> bool:
        return self.enabled and (d / self.MARKER).exists()

    def mark_complete(self, d: Path) -> None:
        (d / self.MARKER).write_text("ok")
