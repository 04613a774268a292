"""Content-addressed artifact store and run-directory utilities."""

from __future__ import annotations

import hashlib
import json
import os
import time
from pathlib import Path
from typing import Any

from .errors import UnknownArtifact
from .model import canonical_json


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def stable_hash(*parts: Any) -> str:
    """Hex digest of the canonical JSON of the given parts."""
    return sha256_hex(canonical_json(list(parts)).encode("utf-8"))


def derive_seed(*parts: Any) -> int:
    """Deterministic 63-bit seed derived from arbitrary JSON-able parts."""
    return int(stable_hash(*parts)[:15], 16)


class RunStore:
    """Artifacts keyed by content hash under <root>/artifacts/<sha256>.<ext>.

    put() is idempotent: identical bytes land at the identical path and the
    existing file is left alone.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.artifacts_dir = self.root / "artifacts"
        self.artifacts_dir.mkdir(parents=True, exist_ok=True)

    def put(self, data: bytes, ext: str) -> str:
        ref = f"{sha256_hex(data)}.{ext.lstrip('.')}"
        path = self.artifacts_dir / ref
        if not path.exists():
            tmp = path.with_suffix(path.suffix + ".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, path)
        return ref

    def get(self, ref: str) -> bytes:
        path = self.artifacts_dir / ref
        if not path.is_file():
            raise UnknownArtifact(ref)
        return path.read_bytes()

    def path(self, ref: str) -> Path:
        path = self.artifacts_dir / ref
        if not path.is_file():
            raise UnknownArtifact(ref)
        return path

    def exists(self, ref: str) -> bool:
        return (self.artifacts_dir / ref).is_file()


def write_json_atomic(path: str | Path, payload: Any) -> None:
    """Write JSON via a temp file and rename, so readers never see a partial file."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)


class TickClock:
    """Virtual clock for reproducible runs: every query advances a fixed step."""

    def __init__(self, start: float = 0.0, step: float = 0.001):
        self._now = float(start)
        self._step = float(step)

    def __call__(self) -> float:
        now = self._now
        self._now = round(self._now + self._step, 9)
        return now


def system_clock() -> float:
    return time.time()
