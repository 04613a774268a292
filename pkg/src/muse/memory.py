"""Versioned shared state with an append-only commit log.

Every commit bumps a global version counter; nothing is ever rewritten in
place. Reads can pin a version and see exactly the commits at or below it,
which is what lets concurrent audits inspect a stable snapshot while the
loop keeps revising.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterator

import numpy as np

from .errors import CommitOnFrozenIdentity, UnknownVersion
from .model import IdentityState, to_jsonable
from .store import system_clock

NAMESPACES = frozenset({"identity", "shot", "layout", "audio", "tail", "style"})

_UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class Commit:
    version: int
    namespace: str
    entry_id: str
    entry: Any
    timestamp: float


class StateMemory:
    """Append-only map from (namespace, id) to versioned entries."""

    def __init__(self, log_path: str | Path | None = None,
                 clock: Callable[[], float] = system_clock):
        self._lock = threading.Lock()
        self._commits: list[Commit] = []
        self._clock = clock
        self._log_path = Path(log_path) if log_path else None

    @property
    def version(self) -> int:
        with self._lock:
            return len(self._commits)

    def commit(self, namespace: str, entry_id: str, entry: Any) -> int:
        """Append a new entry version; returns the global version it received."""
        if namespace not in NAMESPACES:
            raise ValueError(f"unknown namespace: {namespace!r}")
        with self._lock:
            current = self._latest(namespace, entry_id, len(self._commits))
            if isinstance(current, IdentityState) and current.frozen:
                raise CommitOnFrozenIdentity(f"{namespace}/{entry_id}")
            if isinstance(entry, IdentityState):
                _check_unit_norm(entry)
            record = Commit(
                version=len(self._commits) + 1,
                namespace=namespace,
                entry_id=entry_id,
                entry=entry,
                timestamp=self._clock(),
            )
            self._commits.append(record)
            if self._log_path is not None:
                self._append_log(record)
            return record.version

    def lookup(self, namespace: str, entry_id: str, version: int | None = None) -> Any:
        """Latest entry for the key visible at `version` (default: current head)."""
        with self._lock:
            head = len(self._commits)
            if version is None:
                version = head
            if version < 0 or version > head:
                raise UnknownVersion(f"version {version} beyond head {head}")
            entry = self._latest(namespace, entry_id, version, miss=_MISSING)
        if entry is _MISSING:
            raise KeyError(f"{namespace}/{entry_id}")
        return entry

    def get(self, namespace: str, entry_id: str, default: Any = None) -> Any:
        try:
            return self.lookup(namespace, entry_id)
        except KeyError:
            return default

    def history(self, namespace: str, entry_id: str) -> list[Commit]:
        with self._lock:
            return [c for c in self._commits if c.namespace == namespace and c.entry_id == entry_id]

    def entries(self, namespace: str) -> dict[str, Any]:
        """Latest visible entry per id within one namespace."""
        with self._lock:
            latest: dict[str, Any] = {}
            for commit in self._commits:
                if commit.namespace == namespace:
                    latest[commit.entry_id] = commit.entry
            return latest

    def __iter__(self) -> Iterator[Commit]:
        with self._lock:
            return iter(list(self._commits))

    def _latest(self, namespace: str, entry_id: str, version: int, miss: Any = None) -> Any:
        for commit in reversed(self._commits[:version]):
            if commit.namespace == namespace and commit.entry_id == entry_id:
                return commit.entry
        return miss

    def _append_log(self, record: Commit) -> None:
        line = json.dumps(
            {
                "version": record.version,
                "namespace": record.namespace,
                "id": record.entry_id,
                "ts": record.timestamp,
                "entry": to_jsonable(record.entry),
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        with self._log_path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")


_MISSING = object()


def _check_unit_norm(state: IdentityState) -> None:
    for anchor in state.visual:
        norm = float(np.linalg.norm(np.asarray(anchor.embedding, dtype=np.float64)))
        if abs(norm - 1.0) > _UNIT_NORM_TOL:
            raise ValueError(
                f"identity embedding for {state.character_id!r} view {anchor.view!r} "
                f"is not unit-norm (|v| = {norm:.6f})"
            )
