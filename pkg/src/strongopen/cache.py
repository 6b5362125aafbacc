"""Content-addressed JSON cache for expensive experiment results.

Keys are sha256 digests of the canonical JSON of (operation, inputs,
tolerance, code version).  Writes go to a temporary file in the cache
directory followed by an atomic rename, so readers never see partial
entries.  A corrupt entry is reported, recomputed and overwritten.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import time
from pathlib import Path
from typing import Any, Callable

from . import __version__

ENV_CACHE_DIR = "STRONGOPEN_CACHE_DIR"

log = logging.getLogger(__name__)


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def cache_key(operation: str, inputs: Any, tolerance: Any = None, version: str = __version__) -> str:
    payload = {"op": operation, "inputs": inputs, "tol": tolerance, "version": version}
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


class Cache:
    """Directory-backed cache; ``directory=None`` disables it."""

    def __init__(self, directory: str | os.PathLike | None = None, enabled: bool = True):
        if directory is None:
            directory = os.environ.get(ENV_CACHE_DIR)
        self.directory = Path(directory) if directory and enabled else None
        self.hits = 0
        self.misses = 0

    @property
    def enabled(self) -> bool:
        return self.directory is not None

    def _path(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.json"

    def get(self, key: str):
        if not self.enabled:
            return None
        path = self._path(key)
        if not path.exists():
            return None
        try:
            with path.open("r", encoding="utf-8") as fh:
                entry = json.load(fh)
            if entry.get("key") != key or "value" not in entry:
                raise ValueError("key mismatch")
            return entry["value"]
        except (ValueError, OSError) as exc:
            log.warning("corrupt cache entry %s (%s); recomputing", path, exc)
            return None

    def put(self, key: str, value: Any) -> None:
        if not self.enabled:
            return
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        entry = {"key": key, "created_at": time.time(), "value": value}
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(entry, fh, sort_keys=True)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def get_or_compute(self, key: str, compute: Callable[[], Any]):
        """Return the cached value for ``key`` or compute, store and return it.

        The value must be JSON-serialisable; it is round-tripped through JSON
        even on a miss so hits and misses return identical objects.
        """
        value = self.get(key)
        if value is not None:
            self.hits += 1
            return value
        self.misses += 1
        value = json.loads(json.dumps(compute()))
        self.put(key, value)
        return value
