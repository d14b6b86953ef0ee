"""Run manifests: enough metadata next to every output to reproduce it."""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

from . import __version__


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command: str, config: dict,
                   inputs: dict[str, str] | None = None,
                   outputs: dict[str, str] | None = None) -> None:
    payload = {
        "command": command,
        "config": config,
        "tool_version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "inputs": {
            name: {"path": str(p), "sha256": file_sha256(p)}
            for name, p in (inputs or {}).items()
        },
        "outputs": {
            name: {"path": str(p), "sha256": file_sha256(p)}
            for name, p in (outputs or {}).items()
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
