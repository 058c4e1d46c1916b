"""Append-only run manifests for artifact-producing commands.

Every command that writes artifacts appends exactly one JSON line to
``manifest.jsonl`` in its output directory: the command, a config snapshot,
sha256 hashes of the inputs, the tool version, timestamps, and the output
paths. Re-running a pipeline from a manifest with identical input hashes
(local backend or mock endpoint) reproduces the outputs byte for byte; the
manifest records how, it never participates in what.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def append_manifest(
    out_dir: str | Path,
    command: str,
    config: Mapping,
    inputs: Mapping[str, str | Path],
    outputs: Iterable[str | Path],
    seed: int | None = None,
) -> Path:
    """Append one manifest line and return the manifest path."""
    from . import __version__

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {
        "command": command,
        "config": dict(config),
        "input_hashes": {name: file_sha256(path) for name, path in inputs.items()},
        "outputs": [str(path) for path in outputs],
        "tool_version": __version__,
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    if seed is not None:
        record["seed"] = seed
    manifest_path = out_dir / "manifest.jsonl"
    with open(manifest_path, "a", encoding="utf-8") as handle:
        handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    return manifest_path
