"""Run manifests: the full resolved config echoed next to the outputs.

A manifest contains everything needed to re-run a subcommand
bit-identically (tool version, resolved flags, input digests) and
deliberately nothing else — no timestamps, hostnames, or paths that vary
between identical runs.
"""

from __future__ import annotations

import hashlib
import json
import os
from typing import Any, Mapping, Sequence


def dump_json(payload: Any) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_json(path: str, payload: Any) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_json(payload))


def write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(
    out_dir: str,
    subcommand: str,
    version: str,
    config: Mapping[str, Any],
    inputs: Mapping[str, str],
    outputs: Sequence[str],
) -> str:
    """Write manifest.json into ``out_dir`` and return its path.

    ``inputs`` maps labels to file paths; files are digested so the
    manifest pins exact input bytes.
    """
    payload = {
        "tool": "flocpriv",
        "version": version,
        "subcommand": subcommand,
        "config": {k: config[k] for k in sorted(config)},
        "inputs": {
            label: {"path": path, "sha256": file_sha256(path)}
            for label, path in sorted(inputs.items())
        },
        "outputs": sorted(outputs),
    }
    path = os.path.join(out_dir, "manifest.json")
    write_json(path, payload)
    return path
