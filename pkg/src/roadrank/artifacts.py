"""Artifact hashing and provenance sidecars.

Every stage output gets a ``<name>.prov.json`` sidecar recording the sha256 of
the artifact itself and of every input it depended on. Re-running a stage with
unchanged inputs must reproduce the artifact byte for byte, so nothing
time-dependent is ever written.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def array_fingerprint(arr: np.ndarray) -> str:
    arr = np.ascontiguousarray(arr)
    h = hashlib.sha256()
    h.update(str(arr.dtype).encode())
    h.update(str(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()


def fingerprint_map(**arrays: np.ndarray) -> dict[str, str]:
    return {name: array_fingerprint(a) for name, a in sorted(arrays.items())}


def write_provenance(artifact: str | Path, inputs: dict[str, str]) -> Path:
    """Record artifact hash + input hashes next to the artifact."""
    artifact = Path(artifact)
    doc = {"artifact": artifact.name, "sha256": sha256_file(artifact), "inputs": dict(sorted(inputs.items()))}
    side = artifact.with_name(artifact.name + ".prov.json")
    with open(side, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")
    return side


def check_provenance(artifact: str | Path) -> None:
    """Raise if the artifact no longer matches its recorded hash."""
    artifact = Path(artifact)
    side = artifact.with_name(artifact.name + ".prov.json")
    if not side.exists():
        return
    with open(side, encoding="utf-8") as f:
        doc = json.load(f)
    actual = sha256_file(artifact)
    if actual != doc.get("sha256"):
        raise IOError(f"{artifact.name}: content hash {actual[:12]}... does not match provenance record")


def dump_json(path: str | Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")
