"""Run manifests: every subcommand records what it consumed and produced.

A manifest holds the resolved configuration, the seeds, SHA-256 hashes of
all input and output artifacts, the wall-clock duration, and a metric
summary.  Verification re-hashes the outputs, and a recorded run can be
re-dispatched from its manifest alone; in deterministic mode the rerun
must reproduce every output hash bit for bit."""
from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional

from .errors import ValidationError

__all__ = ["RunManifest", "sha256_file", "new_run_id", "save_manifest",
           "load_manifest", "hash_artifacts", "verify_manifest"]

MANIFEST_FORMAT = "usdlab-manifest-1"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def new_run_id(subcommand: str, config: Dict) -> str:
    """Timestamp plus a short digest of the resolved config."""
    stamp = time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
    digest = hashlib.sha256(
        json.dumps([subcommand, config], sort_keys=True).encode()).hexdigest()[:8]
    return f"{stamp}-{digest}"


@dataclass
class RunManifest:
    run_id: str
    subcommand: str
    config: Dict[str, str]
    seeds: Dict[str, int] = field(default_factory=dict)
    inputs: Dict[str, str] = field(default_factory=dict)    # path -> sha256
    outputs: Dict[str, str] = field(default_factory=dict)   # path -> sha256
    duration_seconds: float = 0.0
    metrics: Dict[str, float] = field(default_factory=dict)
    deterministic: bool = False
    format: str = MANIFEST_FORMAT

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        if data.get("format") != MANIFEST_FORMAT:
            raise ValidationError(
                f"unsupported manifest format {data.get('format')!r}")
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        missing = {"run_id", "subcommand", "config"} - set(known)
        if missing:
            raise ValidationError(f"manifest missing fields {sorted(missing)}")
        return cls(**known)


def hash_artifacts(paths, base: Optional[str] = None) -> Dict[str, str]:
    """Map each path to its content hash; paths are stored relative to
    `base` when given so manifests travel with their run directory."""
    out: Dict[str, str] = {}
    for path in paths:
        key = os.path.relpath(path, base) if base else str(path)
        out[key] = sha256_file(path)
    return out


def save_manifest(manifest: RunManifest, path) -> None:
    with open(path, "w") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path) -> RunManifest:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"manifest {path} is not valid JSON: {exc}")
    return RunManifest.from_dict(data)


def verify_manifest(manifest: RunManifest, base: Optional[str] = None) -> None:
    """Every referenced output must exist and hash-match."""
    for rel, want in manifest.outputs.items():
        path = os.path.join(base, rel) if base else rel
        if not os.path.exists(path):
            raise ValidationError(f"manifest output missing: {rel}")
        got = sha256_file(path)
        if got != want:
            raise ValidationError(
                f"manifest output hash mismatch for {rel}: "
                f"recorded {want[:12]}, found {got[:12]}")
