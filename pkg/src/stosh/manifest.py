"""Run manifests: every output tied to the config hash, seed and streams."""

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

ARTIFACT_VERSION = 1


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    stream_ids: list
    workers: int
    artifact_version: int = ARTIFACT_VERSION
    created_unix: float = field(default_factory=time.time)
    wall_seconds: float = 0.0
    outputs: dict = field(default_factory=dict)

    def add_output(self, path):
        path = Path(path)
        self.outputs[path.name] = file_sha256(path)

    def write(self, path):
        doc = {
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "stream_ids": self.stream_ids,
            "workers": self.workers,
            "artifact_version": self.artifact_version,
            "created_unix": self.created_unix,
            "wall_seconds": self.wall_seconds,
            "outputs": self.outputs,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(**doc)

    def verify_outputs(self, directory):
        """Names of files whose checksum no longer matches (empty = intact)."""
        bad = []
        for name, digest in self.outputs.items():
            p = Path(directory) / name
            if not p.exists() or file_sha256(p) != digest:
                bad.append(name)
        return bad
