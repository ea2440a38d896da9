"""Run manifests: command, config snapshot, seed, and output hashes.

A manifest pins everything needed to reproduce a command's outputs; two
runs with identical manifests produce byte-identical text artifacts.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

__all__ = ["RunManifest", "hash_file", "write_run_manifest"]


def hash_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    command: str
    seed: int
    config: dict[str, str] = field(default_factory=dict)
    artifacts: dict[str, str] = field(default_factory=dict)  # filename -> sha256

    def add_artifact(self, path: str) -> None:
        self.artifacts[os.path.basename(path)] = hash_file(path)

    def render(self) -> str:
        lines = [f"command {self.command}", f"seed {self.seed}"]
        for k in sorted(self.config):
            lines.append(f"config {k} {self.config[k]}")
        for name in sorted(self.artifacts):
            lines.append(f"artifact {self.artifacts[name]} {name}")
        return "\n".join(lines) + "\n"


def write_run_manifest(out_dir: str, manifest: RunManifest) -> str:
    path = os.path.join(out_dir, f"{manifest.command}.manifest.txt")
    with open(path, "w") as f:
        f.write(manifest.render())
    return path
