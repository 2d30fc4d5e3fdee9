import os
import json
import logging
import platform
from typing import Any, Dict, List, Optional

import numpy as np

from core import __version__
from core.exceptions import MwumNetError
from utils.config import MANIFEST_NAME
from utils.helpers import canonical_json, create_directory, json_safe, sha256_file, sha256_text

logger = logging.getLogger(__name__)


class RunManager:
    """
    Owns one output directory: writes artifacts and the manifest that
    describes how to reproduce them.
    """

    def __init__(self, output_dir: str, command: str, config: Dict[str, Any],
                 topology_path: Optional[str] = None):
        self.output_dir = os.path.abspath(output_dir)
        self.command = command
        self.config = config
        self.topology_path = topology_path
        self.seeds: List[int] = []
        self.artifacts: Dict[str, str] = {}
        self.summary: Dict[str, Any] = {}

    def create_run_directory(self) -> str:
        if not create_directory(self.output_dir):
            raise MwumNetError(f"Failed to create output directory: {self.output_dir}")
        return self.output_dir

    def artifact_path(self, filename: str) -> str:
        return os.path.join(self.output_dir, filename)

    def register_artifact(self, filepath: str) -> str:
        """Record a file written into the run directory."""
        name = os.path.relpath(filepath, self.output_dir)
        if not os.path.isfile(filepath):
            raise MwumNetError(f"Failed to register artifact: {filepath} does not exist")
        self.artifacts[name] = filepath
        return filepath

    def write_json(self, filename: str, data: Any) -> str:
        path = self.artifact_path(filename)
        try:
            with open(path, "w") as f:
                json.dump(json_safe(data), f, indent=4, sort_keys=True, allow_nan=False)
                f.write("\n")
        except (OSError, TypeError, ValueError) as e:
            raise MwumNetError(f"Failed to write {filename}: {e}")
        return self.register_artifact(path)

    def add_seeds(self, seeds) -> None:
        for seed in seeds:
            if seed not in self.seeds:
                self.seeds.append(int(seed))

    def get_manifest(self) -> Dict[str, Any]:
        """Manifest contents; deterministic given the same inputs and outputs."""
        topology_hash = None
        if self.topology_path and os.path.isfile(self.topology_path):
            topology_hash = sha256_file(self.topology_path)
        return {
            "command": self.command,
            "config": self.config,
            "config_sha256": sha256_text(canonical_json(self.config)),
            "topology": os.path.basename(self.topology_path) if self.topology_path else None,
            "topology_sha256": topology_hash,
            "seeds": sorted(self.seeds),
            "versions": {
                "mwum_net": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
            },
            "artifacts": {name: sha256_file(path) for name, path in sorted(self.artifacts.items())},
            "summary": self.summary,
        }

    def write_manifest(self) -> str:
        path = self.artifact_path(MANIFEST_NAME)
        try:
            with open(path, "w") as f:
                json.dump(json_safe(self.get_manifest()), f, indent=4, sort_keys=True,
                          allow_nan=False)
                f.write("\n")
        except (OSError, TypeError, ValueError) as e:
            raise MwumNetError(f"Failed to write manifest: {e}")
        logger.info("Manifest written to %s", path)
        return path

    @staticmethod
    def load_manifest(run_dir: str) -> Dict[str, Any]:
        path = os.path.join(run_dir, MANIFEST_NAME)
        if not os.path.exists(path):
            raise MwumNetError(f"Manifest not found: {path}")
        try:
            with open(path, "r") as f:
                return json.load(f)
        except (OSError, ValueError) as e:
            raise MwumNetError(f"Failed to load manifest: {e}")

    def verify_artifacts(self) -> Dict[str, bool]:
        """Compare each artifact's current hash with the manifest on disk."""
        manifest = self.load_manifest(self.output_dir)
        return {name: os.path.isfile(self.artifact_path(name))
                and sha256_file(self.artifact_path(name)) == digest
                for name, digest in manifest.get("artifacts", {}).items()}
