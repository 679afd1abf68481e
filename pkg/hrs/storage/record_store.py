import hashlib
import json
import logging
import os
from typing import Dict, Iterable, List, Mapping, Optional

from hrs.errors import DataError

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"


def _jsonable(value):
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def file_digest(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class RecordStore:
    """Line-delimited JSON records and the run manifest under OUT_DIR."""

    def __init__(self, config):
        self.root = config["OUT_DIR"]
        self.written: List[str] = []

    def path(self, name: str) -> str:
        return os.path.join(self.root, name)

    def track(self, path) -> str:
        rel = os.path.relpath(path, self.root)
        if rel not in self.written:
            self.written.append(rel)
        return path

    def write(self, name: str, records: Iterable[Mapping]) -> str:
        os.makedirs(self.root, exist_ok=True)
        path = self.path(name)
        count = 0
        with open(path, "w") as f:
            for record in records:
                f.write(json.dumps(_jsonable(dict(record)), sort_keys=True) + "\n")
                count += 1
        logger.info(f"Wrote {count} records to {path}")
        return self.track(path)

    def resolve(self, ref) -> str:
        """Absolute path of a record file given as a path or as a name under OUT_DIR."""
        path = ref if os.path.isfile(ref) else self.path(ref)
        if not os.path.isfile(path):
            raise DataError(f"record file {path} does not exist")
        return os.path.abspath(path)

    def read(self, ref) -> List[dict]:
        with open(self.resolve(ref)) as f:
            return [json.loads(line) for line in f if line.strip()]

    def write_manifest(
        self,
        command: str,
        params: Mapping,
        config: Mapping,
        config_hash: str,
        seed: int,
        extra: Optional[Dict] = None,
    ) -> str:
        os.makedirs(self.root, exist_ok=True)
        manifest = {
            "command": command,
            "params": _jsonable(dict(params)),
            "config": _jsonable(dict(config)),
            "config_hash": config_hash,
            "seed": seed,
            "artifacts": {
                rel: file_digest(self.path(rel)) for rel in sorted(self.written)
            },
            **(extra or {}),
        }
        path = self.path(MANIFEST)
        with open(path, "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)
            f.write("\n")
        count = len(self.written)
        logger.info(f"Wrote manifest for {command} with {count} artifacts to {path}")
        return path


def read_manifest(path) -> dict:
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST)
    if not os.path.isfile(path):
        raise DataError(f"manifest {path} does not exist")
    with open(path) as f:
        manifest = json.load(f)
    for key in ("command", "params", "config"):
        if key not in manifest:
            raise DataError(f"{path}: manifest has no {key!r} entry")
    return manifest
