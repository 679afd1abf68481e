"""
Checkpoint container:

    b"HRSCKPT\0" | u16 version | u32 meta length | meta (UTF-8 JSON)
    u32 tensor count, then per tensor:
    u16 name length | name | u8 ndim | u32 extents | little-endian float64 data
"""
import json
import logging
import os
import struct
from dataclasses import asdict
from typing import Optional, Tuple

import numpy as np

from hrs.errors import DataError
from hrs.loss import SalParams
from hrs.model import HrsConfig, ModelParams
from hrs.tensor import Tensor

logger = logging.getLogger(__name__)

MAGIC = b"HRSCKPT\0"
VERSION = 1


def write_checkpoint(
    path, params: ModelParams, model_cfg: HrsConfig, sal: Optional[SalParams] = None
) -> None:
    meta = {
        "kind": params.kind,
        "model": model_cfg.to_dict(),
        "sal": None if sal is None else asdict(sal),
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HI", VERSION, len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(params.tensors)))
        for name, tensor in params.items():
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", tensor.ndim))
            f.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            f.write(tensor.data.astype("<f8").tobytes())


def _read(f, size: int, path) -> bytes:
    chunk = f.read(size)
    if len(chunk) != size:
        raise DataError(f"{path}: truncated checkpoint")
    return chunk


def read_checkpoint(path) -> Tuple[ModelParams, HrsConfig, Optional[SalParams]]:
    with open(path, "rb") as f:
        if _read(f, len(MAGIC), path) != MAGIC:
            raise DataError(f"{path} is not an HRS checkpoint")
        version, meta_len = struct.unpack("<HI", _read(f, 6, path))
        if version != VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        meta = json.loads(_read(f, meta_len, path).decode("utf-8"))
        (count,) = struct.unpack("<I", _read(f, 4, path))
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read(f, 2, path))
            name = _read(f, name_len, path).decode("utf-8")
            (ndim,) = struct.unpack("<B", _read(f, 1, path))
            shape = struct.unpack(f"<{ndim}I", _read(f, 4 * ndim, path))
            raw = _read(f, 8 * int(np.prod(shape)), path)
            data = np.frombuffer(raw, dtype="<f8").reshape(shape)
            tensors[name] = Tensor.parameter(data)
        if f.read(1):
            raise DataError(f"{path}: trailing bytes after the last tensor")

    model_cfg = HrsConfig.from_dict(meta["model"])
    sal = None if meta.get("sal") is None else SalParams(**meta["sal"])
    return ModelParams(meta["kind"], tensors), model_cfg, sal


class CheckpointStore:
    def __init__(self, config):
        self.root = config["OUT_DIR"]

    def path(self, name: str) -> str:
        return os.path.join(self.root, f"{name}.ckpt")

    def save(
        self,
        name: str,
        params: ModelParams,
        model_cfg: HrsConfig,
        sal: Optional[SalParams] = None,
    ) -> str:
        os.makedirs(self.root, exist_ok=True)
        path = self.path(name)
        write_checkpoint(path, params, model_cfg, sal)
        logger.info(f"Saved {params.kind} checkpoint to {path}")
        return path

    def resolve(self, ref) -> str:
        path = ref if os.path.isfile(ref) else self.path(ref)
        if not os.path.isfile(path):
            raise DataError(f"checkpoint {path} does not exist")
        return os.path.abspath(path)

    def load(self, ref) -> Tuple[ModelParams, HrsConfig, Optional[SalParams]]:
        return read_checkpoint(self.resolve(ref))
