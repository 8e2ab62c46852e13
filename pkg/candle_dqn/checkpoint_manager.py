"""
Binary checkpoint format.

    magic      8 bytes  b"CDQNCKPT"
    version    uint32
    meta_len   uint32, followed by meta_len bytes of UTF-8 JSON (sorted keys)
    count      uint32
    count x entry:
        name_len uint16, name (UTF-8)
        ndim     uint8, ndim x uint64 dimension sizes
        values   prod(dims) little-endian float64

All integers are little-endian. Entries keep insertion order, so equal
inputs produce byte-identical files.
"""
import json
import logging
import os
import struct
import tempfile
from typing import Dict, Mapping, Tuple

import numpy as np

from .exceptions import CheckpointFormatError

logger = logging.getLogger(__name__)

MAGIC = b"CDQNCKPT"
VERSION = 1


class CheckpointManager:
    """Reads and writes named float64 arrays plus a JSON metadata block."""

    @staticmethod
    def encode(arrays: Mapping[str, np.ndarray], metadata: dict) -> bytes:
        meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
        chunks = [MAGIC, struct.pack("<II", VERSION, len(meta)), meta, struct.pack("<I", len(arrays))]
        for name, array in arrays.items():
            array = np.asarray(array, dtype=np.float64)
            encoded_name = name.encode("utf-8")
            chunks.append(struct.pack("<H", len(encoded_name)))
            chunks.append(encoded_name)
            chunks.append(struct.pack("<B", array.ndim))
            chunks.append(struct.pack(f"<{array.ndim}Q", *array.shape))
            chunks.append(array.astype("<f8").tobytes())
        return b"".join(chunks)

    @staticmethod
    def decode(payload: bytes) -> Tuple[Dict[str, np.ndarray], dict]:
        view = memoryview(payload)
        offset = 0

        def read(fmt):
            nonlocal offset
            size = struct.calcsize(fmt)
            if offset + size > len(view):
                raise CheckpointFormatError("Checkpoint is truncated.")
            values = struct.unpack_from(fmt, view, offset)
            offset += size
            return values

        if bytes(view[:len(MAGIC)]) != MAGIC:
            raise CheckpointFormatError("Not a candle_dqn checkpoint (bad magic bytes).")
        offset = len(MAGIC)
        version, meta_len = read("<II")
        if version != VERSION:
            raise CheckpointFormatError(f"Unsupported checkpoint version {version}; expected {VERSION}.")
        metadata = json.loads(bytes(view[offset:offset + meta_len]).decode("utf-8"))
        offset += meta_len
        (count,) = read("<I")

        arrays = {}
        for _ in range(count):
            (name_len,) = read("<H")
            name = bytes(view[offset:offset + name_len]).decode("utf-8")
            offset += name_len
            (ndim,) = read("<B")
            shape = read(f"<{ndim}Q") if ndim else ()
            n_values = int(np.prod(shape)) if shape else 1
            n_bytes = 8 * n_values
            if offset + n_bytes > len(view):
                raise CheckpointFormatError(f"Checkpoint entry '{name}' is truncated.")
            values = np.frombuffer(view[offset:offset + n_bytes], dtype="<f8").astype(np.float64)
            offset += n_bytes
            arrays[name] = values.reshape(shape)
        if offset != len(view):
            raise CheckpointFormatError(f"{len(view) - offset} trailing bytes after the last entry.")
        return arrays, metadata

    def save(self, path: str, arrays: Mapping[str, np.ndarray], metadata: dict) -> str:
        """Write atomically: a failed save never leaves a partial file at ``path``."""
        payload = self.encode(arrays, metadata)
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        fd, temp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(payload)
            os.replace(temp_path, path)
        finally:
            if os.path.exists(temp_path):
                os.remove(temp_path)
        logger.info("Checkpoint written to %s (%d arrays)", path, len(arrays))
        return path

    def load(self, path: str) -> Tuple[Dict[str, np.ndarray], dict]:
        with open(path, "rb") as handle:
            payload = handle.read()
        arrays, metadata = self.decode(payload)
        logger.info("Checkpoint loaded from %s (%d arrays)", path, len(arrays))
        return arrays, metadata
