"""Model checkpoints: a magic line, a JSON header, and raw float32 data.

Layout::

    blundershield-checkpoint v1\n
    <uint32 little-endian header length>
    <header JSON, utf-8, sorted keys>
    <tensor payload, little-endian float32, header order>

The header records the architecture descriptor and every tensor's name and
shape, so a load can fail loudly on the exact mismatch kind: wrong format
version, wrong architecture, wrong tensor shapes, or a short/overlong file.
Round-trips are bitwise: models hold float32 and the payload stores ``<f4``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import (
    CheckpointArchitectureError,
    CheckpointError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from .models import BlunderModel, PolicyModel

MAGIC_PREFIX = b"blundershield-checkpoint "
MAGIC = b"blundershield-checkpoint v1\n"
DTYPE = np.dtype("<f4")

_MODEL_CLASSES = {PolicyModel.KIND: PolicyModel, BlunderModel.KIND: BlunderModel}


def save_model(model, path) -> None:
    """Write a policy or blunder model; overwrites an existing file."""
    named = model.params_named()
    header = {
        "architecture": model.descriptor(),
        "dtype": "<f4",
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in named],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in named:
            fh.write(np.ascontiguousarray(arr, dtype=DTYPE).tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointTruncatedError(
            f"file ends inside {what}: wanted {n} bytes, got {len(data)}"
        )
    return data


def load_model(path, expected_kind: str | None = None):
    """Read a checkpoint back into a fresh model of the recorded kind.

    ``expected_kind`` ("policy" or "blunder") turns a kind mismatch into an
    architecture error instead of silently returning the other model class.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if not magic.startswith(MAGIC_PREFIX):
            raise CheckpointError(f"{path.name}: not a checkpoint file")
        if magic != MAGIC:
            line = magic + fh.readline()
            tag = line[len(MAGIC_PREFIX):].split(b"\n")[0].decode("utf-8", "replace")
            raise CheckpointVersionError(
                f"{path.name}: unsupported checkpoint version {tag!r}"
            )
        (header_len,) = struct.unpack("<I", _read_exact(fh, 4, "header length"))
        blob = _read_exact(fh, header_len, "header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path.name}: unreadable header: {exc}") from exc
        if header.get("dtype") != "<f4":
            raise CheckpointError(
                f"{path.name}: unsupported payload dtype {header.get('dtype')!r}"
            )
        arch = header.get("architecture")
        if not isinstance(arch, dict) or "kind" not in arch:
            raise CheckpointError(f"{path.name}: header missing architecture")
        kind = arch["kind"]
        if expected_kind is not None and kind != expected_kind:
            raise CheckpointArchitectureError(
                f"{path.name}: holds a {kind} model, expected {expected_kind}"
            )
        cls = _MODEL_CLASSES.get(kind)
        if cls is None:
            raise CheckpointArchitectureError(
                f"{path.name}: unknown model kind {kind!r}"
            )
        model = cls(seed=0)
        if arch != model.descriptor():
            raise CheckpointArchitectureError(
                f"{path.name}: architecture does not match the current {kind} model"
            )
        named = model.params_named()
        tensors = header.get("tensors")
        if not isinstance(tensors, list) or len(tensors) != len(named):
            got = len(tensors) if isinstance(tensors, list) else "none"
            raise CheckpointShapeError(
                f"{path.name}: expected {len(named)} tensors, header lists {got}"
            )
        for (name, arr), entry in zip(named, tensors):
            if entry.get("name") != name or tuple(entry.get("shape", ())) != arr.shape:
                raise CheckpointShapeError(
                    f"{path.name}: tensor {entry.get('name')!r} "
                    f"shape {entry.get('shape')} does not match "
                    f"{name} {list(arr.shape)}"
                )
            raw = _read_exact(fh, arr.size * DTYPE.itemsize, f"tensor {name}")
            arr[...] = np.frombuffer(raw, dtype=DTYPE).reshape(arr.shape)
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError(f"{path.name}: trailing bytes after payload")
    return model


def load_policy(path) -> PolicyModel:
    return load_model(path, expected_kind=PolicyModel.KIND)


def load_blunder(path) -> BlunderModel:
    return load_model(path, expected_kind=BlunderModel.KIND)
