"""Flat float64 parameter storage with a named shape registry and checkpoint IO.

All trainable state (policy, critic, predictor) lives in one ParamVector so
optimizers, gradient accumulation, and norm clipping can treat the model as a
single flat vector while named views keep the per-tensor structure.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import ConfigError, DataError

CHECKPOINT_MAGIC = b"BSCK"
CHECKPOINT_VERSION = 1


class ParamVector:
    """Contiguous float64 storage addressed through registered tensor names.

    Register every tensor before taking views: registration reallocates the
    flat buffer, so views obtained earlier would go stale.
    """

    def __init__(self) -> None:
        self._order: list[str] = []
        self._slices: dict[str, tuple[int, int, tuple[int, ...]]] = {}
        self.data: np.ndarray = np.zeros(0, dtype=np.float64)

    def register(self, name: str, shape: int | tuple[int, ...]) -> None:
        if name in self._slices:
            raise ConfigError(f"tensor {name!r} already registered")
        if isinstance(shape, int):
            shape = (shape,)
        shape = tuple(int(s) for s in shape)
        if any(s < 1 for s in shape):
            raise ConfigError(f"tensor {name!r} has invalid shape {shape}")
        size = int(np.prod(shape, dtype=np.int64))
        start = self.data.size
        self._order.append(name)
        self._slices[name] = (start, start + size, shape)
        self.data = np.concatenate([self.data, np.zeros(size, dtype=np.float64)])

    @property
    def size(self) -> int:
        return int(self.data.size)

    def names(self) -> list[str]:
        return list(self._order)

    def has(self, name: str) -> bool:
        return name in self._slices

    def shape_of(self, name: str) -> tuple[int, ...]:
        return self._lookup(name)[2]

    def bounds(self, name: str) -> tuple[int, int]:
        start, stop, _ = self._lookup(name)
        return start, stop

    def get(self, name: str) -> np.ndarray:
        """Writable view into the flat buffer, reshaped to the registered shape."""
        start, stop, shape = self._lookup(name)
        return self.data[start:stop].reshape(shape)

    def set(self, name: str, value: np.ndarray | float) -> None:
        start, stop, shape = self._lookup(name)
        arr = np.asarray(value, dtype=np.float64)
        if arr.shape not in ((), shape):
            raise ConfigError(f"tensor {name!r} expects shape {shape}, got {arr.shape}")
        self.data[start:stop] = arr.reshape(-1) if arr.shape else arr

    def zeros_like(self) -> "ParamVector":
        out = ParamVector()
        out._order = list(self._order)
        out._slices = dict(self._slices)
        out.data = np.zeros_like(self.data)
        return out

    def copy(self) -> "ParamVector":
        out = self.zeros_like()
        out.data[:] = self.data
        return out

    def same_registry(self, other: "ParamVector") -> bool:
        return self._order == other._order and self._slices == other._slices

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def _lookup(self, name: str) -> tuple[int, int, tuple[int, ...]]:
        try:
            return self._slices[name]
        except KeyError:
            raise ConfigError(f"unknown tensor {name!r}") from None


def save_checkpoint(path, params: ParamVector, meta: dict | None = None, seed: int | None = None) -> None:
    """One-file format: magic, u64-LE header length, JSON header, then the
    little-endian float64 tensor payloads in registry order."""
    header = {
        "format_version": CHECKPOINT_VERSION,
        "seed": seed,
        "meta": meta or {},
        "registry": [[name, list(params.shape_of(name))] for name in params.names()],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in params.names():
            fh.write(np.ascontiguousarray(params.get(name), dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ParamVector, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"not a checkpoint file: bad magic {magic!r}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version {header.get('format_version')}")
        params = ParamVector()
        for name, shape in header["registry"]:
            params.register(name, tuple(shape))
        for name, shape in header["registry"]:
            n = int(np.prod(shape, dtype=np.int64))
            raw = fh.read(8 * n)
            if len(raw) != 8 * n:
                raise DataError(f"truncated checkpoint payload at tensor {name!r}")
            params.set(name, np.frombuffer(raw, dtype="<f8").reshape(shape))
    return params, header
