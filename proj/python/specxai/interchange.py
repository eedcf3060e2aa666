"""Writes models in the interchange format from plain numpy arrays.

Only numpy and the standard library are used, so any ecosystem that can
produce arrays can hand models to the toolkit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK
    return h


class _Blob:
    def __init__(self) -> None:
        self.chunks: list[bytes] = []
        self.offset = 0

    def add(self, array) -> dict:
        data = np.ascontiguousarray(array, dtype="<f4").tobytes()
        ref = {"checksum": f"{fnv1a64(data):016x}", "count": len(data) // 4, "offset": self.offset}
        self.chunks.append(data)
        self.offset += len(data) // 4
        return ref

    def optional(self, array):
        return None if array is None else self.add(array)


def _pair(v) -> list[int]:
    return [int(v), int(v)] if np.isscalar(v) else [int(v[0]), int(v[1])]


def _layer(spec: dict, blob: _Blob) -> dict:
    kind = spec["kind"]
    if kind == "dense":
        w = np.asarray(spec["weight"])
        weight = blob.add(w)
        return {
            "bias": blob.optional(spec.get("bias")),
            "in": int(w.shape[1]),
            "kind": kind,
            "out": int(w.shape[0]),
            "weight": weight,
        }
    if kind == "conv2d":
        k = np.asarray(spec["kernel"])
        if k.ndim != 4:
            raise ValueError("conv2d kernel must be [kh, kw, in_channels, out_channels]")
        kernel = blob.add(k)
        return {
            "bias": blob.optional(spec.get("bias")),
            "dilation": _pair(spec.get("dilation", 1)),
            "kernel": kernel,
            "kernel_shape": [int(d) for d in k.shape],
            "kind": kind,
            "padding": _pair(spec.get("padding", 0)),
            "stride": _pair(spec.get("stride", 1)),
        }
    if kind in ("avgpool", "maxpool"):
        window = _pair(spec["window"])
        return {"kind": kind, "stride": _pair(spec.get("stride", window)), "window": window}
    if kind in ("relu", "sigmoid", "tanh", "flatten"):
        return {"kind": kind}
    raise ValueError(f"unsupported layer kind '{kind}'")


def write_model(path, name: str, input_shape, layers: list[dict]) -> Path:
    """Writes `path` and its `<stem>.weights.bin` sibling; returns the manifest path.

    Dense weights are [out, in]. Convolution kernels are [kh, kw, in, out] and
    act on [height, width, channels] tensors.
    """
    path = Path(path)
    blob = _Blob()
    entries = [_layer(spec, blob) for spec in layers]
    weights = path.with_name(path.stem + ".weights.bin")
    manifest = {
        "dtype": "float32",
        "format_version": FORMAT_VERSION,
        "input_shape": [int(d) for d in input_shape],
        "layers": entries,
        "name": name,
        "weights_file": weights.name,
    }
    weights.write_bytes(b"".join(blob.chunks))
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
