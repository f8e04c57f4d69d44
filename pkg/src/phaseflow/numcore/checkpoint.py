"""Self-describing binary container for named float64 tensors.

Layout: magic ``PFCK``, u32 format version, u64 header length, UTF-8 JSON
header, then the raw little-endian float64 payloads concatenated in header
order. The header carries tensor names/shapes, per-bundle activation tags,
and an arbitrary JSON ``meta`` block. Serialization is canonical (sorted
keys, compact separators) so identical inputs produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import IoError
from .mlp import MlpParams

MAGIC = b"PFCK"
FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    entries = [{"name": name, "shape": list(arr.shape)} for name, arr in tensors.items()]
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "tensors": entries, "meta": meta},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<IQ", FORMAT_VERSION, len(header)))
            fh.write(header)
            for arr in tensors.values():
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    if blob[:4] != MAGIC:
        raise IoError(f"{path} is not a phaseflow checkpoint (bad magic)")
    version, header_len = struct.unpack("<IQ", blob[4:16])
    if version != FORMAT_VERSION:
        raise IoError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(blob[16 : 16 + header_len].decode("utf-8"))
    tensors: dict[str, np.ndarray] = {}
    offset = 16 + header_len
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        raw = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        tensors[entry["name"]] = raw.reshape(shape).astype(np.float64)
        offset += count * 8
    return tensors, header["meta"]


def mlp_to_tensors(prefix: str, params: MlpParams) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        out[f"{prefix}.w{i}"] = w
        out[f"{prefix}.b{i}"] = b
    return out


def mlp_from_tensors(prefix: str, tensors: dict[str, np.ndarray]) -> MlpParams:
    weights, biases, i = [], [], 0
    while f"{prefix}.w{i}" in tensors:
        weights.append(tensors[f"{prefix}.w{i}"].copy())
        biases.append(tensors[f"{prefix}.b{i}"].copy())
        i += 1
    if not weights:
        raise IoError(f"checkpoint holds no tensors under prefix '{prefix}'")
    return MlpParams(weights, biases)


def mlp_activation_tag(params: MlpParams) -> dict:
    """Architecture descriptor recorded next to each parameter bundle."""
    return {"layer_sizes": params.layer_sizes, "hidden": "tanh", "output": "linear"}
