"""Single-file training checkpoint container.

Binary layout::

    magic    8 bytes   b"HDRMCKPT"
    version  u32 LE
    hdrlen   u64 LE    byte length of the JSON header
    header   JSON      configs, iteration, optimizer step, tensor table
    payload  raw       little-endian array bytes, concatenated in table order
    digest   32 bytes  SHA-256 over everything above it

The header's tensor table records name, dtype, shape, and payload offset
for every parameter and every Adam moment, so a reader can validate
structure before touching array data.  Loading rebuilds the network from
the stored config and then requires the file's tensor names to match the
rebuilt skeleton exactly -- mismatches are reported with the full lists
of missing and unexpected names.

Round trips are bitwise: save followed by load reproduces parameter
bytes, optimizer state, iteration counter, and both configs exactly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct

import numpy as np

from .imgio import atomic_write_bytes
from .model import NetConfig, NetworkParams, build_variant
from .train import AdamState, TrainConfig, TrainState

__all__ = ["CheckpointError", "FORMAT_VERSION", "save_checkpoint", "load_checkpoint"]

_MAGIC = b"HDRMCKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, corrupt, or structurally incompatible checkpoint."""


def _dtype_tag(dtype: np.dtype) -> str:
    tag = np.dtype(dtype).newbyteorder("<").str
    if tag not in ("<f4", "<f8"):
        raise CheckpointError(f"unsupported tensor dtype {dtype}")
    return tag


def _table_entry(name: str, arr: np.ndarray, offset: int) -> tuple[dict, bytes]:
    raw = np.ascontiguousarray(arr, dtype=np.dtype(arr.dtype).newbyteorder("<")).tobytes()
    entry = {
        "name": name,
        "dtype": _dtype_tag(arr.dtype),
        "shape": list(arr.shape),
        "offset": offset,
        "nbytes": len(raw),
    }
    return entry, raw


def save_checkpoint(path, state: TrainState, train_cfg: TrainConfig) -> None:
    """Serialize parameters, Adam moments, and configs into one file."""
    named = state.params.named_tensors()
    chunks: list[bytes] = []
    tensor_table: list[dict] = []
    moment_table: list[dict] = []
    offset = 0
    for name, tensor in named.items():
        entry, raw = _table_entry(name, tensor.data, offset)
        tensor_table.append(entry)
        chunks.append(raw)
        offset += len(raw)
    for name in named:
        for kind, table in (("m", state.adam.m), ("v", state.adam.v)):
            if name not in table:
                raise CheckpointError(f"optimizer state is missing moment '{kind}' for {name!r}")
            entry, raw = _table_entry(name, table[name], offset)
            entry["kind"] = kind
            moment_table.append(entry)
            chunks.append(raw)
            offset += len(raw)

    header = {
        "net_config": dataclasses.asdict(state.params.config),
        "train_config": dataclasses.asdict(train_cfg),
        "iteration": state.iteration,
        "adam_step": state.adam.step,
        "tensors": tensor_table,
        "moments": moment_table,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("ascii")
    body = (
        _MAGIC
        + struct.pack("<I", FORMAT_VERSION)
        + struct.pack("<Q", len(header_bytes))
        + header_bytes
        + b"".join(chunks)
    )
    atomic_write_bytes(path, body + hashlib.sha256(body).digest())


def _read_array(payload: bytes, entry: dict, path) -> np.ndarray:
    start, nbytes = entry["offset"], entry["nbytes"]
    raw = payload[start : start + nbytes]
    if len(raw) != nbytes:
        raise CheckpointError(f"{path}: tensor {entry['name']!r} payload out of bounds")
    arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
    return arr.astype(arr.dtype.newbyteorder("="), copy=True)


def load_checkpoint(path) -> tuple[TrainState, TrainConfig]:
    """Read a checkpoint and rebuild the exact training state it captured."""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint ({exc})") from exc
    if len(blob) < len(_MAGIC) + 4 + 8 + 32:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    if blob[: len(_MAGIC)] != _MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch, file is corrupt")
    pos = len(_MAGIC)
    (version,) = struct.unpack_from("<I", body, pos)
    pos += 4
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version}, expected {FORMAT_VERSION}"
        )
    (hdrlen,) = struct.unpack_from("<Q", body, pos)
    pos += 8
    if pos + hdrlen > len(body):
        raise CheckpointError(f"{path}: header length {hdrlen} exceeds file size")
    try:
        header = json.loads(body[pos : pos + hdrlen].decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint header ({exc})") from exc
    payload = body[pos + hdrlen :]

    try:
        net_cfg = NetConfig(**header["net_config"])
        train_cfg = TrainConfig(**header["train_config"])
        iteration = int(header["iteration"])
        adam_step = int(header["adam_step"])
        tensor_table = header["tensors"]
        moment_table = header["moments"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: invalid checkpoint header ({exc})") from exc

    params = build_variant(net_cfg, seed=train_cfg.seed)
    named = params.named_tensors()
    stored = [e["name"] for e in tensor_table]
    _check_names(path, expected=list(named), stored=stored)

    for entry in tensor_table:
        tensor = named[entry["name"]]
        arr = _read_array(payload, entry, path)
        if tuple(arr.shape) != tensor.shape:
            raise CheckpointError(
                f"{path}: tensor {entry['name']!r} has shape {tuple(arr.shape)}, "
                f"the configured network needs {tensor.shape}"
            )
        tensor.data = arr
        tensor.grad = None

    moments: dict[str, dict[str, np.ndarray]] = {}
    for entry in moment_table:
        arr = _read_array(payload, entry, path)
        moments.setdefault(entry["name"], {})[entry["kind"]] = arr
    _check_names(path, expected=list(named), stored=list(moments), what="optimizer moment")
    m_table: dict[str, np.ndarray] = {}
    v_table: dict[str, np.ndarray] = {}
    for name, tensor in named.items():
        pair = moments[name]
        if set(pair) != {"m", "v"}:
            raise CheckpointError(f"{path}: moment table for {name!r} must hold m and v")
        if pair["m"].shape != tensor.data.shape or pair["v"].shape != tensor.data.shape:
            raise CheckpointError(f"{path}: moment shape mismatch for {name!r}")
        m_table[name] = pair["m"]
        v_table[name] = pair["v"]

    adam = AdamState(step=adam_step, m=m_table, v=v_table)
    state = TrainState(params=params, adam=adam, iteration=iteration)
    return state, train_cfg


def _check_names(path, expected: list[str], stored: list[str], what: str = "tensor") -> None:
    if stored == expected:
        return
    missing = [n for n in expected if n not in set(stored)]
    extra = [n for n in stored if n not in set(expected)]
    if missing or extra:
        raise CheckpointError(
            f"{path}: {what} table does not match the configured network; "
            f"missing {missing!r}, unexpected {extra!r}"
        )
    raise CheckpointError(
        f"{path}: {what} table order differs from the configured network"
    )


def infer_params(path) -> tuple[NetworkParams, TrainConfig, int]:
    """Convenience loader for inference: parameters, config, iteration."""
    state, train_cfg = load_checkpoint(path)
    return state.params, train_cfg, state.iteration
