"""Versioned checkpoint container.

Layout: magic "STKL", little-endian u32 format version, u32 header length,
then a UTF-8 key=value header (including an ordered array manifest), then
every array as little-endian float64 in manifest order. Loading restores
parameters bitwise.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .netcore import AdamState, NetConfig, NetParams, init_params
from .rng import Stream

MAGIC = b"STKL"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _array_manifest(params: NetParams, adam: AdamState) -> list[tuple[str, np.ndarray]]:
    out = [(f"params/{name}", arr) for name, arr in params.tree()]
    out += [(f"adam_m/{name}", arr) for name, arr in adam.first_moment.tree()]
    out += [(f"adam_v/{name}", arr) for name, arr in adam.second_moment.tree()]
    return out


def save_checkpoint(path: str | Path, params: NetParams, adam: AdamState,
                    net_cfg: NetConfig, stage_index: int, meta: dict | None = None) -> None:
    arrays = _array_manifest(params, adam)
    header_lines = [
        f"format_version={FORMAT_VERSION}",
        f"stage_index={stage_index}",
        f"adam_step_count={adam.step_count}",
        f"obs_dim={net_cfg.obs_dim}",
        f"action_dim={net_cfg.action_dim}",
        f"action_kind={net_cfg.action_kind}",
        f"hidden={','.join(str(h) for h in net_cfg.hidden)}",
        f"meta={json.dumps(meta or {}, sort_keys=True)}",
    ]
    for name, arr in arrays:
        shape = "x".join(str(s) for s in arr.shape) if arr.ndim else "0"
        header_lines.append(f"array={name}:{shape}")
    header = ("\n".join(header_lines) + "\n").encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_header(path: str | Path) -> dict:
    """Parse magic, version and the textual header without touching arrays."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}")
        raw = fh.read(8)
        if len(raw) < 8:
            raise CheckpointError("truncated checkpoint: missing version/header length")
        version, header_len = struct.unpack("<II", raw)
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"format version mismatch: file has {version}, this build reads {FORMAT_VERSION}")
        header = fh.read(header_len)
        if len(header) < header_len:
            raise CheckpointError("truncated checkpoint: incomplete header")
    fields: dict = {"arrays": []}
    for line in header.decode("utf-8").splitlines():
        if not line:
            continue
        key, _, value = line.partition("=")
        if key == "array":
            name, _, shape = value.partition(":")
            dims = tuple(int(s) for s in shape.split("x")) if shape != "0" else ()
            fields["arrays"].append((name, dims))
        else:
            fields[key] = value
    return fields


def load_checkpoint(path: str | Path) -> tuple[NetParams, AdamState, NetConfig, int, dict]:
    fields = read_header(path)
    hidden = tuple(int(h) for h in fields["hidden"].split(",")) if fields["hidden"] else ()
    net_cfg = NetConfig(
        obs_dim=int(fields["obs_dim"]),
        action_dim=int(fields["action_dim"]),
        action_kind=fields["action_kind"],
        hidden=hidden,
    )
    # template structures give the arrays their homes
    params = init_params(net_cfg, Stream(0, 0))
    adam = AdamState(first_moment=params.zeros_like(), second_moment=params.zeros_like(),
                     step_count=int(fields["adam_step_count"]))
    manifest = _array_manifest(params, adam)
    declared = dict(fields["arrays"])
    header_len = None
    with open(path, "rb") as fh:
        fh.seek(4)
        _, header_len = struct.unpack("<II", fh.read(8))
        fh.seek(12 + header_len)
        for name, arr in manifest:
            if name not in declared:
                raise CheckpointError(f"checkpoint missing array {name}")
            if declared[name] != arr.shape:
                raise CheckpointError(
                    f"array {name} shape mismatch: file has {declared[name]}, expected {arr.shape}")
            nbytes = arr.size * 8
            raw = fh.read(nbytes)
            if len(raw) < nbytes:
                raise CheckpointError(f"truncated checkpoint: array {name} incomplete")
            arr[...] = np.frombuffer(raw, dtype="<f8").reshape(arr.shape)
    meta = json.loads(fields.get("meta", "{}"))
    return params, adam, net_cfg, int(fields["stage_index"]), meta
