"""Self-describing binary checkpoint container.

Layout: 8-byte magic, uint32 format version, uint32 metadata length, UTF-8 JSON
metadata (which also carries the array index: name, dtype, shape, in payload
order), the raw little-endian array payloads, and a trailing SHA-256 over every
preceding byte. Loading never needs the config that produced the file.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import time

import numpy as np
import torch

from .errors import ChecksumMismatch, IoFailure, VersionUnsupported
from .nets import DenoiserNet

MAGIC = b"TSRCKPT\x00"
VERSION = 1
_ALLOWED_DTYPES = {"<f4", "<f8", "<i4", "<i8"}


def _created_epoch() -> int:
    for var in ("TUNESR_EPOCH", "SOURCE_DATE_EPOCH"):
        if os.environ.get(var):
            return int(os.environ[var])
    return int(time.time())


def save_checkpoint(arrays: dict[str, torch.Tensor | np.ndarray], meta: dict, path) -> None:
    """Write arrays + metadata atomically (temp file then rename)."""
    index = []
    payloads = []
    for name in sorted(arrays):
        arr = arrays[name]
        if isinstance(arr, torch.Tensor):
            arr = arr.detach().cpu().numpy()
        arr = np.ascontiguousarray(arr)
        code = arr.dtype.newbyteorder("<").str
        if code not in _ALLOWED_DTYPES:
            arr = arr.astype("<f8")
            code = "<f8"
        arr = arr.astype(code, copy=False)
        index.append({"name": name, "dtype": code, "shape": list(arr.shape)})
        payloads.append(arr.tobytes())
    full_meta = dict(meta)
    full_meta.setdefault("created", _created_epoch())
    full_meta["arrays"] = index
    meta_blob = json.dumps(full_meta, sort_keys=True).encode("utf-8")
    body = MAGIC + struct.pack("<II", VERSION, len(meta_blob)) + meta_blob + b"".join(payloads)
    digest = hashlib.sha256(body).digest()
    tmp = os.fspath(path) + ".tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(body + digest)
        os.replace(tmp, os.fspath(path))
    except OSError as err:
        raise IoFailure(f"cannot write checkpoint {os.fspath(path)!r}: {err}") from err


def load_checkpoint(path) -> tuple[dict[str, torch.Tensor], dict]:
    """Read and verify a checkpoint; returns (arrays, metadata)."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as err:
        raise IoFailure(f"cannot read checkpoint {os.fspath(path)!r}: {err}") from err
    if len(blob) < len(MAGIC) + 8 + 32 or blob[: len(MAGIC)] != MAGIC:
        raise ChecksumMismatch(f"{os.fspath(path)!r} is not a checkpoint file")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumMismatch(f"checksum failure in {os.fspath(path)!r}")
    version, meta_len = struct.unpack_from("<II", body, len(MAGIC))
    if version != VERSION:
        raise VersionUnsupported(f"format version {version}, supported {VERSION}")
    meta_start = len(MAGIC) + 8
    meta = json.loads(body[meta_start : meta_start + meta_len].decode("utf-8"))
    arrays: dict[str, torch.Tensor] = {}
    offset = meta_start + meta_len
    for entry in meta["arrays"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * np.dtype(entry["dtype"]).itemsize
        arr = np.frombuffer(body, dtype=entry["dtype"], count=count, offset=offset).reshape(entry["shape"])
        arrays[entry["name"]] = torch.from_numpy(arr.copy())
        offset += nbytes
    return arrays, meta


# ---------------------------------------------------------------------------
# model-level helpers


def net_arrays(net: DenoiserNet, prefix: str) -> dict[str, torch.Tensor]:
    return {f"{prefix}.{name}": p.detach() for name, p in sorted(net.named_parameters())}


def net_meta(net: DenoiserNet) -> dict:
    return {
        "width": net.width,
        "depth": net.depth,
        "t_embed_dim": net.t_embed_dim,
        "in_channels": net.in_channels,
        "cond_dim": net.cond_dim,
    }


def build_net(meta: dict) -> DenoiserNet:
    return DenoiserNet(
        width=meta["width"],
        depth=meta["depth"],
        t_embed_dim=meta["t_embed_dim"],
        in_channels=meta["in_channels"],
        cond_dim=meta["cond_dim"],
    )


def save_model_checkpoint(
    path,
    stage: str,
    nets: dict[str, DenoiserNet],
    config_hash: str,
    step: int,
    seed: int,
    extra: dict | None = None,
) -> None:
    """Bundle one or more nets (e.g. restorer + flow) into a single checkpoint."""
    arrays: dict[str, torch.Tensor] = {}
    nets_meta = {}
    for role, net in nets.items():
        arrays.update(net_arrays(net, role))
        nets_meta[role] = net_meta(net)
    meta = {
        "config_hash": config_hash,
        "stage": stage,
        "step": step,
        "seed": seed,
        "nets": nets_meta,
        "extra": extra or {},
    }
    save_checkpoint(arrays, meta, path)


def load_model_checkpoint(path) -> tuple[dict[str, DenoiserNet], dict]:
    """Rebuild the nets stored by save_model_checkpoint."""
    arrays, meta = load_checkpoint(path)
    nets: dict[str, DenoiserNet] = {}
    for role, nmeta in meta["nets"].items():
        net = build_net(nmeta)
        state = {}
        for name, _ in net.named_parameters():
            state[name] = arrays[f"{role}.{name}"]
        net.load_state_dict(state)
        nets[role] = net
    return nets, meta
