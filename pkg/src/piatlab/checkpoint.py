"""Binary model checkpoints.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic b"PIATCKPT"
    8       4     format version (uint32, currently 1)
    12      4     header length H in bytes (uint32)
    16      H     header: UTF-8 JSON, sorted keys, no whitespace
    16+H    8*P   parameters, float64 little-endian, flat layout order
    end-32  32    SHA-256 of every preceding byte

The header carries the architecture (``arch``), the parameter layout as
``[name, start, stop, shape]`` rows, the parameter count ``n_params`` and
free-form ``meta``. Writing the same model and meta twice gives identical
bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, LayoutError
from .models import MLP

MAGIC = b"PIATCKPT"
VERSION = 1

__all__ = ["MAGIC", "VERSION", "save_checkpoint", "load_checkpoint", "checkpoint_bytes"]


def checkpoint_bytes(model, meta=None):
    header = {
        "arch": model.arch(),
        "layout": [[s.name, s.start, s.stop, list(s.shape)] for s in model.layout],
        "n_params": int(model.n_params),
        "meta": meta or {},
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = (MAGIC + struct.pack("<II", VERSION, len(hbytes)) + hbytes
            + model.params_view().astype("<f8").tobytes())
    return body + hashlib.sha256(body).digest()


def save_checkpoint(path, model, meta=None):
    path = Path(path)
    path.write_bytes(checkpoint_bytes(model, meta))
    return path


def load_checkpoint(path):
    """Return ``(model, meta)`` from a checkpoint file."""
    raw = Path(path).read_bytes()
    if len(raw) < 16 + 32 or raw[:8] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise FormatError(f"{path}: checksum mismatch (truncated or corrupted)")
    version, hlen = struct.unpack("<II", body[8:16])
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(body[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header: {exc}") from exc
    arch = header.get("arch", {})
    if arch.get("kind") != "mlp":
        raise FormatError(f"{path}: unknown architecture {arch.get('kind')!r}")
    model = MLP(arch["input_dim"], arch["hidden_widths"], arch["n_classes"])
    stored = [(n, a, b, tuple(s)) for n, a, b, s in header["layout"]]
    if stored != [(s.name, s.start, s.stop, tuple(s.shape)) for s in model.layout]:
        raise LayoutError(f"{path}: stored layout does not match the architecture")
    payload = body[16 + hlen:]
    if len(payload) != 8 * header["n_params"] or header["n_params"] != model.n_params:
        raise FormatError(f"{path}: parameter payload has the wrong size")
    model.set_params(np.frombuffer(payload, dtype="<f8").astype(np.float64))
    return model, header.get("meta", {})
