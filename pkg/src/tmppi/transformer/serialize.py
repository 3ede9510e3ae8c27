"""Self-describing binary weight files.

Layout (all little-endian):
  magic ``TMPM``, u32 version,
  config block of 10 i64: state_dim, control_dim, context_dim, d_model,
      num_layers, num_heads, k_past, horizon, d_ff, tensor count,
  f64 dropout,
  then per tensor: u32 name length, utf-8 name, u32 ndim, i64 dims, f64 data.

Extra named tensors (for example normalisation tables) ride along untouched;
everything whose name starts with a known parameter prefix is loaded back as
a trainable parameter, the rest is returned separately.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .model import TransformerConfig

MAGIC = b"TMPM"
VERSION = 1


class ModelFormatError(ValueError):
    """Corrupt, truncated or incompatible weight file."""


def _write_tensor(buf: io.BufferedIOBase, name: str, value: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    buf.write(struct.pack("<I", len(encoded)))
    buf.write(encoded)
    buf.write(struct.pack("<I", value.ndim))
    buf.write(struct.pack(f"<{value.ndim}q", *value.shape))
    buf.write(np.ascontiguousarray(value, dtype="<f8").tobytes())


def _read_exact(buf: io.BufferedIOBase, size: int) -> bytes:
    data = buf.read(size)
    if len(data) != size:
        raise ModelFormatError("unexpected end of file")
    return data


def _read_tensor(buf: io.BufferedIOBase) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<I", _read_exact(buf, 4))
    name = _read_exact(buf, name_len).decode("utf-8")
    (ndim,) = struct.unpack("<I", _read_exact(buf, 4))
    shape = struct.unpack(f"<{ndim}q", _read_exact(buf, 8 * ndim))
    count = int(np.prod(shape)) if ndim else 1
    data = np.frombuffer(_read_exact(buf, 8 * count), dtype="<f8").reshape(shape)
    return name, data.astype(np.float64)


def save_model(
    path: str | Path,
    cfg: TransformerConfig,
    params: dict[str, Tensor],
    extras: dict[str, np.ndarray] | None = None,
) -> None:
    extras = extras or {}
    entries = [(name, params[name].data) for name in sorted(params)]
    entries += [(name, np.asarray(extras[name], dtype=np.float64)) for name in sorted(extras)]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(
            struct.pack(
                "<10q",
                cfg.state_dim, cfg.control_dim, cfg.context_dim, cfg.d_model,
                cfg.num_layers, cfg.num_heads, cfg.k_past, cfg.horizon, cfg.d_ff,
                len(entries),
            )
        )
        fh.write(struct.pack("<d", cfg.dropout))
        for name, value in entries:
            _write_tensor(fh, name, value)


_PARAM_PREFIXES = ("enc.", "dec.", "head.")


def load_model(path: str | Path) -> tuple[TransformerConfig, dict[str, Tensor], dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    buf = io.BytesIO(raw)
    if _read_exact(buf, 4) != MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic)")
    (version,) = struct.unpack("<I", _read_exact(buf, 4))
    if version != VERSION:
        raise ModelFormatError(f"{path}: unsupported version {version}")
    fields = struct.unpack("<10q", _read_exact(buf, 80))
    (dropout,) = struct.unpack("<d", _read_exact(buf, 8))
    cfg = TransformerConfig(
        state_dim=fields[0], control_dim=fields[1], context_dim=fields[2],
        d_model=fields[3], num_layers=fields[4], num_heads=fields[5],
        k_past=fields[6], horizon=fields[7], d_ff=fields[8], dropout=dropout,
    )
    params: dict[str, Tensor] = {}
    extras: dict[str, np.ndarray] = {}
    for _ in range(fields[9]):
        name, value = _read_tensor(buf)
        if name.startswith(_PARAM_PREFIXES):
            params[name] = Tensor(value, requires_grad=True)
        else:
            extras[name] = value
    if buf.read(1):
        raise ModelFormatError(f"{path}: trailing bytes after the last tensor")
    return cfg, params, extras


def model_summary(path: str | Path) -> str:
    """Human-readable dump: config line plus name/shape/norm per tensor."""
    cfg, params, extras = load_model(path)
    lines = [
        f"model {path}",
        (
            f"  d_model={cfg.d_model} layers={cfg.num_layers} heads={cfg.num_heads}"
            f" d_ff={cfg.d_ff} dropout={cfg.dropout:g}"
        ),
        (
            f"  state_dim={cfg.state_dim} control_dim={cfg.control_dim}"
            f" context_dim={cfg.context_dim} k_past={cfg.k_past} horizon={cfg.horizon}"
        ),
        f"  parameters: {len(params)} tensors, extras: {len(extras)}",
    ]
    total = 0
    for name in sorted(params):
        value = params[name].data
        total += value.size
        lines.append(f"    {name:28s} {str(value.shape):16s} l2={np.linalg.norm(value):.4f}")
    for name in sorted(extras):
        value = extras[name]
        lines.append(f"    {name:28s} {str(value.shape):16s} (extra)")
    lines.append(f"  total parameter count: {total}")
    return "\n".join(lines)
