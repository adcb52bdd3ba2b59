"""Bit-exact file formats: images, optical-flow files, checkpoints, configs.

Flow files use the common interchange layout: a little-endian float32
sanity tag (202021.25), int32 width, int32 height, then row-major
interleaved (u, v) float32 pairs.

Checkpoints are zip archives of ``.npy`` payloads plus a ``manifest.json``
(format version, model config + fingerprint, step, optimizer slot names).
Entries are stored uncompressed with frozen timestamps so saving the same
state twice produces byte-identical files.

Writers go through a temp file and an atomic rename.
"""

from __future__ import annotations

import io
import json
import os
import struct
import zipfile
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import CheckpointError, ConfigError, DataError

FLO_TAG = 202021.25
CHECKPOINT_VERSION = 1
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def _atomic_write(path, payload: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# images


def read_image(path) -> np.ndarray:
    """Load an 8-bit image as a [3,H,W] float array in [0,1].

    Grayscale inputs are promoted to three identical channels; anything
    other than 8-bit gray/RGB is rejected.
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode == "L":
                arr = np.asarray(img, dtype=np.uint8)
                arr = np.stack([arr] * 3, axis=0)
            elif mode == "RGB":
                arr = np.asarray(img, dtype=np.uint8).transpose(2, 0, 1)
            else:
                raise DataError(f"{path}: unsupported image mode {mode!r} (need L or RGB)")
    except DataError:
        raise
    except Exception as exc:
        raise DataError(f"{path}: unreadable image ({exc})") from exc
    return arr.astype(np.float32) / 255.0


def write_image(frame, path) -> None:
    """Write a [3,H,W] float frame in [0,1] as an 8-bit RGB file."""
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[0] != 3:
        raise DataError(f"expected a [3,H,W] frame, got shape {frame.shape}")
    data = np.clip(np.round(frame * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    buf = io.BytesIO()
    fmt = (Path(path).suffix[1:] or "png").upper()
    fmt = {"JPG": "JPEG"}.get(fmt, fmt)
    Image.fromarray(data, "RGB").save(buf, format=fmt)
    _atomic_write(path, buf.getvalue())


# ---------------------------------------------------------------------------
# flow files


def read_flo(path) -> np.ndarray:
    """Read a flow file into a [2,H,W] float32 array."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 12:
        raise DataError(f"{path}: truncated flow file header")
    (tag,) = struct.unpack("<f", raw[0:4])
    if tag != FLO_TAG:
        raise DataError(f"{path}: not a flow file (bad sanity tag {tag!r})")
    w, h = struct.unpack("<ii", raw[4:12])
    if w <= 0 or h <= 0 or w * h > 10**8:
        raise DataError(f"{path}: corrupt flow file dimensions {w}x{h}")
    expected = 12 + 8 * w * h
    if len(raw) != expected:
        raise DataError(f"{path}: corrupt flow file ({len(raw)} bytes, expected {expected})")
    data = np.frombuffer(raw, dtype="<f4", offset=12).reshape(h, w, 2)
    return np.ascontiguousarray(data.transpose(2, 0, 1))


def write_flo(flow, path) -> None:
    """Write a [2,H,W] flow field; read_flo round-trips bit-exactly."""
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[0] != 2:
        raise DataError(f"expected a [2,H,W] flow field, got shape {flow.shape}")
    h, w = flow.shape[1:]
    body = flow.transpose(1, 2, 0).astype("<f4").tobytes()
    _atomic_write(path, struct.pack("<fii", FLO_TAG, w, h) + body)


# ---------------------------------------------------------------------------
# checkpoints


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), version=(1, 0))
    return buf.getvalue()


def write_checkpoint(path, params: dict, manifest: dict, opt_state: dict | None = None) -> None:
    """Write named arrays plus a manifest as a deterministic zip archive."""
    manifest = dict(manifest)
    manifest["format_version"] = CHECKPOINT_VERSION
    entries: list[tuple[str, bytes]] = [
        (f"params/{name}.npy", _npy_bytes(arr)) for name, arr in params.items()
    ]
    for slot, arrays in (opt_state or {}).items():
        if slot == "scalars":
            continue
        entries += [(f"opt/{slot}/{name}.npy", _npy_bytes(arr)) for name, arr in arrays.items()]
    if opt_state and "scalars" in opt_state:
        manifest["opt_scalars"] = opt_state["scalars"]
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        payload = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
        for name, data in [("manifest.json", payload)] + sorted(entries):
            info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
            zf.writestr(info, data)
    _atomic_write(path, buf.getvalue())


def read_checkpoint(path):
    """Read back ``(params, manifest, opt_state)`` from a checkpoint archive."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"{path}: no such checkpoint")
    try:
        zf = zipfile.ZipFile(path)
    except zipfile.BadZipFile as exc:
        raise CheckpointError(f"{path}: not a checkpoint archive ({exc})") from exc
    with zf:
        names = set(zf.namelist())
        if "manifest.json" not in names:
            raise CheckpointError(f"{path}: checkpoint has no manifest")
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path}: format version {manifest.get('format_version')!r} "
                f"not supported (expected {CHECKPOINT_VERSION})"
            )
        params: dict = {}
        opt_state: dict = {}
        for name in sorted(names - {"manifest.json"}):
            arr = np.lib.format.read_array(io.BytesIO(zf.read(name)))
            if name.startswith("params/"):
                params[name[len("params/") : -4]] = arr
            elif name.startswith("opt/"):
                _, slot, rest = name.split("/", 2)
                opt_state.setdefault(slot, {})[rest[:-4]] = arr
    if "opt_scalars" in manifest:
        opt_state["scalars"] = manifest["opt_scalars"]
    return params, manifest, opt_state


# ---------------------------------------------------------------------------
# run configuration


def load_json_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc})") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config root must be an object")
    return data


def check_keys(section: dict, allowed, where: str) -> None:
    """Reject unknown keys (typos in ablation runs should fail loudly)."""
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]!r} in {where}")
