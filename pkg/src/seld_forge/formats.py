"""Binary interchange formats.

All multi-byte fields are little-endian, all payloads float32 unless noted.

SLDF (features):  magic 'SLDF', u32 version, u32 layout code, u32 channels,
    u32 frames, u32 bins, then float32 data in channel-major (C) order.
    Layout codes: 0x01 LOGMEL_IV, 0x02 SALSA, 0x11 STACKED/mel bins,
    0x12 STACKED/linear bins.

SLDM (checkpoint): magic 'SLDM', u32 version, u32 config length, UTF-8 JSON
    config blob, u32 tensor count, then per tensor: u16 name length, UTF-8
    name, u8 ndim, u32 dims..., float64 data (C order).

SLDP (predictions): magic 'SLDP', u32 version, u32 N models, u32 M tracks,
    u32 K classes, u32 frames, then per model: float32 sed (frames, M, K)
    followed by float32 doa (frames, M, 3), both C order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .features import BinSemantics, FeatureTensor, LayoutTag

FORMAT_VERSION = 1

_LAYOUT_CODES = {
    (LayoutTag.LOGMEL_IV, BinSemantics.MEL): 0x01,
    (LayoutTag.SALSA, BinSemantics.LINEAR): 0x02,
    (LayoutTag.STACKED, BinSemantics.MEL): 0x11,
    (LayoutTag.STACKED, BinSemantics.LINEAR): 0x12,
}
_CODE_LAYOUTS = {v: k for k, v in _LAYOUT_CODES.items()}


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError(f"truncated file while reading {what}")
    return buf


def _check_magic(fh, magic: bytes, path):
    got = _read_exact(fh, 4, "magic")
    if got != magic:
        raise DataError(f"{path}: bad magic {got!r}, expected {magic!r}")


# ---------------------------------------------------------------------------
# SLDF features
# ---------------------------------------------------------------------------


def write_feature(path: Path, feat: FeatureTensor):
    key = (feat.layout, feat.bin_semantics)
    if key not in _LAYOUT_CODES:
        raise DataError(f"unsupported layout/bin combination {key}")
    c, t, b = feat.data.shape
    with open(path, "wb") as fh:
        fh.write(b"SLDF")
        fh.write(struct.pack("<5I", FORMAT_VERSION, _LAYOUT_CODES[key], c, t, b))
        fh.write(np.ascontiguousarray(feat.data, dtype="<f4").tobytes())


def read_feature(path: Path) -> FeatureTensor:
    with open(path, "rb") as fh:
        _check_magic(fh, b"SLDF", path)
        version, code, c, t, b = struct.unpack("<5I", _read_exact(fh, 20, "header"))
        if version != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported SLDF version {version}")
        if code not in _CODE_LAYOUTS:
            raise DataError(f"{path}: unknown layout code {code:#x}")
        layout, semantics = _CODE_LAYOUTS[code]
        data = np.frombuffer(_read_exact(fh, 4 * c * t * b, "data"), dtype="<f4")
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes after feature data")
    return FeatureTensor(data.reshape(c, t, b).astype(np.float64), layout, semantics)


# ---------------------------------------------------------------------------
# SLDM checkpoints
# ---------------------------------------------------------------------------


def write_checkpoint(path: Path, config: dict, params: dict[str, np.ndarray]):
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(b"SLDM")
        fh.write(struct.pack("<2I", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def read_checkpoint(path: Path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        _check_magic(fh, b"SLDM", path)
        version, blob_len = struct.unpack("<2I", _read_exact(fh, 8, "header"))
        if version != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported SLDM version {version}")
        config = json.loads(_read_exact(fh, blob_len, "config").decode("utf-8"))
        (n_tensors,) = struct.unpack("<I", _read_exact(fh, 4, "tensor count"))
        params = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "name length"))
            name = _read_exact(fh, name_len, "name").decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(fh, 1, "ndim"))
            shape = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim, "dims"))
            count = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(_read_exact(fh, 8 * count, f"tensor {name}"), dtype="<f8")
            params[name] = data.reshape(shape).copy()
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes after tensors")
    return config, params


# ---------------------------------------------------------------------------
# SLDP predictions
# ---------------------------------------------------------------------------


def write_predictions(path: Path, preds: list[tuple[np.ndarray, np.ndarray]]):
    """preds: list of (sed (frames, M, K), doa (frames, M, 3)) per model."""
    if not preds:
        raise DataError("cannot write empty prediction list")
    frames, m, k = preds[0][0].shape
    for sed, doa in preds:
        if sed.shape != (frames, m, k) or doa.shape != (frames, m, 3):
            raise DataError("all models must share frames, tracks, and classes")
    with open(path, "wb") as fh:
        fh.write(b"SLDP")
        fh.write(struct.pack("<5I", FORMAT_VERSION, len(preds), m, k, frames))
        for sed, doa in preds:
            fh.write(np.ascontiguousarray(sed, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(doa, dtype="<f4").tobytes())


def read_predictions(path: Path) -> list[tuple[np.ndarray, np.ndarray]]:
    with open(path, "rb") as fh:
        _check_magic(fh, b"SLDP", path)
        version, n, m, k, frames = struct.unpack("<5I", _read_exact(fh, 20, "header"))
        if version != FORMAT_VERSION:
            raise DataError(f"{path}: unsupported SLDP version {version}")
        preds = []
        for _ in range(n):
            sed = np.frombuffer(_read_exact(fh, 4 * frames * m * k, "sed"), dtype="<f4")
            doa = np.frombuffer(_read_exact(fh, 4 * frames * m * 3, "doa"), dtype="<f4")
            preds.append(
                (
                    sed.reshape(frames, m, k).astype(np.float64),
                    doa.reshape(frames, m, 3).astype(np.float64),
                )
            )
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes after predictions")
    return preds
