"""Binary file formats for complex sample matrices and multichannel images,
plus the change-map container.

The matrix format ("CMX1") is a 12-byte header — magic bytes, then M and N as
little-endian 32-bit unsigned counts — followed by the row-major complex128
payload (real then imaginary, little-endian). Images are stored planar
(channel-major complex128) next to a JSON sidecar that records width, height,
and channel count.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "DataFormatError",
    "ChangeMap",
    "write_cmx",
    "read_cmx",
    "write_image",
    "read_image",
    "sidecar_path",
]

_MAGIC = b"CMX1"
_HEADER = struct.Struct("<II")
_IMAGE_DTYPE = "c128-planar"


class DataFormatError(Exception):
    """Raised when a data file is truncated, mislabeled, or inconsistent."""


def write_cmx(path, matrix) -> None:
    """Write a complex M x N matrix in the CMX1 binary format."""
    m = np.ascontiguousarray(matrix, dtype="<c16")
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {m.shape}")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(_HEADER.pack(m.shape[0], m.shape[1]))
        f.write(m.tobytes())


def read_cmx(path) -> np.ndarray:
    """Read a CMX1 file back into a complex128 matrix (bit-exact round trip)."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4 + _HEADER.size or data[:4] != _MAGIC:
        raise DataFormatError(f"{path}: not a CMX1 file")
    rows, cols = _HEADER.unpack_from(data, 4)
    payload = data[4 + _HEADER.size :]
    expected = 16 * rows * cols
    if len(payload) != expected:
        raise DataFormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected} "
            f"for a {rows}x{cols} matrix"
        )
    return np.frombuffer(payload, dtype="<c16").reshape(rows, cols).copy()


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def write_image(path, image) -> None:
    """Write a (channels, height, width) complex image as planar binary data
    with a JSON sidecar at <path>.json describing the geometry."""
    img = np.ascontiguousarray(image, dtype="<c16")
    if img.ndim != 3:
        raise ValueError(f"expected a (channels, height, width) array, got {img.shape}")
    channels, height, width = img.shape
    with open(path, "wb") as f:
        f.write(img.tobytes())
    sidecar_path(path).write_text(
        json.dumps(
            {
                "width": width,
                "height": height,
                "channels": channels,
                "dtype": _IMAGE_DTYPE,
            },
            indent=2,
            sort_keys=True,
        )
    )


def read_image(path) -> np.ndarray:
    """Read a planar complex image written by write_image."""
    side = sidecar_path(path)
    if not side.exists():
        raise DataFormatError(f"{path}: missing sidecar {side}")
    try:
        meta = json.loads(side.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{side}: invalid JSON ({exc})") from exc
    for key in ("width", "height", "channels", "dtype"):
        if key not in meta:
            raise DataFormatError(f"{side}: missing field {key!r}")
    if meta["dtype"] != _IMAGE_DTYPE:
        raise DataFormatError(f"{side}: unsupported dtype {meta['dtype']!r}")
    channels, height, width = meta["channels"], meta["height"], meta["width"]
    payload = Path(path).read_bytes()
    expected = 16 * channels * height * width
    if len(payload) != expected:
        raise DataFormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    return (
        np.frombuffer(payload, dtype="<c16").reshape(channels, height, width).copy()
    )


@dataclass(frozen=True)
class ChangeMap:
    """Per-pixel statistic values over an image pair.

    Border pixels whose analysis window would leave the image are flagged
    invalid; values must be finite wherever valid. The optional mask carries
    ground truth for ROC evaluation, and decisions carries per-pixel
    reject/accept bits when a calibrated threshold was requested.
    """

    width: int
    height: int
    values: np.ndarray  # (height, width) float
    valid: np.ndarray  # (height, width) bool
    mask: np.ndarray | None = None
    decisions: np.ndarray | None = None

    def __post_init__(self):
        shape = (self.height, self.width)
        for name in ("values", "valid", "mask", "decisions"):
            arr = getattr(self, name)
            if arr is None:
                continue
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
        if not np.all(np.isfinite(self.values[self.valid])):
            raise ValueError("statistic values must be finite at every valid pixel")

    def save(self, path) -> None:
        payload = {"values": self.values, "valid": self.valid}
        if self.mask is not None:
            payload["mask"] = self.mask
        if self.decisions is not None:
            payload["decisions"] = self.decisions
        np.savez(path, **payload)

    @classmethod
    def load(cls, path) -> "ChangeMap":
        try:
            with np.load(path, allow_pickle=False) as data:
                if "values" not in data or "valid" not in data:
                    raise DataFormatError(f"{path}: missing values/valid arrays")
                values = data["values"]
                return cls(
                    width=values.shape[1],
                    height=values.shape[0],
                    values=values,
                    valid=data["valid"],
                    mask=data["mask"] if "mask" in data else None,
                    decisions=data["decisions"] if "decisions" in data else None,
                )
        except (OSError, ValueError) as exc:
            raise DataFormatError(f"{path}: cannot read change map ({exc})") from exc

    def with_mask(self, mask: np.ndarray) -> "ChangeMap":
        return ChangeMap(
            width=self.width,
            height=self.height,
            values=self.values,
            valid=self.valid,
            mask=np.asarray(mask, dtype=bool),
            decisions=self.decisions,
        )
