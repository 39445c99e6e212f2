"""File formats: PNG images and small little-endian binary containers.

Binary layouts (all little-endian):

* motion field  : magic ``TSFL``, u32 height, u32 width, then
                  height*width float32 (dx, dy) pairs, row-major.
* covariance    : magic ``TSCV``, u32 n, then n*n float64, row-major.
* psf basis     : magic ``TSPB``, u32 num_basis, u32 side, then
                  (1 + num_basis) kernels of side*side float32 each,
                  mean kernel first.
"""

from __future__ import annotations

import struct
from pathlib import Path

import cv2
import numpy as np

from .core import ImageBuffer, MotionField, ParameterError, TurbsimError, UnsupportedInputError


class FileFormatError(TurbsimError):
    """A file does not match its expected binary or image layout."""


_FIELD_MAGIC = b"TSFL"
_COV_MAGIC = b"TSCV"
_BASIS_MAGIC = b"TSPB"


def read_png(path: str | Path) -> ImageBuffer:
    """Read an 8- or 16-bit PNG as float intensities in [0, 1].

    Grayscale files come back single-channel; color files as RGB.
    """
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FileFormatError(f"could not read image file: {path}")
    if raw.dtype == np.uint8:
        maxval = 255.0
    elif raw.dtype == np.uint16:
        maxval = 65535.0
    else:
        raise UnsupportedInputError(f"unsupported pixel type {raw.dtype} in {path}")
    arr = raw.astype(np.float64) / maxval
    if arr.ndim == 2:
        return ImageBuffer.from_array(arr)
    if arr.ndim == 3 and arr.shape[2] == 3:
        return ImageBuffer.from_array(arr[:, :, ::-1])  # BGR -> RGB
    if arr.ndim == 3 and arr.shape[2] == 4:
        return ImageBuffer.from_array(arr[:, :, 2::-1])  # drop alpha
    raise UnsupportedInputError(f"unsupported channel layout {raw.shape} in {path}")


def encode_png(img: ImageBuffer, bit_depth: int = 8) -> bytes:
    """Encode as PNG bytes at 8 or 16 bits, quantizing round(value * maxvalue).

    Encoding settings are pinned so the same pixels always produce the
    same bytes; batch manifests hash these bytes.
    """
    if bit_depth == 8:
        maxval, dtype = 255.0, np.uint8
    elif bit_depth == 16:
        maxval, dtype = 65535.0, np.uint16
    else:
        raise ParameterError(f"bit depth must be 8 or 16, got {bit_depth}")
    if img.channels not in (1, 3):
        raise UnsupportedInputError(
            f"PNG output expects 1 or 3 channels, got {img.channels}"
        )
    arr = np.rint(np.clip(img.to_interleaved(), 0.0, 1.0) * maxval).astype(dtype)
    if arr.ndim == 3:
        arr = arr[:, :, ::-1]  # RGB -> BGR
    ok, buf = cv2.imencode(".png", arr, [cv2.IMWRITE_PNG_COMPRESSION, 3])
    if not ok:
        raise FileFormatError("could not encode PNG data")
    return buf.tobytes()


def write_png(path: str | Path, img: ImageBuffer, bit_depth: int = 8) -> None:
    """Write as PNG at 8 or 16 bits, quantizing round(value * maxvalue)."""
    Path(path).write_bytes(encode_png(img, bit_depth))


def write_motion_field(path: str | Path, fld: MotionField) -> None:
    h, w = fld.shape
    pairs = np.empty((h, w, 2), dtype="<f4")
    pairs[:, :, 0] = fld.dx
    pairs[:, :, 1] = fld.dy
    with open(path, "wb") as fh:
        fh.write(_FIELD_MAGIC)
        fh.write(struct.pack("<II", h, w))
        fh.write(pairs.tobytes())


def read_motion_field(path: str | Path) -> MotionField:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _FIELD_MAGIC:
        raise FileFormatError(f"bad magic in motion-field file: {path}")
    if len(blob) < 12:
        raise FileFormatError(f"truncated motion-field header: {path}")
    h, w = struct.unpack("<II", blob[4:12])
    expected = 12 + h * w * 2 * 4
    if len(blob) != expected:
        raise FileFormatError(
            f"motion-field payload is {len(blob) - 12} bytes, "
            f"expected {expected - 12}: {path}"
        )
    pairs = np.frombuffer(blob, dtype="<f4", offset=12).reshape(h, w, 2)
    return MotionField(pairs[:, :, 0].astype(np.float64), pairs[:, :, 1].astype(np.float64))


def write_covariance(path: str | Path, matrix: np.ndarray) -> None:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ParameterError(f"covariance must be square, got shape {m.shape}")
    with open(path, "wb") as fh:
        fh.write(_COV_MAGIC)
        fh.write(struct.pack("<I", m.shape[0]))
        fh.write(m.astype("<f8").tobytes())


def read_covariance(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _COV_MAGIC:
        raise FileFormatError(f"bad magic in covariance file: {path}")
    (n,) = struct.unpack("<I", blob[4:8])
    expected = 8 + n * n * 8
    if len(blob) != expected:
        raise FileFormatError(f"covariance payload size mismatch: {path}")
    return np.frombuffer(blob, dtype="<f8", offset=8).reshape(n, n).astype(np.float64)


def write_psf_basis(path: str | Path, mean_kernel: np.ndarray, basis: np.ndarray) -> None:
    """Store a PSF basis: mean kernel followed by `basis` kernels."""
    mean = np.asarray(mean_kernel, dtype=np.float64)
    kern = np.asarray(basis, dtype=np.float64)
    if mean.ndim != 2 or mean.shape[0] != mean.shape[1]:
        raise ParameterError("mean kernel must be square")
    if kern.ndim != 3 or kern.shape[1:] != mean.shape:
        raise ParameterError("basis must be (num_basis, side, side) matching the mean")
    side = mean.shape[0]
    with open(path, "wb") as fh:
        fh.write(_BASIS_MAGIC)
        fh.write(struct.pack("<II", kern.shape[0], side))
        fh.write(mean.astype("<f4").tobytes())
        fh.write(kern.astype("<f4").tobytes())


def read_psf_basis(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Return (mean_kernel, basis) from a PSF basis cache file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _BASIS_MAGIC:
        raise FileFormatError(f"bad magic in PSF basis file: {path}")
    num_basis, side = struct.unpack("<II", blob[4:12])
    expected = 12 + (1 + num_basis) * side * side * 4
    if len(blob) != expected:
        raise FileFormatError(f"PSF basis payload size mismatch: {path}")
    flat = np.frombuffer(blob, dtype="<f4", offset=12).astype(np.float64)
    stack = flat.reshape(1 + num_basis, side, side)
    return stack[0], stack[1:]
