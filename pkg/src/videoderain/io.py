"""Frame-sequence PNG I/O and the RLRT binary tensor format.

RLRT layout (all little-endian)::

    offset  size  field
    0       4     magic b"RLRT"
    4       1     version (1)
    5       1     dtype (1 = float32)
    6       2     reserved, zero
    8       24    height, width, frames as uint64
    32      ...   float32 payload, frame-major then row-major
"""

import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np
import png

from .errors import (
    DTypeMismatchError,
    FormatError,
    FrameReadError,
    MagicMismatchError,
    TruncatedPayloadError,
    VersionMismatchError,
)

__all__ = [
    "FrameSequence",
    "read_frames",
    "write_frames",
    "read_luminance",
    "luminance",
    "read_rlrt",
    "write_rlrt",
    "LUMA_WEIGHTS",
]

MAGIC = b"RLRT"
VERSION = 1
DTYPE_F32 = 1
_HEADER = struct.Struct("<4sBB2x3Q")
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def write_rlrt(T, path):
    T = np.asarray(T)
    if T.ndim != 3:
        raise ValueError(f"RLRT stores 3-D tensors, got shape {T.shape}")
    if T.dtype != np.float32:
        T = T.astype(np.float32)
    h, w, t = T.shape
    payload = np.ascontiguousarray(np.transpose(T, (2, 0, 1))).astype("<f4", copy=False)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, DTYPE_F32, h, w, t))
        fh.write(payload.tobytes())


def read_rlrt(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise TruncatedPayloadError(
            f"{path}: header needs {_HEADER.size} bytes, file has {len(data)}"
        )
    magic, version, dtype, h, w, t = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MagicMismatchError(f"{path}: magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    if dtype != DTYPE_F32:
        raise DTypeMismatchError(f"{path}: dtype code {dtype}, expected {DTYPE_F32} (float32)")
    if data[6:8] != b"\x00\x00":
        raise FormatError(f"{path}: reserved header bytes are not zero")
    expected = 4 * h * w * t
    actual = len(data) - _HEADER.size
    if actual < expected:
        raise TruncatedPayloadError(
            f"{path}: payload expected {expected} bytes, got {actual}"
        )
    if actual > expected:
        raise FormatError(f"{path}: {actual - expected} trailing bytes after payload")
    flat = np.frombuffer(data, dtype="<f4", offset=_HEADER.size, count=h * w * t)
    return np.transpose(flat.reshape(t, h, w), (1, 2, 0)).astype(np.float32)


@dataclass
class FrameSequence:
    """Decoded frames: one ``(h, w, t)`` float32 tensor per channel."""

    channels: list
    bitdepth: int
    names: list

    @property
    def is_color(self):
        return len(self.channels) == 3


def _png_files(directory):
    if not os.path.isdir(directory):
        raise FrameReadError(f"{directory}: not a directory")
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(".png"))
    if not names:
        raise FrameReadError(f"{directory}: no PNG frames")
    return names


def _decode(path):
    try:
        width, height, rows, info = png.Reader(filename=path).asDirect()
        planes = info["planes"]
        pixels = np.vstack([np.asarray(r, dtype=np.uint32) for r in rows])
    except (OSError, ValueError, zlib.error, png.Error) as exc:
        raise FrameReadError(f"{path}: {exc}") from exc
    pixels = pixels.reshape(height, width, planes)
    if info.get("alpha"):
        pixels = pixels[:, :, :-1]
    return pixels, info["bitdepth"]


def read_frames(directory):
    """Read a directory of PNG frames in lexicographic filename order.

    Each channel is scaled to ``[0, 1]`` by its bit depth. Grayscale input
    gives one channel, RGB gives three. Alpha is dropped.
    """
    names = _png_files(directory)
    frames = []
    depth = None
    for name in names:
        path = os.path.join(directory, name)
        pixels, bd = _decode(path)
        if frames and pixels.shape != frames[0].shape:
            raise FrameReadError(
                f"{path}: size {pixels.shape[1]}x{pixels.shape[0]}x{pixels.shape[2]} "
                f"differs from {frames[0].shape[1]}x{frames[0].shape[0]}x{frames[0].shape[2]}"
            )
        if depth is not None and bd != depth:
            raise FrameReadError(f"{path}: bit depth {bd} differs from {depth}")
        depth = bd
        frames.append(pixels)
    stack = np.stack(frames, axis=2).astype(np.float64) / (2**depth - 1)
    channels = [np.ascontiguousarray(stack[:, :, :, c], dtype=np.float32) for c in range(stack.shape[3])]
    return FrameSequence(channels, depth, names)


def write_frames(T, directory, bitdepth=8, names=None):
    """Write one or three ``(h, w, t)`` channel tensors as PNG frames.

    Values are clipped to ``[0, 1]`` and quantized with round-half-to-even.
    Files are named ``frame_00000.png`` onwards unless ``names`` is given.
    Returns the written paths.
    """
    if isinstance(T, FrameSequence):
        T = T.channels
    channels = [np.asarray(c) for c in T] if isinstance(T, (list, tuple)) else [np.asarray(T)]
    if len(channels) not in (1, 3):
        raise ValueError(f"need 1 or 3 channels, got {len(channels)}")
    shape = channels[0].shape
    if len(shape) != 3 or any(c.shape != shape for c in channels):
        raise ValueError("channels must be 3-D tensors of one shape")
    if bitdepth not in (8, 16):
        raise ValueError(f"bit depth must be 8 or 16, got {bitdepth}")
    maxval = 2**bitdepth - 1
    dtype = np.uint8 if bitdepth == 8 else np.uint16
    os.makedirs(directory, exist_ok=True)
    h, w, t = shape
    if names is None:
        digits = max(5, len(str(t - 1)))
        names = [f"frame_{f:0{digits}d}.png" for f in range(t)]
    elif len(names) != t:
        raise ValueError(f"{len(names)} names for {t} frames")
    writer = png.Writer(w, h, greyscale=len(channels) == 1, bitdepth=bitdepth)
    paths = []
    for f in range(t):
        q = [np.rint(np.clip(c[:, :, f].astype(np.float64), 0.0, 1.0) * maxval).astype(dtype)
             for c in channels]
        rows = np.stack(q, axis=2).reshape(h, w * len(channels))
        path = os.path.join(directory, names[f])
        with open(path, "wb") as fh:
            writer.write(fh, rows.tolist())
        paths.append(path)
    return paths


def luminance(channels):
    """Rec. 601 luma of three channel tensors; a single channel passes through."""
    if len(channels) == 1:
        return np.asarray(channels[0], dtype=np.float64)
    r, g, b = (np.asarray(c, dtype=np.float64) for c in channels)
    return LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b


def read_luminance(path):
    """Decode a single PNG image into a 2-D luminance array in ``[0, 1]``."""
    if not os.path.isfile(path):
        raise FrameReadError(f"{path}: no such file")
    pixels, depth = _decode(path)
    planes = pixels.astype(np.float64) / (2**depth - 1)
    return luminance([planes[:, :, c] for c in range(planes.shape[2])])
