"""Disparity and image file formats: PFM, 8-bit PNG, raw cost volumes."""

from __future__ import annotations

import os

import numpy as np
from PIL import Image


class PFMError(ValueError):
    pass


def _read_token_line(data: bytes, offset: int) -> tuple[str, int]:
    end = data.find(b"\n", offset)
    if end < 0:
        raise PFMError(f"unterminated header line at byte {offset}")
    try:
        return data[offset:end].decode("ascii").strip(), end + 1
    except UnicodeDecodeError as err:
        raise PFMError(f"non-ASCII header at byte {offset}") from err


def read_pfm(path) -> np.ndarray:
    """Single-channel PFM as a float32 array, top row first. ``inf`` marks unknown values."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, offset = _read_token_line(data, 0)
    if magic == "PF":
        raise PFMError("colour PFM ('PF') is not supported; expected 'Pf' at byte 0")
    if magic != "Pf":
        raise PFMError(f"bad magic {magic!r} at byte 0")
    start = offset
    dims, offset = _read_token_line(data, offset)
    try:
        width, height = (int(x) for x in dims.split())
    except ValueError as err:
        raise PFMError(f"bad dimensions {dims!r} at byte {start}") from err
    if width <= 0 or height <= 0:
        raise PFMError(f"bad dimensions {dims!r} at byte {start}")
    start = offset
    scale_line, offset = _read_token_line(data, offset)
    try:
        scale = float(scale_line)
    except ValueError as err:
        raise PFMError(f"bad scale {scale_line!r} at byte {start}") from err
    if scale == 0:
        raise PFMError(f"zero scale at byte {start}")
    count = width * height
    if len(data) - offset < 4 * count:
        raise PFMError(f"truncated payload: need {4 * count} bytes from byte {offset}, "
                       f"file ends at byte {len(data)}")
    dtype = "<f4" if scale < 0 else ">f4"
    img = np.frombuffer(data, dtype=dtype, count=count, offset=offset).reshape(height, width)
    return np.flipud(img).astype(np.float32)


def write_pfm(image: np.ndarray, path) -> None:
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 2:
        raise ValueError("write_pfm expects a single-channel image")
    if np.isnan(img).any():
        raise ValueError("NaN values cannot be stored; use inf for unknown disparities")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.flipud(img).astype("<f4").tobytes())


def read_image(path) -> np.ndarray:
    """8-bit image as float64 in [0, 255]; grayscale is expanded to 3 channels."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 127


def write_png(image: np.ndarray, path) -> None:
    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path)


# viridis sampled at 9 points
_RAMP = np.array([
    [68, 1, 84], [71, 44, 122], [59, 81, 139], [44, 113, 142], [33, 144, 141],
    [39, 173, 129], [92, 200, 99], [170, 220, 50], [253, 231, 37],
], dtype=np.float64)


def colorize(disparity: np.ndarray, disp_max: float) -> np.ndarray:
    """Map [0, disp_max] linearly onto a perceptual colour ramp; non-finite values are black."""
    if not disp_max > 0:
        raise ValueError("disp_max must be positive")
    d = np.asarray(disparity, dtype=np.float64)
    valid = np.isfinite(d)
    t = np.clip(np.where(valid, d, 0.0) / disp_max, 0.0, 1.0) * (len(_RAMP) - 1)
    out = np.stack([np.interp(t, np.arange(len(_RAMP)), _RAMP[:, c]) for c in range(3)], axis=-1)
    out = np.rint(out).astype(np.uint8)
    out[~valid] = 0
    return out


def read_cost_volume(path) -> np.ndarray:
    """Cost volume file: uint32 width, height, ndisp (little-endian), then ndisp float32 planes."""
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) < 12:
            raise ValueError(f"{path}: truncated header")
        width, height, ndisp = np.frombuffer(header, dtype="<u4")
        count = int(width) * int(height) * int(ndisp)
        payload = fh.read(4 * count)
    if len(payload) < 4 * count:
        raise ValueError(f"{path}: truncated payload ({len(payload)} of {4 * count} bytes)")
    return np.frombuffer(payload, dtype="<f4").reshape(int(ndisp), int(height), int(width)).astype(np.float64)


def write_cost_volume(volume: np.ndarray, path) -> None:
    vol = np.asarray(volume, dtype="<f4")
    ndisp, height, width = vol.shape
    with open(path, "wb") as fh:
        fh.write(np.array([width, height, ndisp], dtype="<u4").tobytes())
        fh.write(vol.tobytes())


def ensure_dir(path) -> None:
    os.makedirs(path, exist_ok=True)
