"""Grayscale image I/O and brightness enhancement.

Images are plain ``float64`` numpy arrays of shape ``(height, width)`` holding
intensities on the 0..255 scale. They are only quantized when written.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
PGM_MAGICS = (b"P5", b"P2")

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class ImageIOError(Exception):
    """Base class for image read/write failures."""


class UnsupportedFormatError(ImageIOError):
    pass


class CorruptImageError(ImageIOError):
    pass


@dataclass(frozen=True)
class EnhanceParams:
    gain: float = 1.0
    bias: float = 0.0
    gamma: float = 1.0

    def __post_init__(self):
        if not self.gain > 0:
            raise ValueError(f"gain must be > 0, got {self.gain}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")


def _sniff_format(path: Path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head.startswith(PNG_MAGIC):
        return "PNG"
    if head[:2] in PGM_MAGICS:
        return "PGM"
    raise UnsupportedFormatError(f"{path}: not a PNG or PGM file")


def load_image(path) -> np.ndarray:
    """Read an 8-bit PNG or PGM as a float grayscale array.

    Colour inputs go through :func:`to_grayscale`. Raises
    ``FileNotFoundError`` for a missing path, :class:`UnsupportedFormatError`
    for anything that is not PNG/PGM and :class:`CorruptImageError` when the
    header looks right but the payload does not decode.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image: {path}")
    fmt = _sniff_format(path)
    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "P":
                im = im.convert("RGBA" if "transparency" in im.info else "RGB")
                mode = im.mode
            arr = np.asarray(im)
    except (OSError, ValueError, SyntaxError) as exc:
        raise CorruptImageError(f"{path}: cannot decode {fmt} data ({exc})") from exc

    if mode in ("L", "1"):
        return arr.astype(np.float64) * (255.0 if mode == "1" else 1.0)
    if mode == "LA":
        return arr[..., 0].astype(np.float64)
    if mode in ("RGB", "RGBA"):
        return to_grayscale(arr[..., :3])
    raise UnsupportedFormatError(f"{path}: unsupported pixel mode {mode!r} (8-bit only)")


def to_grayscale(rgb) -> np.ndarray:
    """BT.601 luminance of an ``(h, w, 3)`` array."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected an (h, w, 3) array, got shape {rgb.shape}")
    r, g, b = LUMA_WEIGHTS
    return r * rgb[..., 0] + g * rgb[..., 1] + b * rgb[..., 2]


def quantize(img) -> np.ndarray:
    """Round half-up and clamp to uint8."""
    img = np.asarray(img, dtype=np.float64)
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)


def atomic_write(path, write_fn):
    """Call ``write_fn(tmp_path)`` and move the result into place on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=path.suffix, dir=path.parent or ".")
    os.close(fd)
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_image(img, path) -> None:
    """Write ``img`` as 8-bit grayscale PNG or PGM, chosen by file suffix."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        fmt = "PNG"
    elif suffix in (".pgm", ".pnm"):
        fmt = "PPM"
    else:
        raise UnsupportedFormatError(f"{path}: output must be .png or .pgm")
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D grayscale array, got shape {img.shape}")
    pil = PILImage.fromarray(quantize(img), mode="L")
    try:
        atomic_write(path, lambda tmp: pil.save(tmp, format=fmt))
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def save_rgb(rgb, path) -> None:
    rgb = np.clip(np.floor(np.asarray(rgb, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)
    try:
        atomic_write(path, lambda tmp: PILImage.fromarray(rgb, mode="RGB").save(tmp, format="PNG"))
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc}") from exc


def enhance(img, params: EnhanceParams) -> np.ndarray:
    """Gain/bias followed by gamma correction.

    ``out = 255 * (clip(gain * in + bias) / 255) ** (1 / gamma)``, so
    ``gamma > 1`` brightens dark inputs.
    """
    img = np.asarray(img, dtype=np.float64)
    lin = np.clip(params.gain * img + params.bias, 0.0, 255.0)
    if params.gamma == 1.0:
        return lin
    return np.clip(255.0 * (lin / 255.0) ** (1.0 / params.gamma), 0.0, 255.0)
