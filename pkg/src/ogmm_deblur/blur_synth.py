"""Synthetic blur kernels, region-mixed blur scenes and noisy companions.

Six named scene presets (``BlurType1`` .. ``BlurType6``) cover linear,
circular, Gaussian and zoom blur, alone and mixed over rectangular regions.
Kernel magnitudes in the presets are fixed choices; regions are given as
fractions of the image so the presets apply to any size.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .optical_flow import sample_bilinear

ZOOM_SAMPLES = 16


@dataclass(frozen=True)
class BlurKernel:
    taps: np.ndarray
    anchor: tuple[int, int]  # (row, col) of the centre tap

    @classmethod
    def identity(cls):
        return cls(np.ones((1, 1)), (0, 0))


def _splat(px, py) -> BlurKernel:
    """Bilinearly splat equal-weight points (relative to the centre) and normalize."""
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    R = int(math.ceil(max(np.abs(px).max(), np.abs(py).max()) - 1e-9)) + 1
    size = 2 * R + 1
    taps = np.zeros((size, size))
    x = px + R
    y = py + R
    x0 = np.floor(x + 1e-9).astype(int)
    y0 = np.floor(y + 1e-9).astype(int)
    fx = np.clip(x - x0, 0.0, 1.0)
    fy = np.clip(y - y0, 0.0, 1.0)
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            np.add.at(taps, (np.minimum(y0 + dy, size - 1), np.minimum(x0 + dx, size - 1)), wy * wx)
    taps[np.abs(taps) < 1e-12] = 0.0
    # trim all-zero borders symmetrically so the anchor stays central
    while size > 1 and not (taps[0].any() or taps[-1].any() or taps[:, 0].any() or taps[:, -1].any()):
        taps = taps[1:-1, 1:-1]
        size -= 2
    taps /= taps.sum()
    return BlurKernel(taps, (size // 2, size // 2))


def linear_motion_kernel(length: float, angle: float) -> BlurKernel:
    """Straight-line motion of ``length`` pixels at ``angle`` radians.

    The angle is counter-clockwise from the +x axis with y pointing up in
    the image (so positive angles move towards row 0).
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    n = max(1, int(math.ceil(length - 1e-9)))
    if n == 1:
        return BlurKernel.identity()
    t = np.linspace(-(length - 1) / 2.0, (length - 1) / 2.0, n)
    return _splat(t * math.cos(angle), -t * math.sin(angle))


def circular_motion_kernel(radius: float, arc: float = 2 * math.pi) -> BlurKernel:
    """Motion along a circle of ``radius`` around the centre, ``arc`` radians long."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if radius == 0 or arc == 0:
        return BlurKernel.identity()
    full = abs(arc) >= 2 * math.pi - 1e-12
    n = max(8, int(math.ceil(abs(arc) * radius / 0.25)))
    if full:
        n = 4 * ((n + 3) // 4)
        theta = 2 * math.pi * np.arange(n) / n
    else:
        theta = np.linspace(0.0, arc, n)
    return _splat(radius * np.cos(theta), -radius * np.sin(theta))


def gaussian_kernel(sigma: float) -> BlurKernel:
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return BlurKernel.identity()
    R = max(1, int(math.ceil(3 * sigma)))
    t = np.arange(-R, R + 1)
    with np.errstate(over="ignore"):
        g = np.exp(-0.5 * (t / sigma) ** 2)
    taps = np.outer(g, g)
    return BlurKernel(taps / taps.sum(), (R, R))


def convolve(img, kernel: BlurKernel) -> np.ndarray:
    return ndimage.convolve(np.asarray(img, dtype=np.float64), kernel.taps, mode="nearest")


def zoom_blur(img, strength: float, center=None) -> np.ndarray:
    """Radial blur: mean of 16 resamplings scaled about ``center`` by
    factors evenly spaced in ``[1 - strength, 1]``."""
    if not 0.0 <= strength <= 0.5:
        raise ValueError(f"strength must lie in [0, 0.5], got {strength}")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    cx, cy = center if center is not None else ((w - 1) / 2.0, (h - 1) / 2.0)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    out = np.zeros_like(img)
    for s in np.linspace(1.0 - strength, 1.0, ZOOM_SAMPLES):
        out += sample_bilinear(img, cx + s * (xs - cx), cy + s * (ys - cy))
    return out / ZOOM_SAMPLES


# --- kernel definitions usable inside a scene -------------------------------


@dataclass(frozen=True)
class LinearBlur:
    length: float
    angle: float = 0.0

    def apply(self, img):
        return convolve(img, linear_motion_kernel(self.length, self.angle))


@dataclass(frozen=True)
class CircularBlur:
    radius: float
    arc: float = 2 * math.pi

    def apply(self, img):
        return convolve(img, circular_motion_kernel(self.radius, self.arc))


@dataclass(frozen=True)
class GaussianBlur:
    sigma: float

    def apply(self, img):
        return convolve(img, gaussian_kernel(self.sigma))


@dataclass(frozen=True)
class ZoomBlur:
    strength: float
    center: tuple[float, float] | None = None

    def apply(self, img):
        return zoom_blur(img, self.strength, self.center)


@dataclass(frozen=True)
class IdentityBlur:
    def apply(self, img):
        return np.array(img, dtype=np.float64)


KernelDef = LinearBlur | CircularBlur | GaussianBlur | ZoomBlur | IdentityBlur


@dataclass(frozen=True)
class Region:
    rect: tuple[int, int, int, int]  # x0, y0, x1, y1 with exclusive ends
    kernel_id: str


@dataclass
class BlurSceneSpec:
    kernels: dict[str, KernelDef]
    default_kernel_id: str
    regions: list[Region] = field(default_factory=list)
    noise_sigma: float = 10.0

    def validate(self, shape):
        h, w = shape
        if self.default_kernel_id not in self.kernels:
            raise ValueError(f"unknown default kernel {self.default_kernel_id!r}")
        for reg in self.regions:
            if reg.kernel_id not in self.kernels:
                raise ValueError(f"unknown kernel {reg.kernel_id!r}")
            x0, y0, x1, y1 = reg.rect
            if not (0 <= x0 < x1 <= w and 0 <= y0 < y1 <= h):
                raise ValueError(f"region {reg.rect} outside image {w}x{h}")


def apply_scene(sharp, spec: BlurSceneSpec) -> np.ndarray:
    """Blur ``sharp`` region by region; later regions overwrite earlier ones."""
    sharp = np.asarray(sharp, dtype=np.float64)
    spec.validate(sharp.shape)
    cache: dict[str, np.ndarray] = {}

    def blurred(kid):
        if kid not in cache:
            cache[kid] = spec.kernels[kid].apply(sharp)
        return cache[kid]

    out = blurred(spec.default_kernel_id).copy()
    for reg in spec.regions:
        x0, y0, x1, y1 = reg.rect
        out[y0:y1, x0:x1] = blurred(reg.kernel_id)[y0:y1, x0:x1]
    return out


def region_labels(shape, spec: BlurSceneSpec) -> np.ndarray:
    """Index of the source kernel for each pixel (0 = default, i = region i)."""
    labels = np.zeros(shape, dtype=int)
    for i, reg in enumerate(spec.regions, start=1):
        x0, y0, x1, y1 = reg.rect
        labels[y0:y1, x0:x1] = i
    return labels


def add_gaussian_noise(img, sigma: float, seed: int) -> np.ndarray:
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    img = np.asarray(img, dtype=np.float64)
    if sigma == 0:
        return img.copy()
    rng = np.random.default_rng(seed)
    return np.clip(img + rng.normal(0.0, sigma, img.shape), 0.0, 255.0)


# --- presets ------------------------------------------------------------------

_DEG = math.pi / 180.0

# kernels plus regions as (fx0, fy0, fx1, fy1) fractions of the image
_PRESETS = {
    1: ({"k0": LinearBlur(15, 0.0)}, "k0", []),
    2: ({"k0": CircularBlur(5)}, "k0", []),
    3: (
        {"k0": GaussianBlur(2.5), "k1": CircularBlur(4), "k2": LinearBlur(11, 45 * _DEG)},
        "k0",
        [((0.0, 0.0, 0.55, 0.5), "k1"), ((0.45, 0.5, 1.0, 1.0), "k2")],
    ),
    4: (
        {"k0": LinearBlur(9, 0.0), "k1": LinearBlur(13, 90 * _DEG), "k2": CircularBlur(4)},
        "k0",
        [((0.5, 0.0, 1.0, 0.6), "k1"), ((0.0, 0.55, 0.45, 1.0), "k2")],
    ),
    5: (
        {
            "k0": CircularBlur(3),
            "k1": ZoomBlur(0.08),
            "k2": LinearBlur(11, 30 * _DEG),
            "k3": LinearBlur(9, 120 * _DEG),
        },
        "k0",
        [
            ((0.25, 0.25, 0.75, 0.75), "k1"),
            ((0.0, 0.0, 0.4, 0.3), "k2"),
            ((0.6, 0.7, 1.0, 1.0), "k3"),
        ],
    ),
    6: (
        {"k0": LinearBlur(11, 135 * _DEG), "k1": LinearBlur(7, 60 * _DEG), "k2": CircularBlur(5)},
        "k0",
        [((0.0, 0.3, 0.5, 0.8), "k1"), ((0.55, 0.0, 0.95, 0.45), "k2")],
    ),
}


def preset_scene(blur_type: int, shape, noise_sigma: float = 10.0) -> BlurSceneSpec:
    """Built-in ``BlurType{1..6}`` scene scaled to an image of ``shape``."""
    if blur_type not in _PRESETS:
        raise ValueError(f"blur type must be 1..6, got {blur_type}")
    h, w = shape
    kernels, default, regs = _PRESETS[blur_type]
    regions = [
        Region((int(fx0 * w), int(fy0 * h), int(round(fx1 * w)), int(round(fy1 * h))), kid)
        for (fx0, fy0, fx1, fy1), kid in regs
    ]
    return BlurSceneSpec(dict(kernels), default, regions, noise_sigma)


# --- scene files --------------------------------------------------------------


def _kernel_from_section(sec) -> KernelDef:
    kind = sec.get("type", "").strip().lower()
    if kind == "linear":
        return LinearBlur(sec.getfloat("length"), sec.getfloat("angle_deg", 0.0) * _DEG)
    if kind == "circular":
        return CircularBlur(sec.getfloat("radius"), sec.getfloat("arc_deg", 360.0) * _DEG)
    if kind == "gaussian":
        return GaussianBlur(sec.getfloat("sigma"))
    if kind == "zoom":
        center = sec.get("center")
        c = tuple(float(v) for v in center.split(",")) if center else None
        return ZoomBlur(sec.getfloat("strength"), c)
    if kind == "identity":
        return IdentityBlur()
    raise ValueError(f"unknown kernel type {kind!r}")


def parse_scene(text: str) -> BlurSceneSpec:
    """Parse a scene description::

        [scene]
        noise_sigma = 10
        default = base

        [kernel base]
        type = linear
        length = 15
        angle_deg = 0

        [region left]
        rect = 0, 0, 64, 128
        kernel = ring
    """
    cp = configparser.ConfigParser()
    cp.read_string(text)
    if not cp.has_section("scene"):
        raise ValueError("scene file lacks a [scene] section")
    kernels: dict[str, KernelDef] = {}
    regions: list[Region] = []
    for name in cp.sections():
        sec = cp[name]
        if name.startswith("kernel "):
            kernels[name.split(None, 1)[1].strip()] = _kernel_from_section(sec)
        elif name.startswith("region "):
            rect = tuple(int(v) for v in sec["rect"].split(","))
            if len(rect) != 4:
                raise ValueError(f"[{name}] rect needs four integers")
            regions.append(Region(rect, sec["kernel"].strip()))
        elif name != "scene":
            raise ValueError(f"unknown section [{name}]")
    scene = cp["scene"]
    spec = BlurSceneSpec(
        kernels,
        scene.get("default", "").strip(),
        regions,
        scene.getfloat("noise_sigma", 10.0),
    )
    if spec.default_kernel_id not in kernels:
        raise ValueError(f"unknown default kernel {spec.default_kernel_id!r}")
    for reg in regions:
        if reg.kernel_id not in kernels:
            raise ValueError(f"unknown kernel {reg.kernel_id!r}")
    return spec


def load_scene(path) -> BlurSceneSpec:
    return parse_scene(Path(path).read_text())


# --- synthetic two-view content -----------------------------------------------


def synthetic_canvas(shape, seed: int = 0) -> np.ndarray:
    """Piecewise-smooth test content: shaded background with flat rectangles and discs."""
    rng = np.random.default_rng(seed)
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    img = 60.0 + 60.0 * (xs / w) + 30.0 * (ys / h)
    levels = np.array([20.0, 70.0, 120.0, 170.0, 220.0, 245.0])
    n_shapes = max(6, (h * w) // 1000)
    for _ in range(n_shapes):
        val = rng.choice(levels)
        if rng.integers(2) == 0:
            x0, y0 = rng.integers(0, w - 8), rng.integers(0, h - 8)
            bw, bh = rng.integers(8, max(9, w // 4)), rng.integers(8, max(9, h // 4))
            img[y0 : y0 + bh, x0 : x0 + bw] = val
        else:
            cx, cy = rng.uniform(0, w), rng.uniform(0, h)
            r = rng.uniform(5, max(6, min(h, w) / 7))
            img[(xs - cx) ** 2 + (ys - cy) ** 2 <= r * r] = val
    return np.clip(img, 0.0, 255.0)


def two_view_pair(shape, shift=(2, 1), seed: int = 0):
    """Two crops of one canvas so content moves by ``shift = (dx, dy)``.

    Returns ``(view_a, view_b, gt_flow)`` where ``gt_flow`` is the constant
    field ``shift`` on view A's grid.
    """
    h, w = shape
    dx, dy = (int(v) for v in shift)
    pad = max(abs(dx), abs(dy)) + 1
    canvas = synthetic_canvas((h + 2 * pad, w + 2 * pad), seed)
    a = canvas[pad : pad + h, pad : pad + w].copy()
    b = canvas[pad - dy : pad - dy + h, pad - dx : pad - dx + w].copy()
    gt = np.zeros((h, w, 2))
    gt[..., 0] = dx
    gt[..., 1] = dy
    return a, b, gt
