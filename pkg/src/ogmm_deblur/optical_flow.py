"""Dense optical flow by polynomial expansion, .flo I/O and flow error metrics.

A flow field is a ``float64`` array of shape ``(h, w, 2)`` holding ``(dx, dy)``
per pixel: pixel ``(x, y)`` of the first image corresponds to
``(x + dx, y + dy)`` in the second.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .image_core import atomic_write

FLO_MAGIC = 202021.25
_MIN_LEVEL_SIZE = 32


class FlowFileError(Exception):
    pass


class BadMagicError(FlowFileError):
    pass


class TruncatedFlowError(FlowFileError):
    pass


@dataclass(frozen=True)
class FlowParams:
    pyramid_levels: int = 3
    pyramid_scale: float = 0.5
    window_size: int = 15
    iterations_per_level: int = 3
    poly_neighborhood: int = 5
    poly_sigma: float = 1.1

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise ValueError("pyramid_levels must be >= 1")
        if not 0 < self.pyramid_scale < 1:
            raise ValueError("pyramid_scale must lie in (0, 1)")
        if self.window_size < 1 or self.window_size % 2 == 0:
            raise ValueError("window_size must be a positive odd number")
        if self.iterations_per_level < 1:
            raise ValueError("iterations_per_level must be >= 1")
        if self.poly_neighborhood < 3 or self.poly_neighborhood % 2 == 0:
            raise ValueError("poly_neighborhood must be an odd number >= 3")
        if not self.poly_sigma > 0:
            raise ValueError("poly_sigma must be > 0")


def sample_bilinear(img, x, y):
    """Bilinear lookup of ``img`` at float coordinates, clamped to the border."""
    h, w = img.shape[:2]
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(x).astype(np.intp), w - 2 if w > 1 else 0)
    y0 = np.minimum(np.floor(y).astype(np.intp), h - 2 if h > 1 else 0)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def _poly_basis(n, sigma):
    r = n // 2
    t = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(t**2) / (2 * sigma**2))
    g /= g.sum()
    # Gram matrix of the basis (1, x, y, x^2, y^2, xy) under the applicability g(x)g(y)
    xx, yy = np.meshgrid(t, t)
    a = np.outer(g, g)
    basis = np.stack([np.ones_like(xx), xx, yy, xx**2, yy**2, xx * yy])
    gram = np.einsum("ihw,jhw,hw->ij", basis, basis, a)
    return t, g, np.linalg.inv(gram)


def poly_expand(img, n=5, sigma=1.1):
    """Per-pixel quadratic fit ``f ~ x'Ax + b'x + c`` over an ``n x n`` window.

    Returns ``(A, b)`` with ``A`` of shape ``(h, w, 2, 2)`` and ``b`` of shape
    ``(h, w, 2)`` in ``(x, y)`` order.
    """
    t, g, ginv = _poly_basis(n, sigma)
    img = np.asarray(img, dtype=np.float64)
    k0, k1, k2 = g, g * t, g * t**2

    def sep(kx, ky):
        tmp = ndimage.correlate1d(img, kx, axis=1, mode="nearest")
        return ndimage.correlate1d(tmp, ky, axis=0, mode="nearest")

    moments = np.stack(
        [sep(k0, k0), sep(k1, k0), sep(k0, k1), sep(k2, k0), sep(k0, k2), sep(k1, k1)],
        axis=-1,
    )
    r = moments @ ginv.T
    A = np.empty(img.shape + (2, 2))
    A[..., 0, 0] = r[..., 3]
    A[..., 1, 1] = r[..., 4]
    A[..., 0, 1] = A[..., 1, 0] = 0.5 * r[..., 5]
    b = r[..., 1:3].copy()
    return A, b


def _refine(A1, b1, A2, b2, flow, window):
    h, w = flow.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    tx = xs + flow[..., 0]
    ty = ys + flow[..., 1]
    A2w = sample_bilinear(A2.reshape(h, w, 4), tx, ty).reshape(h, w, 2, 2)
    b2w = sample_bilinear(b2, tx, ty)
    A = 0.5 * (A1 + A2w)
    db = -0.5 * (b2w - b1) + np.einsum("hwij,hwj->hwi", A, flow)

    # normal equations A'A d = A'db, aggregated over the window
    G = np.einsum("hwki,hwkj->hwij", A, A)
    hv = np.einsum("hwki,hwk->hwi", A, db)
    comps = [G[..., 0, 0], G[..., 0, 1], G[..., 1, 1], hv[..., 0], hv[..., 1]]
    g11, g12, g22, h1, h2 = (ndimage.uniform_filter(c, size=window, mode="nearest") for c in comps)

    idet = 1.0 / (g11 * g22 - g12 * g12 + 1e-3)
    out = np.empty_like(flow)
    out[..., 0] = (g22 * h1 - g12 * h2) * idet
    out[..., 1] = (g11 * h2 - g12 * h1) * idet
    return out


def _resize(img, shape):
    """Bilinear resample onto ``shape`` with pixel-centre alignment."""
    h, w = img.shape[:2]
    nh, nw = shape
    y = (np.arange(nh) + 0.5) * (h / nh) - 0.5
    x = (np.arange(nw) + 0.5) * (w / nw) - 0.5
    yy, xx = np.meshgrid(y, x, indexing="ij")
    return sample_bilinear(img, xx, yy)


def compute_dense_flow(a, b, params: FlowParams | None = None) -> np.ndarray:
    """Coarse-to-fine polynomial-expansion flow from ``a`` to ``b``."""
    p = params or FlowParams()
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if min(a.shape) < p.poly_neighborhood:
        raise ValueError(
            f"image {a.shape} is smaller than the polynomial neighborhood {p.poly_neighborhood}"
        )

    h, w = a.shape
    scales = [1.0]
    for k in range(1, p.pyramid_levels):
        s = p.pyramid_scale**k
        if min(h, w) * s < _MIN_LEVEL_SIZE:
            break
        scales.append(s)

    flow = None
    for s in reversed(scales):
        shape = (max(1, int(round(h * s))), max(1, int(round(w * s))))
        if s < 1.0:
            sigma = (1.0 / s - 1.0) * 0.5
            la = _resize(ndimage.gaussian_filter(a, sigma, mode="nearest"), shape)
            lb = _resize(ndimage.gaussian_filter(b, sigma, mode="nearest"), shape)
        else:
            la, lb = a, b
        if flow is None:
            flow = np.zeros(shape + (2,))
        else:
            prev_shape = flow.shape[:2]
            flow = _resize(flow, shape)
            flow[..., 0] *= shape[1] / prev_shape[1]
            flow[..., 1] *= shape[0] / prev_shape[0]
        A1, b1 = poly_expand(la, p.poly_neighborhood, p.poly_sigma)
        A2, b2 = poly_expand(lb, p.poly_neighborhood, p.poly_sigma)
        for _ in range(p.iterations_per_level):
            flow = _refine(A1, b1, A2, b2, flow, p.window_size)
    return flow


def flow_error(est, gt, mask=None) -> tuple[float, float]:
    """Average endpoint error (px) and average angular error (rad).

    The angular error is the angle between the space-time vectors
    ``(dx, dy, 1)``. ``mask`` optionally restricts the average.
    """
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if est.shape != gt.shape:
        raise ValueError(f"flow shapes differ: {est.shape} vs {gt.shape}")
    du = est[..., 0] - gt[..., 0]
    dv = est[..., 1] - gt[..., 1]
    epe = np.hypot(du, dv)
    num = est[..., 0] * gt[..., 0] + est[..., 1] * gt[..., 1] + 1.0
    den = np.sqrt((est[..., :2] ** 2).sum(-1) + 1.0) * np.sqrt((gt[..., :2] ** 2).sum(-1) + 1.0)
    ang = np.arccos(np.clip(num / den, -1.0, 1.0))
    if mask is not None:
        epe, ang = epe[mask], ang[mask]
    return float(epe.mean()), float(ang.mean())


def write_flo(flow, path) -> None:
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"expected an (h, w, 2) flow field, got {flow.shape}")
    h, w = flow.shape[:2]
    payload = struct.pack("<fii", FLO_MAGIC, w, h) + np.ascontiguousarray(flow, dtype="<f4").tobytes()

    def _write(tmp):
        with open(tmp, "wb") as fh:
            fh.write(payload)

    atomic_write(path, _write)


def read_flo(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise TruncatedFlowError(f"{path}: header truncated ({len(data)} bytes)")
    magic, w, h = struct.unpack("<fii", data[:12])
    if magic != FLO_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if w < 0 or h < 0:
        raise FlowFileError(f"{path}: negative dimensions {w}x{h}")
    need = 12 + 8 * w * h
    if len(data) < need:
        raise TruncatedFlowError(f"{path}: expected {need} bytes, found {len(data)}")
    vec = np.frombuffer(data, dtype="<f4", count=2 * w * h, offset=12)
    return vec.reshape(h, w, 2).astype(np.float32)


def _hsv_to_rgb(hue, sat, val):
    i = np.floor(hue * 6.0)
    f = hue * 6.0 - i
    p = val * (1 - sat)
    q = val * (1 - sat * f)
    t = val * (1 - sat * (1 - f))
    i = i.astype(int) % 6
    choices = [
        (val, t, p), (q, val, p), (p, val, t),
        (p, q, val), (t, p, val), (val, p, q),
    ]
    rgb = np.zeros(hue.shape + (3,))
    for k, (r, g, b) in enumerate(choices):
        sel = i == k
        rgb[sel, 0] = r[sel]
        rgb[sel, 1] = g[sel]
        rgb[sel, 2] = b[sel]
    return rgb


def flow_to_color(flow) -> np.ndarray:
    """Colour-wheel rendering: hue encodes direction, saturation magnitude.

    Magnitudes are normalized by the field maximum, so zero flow is white and
    the largest vector is fully saturated. Returns ``(h, w, 3)`` in 0..255.
    """
    flow = np.asarray(flow, dtype=np.float64)
    u, v = flow[..., 0], flow[..., 1]
    mag = np.hypot(u, v)
    peak = mag.max() if mag.size else 0.0
    sat = mag / peak if peak > 0 else np.zeros_like(mag)
    hue = (np.arctan2(v, u) / (2 * np.pi)) % 1.0
    return 255.0 * _hsv_to_rgb(hue, sat, np.ones_like(mag))
