"""Detail-layer refinement: blend denoised edges of the noisy view back in."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .optical_flow import sample_bilinear

TAU_RANGE = (10.0, 150.0)
ETA_RANGE = (0.1, 0.5)

LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class DetailParams:
    tau: float = 40.0
    eta: float = 0.3
    bf_sigma_d: float = 2.0
    bf_sigma_l: float = 25.0
    bf_radius: int = 5
    allow_out_of_range: bool = False

    def __post_init__(self):
        for name, val, (lo, hi) in (("tau", self.tau, TAU_RANGE), ("eta", self.eta, ETA_RANGE)):
            if lo <= val <= hi:
                continue
            msg = f"{name}={val} outside the recommended range [{lo}, {hi}]"
            if not self.allow_out_of_range:
                raise ValueError(msg + " (set allow_out_of_range to override)")
            warnings.warn(msg, stacklevel=3)
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.bf_radius < 0 or not (self.bf_sigma_d > 0 and self.bf_sigma_l > 0):
            raise ValueError("bilateral filter scales must be positive")


def bilateral_filter(img, p: DetailParams) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    r = p.bf_radius
    h, w = img.shape
    padded = np.pad(img, r, mode="edge")
    num = np.zeros_like(img)
    den = np.zeros_like(img)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            shifted = padded[r + dy : r + dy + h, r + dx : r + dx + w]
            ws = np.exp(-(dx * dx + dy * dy) / (2.0 * p.bf_sigma_d**2))
            wr = np.exp(-((shifted - img) ** 2) / (2.0 * p.bf_sigma_l**2))
            num += ws * wr * shifted
            den += ws * wr
    return num / den


def laplacian_mask(img) -> np.ndarray:
    """Absolute 4-neighbor Laplacian response with replicated borders."""
    img = np.asarray(img, dtype=np.float64)
    if min(img.shape) < 3:
        raise ValueError("image must be at least 3x3")
    return np.abs(ndimage.correlate(img, LAPLACIAN, mode="nearest"))


def add_detail_layer(deblurred, noisy_enhanced, flow, p: DetailParams) -> np.ndarray:
    """Blend filtered noisy-view pixels into ``deblurred`` where the mask fires.

    Each pixel follows the flow into the noisy view; the mask is tested at
    the nearest pixel and the blended value is sampled bilinearly.
    """
    deblurred = np.asarray(deblurred, dtype=np.float64)
    flow = np.asarray(flow, dtype=np.float64)
    if flow.shape[:2] != deblurred.shape:
        raise ValueError(f"flow {flow.shape[:2]} does not match image {deblurred.shape}")
    filtered = bilateral_filter(noisy_enhanced, p)
    mask = laplacian_mask(filtered)

    h, w = deblurred.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    tx = xs + flow[..., 0]
    ty = ys + flow[..., 1]
    mh, mw = mask.shape
    nx = np.clip(np.floor(tx + 0.5), 0, mw - 1).astype(np.intp)
    ny = np.clip(np.floor(ty + 0.5), 0, mh - 1).astype(np.intp)
    passes = mask[ny, nx] > p.tau

    out = deblurred.copy()
    if np.any(passes):
        src = sample_bilinear(filtered, tx[passes], ty[passes])
        out[passes] = (1.0 - p.eta) * deblurred[passes] + p.eta * src
    return out
