"""Overlapping patch extraction, flow-guided correspondence and reassembly.

Patch centers are ``(x, y)`` integer pairs (column, row), matching the flow
convention. Within a patch, pixels are ordered row-major.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class CoverageError(ValueError):
    """Some pixel is not covered by any patch (stride larger than the patch)."""


@dataclass(frozen=True)
class PatchSpec:
    s1: int = 3
    s2: int = 5
    stride: int = 1

    def __post_init__(self):
        if self.s1 < 1 or self.s1 % 2 == 0:
            raise ValueError(f"s1 must be a positive odd number, got {self.s1}")
        if self.s2 < 1 or self.s2 % 2 == 0:
            raise ValueError(f"s2 must be a positive odd number, got {self.s2}")
        if self.s2 <= self.s1:
            raise ValueError(f"s2 must exceed s1 (got s1={self.s1}, s2={self.s2})")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")

    @property
    def M(self):
        return self.s1 * self.s1

    @property
    def K(self):
        return self.s2 * self.s2


@dataclass
class PatchPair:
    center: tuple[int, int]
    X: np.ndarray
    Y: np.ndarray
    positions: np.ndarray  # (M, 2) as (x, y)
    noisy_center: tuple[int, int] = (0, 0)


@dataclass
class Accumulator:
    sum: np.ndarray
    count: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.count is None:
            self.count = np.zeros(self.sum.shape, dtype=np.int64)

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape, dtype=np.float64))


def _axis_centers(n, side, stride):
    r = side // 2
    lo, hi = r, n - 1 - r
    if hi < lo:
        raise ValueError(f"image side {n} is smaller than patch side {side}")
    c = list(range(lo, hi + 1, stride))
    if c[-1] != hi:
        c.append(hi)
    return np.asarray(c, dtype=np.intp)


def slice_patches(shape, spec: PatchSpec) -> np.ndarray:
    """Patch centers on a stride grid, border centers clamped inside the image.

    Returns an ``(P, 2)`` integer array of ``(x, y)`` centers.
    """
    if spec.stride < 1:
        raise ValueError("stride must be >= 1")
    h, w = shape[:2]
    xs = _axis_centers(w, spec.s1, spec.stride)
    ys = _axis_centers(h, spec.s1, spec.stride)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def _offsets(side):
    r = side // 2
    oy, ox = np.mgrid[-r : r + 1, -r : r + 1]
    return ox.ravel(), oy.ravel()


def patch_positions(centers, side) -> np.ndarray:
    """``(P, side*side, 2)`` pixel coordinates ``(x, y)`` of each patch."""
    centers = np.asarray(centers, dtype=np.intp).reshape(-1, 2)
    ox, oy = _offsets(side)
    px = centers[:, :1] + ox[None, :]
    py = centers[:, 1:] + oy[None, :]
    return np.stack([px, py], axis=-1)


def gather(img, centers, side) -> np.ndarray:
    pos = patch_positions(centers, side)
    return np.asarray(img, dtype=np.float64)[pos[..., 1], pos[..., 0]]


def corresponding_centers(centers, flow, shape, s2) -> np.ndarray:
    """Displace centers by the flow at each center, round, and clamp so the
    ``s2 x s2`` patch stays inside an image of ``shape``."""
    centers = np.asarray(centers, dtype=np.intp).reshape(-1, 2)
    h, w = shape[:2]
    r = s2 // 2
    if h < s2 or w < s2:
        raise ValueError(f"noisy image {shape} is smaller than patch side {s2}")
    d = np.asarray(flow, dtype=np.float64)[centers[:, 1], centers[:, 0]]
    tx = np.floor(centers[:, 0] + d[:, 0] + 0.5)
    ty = np.floor(centers[:, 1] + d[:, 1] + 0.5)
    tx = np.clip(np.nan_to_num(tx, nan=0.0), r, w - 1 - r).astype(np.intp)
    ty = np.clip(np.nan_to_num(ty, nan=0.0), r, h - 1 - r).astype(np.intp)
    return np.stack([tx, ty], axis=1)


def correspond(center, flow, noisy, spec: PatchSpec, blurred=None) -> PatchPair:
    """Single-patch correspondence; ``X`` is filled from ``blurred`` when given."""
    c = np.asarray(center, dtype=np.intp).reshape(1, 2)
    nc = corresponding_centers(c, flow, np.shape(noisy), spec.s2)
    Y = gather(noisy, nc, spec.s2)[0]
    pos = patch_positions(c, spec.s1)[0]
    X = gather(blurred, c, spec.s1)[0] if blurred is not None else np.zeros(spec.M)
    return PatchPair(
        center=(int(c[0, 0]), int(c[0, 1])),
        X=X,
        Y=Y,
        positions=pos,
        noisy_center=(int(nc[0, 0]), int(nc[0, 1])),
    )


def accumulate(acc: Accumulator, pair_or_positions, values=None) -> Accumulator:
    """Add patch values into the running per-pixel sum and count.

    Accepts either a :class:`PatchPair` or a positions array ``(..., 2)`` plus
    matching ``values``. Contributions are added in input order.
    """
    if isinstance(pair_or_positions, PatchPair):
        pos, values = pair_or_positions.positions, pair_or_positions.X
    else:
        pos = pair_or_positions
    pos = np.asarray(pos, dtype=np.intp).reshape(-1, 2)
    values = np.asarray(values, dtype=np.float64).ravel()
    h, w = acc.sum.shape
    flat = pos[:, 1] * w + pos[:, 0]
    acc.sum += np.bincount(flat, weights=values, minlength=h * w).reshape(h, w)
    acc.count += np.bincount(flat, minlength=h * w).reshape(h, w)
    return acc


def reassemble(acc: Accumulator) -> np.ndarray:
    """Per-pixel mean of all patch contributions."""
    if np.any(acc.count == 0):
        n = int(np.count_nonzero(acc.count == 0))
        raise CoverageError(f"{n} pixel(s) not covered by any patch; use stride <= s1")
    return acc.sum / acc.count
