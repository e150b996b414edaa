"""Per-patch Gaussian mixture with a uniform outlier component, fit by EM.

The latent intensities ``X`` of a blurred patch are the centroids of an
``M``-component 1-D mixture; the ``K`` noisy observations ``Y`` are explained
by that mixture plus a uniform outlier term of weight ``omega``. The M-step
minimizes a data term plus a bilateral smoothness term over the patch grid
with a fixed number of gradient steps, then updates the variances in closed
form.

All functions broadcast over leading batch dimensions: ``X`` has shape
``(..., M)``, ``Y`` ``(..., K)``, posteriors ``(..., M, K)``. The batch
dimension is what the pipeline uses to process every patch of an image at
once; patches never interact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

DEGENERATE_MASS = 1e-12
_LOG_2PI = math.log(2.0 * math.pi)


class NumericalError(ArithmeticError):
    """EM state became non-finite."""


@dataclass(frozen=True)
class OgmmConfig:
    omega: float = 0.02
    lam: float = 0.775
    mu: float | None = 0.5  # None: the analytic 2*var*(1-lam)/sum(p) per component
    alpha: float = 0.1
    gd_iterations: int = 50
    em_iterations: int = 3
    sigma_init: float = 300.0
    sigma_d: float = 1.0
    sigma_l: float = 20.0
    variance_floor: float = 1e-4
    dim: int = 1

    def __post_init__(self):
        if not 0.0 <= self.omega < 1.0:
            raise ValueError(f"omega must lie in [0, 1), got {self.omega}")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lambda must lie in (0, 1], got {self.lam}")
        if self.mu is not None and self.mu < 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.gd_iterations < 0 or self.em_iterations < 0:
            raise ValueError("iteration counts must be >= 0")
        if not self.sigma_init > 0:
            raise ValueError(f"sigma_init must be > 0, got {self.sigma_init}")
        if not self.variance_floor > 0:
            raise ValueError(f"variance_floor must be > 0, got {self.variance_floor}")
        if not (self.sigma_d > 0 and self.sigma_l > 0):
            raise ValueError("sigma_d and sigma_l must be > 0")
        if self.dim != 1:
            raise ValueError("only grayscale (dim=1) is supported")


@dataclass
class GmmState:
    centroids: np.ndarray
    variances: np.ndarray
    posteriors: np.ndarray | None = None

    @classmethod
    def init(cls, X, cfg: OgmmConfig):
        X = np.array(X, dtype=np.float64)
        return cls(X, np.full_like(X, cfg.sigma_init))


@dataclass
class EmResult:
    centroids: np.ndarray
    variances: np.ndarray
    posteriors: np.ndarray
    # energies[..., i] is the negative log-likelihood after i EM rounds
    energies: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class Neighborhood:
    """8-connected neighbor table of a ``rows x cols`` patch, padded to 8."""

    index: np.ndarray  # (M, 8) neighbor indices (0 where invalid)
    valid: np.ndarray  # (M, 8) bool
    dist2: np.ndarray  # (M, 8) squared spatial distance


@lru_cache(maxsize=None)
def neighborhood(rows: int, cols: int) -> Neighborhood:
    M = rows * cols
    index = np.zeros((M, 8), dtype=np.intp)
    valid = np.zeros((M, 8), dtype=bool)
    dist2 = np.ones((M, 8))
    steps = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
    for m in range(M):
        r, c = divmod(m, cols)
        for j, (dy, dx) in enumerate(steps):
            rr, cc = r + dy, c + dx
            if 0 <= rr < rows and 0 <= cc < cols:
                index[m, j] = rr * cols + cc
                valid[m, j] = True
                dist2[m, j] = dy * dy + dx * dx
    for arr in (index, valid, dist2):
        arr.setflags(write=False)
    return Neighborhood(index, valid, dist2)


def patch_shape_for(M: int) -> tuple[int, int]:
    side = math.isqrt(M)
    return (side, side) if side * side == M else (1, M)


def _check_finite(Y):
    if not np.all(np.isfinite(Y)):
        raise ValueError("observations contain non-finite values")


def log_gaussian(X, var, Y):
    """``log N(y_k; x_m, var_m)`` with shape ``(..., M, K)``."""
    X = np.asarray(X, dtype=np.float64)[..., :, None]
    var = np.asarray(var, dtype=np.float64)[..., :, None]
    Y = np.asarray(Y, dtype=np.float64)[..., None, :]
    return -0.5 * (_LOG_2PI + np.log(var)) - (Y - X) ** 2 / (2.0 * var)


def _log_terms(X, var, Y, cfg):
    M = np.shape(X)[-1]
    K = np.shape(Y)[-1]
    log_num = math.log((1.0 - cfg.omega) / M) + log_gaussian(X, var, Y)
    peak = log_num.max(axis=-2, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    log_mix = np.log(np.exp(log_num - peak).sum(axis=-2)) + peak[..., 0, :]
    if cfg.omega > 0:
        log_den = np.logaddexp(log_mix, math.log(cfg.omega) - math.log(K))
    else:
        log_den = log_mix
    return log_num, log_den


def e_step(X, var, Y, cfg: OgmmConfig) -> np.ndarray:
    """Posterior responsibility of each Gaussian component for each observation.

    Uses the exact Bayes ratio with per-component normalizers; the shortfall
    of ``sum_m p_mk`` from one is the outlier posterior.
    """
    _check_finite(Y)
    log_num, log_den = _log_terms(X, var, Y, cfg)
    return np.exp(log_num - log_den[..., None, :])


def nll(X, var, Y, cfg: OgmmConfig) -> np.ndarray:
    """Negative log-likelihood of ``Y`` under the mixture, per patch."""
    _, log_den = _log_terms(X, var, Y, cfg)
    return -log_den.sum(axis=-1)


def bilateral_weights(X, cfg: OgmmConfig, nb: Neighborhood) -> np.ndarray:
    """Spatial times range weights for every (m, neighbor) slot, ``(..., M, 8)``."""
    X = np.asarray(X, dtype=np.float64)
    diff = X[..., :, None] - X[..., nb.index]
    w = np.exp(-nb.dist2 / (2.0 * cfg.sigma_d**2)) * np.exp(-(diff**2) / (2.0 * cfg.sigma_l**2))
    return np.where(nb.valid, w, 0.0)


def bilateral_term(X, cfg: OgmmConfig, shape=None, weights=None) -> np.ndarray:
    """Edge-aware smoothness energy, summed once per unordered neighbor pair.

    ``weights`` freezes the bilateral weights (used for gradient checks);
    by default they are evaluated at ``X``.
    """
    X = np.asarray(X, dtype=np.float64)
    nb = neighborhood(*(shape or patch_shape_for(X.shape[-1])))
    w = bilateral_weights(X, cfg, nb) if weights is None else weights
    diff = X[..., :, None] - X[..., nb.index]
    return 0.5 * (w * diff**2).sum(axis=(-2, -1))


def q_bound(X, var, Y, post, cfg: OgmmConfig) -> np.ndarray:
    """Expected complete-data energy (up to constants) for fixed posteriors."""
    X = np.asarray(X, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    sq = (Y[..., None, :] - X[..., :, None]) ** 2
    data = (post * sq / (2.0 * var[..., :, None])).sum(axis=(-2, -1))
    logv = (post.sum(axis=-1) * (cfg.dim / 2.0) * np.log(var)).sum(axis=-1)
    return data + logv


def combined_objective(X, var, Y, post, cfg: OgmmConfig, shape=None, weights=None):
    """``lam * Q + (1 - lam) * B``."""
    Q = q_bound(X, var, Y, post, cfg)
    if cfg.lam == 1.0:
        return Q
    return cfg.lam * Q + (1.0 - cfg.lam) * bilateral_term(X, cfg, shape, weights)


def bilateral_coefficient(var, post, cfg: OgmmConfig) -> np.ndarray | float:
    """Weight of the bilateral force in the centroid step.

    A fixed ``cfg.mu`` when set, else ``2 var (1 - lam) / sum_k p_mk`` (zero
    for components without posterior mass). ``lam == 1`` disables the term.
    """
    if cfg.lam == 1.0:
        return 0.0
    if cfg.mu is not None:
        return cfg.mu
    mass = post.sum(axis=-1)
    safe = np.where(mass < DEGENERATE_MASS, 1.0, mass)
    return np.where(mass < DEGENERATE_MASS, 0.0, 2.0 * var * (1.0 - cfg.lam) / safe)


def weighted_target(Y, post):
    """Posterior-weighted observation mean per component and a mask of
    components whose posterior mass is too small to define it."""
    Y = np.asarray(Y, dtype=np.float64)
    mass = post.sum(axis=-1)
    degenerate = mass < DEGENERATE_MASS
    weighted = (post * Y[..., None, :]).sum(axis=-1)
    return weighted / np.where(degenerate, 1.0, mass), degenerate


def update_direction(X, Y, post, cfg: OgmmConfig, mu, nb: Neighborhood, weights=None, target=None):
    """Bracketed step of the centroid update (before scaling by ``alpha``)."""
    X = np.asarray(X, dtype=np.float64)
    mean, degenerate = target if target is not None else weighted_target(Y, post)
    step = cfg.lam * np.where(degenerate, 0.0, mean - X)
    if np.any(mu):
        w = bilateral_weights(X, cfg, nb) if weights is None else weights
        force = (w * (X[..., :, None] - X[..., nb.index])).sum(axis=-1)
        step = step - mu * force
    return step


def m_step_centroids(X, Y, post, var, cfg: OgmmConfig, shape=None) -> np.ndarray:
    """``gd_iterations`` gradient steps on the centroids with frozen posteriors.

    Bilateral weights are re-evaluated at the current iterate on every step.
    """
    X = np.array(X, dtype=np.float64)
    nb = neighborhood(*(shape or patch_shape_for(X.shape[-1])))
    mu = bilateral_coefficient(np.asarray(var, dtype=np.float64), post, cfg)
    target = weighted_target(Y, post)
    for _ in range(cfg.gd_iterations):
        X += cfg.alpha * update_direction(X, Y, post, cfg, mu, nb, target=target)
    return X


def m_step_variance(X, Y, post, var, cfg: OgmmConfig) -> np.ndarray:
    """Posterior-weighted variance around the updated centroids, floored."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    mass = post.sum(axis=-1)
    sq = (X[..., :, None] - Y[..., None, :]) ** 2
    degenerate = mass < DEGENERATE_MASS
    new = (post * sq).sum(axis=-1) / np.where(degenerate, 1.0, mass)
    return np.where(degenerate, var, np.maximum(new, cfg.variance_floor))


def run_em(X, Y, cfg: OgmmConfig, shape=None, track_energy: bool = True) -> EmResult:
    """Fit the patch mixture for ``cfg.em_iterations`` rounds from centroids ``X``."""
    Y = np.asarray(Y, dtype=np.float64)
    _check_finite(Y)
    state = GmmState.init(X, cfg)
    x, var = state.centroids, state.variances
    energies = [nll(x, var, Y, cfg)] if track_energy else []
    post = np.zeros(x.shape + (Y.shape[-1],))
    for _ in range(cfg.em_iterations):
        post = e_step(x, var, Y, cfg)
        x = m_step_centroids(x, Y, post, var, cfg, shape)
        var = m_step_variance(x, Y, post, var, cfg)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(var))):
            raise NumericalError("non-finite centroids or variances during EM")
        if track_energy:
            energies.append(nll(x, var, Y, cfg))
    en = np.stack(energies, axis=-1) if energies else np.zeros(x.shape[:-1] + (0,))
    return EmResult(x, var, post, en)


def run_patch_em(pair, cfg: OgmmConfig) -> np.ndarray:
    """EM on one :class:`~ogmm_deblur.patching.PatchPair`; returns updated ``X``."""
    side = math.isqrt(len(pair.X))
    shape = (side, side) if side * side == len(pair.X) else None
    return run_em(pair.X, pair.Y, cfg, shape, track_energy=False).centroids


def total_energy(energies) -> float:
    """Sum of per-patch energies (zero for no patches)."""
    return float(np.sum(np.asarray(energies, dtype=np.float64)))
