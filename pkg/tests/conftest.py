import numpy as np
import pytest
from scipy import ndimage

from ogmm_deblur.blur_synth import add_gaussian_noise, apply_scene, preset_scene, two_view_pair


def textured(shape, seed=0, smooth=2.0):
    """Band-limited random texture stretched to 0..255."""
    rng = np.random.default_rng(seed)
    img = ndimage.gaussian_filter(rng.uniform(0, 255, shape), smooth)
    img -= img.min()
    return img * (255.0 / img.max())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synthetic_pair():
    """128x128 two-view pair moved by (2, 1) px, BlurType1 on view A, sigma=10 noise on view B."""
    sharp_a, sharp_b, gt = two_view_pair((128, 128), shift=(2, 1), seed=0)
    blurred = apply_scene(sharp_a, preset_scene(1, sharp_a.shape))
    noisy = add_gaussian_noise(sharp_b, 10.0, seed=1)
    return dict(sharp=sharp_a, sharp_b=sharp_b, gt=gt, blurred=blurred, noisy=noisy)
