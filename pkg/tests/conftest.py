import numpy as np
import pytest

from thumbforge.frame_io import make_frame


def solid(color, h=16, w=16, index=0):
    rgb = np.empty((h, w, 3))
    rgb[:] = color
    return make_frame(rgb, index)


def texture(seed=0, h=48, w=64):
    """Smooth random texture in [0, 1]; fine enough to carry edges."""
    from scipy import ndimage

    rng = np.random.default_rng(seed)
    x = ndimage.gaussian_filter(rng.uniform(size=(h, w, 3)), (1.0, 1.0, 0))
    lo, hi = x.min(), x.max()
    return (x - lo) / (hi - lo)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
