import numpy as np
import pytest

from skyfit import sky_model
from skyfit.geometry import Panorama


def make_sky_pano(turbidity, elevation, azimuth=20.0, exposure=1.0,
                  width=256, quantize=False, sun=True, supersample=True,
                  gamma=2.2):
    """Synthetic gamma-encoded LDR panorama with a top-half sky mask."""
    params = sky_model.SkyParams(
        sun_dir=sky_model.sun_dir_from_angles(elevation, azimuth),
        turbidity=turbidity,
        exposure=exposure,
    )
    env = sky_model.render_envmap(params, width, width // 2,
                                  sun=sun, supersample=supersample)
    ldr = np.clip(np.power(env.pixels, 1.0 / gamma), 0.0, 1.0)
    if quantize:
        ldr = np.round(ldr * 255.0) / 255.0
    mask = np.zeros(ldr.shape[:2], dtype=bool)
    mask[: ldr.shape[0] // 2] = True
    return Panorama(ldr, mask), params


@pytest.fixture(scope="session")
def clear_pano():
    return make_sky_pano(2.0, 40.0, 10.0)
