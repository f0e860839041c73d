import numpy as np
import pytest

from skyfit import hosek

UP = np.array([0.0, 1.0, 0.0])


def sun_at(elev_deg):
    e = np.radians(elev_deg)
    return np.array([0.0, np.sin(e), np.cos(e)])


def test_table_shapes():
    params, radiances = hosek._tables()
    assert params.shape == (3, 2, 10, 6, 9)
    assert radiances.shape == (3, 2, 10, 6)
    assert np.isfinite(params).all() and np.isfinite(radiances).all()


def test_state_validation():
    with pytest.raises(ValueError):
        hosek.sky_state(0.5, 0.3, 0.5)
    with pytest.raises(ValueError):
        hosek.sky_state(2.0, 1.5, 0.5)
    with pytest.raises(ValueError):
        hosek.sky_state(2.0, 0.3, -0.1)


def test_zenith_is_blue_for_clear_sky():
    rgb = hosek.sky_radiance_rgb(UP, 2.0, sun_at(45.0), 0.3)
    assert rgb[2] > rgb[1] > rgb[0] > 0


def test_turbidity_interpolation_continuity():
    # crossing an integer turbidity must not jump
    lo = hosek.sky_radiance_rgb(UP, 3.0 - 1e-9, sun_at(40.0), 0.3)
    hi = hosek.sky_radiance_rgb(UP, 3.0 + 1e-9, sun_at(40.0), 0.3)
    assert np.allclose(lo, hi, rtol=1e-6)


def test_circumsolar_brightening():
    sun = sun_at(45.0)
    near = hosek.sky_radiance_rgb(sun, 2.0, sun, 0.3)
    e = np.radians(45.0)
    away = np.array([np.sin(np.radians(30.0)) * np.cos(e),
                     np.sin(e),
                     np.cos(np.radians(30.0)) * np.cos(e)])
    away /= np.linalg.norm(away)
    off = hosek.sky_radiance_rgb(away, 2.0, sun, 0.3)
    assert (near > off).all()


def test_below_horizon_rejected():
    with pytest.raises(ValueError):
        hosek.sky_radiance_rgb(np.array([0.0, -0.5, 0.87]), 2.0, sun_at(45.0), 0.3)


def test_radiance_non_negative_over_grid():
    dirs = []
    for elev in (1.0, 20.0, 45.0, 70.0, 89.0):
        for az in range(0, 360, 45):
            e, a = np.radians(elev), np.radians(az)
            dirs.append([np.cos(e) * np.sin(a), np.sin(e), np.cos(e) * np.cos(a)])
    dirs = np.array(dirs)
    for t in (1.0, 2.5, 5.0, 7.5, 10.0):
        for s in (5.0, 45.0, 85.0):
            rgb = hosek.sky_radiance_rgb(dirs, t, sun_at(s), 0.3)
            assert np.isfinite(rgb).all() and (rgb >= 0).all()


def test_clear_vs_hazy_zenith_fixture():
    # regression fixture: hazy skies dim and desaturate the zenith
    clear = hosek.sky_radiance_rgb(UP, 2.0, sun_at(45.0), 0.3)
    hazy = hosek.sky_radiance_rgb(UP, 9.0, sun_at(45.0), 0.3)
    assert clear[2] > 0 and hazy[2] > 0
    ratio_blue_red_clear = clear[2] / clear[0]
    ratio_blue_red_hazy = hazy[2] / hazy[0]
    assert ratio_blue_red_clear > ratio_blue_red_hazy
