import numpy as np
import pytest

from conftest import make_sky_pano
from skyfit import fitting, geometry, sky_model
from skyfit.fitting import (FitConfig, detect_sun_position, fit_sky_params,
                            lsq_minimize, residuals, solve_exposure)
from skyfit.geometry import Panorama, angular_error
from skyfit.sky_model import SkyParams, sun_dir_from_angles


def test_detect_on_clear_sky(clear_pano):
    pano, truth = clear_pano
    d, info = detect_sun_position(pano)
    assert angular_error(d, truth.sun_dir) < 2.0
    assert info["threshold_percentile"] == 98.0
    assert info["component_size"] > 0


def test_detect_empty_mask():
    pano = Panorama(np.full((16, 32, 3), 0.5),
                    np.zeros((16, 32), dtype=bool))
    with pytest.raises(ValueError, match="no sky pixels"):
        detect_sun_position(pano)


def test_detect_prefers_dominant_blob():
    pixels = np.full((32, 64, 3), 0.1)
    pixels[4:8, 10:14] = 1.0     # large bright blob
    pixels[6, 50] = 0.9          # small dimmer blob
    mask = np.zeros((32, 64), dtype=bool)
    mask[:16] = True
    d, _ = detect_sun_position(Panorama(pixels, mask))
    blob_dir = geometry.pixel_to_direction(11.5, 5.5, 64, 32)
    far_dir = geometry.pixel_to_direction(50.0, 6.0, 64, 32)
    assert angular_error(d, blob_dir) < 15.0
    assert angular_error(d, blob_dir) < angular_error(d, far_dir)


def test_solve_exposure_exact_recovery():
    # panorama built as exactly omega * model, then de-linearized
    omega0 = 1.3
    sun = sun_dir_from_angles(40.0, 0.0)
    params = SkyParams(sun_dir=sun, turbidity=3.0, exposure=omega0)
    env = sky_model.render_envmap(params, 128, 64, sun=False)
    pano = Panorama(np.power(env.pixels, 1 / 2.2))
    mask = np.zeros((64, 128), dtype=bool)
    mask[:32] = True
    omega = solve_exposure(pano, mask, 3.0, sun)
    assert abs(omega / omega0 - 1) < 1e-9


def test_solve_exposure_black_input():
    pano = Panorama(np.zeros((32, 64, 3)))
    mask = np.zeros((32, 64), dtype=bool)
    mask[:16] = True
    assert solve_exposure(pano, mask, 2.0, sun_dir_from_angles(45.0, 0.0)) == 0.0


def test_solve_exposure_quantized():
    pano, truth = make_sky_pano(3.0, 40.0, 0.0, exposure=1.0, quantize=True,
                                sun=False)
    omega = solve_exposure(pano, pano.sky_mask, 3.0, truth.sun_dir)
    assert abs(omega - 1.0) <= 0.05


def test_residuals_zero_at_truth():
    pano, truth = make_sky_pano(4.0, 35.0, -60.0, exposure=1.3, sun=False)
    r = residuals(truth, pano)
    assert np.abs(r).max() <= 1e-7


def test_residuals_ordering_and_omega_linearity():
    pano, truth = make_sky_pano(4.0, 35.0, -60.0, sun=False, width=64)
    mask = pano.sky_mask
    r1 = residuals(truth, pano)
    assert r1.shape == (3 * mask.sum(),)
    double = SkyParams(sun_dir=truth.sun_dir, turbidity=truth.turbidity,
                       exposure=2 * truth.exposure)
    r2 = residuals(double, pano)
    # doubling omega subtracts one extra omega*f per entry
    cos_theta, gamma_sun = fitting._masked_geometry(pano, mask, truth.sun_dir)
    f = fitting._model_rgb(cos_theta, gamma_sun, truth.turbidity,
                           np.arcsin(truth.sun_dir[1]))
    assert np.allclose(r2, r1 - truth.exposure * f.ravel(), atol=1e-12)


def test_cost_minimized_at_true_turbidity():
    pano, truth = make_sky_pano(5.0, 45.0, 20.0, sun=False, width=128)

    def cost(t):
        p = SkyParams(sun_dir=truth.sun_dir, turbidity=t,
                      exposure=truth.exposure)
        r = residuals(p, pano)
        return float(r @ r)

    assert cost(truth.turbidity) <= cost(truth.turbidity - 1.0)
    assert cost(truth.turbidity) <= cost(truth.turbidity + 1.0)


def test_lsq_minimize_rosenbrock():
    def rosen(x):
        return np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]])

    x, cost, n_iter, converged = lsq_minimize(
        rosen, [-1.2, 1.0], ([-2.0, -2.0], [2.0, 2.0]), max_iters=500)
    assert converged
    assert np.allclose(x, [1.0, 1.0], atol=1e-6)
    assert cost < 1e-12


def test_lsq_minimize_active_bound():
    x, _, _, _ = lsq_minimize(lambda x: x - 3.0, [1.0], ([0.0], [2.0]))
    assert np.isclose(x[0], 2.0, atol=1e-8)


def test_lsq_minimize_x0_outside_bounds():
    with pytest.raises(ValueError):
        lsq_minimize(lambda x: x, [5.0], ([0.0], [2.0]))


def test_fit_round_trip_reference_case():
    pano, truth = make_sky_pano(4.5, 35.0, -60.0, exposure=1.3)
    result = fit_sky_params(pano)
    assert angular_error(result.params.sun_dir, truth.sun_dir) <= 0.5
    assert abs(result.params.turbidity - 4.5) <= 0.1
    assert abs(result.params.exposure / 1.3 - 1) <= 0.01
    assert result.converged
    assert len(result.per_start) == 10


def test_fit_turbidity_upper_bound():
    pano, truth = make_sky_pano(10.0, 45.0, 0.0)
    result = fit_sky_params(pano)
    assert 1.0 <= result.params.turbidity <= 10.0
    assert abs(result.params.turbidity - 10.0) <= 0.5


def test_fit_empty_mask():
    pano = Panorama(np.full((16, 32, 3), 0.5),
                    np.zeros((16, 32), dtype=bool))
    with pytest.raises(ValueError):
        fit_sky_params(pano)


def test_fit_deterministic():
    pano, _ = make_sky_pano(3.0, 50.0, 80.0, width=128)
    a = fit_sky_params(pano)
    b = fit_sky_params(pano)
    assert np.array_equal(a.params.sun_dir, b.params.sun_dir)
    assert a.params.turbidity == b.params.turbidity
    assert a.params.exposure == b.params.exposure
    assert a.residual_rmse == b.residual_rmse


def test_fit_result_json(tmp_path):
    pano, _ = make_sky_pano(2.0, 40.0, 10.0, width=128)
    result = fit_sky_params(pano)
    path = tmp_path / "fit.json"
    result.save_json(path)
    import json
    d = json.loads(path.read_text())
    for key in ("sun_elevation_deg", "sun_azimuth_deg", "turbidity",
                "exposure", "residual_rmse", "converged", "per_start"):
        assert key in d
    assert len(d["per_start"]) == 10


def test_fallback_mask_used_when_absent():
    pano, truth = make_sky_pano(2.0, 40.0, 10.0)
    bare = Panorama(pano.pixels)  # no mask supplied
    d, _ = detect_sun_position(bare)
    assert angular_error(d, truth.sun_dir) < 5.0


def test_fit_config_validation():
    with pytest.raises(ValueError):
        FitConfig(gamma=0.0)
    with pytest.raises(ValueError):
        FitConfig(sun_percentile=100.0)
