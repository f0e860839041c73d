import pytest

# The dataset fixtures are produced through the primary pipeline's
# public artifact formats; the trainer package itself never imports it.
from skyfit.dataset import build_dataset, synthesize_training_pano
from skyfit.fitting import FitResult


def make_dataset(out_dir, n_panos=8, seed=2, split_fracs=(0.75, 0.125, 0.125),
                 first_seed=1000):
    """Small dataset with ground-truth parameters standing in for fits."""
    items = []
    for i in range(n_panos):
        pano, params = synthesize_training_pano(first_seed + i, width=128)
        fit = FitResult(params=params, residual_rmse=0.0, per_start=[],
                        sun_detection={}, converged=True)
        items.append((f"p{i:03d}", pano, fit))
    return build_dataset(items, out_dir, seed=seed, split_fracs=split_fracs)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("trainer_ds")
    make_dataset(out)
    return out
