import pytest

from sqseg.nn import build_efficient_unet, init_weights, save_weights

SMALL_FACTORS = (0.25, 0.5)


@pytest.fixture(scope="session")
def small_weights_path(tmp_path_factory):
    """One tiny deterministic weight container shared by CLI/service tests."""
    path = tmp_path_factory.mktemp("weights") / "small.eunw"
    save_weights(init_weights(build_efficient_unet(SMALL_FACTORS), seed=5), path)
    return path
