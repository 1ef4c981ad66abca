import numpy as np
import pytest

from sketchcbr.cases import ingest_dataset
from sketchcbr.synthetic import make_dataset, write_dataset

SMALL_W, SMALL_H = 80, 100


@pytest.fixture(scope="session")
def small_manifest(tmp_path_factory):
    """12 synthetic pairs at 80x100 on disk."""
    out = tmp_path_factory.mktemp("small")
    return write_dataset(out, make_dataset(n=12, seed=3, width=SMALL_W, height=SMALL_H))


@pytest.fixture(scope="session")
def small_lib(small_manifest):
    return ingest_dataset(small_manifest)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def quick_config():
    from sketchcbr.config import PipelineConfig

    return PipelineConfig(max_iters=4, zoo=("M4", "M10", "M12"), max_features=5, sharpen_levels=2)


@pytest.fixture(scope="session")
def quick_models(small_lib, quick_config):
    from sketchcbr.evaluation import generate_all_samples, train_all

    return train_all(generate_all_samples(small_lib, quick_config), quick_config)
