import os

# pin BLAS pools before numpy loads anywhere: small work units, and
# fixed threads keep bit-reproducibility contracts meaningful
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")

import numpy as np
import pytest

from blurkit.blur import DatasetManifest, generate_dataset


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """16/4 sample 64x64 motion-blur dataset shared across tests."""
    root = tmp_path_factory.mktemp("data") / "ds"
    manifest = DatasetManifest(train_count=16, val_count=4, patch=64, seed=11)
    generate_dataset(manifest, root)
    return root


def randomize_gates(module, seed=0, scale=0.2):
    """Give zero-init residual gates random values so blocks act."""
    prng = np.random.default_rng(seed)
    for name, p in module.named_parameters():
        if name.endswith(("beta", "gamma", "out_scale")):
            p.data = (scale * prng.standard_normal(p.data.shape)).astype(p.data.dtype)
    return module
