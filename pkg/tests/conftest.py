import pytest

from permvec.core_math import Rng
from permvec.dataset import DatasetConfig, generate_dataset

DESK_SEED = 7


@pytest.fixture(scope="session")
def desk_splits():
    return generate_dataset(4000, Rng(DESK_SEED), DatasetConfig())


@pytest.fixture
def small_splits():
    return generate_dataset(12, Rng(3), DatasetConfig(validation_sets=2))


DESK_TRAIN_SEED = 1
# the enhanced clustering check trains for this many passes over the training vectors
DESK_PASSES = 1200


@pytest.fixture(scope="session")
def desk_run(desk_splits):
    """``desk_run(alpha)`` -> (params, log) for a desk-scale run, cached per alpha."""
    from permvec.training import TrainingConfig, train

    cache = {}

    def run(alpha=None, steps=2000, eval_every=10):
        key = (alpha, steps, eval_every)
        if key not in cache:
            cfg = TrainingConfig(batch_size=1024, steps=steps, alpha=alpha, seed=DESK_TRAIN_SEED,
                                 eval_every=eval_every, record_time=False)
            cache[key] = train(desk_splits, cfg)
        return cache[key]

    return run
