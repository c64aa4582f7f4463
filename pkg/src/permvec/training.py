"""Training loops for the standard and triplet-enhanced autoencoders."""

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from permvec.core_math import Rng
from permvec.dataset import DatasetSplits, PointSets
from permvec.errors import FormatError, InvalidArgumentError, InvalidStateError
from permvec.losses import LossValue, batch_numeric_accuracy, mse_loss, triplet_loss
from permvec.model import autoencoder_specs, backward, forward, init_params

log = logging.getLogger(__name__)

BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8
LOG_COLUMNS = ("step", "split", "mse", "triplet", "total", "numeric_accuracy", "seconds")
METRICS = ("mse", "triplet", "total", "numeric_accuracy")


@dataclass
class TrainingConfig:
    batch_size: int = 5000
    steps: int = 1200
    learning_rate: float = 0.001
    alpha: float | None = None
    mse_weight: float = 1.0
    triplet_weight: float = 1.0
    seed: int = 0
    steady_window: tuple = (600, 1000)
    eval_every: int = 10
    dims: tuple = (24, 16, 8)
    record_time: bool = True

    def validate(self):
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be >= 1")
        if self.steps < 1:
            raise InvalidArgumentError("steps must be >= 1")
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be > 0")
        if self.alpha is not None and not self.alpha > 0:
            raise InvalidArgumentError("alpha must be > 0")
        if self.eval_every < 1:
            raise InvalidArgumentError("eval_every must be >= 1")


@dataclass
class LogRecord:
    step: int
    split: str
    mse: float
    triplet: float
    total: float
    numeric_accuracy: float
    seconds: float


@dataclass
class TrainingLog:
    records: list = field(default_factory=list)

    def add(self, step, split, value, seconds):
        self.records.append(LogRecord(step, split, value.mse, value.triplet, value.total,
                                      value.numeric_accuracy, seconds))

    def series(self, metric, split="train"):
        rows = [r for r in self.records if r.split == split]
        return np.array([r.step for r in rows]), np.array([getattr(r, metric) for r in rows])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for r in self.records:
                w.writerow([r.step, r.split, repr(r.mse), repr(r.triplet), repr(r.total),
                            repr(r.numeric_accuracy), f"{r.seconds:.3f}"])

    @classmethod
    def from_csv(cls, path):
        out = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != LOG_COLUMNS:
                raise FormatError(f"{path}: expected header {','.join(LOG_COLUMNS)}", field="header")
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(LOG_COLUMNS):
                    raise FormatError(f"{path}:{lineno}: expected {len(LOG_COLUMNS)} columns", field="row")
                try:
                    out.records.append(LogRecord(int(row[0]), row[1], *map(float, row[2:])))
                except ValueError as exc:
                    raise FormatError(f"{path}:{lineno}: {exc}", field="row") from None
        return out


def _train_sets(data):
    if isinstance(data, DatasetSplits):
        return data.train
    if isinstance(data, PointSets):
        return data
    raise InvalidArgumentError("expected DatasetSplits or PointSets")


def sample_triplets(data, rng):
    """One anchor-once pass of triplets over a split, as an ``(N, 3)`` index array.

    Indices address the flattened split (``set_position * set_size + member``).
    Anchors appear in shuffled order, each vector exactly once. The positive is
    uniform over the anchor's other members; the negative is a uniform member
    of a uniformly chosen different set.
    """
    sets = _train_sets(data)
    n_sets, m = len(sets), sets.set_size
    if n_sets < 2:
        raise InvalidArgumentError("triplet sampling needs at least two point sets")
    if m < 2:
        raise InvalidArgumentError("triplet sampling needs at least two members per set")
    n = n_sets * m
    anchors = rng.permutation(n)
    a_set, a_mem = np.divmod(anchors, m)
    p_mem = (a_mem + rng.integers(1, m, size=n)) % m
    n_set = (a_set + rng.integers(1, n_sets, size=n)) % n_sets
    n_mem = rng.integers(0, m, size=n)
    return np.column_stack([anchors, a_set * m + p_mem, n_set * m + n_mem])


def adam_step(params, grads, lr, beta1=BETA1, beta2=BETA2, eps=ADAM_EPS):
    """One bias-corrected Adam update, applied in place. Returns ``params``."""
    if len(grads.weights) != len(params.weights) or len(grads.biases) != len(params.biases):
        raise InvalidStateError("gradient layer count does not match parameters")
    params.step += 1
    t = params.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    groups = [(params.weights, params.m_w, params.v_w, grads.weights),
              (params.biases, params.m_b, params.v_b, grads.biases)]
    for ps, ms, vs, gs in groups:
        for p, m, v, g in zip(ps, ms, vs, gs):
            if g.shape != p.shape:
                raise InvalidStateError(f"gradient shape {g.shape} does not match parameter {p.shape}")
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * (g * g)
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params


class _PassStream:
    """Fixed-size batches drawn from back-to-back shuffled passes."""

    def __init__(self, make_pass):
        self._make_pass = make_pass
        self._buf = make_pass()

    def take(self, k):
        while len(self._buf) < k:
            self._buf = np.concatenate([self._buf, self._make_pass()])
        out, self._buf = self._buf[:k], self._buf[k:]
        return out


def _standard_eval(params, x, cfg):
    trace = forward(params, x)
    mse, _ = mse_loss(trace.reconstruction, x)
    acc = batch_numeric_accuracy(trace.reconstruction, x)
    return LossValue(mse, 0.0, cfg.mse_weight * mse, acc)


def _enhanced_eval(params, x, triplets, cfg):
    value, _ = enhanced_loss(params, x, triplets, cfg, need_grad=False)
    return value


def standard_loss(params, xb, cfg):
    """Reconstruction objective on a batch: ``(LossValue, Gradients)``."""
    trace = forward(params, xb)
    mse, g = mse_loss(trace.reconstruction, xb)
    acc = batch_numeric_accuracy(trace.reconstruction, xb)
    grads = backward(params, [trace], [(g * cfg.mse_weight, None)])
    return LossValue(mse, 0.0, cfg.mse_weight * mse, acc), grads


def enhanced_loss(params, x, triplets, cfg, need_grad=True):
    """Mean branch MSE plus weighted triplet loss for ``(n, 3)`` triplet indices into ``x``.

    Returns ``(LossValue, Gradients or None)``.
    """
    n = len(triplets)
    # the three branches share weights, so they run as one stacked batch
    xs = x[triplets.T.reshape(-1)]
    trace = forward(params, xs)
    recon, emb = trace.reconstruction, trace.embedding
    branch_mse = []
    d_recon = np.empty_like(recon)
    for k in range(3):
        sl = slice(k * n, (k + 1) * n)
        val, g = mse_loss(recon[sl], xs[sl])
        branch_mse.append(val)
        d_recon[sl] = g * (cfg.mse_weight / 3.0)
    mse = sum(branch_mse) / 3.0
    trip, (g_a, g_p, g_n) = triplet_loss(emb[:n], emb[n:2 * n], emb[2 * n:], cfg.alpha)
    acc = batch_numeric_accuracy(recon, xs)
    value = LossValue(mse, trip, cfg.mse_weight * mse + cfg.triplet_weight * trip, acc)
    if not need_grad:
        return value, None
    d_embed = np.concatenate([g_a, g_p, g_n]) * cfg.triplet_weight
    return value, backward(params, [trace], [(d_recon, d_embed)])


def _setup(splits, config):
    config.validate()
    rng = Rng(config.seed)
    init_rng, sched_rng, eval_rng = rng.split(), rng.split(), rng.split()
    specs, n_enc = autoencoder_specs(config.dims)
    if specs[0].in_dim != splits.train.dim:
        raise InvalidArgumentError(f"model input {specs[0].in_dim} does not match data dim {splits.train.dim}")
    params = init_params(init_rng, specs, n_enc)
    return params, sched_rng, eval_rng


def _clock(config):
    start = time.perf_counter()
    return (lambda: time.perf_counter() - start) if config.record_time else (lambda: 0.0)


def train_standard(splits, config, callback=None):
    """Minimise reconstruction MSE only. Returns ``(params, TrainingLog)``.

    ``callback(step, params)``, if given, runs after every update.
    """
    if config.alpha is not None:
        raise InvalidArgumentError("standard training takes no triplet margin")
    params, sched_rng, _ = _setup(splits, config)
    x_train = splits.train.scaled(splits.scaling)
    x_test = splits.test.scaled(splits.scaling)
    stream = _PassStream(lambda: sched_rng.permutation(len(x_train)))
    tlog = TrainingLog()
    elapsed = _clock(config)
    for step in range(config.steps):
        if step % config.eval_every == 0 or step == config.steps - 1:
            tlog.add(step, "test", _standard_eval(params, x_test, config), elapsed())
        value, grads = standard_loss(params, x_train[stream.take(config.batch_size)], config)
        adam_step(params, grads, config.learning_rate)
        tlog.add(step, "train", value, elapsed())
        if step % 100 == 0:
            log.debug("step %d mse %.6f acc %.4f", step, value.mse, value.numeric_accuracy)
        if callback is not None:
            callback(step, params)
    return params, tlog


def train_enhanced(splits, config, callback=None):
    """Minimise mean branch MSE plus the triplet loss. Returns ``(params, TrainingLog)``.

    ``callback(step, params)``, if given, runs after every update.
    """
    if config.alpha is None:
        raise InvalidArgumentError("enhanced training needs a triplet margin alpha")
    params, sched_rng, eval_rng = _setup(splits, config)
    x_train = splits.train.scaled(splits.scaling)
    x_test = splits.test.scaled(splits.scaling)
    test_triplets = sample_triplets(splits.test, eval_rng)
    stream = _PassStream(lambda: sample_triplets(splits.train, sched_rng))
    tlog = TrainingLog()
    elapsed = _clock(config)
    for step in range(config.steps):
        if step % config.eval_every == 0 or step == config.steps - 1:
            tlog.add(step, "test", _enhanced_eval(params, x_test, test_triplets, config), elapsed())
        value, grads = enhanced_loss(params, x_train, stream.take(config.batch_size), config)
        adam_step(params, grads, config.learning_rate)
        tlog.add(step, "train", value, elapsed())
        if step % 100 == 0:
            log.debug("step %d mse %.6f triplet %.6f", step, value.mse, value.triplet)
        if callback is not None:
            callback(step, params)
    return params, tlog


def train(splits, config, callback=None):
    return (train_standard if config.alpha is None else train_enhanced)(splits, config, callback)


def steady_state_stats(tlog, window, split="train"):
    """Mean and population standard deviation of each metric over ``window`` (inclusive)."""
    lo, hi = window
    out = {}
    for metric in METRICS:
        steps, values = tlog.series(metric, split)
        sel = values[(steps >= lo) & (steps <= hi)]
        if sel.size == 0:
            raise InvalidArgumentError(f"no {split} records in step window [{lo}, {hi}]")
        mean = float(np.mean(sel))
        out[metric] = (mean, float(math.sqrt(np.mean((sel - mean) ** 2))))
    return out
