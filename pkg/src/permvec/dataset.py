"""Synthetic permutation point sets.

A base vector of length ``D = S * G`` is viewed as ``S`` subvectors of length
``G``. Applying one reordering of the ``G`` positions to every subvector at
once gives an equivalent vector; the ``G!`` such images form a permutation
point set. Vectors are stored raw (integers in ``[0, max_value]``) and scaled
to ``[0, 1]`` only when fed to a model.
"""

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from permvec.core_math import Rng
from permvec.errors import DegenerateBaseError, FormatError, InvalidArgumentError

MAX_VALUE = 24
FILE_MAGIC = "permvec-dataset v1"
SPLIT_NAMES = ("train", "test", "validation")


@dataclass(frozen=True)
class DatasetConfig:
    dim: int = 24
    group: int = 4
    max_value: int = MAX_VALUE
    validation_sets: int = 1000
    train_fraction: float = 0.8

    def __post_init__(self):
        if self.group < 1 or self.dim < 1 or self.dim % self.group:
            raise InvalidArgumentError(f"dim={self.dim} is not a multiple of group={self.group}")
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidArgumentError("train_fraction must lie in (0, 1)")

    @property
    def set_size(self):
        return math.factorial(self.group)


def all_orders(group):
    """Every subvector permutation, in lexicographic order (identity first)."""
    return np.array(list(itertools.permutations(range(group))), dtype=np.int64).reshape(-1, group)


def _check_order(order, group):
    order = np.asarray(order, dtype=np.int64)
    if order.shape != (group,) or sorted(order.tolist()) != list(range(group)):
        raise InvalidArgumentError(f"{order.tolist()} is not a permutation of 0..{group - 1}")
    return order


def apply_permutation(v, order):
    """Reorder the positions of every subvector: ``out[s*G + j] = v[s*G + order[j]]``."""
    v = np.asarray(v)
    group = len(order)
    if group == 0 or v.ndim != 1 or v.size % group:
        raise InvalidArgumentError(f"vector of length {v.size} has no subvectors of length {group}")
    order = _check_order(order, group)
    return v.reshape(-1, group)[:, order].reshape(-1)


def inverse_order(order):
    return np.argsort(np.asarray(order, dtype=np.int64))


def expand_point_set(base, group=4):
    """All ``G!`` consistent-permutation images of ``base`` as a ``(G!, D)`` array.

    Raises DegenerateBaseError when two images coincide, which happens exactly
    when two subvector columns are equal in every subvector.
    """
    base = np.asarray(base)
    if base.ndim != 1 or base.size % group:
        raise InvalidArgumentError(f"vector of length {base.size} has no subvectors of length {group}")
    cols = base.reshape(-1, group)
    members = cols[:, all_orders(group)]  # (S, G!, G)
    members = members.transpose(1, 0, 2).reshape(-1, base.size)
    if len(np.unique(members, axis=0)) != len(members):
        raise DegenerateBaseError("base vector has repeated subvector columns")
    return members


def canonical_form(v, group=4):
    """Orbit representative with columns (read as S-tuples) sorted lexicographically.

    This is also the lexicographic minimum of the flat vectors in the orbit.
    """
    v = np.asarray(v)
    cols = v.reshape(-1, group)
    # lexsort treats its last key as primary; row 0 must dominate
    order = np.lexsort(cols[::-1])
    return cols[:, order].reshape(-1)


def scale(v, max_value=MAX_VALUE):
    v = np.asarray(v)
    if v.size and (v.min() < 0 or v.max() > max_value):
        raise InvalidArgumentError(f"values must lie in [0, {max_value}]")
    return v.astype(np.float64) / float(max_value)


def unscale(x, max_value=MAX_VALUE):
    return np.rint(np.asarray(x) * float(max_value)).astype(np.int64)


@dataclass
class PointSets:
    """A collection of permutation point sets.

    ``vectors[i, k]`` is member ``k`` of the set with id ``set_ids[i]``.
    """

    set_ids: np.ndarray
    vectors: np.ndarray  # (n_sets, G!, D), raw integers

    def __post_init__(self):
        self.set_ids = np.asarray(self.set_ids, dtype=np.int64)
        self.vectors = np.asarray(self.vectors, dtype=np.int64)
        if self.vectors.ndim != 3 or len(self.set_ids) != len(self.vectors):
            raise InvalidArgumentError("vectors must be (n_sets, set_size, dim) with one id per set")

    def __len__(self):
        return len(self.set_ids)

    @property
    def set_size(self):
        return self.vectors.shape[1]

    @property
    def dim(self):
        return self.vectors.shape[2]

    @property
    def n_vectors(self):
        return self.vectors.shape[0] * self.vectors.shape[1]

    def flat(self):
        return self.vectors.reshape(-1, self.dim)

    def scaled(self, max_value=MAX_VALUE):
        return scale(self.flat(), max_value)

    def flat_set_ids(self):
        return np.repeat(self.set_ids, self.set_size)

    def flat_member_index(self):
        return np.tile(np.arange(self.set_size), len(self))


@dataclass
class DatasetSplits:
    train: PointSets
    test: PointSets
    validation: PointSets
    config: DatasetConfig = field(default_factory=DatasetConfig)
    seed: int = 0

    @property
    def scaling(self):
        return float(self.config.max_value)

    def split(self, name):
        if name not in SPLIT_NAMES:
            raise InvalidArgumentError(f"unknown split {name!r}")
        return getattr(self, name)


def split_sizes(n_sets, validation_sets, train_fraction=0.8):
    rest = n_sets - validation_sets
    n_train = int(round(train_fraction * rest))
    return n_train, rest - n_train, validation_sets


def generate_dataset(n_sets, rng, config=None):
    """Draw ``n_sets`` mutually inequivalent, non-degenerate bases and split them.

    Elements are uniform integers on ``[0, max_value]``. The first
    ``validation_sets`` bases go to validation; the rest are split
    ``train_fraction`` / remainder into train and test.
    """
    config = config or DatasetConfig()
    if config.validation_sets < 0 or n_sets < config.validation_sets + 2:
        raise InvalidArgumentError(
            f"need at least validation_sets + 2 = {config.validation_sets + 2} sets, got {n_sets}"
        )
    n_train, n_test, n_val = split_sizes(n_sets, config.validation_sets, config.train_fraction)
    if n_train < 1 or n_test < 1:
        raise InvalidArgumentError(f"{n_sets} sets leave an empty train or test split")

    seen = set()
    sets = []
    while len(sets) < n_sets:
        # draw in blocks; rejection is rare so one block is usually enough
        block = rng.integers(0, config.max_value + 1, size=(n_sets - len(sets), config.dim))
        for base in block:
            key = canonical_form(base, config.group).tobytes()
            if key in seen:
                continue
            try:
                members = expand_point_set(base, config.group)
            except DegenerateBaseError:
                continue
            seen.add(key)
            sets.append(members)

    vectors = np.stack(sets)
    ids = np.arange(n_sets)
    val = slice(0, n_val)
    train = slice(n_val, n_val + n_train)
    test = slice(n_val + n_train, n_sets)
    return DatasetSplits(
        train=PointSets(ids[train], vectors[train]),
        test=PointSets(ids[test], vectors[test]),
        validation=PointSets(ids[val], vectors[val]),
        config=config,
        seed=rng.seed,
    )


def write_split(path, sets, group, seed):
    """Write one split: a header line, then ``set_id,member_index,v0,...`` rows."""
    path = Path(path)
    header = f"{FILE_MAGIC}, D={sets.dim}, G={group}, sets={len(sets)}, seed={seed}\n"
    rows = np.column_stack([sets.flat_set_ids(), sets.flat_member_index(), sets.flat()])
    with open(path, "w", newline="\n") as fh:
        fh.write(header)
        for row in rows:
            fh.write(",".join(map(str, row.tolist())))
            fh.write("\n")


def _parse_header(line, path):
    parts = [p.strip() for p in line.strip().split(",")]
    if not parts or parts[0] != FILE_MAGIC:
        raise FormatError(f"{path}: not a permvec dataset file", field="header")
    meta = {}
    for p in parts[1:]:
        key, sep, value = p.partition("=")
        if not sep:
            raise FormatError(f"{path}: malformed header entry {p!r}", field="header")
        try:
            meta[key] = int(value)
        except ValueError:
            raise FormatError(f"{path}: non-integer header value {p!r}", field=key) from None
    for key in ("D", "G", "sets", "seed"):
        if key not in meta:
            raise FormatError(f"{path}: header lacks {key}", field=key)
    return meta


def read_split(path):
    """Read a split file; returns ``(PointSets, header dict)``."""
    path = Path(path)
    with open(path) as fh:
        meta = _parse_header(fh.readline(), path)
        try:
            rows = np.loadtxt(fh, delimiter=",", dtype=np.int64, ndmin=2)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}", field="rows") from None
    dim, set_size = meta["D"], math.factorial(meta["G"])
    n = meta["sets"]
    if rows.shape != (n * set_size, dim + 2):
        raise FormatError(f"{path}: expected {n * set_size} rows of {dim + 2} columns, got {rows.shape}", field="rows")
    ids = rows[::set_size, 0]
    if not (rows[:, 0] == np.repeat(ids, set_size)).all():
        raise FormatError(f"{path}: set members are not contiguous", field="set_id")
    if not (rows[:, 1] == np.tile(np.arange(set_size), n)).all():
        raise FormatError(f"{path}: member indices out of order", field="member_index")
    return PointSets(ids, rows[:, 2:].reshape(n, set_size, dim)), meta


def save_dataset(splits, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in SPLIT_NAMES:
        write_split(out_dir / f"{name}.csv", splits.split(name), splits.config.group, splits.seed)


def load_dataset(data_dir):
    data_dir = Path(data_dir)
    loaded = {}
    meta = None
    for name in SPLIT_NAMES:
        path = data_dir / f"{name}.csv"
        if not path.exists():
            raise FileNotFoundError(f"missing dataset file {path}")
        loaded[name], meta = read_split(path)
    n_val = len(loaded["validation"])
    config = DatasetConfig(dim=meta["D"], group=meta["G"], validation_sets=n_val)
    return DatasetSplits(config=config, seed=meta["seed"], **loaded)
