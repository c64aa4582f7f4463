"""Cluster-separation statistics for permutation point sets.

For each set ``i`` the centroid is the mean of its members and ``d_max_i`` is
the largest euclidean distance from a member to that centroid. ``D_ij`` is
the euclidean distance between the centroids of sets ``i`` and ``j``. The
separation ratio compares the 5th percentile of ``D_ij`` with twice the
largest ``d_max_i``; values above 1 mean the sets form discernible clusters.
"""

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from permvec.errors import InvalidArgumentError
from permvec.model import encode

N_BINS = 1000
CDF_LEVEL = 0.05
DISCERNIBLE = "discernible"
NOT_DISCERNIBLE = "not discernible"


@dataclass
class EmbeddingSet:
    set_ids: np.ndarray       # (N,)
    member_index: np.ndarray  # (N,)
    embeddings: np.ndarray    # (N, k)

    def __post_init__(self):
        self.set_ids = np.asarray(self.set_ids, dtype=np.int64)
        self.member_index = np.asarray(self.member_index, dtype=np.int64)
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        if self.embeddings.ndim != 2 or not (len(self.set_ids) == len(self.member_index) == len(self.embeddings)):
            raise InvalidArgumentError("set_ids, member_index and embeddings must align")

    @classmethod
    def from_point_sets(cls, sets, values):
        """Pair flattened per-vector ``values`` (N, k) with a PointSets' labels."""
        return cls(sets.flat_set_ids(), sets.flat_member_index(), values)

    def grouped(self):
        """``(unique set ids, (n_sets, set_size, k) array)`` ordered by set id, then member."""
        order = np.lexsort((self.member_index, self.set_ids))
        ids, counts = np.unique(self.set_ids, return_counts=True)
        if len(ids) == 0:
            raise InvalidArgumentError("empty embedding set")
        if (counts != counts[0]).any():
            raise InvalidArgumentError("every set must have the same number of members")
        return ids, self.embeddings[order].reshape(len(ids), counts[0], -1)


@dataclass
class DistanceStats:
    set_ids: np.ndarray
    centroids: np.ndarray  # (n, k)
    d_max: np.ndarray      # (n,)
    pair_i: np.ndarray     # indices into set_ids, i < j
    pair_j: np.ndarray
    d_ij: np.ndarray       # (n(n-1)/2,)


@dataclass
class EmpiricalCdf:
    edges: np.ndarray   # (N_BINS + 1,)
    values: np.ndarray  # fraction of samples <= edge

    def pairs(self):
        return [[float(e), float(v)] for e, v in zip(self.edges, self.values)]


@dataclass
class AnalysisReport:
    cdf_dmax: EmpiricalCdf
    cdf_dij: EmpiricalCdf
    r95: float
    epsilon: float
    verdict: str
    infinite_separation: bool = False
    provenance: dict | None = None

    def to_dict(self):
        return {
            "r95": self.r95 if math.isfinite(self.r95) else "inf",
            "epsilon": self.epsilon,
            "verdict": self.verdict,
            "infinite_separation": self.infinite_separation,
            "provenance": self.provenance or {},
            "cdf_dmax": self.cdf_dmax.pairs(),
            "cdf_Dij": self.cdf_dij.pairs(),
        }

    def write(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")


def _sum_rows(a):
    # sequential accumulation along axis 1: the summation order is fixed so
    # results match a plain double loop bit for bit
    acc = a[:, 0].copy()
    for k in range(1, a.shape[1]):
        acc += a[:, k]
    return acc


def centroid(points):
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise InvalidArgumentError("centroid needs a non-empty (n, k) array")
    return _centroids(points[None])[0]


def _centroids(grouped):
    # grouped: (n_sets, m, k); sum members in order
    acc = grouped[:, 0, :].copy()
    for j in range(1, grouped.shape[1]):
        acc += grouped[:, j, :]
    return acc / grouped.shape[1]


def distance_stats(es):
    ids, grouped = es.grouped()
    cents = _centroids(grouped)
    diff = grouped - cents[:, None, :]
    sq = diff * diff
    d_max = np.sqrt(_sum_rows(sq.reshape(-1, sq.shape[-1])).reshape(sq.shape[:2])).max(axis=1)
    pi, pj = np.triu_indices(len(ids), k=1)
    dc = cents[pi] - cents[pj]
    d_ij = np.sqrt(_sum_rows(dc * dc))
    return DistanceStats(ids, cents, d_max, pi, pj, d_ij)


def empirical_cdf(values, n_bins=N_BINS):
    """Cumulative fraction of ``values`` at each of ``n_bins + 1`` equal-width edges.

    The edge range is ``[floor(min), ceil(max)]``, widened to one unit when
    both round to the same integer.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise InvalidArgumentError("empirical CDF of an empty sample")
    if not np.isfinite(values).all():
        raise InvalidArgumentError("empirical CDF needs finite values")
    lo, hi = math.floor(values.min()), math.ceil(values.max())
    if hi == lo:
        hi = lo + 1
    edges = np.linspace(lo, hi, n_bins + 1)
    edges[-1] = hi
    counts = np.searchsorted(np.sort(values), edges, side="right")
    return EmpiricalCdf(edges, counts / values.size)


def cdf_crossing(cdf, level=CDF_LEVEL):
    """Abscissa where the CDF first reaches ``level``, interpolated within the bin."""
    k = int(np.argmax(cdf.values >= level))
    if k == 0:
        return float(cdf.edges[0])
    c0, c1 = cdf.values[k - 1], cdf.values[k]
    e0, e1 = cdf.edges[k - 1], cdf.edges[k]
    return float(e0 + (level - c0) / (c1 - c0) * (e1 - e0))


def r95(cdf_d, d_max_values):
    """Separation ratio: ``D_ij`` at CDF 0.05 over ``2 * max(d_max)``.

    A zero denominator gives ``inf`` (unless the numerator is also zero, which
    means nothing is separated and gives 0).
    """
    d_max_values = np.asarray(d_max_values, dtype=np.float64)
    if d_max_values.size == 0:
        raise InvalidArgumentError("need at least one d_max value")
    num = cdf_crossing(cdf_d)
    den = 2.0 * float(d_max_values.max())
    if num == 0.0:
        return 0.0
    if den == 0.0:
        return math.inf
    return num / den


def verdict_for(ratio):
    return DISCERNIBLE if ratio > 1.0 else NOT_DISCERNIBLE


def analyze(es, provenance=None):
    return report_from_stats(distance_stats(es), provenance)


def report_from_stats(stats, provenance=None):
    if len(stats.set_ids) < 2:
        raise InvalidArgumentError("separation analysis needs at least two sets")
    cdf_dmax = empirical_cdf(stats.d_max)
    cdf_dij = empirical_cdf(stats.d_ij)
    ratio = r95(cdf_dij, stats.d_max)
    return AnalysisReport(
        cdf_dmax=cdf_dmax,
        cdf_dij=cdf_dij,
        r95=ratio,
        epsilon=float(stats.d_max.max()),
        verdict=verdict_for(ratio),
        infinite_separation=math.isinf(ratio),
        provenance=provenance,
    )


def characterize_raw(splits, provenance=None):
    """Run the separation analysis on scaled validation vectors themselves."""
    val = splits.validation
    return analyze(EmbeddingSet.from_point_sets(val, val.scaled(splits.scaling)), provenance)


def embed_split(params, sets, max_value):
    return EmbeddingSet.from_point_sets(sets, encode(params, sets.scaled(max_value)))


def write_embeddings(es, path):
    k = es.embeddings.shape[1]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(["set_id", "member_index"] + [f"e{i}" for i in range(k)]) + "\n")
        for sid, mid, row in zip(es.set_ids, es.member_index, es.embeddings):
            fh.write(f"{sid},{mid}," + ",".join(repr(float(x)) for x in row) + "\n")


def write_centroids(stats, path):
    k = stats.centroids.shape[1]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(["set_id", "d_max"] + [f"c{i}" for i in range(k)]) + "\n")
        for sid, dm, row in zip(stats.set_ids, stats.d_max, stats.centroids):
            fh.write(f"{sid},{float(dm)!r}," + ",".join(repr(float(x)) for x in row) + "\n")


def analyze_embeddings(params, splits, out_dir=None, provenance=None):
    """Encode the validation split and analyse it; optionally export CSVs and JSON.

    Writes ``report.json``, ``embeddings.csv`` and ``centroids.csv`` into
    ``out_dir`` when given.
    """
    es = embed_split(params, splits.validation, splits.scaling)
    stats = distance_stats(es)
    report = report_from_stats(stats, provenance)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_embeddings(es, out_dir / "embeddings.csv")
        write_centroids(stats, out_dir / "centroids.csv")
        report.write(out_dir / "report.json")
    return report


def config_hash(mapping):
    blob = json.dumps(mapping, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
