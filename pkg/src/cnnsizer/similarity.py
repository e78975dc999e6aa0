"""Intra-/inter-class cosine-similarity statistics over embedding sets.

All statistics are plain averages of pairwise cosine similarities:

* per-class similarity: mean and population variance over the n(n-1)/2
  unordered pairs inside one class,
* cross-class similarity: mean over the |C1|x|C2| cross pairs of two classes,
* worst case: the maximum cross-class value over all class pairs, and its
  normalized distance to the mean of all class-pair values.

Everything here is a pure function over immutable inputs. Pair sums are
evaluated per class pair in a fixed order, so results do not depend on thread
count or record order beyond float rounding (<= 1e-12).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .errors import (InputError, InsufficientDataError,
                     UndefinedCorrelationError, UnknownClassError)
from .grouping import ClassGrouping


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine similarity dot(a,b)/(|a||b|) of two equal-length vectors."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.ndim != 1 or vb.ndim != 1 or va.shape != vb.shape:
        raise InputError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise InputError("cosine undefined for zero-norm vector")
    return float(np.dot(va, vb) / (na * nb))


@dataclass(frozen=True)
class EmbeddingSet:
    """Instance-id -> (class-id, vector) collection for one configuration.

    Vectors are held as one float64 array of shape (n, dimension). Invariants
    (equal dimensions, unique instance ids, nonzero norms) are enforced at
    construction; zero vectors are rejected here, at ingestion time.

    Metadata fields identify the configuration the set was extracted under:
    ``space_id`` names the embedding model (cosines are only commensurable
    within one space), ``color_mode``/``resolution``/``grouping_name`` the
    data-side configuration.
    """

    dimension: int
    instance_ids: Tuple[str, ...]
    class_ids: Tuple[str, ...]
    vectors: np.ndarray
    config_tag: str = ""
    space_id: str = ""
    color_mode: str = "color"
    resolution: Optional[int] = None
    grouping_name: str = "identity"

    def __post_init__(self):
        if self.dimension < 1:
            raise InputError(f"dimension must be >= 1, got {self.dimension}")
        vecs = np.asarray(self.vectors, dtype=np.float64)
        if vecs.ndim != 2 or vecs.shape[1] != self.dimension:
            raise InputError(
                f"vectors must have shape (n, {self.dimension}), got {vecs.shape}"
            )
        if vecs.shape[0] != len(self.instance_ids) or vecs.shape[0] != len(self.class_ids):
            raise InputError("instance_ids, class_ids and vectors disagree on record count")
        if len(set(self.instance_ids)) != len(self.instance_ids):
            seen, dup = set(), None
            for i in self.instance_ids:
                if i in seen:
                    dup = i
                    break
                seen.add(i)
            raise InputError(f"duplicate instance_id {dup!r}")
        if not np.all(np.isfinite(vecs)):
            raise InputError("vectors contain non-finite values")
        norms = np.linalg.norm(vecs, axis=1)
        zero = np.nonzero(norms == 0.0)[0]
        if zero.size:
            raise InputError(f"zero-norm vector for instance {self.instance_ids[zero[0]]!r}")
        vecs = vecs.copy()
        vecs.setflags(write=False)
        object.__setattr__(self, "vectors", vecs)
        object.__setattr__(self, "instance_ids", tuple(self.instance_ids))
        object.__setattr__(self, "class_ids", tuple(self.class_ids))

    @classmethod
    def build(cls, dimension: int, records: Iterable[Tuple[str, str, Sequence[float]]],
              **meta) -> "EmbeddingSet":
        """Construct from (instance_id, class_id, vector) records."""
        records = list(records)
        ids = tuple(r[0] for r in records)
        classes = tuple(r[1] for r in records)
        if records:
            for rid, _, vec in records:
                if len(vec) != dimension:
                    raise InputError(
                        f"instance {rid!r}: vector length {len(vec)} != dimension {dimension}"
                    )
            vecs = np.array([r[2] for r in records], dtype=np.float64)
        else:
            vecs = np.zeros((0, dimension), dtype=np.float64)
        return cls(dimension=dimension, instance_ids=ids, class_ids=classes,
                   vectors=vecs, **meta)

    def __len__(self) -> int:
        return len(self.instance_ids)

    @property
    def classes(self) -> Tuple[str, ...]:
        """Distinct class ids in sorted order."""
        return tuple(sorted(set(self.class_ids)))

    def class_counts(self) -> dict:
        counts: dict = {}
        for c in self.class_ids:
            counts[c] = counts.get(c, 0) + 1
        return counts

    def rows_for(self, class_id: str) -> np.ndarray:
        idx = np.asarray([i for i, c in enumerate(self.class_ids) if c == class_id], dtype=np.intp)
        if idx.size == 0:
            raise UnknownClassError(f"unknown class {class_id!r}")
        return idx

    def unit_vectors(self) -> np.ndarray:
        """Row-normalized copy of the vectors."""
        norms = np.linalg.norm(self.vectors, axis=1, keepdims=True)
        return self.vectors / norms

    def records(self):
        for i, (rid, cid) in enumerate(zip(self.instance_ids, self.class_ids)):
            yield rid, cid, self.vectors[i]

    def with_metadata(self, **meta) -> "EmbeddingSet":
        fields = dict(dimension=self.dimension, instance_ids=self.instance_ids,
                      class_ids=self.class_ids, vectors=self.vectors,
                      config_tag=self.config_tag, space_id=self.space_id,
                      color_mode=self.color_mode, resolution=self.resolution,
                      grouping_name=self.grouping_name)
        fields.update(meta)
        return EmbeddingSet(**fields)


@dataclass(frozen=True)
class ClassSimilarityStats:
    """Mean/variance of pairwise cosines inside one class.

    ``sigma2`` is the population variance (divide by the pair count N) of the
    N = n(n-1)/2 pairwise similarities.
    """

    class_id: str
    s1: float
    sigma2: float
    pair_count: int
    instance_count: int

    def to_dict(self) -> dict:
        return {"class_id": self.class_id, "s1": self.s1, "sigma2": self.sigma2,
                "pair_count": self.pair_count, "instance_count": self.instance_count}


@dataclass(frozen=True)
class SimilarityReport:
    """Per-class and cross-class similarity statistics for one configuration.

    ``s2_matrix`` is symmetric with NaN on the diagonal (a class against
    itself is intra-class territory and must never leak into max/mean).
    ``delta_s2`` is None when the cross-class mean is <= 0, in which case
    ``s2_max`` stands alone.
    """

    classes: Tuple[str, ...]
    per_class: Tuple[ClassSimilarityStats, ...]
    s2_matrix: np.ndarray
    s2_max: float
    s2_mean: float
    delta_s2: Optional[float]
    argmax_pair: Tuple[str, str]
    warnings: Tuple[str, ...] = ()
    config_tag: str = ""
    color_mode: str = "color"
    resolution: Optional[int] = None
    grouping_name: str = "identity"

    def s2(self, c1: str, c2: str) -> float:
        i, j = self.classes.index(c1), self.classes.index(c2)
        return float(self.s2_matrix[i][j])

    def stats_for(self, class_id: str) -> Optional[ClassSimilarityStats]:
        for st in self.per_class:
            if st.class_id == class_id:
                return st
        return None

    def to_dict(self) -> dict:
        matrix = [[None if i == j else float(self.s2_matrix[i][j])
                   for j in range(len(self.classes))]
                  for i in range(len(self.classes))]
        return {
            "schema": "similarity-report/1",
            "config": {
                "config_tag": self.config_tag,
                "grouping": self.grouping_name,
                "color_mode": self.color_mode,
                "resolution": self.resolution,
            },
            "classes": list(self.classes),
            "per_class": [st.to_dict() for st in self.per_class],
            "s2_matrix": matrix,
            "s2_max": self.s2_max,
            "s2_mean": self.s2_mean,
            "delta_s2": self.delta_s2,
            "argmax_pair": list(self.argmax_pair),
            "warnings": list(self.warnings),
        }


def _pair_matrix(units: np.ndarray, rows_a: np.ndarray, rows_b: np.ndarray) -> np.ndarray:
    # One matmul per class pair keeps the summation order fixed.
    return units[rows_a] @ units[rows_b].T


def intra_class(emb: EmbeddingSet, class_id: str) -> ClassSimilarityStats:
    """Mean and population variance of all unordered pairwise cosines in a class."""
    rows = emb.rows_for(class_id)
    n = rows.size
    if n < 2:
        raise InsufficientDataError(
            f"class {class_id!r} has {n} instance(s); >= 2 required for intra-class similarity"
        )
    units = emb.unit_vectors()
    gram = _pair_matrix(units, rows, rows)
    iu = np.triu_indices(n, k=1)
    sims = gram[iu]
    pair_count = n * (n - 1) // 2
    s1 = float(np.sum(sims) / pair_count)
    sigma2 = float(np.sum((sims - s1) ** 2) / pair_count)
    return ClassSimilarityStats(class_id=class_id, s1=s1, sigma2=sigma2,
                                pair_count=pair_count, instance_count=n)


def inter_class(emb: EmbeddingSet, c1: str, c2: str) -> float:
    """Mean cosine over all cross pairs of two different classes."""
    if c1 == c2:
        raise InputError(f"inter-class similarity needs two different classes, got {c1!r} twice")
    rows1 = emb.rows_for(c1)
    rows2 = emb.rows_for(c2)
    units = emb.unit_vectors()
    # Evaluate each unordered pair once, in sorted class order, so that
    # inter_class(a, b) == inter_class(b, a) exactly.
    if c1 <= c2:
        block = _pair_matrix(units, rows1, rows2)
    else:
        block = _pair_matrix(units, rows2, rows1)
    return float(np.sum(block) / block.size)


def apply_grouping(emb: EmbeddingSet, grouping: ClassGrouping) -> EmbeddingSet:
    """Relabel classes per the grouping, removing dropped classes.

    The grouping must mention every class in the set exactly once and must
    not reference classes the set does not contain.
    """
    grouping.validate_against(emb.classes)
    keep, new_classes = [], []
    for i, cid in enumerate(emb.class_ids):
        grouped = grouping.mapping[cid]
        if grouped is None:
            continue
        keep.append(i)
        new_classes.append(grouped)
    if not keep:
        raise InputError(f"grouping {grouping.name!r} drops every instance")
    return EmbeddingSet(
        dimension=emb.dimension,
        instance_ids=tuple(emb.instance_ids[i] for i in keep),
        class_ids=tuple(new_classes),
        vectors=emb.vectors[np.asarray(keep, dtype=np.intp)],
        config_tag=emb.config_tag,
        space_id=emb.space_id,
        color_mode=emb.color_mode,
        resolution=emb.resolution,
        grouping_name=grouping.name,
    )


def similarity_report(emb: EmbeddingSet,
                      grouping: Optional[ClassGrouping] = None) -> SimilarityReport:
    """Full report: per-class stats, cross-class matrix, worst case and spread.

    Applies ``grouping`` first when given. Requires at least 2 grouped classes;
    classes with a single instance still participate in the cross-class matrix
    but are flagged in ``warnings`` instead of getting per-class stats.
    """
    if grouping is not None:
        emb = apply_grouping(emb, grouping)
    classes = emb.classes
    k = len(classes)
    if k < 2:
        raise InputError(f"similarity report needs >= 2 classes, got {k}")
    counts = emb.class_counts()
    for c in classes:
        if counts.get(c, 0) == 0:
            raise InputError(f"grouped class {c!r} is empty")

    units = emb.unit_vectors()
    rows = {c: emb.rows_for(c) for c in classes}

    warnings = []
    per_class = []
    for c in classes:
        if counts[c] < 2:
            warnings.append(
                f"class {c!r} has {counts[c]} instance(s); intra-class stats omitted"
            )
            continue
        per_class.append(intra_class(emb, c))

    matrix = np.full((k, k), np.nan, dtype=np.float64)
    s2_max = -math.inf
    argmax = (classes[0], classes[1])
    total = 0.0
    pairs = 0
    for i in range(k):
        for j in range(i + 1, k):
            block = _pair_matrix(units, rows[classes[i]], rows[classes[j]])
            value = float(np.sum(block) / block.size)
            matrix[i][j] = value
            matrix[j][i] = value
            total += value
            pairs += 1
            if value > s2_max:
                s2_max = value
                argmax = (classes[i], classes[j])
    s2_mean = total / pairs
    delta = (s2_max - s2_mean) / s2_mean if s2_mean > 0 else None
    if delta is None:
        warnings.append(
            "cross-class mean similarity is not positive; normalized spread is undefined, "
            "use the worst-case value alone"
        )
    matrix.setflags(write=False)
    return SimilarityReport(
        classes=classes,
        per_class=tuple(per_class),
        s2_matrix=matrix,
        s2_max=s2_max,
        s2_mean=s2_mean,
        delta_s2=delta,
        argmax_pair=argmax,
        warnings=tuple(warnings),
        config_tag=emb.config_tag,
        color_mode=emb.color_mode,
        resolution=emb.resolution,
        grouping_name=emb.grouping_name,
    )


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Product-moment correlation coefficient of two equal-length sequences."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.size != y.size:
        raise InputError(f"sequences must be 1-d and equal length, got {x.shape} vs {y.shape}")
    if x.size < 2:
        raise InputError("correlation needs at least 2 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation undefined: zero variance sequence")
    return float(np.dot(dx, dy) / math.sqrt(sxx * syy))
