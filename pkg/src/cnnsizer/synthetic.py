"""Seeded synthetic embedding sets for fixtures and property tests.

Classes are Gaussian clouds sharing one base direction, with per-class
offsets along orthogonal axes. Growing ``separation`` fans the class clouds
apart angularly, so cross-class cosine similarity falls monotonically while
the noise draw (fixed by the seed) stays identical across separations.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .errors import InputError
from .similarity import EmbeddingSet


def make_cluster_set(n_classes: int, per_class: int, dim: int, separation: float,
                     seed: int, noise: float = 0.5, base_magnitude: float = 3.0,
                     class_ids: Optional[Sequence[str]] = None,
                     **meta) -> EmbeddingSet:
    """Embedding set of ``n_classes`` Gaussian clusters at a given separation.

    The same (n_classes, per_class, dim, seed) draws the same noise no matter
    the separation, so sweeping ``separation`` isolates the geometry change.
    """
    if n_classes < 2:
        raise InputError(f"need at least 2 classes, got {n_classes}")
    if per_class < 1:
        raise InputError(f"need at least 1 instance per class, got {per_class}")
    if dim < n_classes + 1:
        raise InputError(f"dim must exceed n_classes (base axis + one per class), got {dim}")
    if separation < 0:
        raise InputError(f"separation must be >= 0, got {separation}")

    if class_ids is None:
        class_ids = [f"class{k:02d}" for k in range(n_classes)]
    elif len(class_ids) != n_classes:
        raise InputError(f"{len(class_ids)} class ids for {n_classes} classes")

    rng = np.random.default_rng(seed)
    total = n_classes * per_class
    noise_draw = rng.normal(0.0, noise, size=(total, dim))

    vectors = np.empty((total, dim), dtype=np.float64)
    ids, labels = [], []
    for k in range(n_classes):
        centroid = np.zeros(dim)
        centroid[0] = base_magnitude
        centroid[k + 1] = separation
        start = k * per_class
        vectors[start:start + per_class] = centroid + noise_draw[start:start + per_class]
        for i in range(per_class):
            ids.append(f"{class_ids[k]}-{i:04d}")
            labels.append(class_ids[k])
    return EmbeddingSet(dimension=dim, instance_ids=tuple(ids), class_ids=tuple(labels),
                        vectors=vectors, **meta)
