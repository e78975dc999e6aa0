import numpy as np
import pytest

from cnnsizer import EmbeddingSet


def build_set(class_vectors, dimension=None, **meta):
    """EmbeddingSet from a dict class_id -> iterable of vectors."""
    records = []
    for cid in sorted(class_vectors):
        for i, vec in enumerate(class_vectors[cid]):
            records.append((f"{cid}-{i}", cid, np.asarray(vec, dtype=np.float64)))
    if dimension is None:
        dimension = len(records[0][2])
    return EmbeddingSet.build(dimension, records, **meta)


@pytest.fixture
def two_class_set():
    return build_set({
        "a": [(1.0, 0.0), (0.9, 0.1)],
        "b": [(0.0, 1.0), (0.1, 0.9)],
    }, resolution=64)
