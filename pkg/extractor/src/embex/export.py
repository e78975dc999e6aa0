"""Embedding-set file writer (cnnsizer data interchange format).

Manifest JSON beside a raw little-endian float32 payload, row-major, with a
sha256 checksum; records listed in row order. Extra keys (`created_utc`,
`training`) document provenance and are ignored by readers.
"""

from __future__ import annotations

import hashlib
import json
import os
from datetime import datetime, timezone
from typing import Optional, Sequence, Tuple

import numpy as np

FORMAT_VERSION = 1
PAYLOAD_SUFFIX = ".f32"


def write_embedding_file(path: str, vectors: np.ndarray,
                         records: Sequence[Tuple[str, str]], *, space_id: str,
                         color_mode: str, resolution: int, grouping_name: str,
                         config_tag: str = "",
                         training: Optional[dict] = None) -> None:
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    if vectors.ndim != 2 or vectors.shape[0] != len(records):
        raise ValueError(f"vectors {vectors.shape} do not match {len(records)} records")
    payload = vectors.tobytes(order="C")
    payload_name = os.path.basename(path) + PAYLOAD_SUFFIX
    manifest = {
        "format_version": FORMAT_VERSION,
        "dimension": int(vectors.shape[1]),
        "record_count": int(vectors.shape[0]),
        "config_tag": config_tag,
        "space_id": space_id,
        "color_mode": color_mode,
        "resolution": resolution,
        "grouping_name": grouping_name,
        "payload": payload_name,
        "checksum": f"sha256:{hashlib.sha256(payload).hexdigest()}",
        "records": [[rid, cid] for rid, cid in records],
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    if training is not None:
        manifest["training"] = training
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory or ".", payload_name), "wb") as f:
        f.write(payload)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1)
        f.write("\n")
