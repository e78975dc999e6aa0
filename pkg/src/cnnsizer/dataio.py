"""File formats and ingestion.

Embedding sets are stored as a JSON manifest (the path callers pass around)
plus a raw payload of little-endian float32 values, row-major, in a sibling
file named by the manifest. The manifest carries dimension, record count,
configuration metadata, the (instance_id, class_id) list in row order, and a
sha256 checksum of the payload. Readers reject rather than repair: any
inconsistency raises a named error.

Annotations are ingested from the COCO instances schema subset (images,
annotations, categories). Invalid records are returned in a rejects list with
reasons, never silently dropped.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from .errors import ChecksumError, FormatError, InputError
from .flops import ConvLayerSpec, FlopsReport, ModelSpec
from .grouping import ClassGrouping
from .scale import BBoxAnnotation, ScaleStats
from .similarity import EmbeddingSet, SimilarityReport

EMBEDDING_FORMAT_VERSION = 1
PAYLOAD_SUFFIX = ".f32"


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise FormatError(f"file not found: {path}")
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")


def _dump_json(data: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=1)
        f.write("\n")


# ---------------------------------------------------------------------------
# Embedding sets
# ---------------------------------------------------------------------------

def _payload_path(manifest_path: str, manifest: dict) -> str:
    rel = manifest.get("payload", os.path.basename(manifest_path) + PAYLOAD_SUFFIX)
    return os.path.join(os.path.dirname(manifest_path) or ".", rel)


def write_embeddings(emb: EmbeddingSet, path: str) -> None:
    """Write manifest to ``path`` and float32 payload to ``path`` + '.f32'."""
    payload = emb.vectors.astype("<f4").tobytes(order="C")
    checksum = hashlib.sha256(payload).hexdigest()
    payload_name = os.path.basename(path) + PAYLOAD_SUFFIX
    manifest = {
        "format_version": EMBEDDING_FORMAT_VERSION,
        "dimension": emb.dimension,
        "record_count": len(emb),
        "config_tag": emb.config_tag,
        "space_id": emb.space_id,
        "color_mode": emb.color_mode,
        "resolution": emb.resolution,
        "grouping_name": emb.grouping_name,
        "payload": payload_name,
        "checksum": f"sha256:{checksum}",
        "records": [[rid, cid] for rid, cid in zip(emb.instance_ids, emb.class_ids)],
    }
    with open(_payload_path(path, manifest), "wb") as f:
        f.write(payload)
    _dump_json(manifest, path)


def read_embeddings(path: str) -> EmbeddingSet:
    """Load and validate a manifest + payload pair written by write_embeddings."""
    manifest = _load_json(path)
    for key in ("format_version", "dimension", "record_count", "records", "checksum"):
        if key not in manifest:
            raise FormatError(f"{path}: manifest missing field {key!r}")
    if manifest["format_version"] != EMBEDDING_FORMAT_VERSION:
        raise FormatError(
            f"{path}: unsupported format_version {manifest['format_version']}"
        )
    dimension = int(manifest["dimension"])
    count = int(manifest["record_count"])
    records = manifest["records"]
    if len(records) != count:
        raise FormatError(
            f"{path}: record_count {count} != {len(records)} listed records"
        )

    payload_file = _payload_path(path, manifest)
    try:
        with open(payload_file, "rb") as f:
            payload = f.read()
    except FileNotFoundError:
        raise FormatError(f"{path}: payload file not found: {payload_file}")

    checksum = manifest["checksum"]
    expected = f"sha256:{hashlib.sha256(payload).hexdigest()}"
    if checksum != expected:
        raise ChecksumError(
            f"{path}: payload checksum mismatch (manifest {checksum}, actual {expected})"
        )
    if len(payload) != count * dimension * 4:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, expected "
            f"{count * dimension * 4} for {count} x {dimension} float32"
        )
    vectors = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(count, dimension)
    return EmbeddingSet(
        dimension=dimension,
        instance_ids=tuple(str(r[0]) for r in records),
        class_ids=tuple(str(r[1]) for r in records),
        vectors=vectors,
        config_tag=str(manifest.get("config_tag", "")),
        space_id=str(manifest.get("space_id", "")),
        color_mode=str(manifest.get("color_mode", "color")),
        resolution=manifest.get("resolution"),
        grouping_name=str(manifest.get("grouping_name", "identity")),
    )


# ---------------------------------------------------------------------------
# Annotations (COCO instances subset)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RejectedAnnotation:
    instance_id: str
    reason: str

    def to_dict(self) -> dict:
        return {"instance_id": self.instance_id, "reason": self.reason}


@dataclass(frozen=True)
class AnnotationIngest:
    """Valid annotations plus an enumeration of rejected records."""

    annotations: Tuple[BBoxAnnotation, ...]
    rejects: Tuple[RejectedAnnotation, ...]


def read_annotations(path: str) -> AnnotationIngest:
    """Parse a COCO-style instances file into validated bbox annotations."""
    data = _load_json(path)
    for key in ("images", "annotations"):
        if key not in data or not isinstance(data[key], list):
            raise FormatError(f"{path}: missing or non-list {key!r} section")

    images = {}
    for i, img in enumerate(data["images"]):
        try:
            images[img["id"]] = (float(img["width"]), float(img["height"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: images[{i}] malformed: {exc}")

    categories = {}
    for cat in data.get("categories", []):
        if "id" in cat:
            categories[cat["id"]] = str(cat.get("name", cat["id"]))

    valid: List[BBoxAnnotation] = []
    rejects: List[RejectedAnnotation] = []
    for i, ann in enumerate(data["annotations"]):
        try:
            ann_id = str(ann["id"])
            image_id = ann["image_id"]
            bbox = ann["bbox"]
            x, y, w, h = (float(v) for v in bbox)
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: annotations[{i}] malformed: {exc}")
        if image_id not in images:
            rejects.append(RejectedAnnotation(ann_id, f"unknown image_id {image_id!r}"))
            continue
        img_w, img_h = images[image_id]
        class_id = categories.get(ann.get("category_id"), str(ann.get("category_id")))
        record = BBoxAnnotation(
            instance_id=ann_id, class_id=class_id, image_id=str(image_id),
            x=x, y=y, w=w, h=h, image_w=img_w, image_h=img_h,
        )
        problems = record.violations()
        if problems:
            rejects.append(RejectedAnnotation(ann_id, "; ".join(problems)))
        else:
            valid.append(record)
    return AnnotationIngest(annotations=tuple(valid), rejects=tuple(rejects))


# ---------------------------------------------------------------------------
# Groupings
# ---------------------------------------------------------------------------

def read_grouping(path: str) -> ClassGrouping:
    data = _load_json(path)
    if "mapping" not in data or not isinstance(data["mapping"], dict):
        raise FormatError(f"{path}: grouping file needs a 'mapping' object")
    name = str(data.get("name", os.path.splitext(os.path.basename(path))[0]))
    return ClassGrouping(name=name, mapping=data["mapping"])


def write_grouping(grouping: ClassGrouping, path: str) -> None:
    _dump_json(grouping.to_dict(), path)


# ---------------------------------------------------------------------------
# Model specs
# ---------------------------------------------------------------------------

def read_model_spec(path: str) -> ModelSpec:
    data = _load_json(path)
    for key in ("name", "input", "layers"):
        if key not in data:
            raise FormatError(f"{path}: model spec missing field {key!r}")
    if not isinstance(data["input"], (list, tuple)) or len(data["input"]) != 2:
        raise FormatError(f"{path}: 'input' must be [width, height]")
    layers = []
    for i, ld in enumerate(data["layers"]):
        try:
            layers.append(ConvLayerSpec(
                name=str(ld["name"]),
                kernel=int(ld["kernel"]),
                in_channels=int(ld["in_channels"]),
                out_channels=int(ld["out_channels"]),
                stride=int(ld.get("stride", 1)),
                padding=int(ld.get("padding", 0)),
                has_bias=bool(ld.get("has_bias", False)),
                groups=int(ld.get("groups", 1)),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: layers[{i}] malformed: {exc}")
    return ModelSpec(name=str(data["name"]), input_w=int(data["input"][0]),
                     input_h=int(data["input"][1]), layers=tuple(layers))


def write_model_spec(model: ModelSpec, path: str) -> None:
    _dump_json({
        "name": model.name,
        "input": [model.input_w, model.input_h],
        "layers": [{
            "name": l.name, "kernel": l.kernel, "in_channels": l.in_channels,
            "out_channels": l.out_channels, "stride": l.stride, "padding": l.padding,
            "has_bias": l.has_bias, "groups": l.groups,
        } for l in model.layers],
    }, path)


def builtin_model_spec(name: str) -> ModelSpec:
    """One of the shipped reference stacks: 'vgg19-32' or 'enb0-32'."""
    here = os.path.join(os.path.dirname(__file__), "data", f"{name}.json")
    if not os.path.exists(here):
        raise InputError(f"no builtin model spec named {name!r}")
    return read_model_spec(here)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

Reportable = Union[SimilarityReport, ScaleStats, FlopsReport, dict]


def report_to_dict(report: Reportable) -> dict:
    if isinstance(report, dict):
        return report
    return report.to_dict()


def serialize_report(report: Reportable) -> str:
    """Canonical structured form: sorted keys, stable separators, newline-terminated."""
    return json.dumps(report_to_dict(report), indent=1, sort_keys=True) + "\n"


def _fmt(value, digits: int = 6) -> str:
    if value is None:
        return "n/a"
    return f"{value:.{digits}f}"


def similarity_report_markdown(report: SimilarityReport) -> str:
    """Markdown rendering: headline worst case, per-class table, full matrix."""
    d = report.to_dict()
    lines = [
        f"# Similarity report — {report.grouping_name} / {report.color_mode}"
        + (f" / {report.resolution}px" if report.resolution else ""),
        "",
        f"- worst-case inter-class similarity (max): **{_fmt(report.s2_max)}** "
        f"for pair ({report.argmax_pair[0]}, {report.argmax_pair[1]})",
        f"- mean inter-class similarity: {_fmt(report.s2_mean)}",
        f"- normalized spread (max vs mean): "
        + (f"**{_fmt(report.delta_s2)}**" if report.delta_s2 is not None else "undefined"),
        "",
        "## Per-class intra-class similarity",
        "",
        "| class | S1 | variance | pairs | instances |",
        "|---|---|---|---|---|",
    ]
    for st in report.per_class:
        lines.append(
            f"| {st.class_id} | {_fmt(st.s1)} | {_fmt(st.sigma2)} "
            f"| {st.pair_count} | {st.instance_count} |"
        )
    lines += ["", "## Inter-class similarity matrix", ""]
    header = "| | " + " | ".join(report.classes) + " |"
    lines.append(header)
    lines.append("|" + "---|" * (len(report.classes) + 1))
    for i, c in enumerate(report.classes):
        row = [c] + [
            "—" if i == j else _fmt(float(report.s2_matrix[i][j]))
            for j in range(len(report.classes))
        ]
        lines.append("| " + " | ".join(row) + " |")
    if d["warnings"]:
        lines += ["", "## Warnings", ""]
        lines += [f"- {w}" for w in d["warnings"]]
    return "\n".join(lines) + "\n"


def write_report(report: Reportable, path: str, fmt: str = "structured") -> None:
    """Write a report as canonical JSON ('structured') or markdown."""
    if fmt == "structured":
        with open(path, "w", encoding="utf-8") as f:
            f.write(serialize_report(report))
    elif fmt == "markdown":
        if not isinstance(report, SimilarityReport):
            raise InputError("markdown rendering is only defined for similarity reports")
        with open(path, "w", encoding="utf-8") as f:
            f.write(similarity_report_markdown(report))
    else:
        raise InputError(f"unknown report format {fmt!r}")
