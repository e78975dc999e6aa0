"""Object-scale statistics and the receptive-field layer bound.

The scale of an object is the longer side of its bounding box divided by the
longer image dimension, which makes it independent of resolution. The pixel
size of the largest object (b_max) at a target resolution bounds the number
of stacked 3x3 stride-1 conv layers a model needs to cover it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InputError
from .grouping import ClassGrouping

DEFAULT_HISTOGRAM_BINS = 20


@dataclass(frozen=True)
class BBoxAnnotation:
    """One labeled bounding box, top-left origin, pixel units."""

    instance_id: str
    class_id: str
    image_id: str
    x: float
    y: float
    w: float
    h: float
    image_w: float
    image_h: float

    def violations(self) -> List[str]:
        """Invariant violations, empty when the annotation is valid."""
        problems = []
        if self.w <= 0 or self.h <= 0:
            problems.append(f"non-positive box size {self.w}x{self.h}")
        if self.image_w <= 0 or self.image_h <= 0:
            problems.append(f"non-positive image size {self.image_w}x{self.image_h}")
        if self.x < 0 or self.y < 0:
            problems.append(f"negative box origin ({self.x}, {self.y})")
        if self.image_w > 0 and self.x + self.w > self.image_w:
            problems.append(f"box exceeds image width ({self.x}+{self.w} > {self.image_w})")
        if self.image_h > 0 and self.y + self.h > self.image_h:
            problems.append(f"box exceeds image height ({self.y}+{self.h} > {self.image_h})")
        return problems


def object_scale(a: BBoxAnnotation) -> float:
    """Longer box side over longer image dimension, in (0, 1]."""
    problems = a.violations()
    if problems:
        raise InputError(f"annotation {a.instance_id!r}: {'; '.join(problems)}")
    return max(a.w, a.h) / max(a.image_w, a.image_h)


def receptive_field(layers: int) -> int:
    """Pixels covered by one unit after ``layers`` stacked 3x3 stride-1 convs."""
    if layers < 1:
        raise InputError(f"layer count must be >= 1, got {layers}")
    return 2 ** (layers + 1) - 1


def min_layers(b_max: float) -> int:
    """Minimum conv depth whose receptive field covers a b_max-pixel object.

    Exact integer arithmetic: ceil(log2(b+1)) - 1 == bit_length(ceil(b)) - 1
    for all b >= 1, clamped to >= 1 because a network has at least one layer.
    """
    if b_max < 1:
        raise InputError(f"b_max must be >= 1 pixel, got {b_max}")
    return max(1, math.ceil(b_max).bit_length() - 1)


@dataclass(frozen=True)
class ScaleSummary:
    """Scale distribution for one class (or the whole dataset)."""

    count: int
    min_scale: float
    max_scale: float
    median_scale: float
    b_max: int
    histogram: Tuple[Tuple[float, float, int], ...]

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "min_scale": self.min_scale,
            "max_scale": self.max_scale,
            "median_scale": self.median_scale,
            "b_max": self.b_max,
            "histogram": [[lo, hi, int(n)] for lo, hi, n in self.histogram],
        }


@dataclass(frozen=True)
class ScaleStats:
    """Per-class and overall scale summaries plus the effective resolution."""

    overall: ScaleSummary
    per_class: Dict[str, ScaleSummary]
    effective_resolution: Optional[int] = None
    bins: int = DEFAULT_HISTOGRAM_BINS

    def to_dict(self) -> dict:
        return {
            "schema": "scale-stats/1",
            "effective_resolution": self.effective_resolution,
            "bins": self.bins,
            "overall": self.overall.to_dict(),
            "per_class": {c: s.to_dict() for c, s in sorted(self.per_class.items())},
        }


def _histogram(scales: np.ndarray, bins: int) -> Tuple[Tuple[float, float, int], ...]:
    # Left-closed, right-open bins over [0, 1]; numpy closes the last bin at 1.
    counts, edges = np.histogram(scales, bins=bins, range=(0.0, 1.0))
    return tuple((float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins))


def _summarize(scales: np.ndarray, longer_sides: np.ndarray, bins: int) -> ScaleSummary:
    # b_max at the effective resolution; ceiling keeps the layer bound conservative.
    b_max = int(math.ceil(float(np.max(longer_sides))))
    return ScaleSummary(
        count=int(scales.size),
        min_scale=float(np.min(scales)),
        max_scale=float(np.max(scales)),
        median_scale=float(np.median(scales)),
        b_max=b_max,
        histogram=_histogram(scales, bins),
    )


def scale_stats(annotations: Sequence[BBoxAnnotation],
                grouping: Optional[ClassGrouping] = None,
                resolution_override: Optional[int] = None,
                bins: int = DEFAULT_HISTOGRAM_BINS) -> ScaleStats:
    """Scale distribution over annotations, optionally regrouped and resized.

    ``resolution_override`` rescales every image uniformly so its longer
    dimension becomes the override before measuring box sides in pixels;
    scales themselves are resolution-invariant and unaffected.
    """
    if not annotations:
        raise InputError("no annotations given")
    if bins < 1:
        raise InputError(f"bin count must be >= 1, got {bins}")
    if resolution_override is not None and resolution_override < 1:
        raise InputError(f"resolution override must be >= 1, got {resolution_override}")

    scales, sides, classes = [], [], []
    for a in annotations:
        s = object_scale(a)
        longer_img = max(a.image_w, a.image_h)
        if resolution_override is None:
            side = max(a.w, a.h)
        else:
            side = max(a.w, a.h) * (resolution_override / longer_img)
        cid = a.class_id if grouping is None else grouping.map_label(a.class_id)
        if cid is None:
            continue
        scales.append(s)
        sides.append(side)
        classes.append(cid)
    if not scales:
        raise InputError("grouping dropped every annotation")

    scales_arr = np.asarray(scales, dtype=np.float64)
    sides_arr = np.asarray(sides, dtype=np.float64)

    per_class = {}
    for c in sorted(set(classes)):
        idx = np.asarray([i for i, cc in enumerate(classes) if cc == c], dtype=np.intp)
        per_class[c] = _summarize(scales_arr[idx], sides_arr[idx], bins)
    overall = _summarize(scales_arr, sides_arr, bins)
    return ScaleStats(overall=overall, per_class=per_class,
                      effective_resolution=resolution_override, bins=bins)
