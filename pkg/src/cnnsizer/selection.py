"""The three configuration-selection procedures, logged as resumable sessions.

Each procedure iterates candidate configurations (class groupings, color
modes, resolution rungs), scores them with the similarity report, and records
every iteration in an append-only decision log. The running best per
procedure is the strict argmin of the normalized inter-class spread; ties
keep the earlier candidate so re-runs are stable.
"""

from __future__ import annotations

import json
import math
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InputError, StateError
from .grouping import ClassGrouping
from .scale import BBoxAnnotation, min_layers as scale_min_layers, object_scale
from .similarity import (EmbeddingSet, SimilarityReport, apply_grouping,
                         intra_class, similarity_report)

PROCEDURES = ("classes", "color", "resolution")

DEFAULT_MIN_BBOX_PIXELS = 8
DEFAULT_SMALL_CLASS_COUNT = 3
DEFAULT_HIGH_S2 = 0.5


@dataclass(frozen=True)
class ConfigKey:
    """One candidate configuration: grouping x color mode x resolution."""

    grouping_name: str
    color_mode: str
    resolution: int

    def __post_init__(self):
        if self.resolution <= 0:
            raise InputError(f"resolution must be positive, got {self.resolution}")

    def to_dict(self) -> dict:
        return {"grouping": self.grouping_name, "color_mode": self.color_mode,
                "resolution": self.resolution}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ConfigKey":
        return cls(grouping_name=str(d["grouping"]), color_mode=str(d["color_mode"]),
                   resolution=int(d["resolution"]))


@dataclass
class LogEntry:
    """One procedure iteration.

    ``improved_best`` is immutable history: the entry strictly improved the
    running argmin when appended. ``is_best_so_far`` is the live view managed
    by the owning log: at most one entry per procedure carries it at any time
    (the current argmin), and the flag moves when a later entry improves on it.
    """

    timestamp: str
    procedure: str
    config: ConfigKey
    report: dict
    improved_best: bool
    note: str = ""
    is_best_so_far: bool = False

    @property
    def delta_s2(self) -> Optional[float]:
        return self.report.get("delta_s2")

    def to_dict(self) -> dict:
        return {"timestamp": self.timestamp, "procedure": self.procedure,
                "config": self.config.to_dict(), "report": self.report,
                "improved_best": self.improved_best,
                "is_best_so_far": self.is_best_so_far, "note": self.note}

    def to_file_dict(self) -> dict:
        # persisted lines are never rewritten, so only immutable facts go in
        d = self.to_dict()
        d.pop("is_best_so_far")
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "LogEntry":
        return cls(timestamp=str(d["timestamp"]), procedure=str(d["procedure"]),
                   config=ConfigKey.from_dict(d["config"]), report=dict(d["report"]),
                   improved_best=bool(d["improved_best"]), note=str(d.get("note", "")))


class DecisionLog:
    """Append-only record of procedure iterations, optionally file-backed.

    Appends are serialized through a lock (single writer); the persisted form
    is one JSON object per line, carrying the immutable ``improved_best``
    event flag. The live ``is_best_so_far`` flags are recomputed from the
    entry sequence (a pure function of the recorded deltas), so replaying a
    persisted log reproduces them exactly.
    """

    def __init__(self, path: Optional[str] = None):
        self.path = path
        self._entries: List[LogEntry] = []
        self._best: Dict[str, LogEntry] = {}
        self._lock = threading.Lock()
        if path:
            parent = os.path.dirname(path)
            if parent:
                os.makedirs(parent, exist_ok=True)
            if os.path.exists(path):
                for entry in self._read_file(path):
                    self._entries.append(entry)
                    if entry.improved_best:
                        self._mark_best(entry)

    def _mark_best(self, entry: LogEntry) -> None:
        previous = self._best.get(entry.procedure)
        if previous is not None:
            previous.is_best_so_far = False
        entry.is_best_so_far = True
        self._best[entry.procedure] = entry

    @staticmethod
    def _read_file(path: str):
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    yield LogEntry.from_dict(json.loads(line))
                except (json.JSONDecodeError, KeyError) as exc:
                    raise InputError(f"{path}:{lineno}: malformed log entry: {exc}")

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> Tuple[LogEntry, ...]:
        return tuple(self._entries)

    def current_best(self, procedure: str) -> Optional[LogEntry]:
        """The entry currently holding the argmin for this procedure."""
        return self._best.get(procedure)

    def best_delta(self, procedure: str) -> Optional[float]:
        best = self.current_best(procedure)
        return None if best is None else best.delta_s2

    def append(self, procedure: str, config: ConfigKey, report: SimilarityReport,
               note: str = "", expected_length: Optional[int] = None) -> LogEntry:
        """Append one iteration; moves the best flag iff it strictly improves.

        Ties keep the earlier entry. ``expected_length`` enables optimistic
        concurrency: the append is rejected when the log has grown since the
        caller last looked.
        """
        if procedure not in PROCEDURES:
            raise InputError(f"unknown procedure {procedure!r}; expected one of {PROCEDURES}")
        with self._lock:
            if expected_length is not None and expected_length != len(self._entries):
                raise StateError(
                    f"log moved on: expected {expected_length} entries, "
                    f"found {len(self._entries)}"
                )
            delta = report.delta_s2
            best = self.best_delta(procedure)
            improved = delta is not None and (best is None or delta < best)
            entry = LogEntry(
                timestamp=datetime.now(timezone.utc).isoformat(),
                procedure=procedure,
                config=config,
                report=report.to_dict(),
                improved_best=improved,
                note=note,
            )
            self._entries.append(entry)
            if improved:
                self._mark_best(entry)
            if self.path:
                with open(self.path, "a", encoding="utf-8") as f:
                    f.write(json.dumps(entry.to_file_dict(), sort_keys=True) + "\n")
            return entry

    @staticmethod
    def replay_flags(entries: Sequence[LogEntry]) -> List[bool]:
        """Recompute ``improved_best`` flags from scratch (determinism check)."""
        best: Dict[str, float] = {}
        flags = []
        for e in entries:
            delta = e.delta_s2
            improved = delta is not None and (e.procedure not in best or delta < best[e.procedure])
            if improved:
                best[e.procedure] = delta
            flags.append(improved)
        return flags


# ---------------------------------------------------------------------------
# Class grouping (procedure: classes)
# ---------------------------------------------------------------------------

def evaluate_grouping(base_set: EmbeddingSet, grouping: ClassGrouping,
                      log: DecisionLog, note: str = "",
                      expected_length: Optional[int] = None
                      ) -> Tuple[SimilarityReport, LogEntry]:
    """Score one grouping against the base set and record the iteration."""
    report = similarity_report(base_set, grouping)
    config = ConfigKey(grouping_name=grouping.name, color_mode=base_set.color_mode,
                       resolution=base_set.resolution or 1)
    entry = log.append("classes", config, report, note=note,
                       expected_length=expected_length)
    return report, entry


@dataclass(frozen=True)
class GuidanceRow:
    class_id: str
    s1: Optional[float]
    sigma2: Optional[float]
    pair_count: int
    instance_count: int
    insufficient: bool

    def to_dict(self) -> dict:
        return {"class_id": self.class_id, "s1": self.s1, "sigma2": self.sigma2,
                "pair_count": self.pair_count, "instance_count": self.instance_count,
                "insufficient": self.insufficient}


def grouping_guidance(emb: EmbeddingSet,
                      grouping: Optional[ClassGrouping] = None) -> List[GuidanceRow]:
    """Per-grouped-class intra-class stats, worst (lowest S1) first.

    Advisory only: low S1 / high variance flags the classes that make the
    current grouping hard. Classes too small for stats are flagged, not fatal.
    """
    if grouping is not None:
        emb = apply_grouping(emb, grouping)
    counts = emb.class_counts()
    rows = []
    for c in emb.classes:
        if counts[c] < 2:
            rows.append(GuidanceRow(class_id=c, s1=None, sigma2=None, pair_count=0,
                                    instance_count=counts[c], insufficient=True))
            continue
        st = intra_class(emb, c)
        rows.append(GuidanceRow(class_id=c, s1=st.s1, sigma2=st.sigma2,
                                pair_count=st.pair_count,
                                instance_count=st.instance_count, insufficient=False))
    rows.sort(key=lambda r: (r.insufficient, r.s1 if r.s1 is not None else math.inf,
                             r.class_id))
    return rows


# ---------------------------------------------------------------------------
# Color mode (procedure: color)
# ---------------------------------------------------------------------------

def _check_paired_sets(set_color: EmbeddingSet, set_gray: EmbeddingSet) -> None:
    if set_color.space_id != set_gray.space_id:
        raise InputError(
            f"color/gray sets come from different embedding spaces "
            f"({set_color.space_id!r} vs {set_gray.space_id!r}); cosines are not comparable"
        )
    if set_color.dimension != set_gray.dimension:
        raise InputError("color/gray sets disagree on dimension")
    if set(set_color.instance_ids) != set(set_gray.instance_ids):
        raise InputError("color/gray sets do not cover identical instance ids")
    color_cls = dict(zip(set_color.instance_ids, set_color.class_ids))
    gray_cls = dict(zip(set_gray.instance_ids, set_gray.class_ids))
    if color_cls != gray_cls:
        raise InputError("color/gray sets disagree on instance class labels")


@dataclass(frozen=True)
class ColorDecision:
    mode: str  # "gray" | "color"
    s2_max_color: float
    s2_max_gray: float
    report_color: SimilarityReport
    report_gray: SimilarityReport
    note: str = ""

    @property
    def chosen_report(self) -> SimilarityReport:
        return self.report_gray if self.mode == "gray" else self.report_color

    def to_dict(self) -> dict:
        return {"schema": "color-decision/1", "mode": self.mode,
                "s2_max_color": self.s2_max_color, "s2_max_gray": self.s2_max_gray,
                "report_color": self.report_color.to_dict(),
                "report_gray": self.report_gray.to_dict(), "note": self.note}


def select_color(set_color: EmbeddingSet, set_gray: EmbeddingSet,
                 grouping: Optional[ClassGrouping] = None) -> ColorDecision:
    """Grayscale when its worst-case inter-class similarity is no worse.

    Gray wins ties: equal worst cases mean grayscale loses nothing and saves
    first-layer computation.
    """
    _check_paired_sets(set_color, set_gray)
    report_color = similarity_report(set_color, grouping)
    report_gray = similarity_report(set_gray, grouping)
    mode = "gray" if report_gray.s2_max <= report_color.s2_max else "color"
    return ColorDecision(mode=mode, s2_max_color=report_color.s2_max,
                         s2_max_gray=report_gray.s2_max,
                         report_color=report_color, report_gray=report_gray)


def _cross_set_s2(emb_a: EmbeddingSet, class_a: str,
                  emb_b: EmbeddingSet, class_b: str) -> float:
    # Mean cosine between class_a instances of one set and class_b of another.
    units_a = emb_a.unit_vectors()[emb_a.rows_for(class_a)]
    units_b = emb_b.unit_vectors()[emb_b.rows_for(class_b)]
    block = units_a @ units_b.T
    return float(np.sum(block) / block.size)


@dataclass(frozen=True)
class PerClassColorDecision:
    modes: Dict[str, str]  # class_id -> "gray" | "color"
    detail: Dict[str, Dict[str, float]]  # class_id -> combo -> max over other classes
    note: str = ""

    def to_dict(self) -> dict:
        return {"schema": "per-class-color/1", "modes": dict(sorted(self.modes.items())),
                "detail": {c: dict(sorted(v.items())) for c, v in sorted(self.detail.items())},
                "note": self.note}


def select_color_per_class(set_color: EmbeddingSet, set_gray: EmbeddingSet,
                           grouping: Optional[ClassGrouping] = None
                           ) -> PerClassColorDecision:
    """Per-class mode map from the four (anchor, other) mode combinations.

    For each class, the worst-case similarity against every other class is
    computed with the anchor and the others each in gray or color. A class
    goes gray only when both gray-anchored worst cases are strictly smaller
    than both color-anchored ones. Per-class grayscale does not reduce
    computation by itself (the model still takes 3 channels); it can only
    help accuracy.
    """
    _check_paired_sets(set_color, set_gray)
    if grouping is not None:
        set_color = apply_grouping(set_color, grouping)
        set_gray = apply_grouping(set_gray, grouping)
    classes = set_color.classes
    if len(classes) < 2:
        raise InputError(f"per-class color selection needs >= 2 classes, got {len(classes)}")

    modes: Dict[str, str] = {}
    detail: Dict[str, Dict[str, float]] = {}
    for c in classes:
        others = [o for o in classes if o != c]
        combos = {
            "gray_gray": max(_cross_set_s2(set_gray, c, set_gray, o) for o in others),
            "gray_color": max(_cross_set_s2(set_gray, c, set_color, o) for o in others),
            "color_gray": max(_cross_set_s2(set_color, c, set_gray, o) for o in others),
            "color_color": max(_cross_set_s2(set_color, c, set_color, o) for o in others),
        }
        gray_anchored = (combos["gray_gray"], combos["gray_color"])
        color_anchored = (combos["color_gray"], combos["color_color"])
        go_gray = all(g < cmax for g in gray_anchored for cmax in color_anchored)
        modes[c] = "gray" if go_gray else "color"
        detail[c] = combos
    return PerClassColorDecision(
        modes=modes, detail=detail,
        note="per-class grayscale does not directly yield computation reduction; "
             "the (gray,color)/(color,gray) combos coincide across the two anchors "
             "of a class pair, so the four combinations hold three distinct values",
    )


# ---------------------------------------------------------------------------
# Resolution ladder (procedure: resolution)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LadderRung:
    resolution: int
    report: SimilarityReport

    @property
    def delta_s2(self) -> Optional[float]:
        return self.report.delta_s2


@dataclass(frozen=True)
class LadderResult:
    chosen_resolution: int
    rungs: Tuple[LadderRung, ...]  # descending resolution
    warnings: Tuple[str, ...] = ()

    @property
    def chosen_rung(self) -> LadderRung:
        for r in self.rungs:
            if r.resolution == self.chosen_resolution:
                return r
        raise StateError("ladder lost its chosen rung")  # unreachable

    def to_dict(self) -> dict:
        return {
            "schema": "resolution-ladder/1",
            "chosen_resolution": self.chosen_resolution,
            "rungs": [{"resolution": r.resolution, "delta_s2": r.delta_s2,
                       "s2_max": r.report.s2_max, "s2_mean": r.report.s2_mean}
                      for r in self.rungs],
            "warnings": list(self.warnings),
        }


LadderSets = Union[Sequence[EmbeddingSet], Mapping[int, Optional[EmbeddingSet]]]


def resolution_ladder(sets_by_resolution: LadderSets,
                      grouping: Optional[ClassGrouping] = None,
                      class_max_scales: Optional[Mapping[str, float]] = None,
                      min_bbox_pixels: int = DEFAULT_MIN_BBOX_PIXELS,
                      log: Optional[DecisionLog] = None,
                      note: str = "") -> LadderResult:
    """Walk the halving-resolution ladder and pick the lowest-spread rung.

    Rung order does not matter: rungs are sorted by resolution internally and
    ties go to the higher resolution. When per-class maximum scales are
    supplied, a warning is emitted for every class whose largest object would
    fall below ``min_bbox_pixels`` at the chosen resolution (shrinking
    resolution shrinks scale with it, and texture-level features go first).
    """
    if isinstance(sets_by_resolution, Mapping):
        items = []
        for res, emb in sets_by_resolution.items():
            if emb is None:
                raise InputError(f"missing embedding set for resolution {res}")
            items.append(emb)
    else:
        items = list(sets_by_resolution)
    if len(items) < 2:
        raise InputError(f"resolution ladder needs >= 2 rungs, got {len(items)}")
    for emb in items:
        if emb.resolution is None:
            raise InputError(f"embedding set {emb.config_tag!r} has no resolution")
    items.sort(key=lambda e: -int(e.resolution))
    resolutions = [int(e.resolution) for e in items]
    if len(set(resolutions)) != len(resolutions):
        raise InputError(f"duplicate resolutions in ladder: {resolutions}")
    for prev, cur in zip(resolutions, resolutions[1:]):
        if abs(cur - prev / 2) > 1:
            raise InputError(
                f"ladder resolutions must halve (±1 px): {prev} -> {cur}"
            )

    rungs = []
    for emb in items:
        report = similarity_report(emb, grouping)
        rungs.append(LadderRung(resolution=int(emb.resolution), report=report))

    defined = [r for r in rungs if r.delta_s2 is not None]
    if not defined:
        raise InputError("delta-S2 undefined on every ladder rung; cannot choose")
    chosen = min(defined, key=lambda r: (r.delta_s2, -r.resolution))

    warnings = []
    if class_max_scales:
        for cid in sorted(class_max_scales):
            b = math.ceil(class_max_scales[cid] * chosen.resolution)
            if b < min_bbox_pixels:
                warnings.append(
                    f"class {cid!r}: largest object is {b} px at {chosen.resolution} px "
                    f"(< {min_bbox_pixels} px); scale shrank with resolution and "
                    "texture features may not survive"
                )

    if log is not None:
        for rung in rungs:
            config = ConfigKey(grouping_name=rung.report.grouping_name,
                               color_mode=rung.report.color_mode,
                               resolution=rung.resolution)
            log.append("resolution", config, rung.report, note=note)

    return LadderResult(chosen_resolution=chosen.resolution, rungs=tuple(rungs),
                        warnings=tuple(warnings))


# ---------------------------------------------------------------------------
# Final recommendation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Recommendation:
    config: ConfigKey
    min_layers: int
    b_max_at_resolution: int
    max_object_scale: float
    flops_estimate: Optional[int]
    warnings: Tuple[str, ...] = ()
    per_class_color: Optional[Dict[str, str]] = None

    def to_dict(self) -> dict:
        return {
            "schema": "recommendation/1",
            "config": self.config.to_dict(),
            "min_layers": self.min_layers,
            "b_max_at_resolution": self.b_max_at_resolution,
            "max_object_scale": self.max_object_scale,
            "flops_estimate": self.flops_estimate,
            "per_class_color": self.per_class_color,
            "warnings": list(self.warnings),
        }


def recommend(log: DecisionLog, annotations: Sequence[BBoxAnnotation],
              model_spec=None, grouping: Optional[ClassGrouping] = None,
              min_bbox_pixels: int = DEFAULT_MIN_BBOX_PIXELS,
              small_class_count: int = DEFAULT_SMALL_CLASS_COUNT,
              high_s2: float = DEFAULT_HIGH_S2) -> Recommendation:
    """Assemble the final configuration from the three procedures' best entries.

    The largest object scale (after grouping) times the chosen resolution
    gives the maximum object size in pixels, whose receptive-field bound
    yields the minimum conv depth. A model spec, when given, is re-chained at
    the chosen resolution and color mode for a FLOP estimate.
    """
    missing = [p for p in PROCEDURES if log.current_best(p) is None]
    if missing:
        raise StateError(
            "cannot recommend yet; no completed iterations for: " + ", ".join(missing)
        )
    best_classes = log.current_best("classes")
    best_color = log.current_best("color")
    best_resolution = log.current_best("resolution")

    if not annotations:
        raise InputError("no annotations given")
    if grouping is not None and grouping.name != best_classes.config.grouping_name:
        raise InputError(
            f"grouping {grouping.name!r} does not match the selected grouping "
            f"{best_classes.config.grouping_name!r}"
        )

    resolution = best_resolution.config.resolution
    color_mode = best_color.config.color_mode

    max_scale = 0.0
    class_max: Dict[str, float] = {}
    for a in annotations:
        cid = a.class_id if grouping is None else grouping.mapping.get(a.class_id)
        if cid is None:
            continue
        s = object_scale(a)
        max_scale = max(max_scale, s)
        class_max[cid] = max(class_max.get(cid, 0.0), s)
    if max_scale == 0.0:
        raise InputError("grouping dropped every annotated class")

    b_max = math.ceil(max_scale * resolution)
    layers = scale_min_layers(b_max)

    warnings: List[str] = []
    for cid in sorted(class_max):
        b = math.ceil(class_max[cid] * resolution)
        if b < min_bbox_pixels:
            warnings.append(
                f"class {cid!r}: largest object is {b} px at {resolution} px "
                f"(< {min_bbox_pixels} px); texture features may not survive"
            )
    class_count = len(best_classes.report.get("classes", []))
    s2_max = best_classes.report.get("s2_max")
    if s2_max is not None and class_count <= small_class_count and s2_max >= high_s2:
        warnings.append(
            f"worst-case inter-class similarity {s2_max:.3f} stays high with only "
            f"{class_count} grouped classes; intra/inter similarity couple weakly at "
            "small class counts, so rely on held-out accuracy checks before shrinking further"
        )

    per_class_color = None
    if color_mode == "per-class":
        try:
            parsed = json.loads(best_color.note)
            if isinstance(parsed, dict):
                per_class_color = {str(k): str(v) for k, v in parsed.items()}
        except (json.JSONDecodeError, TypeError):
            per_class_color = None
        warnings.append(
            "per-class color map does not reduce computation; the model still takes color input"
        )

    flops_total = None
    if model_spec is not None:
        from .flops import at_resolution, model_flops
        mode = color_mode if color_mode in ("color", "gray") else "color"
        flops_total = model_flops(at_resolution(model_spec, resolution), mode).total

    return Recommendation(
        config=ConfigKey(grouping_name=best_classes.config.grouping_name,
                         color_mode=color_mode, resolution=resolution),
        min_layers=layers,
        b_max_at_resolution=b_max,
        max_object_scale=max_scale,
        flops_estimate=flops_total,
        warnings=tuple(warnings),
        per_class_color=per_class_color,
    )
