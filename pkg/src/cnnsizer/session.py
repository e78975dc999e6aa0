"""Analysis session: config file, embedding-set registry, decision log.

One session drives one project. The config file (JSON) names the annotation
file, the embedding sets per configuration, the resolution ladder, thresholds
and the decision-log path; the session lazily loads sets, runs the selection
procedures against them and serializes all log appends.

Groupings evaluated through the session are persisted as grouping files next
to the decision log, so a restarted session can still regroup annotations for
the final recommendation.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from . import selection
from .dataio import (builtin_model_spec, read_annotations, read_embeddings,
                     read_grouping, write_grouping)
from .errors import FormatError, InputError, StateError
from .flops import ModelSpec
from .grouping import ClassGrouping
from .scale import BBoxAnnotation, object_scale
from .selection import (ColorDecision, ConfigKey, DecisionLog, LadderResult,
                        PerClassColorDecision, Recommendation, SimilarityReport)
from .similarity import EmbeddingSet, similarity_report


@dataclass(frozen=True)
class Thresholds:
    min_bbox_pixels: int = selection.DEFAULT_MIN_BBOX_PIXELS
    small_class_count: int = selection.DEFAULT_SMALL_CLASS_COUNT
    high_s2: float = selection.DEFAULT_HIGH_S2
    stop_delta: Optional[float] = None


@dataclass(frozen=True)
class SessionConfig:
    base_dir: str
    base_config: ConfigKey
    registry: Dict[ConfigKey, str]
    annotations_path: Optional[str]
    decision_log_path: Optional[str]
    ladder_resolutions: Tuple[int, ...]
    model_spec_ref: Optional[str]
    thresholds: Thresholds = field(default_factory=Thresholds)
    histogram_bins: int = 20
    seed: int = 0
    host: str = "127.0.0.1"
    port: int = 8350

    @classmethod
    def load(cls, path: str) -> "SessionConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                raw = json.load(f)
        except FileNotFoundError:
            raise FormatError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}")
        base_dir = os.path.dirname(os.path.abspath(path))

        def resolve(p):
            return p if p is None or os.path.isabs(p) else os.path.join(base_dir, p)

        registry = {}
        for i, entry in enumerate(raw.get("embedding_sets", [])):
            try:
                key = ConfigKey(grouping_name=str(entry.get("grouping", "identity")),
                                color_mode=str(entry["color_mode"]),
                                resolution=int(entry["resolution"]))
                registry[key] = resolve(str(entry["path"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{path}: embedding_sets[{i}] malformed: {exc}")
        if not registry:
            raise FormatError(f"{path}: config lists no embedding sets")

        base_raw = raw.get("base_config")
        if base_raw:
            base = ConfigKey.from_dict(base_raw)
        else:
            base = sorted(registry, key=lambda k: (k.grouping_name, k.color_mode,
                                                   -k.resolution))[0]
        if base not in registry:
            raise FormatError(f"{path}: base_config {base} is not in embedding_sets")

        th = raw.get("thresholds", {})
        thresholds = Thresholds(
            min_bbox_pixels=int(th.get("min_bbox_pixels", selection.DEFAULT_MIN_BBOX_PIXELS)),
            small_class_count=int(th.get("small_class_count",
                                         selection.DEFAULT_SMALL_CLASS_COUNT)),
            high_s2=float(th.get("high_s2", selection.DEFAULT_HIGH_S2)),
            stop_delta=th.get("stop_delta"),
        )
        bind = raw.get("bind", {})
        return cls(
            base_dir=base_dir,
            base_config=base,
            registry=registry,
            annotations_path=resolve(raw.get("annotations")),
            decision_log_path=resolve(raw.get("decision_log")),
            ladder_resolutions=tuple(int(r) for r in raw.get("ladder_resolutions", [])),
            model_spec_ref=raw.get("model_spec"),
            thresholds=thresholds,
            histogram_bins=int(raw.get("histogram_bins", 20)),
            seed=int(raw.get("seed", 0)),
            host=str(bind.get("host", "127.0.0.1")),
            port=int(bind.get("port", 8350)),
        )


class Session:
    """Single-project state shared by the CLI commands and the HTTP API.

    Embedding sets load lazily and cache; the decision log is file-backed and
    append-only. Procedure methods are safe to call concurrently: evaluations
    are pure and appends serialize through the log's writer lock.
    """

    def __init__(self, config: SessionConfig):
        self.config = config
        self.log = DecisionLog(config.decision_log_path)
        self._sets: Dict[ConfigKey, EmbeddingSet] = {}
        self._sets_lock = threading.Lock()
        self._groupings: Dict[str, ClassGrouping] = {}
        self._annotations: Optional[Tuple[BBoxAnnotation, ...]] = None
        self._load_session_groupings()

    @classmethod
    def open(cls, config_path: str) -> "Session":
        return cls(SessionConfig.load(config_path))

    # -- embedding sets -----------------------------------------------------

    def embedding_set(self, key: ConfigKey) -> EmbeddingSet:
        with self._sets_lock:
            if key not in self._sets:
                path = self.config.registry.get(key)
                if path is None:
                    raise InputError(
                        f"no embedding set registered for grouping={key.grouping_name} "
                        f"color={key.color_mode} resolution={key.resolution}"
                    )
                self._sets[key] = read_embeddings(path)
            return self._sets[key]

    def base_set(self) -> EmbeddingSet:
        return self.embedding_set(self.config.base_config)

    # -- groupings ----------------------------------------------------------

    @property
    def groupings_dir(self) -> Optional[str]:
        if not self.config.decision_log_path:
            return None
        return os.path.join(os.path.dirname(self.config.decision_log_path),
                            "session-groupings")

    def _load_session_groupings(self) -> None:
        directory = self.groupings_dir
        if directory and os.path.isdir(directory):
            for fname in sorted(os.listdir(directory)):
                if fname.endswith(".json"):
                    g = read_grouping(os.path.join(directory, fname))
                    self._groupings[g.name] = g

    def remember_grouping(self, grouping: ClassGrouping) -> None:
        self._groupings[grouping.name] = grouping
        directory = self.groupings_dir
        if directory:
            os.makedirs(directory, exist_ok=True)
            write_grouping(grouping, os.path.join(directory, f"{grouping.name}.json"))

    def identity_grouping(self) -> ClassGrouping:
        return ClassGrouping.identity(self.base_set().classes)

    def grouping_by_name(self, name: str) -> Optional[ClassGrouping]:
        if name in self._groupings:
            return self._groupings[name]
        if name == "identity":
            return self.identity_grouping()
        return None

    def best_grouping(self) -> Optional[ClassGrouping]:
        """Grouping object behind the best classes entry, when recoverable."""
        best = self.log.current_best("classes")
        if best is None:
            return None
        grouping = self.grouping_by_name(best.config.grouping_name)
        if grouping is None:
            raise StateError(
                f"selected grouping {best.config.grouping_name!r} is not available in "
                "this session; re-evaluate it or restore its grouping file"
            )
        return grouping

    # -- annotations --------------------------------------------------------

    def annotations(self) -> Tuple[BBoxAnnotation, ...]:
        if self._annotations is None:
            if not self.config.annotations_path:
                raise StateError("config does not name an annotations file")
            self._annotations = read_annotations(self.config.annotations_path).annotations
        return self._annotations

    def class_max_scales(self, grouping: Optional[ClassGrouping]) -> Dict[str, float]:
        scales: Dict[str, float] = {}
        for a in self.annotations():
            cid = a.class_id if grouping is None else grouping.mapping.get(a.class_id)
            if cid is None:
                continue
            scales[cid] = max(scales.get(cid, 0.0), object_scale(a))
        return scales

    # -- procedures ---------------------------------------------------------

    def evaluate_grouping(self, grouping: ClassGrouping, note: str = "",
                          expected_length: Optional[int] = None
                          ) -> Tuple[SimilarityReport, selection.LogEntry]:
        report, entry = selection.evaluate_grouping(
            self.base_set(), grouping, self.log, note=note,
            expected_length=expected_length)
        self.remember_grouping(grouping)
        return report, entry

    def _paired_color_sets(self) -> Tuple[EmbeddingSet, EmbeddingSet]:
        base = self.config.base_config
        color_key = ConfigKey(base.grouping_name, "color", base.resolution)
        gray_key = ConfigKey(base.grouping_name, "gray", base.resolution)
        return self.embedding_set(color_key), self.embedding_set(gray_key)

    def select_color(self, per_class: bool = False,
                     expected_length: Optional[int] = None):
        grouping = self.best_grouping()
        set_color, set_gray = self._paired_color_sets()
        if per_class:
            decision = selection.select_color_per_class(set_color, set_gray, grouping)
            # headline report for the log: the all-color report (per-class maps
            # do not change the model input) with the mode map in the note
            report = similarity_report(set_color, grouping)
            config = ConfigKey(report.grouping_name, "per-class",
                               self.config.base_config.resolution)
            self.log.append("color", config, report,
                            note=json.dumps(decision.modes, sort_keys=True),
                            expected_length=expected_length)
            return decision
        decision = selection.select_color(set_color, set_gray, grouping)
        config = ConfigKey(decision.chosen_report.grouping_name, decision.mode,
                           self.config.base_config.resolution)
        self.log.append("color", config, decision.chosen_report,
                        note=f"s2_max color={decision.s2_max_color!r} "
                             f"gray={decision.s2_max_gray!r}",
                        expected_length=expected_length)
        return decision

    def ladder_color_mode(self) -> str:
        best = self.log.current_best("color")
        if best is not None and best.config.color_mode in ("color", "gray"):
            return best.config.color_mode
        return self.config.base_config.color_mode

    def ladder_sets(self) -> List[EmbeddingSet]:
        resolutions = self.config.ladder_resolutions
        if len(resolutions) < 2:
            raise InputError("config must list >= 2 ladder_resolutions")
        mode = self.ladder_color_mode()
        base = self.config.base_config
        sets = []
        for res in resolutions:
            key = ConfigKey(base.grouping_name, mode, res)
            if key not in self.config.registry:
                raise InputError(f"missing embedding set for resolution {res} ({mode})")
            sets.append(self.embedding_set(key))
        return sets

    def resolution_ladder(self, commit: bool = True,
                          expected_length: Optional[int] = None) -> LadderResult:
        grouping = self.best_grouping()
        class_scales = None
        if self.config.annotations_path:
            class_scales = self.class_max_scales(grouping)
        if commit and expected_length is not None and expected_length != len(self.log):
            raise StateError(
                f"log moved on: expected {expected_length} entries, found {len(self.log)}"
            )
        return selection.resolution_ladder(
            self.ladder_sets(), grouping=grouping, class_max_scales=class_scales,
            min_bbox_pixels=self.config.thresholds.min_bbox_pixels,
            log=self.log if commit else None)

    def model_spec(self) -> Optional[ModelSpec]:
        ref = self.config.model_spec_ref
        if not ref:
            return None
        candidate = ref if os.path.isabs(ref) else os.path.join(self.config.base_dir, ref)
        if os.path.exists(candidate):
            from .dataio import read_model_spec
            return read_model_spec(candidate)
        return builtin_model_spec(ref)

    def recommendation(self) -> Recommendation:
        grouping = self.best_grouping()
        if grouping is None:
            raise StateError("cannot recommend yet; no completed iterations for: "
                             "classes, color, resolution")
        return selection.recommend(
            self.log, self.annotations(), model_spec=self.model_spec(),
            grouping=grouping,
            min_bbox_pixels=self.config.thresholds.min_bbox_pixels,
            small_class_count=self.config.thresholds.small_class_count,
            high_s2=self.config.thresholds.high_s2)

    def report_for(self, key: ConfigKey) -> SimilarityReport:
        """Similarity report for a registry configuration (or an evaluated grouping)."""
        if key in self.config.registry:
            return similarity_report(self.embedding_set(key))
        grouping = self.grouping_by_name(key.grouping_name)
        if grouping is not None:
            base = self.config.base_config
            source = ConfigKey(base.grouping_name, key.color_mode, key.resolution)
            if source in self.config.registry:
                return similarity_report(self.embedding_set(source), grouping)
        raise InputError(
            f"no embedding set or evaluated grouping for grouping={key.grouping_name} "
            f"color={key.color_mode} resolution={key.resolution}"
        )
