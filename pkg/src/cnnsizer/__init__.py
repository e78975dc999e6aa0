"""cnnsizer: dataset-attribute analysis for sizing lightweight CNNs.

Computes intra-/inter-class similarity statistics over embedding vectors,
object-scale and FLOP statistics over annotations and model specs, and runs
the class-grouping / color-mode / resolution selection procedures that
recommend the smallest viable CNN configuration for an application.
"""

from .errors import (ChecksumError, CnnsizerError, FormatError, InputError,
                     InsufficientDataError, StateError, UndefinedCorrelationError)
from .flops import (ConvLayerSpec, FlopsReport, ModelSpec, at_resolution,
                    conv_flops, format_kflops, gray_variant, model_flops,
                    resolution_sweep)
from .grouping import ClassGrouping
from .scale import (BBoxAnnotation, ScaleStats, ScaleSummary, min_layers,
                    object_scale, receptive_field, scale_stats)
from .selection import (ColorDecision, ConfigKey, DecisionLog, LadderResult,
                        LogEntry, PerClassColorDecision, Recommendation,
                        evaluate_grouping, grouping_guidance, recommend,
                        resolution_ladder, select_color, select_color_per_class)
from .similarity import (ClassSimilarityStats, EmbeddingSet, SimilarityReport,
                         apply_grouping, cosine, inter_class, intra_class,
                         pearson, similarity_report)
from .synthetic import make_cluster_set

__version__ = "0.1.0"

__all__ = [
    "BBoxAnnotation", "ChecksumError", "ClassGrouping", "ClassSimilarityStats",
    "CnnsizerError", "ColorDecision", "ConfigKey", "ConvLayerSpec", "DecisionLog",
    "EmbeddingSet", "FlopsReport", "FormatError", "InputError",
    "InsufficientDataError", "LadderResult", "LogEntry", "ModelSpec",
    "PerClassColorDecision", "Recommendation", "ScaleStats", "ScaleSummary",
    "SimilarityReport", "StateError", "UndefinedCorrelationError",
    "apply_grouping", "at_resolution", "conv_flops", "cosine",
    "evaluate_grouping", "format_kflops", "gray_variant", "grouping_guidance",
    "inter_class", "intra_class", "make_cluster_set", "min_layers",
    "model_flops", "object_scale", "pearson", "receptive_field", "recommend",
    "resolution_ladder", "resolution_sweep", "scale_stats", "select_color",
    "select_color_per_class", "similarity_report",
]
