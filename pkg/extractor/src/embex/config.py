"""Extractor configuration."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence


class ExtractorError(Exception):
    pass


class DegenerateDatasetError(ExtractorError):
    pass


@dataclass
class ExtractorConfig:
    """One training/export run.

    ``source`` is either a class-per-folder image directory or a COCO pair
    (instances json + images directory) whose boxes are cropped per class.
    ``color_modes`` and ``resolutions`` enumerate the configurations to
    export; one model is trained once (at the first resolution, in color)
    and applied to every configuration so all exported sets share one
    embedding space.
    """

    source_type: str  # "folder" | "coco"
    source_path: str
    output_dir: str
    space_id: str
    resolutions: Sequence[int] = (64,)
    color_modes: Sequence[str] = ("color",)
    images_dir: Optional[str] = None  # coco only
    grouping_file: Optional[str] = None
    loss: str = "triplet"  # "triplet" | "contrastive"
    epochs: int = 12
    embedding_dim: int = 128
    batch_size: int = 32
    learning_rate: float = 1e-3
    margin: float = 0.4
    seed: int = 0
    convergence_loss: float = 0.25  # warn above this final loss, export anyway
    config_tag: str = ""

    def __post_init__(self):
        if self.source_type not in ("folder", "coco"):
            raise ExtractorError(f"unknown source_type {self.source_type!r}")
        if self.loss not in ("triplet", "contrastive"):
            raise ExtractorError(f"unknown loss {self.loss!r}")
        if not self.resolutions:
            raise ExtractorError("at least one resolution required")
        for mode in self.color_modes:
            if mode not in ("color", "gray"):
                raise ExtractorError(f"unknown color mode {mode!r}")

    @classmethod
    def load(cls, path: str) -> "ExtractorConfig":
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
        return cls(**raw)
