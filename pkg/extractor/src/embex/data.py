"""Image sources: class-per-folder trees, COCO crops, and the toy-shapes set."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from PIL import Image, ImageDraw

from .config import DegenerateDatasetError, ExtractorError

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True)
class Sample:
    instance_id: str
    class_id: str
    image: Image.Image  # RGB


def load_folder_dataset(root: str) -> List[Sample]:
    """One subdirectory per class, images inside."""
    if not os.path.isdir(root):
        raise ExtractorError(f"not a directory: {root}")
    samples = []
    for class_id in sorted(os.listdir(root)):
        class_dir = os.path.join(root, class_id)
        if not os.path.isdir(class_dir):
            continue
        for fname in sorted(os.listdir(class_dir)):
            if not fname.lower().endswith(IMAGE_EXTENSIONS):
                continue
            with Image.open(os.path.join(class_dir, fname)) as img:
                samples.append(Sample(instance_id=f"{class_id}/{fname}",
                                      class_id=class_id,
                                      image=img.convert("RGB").copy()))
    _check_degenerate(samples)
    return samples


def load_coco_crops(instances_path: str, images_dir: str,
                    min_side: int = 8) -> List[Sample]:
    """Crop every valid annotation box out of its source image."""
    with open(instances_path, "r", encoding="utf-8") as f:
        data = json.load(f)
    images = {img["id"]: img for img in data.get("images", [])}
    categories = {c["id"]: str(c.get("name", c["id"]))
                  for c in data.get("categories", [])}
    samples = []
    opened = {}
    try:
        for ann in data.get("annotations", []):
            img_meta = images.get(ann.get("image_id"))
            if img_meta is None:
                continue
            x, y, w, h = ann["bbox"]
            if w < min_side or h < min_side:
                continue
            path = os.path.join(images_dir, img_meta["file_name"])
            if path not in opened:
                if not os.path.exists(path):
                    continue
                opened[path] = Image.open(path).convert("RGB")
            crop = opened[path].crop((int(x), int(y), int(x + w), int(y + h)))
            samples.append(Sample(instance_id=str(ann["id"]),
                                  class_id=categories.get(ann.get("category_id"),
                                                          str(ann.get("category_id"))),
                                  image=crop))
    finally:
        for img in opened.values():
            img.close()
    _check_degenerate(samples)
    return samples


def _check_degenerate(samples: List[Sample]) -> None:
    counts = {}
    for s in samples:
        counts[s.class_id] = counts.get(s.class_id, 0) + 1
    if len(counts) < 2:
        raise DegenerateDatasetError(
            f"need >= 2 classes, found {sorted(counts) or 'none'}")
    small = sorted(c for c, n in counts.items() if n < 2)
    if small:
        raise DegenerateDatasetError(
            f"need >= 2 instances per class, too few in: {', '.join(small)}")


def make_toy_shapes(root: str, per_class: int = 32, size: int = 64,
                    seed: int = 7) -> str:
    """Write the 2-class toy dataset (filled discs vs hollow boxes) to disk.

    Discs vary in warm colors, boxes in cool colors, on gray backgrounds;
    64 images by default. Deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    for class_id in ("disc", "box"):
        os.makedirs(os.path.join(root, class_id), exist_ok=True)
        for i in range(per_class):
            bg = int(rng.integers(180, 230))
            img = Image.new("RGB", (size, size), (bg, bg, bg))
            draw = ImageDraw.Draw(img)
            cx, cy = (int(rng.integers(20, size - 20)) for _ in range(2))
            r = int(rng.integers(10, 18))
            if class_id == "disc":
                color = (int(rng.integers(170, 255)), int(rng.integers(40, 110)),
                         int(rng.integers(30, 90)))
                draw.ellipse((cx - r, cy - r, cx + r, cy + r), fill=color)
            else:
                color = (int(rng.integers(30, 90)), int(rng.integers(60, 130)),
                         int(rng.integers(170, 255)))
                draw.rectangle((cx - r, cy - r, cx + r, cy + r), outline=color,
                               width=int(rng.integers(3, 6)))
            img.save(os.path.join(root, class_id, f"{class_id}-{i:03d}.png"))
    return root
