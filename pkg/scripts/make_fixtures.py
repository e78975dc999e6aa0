#!/usr/bin/env python3
"""Generate the shipped synthetic fixture set under fixtures/.

Four classes (sedan, suv, truck, pedestrian) embedded in a 32-d space:
  * coord 0      shared base direction,
  * coords 1-4   per-class "shape" axes,
  * coord 5      a "hue" axis that separates sedan from suv and is zeroed in
                 the grayscale embedding,
  * the rest     noise.

Grayscale sets zero the hue axis and push pedestrian onto a spare axis
(its silhouette gets *more* distinctive without color), so the global color
procedure picks COLOR while the per-class option sends pedestrian to gray.

The ladder attenuates shape/hue axes as resolution drops; the hue axis dies
fastest, collapsing sedan/suv at 16 px. Deltas order as
delta(32) < delta(64) < delta(16), so the middle rung wins.

Deterministic: everything derives from SEED. Asserts the properties the
fixtures are shipped to exhibit.
"""

import json
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from cnnsizer import EmbeddingSet, select_color, select_color_per_class, similarity_report
from cnnsizer.dataio import write_embeddings, write_grouping
from cnnsizer.grouping import ClassGrouping

SEED = 20260810
DIM = 32
PER_CLASS = 40
CLASSES = ("pedestrian", "sedan", "suv", "truck")
SPACE = "fixture-metric-v1"

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "fixtures")

# (shape_axis, shape_magnitude, hue_value, fine_texture_magnitude)
GEOMETRY = {
    "sedan": (1, 1.2, +0.8, 0.0),
    "suv": (1, 1.0, -0.8, 0.0),
    "truck": (2, 1.6, +0.3, 1.8),
    "pedestrian": (3, 2.8, 0.0, 0.0),
}
BASE = 3.0
NOISE = 0.35
HUE_AXIS = 5
PED_GRAY_AXIS = 4
PED_GRAY_BONUS = 1.8
TEXTURE_AXIS = 6

# attenuation of (coarse shape, fine detail) axes per ladder resolution; hue and
# fine texture ride the second schedule and die together at 16 px
ATTENUATION = {64: (1.0, 1.0), 32: (0.85, 0.95), 16: (0.80, 0.08)}


def base_noise():
    rng = np.random.default_rng(SEED)
    return rng.normal(0.0, NOISE, size=(len(CLASSES) * PER_CLASS, DIM))


def build(resolution, color_mode):
    shape_a, fine_a = ATTENUATION[resolution]
    noise = base_noise()
    records = []
    for k, cid in enumerate(CLASSES):
        axis, mag, hue, texture = GEOMETRY[cid]
        for i in range(PER_CLASS):
            vec = noise[k * PER_CLASS + i].copy()
            vec[0] += BASE
            vec[axis] += mag * shape_a
            vec[TEXTURE_AXIS] += texture * fine_a
            if color_mode == "color":
                vec[HUE_AXIS] += hue * fine_a
            else:
                vec[HUE_AXIS] = 0.0
                if cid == "pedestrian":
                    vec[PED_GRAY_AXIS] += PED_GRAY_BONUS * shape_a
            records.append((f"{cid}-{i:03d}", cid, vec))
    return EmbeddingSet.build(
        DIM, records, config_tag=f"identity-{color_mode}-{resolution}",
        space_id=SPACE, color_mode=color_mode, resolution=resolution,
        grouping_name="identity")


def make_annotations():
    rng = np.random.default_rng(SEED + 1)
    images = [{"id": i, "width": 640, "height": 480, "file_name": f"frame{i:03d}.png"}
              for i in range(12)]
    categories = [{"id": i + 1, "name": c} for i, c in enumerate(CLASSES)]
    cat_id = {c: i + 1 for i, c in enumerate(CLASSES)}
    size_ranges = {  # longer side in pixels on the 640-wide frames
        "sedan": (140, 300), "suv": (150, 320), "truck": (200, 480),
        "pedestrian": (20, 45),
    }
    annotations = []
    ann_id = 0
    for cid in CLASSES:
        lo, hi = size_ranges[cid]
        for _ in range(10):
            ann_id += 1
            side = float(rng.integers(lo, hi + 1))
            aspect = float(rng.uniform(0.4, 0.9))
            w, h = (side, side * aspect) if cid != "pedestrian" else (side * aspect, side)
            img = int(rng.integers(0, len(images)))
            x = float(rng.uniform(0, 640 - w))
            y = float(rng.uniform(0, 480 - h))
            annotations.append({"id": ann_id, "image_id": img,
                                "category_id": cat_id[cid],
                                "bbox": [round(x, 1), round(y, 1),
                                         round(w, 1), round(h, 1)]})
    # one deliberately broken record to exercise the rejects path
    annotations.append({"id": ann_id + 1, "image_id": 0, "category_id": cat_id["truck"],
                        "bbox": [600.0, 400.0, 200.0, 200.0]})
    # pin the largest truck so max scale is exactly 0.75
    annotations.append({"id": ann_id + 2, "image_id": 1, "category_id": cat_id["truck"],
                        "bbox": [10.0, 10.0, 480.0, 300.0]})
    return {"images": images, "annotations": annotations, "categories": categories}


def main():
    emb_dir = os.path.join(FIXTURES, "emb")
    os.makedirs(emb_dir, exist_ok=True)
    os.makedirs(os.path.join(FIXTURES, "groupings"), exist_ok=True)

    sets = {}
    for res in (64, 32, 16):
        for mode in ("color", "gray"):
            emb = build(res, mode)
            sets[(res, mode)] = emb
            write_embeddings(emb, os.path.join(emb_dir, f"identity-{mode}-{res}.semb"))

    # --- properties the fixtures are shipped to exhibit --------------------
    color64, gray64 = sets[(64, "color")], sets[(64, "gray")]
    decision = select_color(color64, gray64)
    assert decision.mode == "color", decision
    per_class = select_color_per_class(color64, gray64)
    assert per_class.modes["pedestrian"] == "gray", per_class.modes
    assert all(per_class.modes[c] == "color" for c in ("sedan", "suv", "truck"))

    merge = ClassGrouping("merge-sedan-suv", {
        "sedan": "car", "suv": "car", "truck": "truck", "pedestrian": "pedestrian"})
    deltas = {res: similarity_report(sets[(res, "color")]).delta_s2
              for res in (64, 32, 16)}
    merged_deltas = {res: similarity_report(sets[(res, "color")], merge).delta_s2
                     for res in (64, 32, 16)}
    print("color s2_max:", decision.s2_max_color, "gray s2_max:", decision.s2_max_gray)
    print("identity ladder deltas:", deltas)
    print("merged ladder deltas:", merged_deltas)
    # the middle rung must win clearly under both groupings
    for d in (deltas, merged_deltas):
        assert d[32] < 0.92 * d[64] and d[32] < 0.92 * d[16], d

    report64 = similarity_report(color64)
    assert report64.argmax_pair == ("sedan", "suv"), report64.argmax_pair
    merged = similarity_report(color64, merge)
    assert merged.delta_s2 < 0.85 * report64.delta_s2, (merged.delta_s2, report64.delta_s2)
    print("identity delta:", report64.delta_s2, "merged delta:", merged.delta_s2)

    write_grouping(merge, os.path.join(FIXTURES, "groupings", "merge-sedan-suv.json"))

    coco = make_annotations()
    with open(os.path.join(FIXTURES, "annotations.json"), "w") as f:
        json.dump(coco, f, indent=1)
        f.write("\n")

    config = {
        "seed": SEED,
        "annotations": "annotations.json",
        "decision_log": "out/decisions.jsonl",
        "base_config": {"grouping": "identity", "color_mode": "color", "resolution": 64},
        "embedding_sets": [
            {"grouping": "identity", "color_mode": mode, "resolution": res,
             "path": f"emb/identity-{mode}-{res}.semb"}
            for res in (64, 32, 16) for mode in ("color", "gray")
        ],
        "ladder_resolutions": [64, 32, 16],
        "model_spec": "enb0-32",
        "histogram_bins": 20,
        "thresholds": {"min_bbox_pixels": 8, "small_class_count": 3,
                       "high_s2": 0.5, "stop_delta": None},
        "bind": {"host": "127.0.0.1", "port": 8350},
    }
    with open(os.path.join(FIXTURES, "config.json"), "w") as f:
        json.dump(config, f, indent=1)
        f.write("\n")
    print("fixtures written to", os.path.abspath(FIXTURES))


if __name__ == "__main__":
    main()
