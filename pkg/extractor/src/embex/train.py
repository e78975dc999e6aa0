"""Training and export: one model per project, applied to every configuration."""

from __future__ import annotations

import json
import os
import warnings
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from PIL import Image

from .config import DegenerateDatasetError, ExtractorConfig, ExtractorError
from .data import Sample, load_coco_crops, load_folder_dataset
from .export import write_embedding_file
from .model import SmallEncoder, contrastive_loss, triplet_loss


def _load_grouping(path: str) -> Tuple[str, Dict[str, Optional[str]]]:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    mapping = {k: (None if v in (None, "DROP") else str(v))
               for k, v in data["mapping"].items()}
    return str(data.get("name", "grouping")), mapping


def _apply_grouping(samples: List[Sample], name: str,
                    mapping: Dict[str, Optional[str]]) -> List[Sample]:
    missing = sorted({s.class_id for s in samples} - set(mapping))
    if missing:
        raise ExtractorError(f"grouping {name!r} does not cover classes: {missing}")
    out = []
    for s in samples:
        grouped = mapping[s.class_id]
        if grouped is None:
            continue
        out.append(Sample(instance_id=s.instance_id, class_id=grouped, image=s.image))
    return out


def _to_tensor(image: Image.Image, resolution: int, color_mode: str) -> torch.Tensor:
    img = image.resize((resolution, resolution), Image.BILINEAR)
    if color_mode == "gray":
        # single channel replicated to the model's 3-channel input keeps gray
        # embeddings in the same space as color ones
        img = img.convert("L").convert("RGB")
    arr = np.asarray(img, dtype=np.float32) / 255.0
    tensor = torch.from_numpy(arr).permute(2, 0, 1)
    return (tensor - 0.5) / 0.5


def _batches(count: int, batch_size: int, generator: torch.Generator):
    order = torch.randperm(count, generator=generator)
    for start in range(0, count, batch_size):
        yield order[start:start + batch_size]


def train_encoder(samples: Sequence[Sample], config: ExtractorConfig
                  ) -> Tuple[SmallEncoder, float]:
    """Train the shared encoder; returns it in eval mode with the final loss."""
    torch.manual_seed(config.seed)
    torch.set_num_threads(1)
    classes = sorted({s.class_id for s in samples})
    label_of = {c: i for i, c in enumerate(classes)}
    resolution = max(config.resolutions)
    inputs = torch.stack([_to_tensor(s.image, resolution, "color") for s in samples])
    labels = torch.tensor([label_of[s.class_id] for s in samples])

    model = SmallEncoder(config.embedding_dim)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    loss_fn = triplet_loss if config.loss == "triplet" else contrastive_loss
    generator = torch.Generator().manual_seed(config.seed)

    final_loss = float("inf")
    for _ in range(config.epochs):
        epoch_losses = []
        for batch in _batches(len(samples), config.batch_size, generator):
            optimizer.zero_grad()
            z = model(inputs[batch])
            loss = loss_fn(z, labels[batch], config.margin)
            loss.backward()
            optimizer.step()
            epoch_losses.append(float(loss.detach()))
        final_loss = float(np.mean(epoch_losses)) if epoch_losses else 0.0
    model.eval()
    return model, final_loss


@torch.no_grad()
def embed_samples(model: SmallEncoder, samples: Sequence[Sample],
                  resolution: int, color_mode: str,
                  batch_size: int = 64) -> np.ndarray:
    chunks = []
    for start in range(0, len(samples), batch_size):
        batch = samples[start:start + batch_size]
        inputs = torch.stack([_to_tensor(s.image, resolution, color_mode)
                              for s in batch])
        chunks.append(model(inputs).numpy())
    return np.concatenate(chunks, axis=0)


def train_and_export(config: ExtractorConfig) -> List[str]:
    """Run one project: load, (re)group, train once, export every configuration.

    Returns the manifest paths written. A final loss above the convergence
    threshold produces a warning but still exports, with the loss recorded in
    each manifest.
    """
    if config.source_type == "folder":
        samples = load_folder_dataset(config.source_path)
    else:
        if not config.images_dir:
            raise ExtractorError("coco source needs images_dir")
        samples = load_coco_crops(config.source_path, config.images_dir)

    grouping_name = "identity"
    if config.grouping_file:
        grouping_name, mapping = _load_grouping(config.grouping_file)
        samples = _apply_grouping(samples, grouping_name, mapping)

    counts: Dict[str, int] = {}
    for s in samples:
        counts[s.class_id] = counts.get(s.class_id, 0) + 1
    if len(counts) < 2 or any(n < 2 for n in counts.values()):
        raise DegenerateDatasetError(f"degenerate dataset after grouping: {counts}")

    model, final_loss = train_encoder(samples, config)
    converged = final_loss <= config.convergence_loss
    if not converged:
        warnings.warn(
            f"training did not converge (final loss {final_loss:.3f} > "
            f"{config.convergence_loss}); exporting anyway", stacklevel=2)

    training_meta = {
        "loss_name": config.loss,
        "final_loss": round(final_loss, 6),
        "converged": converged,
        "epochs": config.epochs,
        "embedding_dim": config.embedding_dim,
        "seed": config.seed,
    }
    records = [(s.instance_id, s.class_id) for s in samples]
    written = []
    for resolution in config.resolutions:
        for mode in config.color_modes:
            vectors = embed_samples(model, samples, resolution, mode)
            name = f"{grouping_name}-{mode}-{resolution}.semb"
            path = os.path.join(config.output_dir, name)
            write_embedding_file(
                path, vectors, records, space_id=config.space_id,
                color_mode=mode, resolution=resolution,
                grouping_name=grouping_name,
                config_tag=config.config_tag or f"{grouping_name}-{mode}-{resolution}",
                training=training_meta)
            written.append(path)
    return written
