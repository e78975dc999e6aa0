"""embex: metric-learning embedding extractor for dataset-attribute analysis."""

from .config import DegenerateDatasetError, ExtractorConfig, ExtractorError
from .data import load_coco_crops, load_folder_dataset, make_toy_shapes
from .export import write_embedding_file
from .model import SmallEncoder, contrastive_loss, triplet_loss
from .train import embed_samples, train_and_export, train_encoder

__version__ = "0.1.0"

__all__ = [
    "DegenerateDatasetError", "ExtractorConfig", "ExtractorError",
    "SmallEncoder", "contrastive_loss", "embed_samples", "load_coco_crops",
    "load_folder_dataset", "make_toy_shapes", "train_and_export",
    "train_encoder", "triplet_loss", "write_embedding_file",
]
