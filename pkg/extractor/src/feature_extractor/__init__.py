"""Offline exporter: vision backbones -> .dfm feature maps and .emb embeddings."""

from .backends import ModelLoadError
from .config import ExtractorConfig
from .extract import extract_embeddings, extract_feature_map

__version__ = "0.1.0"

__all__ = [
    "ExtractorConfig",
    "ModelLoadError",
    "extract_embeddings",
    "extract_feature_map",
]
