"""Unsupervised log anomaly detection from kNN typicality statistics.

Raw log streams are chunked, sliced into sliding windows, embedded
(native TF-IDF or externally supplied vectors), mapped to per-window
[P, R, D, C] typicality features against a reference set of normal
windows, and scored by one of four one-class detectors.
"""

__version__ = "0.1.0"

from . import prdc, metrics, ingest, embedding, pipeline, detectors

__all__ = ["prdc", "metrics", "ingest", "embedding", "pipeline", "detectors"]
