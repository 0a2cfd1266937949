"""One-class anomaly scorers over 4-D typicality features.

All detectors share the contract: ``fit`` consumes only feature rows
from normal data (no label input exists), fitted models are immutable,
and ``score`` returns one finite value per row with higher = more
anomalous.
"""

from .standardizer import Standardizer
from .gmm import GmmDetector
from .kde import KdeDetector
from .ocsvm import OcsvmDetector
from .deep_svdd import DeepSvddDetector
from .io import save_model, load_model, ModelFormatError

DETECTOR_KINDS = {
    "gmm": GmmDetector,
    "kde": KdeDetector,
    "ocsvm": OcsvmDetector,
    "deepsvdd": DeepSvddDetector,
}

#: detectors whose geometry is scale-sensitive and therefore see
#: standardised features in the pipeline
STANDARDIZED_KINDS = ("ocsvm", "deepsvdd")


def make_detector(kind: str, **cfg):
    try:
        cls = DETECTOR_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown detector kind: {kind!r}") from None
    return cls(**cfg)


__all__ = [
    "Standardizer",
    "GmmDetector",
    "KdeDetector",
    "OcsvmDetector",
    "DeepSvddDetector",
    "DETECTOR_KINDS",
    "STANDARDIZED_KINDS",
    "make_detector",
    "save_model",
    "load_model",
    "ModelFormatError",
]
