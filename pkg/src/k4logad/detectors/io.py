"""Versioned binary container for fitted detector models ("K4DM").

Layout (all integers little-endian, all floats 64-bit little-endian):

    magic "K4DM" | u32 version | u32 kind tag | u32 entry count
    per entry: u16 name length | name utf-8 | u8 ndim | ndim * u64 shape
               | payload float64 values

Model state is a flat mapping of names to scalars/arrays; loading
rejects unknown versions and kind tags.
"""

from __future__ import annotations

import struct

import numpy as np

K4DM_MAGIC = b"K4DM"
K4DM_VERSION = 1

_KIND_TAGS = {"gmm": 1, "kde": 2, "ocsvm": 3, "deepsvdd": 4}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}


class ModelFormatError(ValueError):
    pass


def _detector_classes():
    from .gmm import GmmDetector
    from .kde import KdeDetector
    from .ocsvm import OcsvmDetector
    from .deep_svdd import DeepSvddDetector

    return {
        "gmm": GmmDetector,
        "kde": KdeDetector,
        "ocsvm": OcsvmDetector,
        "deepsvdd": DeepSvddDetector,
    }


def save_model(model, path: str) -> None:
    state = model.state()
    with open(path, "wb") as f:
        f.write(K4DM_MAGIC)
        f.write(struct.pack("<II", K4DM_VERSION, _KIND_TAGS[model.kind]))
        f.write(struct.pack("<I", len(state)))
        for name in sorted(state):
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.ndim:  # ascontiguousarray would promote 0-d to shape (1,)
                arr = np.ascontiguousarray(arr)
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<Q", dim))
            f.write(arr.astype("<f8").tobytes())


def load_model(path: str):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != K4DM_MAGIC:
        raise ModelFormatError(f"{path}: bad magic {blob[:4]!r}")
    version, tag = struct.unpack_from("<II", blob, 4)
    if version != K4DM_VERSION:
        raise ModelFormatError(f"{path}: unsupported version {version}")
    if tag not in _TAG_KINDS:
        raise ModelFormatError(f"{path}: unknown detector kind tag {tag}")
    (count,) = struct.unpack_from("<I", blob, 12)
    off = 16
    state: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off : off + name_len].decode("utf-8")
            off += name_len
            (ndim,) = struct.unpack_from("<B", blob, off)
            off += 1
            shape = []
            for _ in range(ndim):
                (dim,) = struct.unpack_from("<Q", blob, off)
                off += 8
                shape.append(dim)
            n_vals = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(blob, dtype="<f8", count=n_vals, offset=off)
            off += n_vals * 8
            value = arr.reshape(shape).copy()
            state[name] = float(value) if ndim == 0 else value
    except (struct.error, ValueError) as exc:
        raise ModelFormatError(f"{path}: truncated or corrupt payload") from exc
    if off != len(blob):
        raise ModelFormatError(f"{path}: {len(blob) - off} trailing bytes")
    kind = _TAG_KINDS[tag]
    return _detector_classes()[kind].from_state(state)
