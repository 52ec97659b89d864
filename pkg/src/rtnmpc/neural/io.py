"""Binary model and dataset files with JSON sidecars.

Model file (little endian)::

    4s   magic b"RTNM"
    u16  format version (1)
    u16  number of layer sizes L+1
    u32  layer sizes[L+1]
    u8   len + ascii activation tag
    u8   len + ascii input_variant tag
    u32  feature layout version
    f64  x_mean[in], x_scale[in], y_mean[out], y_scale[out]
    per layer: f64 W[out, in] row-major, then f64 b[out]

Dataset file::

    4s   magic b"RTND"
    u16  format version (1)
    u8   len + ascii variant tag
    u32  feature dim, u32 label dim, u64 count
    f64  inputs[count, feature dim] row-major
    f64  labels[count, label dim] row-major
    u8   validation flag per row

The sidecar ``<file>.json`` mirrors the header fields.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from ..dynamics import DI_FEATURE_LAYOUTS, FEATURE_LAYOUTS, FEATURE_LAYOUT_VERSION
from ..exceptions import ConfigurationError
from .mlp import MlpModel
from .training import ResidualDataset

MODEL_MAGIC = b"RTNM"
DATASET_MAGIC = b"RTND"
FORMAT_VERSION = 1


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def _tag(text):
    raw = text.encode("ascii")
    return struct.pack("<B", len(raw)) + raw


class _Reader:
    def __init__(self, raw, path):
        self.raw, self.pos, self.path = raw, 0, path

    def unpack(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.raw):
            raise ConfigurationError(f"{self.path}: truncated file")
        out = struct.unpack_from(fmt, self.raw, self.pos)
        self.pos += size
        return out

    def tag(self):
        (n,) = self.unpack("<B")
        return self.unpack(f"<{n}s")[0].decode("ascii")

    def array(self, count, dtype):
        size = np.dtype(dtype).itemsize * count
        if self.pos + size > len(self.raw):
            raise ConfigurationError(f"{self.path}: truncated file")
        arr = np.frombuffer(self.raw, dtype=dtype, count=count, offset=self.pos)
        self.pos += size
        return arr

    def floats(self, count):
        return self.array(count, "<f8").astype(float)

    def finish(self):
        if self.pos != len(self.raw):
            raise ConfigurationError(f"{self.path}: {len(self.raw) - self.pos} unexpected trailing bytes")


def _feature_names(variant, in_dim):
    names = FEATURE_LAYOUTS.get(variant) or DI_FEATURE_LAYOUTS.get(variant)
    return list(names) if names and len(names) == in_dim else None


def save_model(model, path):
    path = Path(path)
    sizes = model.layer_sizes
    chunks = [
        MODEL_MAGIC,
        struct.pack("<HH", FORMAT_VERSION, len(sizes)),
        struct.pack(f"<{len(sizes)}I", *sizes),
        _tag(model.activation),
        _tag(model.input_variant),
        struct.pack("<I", model.feature_layout_version),
    ]
    for arr in (model.x_mean, model.x_scale, model.y_mean, model.y_scale):
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    for w, b in zip(model.weights, model.biases):
        chunks.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    raw = b"".join(chunks)
    path.write_bytes(raw)
    meta = {
        "format": "rtnmpc-mlp",
        "version": FORMAT_VERSION,
        "name": model.name,
        "layer_sizes": sizes,
        "n_params": model.n_params,
        "activation": model.activation,
        "input_variant": model.input_variant,
        "feature_layout_version": model.feature_layout_version,
        "feature_names": _feature_names(model.input_variant, model.in_dim),
        "x_mean": model.x_mean.tolist(),
        "x_scale": model.x_scale.tolist(),
        "y_mean": model.y_mean.tolist(),
        "y_scale": model.y_scale.tolist(),
        "training": model.metadata,
        "sha256": hashlib.sha256(raw).hexdigest(),
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True, default=float) + "\n")
    return path


def load_model(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"model file not found: {path}")
    r = _Reader(path.read_bytes(), path)
    (magic,) = r.unpack("<4s")
    if magic != MODEL_MAGIC:
        raise ConfigurationError(f"{path} is not a model file")
    version, n_sizes = r.unpack("<HH")
    if version != FORMAT_VERSION:
        raise ConfigurationError(f"{path}: unsupported model format version {version}")
    sizes = r.unpack(f"<{n_sizes}I")
    activation = r.tag()
    variant = r.tag()
    (layout_version,) = r.unpack("<I")
    if layout_version != FEATURE_LAYOUT_VERSION:
        raise ConfigurationError(
            f"{path}: feature layout version {layout_version}, this build expects {FEATURE_LAYOUT_VERSION}"
        )
    d_in, d_out = sizes[0], sizes[-1]
    x_mean, x_scale = r.floats(d_in), r.floats(d_in)
    y_mean, y_scale = r.floats(d_out), r.floats(d_out)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(r.floats(fan_in * fan_out).reshape(fan_out, fan_in))
        biases.append(r.floats(fan_out))
    r.finish()
    metadata = {}
    side = sidecar_path(path)
    if side.is_file():
        metadata = json.loads(side.read_text()).get("training", {}) or {}
    return MlpModel(tuple(weights), tuple(biases), activation, variant, x_mean, x_scale, y_mean, y_scale,
                    layout_version, metadata)


def save_dataset(dataset, path):
    path = Path(path)
    n, fd, ld = len(dataset), dataset.feature_dim, dataset.label_dim
    raw = b"".join([
        DATASET_MAGIC,
        struct.pack("<H", FORMAT_VERSION),
        _tag(dataset.variant),
        struct.pack("<IIQ", fd, ld, n),
        np.ascontiguousarray(dataset.inputs, dtype="<f8").tobytes(),
        np.ascontiguousarray(dataset.labels, dtype="<f8").tobytes(),
        dataset.is_validation().astype(np.uint8).tobytes(),
    ])
    path.write_bytes(raw)
    meta = {
        "format": "rtnmpc-residual-dataset",
        "version": FORMAT_VERSION,
        "variant": dataset.variant,
        "feature_dim": fd,
        "label_dim": ld,
        "count": n,
        "n_validation": int(len(dataset.val_idx)),
        "feature_names": _feature_names(dataset.variant, fd),
        "sha256": hashlib.sha256(raw).hexdigest(),
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_dataset(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"dataset file not found: {path}")
    r = _Reader(path.read_bytes(), path)
    (magic,) = r.unpack("<4s")
    if magic != DATASET_MAGIC:
        raise ConfigurationError(f"{path} is not a dataset file")
    (version,) = r.unpack("<H")
    if version != FORMAT_VERSION:
        raise ConfigurationError(f"{path}: unsupported dataset version {version}")
    variant = r.tag()
    fd, ld, n = r.unpack("<IIQ")
    inputs = r.floats(n * fd).reshape(n, fd)
    labels = r.floats(n * ld).reshape(n, ld)
    flags = r.array(n, np.uint8).astype(bool)
    r.finish()
    return ResidualDataset(inputs, labels, np.flatnonzero(~flags), np.flatnonzero(flags), variant)
