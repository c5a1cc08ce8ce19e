"""Binary model files.

Layout (all little-endian)::

    "WDMD" | u32 version | u32 arch (0 MLP, 1 LSTM) | u32 n | u32 dims[n]
    | u32 len | utf-8 feature layout
    | u32 dim | f32 mean[dim] | f32 std[dim]
    | f64 threshold (NaN when untuned)
    | u32 len | utf-8 JSON metadata (sorted keys)
    | u32 count | f32 weights[count]
    | u32 CRC32 of everything above
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CorruptFile, VersionMismatch
from ..features.extract import Normalizer, layout_from_string, layout_to_string
from .models import LSTM, MLP

MAGIC = b"WDMD"
VERSION = 1
_ARCH = {"mlp": 0, "lstm": 1}
_ARCH_NAMES = {v: k for k, v in _ARCH.items()}


@dataclass
class ModelBundle:
    """A model plus everything needed to run it on new audio."""

    model: object
    layout: tuple = ()
    threshold: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def kind(self):
        return self.model.kind


def _dims(model):
    if isinstance(model, MLP):
        return model.layer_dims
    return model.dims


def _blob(text):
    data = text.encode("utf-8")
    return struct.pack("<I", len(data)) + data


def to_bytes(bundle):
    model = bundle.model
    norm = model.normalizer or Normalizer.identity(model.input_dim)
    dims = _dims(model)
    out = [MAGIC, struct.pack("<III", VERSION, _ARCH[model.kind], len(dims))]
    out.append(struct.pack(f"<{len(dims)}I", *dims))
    out.append(_blob(layout_to_string(bundle.layout)))
    out.append(struct.pack("<I", len(norm.mean)))
    out.append(np.asarray(norm.mean, dtype="<f4").tobytes())
    out.append(np.asarray(norm.std, dtype="<f4").tobytes())
    thr = math.nan if bundle.threshold is None else float(bundle.threshold)
    out.append(struct.pack("<d", thr))
    out.append(_blob(json.dumps(bundle.meta, sort_keys=True, separators=(",", ":"))))
    weights = np.concatenate([p.reshape(-1) for p in model.params.values()]).astype("<f4")
    out.append(struct.pack("<I", weights.size))
    out.append(weights.tobytes())
    body = b"".join(out)
    return body + struct.pack("<I", zlib.crc32(body))


def save_model(path, bundle):
    Path(path).write_bytes(to_bytes(bundle))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CorruptFile("unexpected end of model file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def text(self):
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")

    def floats(self, n, dtype="<f4"):
        return np.frombuffer(self.take(n * np.dtype(dtype).itemsize), dtype=dtype).astype(np.float64)


def from_bytes(data):
    if len(data) < 8 or data[:4] != MAGIC:
        raise CorruptFile("not a model file")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptFile("checksum mismatch")
    r = _Reader(body)
    r.take(4)
    version, arch, ndims = r.unpack("<III")
    if version != VERSION:
        raise VersionMismatch(f"model file version {version}, expected {VERSION}")
    if arch not in _ARCH_NAMES:
        raise CorruptFile(f"unknown architecture tag {arch}")
    dims = r.unpack(f"<{ndims}I")
    layout = layout_from_string(r.text())
    (ndim,) = r.unpack("<I")
    mean = r.floats(ndim)
    std = r.floats(ndim)
    (thr,) = r.unpack("<d")
    meta = json.loads(r.text())
    (count,) = r.unpack("<I")
    weights = r.floats(count)
    if r.pos != len(body):
        raise CorruptFile("trailing bytes in model file")

    if _ARCH_NAMES[arch] == "mlp":
        model = MLP(dims)
    else:
        model = LSTM(dims[0], dims[1], dims[2])
    if count != model.num_params:
        raise CorruptFile(f"{count} weights for a {model.num_params}-parameter model")
    pos = 0
    for k, p in model.params.items():
        model.params[k] = weights[pos:pos + p.size].reshape(p.shape).copy()
        pos += p.size
    model.normalizer = Normalizer(mean, std)
    return ModelBundle(model=model, layout=layout,
                       threshold=None if math.isnan(thr) else thr, meta=meta)


def load_model(path):
    return from_bytes(Path(path).read_bytes())
