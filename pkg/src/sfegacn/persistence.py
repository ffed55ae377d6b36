"""Binary model container.

Layout::

    b"SFEG"                magic
    uint8                  format version
    uint32 (LE)            manifest length in bytes
    manifest               UTF-8 "key=<json value>" lines
    float64 (LE) arrays    concatenated in the order of the manifest's
                           "array" lines ("array=<name> <dim>x<dim>...")

The manifest's ``kind`` line selects the object type: ``densenet``,
``embedding`` or ``gacn``.
"""

import json
import math
import struct

import numpy as np

from .exceptions import DataFormatError
from .gacn import GacnConfig, GacnModels, HistoryRecord
from .nn import DenseNet, ParamSnapshot
from .sfe import EmbeddingModel, Quantizer

MAGIC = b"SFEG"
FORMAT_VERSION = 1


class _Writer:
    def __init__(self, kind):
        self.meta = [("kind", kind)]
        self.arrays = []

    def put(self, key, value):
        self.meta.append((key, value))

    def array(self, name, arr):
        arr = np.ascontiguousarray(arr, dtype="<f8")
        self.arrays.append((name, arr))

    def net(self, prefix, net):
        self.put(f"{prefix}.layer_dims", list(net.layer_dims))
        self.put(f"{prefix}.activations", list(net.activations))
        self.put(f"{prefix}.seed", net.seed)
        self.put(f"{prefix}.use_bias", net.use_bias)
        for i, (W, b) in enumerate(zip(net.weights, net.biases)):
            self.array(f"{prefix}.W{i}", W)
            self.array(f"{prefix}.b{i}", b)

    def to_bytes(self):
        lines = [f"{k}={json.dumps(v, allow_nan=True)}" for k, v in self.meta]
        for name, arr in self.arrays:
            lines.append(f"array={name} {'x'.join(str(d) for d in arr.shape) or 'scalar'}")
        manifest = ("\n".join(lines) + "\n").encode("utf-8")
        body = b"".join(arr.tobytes() for _, arr in self.arrays)
        return MAGIC + bytes([FORMAT_VERSION]) + struct.pack("<I", len(manifest)) + manifest + body


class _Reader:
    def __init__(self, blob, path):
        if len(blob) < 9 or blob[:4] != MAGIC:
            raise DataFormatError(f"{path}: not an SFEG model container")
        version = blob[4]
        if version > FORMAT_VERSION:
            raise DataFormatError(
                f"{path}: container format version {version} is newer than supported "
                f"version {FORMAT_VERSION}"
            )
        (mlen,) = struct.unpack("<I", blob[5:9])
        if len(blob) < 9 + mlen:
            raise DataFormatError(f"{path}: truncated manifest")
        try:
            text = blob[9:9 + mlen].decode("utf-8")
        except UnicodeDecodeError:
            raise DataFormatError(f"{path}: manifest is not UTF-8") from None
        self.meta = {}
        self.arrays = {}
        pos = 9 + mlen
        for line in text.splitlines():
            key, sep, value = line.partition("=")
            if not sep:
                raise DataFormatError(f"{path}: bad manifest line {line!r}")
            if key == "array":
                name, _, shape_txt = value.rpartition(" ")
                shape = () if shape_txt == "scalar" else tuple(int(d) for d in shape_txt.split("x"))
                size = 8 * math.prod(shape)
                if pos + size > len(blob):
                    raise DataFormatError(f"{path}: truncated at array {name!r}")
                self.arrays[name] = np.frombuffer(blob, dtype="<f8", count=size // 8,
                                                  offset=pos).reshape(shape).astype(np.float64)
                pos += size
            else:
                try:
                    self.meta[key] = json.loads(value)
                except json.JSONDecodeError:
                    raise DataFormatError(f"{path}: bad manifest value for {key!r}") from None
        if pos != len(blob):
            raise DataFormatError(f"{path}: {len(blob) - pos} trailing bytes after arrays")
        self.path = path

    def get(self, key):
        try:
            return self.meta[key]
        except KeyError:
            raise DataFormatError(f"{self.path}: manifest lacks {key!r}") from None

    def array(self, name):
        try:
            return self.arrays[name]
        except KeyError:
            raise DataFormatError(f"{self.path}: container lacks array {name!r}") from None

    def net(self, prefix):
        net = DenseNet(self.get(f"{prefix}.layer_dims"), self.get(f"{prefix}.activations"),
                       seed=self.get(f"{prefix}.seed"), use_bias=self.get(f"{prefix}.use_bias"))
        for i in range(len(net.weights)):
            W = self.array(f"{prefix}.W{i}")
            b = self.array(f"{prefix}.b{i}")
            if W.shape != net.weights[i].shape or b.shape != net.biases[i].shape:
                raise DataFormatError(f"{self.path}: {prefix} layer {i} has wrong shape")
            net.weights[i] = W
            net.biases[i] = b
        return net


def dumps_model(obj):
    """Serialise a DenseNet, EmbeddingModel or GacnModels to bytes."""
    if isinstance(obj, DenseNet):
        w = _Writer("densenet")
        w.net("net", obj)
    elif isinstance(obj, EmbeddingModel):
        w = _Writer("embedding")
        w.put("embedding_dim", obj.embedding_dim)
        w.put("window", obj.window)
        w.put("bit_widths", [int(v) for v in obj.bit_widths])
        w.put("columns", list(obj.columns))
        w.array("offsets", [q.offset for q in obj.quantizers])
        w.array("scales", [q.scale for q in obj.quantizers])
        for i, P in enumerate(obj.projections):
            w.array(f"W{i}", P)
    elif isinstance(obj, GacnModels):
        w = _Writer("gacn")
        cfg = obj.config.__dict__.copy()
        cfg["hidden"] = list(cfg["hidden"])
        w.put("config", cfg)
        w.net("G", obj.G)
        w.net("D_adv", obj.D_adv)
        w.net("D_coo", obj.D_coo)
        w.put("backup.layer_dims", list(obj.backup.layer_dims))
        w.put("backup.use_bias", obj.backup.use_bias)
        w.array("backup", obj.backup.values)
        h = obj.history
        w.array("history.mean", [r.mean_dcoo for r in h])
        w.array("history.min", [r.min_dcoo for r in h])
        w.array("history.max", [r.max_dcoo for r in h])
        w.array("history.rollback", [float(r.rollback) for r in h])
        w.put("has_noise_pool", obj.noise_pool is not None)
        if obj.noise_pool is not None:
            w.array("noise_pool", obj.noise_pool)
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")
    return w.to_bytes()


def loads_model(blob, path="<bytes>"):
    r = _Reader(blob, path)
    kind = r.get("kind")
    if kind == "densenet":
        return r.net("net")
    if kind == "embedding":
        widths = r.get("bit_widths")
        offsets = r.array("offsets")
        scales = r.array("scales")
        quantizers = [Quantizer(float(o), float(s)) for o, s in zip(offsets, scales)]
        projections = [r.array(f"W{i}") for i in range(len(widths))]
        return EmbeddingModel(projections, r.get("embedding_dim"), r.get("window"),
                              widths, quantizers, r.get("columns"))
    if kind == "gacn":
        cfg = r.get("config")
        cfg["hidden"] = tuple(cfg["hidden"])
        config = GacnConfig(**cfg)
        backup = ParamSnapshot(r.array("backup"), tuple(r.get("backup.layer_dims")),
                               r.get("backup.use_bias"))
        history = [HistoryRecord(i, float(m), float(lo), float(hi), bool(rb))
                   for i, (m, lo, hi, rb) in enumerate(zip(
                       r.array("history.mean"), r.array("history.min"),
                       r.array("history.max"), r.array("history.rollback")))]
        pool = r.array("noise_pool") if r.get("has_noise_pool") else None
        return GacnModels(r.net("G"), r.net("D_adv"), r.net("D_coo"), backup, config,
                          history, pool)
    raise DataFormatError(f"{path}: unknown container kind {kind!r}")


def save_model(obj, path):
    blob = dumps_model(obj)
    with open(path, "wb") as fh:
        fh.write(blob)


def load_model(path):
    """Load a container; nothing is returned unless the whole file parses."""
    with open(path, "rb") as fh:
        blob = fh.read()
    return loads_model(blob, str(path))
