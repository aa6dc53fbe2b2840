"""Binary weights file.

Layout (all integers little-endian)::

    b"TSGD" | version u8 (=1) | endian marker u16 (=0x0102 written LE) | digest 32 bytes (sha256)
    meta_len u32 | metadata JSON (UTF-8)
    n_records u32
    record*: name_len u16 | name | ndim u8 | dims u32* | float64 LE payload

Every Parameter contributes three records (value, Adam first and second
moments) and a step counter; every batch norm contributes its running
statistics plus momentum and epsilon. The noise schedule is stored as
its beta vector.
"""
from __future__ import annotations

import io
import json
import struct

import numpy as np

from .data import NormalizationParams
from .diffusion import NoiseSchedule
from .errors import CorruptWeights, IoError
from .model import ModelState

MAGIC = b"TSGD"
VERSION = 1
ENDIAN_MARKER = 0x0102
DIGEST_BYTES = 32


def _records(model: ModelState):
    for name, p in model.named_parameters():
        yield name, p.data
        yield f"{name}#adam_m", p.adam_m
        yield f"{name}#adam_v", p.adam_v
        yield f"{name}#step", np.array([p.step_count], dtype=np.float64)
    for name, bn in model.batch_norms():
        yield f"{name}.running_mean", bn.running_mean
        yield f"{name}.running_var", bn.running_var
        yield f"{name}.momentum", np.array([bn.momentum])
        yield f"{name}.epsilon", np.array([bn.epsilon])
    yield "schedule.beta", model.schedule.beta


def _metadata(model: ModelState) -> dict:
    meta = {
        "window_size": model.window_size,
        "n_features": model.n_features,
        "hidden_dim": model.hidden_dim,
        "latent_dim": model.latent_dim,
        "diffusion_steps": model.schedule.K,
        "feature_names": list(model.feature_names),
        "norm": None,
    }
    if model.norm is not None:
        meta["norm"] = {
            # repr round-trips float64 exactly
            "min": [repr(float(v)) for v in model.norm.per_feature_min],
            "max": [repr(float(v)) for v in model.norm.per_feature_max],
            "target_range": list(model.norm.target_range),
        }
    return meta


def dumps(model: ModelState, digest: bytes = b"\0" * DIGEST_BYTES) -> bytes:
    if len(digest) != DIGEST_BYTES:
        raise ValueError(f"digest must be {DIGEST_BYTES} bytes")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<BH", VERSION, ENDIAN_MARKER))
    buf.write(digest)
    meta = json.dumps(_metadata(model), sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(meta)))
    buf.write(meta)
    recs = list(_records(model))
    buf.write(struct.pack("<I", len(recs)))
    for name, arr in recs:
        raw = name.encode("utf-8")
        arr = np.asarray(arr, dtype=np.float64)
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


class _Reader:
    def __init__(self, blob: bytes):
        self.blob, self.pos = blob, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CorruptWeights(f"weights file truncated at byte {len(self.blob)} (needed {self.pos + n})")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def parse(blob: bytes):
    """Return (digest, metadata, {name: array}) after validating the framing."""
    r = _Reader(blob)
    if len(blob) < len(MAGIC):
        raise CorruptWeights(f"weights file truncated: {len(blob)} bytes")
    magic = r.take(4)
    if magic != MAGIC:
        raise CorruptWeights(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, marker = r.unpack("<BH")
    if version != VERSION:
        raise CorruptWeights(f"unsupported weights version {version}")
    if marker != ENDIAN_MARKER:
        raise CorruptWeights(f"unexpected endianness marker 0x{marker:04x}")
    digest = r.take(DIGEST_BYTES)
    (meta_len,) = r.unpack("<I")
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptWeights(f"metadata section unreadable: {exc}") from exc
    (n,) = r.unpack("<I")
    records = {}
    for _ in range(n):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8", errors="replace")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(r.take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
        records[name] = arr
    if r.pos != len(blob):
        raise CorruptWeights(f"{len(blob) - r.pos} trailing bytes after the last record")
    return digest, meta, records


def _assign(records: dict, name: str, target_shape) -> np.ndarray:
    if name not in records:
        raise CorruptWeights(f"record {name!r} missing")
    arr = records[name]
    if arr.shape != tuple(target_shape):
        raise CorruptWeights(f"record {name!r} has shape {arr.shape}, model expects {tuple(target_shape)}")
    return arr.copy()


def loads(blob: bytes) -> tuple[ModelState, bytes]:
    digest, meta, records = parse(blob)
    try:
        beta = records["schedule.beta"]
        model = ModelState.create(int(meta["window_size"]), int(meta["n_features"]), int(meta["hidden_dim"]),
                                  int(meta["latent_dim"]), np.random.default_rng(0), K=int(beta.shape[0]))
    except KeyError as exc:
        raise CorruptWeights(f"missing field {exc}") from exc
    model.schedule = NoiseSchedule(beta.copy())
    for name, p in model.named_parameters():
        p.data = _assign(records, name, p.data.shape)
        p.adam_m = _assign(records, f"{name}#adam_m", p.data.shape)
        p.adam_v = _assign(records, f"{name}#adam_v", p.data.shape)
        p.step_count = int(_assign(records, f"{name}#step", (1,))[0])
        p.grad = np.zeros_like(p.data)
    for name, bn in model.batch_norms():
        bn.running_mean = _assign(records, f"{name}.running_mean", bn.running_mean.shape)
        bn.running_var = _assign(records, f"{name}.running_var", bn.running_var.shape)
        bn.momentum = float(_assign(records, f"{name}.momentum", (1,))[0])
        bn.epsilon = float(_assign(records, f"{name}.epsilon", (1,))[0])
    model.feature_names = list(meta.get("feature_names", []))
    norm = meta.get("norm")
    if norm is not None:
        model.norm = NormalizationParams(
            np.array([float(v) for v in norm["min"]]),
            np.array([float(v) for v in norm["max"]]),
            tuple(norm.get("target_range", (-1.0, 1.0))),
        )
    return model, digest


def save_weights(model: ModelState, path, digest: bytes = b"\0" * DIGEST_BYTES) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(dumps(model, digest))
    except OSError as exc:
        raise IoError(f"cannot write weights to {path}: {exc}") from exc


def load_weights(path) -> tuple[ModelState, bytes]:
    """Load a model; returns (model, stored config digest)."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read weights from {path}: {exc}") from exc
    return loads(blob)
