"""Binary model file for fitted flows.

Layout (little-endian):

    magic      4s   b"GFLW"
    version    u16
    rng        u8 length + ascii name of the bit generator
    header     u32 d, u32 n_layers, u8 head, u8 stop_reason, u64 n_samples
    config     u32 max_layers, u8 rotation_kind, u64 seed, u32 n_bins (0 = auto),
               f64 clamp_epsilon, u32 stop_window, f64 stop_significance
    noise      f64 mean, f64 std, f64 threshold, u32 count, count x f64
    layers     per layer: u32 index, f64 delta_t, f64 raw_delta_t,
               u8 rotation kind, u8 has_seed, u64 seed, d*d f64 (row-major),
               then per dimension: u8 target, u64 n_samples, f64 tail_extension,
               f64 clamp_epsilon, u32 K, K f64 support, K f64 cdf values
    trailer    u32 CRC32 of every preceding byte
"""
from __future__ import annotations

import os
import struct
import zlib

import numpy as np

from .data import RNG_ALGORITHM
from .errors import CorruptModel, VersionMismatch
from .flow import FitConfig, FlowLayer, GaussianizationFlow, Head, NoiseFloor, StopReason
from .rotation import RotationKind, RotationMatrix
from .univariate import EmpiricalCdf, MarginalMap, Target

MAGIC = b"GFLW"
FORMAT_VERSION = 1

_HEADS = [Head.NONE, Head.UNIFORM]
_STOPS = [StopReason.CONVERGED, StopReason.MAX_LAYERS]
_ROTATIONS = [RotationKind.PCA, RotationKind.RANDOM]
_TARGETS = [Target.GAUSSIAN, Target.IDENTITY]


def _f64(values) -> bytes:
    return np.ascontiguousarray(values, dtype="<f8").tobytes()


def dumps(flow: GaussianizationFlow) -> bytes:
    cfg = flow.config
    parts = [MAGIC, struct.pack("<H", FORMAT_VERSION)]
    name = RNG_ALGORITHM.encode("ascii")
    parts.append(struct.pack("<B", len(name)) + name)
    parts.append(struct.pack(
        "<IIBBQ", flow.d, flow.n_layers, _HEADS.index(flow.head),
        _STOPS.index(flow.stop_reason), flow.n_samples,
    ))
    parts.append(struct.pack(
        "<IBQIdId", cfg.max_layers, _ROTATIONS.index(cfg.rotation_kind), cfg.seed,
        cfg.n_bins or 0, cfg.clamp_epsilon, cfg.stop_window, cfg.stop_significance,
    ))
    noise = flow.noise
    parts.append(struct.pack("<dddI", noise.mean, noise.std, noise.threshold, len(noise.samples)))
    parts.append(_f64(noise.samples))
    for layer in flow.layers:
        rot = layer.rotation
        parts.append(struct.pack(
            "<IddBBQ", layer.layer_index, layer.delta_t, layer.raw_delta_t,
            _ROTATIONS.index(rot.kind), rot.seed is not None, rot.seed or 0,
        ))
        parts.append(_f64(rot.matrix))
        for m in layer.marginals:
            c = m.cdf
            parts.append(struct.pack(
                "<BQddI", _TARGETS.index(m.target), c.n_samples, c.tail_extension,
                c.clamp_epsilon, c.support.size,
            ))
            parts.append(_f64(c.support))
            parts.append(_f64(c.cdf_values))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.buf):
            raise CorruptModel("model file is truncated")
        out = struct.unpack_from(fmt, self.buf, self.pos)
        self.pos += size
        return out

    def array(self, count: int, shape=None) -> np.ndarray:
        size = 8 * count
        if self.pos + size > len(self.buf):
            raise CorruptModel("model file is truncated")
        arr = np.frombuffer(self.buf, dtype="<f8", count=count, offset=self.pos)
        self.pos += size
        arr = arr.astype(np.float64)
        return arr.reshape(shape) if shape is not None else arr


def _pick(table, index, what):
    if index >= len(table):
        raise CorruptModel(f"unknown {what} code {index}")
    return table[index]


def loads(buf: bytes) -> GaussianizationFlow:
    if len(buf) < 10 or buf[:4] != MAGIC:
        raise CorruptModel("not a model file (bad magic)")
    (version,) = struct.unpack_from("<H", buf, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatch(
            f"model format version {version}, this build reads {FORMAT_VERSION}"
        )
    body, trailer = buf[:-4], buf[-4:]
    if struct.unpack("<I", trailer)[0] != zlib.crc32(body):
        raise CorruptModel("checksum mismatch")

    r = _Reader(body)
    r.pos = 6
    (name_len,) = r.unpack("<B")
    rng_name = bytes(r.buf[r.pos:r.pos + name_len]).decode("ascii")
    r.pos += name_len
    if rng_name != RNG_ALGORITHM:
        raise VersionMismatch(f"model was produced with bit generator {rng_name}")
    d, n_layers, head, stop, n_samples = r.unpack("<IIBBQ")
    max_layers, rot_kind, seed, n_bins, clamp, window, significance = r.unpack("<IBQIdId")
    config = FitConfig(
        max_layers=max_layers,
        rotation_kind=_pick(_ROTATIONS, rot_kind, "rotation"),
        seed=seed,
        n_bins=n_bins or None,
        clamp_epsilon=clamp,
        stop_window=window,
        stop_significance=significance,
    )
    mean, std, threshold, count = r.unpack("<dddI")
    noise = NoiseFloor(mean, std, threshold, tuple(float(v) for v in r.array(count)))
    layers = []
    for _ in range(n_layers):
        index, delta_t, raw, kind, has_seed, rseed = r.unpack("<IddBBQ")
        matrix = r.array(d * d, (d, d))
        try:
            rotation = RotationMatrix(
                matrix, _pick(_ROTATIONS, kind, "rotation"), rseed if has_seed else None
            )
        except ValueError as exc:
            raise CorruptModel(str(exc)) from None
        marginals = []
        for _ in range(d):
            target, m_n, tail, eps, k = r.unpack("<BQddI")
            support = r.array(k)
            cdf_values = r.array(k)
            try:
                cdf = EmpiricalCdf(support, cdf_values, tail, eps, m_n)
            except ValueError as exc:
                raise CorruptModel(str(exc)) from None
            marginals.append(MarginalMap(cdf, _pick(_TARGETS, target, "target")))
        layers.append(FlowLayer(tuple(marginals), rotation, delta_t, index, raw))
    if r.pos != len(body):
        raise CorruptModel("trailing bytes after last layer")
    return GaussianizationFlow(
        tuple(layers), d, _pick(_HEADS, head, "head"), config,
        _pick(_STOPS, stop, "stop reason"), noise, n_samples,
    )


def save_model(flow: GaussianizationFlow, path) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(dumps(flow))
    os.replace(tmp, path)


def load_model(path) -> GaussianizationFlow:
    with open(path, "rb") as fh:
        return loads(fh.read())
