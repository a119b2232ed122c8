"""Expert-load traces: generation, aggregation and (de)serialization.

A trace is a ``B x L x E`` tensor of token counts: batch, MoE layer, logical
expert.  Two on-disk formats are supported, chosen by file extension:

* ``.crft`` -- little-endian binary: ``b"CRFT"``, u32 version (1), u32 B, L, E,
  then ``B*L*E`` u64 counts in batch-major order.
* ``.json`` -- ``{"batches", "layers", "experts", "counts"}`` with ``counts``
  a nested ``[B][L][E]`` list.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"CRFT"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


class TraceFormatError(ValueError):
    """Base class for trace file errors."""


class MalformedHeaderError(TraceFormatError):
    pass


class DimensionMismatchError(TraceFormatError):
    pass


class TruncatedPayloadError(TraceFormatError):
    pass


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.int64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LoadTrace:
    """Per-batch, per-layer, per-expert token counts (immutable)."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 3:
            raise ValueError(f"trace counts must be 3-D (B, L, E), got shape {counts.shape}")
        if min(counts.shape) < 1:
            raise ValueError(f"trace dimensions must be positive, got {counts.shape}")
        if counts.size and not np.issubdtype(counts.dtype, np.integer):
            if not np.all(np.equal(np.mod(counts, 1), 0)):
                raise ValueError("trace counts must be integers")
        if np.any(counts < 0):
            raise ValueError("trace counts must be non-negative")
        object.__setattr__(self, "counts", _frozen(counts))

    @property
    def num_batches(self) -> int:
        return self.counts.shape[0]

    @property
    def num_layers(self) -> int:
        return self.counts.shape[1]

    @property
    def num_experts(self) -> int:
        return self.counts.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.counts.shape

    def digest(self) -> str:
        """SHA-256 of the binary serialization (used as plan provenance)."""
        return hashlib.sha256(to_bytes(self)).hexdigest()

    def __eq__(self, other):
        if not isinstance(other, LoadTrace):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.counts, other.counts))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class LayerLoadMatrix:
    """Batch-summed loads, shape ``L x E``."""

    sums: np.ndarray

    @property
    def num_layers(self) -> int:
        return self.sums.shape[0]

    @property
    def num_experts(self) -> int:
        return self.sums.shape[1]


def generate_zipfian(
    num_layers: int,
    num_experts: int,
    num_batches: int,
    s: float,
    tokens_per_batch: int,
    topk: int,
    seed: int = 0,
) -> LoadTrace:
    """Sample a synthetic trace with Zipf-distributed expert popularity.

    Each layer gets its own random ranking of experts, so the hot experts differ
    between layers.  The expert at rank ``i`` receives a share proportional to
    ``1 / (i + 1) ** s`` of the ``tokens_per_batch * topk`` activations in every
    batch; integer counts are drawn with a multinomial.
    """
    for name, value in (
        ("num_layers", num_layers),
        ("num_experts", num_experts),
        ("num_batches", num_batches),
        ("tokens_per_batch", tokens_per_batch),
        ("topk", topk),
    ):
        if int(value) != value or value < 1:
            raise ValueError(f"{name} must be a positive integer, got {value!r}")
    if topk > num_experts:
        raise ValueError(f"topk ({topk}) must not exceed num_experts ({num_experts})")
    if not s >= 0:
        raise ValueError(f"Zipf exponent must be >= 0, got {s!r}")

    rng = np.random.default_rng(seed)
    shares = zipf_shares(num_experts, s)
    activations = tokens_per_batch * topk
    counts = np.empty((num_batches, num_layers, num_experts), dtype=np.int64)
    for layer in range(num_layers):
        perm = rng.permutation(num_experts)
        # perm[i] is the expert holding rank i
        probs = np.empty(num_experts)
        probs[perm] = shares
        counts[:, layer, :] = rng.multinomial(activations, probs, size=num_batches)
    return LoadTrace(counts)


def zipf_shares(n: int, s: float) -> np.ndarray:
    """Normalized Zipf weights ``1/(i+1)**s`` for ranks ``0..n-1``."""
    weights = 1.0 / np.arange(1, n + 1, dtype=np.float64) ** s
    return weights / weights.sum()


def aggregate(trace: LoadTrace) -> LayerLoadMatrix:
    """Sum a trace over batches.

    Sums are exact int64; totals beyond ``2**63 - 1`` tokens are not supported.
    """
    return LayerLoadMatrix(_frozen(trace.counts.sum(axis=0, dtype=np.int64)))


# -- serialization -----------------------------------------------------------


def to_bytes(trace: LoadTrace) -> bytes:
    b, l, e = trace.shape
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, b, l, e)
    return header + trace.counts.astype("<u8").tobytes(order="C")


def from_bytes(data: bytes) -> LoadTrace:
    if len(data) < _HEADER.size:
        raise MalformedHeaderError(f"file too short for header ({len(data)} bytes)")
    magic, version, b, l, e = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MalformedHeaderError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise MalformedHeaderError(f"unsupported trace version {version}")
    if min(b, l, e) < 1:
        raise MalformedHeaderError(f"non-positive dimensions in header: B={b} L={l} E={e}")
    expected = b * l * e * 8
    payload = data[_HEADER.size:]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"payload has {len(payload)} bytes, header B={b} L={l} E={e} needs {expected}"
        )
    if len(payload) > expected:
        raise DimensionMismatchError(
            f"payload has {len(payload)} bytes, header B={b} L={l} E={e} needs {expected}"
        )
    raw = np.frombuffer(payload, dtype="<u8")
    if np.any(raw > np.iinfo(np.int64).max):
        raise TraceFormatError("count exceeds the supported 2**63-1 limit")
    return LoadTrace(raw.astype(np.int64).reshape(b, l, e))


def to_json(trace: LoadTrace) -> str:
    b, l, e = trace.shape
    doc = {"batches": b, "layers": l, "experts": e, "counts": trace.counts.tolist()}
    return json.dumps(doc)


def from_json(text: str) -> LoadTrace:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedHeaderError(f"invalid JSON trace: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedHeaderError("JSON trace must be an object")
    try:
        b, l, e = (int(doc[k]) for k in ("batches", "layers", "experts"))
        counts = doc["counts"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedHeaderError(f"JSON trace header missing or invalid: {exc}") from exc
    if min(b, l, e) < 1:
        raise MalformedHeaderError(f"non-positive dimensions: B={b} L={l} E={e}")
    try:
        arr = np.array(counts, dtype=np.int64)
    except (ValueError, OverflowError, TypeError) as exc:
        raise DimensionMismatchError(f"ragged or non-integer counts: {exc}") from exc
    if arr.shape != (b, l, e):
        if arr.size < b * l * e:
            raise TruncatedPayloadError(f"counts shape {arr.shape} shorter than ({b}, {l}, {e})")
        raise DimensionMismatchError(f"counts shape {arr.shape} does not match ({b}, {l}, {e})")
    return LoadTrace(arr)


def save_trace(trace: LoadTrace, path) -> None:
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(to_json(trace))
    elif path.suffix == ".crft":
        path.write_bytes(to_bytes(trace))
    else:
        raise ValueError(f"unknown trace extension {path.suffix!r} (use .crft or .json)")


def load_trace(path) -> LoadTrace:
    path = Path(path)
    if path.suffix == ".json":
        return from_json(path.read_text())
    if path.suffix == ".crft":
        return from_bytes(path.read_bytes())
    raise ValueError(f"unknown trace extension {path.suffix!r} (use .crft or .json)")
