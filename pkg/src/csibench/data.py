"""CSI sample containers and binary I/O.

A capture is a (5, 30, 3, 3, 2) tensor: time slot, subcarrier, tx antenna,
rx antenna, {amplitude, phase}. Amplitudes are linear and non-negative,
phases are radians in [-pi, pi).

Two on-disk forms are supported:

* CSD1 — the native labeled container (little-endian):
  magic "CSD1" | u16 version=1 | u16 reserved=0 | u32 sample count |
  u8 env-tag length | env-tag UTF-8 bytes | per sample:
  u8 label in {0,1,2} | 2700 x f32 row-major (time, subcarrier, tx, rx,
  {amp, phase}).
* NPY v1.0 — tensor-only interchange, dtype <f4 or <f8, C order, shape
  (N, 5, 30, 3, 3, 2) or (5, 30, 3, 3, 2). Labels are not stored.

Files hold float32; in-memory tensors are float64 promoted from the float32
grid, so a write/read round trip is bit-exact.
"""

from __future__ import annotations

import ast
import math
import struct
import warnings
from dataclasses import dataclass
from enum import IntEnum
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .errors import (
    DataError,
    FormatError,
    IoWriteError,
    ShapeError,
    TruncationError,
    UnsupportedError,
)

TENSOR_SHAPE = (5, 30, 3, 3, 2)
TENSOR_SIZE = 5 * 30 * 3 * 3 * 2  # 2700
N_TIME_SLOTS = 5
N_SUBCARRIERS = 30
N_TX = 3
N_RX = 3
N_PAIRS = N_TX * N_RX

CSD_MAGIC = b"CSD1"
CSD_VERSION = 1
_CSD_HEAD = struct.Struct("<4sHHI")
SAMPLE_BYTES = 1 + TENSOR_SIZE * 4

NPY_MAGIC = b"\x93NUMPY"

# Largest float32 strictly below pi. Quantized phases are clipped to
# [-_PHASE_LIMIT, _PHASE_LIMIT] so the half-open [-pi, pi) invariant holds
# on the float32 grid (float32(pi) rounds above the float64 pi).
_PHASE_LIMIT = float(np.nextafter(np.float32(math.pi), np.float32(0.0)))
_TWO_PI = 2.0 * math.pi


class PostureLabel(IntEnum):
    STAND = 0
    SIT = 1
    LIE_DOWN = 2


LABEL_NAMES = ("stand", "sit", "lie_down")
N_CLASSES = len(PostureLabel)


def canonical_tensor(values) -> np.ndarray:
    """Validate and canonicalize a raw tensor onto the storage grid.

    Wraps phases into [-pi, pi), quantizes to the float32 grid, and returns
    a read-only float64 array. Raises ShapeError / DataError on violations.
    """
    t = np.asarray(values, dtype=np.float64)
    if t.shape != TENSOR_SHAPE:
        raise ShapeError(f"CSI tensor must have shape {TENSOR_SHAPE}, got {t.shape}")
    if not np.all(np.isfinite(t)):
        raise DataError("CSI tensor contains non-finite entries")
    amp = t[..., 0]
    if np.any(amp < 0.0):
        raise DataError("CSI amplitudes must be >= 0")
    phase = np.mod(t[..., 1] + math.pi, _TWO_PI) - math.pi  # wrap to [-pi, pi)
    with np.errstate(over="ignore", invalid="ignore"):
        q = np.stack([amp, phase], axis=-1).astype(np.float32)
    if not np.all(np.isfinite(q)):
        raise DataError("CSI amplitude overflows the float32 storage range")
    limit = np.float32(_PHASE_LIMIT)
    q[..., 1] = np.clip(q[..., 1], -limit, limit)
    out = q.astype(np.float64)
    out.flags.writeable = False
    return out


class CsiSample:
    """One labeled capture: an immutable canonical tensor plus a posture."""

    __slots__ = ("tensor", "label")

    def __init__(self, tensor, label: PostureLabel | int):
        object.__setattr__(self, "tensor", canonical_tensor(tensor))
        object.__setattr__(self, "label", PostureLabel(label))

    def __setattr__(self, name, value):
        raise AttributeError("CsiSample is immutable")

    @property
    def amplitude(self) -> np.ndarray:
        return self.tensor[..., 0]

    @property
    def phase(self) -> np.ndarray:
        return self.tensor[..., 1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, CsiSample):
            return NotImplemented
        return self.label == other.label and np.array_equal(self.tensor, other.tensor)

    def __repr__(self) -> str:
        return f"CsiSample(label={self.label.name})"


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of samples from one environment."""

    samples: tuple[CsiSample, ...]
    environment_id: str = ""

    def __init__(self, samples: Iterable[CsiSample], environment_id: str = ""):
        object.__setattr__(self, "samples", tuple(samples))
        object.__setattr__(self, "environment_id", str(environment_id))

    def __len__(self) -> int:
        return len(self.samples)

    def labels(self) -> np.ndarray:
        return np.array([int(s.label) for s in self.samples], dtype=np.int64)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels(), minlength=N_CLASSES) if self.samples else np.zeros(N_CLASSES, dtype=np.int64)

    def tensors(self) -> np.ndarray:
        """Stacked (N, 5, 30, 3, 3, 2) float64 array."""
        if not self.samples:
            return np.zeros((0,) + TENSOR_SHAPE)
        return np.stack([s.tensor for s in self.samples])

    def subset(self, indices) -> "Dataset":
        return Dataset((self.samples[i] for i in indices), self.environment_id)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.environment_id == other.environment_id
            and len(self.samples) == len(other.samples)
            and all(a == b for a, b in zip(self.samples, other.samples))
        )


def _write(sink: BinaryIO, chunk: bytes, written: int) -> int:
    try:
        sink.write(chunk)
    except OSError as exc:
        raise IoWriteError(written, exc) from exc
    return written + len(chunk)


def write_csd(dataset: Dataset, sink: BinaryIO) -> int:
    """Serialize a dataset to the CSD1 container. Returns bytes written."""
    tag = dataset.environment_id.encode("utf-8")
    if len(tag) > 255:
        raise DataError("environment tag exceeds 255 UTF-8 bytes")
    written = 0
    written = _write(sink, _CSD_HEAD.pack(CSD_MAGIC, CSD_VERSION, 0, len(dataset)), written)
    written = _write(sink, bytes([len(tag)]) + tag, written)
    for sample in dataset.samples:
        payload = sample.tensor.astype(np.float32).tobytes()
        written = _write(sink, bytes([int(sample.label)]) + payload, written)
    return written


def _read_exact(source: BinaryIO, n: int, context: str) -> bytes:
    data = source.read(n)
    if len(data) < n:
        raise TruncationError(expected=n, actual=len(data), context=context)
    return data


def read_csd(source: BinaryIO) -> Dataset:
    """Parse a CSD1 container, validating structure and value ranges."""
    head = _read_exact(source, _CSD_HEAD.size, "CSD1 header")
    magic, version, reserved, count = _CSD_HEAD.unpack(head)
    if magic != CSD_MAGIC:
        raise FormatError(f"bad magic {magic!r}; expected {CSD_MAGIC!r}")
    if version != CSD_VERSION:
        raise UnsupportedError(f"CSD1 version {version} not supported")
    if reserved != 0:
        raise FormatError(f"reserved field must be 0, got {reserved}")
    tag_len = _read_exact(source, 1, "env tag length")[0]
    try:
        tag = _read_exact(source, tag_len, "env tag").decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"environment tag is not valid UTF-8: {exc}") from exc
    samples = []
    for i in range(count):
        rec = _read_exact(source, SAMPLE_BYTES, f"sample {i}")
        label = rec[0]
        if label > 2:
            raise FormatError(f"sample {i}: label code {label} out of range 0..2")
        tensor = np.frombuffer(rec, dtype="<f4", count=TENSOR_SIZE, offset=1)
        with np.errstate(invalid="ignore"):  # signaling NaNs warn on promotion
            promoted = tensor.reshape(TENSOR_SHAPE).astype(np.float64)
        samples.append(CsiSample(promoted, label))
    if source.read(1):
        raise FormatError("trailing bytes after final sample")
    return Dataset(samples, tag)


def _npy_header_bytes(shape: tuple[int, ...], descr: str = "<f4") -> bytes:
    header = f"{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape!r}, }}"
    # v1.0: magic(6) + version(2) + hlen(2) + header padded to a 64-byte multiple.
    pad = 64 - ((10 + len(header) + 1) % 64)
    if pad == 64:
        pad = 0
    header = header + " " * pad + "\n"
    return NPY_MAGIC + bytes([1, 0]) + struct.pack("<H", len(header)) + header.encode("latin-1")


def write_npy(dataset: Dataset, sink: BinaryIO) -> int:
    """Write tensors as NPY v1.0, float32, C order, shape (N, 5, 30, 3, 3, 2).

    Labels are not representable in NPY; persist them via CSD1.
    """
    if len(dataset) == 0:
        raise DataError("refusing to write an empty dataset to NPY")
    shape = (len(dataset),) + TENSOR_SHAPE
    written = _write(sink, _npy_header_bytes(shape), 0)
    for sample in dataset.samples:
        written = _write(sink, sample.tensor.astype("<f4").tobytes(), written)
    return written


_ACCEPTED_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def _parse_npy_header_dict(text: str) -> dict:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SyntaxWarning)
            warnings.simplefilter("ignore", DeprecationWarning)
            parsed = ast.literal_eval(text)
    except (ValueError, SyntaxError, MemoryError, RecursionError) as exc:
        raise FormatError(f"unparseable NPY header: {exc}") from exc
    if not isinstance(parsed, dict):
        raise FormatError("NPY header is not a dict literal")
    return parsed


def read_npy(source: BinaryIO) -> tuple[np.ndarray, tuple[int, ...]]:
    """Parse an NPY v1.0 float tensor file.

    Returns (flat float64 data, shape). Accepts shapes (5,30,3,3,2) and
    (N,5,30,3,3,2) only; anything else raises ShapeError.
    """
    magic = _read_exact(source, 6, "NPY magic")
    if magic != NPY_MAGIC:
        raise FormatError(f"bad magic {magic!r}; expected {NPY_MAGIC!r}")
    major, minor = _read_exact(source, 2, "NPY version")
    if (major, minor) != (1, 0):
        raise UnsupportedError(f"NPY version {major}.{minor} not supported (need 1.0)")
    (hlen,) = struct.unpack("<H", _read_exact(source, 2, "NPY header length"))
    try:
        header_text = _read_exact(source, hlen, "NPY header").decode("latin-1")
    except UnicodeDecodeError as exc:  # latin-1 never fails, but stay defensive
        raise FormatError(str(exc)) from exc
    header = _parse_npy_header_dict(header_text)
    for key in ("descr", "fortran_order", "shape"):
        if key not in header:
            raise FormatError(f"NPY header missing key {key!r}")
    descr = header["descr"]
    if not isinstance(descr, str) or descr not in _ACCEPTED_DTYPES:
        raise UnsupportedError(f"dtype {descr!r} not supported (need '<f4' or '<f8')")
    if header["fortran_order"] is not False:
        if header["fortran_order"] is True:
            raise UnsupportedError("Fortran-ordered NPY is not supported")
        raise FormatError("fortran_order must be a boolean")
    shape = header["shape"]
    if not (isinstance(shape, tuple) and all(isinstance(d, int) and d >= 0 for d in shape)):
        raise FormatError(f"invalid shape entry {shape!r}")
    if shape != TENSOR_SHAPE and not (len(shape) == 6 and shape[1:] == TENSOR_SHAPE):
        raise ShapeError(
            f"shape {shape} not accepted; need {TENSOR_SHAPE} or (N,) + {TENSOR_SHAPE}"
        )
    dtype = _ACCEPTED_DTYPES[descr]
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    payload = _read_exact(source, count * dtype.itemsize, "NPY payload")
    if source.read(1):
        raise FormatError("trailing bytes after NPY payload")
    with np.errstate(invalid="ignore"):  # signaling NaNs warn on promotion
        data = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    return data, shape


def read_npy_tensors(source: BinaryIO) -> np.ndarray:
    """Read an NPY file and return tensors stacked as (N, 5, 30, 3, 3, 2)."""
    data, shape = read_npy(source)
    n = shape[0] if len(shape) == 6 else 1
    return data.reshape((n,) + TENSOR_SHAPE)


def dataset_from_tensors(
    tensors: np.ndarray,
    labels: Sequence[int] | None = None,
    environment_id: str = "",
) -> Dataset:
    """Build a dataset from stacked tensors; labels default to STAND."""
    tensors = np.asarray(tensors, dtype=np.float64)
    if tensors.ndim == 5:
        tensors = tensors[None]
    if tensors.ndim != 6 or tensors.shape[1:] != TENSOR_SHAPE:
        raise ShapeError(f"expected (N,) + {TENSOR_SHAPE}, got {tensors.shape}")
    n = tensors.shape[0]
    if labels is None:
        labels = [PostureLabel.STAND] * n
    if len(labels) != n:
        raise DataError(f"{n} tensors but {len(labels)} labels")
    return Dataset(
        (CsiSample(tensors[i], labels[i]) for i in range(n)), environment_id
    )
