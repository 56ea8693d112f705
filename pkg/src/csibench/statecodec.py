"""Tagged binary codec for nested model state.

Encodes None/bool/int/float/str/ndarray/list/dict deterministically
(little-endian, dict keys sorted), so identical states always serialize to
identical bytes. Used for the model container payloads.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from .errors import FormatError, TruncationError

_T_NONE = 0
_T_INT = 1
_T_FLOAT = 2
_T_STR = 3
_T_ARRAY = 4
_T_LIST = 5
_T_DICT = 6
_T_BOOL = 7

_DTYPES = {
    0: np.dtype("<f8"),
    1: np.dtype("<f4"),
    2: np.dtype("<i8"),
    3: np.dtype("<i4"),
    4: np.dtype("<u1"),
}
_DTYPE_CODES = {v: k for k, v in _DTYPES.items()}


def encode(value, sink: BinaryIO) -> None:
    if value is None:
        sink.write(bytes([_T_NONE]))
    elif isinstance(value, bool):
        sink.write(bytes([_T_BOOL, 1 if value else 0]))
    elif isinstance(value, (int, np.integer)):
        # 16-byte signed field so unsigned 64-bit seeds round-trip.
        sink.write(bytes([_T_INT]) + int(value).to_bytes(16, "little", signed=True))
    elif isinstance(value, (float, np.floating)):
        sink.write(bytes([_T_FLOAT]) + struct.pack("<d", float(value)))
    elif isinstance(value, str):
        raw = value.encode("utf-8")
        sink.write(bytes([_T_STR]) + struct.pack("<I", len(raw)) + raw)
    elif isinstance(value, np.ndarray):
        arr = np.ascontiguousarray(value)
        dtype = arr.dtype.newbyteorder("<")
        if dtype not in _DTYPE_CODES:
            arr = arr.astype("<f8")
            dtype = arr.dtype
        sink.write(bytes([_T_ARRAY, _DTYPE_CODES[dtype], arr.ndim]))
        sink.write(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        sink.write(arr.astype(dtype).tobytes())
    elif isinstance(value, (list, tuple)):
        sink.write(bytes([_T_LIST]) + struct.pack("<I", len(value)))
        for item in value:
            encode(item, sink)
    elif isinstance(value, dict):
        keys = sorted(value)
        sink.write(bytes([_T_DICT]) + struct.pack("<I", len(keys)))
        for key in keys:
            if not isinstance(key, str):
                raise FormatError("state dict keys must be strings")
            raw = key.encode("utf-8")
            sink.write(struct.pack("<I", len(raw)) + raw)
            encode(value[key], sink)
    else:
        raise FormatError(f"cannot encode {type(value).__name__}")


def _read(source: BinaryIO, n: int) -> bytes:
    data = source.read(n)
    if len(data) < n:
        raise TruncationError(expected=n, actual=len(data), context="state payload")
    return data


def decode(source: BinaryIO):
    tag = _read(source, 1)[0]
    if tag == _T_NONE:
        return None
    if tag == _T_BOOL:
        return _read(source, 1)[0] != 0
    if tag == _T_INT:
        return int.from_bytes(_read(source, 16), "little", signed=True)
    if tag == _T_FLOAT:
        return struct.unpack("<d", _read(source, 8))[0]
    if tag == _T_STR:
        (n,) = struct.unpack("<I", _read(source, 4))
        try:
            return _read(source, n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"bad UTF-8 in state string: {exc}") from exc
    if tag == _T_ARRAY:
        code, ndim = _read(source, 2)
        if code not in _DTYPES:
            raise FormatError(f"unknown array dtype code {code}")
        shape = struct.unpack(f"<{ndim}I", _read(source, 4 * ndim)) if ndim else ()
        dtype = _DTYPES[code]
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = _read(source, count * dtype.itemsize)
        return np.frombuffer(data, dtype=dtype).reshape(shape).copy()
    if tag == _T_LIST:
        (n,) = struct.unpack("<I", _read(source, 4))
        return [decode(source) for _ in range(n)]
    if tag == _T_DICT:
        (n,) = struct.unpack("<I", _read(source, 4))
        out = {}
        for _ in range(n):
            (klen,) = struct.unpack("<I", _read(source, 4))
            key = _read(source, klen).decode("utf-8")
            out[key] = decode(source)
        return out
    raise FormatError(f"unknown state tag {tag}")
