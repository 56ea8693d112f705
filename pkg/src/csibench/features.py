"""Tensor transforms feeding the classifiers.

The CNN consumes the amplitude sub-tensor rearranged to
(antenna pair, subcarrier, time) = (9, 30, 5); classical models consume a
270-entry vector of time-averaged amplitudes per (subcarrier, pair) cell,
optionally the raw 2700-entry flatten. All transforms read amplitudes only
unless stated otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import (
    N_PAIRS,
    N_RX,
    N_SUBCARRIERS,
    N_TIME_SLOTS,
    TENSOR_SHAPE,
    CsiSample,
)
from .errors import DataError, ShapeError

CLASSICAL_DIM = N_SUBCARRIERS * N_PAIRS  # 270
RAW_DIM = 2700
CNN_INPUT_SHAPE = (N_PAIRS, N_SUBCARRIERS, N_TIME_SLOTS)  # (9, 30, 5)

STD_FLOOR = 1e-8


def _tensor_of(sample) -> np.ndarray:
    t = sample.tensor if isinstance(sample, CsiSample) else np.asarray(sample, dtype=np.float64)
    if t.shape != TENSOR_SHAPE:
        raise ShapeError(f"expected tensor shape {TENSOR_SHAPE}, got {t.shape}")
    return t


def to_cnn_input(sample) -> np.ndarray:
    """Amplitude sub-tensor as (pair, subcarrier, time); pair = tx*3 + rx."""
    amp = _tensor_of(sample)[..., 0]  # (t, k, tx, rx)
    return np.ascontiguousarray(amp.transpose(2, 3, 1, 0).reshape(CNN_INPUT_SHAPE))


def cnn_input_to_amplitude(cnn_input: np.ndarray) -> np.ndarray:
    """Inverse index map: (9, 30, 5) back to the (5, 30, 3, 3) amplitudes."""
    x = np.asarray(cnn_input, dtype=np.float64)
    if x.shape != CNN_INPUT_SHAPE:
        raise ShapeError(f"expected {CNN_INPUT_SHAPE}, got {x.shape}")
    return np.ascontiguousarray(
        x.reshape(3, N_RX, N_SUBCARRIERS, N_TIME_SLOTS).transpose(3, 2, 0, 1)
    )


def to_cnn_batch(samples) -> np.ndarray:
    """Stack CNN inputs as (N, 9, 30, 5)."""
    return np.stack([to_cnn_input(s) for s in samples])


def extract_classical(sample) -> np.ndarray:
    """Time-averaged amplitude per (subcarrier, pair); index = k*9 + pair."""
    amp = _tensor_of(sample)[..., 0]
    return amp.mean(axis=0).reshape(CLASSICAL_DIM)


def extract_raw(sample) -> np.ndarray:
    """Row-major flatten of the full tensor (matches the CSD1 byte order)."""
    return _tensor_of(sample).reshape(RAW_DIM).copy()


def unflatten_raw(vector: np.ndarray) -> np.ndarray:
    """Inverse of extract_raw."""
    v = np.asarray(vector, dtype=np.float64)
    if v.shape != (RAW_DIM,):
        raise ShapeError(f"expected ({RAW_DIM},), got {v.shape}")
    return v.reshape(TENSOR_SHAPE)


def feature_matrix(samples, kind: str = "classical") -> np.ndarray:
    """Feature rows for a sample sequence; kind is 'classical' or 'raw'."""
    if kind == "classical":
        return np.stack([extract_classical(s) for s in samples])
    if kind == "raw":
        return np.stack([extract_raw(s) for s in samples])
    raise ValueError(f"unknown feature kind {kind!r}")


@dataclass(frozen=True)
class Scaler:
    """Per-dimension z-score transform frozen from training statistics."""

    mean: np.ndarray
    scale: np.ndarray  # std with a floor so constant dims map to 0

    @classmethod
    def fit(cls, X: np.ndarray) -> "Scaler":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise DataError("standardize needs a non-empty 2-D training matrix")
        mean = X.mean(axis=0)
        scale = np.maximum(X.std(axis=0), STD_FLOOR)
        return cls(mean=mean, scale=scale)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return (X - self.mean) / self.scale


def standardize(train: np.ndarray) -> tuple[Scaler, np.ndarray]:
    """Fit a scaler on training vectors and return the transformed set."""
    scaler = Scaler.fit(train)
    return scaler, scaler.transform(train)
