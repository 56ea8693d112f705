"""Small convolutional network over (pair, subcarrier, time) amplitude maps.

Architecture: two 3x3 cross-correlation blocks (stride 1, zero padding 1)
each followed by ReLU and a (2, 1) max pool over the subcarrier axis, then
two fully connected layers and softmax. For the default (9, 30, 5) input the
shape chain is (9,30,5) -> (32,30,5) -> (32,15,5) -> (64,15,5) -> (64,7,5)
-> 2240 -> 128 -> 3. All arithmetic is float64; gradients are exact and
checked against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimensionError
from .rng import derive_seed, make_generator

DEFAULT_INPUT_SHAPE = (9, 30, 5)
DEFAULT_CONV_CHANNELS = (32, 64)
DEFAULT_HIDDEN = 128
N_CLASSES = 3


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    momentum: float = 0.9
    seed: int = 0
    # Stop once the epoch mean loss falls below this; None trains all epochs.
    early_stop_loss: float | None = 1e-2

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise DataError("epochs must be >= 0 and batch_size >= 1")
        if self.learning_rate < 0 or self.momentum < 0:
            raise DataError("learning_rate and momentum must be >= 0")


def _im2col(x: np.ndarray) -> np.ndarray:
    """(N, C, H, W) -> (N, C*9, H*W) patches for a 3x3 window, zero pad 1."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((n, c, 3, 3, h, w), dtype=np.float64)
    for di in range(3):
        for dj in range(3):
            cols[:, :, di, dj] = xp[:, :, di : di + h, dj : dj + w]
    return cols.reshape(n, c * 9, h * w)


def _col2im(dcols: np.ndarray, shape: tuple[int, int, int, int]) -> np.ndarray:
    """Adjoint of _im2col: scatter patch gradients back onto the input."""
    n, c, h, w = shape
    dc = dcols.reshape(n, c, 3, 3, h, w)
    dxp = np.zeros((n, c, h + 2, w + 2), dtype=np.float64)
    for di in range(3):
        for dj in range(3):
            dxp[:, :, di : di + h, dj : dj + w] += dc[:, :, di, dj]
    return dxp[:, :, 1 : h + 1, 1 : w + 1]


def conv_forward(kernels: np.ndarray, bias: np.ndarray, x: np.ndarray):
    """Cross-correlation with 3x3 kernels, stride 1, zero padding 1.

    kernels: (out_ch, in_ch, 3, 3); x: (N, in_ch, H, W). Output keeps H, W.
    Returns (out, cols) with cols cached for the backward pass.
    """
    if x.ndim != 4 or kernels.ndim != 4 or x.shape[1] != kernels.shape[1]:
        raise DimensionError(
            f"conv shapes disagree: kernels {kernels.shape}, input {x.shape}"
        )
    n, c, h, w = x.shape
    out_ch = kernels.shape[0]
    cols = _im2col(x)
    out = np.matmul(kernels.reshape(out_ch, c * 9), cols)
    out += bias[:, None]
    return out.reshape(n, out_ch, h, w), cols


def conv_backward(kernels: np.ndarray, cols: np.ndarray, x_shape, d_out: np.ndarray):
    """Gradients of the conv output w.r.t. kernels, bias, and input."""
    n, c, h, w = x_shape
    out_ch = kernels.shape[0]
    d2 = d_out.reshape(n, out_ch, h * w)
    d_kernels = np.tensordot(d2, cols, axes=([0, 2], [0, 2])).reshape(kernels.shape)
    d_bias = d2.sum(axis=(0, 2))
    d_cols = np.matmul(kernels.reshape(out_ch, c * 9).T, d2)
    return d_kernels, d_bias, _col2im(d_cols, x_shape)


def maxpool_forward(x: np.ndarray):
    """Non-overlapping (2, 1) max pool over the H axis; floor on odd H.

    Returns (pooled, argmax) where argmax in {0, 1} marks the winning row of
    each window (first index on ties).
    """
    n, c, h, w = x.shape
    h2 = h // 2
    windows = x[:, :, : h2 * 2, :].reshape(n, c, h2, 2, w)
    pooled = windows.max(axis=3)
    argmax = windows.argmax(axis=3)
    return pooled, argmax


def maxpool_backward(d_out: np.ndarray, argmax: np.ndarray, x_shape) -> np.ndarray:
    n, c, h, w = x_shape
    h2 = h // 2
    dwin = np.zeros((n, c, h2, 2, w), dtype=np.float64)
    np.put_along_axis(dwin, argmax[:, :, :, None, :], d_out[:, :, :, None, :], axis=3)
    dx = np.zeros((n, c, h, w), dtype=np.float64)
    dx[:, :, : h2 * 2, :] = dwin.reshape(n, c, h2 * 2, w)
    return dx


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    return p


class CnnModel:
    """Parameter container plus exact forward/backward passes."""

    def __init__(
        self,
        input_shape: tuple[int, int, int] = DEFAULT_INPUT_SHAPE,
        conv_channels: tuple[int, int] = DEFAULT_CONV_CHANNELS,
        hidden: int = DEFAULT_HIDDEN,
        n_classes: int = N_CLASSES,
        seed: int = 0,
    ):
        c, h, w = input_shape
        c1, c2 = conv_channels
        h_pool1 = h // 2
        h_pool2 = h_pool1 // 2
        if h_pool2 < 1:
            raise DataError(f"input height {h} too small for two (2,1) pools")
        self.input_shape = input_shape
        self.conv_channels = conv_channels
        self.hidden = hidden
        self.n_classes = n_classes
        self.flat_dim = c2 * h_pool2 * w
        self.input_mean = 0.0
        self.input_std = 1.0
        rng = make_generator(derive_seed(seed, "init"))
        # He-style scales for the ReLU stacks; biases start at zero.
        self.params: dict[str, np.ndarray] = {
            "conv1_w": rng.normal(0.0, np.sqrt(2.0 / (c * 9)), size=(c1, c, 3, 3)),
            "conv1_b": np.zeros(c1),
            "conv2_w": rng.normal(0.0, np.sqrt(2.0 / (c1 * 9)), size=(c2, c1, 3, 3)),
            "conv2_b": np.zeros(c2),
            "fc1_w": rng.normal(0.0, np.sqrt(2.0 / self.flat_dim), size=(self.flat_dim, hidden)),
            "fc1_b": np.zeros(hidden),
            "fc2_w": rng.normal(0.0, np.sqrt(2.0 / hidden), size=(hidden, n_classes)),
            "fc2_b": np.zeros(n_classes),
        }

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 3:
            x = x[None]
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise DimensionError(f"expected (N,) + {self.input_shape}, got {x.shape}")
        return (x - self.input_mean) / self.input_std

    def _forward(self, x: np.ndarray):
        p = self.params
        c, h, w = self.input_shape
        n = x.shape[0]
        z1, cols1 = conv_forward(p["conv1_w"], p["conv1_b"], x)
        a1 = np.maximum(z1, 0.0)
        p1, idx1 = maxpool_forward(a1)
        assert p1.shape == (n, self.conv_channels[0], h // 2, w)
        z2, cols2 = conv_forward(p["conv2_w"], p["conv2_b"], p1)
        a2 = np.maximum(z2, 0.0)
        p2, idx2 = maxpool_forward(a2)
        assert p2.shape == (n, self.conv_channels[1], (h // 2) // 2, w)
        flat = p2.reshape(n, self.flat_dim)
        z3 = flat @ p["fc1_w"] + p["fc1_b"]
        a3 = np.maximum(z3, 0.0)
        logits = a3 @ p["fc2_w"] + p["fc2_b"]
        cache = dict(
            x=x, z1=z1, cols1=cols1, a1=a1, p1=p1, idx1=idx1,
            z2=z2, cols2=cols2, a2=a2, p2=p2, idx2=idx2,
            flat=flat, z3=z3, a3=a3,
        )
        return logits, cache

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        logits, _ = self._forward(self._check_input(x))
        return softmax(logits)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)

    def loss(self, x: np.ndarray, y: np.ndarray) -> float:
        probs = self.predict_proba(x)
        y = np.asarray(y, dtype=np.int64)
        return float(-np.mean(np.log(probs[np.arange(len(y)), y] + 1e-300)))

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray):
        """Mean cross-entropy over the batch and exact parameter gradients."""
        x = self._check_input(x)
        y = np.asarray(y, dtype=np.int64)
        n = x.shape[0]
        p = self.params
        logits, cache = self._forward(x)
        probs = softmax(logits)
        loss = float(-np.mean(np.log(probs[np.arange(n), y] + 1e-300)))

        d_logits = probs.copy()
        d_logits[np.arange(n), y] -= 1.0
        d_logits /= n
        grads: dict[str, np.ndarray] = {}
        grads["fc2_w"] = cache["a3"].T @ d_logits
        grads["fc2_b"] = d_logits.sum(axis=0)
        d_a3 = d_logits @ p["fc2_w"].T
        d_z3 = d_a3 * (cache["z3"] > 0)
        grads["fc1_w"] = cache["flat"].T @ d_z3
        grads["fc1_b"] = d_z3.sum(axis=0)
        d_flat = d_z3 @ p["fc1_w"].T
        d_p2 = d_flat.reshape(cache["p2"].shape)
        d_a2 = maxpool_backward(d_p2, cache["idx2"], cache["a2"].shape)
        d_z2 = d_a2 * (cache["z2"] > 0)
        grads["conv2_w"], grads["conv2_b"], d_p1 = conv_backward(
            p["conv2_w"], cache["cols2"], cache["p1"].shape, d_z2
        )
        d_a1 = maxpool_backward(d_p1, cache["idx1"], cache["a1"].shape)
        d_z1 = d_a1 * (cache["z1"] > 0)
        grads["conv1_w"], grads["conv1_b"], _ = conv_backward(
            p["conv1_w"], cache["cols1"], cache["x"].shape, d_z1
        )
        return loss, grads

    def state(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "conv_channels": list(self.conv_channels),
            "hidden": self.hidden,
            "n_classes": self.n_classes,
            "input_mean": self.input_mean,
            "input_std": self.input_std,
            "params": {k: v.copy() for k, v in self.params.items()},
        }

    @classmethod
    def from_state(cls, state: dict) -> "CnnModel":
        model = cls(
            input_shape=tuple(state["input_shape"]),
            conv_channels=tuple(state["conv_channels"]),
            hidden=int(state["hidden"]),
            n_classes=int(state["n_classes"]),
        )
        model.input_mean = float(state["input_mean"])
        model.input_std = float(state["input_std"])
        for k in model.params:
            model.params[k] = np.asarray(state["params"][k], dtype=np.float64)
        return model


def train(
    model: CnnModel,
    x: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
) -> tuple[CnnModel, list[float]]:
    """Mini-batch SGD with momentum; mutates and returns the model.

    Inputs are standardized by global training mean/std scalars stored on the
    model so later predictions see the same scale.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 4 or x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise DataError("training needs matching non-empty inputs and labels")
    model.input_mean = float(x.mean())
    std = float(x.std())
    model.input_std = std if std > 1e-12 else 1.0
    n = x.shape[0]
    rng = make_generator(derive_seed(config.seed, "shuffle"))
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    history: list[float] = []
    for _epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, grads = model.loss_and_grads(x[batch], y[batch])
            total += loss * batch.size
            for k, g in grads.items():
                velocity[k] = config.momentum * velocity[k] - config.learning_rate * g
                model.params[k] += velocity[k]
        epoch_loss = total / n
        history.append(epoch_loss)
        if config.early_stop_loss is not None and epoch_loss < config.early_stop_loss:
            break
    return model, history


def finite_difference_grads(
    model: CnnModel, x: np.ndarray, y: np.ndarray, h: float = 1e-5
) -> dict[str, np.ndarray]:
    """Central finite differences of the batch loss for every parameter."""
    grads = {}
    for name, arr in model.params.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = model.loss(x, y)
            flat[i] = orig - h
            down = model.loss(x, y)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads


@dataclass
class GradCheckReport:
    max_relative_error: float
    per_param: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance


def compare_grads(
    analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray], tolerance: float = 1e-4
) -> GradCheckReport:
    per_param = {}
    for name in numeric:
        a, n = analytic[name], numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)
        per_param[name] = float((np.abs(a - n) / denom).max())
    return GradCheckReport(
        max_relative_error=max(per_param.values()),
        per_param=per_param,
        tolerance=tolerance,
    )


def grad_check(tolerance: float = 1e-4, seed: int = 0, h: float = 1e-5) -> GradCheckReport:
    """Finite-difference audit of every gradient on a miniature model."""
    model = CnnModel(input_shape=(2, 6, 3), conv_channels=(3, 4), hidden=5, seed=seed)
    rng = make_generator(derive_seed(seed, "gradcheck"))
    x = rng.normal(size=(3, 2, 6, 3))
    y = rng.integers(0, 3, size=3)
    _, analytic = model.loss_and_grads(x, y)
    numeric = finite_difference_grads(model, x, y, h=h)
    return compare_grads(analytic, numeric, tolerance)
