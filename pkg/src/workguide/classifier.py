"""From-scratch fully connected action classifier.

Three weight layers (two ReLU hidden layers, softmax output) trained with
plain mini-batch gradient descent on cross-entropy. Everything is seeded
and deterministic; the model serializes to a plain-text format any
language can read back.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

MODEL_FORMAT = "workguide-mlp"
MODEL_VERSION = 1


@dataclass
class MlpParams:
    """Weights, biases, class vocabulary and the input standardization.

    ``feature_mean``/``feature_scale`` are frozen training-set statistics
    applied to every input before the first layer; they are parameters of
    the model file, not of the descent.
    """

    classes: tuple[str, ...]
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    feature_mean: np.ndarray = None  # type: ignore[assignment]
    feature_scale: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        h1, d = self.w1.shape
        h2, h1_b = self.w2.shape
        c, h2_b = self.w3.shape
        if (h1_b, h2_b) != (h1, h2):
            raise ValueError("layer shapes are inconsistent")
        if self.b1.shape != (h1,) or self.b2.shape != (h2,) or self.b3.shape != (c,):
            raise ValueError("bias shapes do not match their layers")
        if c != len(self.classes):
            raise ValueError(f"output size {c} != {len(self.classes)} classes")
        if self.feature_mean is None:
            self.feature_mean = np.zeros(d)
        if self.feature_scale is None:
            self.feature_scale = np.ones(d)
        if self.feature_mean.shape != (d,) or self.feature_scale.shape != (d,):
            raise ValueError("standardization vectors must match the input width")
        for arr in (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3,
                    self.feature_mean, self.feature_scale):
            if not np.all(np.isfinite(arr)):
                raise ValueError("parameters must be finite")

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    def arrays(self) -> tuple[np.ndarray, ...]:
        """Descent-trainable arrays (standardization excluded)."""
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)

    def copy(self) -> "MlpParams":
        return MlpParams(self.classes, *(a.copy() for a in self.arrays()),
                         feature_mean=self.feature_mean.copy(),
                         feature_scale=self.feature_scale.copy())


@dataclass
class TrainingConfig:
    learning_rate: float = 0.05
    batch_size: int = 32
    epochs: int = 60
    seed: int = 0
    hidden: tuple[int, int] = (64, 32)

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch size and epochs must be >= 1")


def init_params(
    input_dim: int, hidden: tuple[int, int], classes: Sequence[str], seed: int
) -> MlpParams:
    """Uniform init scaled by 1/sqrt(fan_in), biases zero, fully seeded."""
    rng = np.random.default_rng(seed)
    h1, h2 = hidden
    sizes = [(h1, input_dim), (h2, h1), (len(classes), h2)]
    weights = [
        rng.uniform(-1.0, 1.0, size=s) / np.sqrt(s[1]) for s in sizes
    ]
    return MlpParams(
        classes=tuple(classes),
        w1=weights[0], b1=np.zeros(h1),
        w2=weights[1], b2=np.zeros(h2),
        w3=weights[2], b3=np.zeros(len(classes)),
    )


def _as_batch(features: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim == 2:
        return x, False
    raise ValueError(f"features must be a vector or a batch, got ndim={x.ndim}")


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_pass(x: np.ndarray, params: MlpParams):
    x = (x - params.feature_mean) / params.feature_scale
    z1 = x @ params.w1.T + params.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ params.w2.T + params.b2
    a2 = np.maximum(z2, 0.0)
    logits = a2 @ params.w3.T + params.b3
    return _softmax(logits), (x, z1, a1, z2, a2)


def forward(features: np.ndarray, params: MlpParams) -> np.ndarray:
    """Class probabilities; accepts one vector or a (n, d) batch."""
    x, single = _as_batch(features)
    if x.shape[1] != params.input_dim:
        raise ValueError(f"expected {params.input_dim} features, got {x.shape[1]}")
    probs, _ = _forward_pass(x, params)
    return probs[0] if single else probs


def predict(features: np.ndarray, params: MlpParams) -> str:
    """Most probable action label; ties resolve to the lowest class index."""
    probs = forward(features, params)
    if probs.ndim != 1:
        raise ValueError("predict takes a single feature vector")
    return params.classes[int(np.argmax(probs))]


def loss_and_gradient(
    features: np.ndarray, labels: np.ndarray, params: MlpParams
) -> tuple[float, MlpParams]:
    """Mean cross-entropy and its full backprop gradient.

    ``labels`` are class indices. The gradient is returned in MlpParams
    shape so update loops can zip over arrays().
    """
    x, _ = _as_batch(features)
    y = np.asarray(labels, dtype=np.int64).ravel()
    n = x.shape[0]
    if n == 0:
        raise ValueError("batch must be non-empty")
    if y.shape[0] != n:
        raise ValueError(f"{n} feature rows but {y.shape[0]} labels")
    if y.min() < 0 or y.max() >= len(params.classes):
        raise ValueError("label index out of range")

    probs, (x, z1, a1, z2, a2) = _forward_pass(x, params)
    eps = 1e-300  # guards log(0) for pathological inputs only
    loss = float(-np.mean(np.log(probs[np.arange(n), y] + eps)))

    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    dw3 = dlogits.T @ a2
    db3 = dlogits.sum(axis=0)
    da2 = dlogits @ params.w3
    dz2 = da2 * (z2 > 0)
    dw2 = dz2.T @ a1
    db2 = dz2.sum(axis=0)
    da1 = dz2 @ params.w2
    dz1 = da1 * (z1 > 0)
    dw1 = dz1.T @ x
    db1 = dz1.sum(axis=0)

    grad = MlpParams(params.classes, dw1, db1, dw2, db2, dw3, db3)
    return loss, grad


def train(
    features: np.ndarray,
    labels: Sequence[str],
    classes: Sequence[str],
    config: TrainingConfig,
) -> MlpParams:
    """Mini-batch gradient descent over the labeled feature set."""
    x = np.asarray(features, dtype=np.float64)
    class_index = {name: i for i, name in enumerate(classes)}
    unknown = sorted({l for l in labels if l not in class_index})
    if unknown:
        raise ValueError(f"labels outside the registered vocabulary: {unknown}")
    y = np.array([class_index[l] for l in labels], dtype=np.int64)
    if len(set(y.tolist())) < 2:
        warnings.warn("training set contains a single class", stacklevel=2)

    params = init_params(x.shape[1], config.hidden, classes, config.seed)
    rng = np.random.default_rng(config.seed + 1)
    n = x.shape[0]
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            _, grad = loss_and_gradient(x[batch], y[batch], params)
            for param_arr, grad_arr in zip(params.arrays(), grad.arrays()):
                param_arr -= config.learning_rate * grad_arr
    return params


def accuracy(params: MlpParams, features: np.ndarray, labels: Sequence[str]) -> float:
    probs = forward(np.asarray(features, dtype=np.float64), params)
    predicted = np.argmax(probs, axis=1)
    class_index = {name: i for i, name in enumerate(params.classes)}
    truth = np.array([class_index[l] for l in labels])
    return float(np.mean(predicted == truth))


def per_class_accuracy(
    params: MlpParams, features: np.ndarray, labels: Sequence[str]
) -> dict[str, float]:
    probs = forward(np.asarray(features, dtype=np.float64), params)
    predicted = np.argmax(probs, axis=1)
    out: dict[str, float] = {}
    labels_arr = np.array(list(labels))
    for i, name in enumerate(params.classes):
        mask = labels_arr == name
        if mask.any():
            out[name] = float(np.mean(predicted[mask] == i))
    return out


def _format_row(row: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in row)


def save_model(params: MlpParams, path) -> None:
    """Write the documented plain-text model format (see docs/formats.md)."""
    lines = [f"{MODEL_FORMAT} {MODEL_VERSION}"]
    lines.append("classes " + str(len(params.classes)) + " " + " ".join(params.classes))
    h1, d = params.w1.shape
    h2 = params.w2.shape[0]
    lines.append(f"dims {d} {h1} {h2} {len(params.classes)}")
    for name, arr in zip(("W1", "b1", "W2", "b2", "W3", "b3"), params.arrays()):
        if arr.ndim == 2:
            lines.append(f"{name} {arr.shape[0]} {arr.shape[1]}")
            lines.extend(_format_row(row) for row in arr)
        else:
            lines.append(f"{name} {arr.shape[0]}")
            lines.append(_format_row(arr))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


class ModelFormatError(ValueError):
    pass


def load_model(path) -> MlpParams:
    text = Path(path).read_text(encoding="ascii")
    tokens = text.split("\n")
    cursor = 0

    def next_line() -> str:
        nonlocal cursor
        while cursor < len(tokens):
            line = tokens[cursor].strip()
            cursor += 1
            if line:
                return line
        raise ModelFormatError("unexpected end of model file")

    header = next_line().split()
    if header[:1] != [MODEL_FORMAT] or int(header[1]) != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model header: {' '.join(header)}")
    class_line = next_line().split()
    if class_line[0] != "classes":
        raise ModelFormatError("missing classes line")
    count = int(class_line[1])
    classes = tuple(class_line[2 : 2 + count])
    if len(classes) != count:
        raise ModelFormatError("class count does not match names")
    dims = next_line().split()
    if dims[0] != "dims":
        raise ModelFormatError("missing dims line")
    d, h1, h2, c = (int(v) for v in dims[1:5])

    expected = {
        "W1": (h1, d), "b1": (h1,),
        "W2": (h2, h1), "b2": (h2,),
        "W3": (c, h2), "b3": (c,),
    }
    arrays = {}
    for name, shape in expected.items():
        head = next_line().split()
        if head[0] != name:
            raise ModelFormatError(f"expected section {name}, got {head[0]}")
        declared = tuple(int(v) for v in head[1:])
        if declared != shape:
            raise ModelFormatError(f"section {name} has shape {declared}, expected {shape}")
        rows = shape[0] if len(shape) == 2 else 1
        data = [
            [float(v) for v in next_line().split()] for _ in range(rows)
        ]
        arr = np.array(data, dtype=np.float64)
        arrays[name] = arr if len(shape) == 2 else arr.ravel()
        if arrays[name].shape != shape:
            raise ModelFormatError(f"section {name} row width mismatch")
    return MlpParams(classes, arrays["W1"], arrays["b1"], arrays["W2"],
                     arrays["b2"], arrays["W3"], arrays["b3"])
