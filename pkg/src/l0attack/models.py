"""Small differentiable classifiers used as attack victims, plus a trainer."""

from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import NonFiniteError, Tape

MAGIC = b"L0AMODEL"
CNN_KERNELS = (4, 4)
CNN_CHANNELS = (8, 8)


class ModelError(ValueError):
    pass


class Architecture(str, enum.Enum):
    LOGISTIC = "logistic"
    MLP = "mlp"
    CNN1D = "cnn1d"


@dataclass
class Model:
    """A classifier ``f(x, theta)`` mapping a length-``input_length`` series to logits."""

    architecture: Architecture
    input_length: int
    num_classes: int
    params: dict[str, np.ndarray]
    hidden: int = 32

    def __post_init__(self):
        self.architecture = Architecture(self.architecture)

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def forward(self, x, params: dict | None = None):
        """Logits for ``x`` of shape (d,) or (batch, d); operands may be tape nodes."""
        p = self.params if params is None else params
        arch = self.architecture
        if arch is Architecture.LOGISTIC:
            return ag.linear(x, p["w"], p["b"])
        if arch is Architecture.MLP:
            h = ag.relu(ag.linear(x, p["w1"], p["b1"]))
            return ag.linear(h, p["w2"], p["b2"])
        shape = ag.value_of(x).shape
        h = ag.reshape(x, shape[:-1] + (1, shape[-1]))
        h = ag.relu(ag.conv1d(h, p["k1"], p["c1"]))
        h = ag.relu(ag.conv1d(h, p["k2"], p["c2"]))
        h = ag.mean(h, axis=-1)
        return ag.linear(h, p["w"], p["b"])

    def copy(self) -> "Model":
        return Model(self.architecture, self.input_length, self.num_classes,
                     {k: v.copy() for k, v in self.params.items()}, self.hidden)


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    s = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


def build(architecture: Architecture | str, input_length: int, num_classes: int,
          seed: int = 0, hidden: int = 32) -> Model:
    """Initialise weights uniformly in +-sqrt(6 / (fan_in + fan_out)); biases start at zero."""
    arch = Architecture(architecture)
    d, k = int(input_length), int(num_classes)
    if k < 2:
        raise ModelError("num_classes must be >= 2")
    if d < 1:
        raise ModelError("input_length must be >= 1")
    rng = np.random.default_rng(seed)
    if arch is Architecture.LOGISTIC:
        params = {"w": _glorot(rng, (k, d), d, k), "b": np.zeros(k)}
    elif arch is Architecture.MLP:
        params = {
            "w1": _glorot(rng, (hidden, d), d, hidden),
            "b1": np.zeros(hidden),
            "w2": _glorot(rng, (k, hidden), hidden, k),
            "b2": np.zeros(k),
        }
    else:
        (k1, k2), (c1, c2) = CNN_KERNELS, CNN_CHANNELS
        if d < k1 + k2:
            raise ModelError(f"cnn1d needs input_length >= {k1 + k2}, got {d}")
        params = {
            "k1": _glorot(rng, (c1, 1, k1), k1, c1 * k1),
            "c1": np.zeros(c1),
            "k2": _glorot(rng, (c2, c1, k2), c1 * k2, c2 * k2),
            "c2": np.zeros(c2),
            "w": _glorot(rng, (k, c2), c2, k),
            "b": np.zeros(k),
        }
    return Model(arch, d, k, params, hidden)


def predict(model: Model, x) -> np.ndarray:
    x = ag.as_array(x)
    if x.ndim != 1 or x.size != model.input_length:
        raise ModelError(f"expected a series of length {model.input_length}, got shape {x.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        logits = np.asarray(model.forward(x))
    if not np.all(np.isfinite(logits)):
        raise NonFiniteError("non-finite logits")
    return logits


def predict_class(model: Model, x) -> int:
    # np.argmax picks the lowest index among ties
    return int(np.argmax(predict(model, x)))


def accuracy(model: Model, X: np.ndarray, y: np.ndarray) -> float:
    if len(X) == 0:
        return float("nan")
    logits = np.asarray(model.forward(ag.as_array(X)))
    return float(np.mean(np.argmax(logits, axis=1) == y))


def loss_and_grads(model: Model, X: np.ndarray, y: np.ndarray, params=None):
    """Mean cross-entropy over a batch and its gradient for every parameter."""
    tape = Tape()
    source = model.params if params is None else params
    leaves = {name: tape.leaf(v, name) for name, v in source.items()}
    loss = ag.softmax_cross_entropy(model.forward(ag.as_array(X), leaves), y)
    grads = tape.backward(loss)
    return loss.item(), {name: grads[leaf] for name, leaf in leaves.items()}


# ---------------------------------------------------------------------------
# training


class Optimizer(str, enum.Enum):
    SGD = "sgd"
    ADAM = "adam"


@dataclass(frozen=True)
class TrainConfig:
    optimizer: Optimizer = Optimizer.ADAM
    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        if not self.learning_rate >= 0 or not math.isfinite(self.learning_rate):
            raise ValueError("learning rate must be finite and >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")

    def to_dict(self) -> dict:
        return {"optimizer": self.optimizer.value, "learning_rate": self.learning_rate,
                "epochs": self.epochs, "batch_size": self.batch_size, "seed": self.seed}


@dataclass
class TrainResult:
    model: Model
    loss_curve: list[float]
    initial_loss: float


def train(model: Model, X, y, config: TrainConfig) -> TrainResult:
    """Minibatch training on mean cross-entropy.

    ``loss_curve`` holds the full-training-set loss after each epoch. The input
    model is left untouched; a trained copy is returned.
    """
    X = ag.as_array(X)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise ModelError("training set is empty")
    if X.shape[1] != model.input_length or len(y) != len(X):
        raise ModelError(f"training data of shape {X.shape} does not fit the model")
    if np.any(y < 0) or np.any(y >= model.num_classes):
        raise ModelError("label out of range")

    model = model.copy()
    rng = np.random.default_rng(config.seed)
    lr = config.learning_rate
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    m = {k: np.zeros_like(v) for k, v in model.params.items()}
    v2 = {k: np.zeros_like(v) for k, v in model.params.items()}
    step = 0

    initial_loss, _ = loss_and_grads(model, X, y)
    curve: list[float] = []
    n = len(X)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            _, grads = loss_and_grads(model, X[idx], y[idx])
            step += 1
            for name, g in grads.items():
                if config.optimizer is Optimizer.SGD:
                    update = lr * g
                else:
                    m[name] = beta1 * m[name] + (1 - beta1) * g
                    v2[name] = beta2 * v2[name] + (1 - beta2) * g * g
                    m_hat = m[name] / (1 - beta1**step)
                    v_hat = v2[name] / (1 - beta2**step)
                    update = lr * m_hat / (np.sqrt(v_hat) + eps)
                model.params[name] = model.params[name] - update
                if not np.all(np.isfinite(model.params[name])):
                    raise NonFiniteError(f"parameter {name} became non-finite during training")
        curve.append(loss_and_grads(model, X, y)[0])
    return TrainResult(model, curve, initial_loss)


# ---------------------------------------------------------------------------
# persistence: 8-byte magic, u64 header length, JSON header, little-endian float64 payload


def save(model: Model, path: str | Path) -> None:
    header = {
        "architecture": model.architecture.value,
        "input_length": model.input_length,
        "num_classes": model.num_classes,
        "hidden": model.hidden,
        "params": [[name, list(arr.shape)] for name, arr in model.params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    payload = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for arr in model.params.values())
    Path(path).write_bytes(MAGIC + struct.pack("<Q", len(blob)) + blob + payload)


def load(path: str | Path) -> Model:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC or len(raw) < 16:
        raise ModelError(f"{path}: not a model file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    try:
        header = json.loads(raw[16 : 16 + hlen])
    except ValueError:
        raise ModelError(f"{path}: corrupt header") from None
    offset = 16 + hlen
    params = {}
    for name, shape in header["params"]:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(raw):
            raise ModelError(f"{path}: truncated payload")
        params[name] = np.frombuffer(raw[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        offset = end
    if offset != len(raw):
        raise ModelError(f"{path}: trailing bytes after payload")
    return Model(header["architecture"], header["input_length"], header["num_classes"],
                 params, header.get("hidden", 32))
