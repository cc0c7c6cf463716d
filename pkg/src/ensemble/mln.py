"""
Multi-Layer Network

Fully connected sigmoid network Y = F(X, W, Theta) trained by full-batch
gradient descent on the mean squared error E = 1/2 sum_h (d_h - Y_h)^2.
Models are immutable; training returns a new model.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from utils.errors import DataError, TrainingError
from utils.logger import get_logger

logger = get_logger(__name__)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class MlnArchitecture:
    """Layer sizes [M, H1, ..., c]; logistic sigmoid on every non-input layer."""
    layer_sizes: Tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if not sizes:
            raise DataError("architecture needs at least one layer")
        if any(s < 1 for s in sizes):
            raise DataError(f"layer sizes must be positive, got {sizes}")
        if len(sizes) < 3:
            raise DataError("architecture needs input, at least one hidden, and output layers")
        object.__setattr__(self, 'layer_sizes', sizes)

    @classmethod
    def for_data(cls, n_features: int, n_clusters: int,
                 hidden_sizes: Union[Sequence[int], None] = None) -> 'MlnArchitecture':
        """Input M, output c; one hidden layer of max(4, 2c) unless given."""
        hidden = tuple(hidden_sizes) if hidden_sizes else (max(4, 2 * n_clusters),)
        return cls((n_features, *hidden, n_clusters))

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    @property
    def shapes(self) -> List[Tuple[int, int]]:
        """Weight matrix shape (size_l, size_{l-1}) per layer."""
        return [(self.layer_sizes[i + 1], self.layer_sizes[i])
                for i in range(len(self.layer_sizes) - 1)]


@dataclass(frozen=True)
class MlnModel:
    """Architecture with per-layer weights W and biases Theta."""
    arch: MlnArchitecture
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]

    def __post_init__(self):
        weights = tuple(_frozen(w) for w in self.weights)
        biases = tuple(_frozen(b) for b in self.biases)
        shapes = self.arch.shapes
        if len(weights) != len(shapes) or len(biases) != len(shapes):
            raise DataError(f"model needs {len(shapes)} weight and bias arrays")
        for layer, (w, b, shape) in enumerate(zip(weights, biases, shapes)):
            if w.shape != shape or b.shape != (shape[0],):
                raise DataError(f"layer {layer}: expected W{shape} and Theta({shape[0]},), "
                                f"got W{w.shape} and Theta{b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DataError(f"layer {layer}: non-finite parameters")
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'biases', biases)


@dataclass(frozen=True)
class MlnGradients:
    """Gradients of the mean loss, laid out like MlnModel parameters."""
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]


def init_model(arch: MlnArchitecture, seed: int = 0) -> MlnModel:
    """Uniform Glorot weights in [-r, r], r = sqrt(6 / (fan_in + fan_out)); zero biases."""
    rng = np.random.default_rng(seed)
    weights = []
    for fan_out, fan_in in arch.shapes:
        r = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-r, r, size=(fan_out, fan_in)))
    biases = [np.zeros(fan_out) for fan_out, _ in arch.shapes]
    return MlnModel(arch, tuple(weights), tuple(biases))


def _check_inputs(model: MlnModel, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.ndim != 2 or x.shape[1] != model.arch.n_inputs:
        raise DataError(f"input needs {model.arch.n_inputs} columns, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataError("input contains non-finite values")
    return x


def _activations(model: MlnModel, x: np.ndarray) -> List[np.ndarray]:
    acts = [x]
    for w, b in zip(model.weights, model.biases):
        acts.append(expit(acts[-1] @ w.T + b))
    return acts


def forward(model: MlnModel, x: np.ndarray) -> np.ndarray:
    """n x c outputs, each row computed from its input row only."""
    return _activations(model, _check_inputs(model, x))[-1]


def loss(d: np.ndarray, y: np.ndarray) -> float:
    """
    Squared error 1/2 sum_h (d_h - Y_h)^2.

    For matrices the per-row errors are averaged.
    """
    d = np.asarray(d, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if d.shape != y.shape:
        raise DataError(f"target and output shapes differ ({d.shape} vs {y.shape})")
    per_row = 0.5 * np.sum((d - y) ** 2, axis=-1)
    return float(np.mean(per_row))


def _check_targets(model: MlnModel, x: np.ndarray, targets: np.ndarray) -> np.ndarray:
    d = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if d.shape != (x.shape[0], model.arch.n_outputs):
        raise DataError(f"targets must be {x.shape[0]}x{model.arch.n_outputs}, got {d.shape}")
    return d


def _loss_and_gradients(model: MlnModel, x: np.ndarray,
                        d: np.ndarray) -> Tuple[float, MlnGradients]:
    acts = _activations(model, x)
    y = acts[-1]
    n = x.shape[0]
    current = loss(d, y)

    grad_w: List[np.ndarray] = [np.empty(0)] * len(model.weights)
    grad_b: List[np.ndarray] = [np.empty(0)] * len(model.biases)
    delta = (y - d) * y * (1.0 - y) / n
    for layer in range(len(model.weights) - 1, -1, -1):
        grad_w[layer] = delta.T @ acts[layer]
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            a = acts[layer]
            delta = (delta @ model.weights[layer]) * a * (1.0 - a)
    return current, MlnGradients(tuple(grad_w), tuple(grad_b))


def backprop_gradients(model: MlnModel, x: np.ndarray, targets: np.ndarray) -> MlnGradients:
    """Exact gradients of the mean loss by reverse accumulation."""
    x = _check_inputs(model, x)
    d = _check_targets(model, x, targets)
    return _loss_and_gradients(model, x, d)[1]


def train_gd(model: MlnModel, x: np.ndarray, targets: np.ndarray, lr: float,
             epochs: int) -> Tuple[MlnModel, List[float]]:
    """
    Full-batch gradient descent, one update per epoch.

    Returns:
        The trained model and the loss history (initial loss first,
        ``epochs + 1`` entries)
    """
    if lr < 0:
        raise DataError(f"learning rate must be non-negative, got {lr}")
    if epochs < 0:
        raise DataError(f"epochs must be non-negative, got {epochs}")
    x = _check_inputs(model, x)
    d = _check_targets(model, x, targets)

    weights = [w.copy() for w in model.weights]
    biases = [b.copy() for b in model.biases]
    history: List[float] = []
    current = model
    for epoch in range(epochs):
        value, grads = _loss_and_gradients(current, x, d)
        history.append(value)
        for layer in range(len(weights)):
            weights[layer] = weights[layer] - lr * grads.weights[layer]
            biases[layer] = biases[layer] - lr * grads.biases[layer]
        if not all(np.all(np.isfinite(w)) for w in weights):
            raise TrainingError(f"non-finite weights at epoch {epoch + 1} (lr={lr} too large?)")
        current = MlnModel(model.arch, tuple(weights), tuple(biases))

    final_loss = loss(d, _activations(current, x)[-1])
    history.append(final_loss)
    if not np.isfinite(final_loss):
        raise TrainingError(f"non-finite loss after {epochs} epochs (lr={lr} too large?)")
    logger.debug(f"train_gd: {epochs} epochs, loss {history[0]:.6f} -> {final_loss:.6f}")
    return current, history


def hardened_predictions(model: MlnModel, x: np.ndarray) -> np.ndarray:
    """Output unit of maximal activation per row (ties to the lowest unit)."""
    return np.argmax(forward(model, x), axis=1)


def save_model(model: MlnModel, path: Union[str, Path]):
    """
    Write a model in the flat text format.

    First line ``layers <M> <H1> ... <c>``; then, layer by layer, one line per
    weight row followed by one bias line, values as round-trippable decimals.
    """
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, 'w', encoding='utf-8') as f:
        f.write("layers " + " ".join(str(s) for s in model.arch.layer_sizes) + "\n")
        for w, b in zip(model.weights, model.biases):
            np.savetxt(f, w, fmt='%.17g')
            np.savetxt(f, b[None, :], fmt='%.17g')


def load_model(path: Union[str, Path]) -> MlnModel:
    """Read a model written by ``save_model``."""
    src = Path(path)
    if not src.is_file():
        raise DataError(f"model file not found: {src}")
    lines = [ln for ln in src.read_text(encoding='utf-8').splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("layers "):
        raise DataError(f"{src}: missing 'layers' header")
    try:
        arch = MlnArchitecture(tuple(int(t) for t in lines[0].split()[1:]))
        rows = iter(lines[1:])
        weights, biases = [], []
        for fan_out, _ in arch.shapes:
            weights.append(np.array([[float(v) for v in next(rows).split()]
                                     for _ in range(fan_out)]))
            biases.append(np.array([float(v) for v in next(rows).split()]))
    except (StopIteration, ValueError) as e:
        raise DataError(f"{src}: truncated or malformed model file") from e
    return MlnModel(arch, tuple(weights), tuple(biases))
