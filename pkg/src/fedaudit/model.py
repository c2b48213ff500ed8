"""Flat-vector classifier core: MLP with softmax cross-entropy, SGD and Adam.

Every routine works on a single flat parameter vector so that uploads,
aggregation, noise, pruning, and audits all handle plain numpy arrays.
Hidden layers use tanh (smooth, so finite-difference gradient checks hold
coordinate-wise).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class ModelConfig:
    """Classifier shape: input width, hidden widths (may be empty), class count."""

    input_dim: int
    hidden_dims: tuple[int, ...] = ()
    num_classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError("hidden layer widths must be >= 1")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.num_classes)


def param_count(config: ModelConfig) -> int:
    """Total number of parameters (weights plus biases across layers)."""
    dims = config.layer_dims
    return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))


def init_params(config: ModelConfig, seed: int) -> np.ndarray:
    """Uniform weights in +-1/sqrt(fan_in), zero biases. Deterministic per seed."""
    rng = np.random.default_rng(seed)
    dims = config.layer_dims
    chunks = []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        bound = 1.0 / np.sqrt(fan_in)
        chunks.append(rng.uniform(-bound, bound, fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return np.concatenate(chunks)


def unflatten(params: np.ndarray, config: ModelConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat parameter vector into per-layer (W, b) views."""
    if params.shape != (param_count(config),):
        raise ValueError(
            f"parameter vector has length {params.shape}, model needs {param_count(config)}")
    dims = config.layer_dims
    layers = []
    offset = 0
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        w = params[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = params[offset:offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def _check_batch(config: ModelConfig, batch: Dataset):
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    if batch.features.shape[1] != config.input_dim:
        raise ValueError(
            f"batch feature dim {batch.features.shape[1]} != model input_dim {config.input_dim}")


def _forward_activations(params: np.ndarray, config: ModelConfig,
                         features: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    layers = unflatten(params, config)
    hidden = [features]
    h = features
    for w, b in layers[:-1]:
        h = np.tanh(h @ w + b)
        hidden.append(h)
    w_out, b_out = layers[-1]
    logits = h @ w_out + b_out
    return hidden, logits


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward_loss(params: np.ndarray, config: ModelConfig,
                 batch: Dataset) -> tuple[float, float]:
    """Mean softmax cross-entropy and argmax accuracy on the batch."""
    _check_batch(config, batch)
    _, logits = _forward_activations(params, config, batch.features)
    logp = _log_softmax(logits)
    n = len(batch)
    loss = -float(logp[np.arange(n), batch.labels].mean())
    acc = float((logits.argmax(axis=1) == batch.labels).mean())
    return loss, acc


def accuracy(params: np.ndarray, config: ModelConfig, dataset: Dataset) -> float:
    """Fraction of argmax-correct predictions on the dataset."""
    _check_batch(config, dataset)
    _, logits = _forward_activations(params, config, dataset.features)
    return float((logits.argmax(axis=1) == dataset.labels).mean())


def _backward_targets(params: np.ndarray, config: ModelConfig, features: np.ndarray,
                      targets: np.ndarray) -> np.ndarray:
    """Gradient of mean cross-entropy against a target distribution matrix."""
    layers = unflatten(params, config)
    hidden, logits = _forward_activations(params, config, features)
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    probs = expd / expd.sum(axis=1, keepdims=True)
    n = features.shape[0]
    delta = (probs - targets) / n

    grads: list[np.ndarray] = [np.empty(0)] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        gw = hidden[i].T @ delta
        gb = delta.sum(axis=0)
        grads[i] = np.concatenate([gw.ravel(), gb])
        if i > 0:
            delta = (delta @ w.T) * (1.0 - hidden[i] ** 2)
    return np.concatenate(grads)


def backward(params: np.ndarray, config: ModelConfig, batch: Dataset) -> np.ndarray:
    """Gradient of the mean cross-entropy with respect to every parameter."""
    _check_batch(config, batch)
    onehot = np.zeros((len(batch), config.num_classes))
    onehot[np.arange(len(batch)), batch.labels] = 1.0
    return _backward_targets(params, config, batch.features, onehot)


def backward_soft(params: np.ndarray, config: ModelConfig, features: np.ndarray,
                  target_probs: np.ndarray) -> np.ndarray:
    """Cross-entropy gradient against soft target distributions (rows sum to 1)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != config.input_dim:
        raise ValueError("features must be (n, input_dim)")
    if target_probs.shape != (features.shape[0], config.num_classes):
        raise ValueError("target_probs must be (n, num_classes)")
    return _backward_targets(params, config, features, target_probs)


def sgd_step(params: np.ndarray, gradient: np.ndarray, eta: float) -> np.ndarray:
    """One gradient-descent step: params - eta * gradient."""
    if params.shape != gradient.shape:
        raise ValueError("params/gradient dimension mismatch")
    return params - eta * gradient


@dataclass(frozen=True)
class AdamState:
    """Adam moments plus a learning rate that decays multiplicatively per step."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int
    learning_rate: float
    decay: float

    @classmethod
    def fresh(cls, dim: int, learning_rate: float, decay: float = 1.0) -> "AdamState":
        if learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 < decay <= 1:
            raise ValueError("decay must be in (0, 1]")
        return cls(np.zeros(dim), np.zeros(dim), 0, learning_rate, decay)


def adam_step(state: AdamState, params: np.ndarray,
              gradient: np.ndarray) -> tuple[np.ndarray, AdamState]:
    """Standard bias-corrected Adam step; the learning rate decays afterwards."""
    if params.shape != gradient.shape or params.shape != state.first_moment.shape:
        raise ValueError("params/gradient/state dimension mismatch")
    t = state.step_count + 1
    m = ADAM_BETA1 * state.first_moment + (1 - ADAM_BETA1) * gradient
    v = ADAM_BETA2 * state.second_moment + (1 - ADAM_BETA2) * gradient ** 2
    m_hat = m / (1 - ADAM_BETA1 ** t)
    v_hat = v / (1 - ADAM_BETA2 ** t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    new_state = AdamState(m, v, t, state.learning_rate * state.decay, state.decay)
    return new_params, new_state


def train(params: np.ndarray, config: ModelConfig, batch: Dataset, eta: float,
          steps: int) -> np.ndarray:
    """Run `steps` full-batch gradient-descent steps and return the new parameters."""
    for _ in range(steps):
        params = sgd_step(params, backward(params, config, batch), eta)
    return params


def epoch_permutations(n: int, epochs: int, rng: np.random.Generator) -> np.ndarray:
    """Simple-shuffle schedule: one sample permutation per epoch, (epochs, n)."""
    return np.stack([rng.permutation(n) for _ in range(epochs)]) if epochs else \
        np.empty((0, n), dtype=np.int64)


def train_minibatch(params: np.ndarray, config: ModelConfig, batch: Dataset,
                    eta: float, perms: np.ndarray, batch_size: int) -> np.ndarray:
    """Minibatch SGD over pre-drawn epoch permutations; the remainder smaller
    than batch_size at the end of an epoch is dropped."""
    n = len(batch)
    for perm in perms:
        for start in range(0, n - batch_size + 1, batch_size):
            idx = perm[start:start + batch_size]
            mini = Dataset(batch.features[idx], batch.labels[idx], batch.num_classes)
            params = sgd_step(params, backward(params, config, mini), eta)
    return params


def _batched_step(layers, features, onehot, eta):
    """One full-batch GD step applied to every client slice at once."""
    n = features.shape[1]
    hidden = [features]
    h = features
    for w, b in layers[:-1]:
        h = np.tanh(np.matmul(h, w) + b[:, None, :])
        hidden.append(h)
    w_out, b_out = layers[-1]
    logits = np.matmul(h, w_out) + b_out[:, None, :]
    shifted = logits - logits.max(axis=2, keepdims=True)
    expd = np.exp(shifted)
    probs = expd / expd.sum(axis=2, keepdims=True)
    delta = (probs - onehot) / n
    new_layers = []
    for i in range(len(layers) - 1, -1, -1):
        w, b = layers[i]
        gw = np.matmul(hidden[i].transpose(0, 2, 1), delta)
        gb = delta.sum(axis=1)
        new_layers.append((w - eta * gw, b - eta * gb))
        if i > 0:
            delta = np.matmul(delta, w.transpose(0, 2, 1)) * (1.0 - hidden[i] ** 2)
    return new_layers[::-1]


def _onehot_stack(labels: np.ndarray, k: int) -> np.ndarray:
    C, n = labels.shape
    onehot = np.zeros((C, n, k))
    idx_c, idx_n = np.meshgrid(np.arange(C), np.arange(n), indexing="ij")
    onehot[idx_c, idx_n, labels] = 1.0
    return onehot


def train_clients(params: np.ndarray, config: ModelConfig, features: np.ndarray,
                  labels: np.ndarray, eta: float, epochs: int,
                  perms: np.ndarray | None = None,
                  batch_size: int | None = None) -> np.ndarray:
    """Train C clients independently from the same starting parameters.

    features is (C, n, input_dim), labels (C, n); returns the (C, d) stack of
    trained parameter vectors. With perms/batch_size set, runs minibatch SGD
    over the given per-client epoch permutations (perms is (C, epochs, n)),
    otherwise one full-batch step per epoch. Equivalent to per-client train /
    train_minibatch calls (np.matmul over a stacked leading axis performs the
    same per-slice products), just without the per-client Python overhead.
    """
    C, n, _ = features.shape
    if labels.shape != (C, n):
        raise ValueError("labels must be (C, n)")
    layers = [(np.repeat(w[None, :, :], C, axis=0), np.repeat(b[None, :], C, axis=0))
              for w, b in unflatten(params, config)]
    k = config.num_classes

    if batch_size is None:
        onehot = _onehot_stack(labels, k)
        for _ in range(epochs):
            layers = _batched_step(layers, features, onehot, eta)
    else:
        if perms is None or perms.shape != (C, epochs, n):
            raise ValueError("minibatch training needs perms of shape (C, epochs, n)")
        rows = np.arange(C)[:, None]
        for e in range(epochs):
            for start in range(0, n - batch_size + 1, batch_size):
                idx = perms[:, e, start:start + batch_size]
                mb_feat = features[rows, idx]
                mb_onehot = _onehot_stack(labels[rows, idx], k)
                layers = _batched_step(layers, mb_feat, mb_onehot, eta)

    flat = np.empty((C, param_count(config)))
    offset = 0
    for w, b in layers:
        size = w.shape[1] * w.shape[2]
        flat[:, offset:offset + size] = w.reshape(C, size)
        offset += size
        flat[:, offset:offset + w.shape[2]] = b
        offset += w.shape[2]
    return flat
