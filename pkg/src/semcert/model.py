"""Built-in base classifier: flatten -> dense(h) -> ReLU -> dense(C) -> softmax.

Weights are double precision so gradient checks stay tight.  Training is
plain SGD with momentum on cross-entropy over transform-augmented
minibatches; everything is deterministic under a fixed seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .dataio import clamp01
from .density import SmoothingSpec
from .errors import FormatError, DomainError, TrainingError

_MAGIC = b"SMCW"
_VERSION = 1


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class MLPClassifier:
    """Two-layer perceptron over (H, W, C) images."""

    def __init__(self, input_shape, hidden: int, num_classes: int,
                 weights=None, seed: int = 0):
        self.input_shape = tuple(int(v) for v in input_shape)
        self.hidden = int(hidden)
        self.num_classes = int(num_classes)
        n_in = int(np.prod(self.input_shape))
        if weights is not None:
            self.W1, self.b1, self.W2, self.b2 = [np.asarray(w, dtype=float) for w in weights]
            if self.W1.shape != (n_in, hidden) or self.W2.shape != (hidden, num_classes):
                raise DomainError("weight shapes do not match the architecture")
        else:
            rng = np.random.default_rng(seed)
            self.W1 = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_in, hidden))
            self.b1 = np.zeros(hidden)
            self.W2 = rng.normal(0.0, np.sqrt(2.0 / hidden), size=(hidden, num_classes))
            self.b2 = np.zeros(num_classes)

    # -- inference -----------------------------------------------------------

    def _flatten(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape == self.input_shape:
            return x.reshape(1, -1)
        if x.shape[1:] == self.input_shape:
            return x.reshape(len(x), -1)
        raise DomainError(f"input shape {x.shape} does not match {self.input_shape}")

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Softmax probabilities, (C,) for a single image or (B, C) for a batch."""
        single = np.asarray(x).shape == self.input_shape
        X = self._flatten(x)
        h = np.maximum(X @ self.W1 + self.b1, 0.0)
        probs = _softmax(h @ self.W2 + self.b2)
        return probs[0] if single else probs

    @property
    def n_params(self) -> int:
        return self.W1.size + self.b1.size + self.W2.size + self.b2.size

    # -- training ------------------------------------------------------------

    def _loss_and_grads(self, X: np.ndarray, labels: np.ndarray):
        B = len(X)
        z1 = X @ self.W1 + self.b1
        a1 = np.maximum(z1, 0.0)
        probs = _softmax(a1 @ self.W2 + self.b2)
        eps = 1e-300
        loss = -np.log(probs[np.arange(B), labels] + eps).mean()
        dz2 = probs.copy()
        dz2[np.arange(B), labels] -= 1.0
        dz2 /= B
        gW2 = a1.T @ dz2
        gb2 = dz2.sum(axis=0)
        da1 = dz2 @ self.W2.T
        dz1 = da1 * (z1 > 0.0)
        gW1 = X.T @ dz1
        gb1 = dz1.sum(axis=0)
        acc = float((probs.argmax(axis=1) == labels).mean())
        return loss, (gW1, gb1, gW2, gb2), acc

    # -- persistence ---------------------------------------------------------

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", _VERSION))
            h, w, c = self.input_shape
            fh.write(struct.pack("<5I", h, w, c, self.hidden, self.num_classes))
            for arr in (self.W1, self.b1, self.W2, self.b2):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str) -> "MLPClassifier":
        with open(path, "rb") as fh:
            blob = fh.read()
        if len(blob) < 28 or blob[:4] != _MAGIC:
            raise FormatError(f"{path}: not a weight file")
        (version,) = struct.unpack("<I", blob[4:8])
        if version != _VERSION:
            raise FormatError(f"{path}: unsupported weight format version {version}")
        h, w, c, hidden, classes = struct.unpack("<5I", blob[8:28])
        n_in = h * w * c
        sizes = [n_in * hidden, hidden, hidden * classes, classes]
        expected = 28 + 8 * sum(sizes)
        if len(blob) != expected:
            raise FormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
        flat = np.frombuffer(blob[28:], dtype="<f8")
        shapes = [(n_in, hidden), (hidden,), (hidden, classes), (classes,)]
        weights = []
        off = 0
        for size, shape in zip(sizes, shapes):
            weights.append(flat[off:off + size].reshape(shape).copy())
            off += size
        return cls((h, w, c), hidden, classes, weights=weights)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2
    learning_rate: float = 1e-3
    momentum: float = 0.95
    batch_size: int = 32
    hidden: int = 128
    spec: SmoothingSpec | None = None   # augmentation; None trains on clean data
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.learning_rate <= 0 or not 0 <= self.momentum < 1:
            raise DomainError("hyperparameters must be positive (momentum in [0, 1))")
        if self.batch_size < 1 or self.hidden < 1:
            raise DomainError("batch size and hidden width must be positive")


def train_augmented(dataset, config: TrainConfig) -> MLPClassifier:
    """SGD with momentum on cross-entropy over transform-augmented minibatches.

    Each image in a batch is transformed at psi(alpha), alpha ~ N(0, I_d),
    plus sigma-scaled pixel noise, then clamped to [0, 1] (matching the
    prediction path).  Logs ``epoch,loss,acc`` per epoch to stdout.
    """
    rng = np.random.default_rng(config.seed)
    model = MLPClassifier(dataset.image_shape, config.hidden, dataset.num_classes,
                          seed=config.seed)
    spec = config.spec
    velocity = [np.zeros_like(w) for w in (model.W1, model.b1, model.W2, model.b2)]
    n = len(dataset)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        accs = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            imgs = dataset.images[idx]
            if spec is not None:
                A = rng.standard_normal((len(idx), spec.d))
                imgs = spec.transform.apply_batch(imgs, spec.psi(A))
                if spec.sigma > 0:
                    imgs = imgs + spec.sigma * rng.standard_normal(imgs.shape)
            X = clamp01(imgs).reshape(len(idx), -1)
            loss, grads, acc = model._loss_and_grads(X, dataset.labels[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}")
            params = (model.W1, model.b1, model.W2, model.b2)
            for v, p, g in zip(velocity, params, grads):
                v *= config.momentum
                v -= config.learning_rate * g
                p += v
            losses.append(loss)
            accs.append(acc)
        print(f"{epoch},{np.mean(losses):.6f},{np.mean(accs):.4f}")
    return model
