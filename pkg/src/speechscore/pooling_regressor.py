"""Statistic pooling and the shallow regression head.

The head is a 3-layer stack over the pooled 2D-dim vector:
    a1 = act(W1 x + b1)      W1: H x 2D
    a2 = act(W2 a1 + b2)     W2: H x H
    y  = w3 . a2 + b3        w3: 1 x H
trained sample-by-sample (batch size 1) with an adaptive-moment optimizer.
All math is plain numpy in float64; parameters serialize as float32.
"""

import copy
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataValidationError, EmbeddingFormatError

VAR_EPS = 1e-10

# serialization tags for the activation
ACTIVATIONS = {"leaky_relu": 0, "linear": 1}
ACTIVATION_NAMES = {v: k for k, v in ACTIVATIONS.items()}
LEAKY_SLOPE = 0.01

MODEL_MAGIC = b"SGH1"
MODEL_VERSION = 1


def statistic_pooling(matrix):
    """Concatenate per-dimension mean and population std (sqrt(var + eps)) over frames."""
    data = np.asarray(matrix.data, dtype=np.float64)
    mean = data.mean(axis=0)
    var = data.var(axis=0)  # population variance
    std = np.sqrt(var + VAR_EPS)
    return np.concatenate([mean, std])


@dataclass
class RegressionHead:
    w1: np.ndarray  # (H, 2D)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (H, H)
    b2: np.ndarray  # (H,)
    w3: np.ndarray  # (1, H)
    b3: np.ndarray  # (1,)
    activation: str = "leaky_relu"

    @property
    def input_dim(self):
        return self.w1.shape[1]

    @property
    def hidden_dim(self):
        return self.w1.shape[0]

    def parameters(self):
        """Parameters in declaration order (also the serialization order)."""
        return [
            ("w1", self.w1),
            ("b1", self.b1),
            ("w2", self.w2),
            ("b2", self.b2),
            ("w3", self.w3),
            ("b3", self.b3),
        ]

    def copy(self):
        return copy.deepcopy(self)


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 1
    learning_rate: float = 1e-4
    seed: int = 0
    optimizer: str = "adam"
    model_selection: str = "best-validation-loss"  # or "last-epoch"
    clamp_predictions: bool = False
    hidden_dim: int = 1024
    activation: str = "leaky_relu"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.model_selection not in ("best-validation-loss", "last-epoch"):
            raise ValueError(f"unknown model_selection {self.model_selection!r}")


@dataclass
class LossCurve:
    train_mse: list = field(default_factory=list)
    valid_mse: list = field(default_factory=list)

    def __len__(self):
        return len(self.train_mse)


def init_head(input_dim, hidden, seed, activation="leaky_relu"):
    """Uniform +-sqrt(6/fan_in) weights, zero biases; deterministic per seed."""
    if input_dim < 1 or hidden < 1:
        raise ValueError("dims must be >= 1")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    rng = np.random.default_rng(seed)

    def uniform(fan_in, shape):
        bound = np.sqrt(6.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return RegressionHead(
        w1=uniform(input_dim, (hidden, input_dim)),
        b1=np.zeros(hidden),
        w2=uniform(hidden, (hidden, hidden)),
        b2=np.zeros(hidden),
        w3=uniform(hidden, (1, hidden)),
        b3=np.zeros(1),
        activation=activation,
    )


def _act(z, activation):
    if activation == "leaky_relu":
        return np.where(z >= 0, z, LEAKY_SLOPE * z)
    return z


def _act_grad(z, activation):
    if activation == "leaky_relu":
        return np.where(z >= 0, 1.0, LEAKY_SLOPE)
    return np.ones_like(z)


def forward(head, x):
    """Score an input vector; the cache feeds backward()."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (head.input_dim,):
        raise ValueError(f"input shape {x.shape} does not match head input dim {head.input_dim}")
    z1 = head.w1 @ x + head.b1
    a1 = _act(z1, head.activation)
    z2 = head.w2 @ a1 + head.b2
    a2 = _act(z2, head.activation)
    score = float((head.w3 @ a2)[0] + head.b3[0])
    cache = {"x": x, "z1": z1, "a1": a1, "z2": z2, "a2": a2, "score": score}
    return score, cache


def mse_loss(pred, target):
    return (pred - target) ** 2


def backward(head, cache, target):
    """Analytic gradients of (score - target)^2 for every parameter.

    Returns a dict keyed like head.parameters().
    """
    dscore = 2.0 * (cache["score"] - target)
    gw3 = dscore * cache["a2"][np.newaxis, :]
    gb3 = np.array([dscore])
    da2 = dscore * head.w3[0]
    dz2 = da2 * _act_grad(cache["z2"], head.activation)
    gw2 = np.outer(dz2, cache["a1"])
    gb2 = dz2
    da1 = head.w2.T @ dz2
    dz1 = da1 * _act_grad(cache["z1"], head.activation)
    gw1 = np.outer(dz1, cache["x"])
    gb1 = dz1
    return {"w1": gw1, "b1": gb1, "w2": gw2, "b2": gb2, "w3": gw3, "b3": gb3}


@dataclass
class OptimizerState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_head(cls, head):
        return cls(
            m={name: np.zeros_like(p) for name, p in head.parameters()},
            v={name: np.zeros_like(p) for name, p in head.parameters()},
        )


def optimizer_step(head, grads, state, lr):
    """Adaptive-moment update, in place on the head; increments the step counter."""
    state.step += 1
    t = state.step
    for name, param in head.parameters():
        g = grads[name]
        if g.shape != param.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        state.m[name] = state.beta1 * state.m[name] + (1 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1 - state.beta2) * g * g
        m_hat = state.m[name] / (1 - state.beta1 ** t)
        v_hat = state.v[name] / (1 - state.beta2 ** t)
        param -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return head, state


def train(train_set, valid_set, cfg, head=None):
    """Seeded batch-size-1 training loop.

    train_set / valid_set: lists of (pooled_vector, target). Returns
    (head, LossCurve); the head is the best-validation-loss epoch copy
    unless cfg.model_selection is "last-epoch" or the valid set is empty.
    """
    if not train_set:
        raise ValueError("empty train set")
    for _, target in train_set:
        if not (0.0 <= target <= 10.0):
            raise DataValidationError(f"score out of range: target={target}")
    input_dim = len(train_set[0][0])
    if head is None:
        head = init_head(input_dim, cfg.hidden_dim, cfg.seed, cfg.activation)
    rng = np.random.default_rng(cfg.seed + 1)
    state = OptimizerState.for_head(head)
    curve = LossCurve()
    best_head = head.copy()
    best_valid = np.inf

    def valid_mse(h):
        if not valid_set:
            return float("nan")
        losses = [mse_loss(forward(h, x)[0], t) for x, t in valid_set]
        return float(np.mean(losses))

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_set))
        epoch_losses = []
        batch = []
        for idx in order:
            x, target = train_set[idx]
            score, cache = forward(head, x)
            loss = mse_loss(score, target)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, sample {idx}: score={score}"
                )
            epoch_losses.append(loss)
            batch.append(backward(head, cache, target))
            if len(batch) == cfg.batch_size:
                grads = _mean_grads(batch)
                optimizer_step(head, grads, state, cfg.learning_rate)
                batch = []
        if batch:  # trailing partial batch
            optimizer_step(head, _mean_grads(batch), state, cfg.learning_rate)
        v = valid_mse(head)
        curve.train_mse.append(float(np.mean(epoch_losses)))
        curve.valid_mse.append(v)
        if np.isfinite(v) and v < best_valid:
            best_valid = v
            best_head = head.copy()

    if cfg.model_selection == "best-validation-loss" and np.isfinite(best_valid):
        return best_head, curve
    return head, curve


def _mean_grads(grad_list):
    if len(grad_list) == 1:
        return grad_list[0]
    return {
        name: np.mean([g[name] for g in grad_list], axis=0) for name in grad_list[0]
    }


def predict(head, matrix, clamp=False):
    """Pool then score one utterance; optionally clip to [0, 10]."""
    if 2 * matrix.dim != head.input_dim:
        raise ValueError(
            f"dim mismatch: embeddings D={matrix.dim}, head expects 2D={head.input_dim}"
        )
    score, _ = forward(head, statistic_pooling(matrix))
    if clamp:
        score = float(np.clip(score, 0.0, 10.0))
    return score


def grad_check(head, x, target, step=1e-4):
    """Max relative error of backward() vs central finite differences, all parameters."""
    _, cache = forward(head, x)
    analytic = backward(head, cache, target)
    worst = 0.0
    for name, param in head.parameters():
        flat = param.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = mse_loss(forward(head, x)[0], target)
            flat[i] = orig - step
            lm = mse_loss(forward(head, x)[0], target)
            flat[i] = orig
            numeric = (lp - lm) / (2 * step)
            g = analytic[name].reshape(-1)[i]
            rel = abs(g - numeric) / max(1.0, abs(g), abs(numeric))
            worst = max(worst, rel)
    return worst


def save_head(head, path):
    """Serialize to the SGH1 binary format (float32 tensors, declaration order)."""
    d2 = head.input_dim
    if d2 % 2 != 0:
        raise ValueError("head input dim must be even (2D)")
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<III", MODEL_VERSION, d2 // 2, head.hidden_dim))
        f.write(struct.pack("B", ACTIVATIONS[head.activation]))
        for _, param in head.parameters():
            f.write(np.ascontiguousarray(param, dtype="<f4").tobytes())


def load_head(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MODEL_MAGIC:
            raise EmbeddingFormatError(f"bad magic {magic!r} in model file {path}")
        version, d, h = struct.unpack("<III", f.read(12))
        if version != MODEL_VERSION:
            raise EmbeddingFormatError(f"unsupported model version {version}")
        (act_tag,) = struct.unpack("B", f.read(1))
        if act_tag not in ACTIVATION_NAMES:
            raise EmbeddingFormatError(f"unknown activation tag {act_tag}")
        shapes = [(h, 2 * d), (h,), (h, h), (h,), (1, h), (1,)]
        tensors = []
        for shape in shapes:
            n = int(np.prod(shape)) * 4
            raw = f.read(n)
            if len(raw) != n:
                raise EmbeddingFormatError(f"truncated model file {path}")
            tensors.append(np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape))
    return RegressionHead(*tensors, activation=ACTIVATION_NAMES[act_tag])
