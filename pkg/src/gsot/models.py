"""Differentiable predictors with analytic weight and input gradients.

Two architectures are supported: ``linear-softmax`` (logits = x W + b) and
``mlp-elu`` (one hidden ELU layer). The loss is mean softmax cross-entropy.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from gsot.errors import ParseError
from gsot.fileio import write_text_atomic
from gsot.linalg import as_matrix
from gsot.rng import make_rng

ARCHS = ("linear-softmax", "mlp-elu")

# flat-vector layout order for each architecture
_LAYOUT = {
    "linear-softmax": ("W", "b"),
    "mlp-elu": ("W1", "b1", "W2", "b2"),
}


class LabeledBatch(NamedTuple):
    x: np.ndarray
    y: np.ndarray


class LossGrads(NamedTuple):
    loss: float
    grad_w: dict
    grad_x: np.ndarray


def make_batch(x, y):
    x = as_matrix(x, "x")
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if y.shape[0] != x.shape[0]:
        raise ValueError(f"x has {x.shape[0]} rows but y has {y.shape[0]} labels")
    return LabeledBatch(x, y)


@dataclass
class ModelParams:
    arch: str
    d: int
    K: int
    H: int = 0
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown architecture {self.arch!r}")
        if self.arch == "linear-softmax":
            self.H = 0
        for name, shape in self.shapes().items():
            w = self.weights.get(name)
            if w is None:
                self.weights[name] = np.zeros(shape)
                continue
            w = np.asarray(w, dtype=np.float64)
            if w.shape != shape:
                raise ValueError(f"weight {name} has shape {w.shape}, expected {shape}")
            if not np.all(np.isfinite(w)):
                raise ValueError(f"weight {name} is not finite")
            self.weights[name] = w

    def shapes(self):
        if self.arch == "linear-softmax":
            return {"W": (self.d, self.K), "b": (self.K,)}
        return {
            "W1": (self.d, self.H),
            "b1": (self.H,),
            "W2": (self.H, self.K),
            "b2": (self.K,),
        }

    def flat(self):
        return np.concatenate([self.weights[n].ravel() for n in _LAYOUT[self.arch]])

    def with_flat(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        out, pos = {}, 0
        for name in _LAYOUT[self.arch]:
            shape = self.shapes()[name]
            size = int(np.prod(shape))
            out[name] = vec[pos:pos + size].reshape(shape).copy()
            pos += size
        if pos != vec.size:
            raise ValueError(f"flat vector has {vec.size} entries, expected {pos}")
        return ModelParams(self.arch, self.d, self.K, self.H, out)

    def copy(self):
        return ModelParams(self.arch, self.d, self.K, self.H,
                           {k: v.copy() for k, v in self.weights.items()})

    def step(self, grad_w, lr):
        """Return new params ``w - lr * grad_w``."""
        return ModelParams(self.arch, self.d, self.K, self.H,
                           {k: self.weights[k] - lr * grad_w[k] for k in self.weights})

    # inner-solver / attack protocol
    def sample_losses_and_input_grads(self, x, y):
        """Per-sample losses and per-sample input gradients (not divided by m)."""
        return _per_sample(self, x, y)


def init_params(arch, d, K, H=0, seed=0):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization."""
    rng = make_rng(seed)
    p = ModelParams(arch, d, K, H)
    for name, shape in p.shapes().items():
        fan_in = shape[0] if len(shape) == 2 else (d if name in ("b", "b1") else H)
        bound = 1.0 / np.sqrt(max(fan_in, 1))
        p.weights[name] = rng.uniform(-bound, bound, size=shape)
    return p


def elu(z):
    return np.where(z >= 0, z, np.expm1(np.minimum(z, 0.0)))


def elu_grad(z):
    return np.where(z >= 0, 1.0, np.exp(np.minimum(z, 0.0)))


def _check_x(params, x):
    x = as_matrix(x, "x")
    if x.shape[1] != params.d:
        raise ValueError(f"x has {x.shape[1]} columns, model expects {params.d}")
    return x


def forward(params, x):
    x = _check_x(params, x)
    w = params.weights
    if params.arch == "linear-softmax":
        return x @ w["W"] + w["b"]
    return elu(x @ w["W1"] + w["b1"]) @ w["W2"] + w["b2"]


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_labels(params, y, m):
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if y.shape[0] != m:
        raise ValueError(f"{m} rows but {y.shape[0]} labels")
    if np.any(y < 0) or np.any(y >= params.K):
        raise ValueError(f"labels must lie in [0, {params.K})")
    return y


def _backward(params, x, y):
    """Per-sample losses and gradients of the *summed* loss."""
    w = params.weights
    m = x.shape[0]
    if params.arch == "linear-softmax":
        logits = x @ w["W"] + w["b"]
    else:
        z1 = x @ w["W1"] + w["b1"]
        h = elu(z1)
        logits = h @ w["W2"] + w["b2"]
    logp = _log_softmax(logits)
    losses = -logp[np.arange(m), y]
    dlogits = np.exp(logp)
    dlogits[np.arange(m), y] -= 1.0
    if params.arch == "linear-softmax":
        grads = {"W": x.T @ dlogits, "b": dlogits.sum(axis=0)}
        gx = dlogits @ w["W"].T
    else:
        dz1 = (dlogits @ w["W2"].T) * elu_grad(z1)
        grads = {
            "W1": x.T @ dz1,
            "b1": dz1.sum(axis=0),
            "W2": h.T @ dlogits,
            "b2": dlogits.sum(axis=0),
        }
        gx = dz1 @ w["W1"].T
    return losses, grads, gx


def _per_sample(params, x, y):
    x = _check_x(params, x)
    y = _check_labels(params, y, x.shape[0])
    losses, _, gx = _backward(params, x, y)
    return losses, gx


def loss_and_grads(params, batch):
    """Mean cross-entropy and its exact gradients w.r.t. weights and inputs."""
    x = _check_x(params, batch.x)
    y = _check_labels(params, batch.y, x.shape[0])
    m = x.shape[0]
    losses, grads, gx = _backward(params, x, y)
    return LossGrads(float(losses.mean()), {k: v / m for k, v in grads.items()}, gx / m)


def mean_loss(params, batch):
    x = _check_x(params, batch.x)
    y = _check_labels(params, batch.y, x.shape[0])
    logp = _log_softmax(forward(params, x))
    return float(-logp[np.arange(x.shape[0]), y].mean())


def predict(params, x):
    # argmax returns the first maximal index, i.e. ties go to the smallest class
    return np.argmax(forward(params, x), axis=1)


def accuracy(params, batch):
    pred = predict(params, batch.x)
    return float(np.mean(pred == np.asarray(batch.y)))


def grad_norm(grad_w):
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grad_w.values())))


class LinearScoreLoss:
    """Test model with loss ``l(x, y) = w . x`` regardless of the label.

    Its inner maximization against a quadratic cost has a closed form, which
    makes it a useful reference for the ADMM solver.
    """

    def __init__(self, w):
        self.w = np.asarray(w, dtype=np.float64).reshape(-1)
        self.d = self.w.size

    def sample_losses_and_input_grads(self, x, y):
        x = as_matrix(x, "x")
        return x @ self.w, np.tile(self.w, (x.shape[0], 1))


# --- persistence -----------------------------------------------------------

def save_model(params, path):
    """Write the flat text format.

    Line 1 is ``arch d H K``; line 2 holds the weights as whitespace-separated
    numbers in the order W, b (linear) or W1, b1, W2, b2 (mlp), each matrix in
    row-major order.
    """
    header = f"{params.arch} {params.d} {params.H} {params.K}\n"
    body = " ".join(repr(float(v)) for v in params.flat()) + "\n"
    write_text_atomic(path, header + body)


def load_model(path):
    with open(path) as fh:
        lines = fh.read().split("\n")
    head = lines[0].split()
    if len(head) != 4:
        raise ParseError("model header must be 'arch d H K'", line=1)
    arch = head[0]
    try:
        d, H, K = int(head[1]), int(head[2]), int(head[3])
    except ValueError as exc:
        raise ParseError(f"bad model header: {exc}", line=1) from None
    try:
        vals = np.array([float(t) for t in " ".join(lines[1:]).split()])
    except ValueError as exc:
        raise ParseError(f"bad weight value: {exc}", line=2) from None
    try:
        return ModelParams(arch, d, K, H).with_flat(vals)
    except ValueError as exc:
        raise ParseError(str(exc), line=2) from None
