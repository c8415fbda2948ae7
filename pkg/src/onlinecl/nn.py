"""Minimal dense network with explicit reverse-mode gradients and SGD.

Everything is float64 numpy; hidden layers use ReLU, the classifier head is
linear. The activations of the last hidden layer are exposed as the feature
vector used by the nearest-class-mean classifier and the exemplar machinery.
"""

from dataclasses import dataclass, field

import numpy as np

from .validation import check_matrix

INIT_SCALE = 0.05


@dataclass
class SGDConfig:
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


class MLP:
    """Feed-forward net: input -> hidden... -> feature layer -> linear head."""

    def __init__(self, layer_dims, seed=0):
        dims = [int(d) for d in layer_dims]
        if len(dims) < 2:
            raise ValueError("need at least an input and an output layer")
        if any(d < 1 for d in dims):
            raise ValueError("all layer dims must be >= 1")
        self.layer_dims = dims
        rng = np.random.default_rng(seed)
        self.weights = [
            rng.uniform(-INIT_SCALE, INIT_SCALE, size=(a, b))
            for a, b in zip(dims[:-1], dims[1:])
        ]
        self.biases = [rng.uniform(-INIT_SCALE, INIT_SCALE, size=b) for b in dims[1:]]

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def feature_dim(self):
        return self.layer_dims[-2]

    @property
    def n_out(self):
        return self.layer_dims[-1]

    @property
    def n_layers(self):
        return len(self.weights)

    def copy(self):
        dup = MLP.__new__(MLP)
        dup.layer_dims = list(self.layer_dims)
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup

    def parameters(self):
        """Flat list of parameter arrays (weights then bias per layer)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


@dataclass
class GradientSet:
    weights: list
    biases: list

    def parameters(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


@dataclass
class SGDState:
    velocity: list = field(default_factory=list)

    @classmethod
    def zeros_like(cls, model):
        return cls(velocity=[np.zeros_like(p) for p in model.parameters()])

    def matches(self, model):
        params = model.parameters()
        return len(self.velocity) == len(params) and all(
            v.shape == p.shape for v, p in zip(self.velocity, params)
        )


def forward(model, batch):
    """Run the net on a batch.

    Returns (logits, features, cache); features are the last hidden layer's
    ReLU activations, cache holds every layer's activations for backward().
    """
    X = check_matrix(batch, name="batch", n_cols=model.input_dim)
    acts = [X]
    h = X
    last = model.n_layers - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        h = z if i == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts[-1], acts[-2], acts


def backward(model, cache, dlogits):
    """Backpropagate a logit gradient through the cached forward pass."""
    if cache is None or len(cache) != model.n_layers + 1:
        raise ValueError("cache missing or inconsistent with the model")
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if dlogits.shape != cache[-1].shape:
        raise ValueError(
            f"dlogits shape {dlogits.shape} != logits shape {cache[-1].shape}"
        )
    gw = [None] * model.n_layers
    gb = [None] * model.n_layers
    delta = dlogits
    for i in range(model.n_layers - 1, -1, -1):
        gw[i] = cache[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * (cache[i] > 0)
    return GradientSet(weights=gw, biases=gb)


def sgd_step(model, grads, state, cfg):
    """Momentum SGD with weight decay as an additive gradient term.

    v <- mu*v + g + lambda*w ; w <- w - lr*v, applied in place.
    """
    params = model.parameters()
    gparams = grads.parameters()
    if not state.matches(model):
        raise ValueError("SGD state shapes do not match the model")
    for p, g, v in zip(params, gparams, state.velocity):
        if g.shape != p.shape:
            raise ValueError("gradient shape mismatch")
        v *= cfg.momentum
        v += g + cfg.weight_decay * p
        p -= cfg.learning_rate * v
    return model, state


def expand_head(model, m_new, seed=0):
    """Return a copy of the model with m_new extra output units.

    Existing head columns are copied bit-exact; the new units get fresh
    seeded uniform(-0.05, 0.05) weights and biases.
    """
    if m_new < 1:
        raise ValueError("m_new must be >= 1")
    rng = np.random.default_rng(seed)
    dup = model.copy()
    old_w = dup.weights[-1]
    old_b = dup.biases[-1]
    new_w = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(model.feature_dim, m_new))
    new_b = rng.uniform(-INIT_SCALE, INIT_SCALE, size=m_new)
    dup.weights[-1] = np.concatenate([old_w, new_w], axis=1)
    dup.biases[-1] = np.concatenate([old_b, new_b])
    dup.layer_dims = list(model.layer_dims[:-1]) + [model.n_out + m_new]
    return dup


def grad_check(model, loss_evaluator, batch, epsilon=1e-5):
    """Compare analytic gradients with central finite differences.

    loss_evaluator maps logits -> (value, dlogits). Returns the max over all
    parameters of |analytic - numeric| / max(1, |numeric|).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    X = check_matrix(batch, name="batch", n_cols=model.input_dim)

    def loss_value():
        logits, _, _ = forward(model, X)
        value, _ = loss_evaluator(logits)
        if not np.isfinite(value):
            raise ValueError("loss is not finite")
        return value

    logits, _, cache = forward(model, X)
    value, dlogits = loss_evaluator(logits)
    if not np.isfinite(value):
        raise ValueError("loss is not finite")
    analytic = backward(model, cache, dlogits)

    worst = 0.0
    for p, g in zip(model.parameters(), analytic.parameters()):
        flat = p.ravel()
        gflat = g.ravel()
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + epsilon
            up = loss_value()
            flat[k] = orig - epsilon
            down = loss_value()
            flat[k] = orig
            numeric = (up - down) / (2 * epsilon)
            err = abs(gflat[k] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst


def save_model(path, model):
    """Dump layer dims and parameters; round-trip is bit-exact (float64)."""
    arrays = {"layer_dims": np.asarray(model.layer_dims, dtype=np.int64)}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    np.savez(path, **arrays)


def load_model(path):
    with np.load(path) as data:
        dims = [int(d) for d in data["layer_dims"]]
        model = MLP.__new__(MLP)
        model.layer_dims = dims
        model.weights = [data[f"w{i}"].copy() for i in range(len(dims) - 1)]
        model.biases = [data[f"b{i}"].copy() for i in range(len(dims) - 1)]
    return model
