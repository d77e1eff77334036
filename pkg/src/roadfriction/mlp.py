"""Multilayer perceptron with delta-rule backpropagation.

Weights for layer l are stored as an ``(m_in + 1, m_out)`` matrix whose
row 0 holds the biases, so ``v = [1, y_prev] @ W``.
"""

from __future__ import annotations

import copy
import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, DomainError, NonFiniteError

ACTIVATIONS = ("threshold", "sigmoid", "tanh", "relu", "softplus", "signum", "linear")
COSTS = ("sse", "bce", "softmax_ce_logits")
OPTIMIZERS = ("gd", "sgd", "momentum", "adam")


@dataclass(frozen=True)
class Activation:
    kind: str = "relu"
    c: float = 1.0  # sigmoid slope
    a: float = 1.0  # tanh amplitude
    b: float = 1.0  # tanh input scale

    def __post_init__(self):
        if self.kind not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.kind!r}")
        if self.kind == "sigmoid" and not self.c > 0:
            raise ConfigError("sigmoid slope must be positive")
        if self.kind == "tanh" and not (self.a > 0 and self.b > 0):
            raise ConfigError("tanh scales must be positive")

    @property
    def trainable(self) -> bool:
        return self.kind not in ("threshold", "signum")

    def __call__(self, p):
        return activate(self, p)

    def deriv(self, p):
        return activate_deriv(self, p)


def _logistic(t):
    t = np.asarray(t, dtype=float)
    return np.exp(-np.logaddexp(0.0, -t))


def activate(act: Activation, p):
    p = np.asarray(p, dtype=float)
    k = act.kind
    if k == "threshold":
        out = np.where(p >= 0.0, 1.0, 0.0)
    elif k == "sigmoid":
        out = _logistic(act.c * p)
    elif k == "tanh":
        out = act.a * np.tanh(act.b * p)
    elif k == "relu":
        out = np.maximum(p, 0.0)
    elif k == "softplus":
        out = np.logaddexp(0.0, p)
    elif k == "signum":
        out = np.sign(p)
    else:
        out = p.copy()
    return float(out) if out.ndim == 0 else out


def activate_deriv(act: Activation, p):
    p = np.asarray(p, dtype=float)
    k = act.kind
    if k in ("threshold", "signum"):
        out = np.zeros_like(p)
    elif k == "sigmoid":
        s = _logistic(act.c * p)
        out = act.c * s * (1.0 - s)
    elif k == "tanh":
        th = np.tanh(act.b * p)
        out = act.a * act.b * (1.0 - th * th)
    elif k == "relu":
        out = np.where(p > 0.0, 1.0, 0.0)
    elif k == "softplus":
        out = _logistic(p)
    else:
        out = np.ones_like(p)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MlpTopology:
    layer_sizes: tuple
    hidden_activation: Activation = Activation("relu")
    output_activation: Activation = Activation("linear")
    seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ConfigError("need an input, at least one hidden, and an output layer")
        if min(sizes) < 1:
            raise ConfigError(f"layer sizes must be positive, got {sizes}")

    @classmethod
    def default(cls, input_dim: int, n_hidden: int = 1, output_dim: int = 1, seed: int = 0, **kw):
        """Hidden layers as wide as the input."""
        return cls((input_dim,) + (input_dim,) * n_hidden + (output_dim,), seed=seed, **kw)

    def activation(self, layer: int) -> Activation:
        """Activation of weight layer ``layer`` (0-based)."""
        last = len(self.layer_sizes) - 2
        return self.output_activation if layer == last else self.hidden_activation


@dataclass
class MlpModel:
    weights: list
    topology: MlpTopology
    best_weights: list | None = None
    best_val_error: float = math.inf
    val_history: list = field(default_factory=list)
    epochs_run: int = 0


def init_model(topology: MlpTopology) -> MlpModel:
    rng = np.random.default_rng(np.random.SeedSequence([topology.seed, 0]))
    sizes = topology.layer_sizes
    W = [rng.uniform(-0.1, 0.1, size=(m + 1, k)) for m, k in zip(sizes[:-1], sizes[1:])]
    return MlpModel(W, topology, [w.copy() for w in W])


@dataclass(frozen=True)
class ForwardCache:
    v: list  # pre-activations per weight layer
    y: list  # y[0] is the input, y[l + 1] the output of layer l

    @property
    def output(self):
        return self.y[-1]


def forward(model: MlpModel, x, weights=None) -> ForwardCache:
    """Forward pass for one vector or a row matrix of inputs."""
    W = model.weights if weights is None else weights
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != W[0].shape[0] - 1:
        raise ContractError(f"expected input of length {W[0].shape[0] - 1}, got {x.shape[-1]}")
    vs, ys = [], [x]
    h = x
    for l, w in enumerate(W):
        v = w[0] + h @ w[1:]
        h = activate(model.topology.activation(l), v)
        h = np.asarray(h)
        vs.append(v)
        ys.append(h)
    return ForwardCache(vs, ys)


def _check_cost(model: MlpModel, cost: str):
    if cost not in COSTS:
        raise ConfigError(f"unknown cost {cost!r}")
    if cost == "softmax_ce_logits" and model.topology.output_activation.kind != "linear":
        raise ConfigError("softmax_ce_logits expects a linear output layer")


def _log_softmax(v):
    v = np.asarray(v, dtype=float)
    return v - np.logaddexp.reduce(v, axis=-1, keepdims=True)


def cost_value(cost: str, output, target) -> float:
    """Per-sample cost; for row matrices, the mean over rows.

    For ``softmax_ce_logits`` ``output`` is the logit vector.
    """
    out = np.asarray(output, dtype=float)
    d = np.asarray(target, dtype=float)
    if out.shape != d.shape:
        raise ContractError(f"output shape {out.shape} != target shape {d.shape}")
    if cost == "sse":
        per = 0.5 * np.sum((d - out) ** 2, axis=-1)
    elif cost == "bce":
        if np.any(out <= 0.0) or np.any(out >= 1.0):
            raise DomainError("bce needs outputs strictly inside (0, 1)")
        per = -np.mean(d * np.log(out) + (1.0 - d) * np.log1p(-out), axis=-1)
    elif cost == "softmax_ce_logits":
        per = -np.sum(d * _log_softmax(out), axis=-1)
    else:
        raise ConfigError(f"unknown cost {cost!r}")
    return float(np.mean(per))


def _output_delta(cost, v, out, d, act):
    if cost == "sse":
        return (out - d) * activate_deriv(act, v)
    if cost == "bce":
        m = out.shape[-1]
        return (out - d) / (out * (1.0 - out)) / m * activate_deriv(act, v)
    return np.exp(_log_softmax(v)) - d


def backprop(model: MlpModel, x, d, cost: str = "sse", cache: ForwardCache | None = None,
             weights=None):
    """Gradients of ``cost_value`` with respect to every weight matrix.

    Batched inputs give the gradient of the mean per-sample cost.
    """
    _check_cost(model, cost)
    W = model.weights if weights is None else weights
    if cache is None:
        cache = forward(model, x, W)
    d = np.asarray(d, dtype=float)
    if d.shape != cache.output.shape:
        raise ContractError(f"target shape {d.shape} != output shape {cache.output.shape}")
    single = d.ndim == 1
    L = len(W)
    delta = _output_delta(cost, cache.v[-1], cache.output, d, model.topology.activation(L - 1))
    if single:
        delta = delta[None, :]
    B = delta.shape[0]
    grads = [None] * L
    for l in range(L - 1, -1, -1):
        y_in = np.atleast_2d(cache.y[l])
        g = np.empty_like(W[l])
        g[0] = delta.sum(axis=0) / B
        g[1:] = y_in.T @ delta / B
        grads[l] = g
        if l:
            v_prev = np.atleast_2d(cache.v[l - 1])
            delta = activate_deriv(model.topology.activation(l - 1), v_prev) * (delta @ W[l][1:].T)
    return grads


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str = "adam"
    eta: float = 0.01
    alpha: float = 0.9
    gamma1: float = 0.9
    gamma2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 16

    def __post_init__(self):
        if self.kind not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.kind!r}")
        if self.eta < 0:
            raise ConfigError("eta must be non-negative")
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError("alpha must lie in [0, 1)")
        if not (0.0 < self.gamma1 < 1.0 and 0.0 < self.gamma2 < 1.0):
            raise ConfigError("Adam decay rates must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    @property
    def minibatch(self) -> bool:
        return self.kind in ("sgd", "adam")


@dataclass
class OptimizerState:
    kind: str
    m: list
    v: list
    last_step: int = -1


def init_state(spec: OptimizerSpec, weights) -> OptimizerState:
    zeros = [np.zeros_like(w) for w in weights]
    second = [np.zeros_like(w) for w in weights] if spec.kind == "adam" else []
    return OptimizerState(spec.kind, zeros, second)


def optimizer_step(spec: OptimizerSpec, state: OptimizerState, weights, grads, n: int):
    """Apply one update for step index ``n`` (0-based). Returns
    ``(new_weights, state)``; the input weights are not modified."""
    if state.kind != spec.kind or len(state.m) != len(weights):
        raise ContractError("optimizer state does not match spec or weights")
    if n <= state.last_step:
        raise ContractError(f"step index {n} already used (last was {state.last_step})")
    state.last_step = n
    out = []
    if spec.kind in ("gd", "sgd"):
        for w, g in zip(weights, grads):
            out.append(w - spec.eta * g)
    elif spec.kind == "momentum":
        for k, (w, g) in enumerate(zip(weights, grads)):
            state.m[k] = spec.alpha * state.m[k] - spec.eta * g
            out.append(w + state.m[k])
    else:
        t = n + 1
        c1 = 1.0 - spec.gamma1 ** t
        c2 = 1.0 - spec.gamma2 ** t
        for k, (w, g) in enumerate(zip(weights, grads)):
            state.m[k] = spec.gamma1 * state.m[k] + (1.0 - spec.gamma1) * g
            state.v[k] = spec.gamma2 * state.v[k] + (1.0 - spec.gamma2) * g * g
            m_hat = state.m[k] / c1
            v_hat = state.v[k] / c2
            out.append(w - spec.eta * m_hat / (np.sqrt(v_hat) + spec.epsilon))
    return out, state


def _as_targets(d, out_dim):
    d = np.asarray(d, dtype=float)
    if d.ndim == 1:
        d = d[:, None] if out_dim == 1 else d
    return d


def _labels_from_output(out, threshold):
    if out.shape[-1] == 1:
        return (out[..., 0] >= threshold).astype(int)
    return np.argmax(out, axis=-1)


def error_rate(model: MlpModel, X, labels, threshold: float = 0.5, weights=None) -> float:
    out = forward(model, np.atleast_2d(X), weights).output
    return float(np.mean(_labels_from_output(out, threshold) != np.asarray(labels)))


def fit(model: MlpModel, train, val=None, cost: str = "sse", opt: OptimizerSpec = OptimizerSpec(),
        epochs: int = 500, threshold: float = 0.5, patience: int | None = 50) -> MlpModel:
    """Train in place and return ``model`` with its best weights installed.

    ``train`` is ``(X, D)`` with D the regression/one-hot targets; ``val``
    is ``(X, labels)`` scored by error rate after every epoch. Without
    ``val`` the final weights are kept.
    """
    _check_cost(model, cost)
    acts = (model.topology.hidden_activation, model.topology.output_activation)
    if any(not a.trainable for a in acts):
        warnings.warn("threshold/signum activations have zero derivative; training will not move them")
    X = np.atleast_2d(np.asarray(train[0], dtype=float))
    D = _as_targets(train[1], model.topology.layer_sizes[-1])
    if X.shape[0] == 0:
        raise ContractError("empty training set")
    if D.shape[0] != X.shape[0]:
        raise ContractError("train inputs and targets differ in length")
    if val is not None and len(val[1]) == 0:
        raise ContractError("empty validation set")
    rng = np.random.default_rng(np.random.SeedSequence([model.topology.seed, 1]))
    state = init_state(opt, model.weights)
    W = [w.copy() for w in model.weights]
    best = [w.copy() for w in W]
    best_err = math.inf
    since_best = 0
    step = 0
    n = X.shape[0]
    bs = opt.batch_size if opt.minibatch else n
    epoch = 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            cache = forward(model, X[idx], W)
            loss = cost_value(cost, cache.output, D[idx])
            if not math.isfinite(loss):
                raise NonFiniteError(f"non-finite loss in epoch {epoch}", iteration=epoch,
                                     last_finite=[w.copy() for w in W])
            grads = backprop(model, X[idx], D[idx], cost, cache, W)
            W_new, state = optimizer_step(opt, state, W, grads, step)
            step += 1
            if not all(np.all(np.isfinite(w)) for w in W_new):
                raise NonFiniteError(f"non-finite weights in epoch {epoch}", iteration=epoch,
                                     last_finite=[w.copy() for w in W])
            W = W_new
        if val is None:
            continue
        err = error_rate(model, val[0], val[1], threshold, W)
        if err < best_err:
            best_err = err
            best = [w.copy() for w in W]
            since_best = 0
        else:
            since_best += 1
        model.val_history.append(best_err)
        if patience is not None and since_best >= patience:
            break
    if val is None:
        best = W
        best_err = math.nan
    model.weights = [w.copy() for w in best]
    model.best_weights = [w.copy() for w in best]
    model.best_val_error = best_err
    model.epochs_run = epoch
    return model


def predict(model: MlpModel, x, threshold: float = 0.5):
    """Single-output nets: 1 where the output is >= threshold. Wider
    outputs: the argmax class."""
    x = np.asarray(x, dtype=float)
    labels = _labels_from_output(np.atleast_2d(forward(model, np.atleast_2d(x)).output), threshold)
    return int(labels[0]) if x.ndim == 1 else labels


def clone(model: MlpModel) -> MlpModel:
    return copy.deepcopy(model)


def _act_str(a: Activation) -> str:
    return f"{a.kind} {a.c!r} {a.a!r} {a.b!r}"


def _act_parse(text: str) -> Activation:
    kind, c, a, b = text.split()
    return Activation(kind, float(c), float(a), float(b))


def save_mlp(model: MlpModel, path, config: dict | None = None) -> None:
    """key=value preamble, then one block per layer headed by its shape."""
    topo = model.topology
    pre = {
        "layer_sizes": " ".join(str(s) for s in topo.layer_sizes),
        "hidden_activation": _act_str(topo.hidden_activation),
        "output_activation": _act_str(topo.output_activation),
        "seed": topo.seed,
        "best_val_error": repr(float(model.best_val_error)),
    }
    pre.update(config or {})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for k, v in pre.items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh, lineterminator="\n")
        for l, mat in enumerate(model.weights):
            w.writerow(["layer", l, mat.shape[0], mat.shape[1]])
            for row in mat:
                w.writerow([repr(float(v)) for v in row])


def load_mlp(path) -> MlpModel:
    pre = {}
    weights = []
    with open(path, newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            pre[k] = v
        else:
            body.append(line)
    rows = list(csv.reader(body))
    i = 0
    while i < len(rows):
        _, _, r, c = rows[i]
        r, c = int(r), int(c)
        weights.append(np.array([[float(v) for v in row] for row in rows[i + 1:i + 1 + r]]).reshape(r, c))
        i += 1 + r
    topo = MlpTopology(
        tuple(int(s) for s in pre["layer_sizes"].split()),
        _act_parse(pre["hidden_activation"]),
        _act_parse(pre["output_activation"]),
        int(pre["seed"]),
    )
    return MlpModel(weights, topo, [w.copy() for w in weights], float(pre["best_val_error"]))
