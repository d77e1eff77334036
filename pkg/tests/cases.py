"""Shared problem generators for the unit and acceptance suites."""

import time

import numpy as np

from roadfriction import mlp

from oracles import central_difference

HIDDEN = (mlp.Activation("sigmoid"), mlp.Activation("tanh", a=1.7, b=0.6), mlp.Activation("relu"))
COSTS = ("sse", "bce", "softmax_ce_logits")


def random_net(rng, hidden, cost):
    """A random net of at most 4 weight layers and 8 units per layer,
    with an output layer that suits ``cost``."""
    n_hidden = int(rng.integers(1, 4))
    out = int(rng.integers(2, 5)) if cost == "softmax_ce_logits" else int(rng.integers(1, 4))
    sizes = [int(rng.integers(1, 9))] + [int(rng.integers(1, 9)) for _ in range(n_hidden)] + [out]
    out_act = mlp.Activation("sigmoid") if cost == "bce" else mlp.Activation("linear")
    topo = mlp.MlpTopology(tuple(sizes), hidden, out_act, seed=int(rng.integers(2**31)))
    model = mlp.init_model(topo)
    # wider than the default init so hidden units are not all near-linear
    model.weights = [rng.normal(scale=0.8, size=w.shape) for w in model.weights]
    B = int(rng.integers(1, 6))
    x = rng.normal(size=(B, sizes[0]))
    if cost == "softmax_ce_logits":
        d = np.eye(out)[rng.integers(out, size=B)]
    elif cost == "bce":
        d = rng.integers(0, 2, size=(B, out)).astype(float)
    else:
        d = rng.normal(size=(B, out))
    return model, x, d


def gradient_rel_error(model, x, d, cost, h=1e-6):
    """Relative error between backprop and central differences, over all
    weights at once."""
    grads = mlp.backprop(model, x, d, cost)
    num, ana = [], []
    for l, w in enumerate(model.weights):
        def f(wl, l=l):
            W = list(model.weights)
            W[l] = wl
            return mlp.cost_value(cost, mlp.forward(model, x, W).output, d)
        num.append(central_difference(f, w, h).ravel())
        ana.append(grads[l].ravel())
    num, ana = np.concatenate(num), np.concatenate(ana)
    scale = max(np.linalg.norm(num), np.linalg.norm(ana), 1e-12)
    return float(np.linalg.norm(num - ana) / scale)


def gradient_cases(count=20, seed=0):
    """``count`` (model, x, d, cost) tuples cycling through every
    differentiable hidden activation and cost pairing."""
    rng = np.random.default_rng(seed)
    combos = [(a, c) for a in HIDDEN for c in COSTS]
    for k in range(count):
        act, cost = combos[k % len(combos)]
        model, x, d = random_net(rng, act, cost)
        yield model, x, d, cost


XOR_X = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
XOR_Y = np.array([0, 1, 1, 0])


def xor_trial(seed, epochs=2000):
    """Train [2, 4, 1] relu/linear with Adam on XOR; True when the
    training error reaches 0."""
    topo = mlp.MlpTopology((2, 4, 1), mlp.Activation("relu"), mlp.Activation("linear"), seed=seed)
    model = mlp.init_model(topo)
    opt = mlp.OptimizerSpec("adam", eta=0.01, batch_size=4)
    mlp.fit(model, (XOR_X, XOR_Y.astype(float)), (XOR_X, XOR_Y), "sse", opt,
            epochs=epochs, patience=None)
    return mlp.error_rate(model, XOR_X, XOR_Y) == 0.0


ACCEPTANCE = []


def report(name, ok, detail, started):
    """Record one acceptance line; printed in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail} [{time.perf_counter() - started:.1f} s]"
    ACCEPTANCE.append(line)
    print(line)
    return ok
