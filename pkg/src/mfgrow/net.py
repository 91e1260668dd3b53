"""Concrete networks under SP / muP / MFP: forward evaluation, manual
backpropagation, per-weight learning-rate scaling, SGD and Adam, and the
training loop.

Forward scalars sit on every contraction and depend on the contracted axis:
a contraction over a width-N hidden axis gets 1/N under MFP and 1/sqrt(N)
under SP and muP, except the final output contraction which gets 1/N under
muP as well. Contractions over data axes (the input dimension) get 1/fan
under MFP and no scalar under SP/muP, where fan-scaled initialization keeps
pre-activations O(1). For 1-d input these rules collapse to the plain
three-parametrization forms.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .arch import ArchGraph, ROW, COL
from .errors import DivergenceError, ParameterError, ShapeError, StructureError
from .tensor import Rng, as_f64

LOSSES = ("square", "cross_entropy")
DIVERGENCE_LIMIT = 1e6


def _tanh_d(a):
    t = np.tanh(a)
    return 1.0 - t * t


_ACTIVATIONS = {
    "tanh": (np.tanh, _tanh_d),
    "relu": (lambda a: np.maximum(a, 0.0), lambda a: (a > 0.0).astype(np.float64)),
    "identity": (lambda a: a, lambda a: np.ones_like(a)),
}


def activation_fns(name: str):
    try:
        return _ACTIVATIONS[name]
    except KeyError:
        raise ParameterError(f"unknown activation {name!r}") from None


@dataclass
class Network:
    """Architecture plus concrete weight arrays."""

    arch: ArchGraph
    store: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    @property
    def parametrization(self) -> str:
        return self.arch.parametrization

    def validate(self) -> None:
        self.arch.validate()
        if not self.arch.layers:
            raise StructureError("network needs a runnable topology (chain or skip4)")
        for w in self.arch.weights:
            arr = self.store.get(w.name)
            if arr is None:
                raise StructureError(f"store is missing weight {w.name}")
            if tuple(arr.shape) != w.shape:
                raise StructureError(
                    f"weight {w.name}: stored shape {tuple(arr.shape)} != declared {w.shape}"
                )

    def clone(self) -> "Network":
        return Network(self.arch, {k: v.copy() for k, v in self.store.items()}, dict(self.meta))

    def input_dim(self) -> int:
        u = self.arch.weight(self.arch.layers[0][0])
        return 1 if u.kind == "vector" else u.shape[1]

    def output_dim(self) -> int:
        v = self.arch.weight(self.arch.layers[-1][0])
        return 1 if v.kind == "vector" else v.shape[0]


def zeros_network(arch: ArchGraph) -> Network:
    store = {w.name: np.zeros(w.shape, dtype=np.float64) for w in arch.weights}
    return Network(arch, store)


def _contraction_scalar(parametrization: str, fan: int, role: str, final: bool) -> float:
    if role == "data":
        return 1.0 / fan if parametrization == "MFP" else 1.0
    if parametrization == "MFP":
        return 1.0 / fan
    if parametrization == "muP" and final:
        return 1.0 / fan
    return 1.0 / math.sqrt(fan)


def layer_scalar(net: Network, layer_index: int) -> float:
    """Forward scalar of one layer's contraction (1.0 for the elementwise
    vector embedding, which contracts nothing)."""
    arch = net.arch
    layers = arch.layers
    wname = layers[layer_index][0]
    w = arch.weight(wname)
    final = layer_index == len(layers) - 1
    if w.kind == "vector":
        if layer_index == 0:
            return 1.0
        gamma = arch.axis_gamma(wname, ROW)
        return _contraction_scalar(arch.parametrization, gamma.width, gamma.role, final)
    gamma = arch.axis_gamma(wname, COL)
    return _contraction_scalar(arch.parametrization, gamma.width, gamma.role, final)


def _check_input(net: Network, X: np.ndarray) -> np.ndarray:
    X = as_f64(X)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != net.input_dim():
        raise ShapeError(f"input has shape {X.shape}, expected (batch, {net.input_dim()})")
    return X


def _forward_chain(net: Network, X: np.ndarray, keep: bool):
    arch = net.arch
    acts = [activation_fns(a) for a in arch.activations]
    zs = [X]
    pre = []
    z = X
    last = len(arch.layers) - 1
    for i, (wname, bname) in enumerate(arch.layers):
        w = net.store[wname]
        s = layer_scalar(net, i)
        if w.ndim == 1:
            if i == 0:
                a = X[:, 0:1] * w[None, :]
            else:
                a = s * (z @ w)[:, None]
        else:
            a = s * (z @ w.T)
        if bname is not None:
            a = a + net.store[bname][None, :]
        if i < last:
            fn = acts[i][0]
            z = fn(a)
        else:
            z = a
        if keep:
            pre.append(a)
            zs.append(z)
    return (z, pre, zs) if keep else z


def _forward_skip4(net: Network, X: np.ndarray, keep: bool):
    arch = net.arch
    fn, _ = activation_fns(arch.activations[0])
    u, bu = net.store["u"], net.store["bu"]
    w1, b1 = net.store["w1"], net.store["b1"]
    w2, b2 = net.store["w2"], net.store["b2"]
    v, bv = net.store["v"], net.store["bv"]
    s1 = layer_scalar(net, 1)  # w1 contraction
    s2 = layer_scalar(net, 2)  # w2 contraction
    s3 = layer_scalar(net, 3)  # output contraction

    if u.ndim == 1:
        a0 = X[:, 0:1] * u[None, :] + bu[None, :]
    else:
        s0 = layer_scalar(net, 0)
        a0 = s0 * (X @ u.T) + bu[None, :]
    z0 = fn(a0)
    a1 = s1 * (z0 @ w1.T) + b1[None, :]
    h1 = fn(a1)
    direct = s2 * (h1 @ w2.T) + b2[None, :]
    skip = s1 * (z0 @ w1.T) + b1[None, :]
    a2 = direct + skip
    g = fn(a2)
    if v.ndim == 1:
        out = s3 * (g @ v)[:, None] + bv[None, :]
    else:
        out = s3 * (g @ v.T) + bv[None, :]
    if keep:
        return out, (a0, z0, a1, h1, a2, g)
    return out


def forward_batch(net: Network, X: np.ndarray) -> np.ndarray:
    """Evaluate the network on a (batch, input_dim) array."""
    X = _check_input(net, X)
    if net.arch.topology == "skip4":
        return _forward_skip4(net, X, keep=False)
    return _forward_chain(net, X, keep=False)


def forward(net: Network, x) -> np.ndarray:
    """Evaluate a single input vector; returns the output vector."""
    x = as_f64(x)
    if x.ndim == 0:
        x = x[None]
    return forward_batch(net, x[None, :])[0]


def _loss_and_delta(out: np.ndarray, Y: np.ndarray, loss: str):
    """Per-example losses and d(loss)/d(out)."""
    if loss == "square":
        if Y.ndim == 1:
            Y = Y[:, None]
        diff = out - Y
        losses = 0.5 * np.sum(diff * diff, axis=1)
        return losses, diff
    if loss == "cross_entropy":
        labels = Y.astype(int).reshape(-1)
        shifted = out - out.max(axis=1, keepdims=True)
        expv = np.exp(shifted)
        probs = expv / expv.sum(axis=1, keepdims=True)
        n = out.shape[0]
        losses = -np.log(np.clip(probs[np.arange(n), labels], 1e-300, None))
        delta = probs.copy()
        delta[np.arange(n), labels] -= 1.0
        return losses, delta
    raise ParameterError(f"unknown loss {loss!r}")


def _backward_chain(net: Network, X: np.ndarray, Y: np.ndarray, loss: str):
    arch = net.arch
    acts = [activation_fns(a) for a in arch.activations]
    out, pre, zs = _forward_chain(net, X, keep=True)
    losses, delta = _loss_and_delta(out, Y, loss)
    B = X.shape[0]
    grads: dict[str, np.ndarray] = {}
    last = len(arch.layers) - 1
    for i in range(last, -1, -1):
        wname, bname = arch.layers[i]
        w = net.store[wname]
        s = layer_scalar(net, i)
        z_prev = zs[i]
        if w.ndim == 1:
            if i == 0:
                # Elementwise embedding: a = x * u + bu.
                grads[wname] = (delta * X[:, 0:1]).mean(axis=0)
                if bname is not None:
                    grads[bname] = delta.mean(axis=0)
                delta = None
            else:
                d = delta[:, 0]
                grads[wname] = s * (d[:, None] * z_prev).mean(axis=0)
                if bname is not None:
                    grads[bname] = delta.mean(axis=0)
                delta = s * d[:, None] * w[None, :]
        else:
            grads[wname] = s * (delta.T @ z_prev) / B
            if bname is not None:
                grads[bname] = delta.mean(axis=0)
            delta = s * (delta @ w)
        if i > 0 and delta is not None:
            _, dfn = acts[i - 1]
            delta = delta * dfn(pre[i - 1])
    return grads, float(losses.mean())


def _backward_skip4(net: Network, X: np.ndarray, Y: np.ndarray, loss: str):
    arch = net.arch
    _, dfn = activation_fns(arch.activations[0])
    u, v = net.store["u"], net.store["v"]
    w1, w2 = net.store["w1"], net.store["w2"]
    s1 = layer_scalar(net, 1)
    s2 = layer_scalar(net, 2)
    s3 = layer_scalar(net, 3)
    out, (a0, z0, a1, h1, a2, g) = _forward_skip4(net, X, keep=True)
    losses, delta = _loss_and_delta(out, Y, loss)
    B = X.shape[0]
    grads: dict[str, np.ndarray] = {}

    if v.ndim == 1:
        d = delta[:, 0]
        grads["v"] = s3 * (d[:, None] * g).mean(axis=0)
        grads["bv"] = delta.mean(axis=0)
        dg = s3 * d[:, None] * v[None, :]
    else:
        grads["v"] = s3 * (delta.T @ g) / B
        grads["bv"] = delta.mean(axis=0)
        dg = s3 * (delta @ v)
    dg = dg * dfn(a2)

    grads["w2"] = s2 * (dg.T @ h1) / B
    grads["b2"] = dg.mean(axis=0)
    dh1 = s2 * (dg @ w2) * dfn(a1)

    # w1 and b1 act twice: through the hidden path (rows as gamma 2) and
    # through the skip path (rows as gamma 3); gradients add.
    grads["w1"] = s1 * ((dh1.T @ z0) + (dg.T @ z0)) / B
    grads["b1"] = (dh1 + dg).mean(axis=0)

    dz0 = (s1 * (dh1 @ w1) + s1 * (dg @ w1)) * dfn(a0)
    if u.ndim == 1:
        grads["u"] = (dz0 * X[:, 0:1]).mean(axis=0)
    else:
        s0 = layer_scalar(net, 0)
        grads["u"] = s0 * (dz0.T @ X) / B
    grads["bu"] = dz0.mean(axis=0)
    return grads, float(losses.mean())


def backward_batch(net: Network, X: np.ndarray, Y: np.ndarray, loss: str = "square"):
    """Mean gradients of the loss over a batch. Returns (grads, mean_loss)."""
    X = _check_input(net, X)
    Y = as_f64(Y) if loss == "square" else np.asarray(Y)
    if loss == "square" and Y.ndim == 1 and net.output_dim() == 1:
        Y = Y[:, None]
    if loss not in LOSSES:
        raise ParameterError(f"unknown loss {loss!r}")
    if net.arch.topology == "skip4":
        return _backward_skip4(net, X, Y, loss)
    return _backward_chain(net, X, Y, loss)


def backward(net: Network, x, y, loss: str = "square") -> dict[str, np.ndarray]:
    """Exact gradients of the loss at a single example."""
    x = as_f64(x)
    if x.ndim == 0:
        x = x[None]
    y_arr = np.asarray(y)
    if loss == "square":
        y_arr = as_f64(y_arr).reshape(1, -1)
    else:
        y_arr = y_arr.reshape(1)
    grads, _ = backward_batch(net, x[None, :], y_arr, loss)
    return grads


def lr_multiplier(weight: str, arch: ArchGraph, parametrization: str | None = None) -> float:
    """Per-weight learning-rate scale: under MFP the product of the weight's
    resizable axis widths (N*N for a square hidden matrix, N for vectors and
    embedding/output matrices, 1 for data-only weights); 1 under SP/muP."""
    if parametrization is None:
        parametrization = arch.parametrization
    if parametrization in ("SP", "muP"):
        return 1.0
    w = arch.weight(weight)
    mult = 1.0
    axes = (ROW,) if w.kind == "vector" else (ROW, COL)
    for ax in axes:
        gamma = arch.axis_gamma(weight, ax)
        if gamma.role == "hidden":
            mult *= gamma.width
    return mult


@dataclass
class OptimizerState:
    """SGD or Adam with fixed per-weight multipliers.

    ``lr_width_exponent`` rescales the base rate by max_hidden_width**alpha;
    the SP/muP baselines keep it at 0 (plain constant rate).
    """

    kind: str
    lr: float
    multipliers: dict[str, float]
    width_scale: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(cls, net: Network, kind: str = "sgd", lr: float = 0.1,
               lr_width_exponent: float = 0.0) -> "OptimizerState":
        if kind not in ("sgd", "adam"):
            raise ParameterError(f"unknown optimizer kind {kind!r}")
        if lr < 0:
            raise ParameterError(f"learning rate must be >= 0, got {lr}")
        mults = {w.name: lr_multiplier(w.name, net.arch) for w in net.arch.weights}
        max_width = max(net.arch.hidden_widths, default=1)
        return cls(kind=kind, lr=lr, multipliers=mults,
                   width_scale=float(max_width) ** lr_width_exponent)

    def apply(self, net: Network, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        for name, g in grads.items():
            eff = self.lr * self.width_scale * self.multipliers[name]
            w = net.store[name]
            if self.kind == "sgd":
                w -= eff * g
                continue
            m = self.m.setdefault(name, np.zeros_like(w))
            v = self.v.setdefault(name, np.zeros_like(w))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            mhat = m / (1.0 - self.beta1**self.step_count)
            vhat = v / (1.0 - self.beta2**self.step_count)
            w -= eff * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class TrainingLog:
    """Per-epoch record, serializable as CSV."""

    seed: int
    rows: list[tuple] = field(default_factory=list)
    tags: dict = field(default_factory=dict)

    COLUMNS = ("epoch", "step", "train_loss", "test_loss", "test_acc", "seed")

    def add(self, epoch: int, step: int, train_loss: float, test_loss: float,
            test_acc: float) -> None:
        self.rows.append((epoch, step, train_loss, test_loss, test_acc, self.seed))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.COLUMNS) + "\n")
        for epoch, step, tr, te, acc, seed in self.rows:
            buf.write(f"{epoch},{step},{tr:.12g},{te:.12g},{acc:.12g},{seed}\n")
        return buf.getvalue()

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())

    def final(self, column: str) -> float:
        idx = self.COLUMNS.index(column)
        return self.rows[-1][idx]


def evaluate(net: Network, inputs: np.ndarray, targets: np.ndarray, loss: str = "square",
             chunk: int = 1024):
    """Mean loss (and accuracy for classification) over a dataset."""
    total = 0.0
    correct = 0
    n = inputs.shape[0]
    for start in range(0, n, chunk):
        X = inputs[start : start + chunk]
        Y = targets[start : start + chunk]
        out = forward_batch(net, X)
        losses, _ = _loss_and_delta(out, as_f64(Y) if loss == "square" else Y, loss)
        total += float(losses.sum())
        if loss == "cross_entropy":
            correct += int((out.argmax(axis=1) == np.asarray(Y).astype(int)).sum())
    acc = correct / n if loss == "cross_entropy" else float("nan")
    return total / n, acc


def train(
    net: Network,
    data,
    opt: OptimizerState,
    epochs: int,
    batch_size: int,
    rng: Rng,
    test_data=None,
    loss: str = "square",
) -> TrainingLog:
    """SGD/Adam loop over ``data`` (a Dataset). Mutates ``net`` in place.

    Deterministic under a fixed seed: the shuffle order comes from a
    dedicated substream and batch reduction order is fixed.
    """
    if data.inputs.shape[0] == 0:
        raise ParameterError("training data is empty")
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    order_gen = rng.substream("train/order")
    log = TrainingLog(seed=rng.seed)

    def test_metrics():
        if test_data is None:
            return float("nan"), float("nan")
        return evaluate(net, test_data.inputs, test_data.targets, loss)

    tr0, _ = evaluate(net, data.inputs, data.targets, loss)
    te0, acc0 = test_metrics()
    log.add(0, 0, tr0, te0, acc0)

    n = data.inputs.shape[0]
    step = 0
    for epoch in range(1, epochs + 1):
        perm = order_gen.permutation(n)
        running = 0.0
        batches = 0
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            grads, batch_loss = backward_batch(net, data.inputs[idx], data.targets[idx], loss)
            if not np.isfinite(batch_loss) or abs(batch_loss) > DIVERGENCE_LIMIT:
                raise DivergenceError(f"training loss diverged ({batch_loss})", step)
            opt.apply(net, grads)
            running += batch_loss
            batches += 1
            step += 1
        te, acc = test_metrics()
        log.add(epoch, step, running / batches, te, acc)
    return log
