"""Minimal reverse-mode autodiff over dense numpy tensors.

A fixed operation vocabulary (affine, tanh/relu/sigmoid, axis softmax,
element-wise min, gather, concat, reductions) is enough for the mechanism
networks; there is no dynamic graph compiler.  Gradients flow to any leaf
created with ``requires_grad=True``, including inputs (misreport ascent
needs input gradients, not just parameter gradients).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "tensor",
    "matmul",
    "tanh",
    "relu",
    "sigmoid",
    "softmax",
    "row_softmax",
    "col_softmax",
    "elementwise_min",
    "gather_cols",
    "transpose",
    "concat",
    "backward",
    "MlpParams",
    "mlp_forward",
    "Adam",
]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum out broadcast axes so grad matches the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Node in the computation tape wrapping a float64 ndarray."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=float)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'yes' if self.requires_grad else 'no'})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = tensor(other)

        def bw(g, out):
            return (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape))

        return Tensor(self.data + other.data, parents=(self, other), backward=bw)

    __radd__ = __add__

    def __sub__(self, other):
        other = tensor(other)

        def bw(g, out):
            return (_unbroadcast(g, self.shape), _unbroadcast(-g, other.shape))

        return Tensor(self.data - other.data, parents=(self, other), backward=bw)

    def __rsub__(self, other):
        return tensor(other) - self

    def __mul__(self, other):
        other = tensor(other)

        def bw(g, out):
            return (
                _unbroadcast(g * other.data, self.shape),
                _unbroadcast(g * self.data, other.shape),
            )

        return Tensor(self.data * other.data, parents=(self, other), backward=bw)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __truediv__(self, other):
        other = tensor(other)

        def bw(g, out):
            return (
                _unbroadcast(g / other.data, self.shape),
                _unbroadcast(-g * self.data / other.data**2, other.shape),
            )

        return Tensor(self.data / other.data, parents=(self, other), backward=bw)

    def __getitem__(self, key):
        def bw(g, out):
            gx = np.zeros_like(self.data)
            np.add.at(gx, key, g)
            return (gx,)

        return Tensor(self.data[key], parents=(self,), backward=bw)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])

        def bw(g, out):
            return (g.reshape(self.shape),)

        return Tensor(self.data.reshape(shape), parents=(self,), backward=bw)

    def sum(self, axis=None, keepdims=False):
        def bw(g, out):
            if axis is None:
                return (np.broadcast_to(g, self.shape).copy(),)
            g2 = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g2, self.shape).copy(),)

        return Tensor(self.data.sum(axis=axis, keepdims=keepdims), parents=(self,), backward=bw)

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def square(self):
        return self * self


def tensor(x, requires_grad=False) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, requires_grad=requires_grad)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = tensor(a), tensor(b)

    def bw(g, out):
        return (g @ b.data.swapaxes(-1, -2), a.data.swapaxes(-1, -2) @ g)

    return Tensor(a.data @ b.data, parents=(a, b), backward=bw)


def tanh(x: Tensor) -> Tensor:
    x = tensor(x)
    y = np.tanh(x.data)

    def bw(g, out):
        return (g * (1.0 - out.data**2),)

    return Tensor(y, parents=(x,), backward=bw)


def relu(x: Tensor) -> Tensor:
    x = tensor(x)

    def bw(g, out):
        return (g * (x.data > 0.0),)

    return Tensor(np.maximum(x.data, 0.0), parents=(x,), backward=bw)


def sigmoid(x: Tensor) -> Tensor:
    x = tensor(x)
    y = 1.0 / (1.0 + np.exp(-np.clip(x.data, -500.0, 500.0)))

    def bw(g, out):
        return (g * out.data * (1.0 - out.data),)

    return Tensor(y, parents=(x,), backward=bw)


def softmax(x: Tensor, axis: int) -> Tensor:
    """Numerically stabilized softmax along an axis."""
    x = tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g, out):
        s = (g * out.data).sum(axis=axis, keepdims=True)
        return (out.data * (g - s),)

    return Tensor(y, parents=(x,), backward=bw)


def row_softmax(x: Tensor) -> Tensor:
    return softmax(x, axis=-1)


def col_softmax(x: Tensor) -> Tensor:
    return softmax(x, axis=-2)


def elementwise_min(a: Tensor, b: Tensor) -> Tensor:
    """Cellwise min; gradient goes to the smaller argument, split on ties."""
    a, b = tensor(a), tensor(b)
    take_a = a.data < b.data
    tie = a.data == b.data
    wa = np.where(take_a, 1.0, np.where(tie, 0.5, 0.0))

    def bw(g, out):
        return (_unbroadcast(g * wa, a.shape), _unbroadcast(g * (1.0 - wa), b.shape))

    return Tensor(np.minimum(a.data, b.data), parents=(a, b), backward=bw)


def gather_cols(x: Tensor, idx: np.ndarray) -> Tensor:
    """out[b, k] = x[b, idx[b, k]] for a 2-D tensor and int index matrix."""
    x = tensor(x)
    rows = np.arange(x.shape[0])[:, None]

    def bw(g, out):
        gx = np.zeros_like(x.data)
        np.add.at(gx, (rows, idx), g)
        return (gx,)

    return Tensor(x.data[rows, idx], parents=(x,), backward=bw)


def transpose(x: Tensor, axes=None) -> Tensor:
    x = tensor(x)
    axes = tuple(axes) if axes is not None else tuple(reversed(range(x.data.ndim)))
    inverse = np.argsort(axes)

    def bw(g, out):
        return (g.transpose(inverse),)

    return Tensor(x.data.transpose(axes), parents=(x,), backward=bw)


def concat(parts, axis: int) -> Tensor:
    parts = [tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g, out):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(
        np.concatenate([p.data for p in parts], axis=axis), parents=tuple(parts), backward=bw
    )


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep seeding d(loss)/d(loss) = 1."""
    topo: list[Tensor] = []
    seen = set()

    def visit(node):
        stack = [(node, False)]
        while stack:
            t, done = stack.pop()
            if done:
                topo.append(t)
                continue
            if id(t) in seen or not t.requires_grad:
                continue
            seen.add(id(t))
            stack.append((t, True))
            for p in t._parents:
                stack.append((p, False))

    visit(loss)
    for t in topo:
        t.grad = np.zeros_like(t.data)
    loss.grad = np.ones_like(loss.data)
    for t in reversed(topo):
        if t._backward is None:
            continue
        grads = t._backward(t.grad, t)
        for p, g in zip(t._parents, grads):
            if p.requires_grad and g is not None:
                p.grad = p.grad + g if p.grad is not None else g


# ---------------------------------------------------------------------------
# MLP parameters and Adam
# ---------------------------------------------------------------------------


class MlpParams:
    """Per-layer weights/biases with one hidden activation kind."""

    def __init__(self, layer_dims, activation="tanh", rng=None, scale=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.activation = activation
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
            s = scale if scale is not None else np.sqrt(1.0 / d_in)
            self.weights.append(Tensor(rng.normal(0.0, s, (d_in, d_out)), requires_grad=True))
            self.biases.append(Tensor(np.zeros(d_out), requires_grad=True))

    def parameters(self) -> list[Tensor]:
        return [t for pair in zip(self.weights, self.biases) for t in pair]


_ACTIVATIONS = {"tanh": tanh, "relu": relu, "sigmoid": sigmoid}


def mlp_forward(params: MlpParams, x: Tensor) -> Tensor:
    """Affine-activation chain; the final layer stays linear."""
    act = _ACTIVATIONS[params.activation]
    h = tensor(x)
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = matmul(h, w) + b
        if i < last:
            h = act(h)
    return h


class Adam:
    """Standard Adam with bias correction over a fixed parameter list."""

    def __init__(self, params: list[Tensor], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g
            mhat = self.m[i] / (1.0 - b1**self.t)
            vhat = self.v[i] / (1.0 - b2**self.t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
