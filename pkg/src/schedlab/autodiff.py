"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Just enough machinery for small recurrent actor-critic networks: tensors of
rank <= 3, dense layers, an LSTM cell, concatenation/slicing, elementwise
arithmetic, tanh/sigmoid/relu, and full reductions.  Backpropagation through
time is the plain unrolled graph: run the cell step by step over an episode
and call backward() on the scalar loss; nothing is truncated.

Conventions:
  * shapes are validated when the graph is built, so mismatches fail at the
    offending op, not inside backward();
  * every op checks its output for NaN/inf (disable via ``nan_guard(False)``
    if profiling ever demands it);
  * gradients accumulate into ``.grad`` and are owned by the optimizer
    (``Adam.zero_grad()`` clears them);
  * ``no_grad()`` suspends graph building (target networks, rollouts).

Weights initialize uniformly in +-1/sqrt(fan_in); LSTM forget-gate biases
start at +1 so memories survive early training.  Checkpoints are .npz
containers: ``format_version`` (currently 1), ``meta_json`` (free-form JSON
string), and one ``param/<name>`` array per parameter.
"""

from __future__ import annotations

import json

import numpy as np

__all__ = [
    "Tensor", "no_grad", "nan_guard", "parameter",
    "add", "sub", "mul", "neg", "matmul", "concat", "slice_last",
    "tanh", "sigmoid", "relu", "reduce_sum", "reduce_mean",
    "Dense", "LSTMCell", "Adam", "soft_update",
    "save_checkpoint", "load_checkpoint",
]

_GRAD_ENABLED = True
_NAN_CHECK = True


class no_grad:
    """Context manager: ops executed inside build no graph."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._saved = _GRAD_ENABLED
        _GRAD_ENABLED = False

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._saved
        return False


def nan_guard(enabled):
    global _NAN_CHECK
    _NAN_CHECK = bool(enabled)


def _check_finite(data, where):
    if _NAN_CHECK and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values produced by {where}")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim > 3:
            raise ValueError(f"rank {self.data.ndim} > 3 not supported")
        _check_finite(self.data, name or "tensor")
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() needs a scalar loss")
        order, visited = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data, name):
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def _wire(out, parents, backward):
    """Attach graph metadata when tracking is on and any parent needs grads."""
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


# ---------- elementwise and structural ops ----------


def add(a, b):
    if isinstance(b, (int, float)):
        out = Tensor(a.data + b)

        def bw():
            if a.requires_grad:
                a._accum(out.grad)
        return _wire(out, (a,), bw)
    if a.data.shape == b.data.shape:
        out = Tensor(a.data + b.data)

        def bw():
            if a.requires_grad:
                a._accum(out.grad)
            if b.requires_grad:
                b._accum(out.grad)
        return _wire(out, (a, b), bw)
    if b.data.ndim == 1 and a.data.ndim >= 2 and a.data.shape[-1] == b.data.shape[0]:
        out = Tensor(a.data + b.data)  # bias broadcast over leading axes

        def bw():
            if a.requires_grad:
                a._accum(out.grad)
            if b.requires_grad:
                lead = tuple(range(out.grad.ndim - 1))
                b._accum(out.grad.sum(axis=lead))
        return _wire(out, (a, b), bw)
    raise ValueError(f"add: incompatible shapes {a.data.shape} and {b.data.shape}")


def neg(a):
    out = Tensor(-a.data)

    def bw():
        if a.requires_grad:
            a._accum(-out.grad)
    return _wire(out, (a,), bw)


def sub(a, b):
    if isinstance(b, (int, float)):
        return add(a, -b)
    return add(a, neg(b))


def mul(a, b):
    if isinstance(b, (int, float)):
        out = Tensor(a.data * b)

        def bw():
            if a.requires_grad:
                a._accum(out.grad * b)
        return _wire(out, (a,), bw)
    if a.data.shape != b.data.shape:
        raise ValueError(f"mul: shape mismatch {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data * b.data)

    def bw():
        if a.requires_grad:
            a._accum(out.grad * b.data)
        if b.requires_grad:
            b._accum(out.grad * a.data)
    return _wire(out, (a, b), bw)


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul: need [n,k]@[k,m], got {a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)

    def bw():
        if a.requires_grad:
            a._accum(out.grad @ b.data.T)
        if b.requires_grad:
            b._accum(a.data.T @ out.grad)
    return _wire(out, (a, b), bw)


def concat(tensors, axis=-1):
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat: need at least one tensor")
    nd = tensors[0].data.ndim
    ax = axis % nd
    base = list(tensors[0].data.shape)
    for t in tensors[1:]:
        shape = list(t.data.shape)
        if t.data.ndim != nd or shape[:ax] + shape[ax + 1:] != base[:ax] + base[ax + 1:]:
            raise ValueError(f"concat: shape mismatch {t.data.shape} vs {tuple(base)}")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=ax))
    sizes = [t.data.shape[ax] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw():
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * nd
                sl[ax] = slice(lo, hi)
                t._accum(out.grad[tuple(sl)])
    return _wire(out, tuple(tensors), bw)


def slice_last(a, start, stop):
    """View [..., start:stop] along the feature axis."""
    if not (0 <= start <= stop <= a.data.shape[-1]):
        raise ValueError(f"slice_last: bad range [{start}:{stop}] on {a.data.shape}")
    out = Tensor(a.data[..., start:stop])

    def bw():
        if a.requires_grad:
            g = np.zeros_like(a.data)
            g[..., start:stop] = out.grad
            a._accum(g)
    return _wire(out, (a,), bw)


def tanh(a):
    out = Tensor(np.tanh(a.data))

    def bw():
        if a.requires_grad:
            a._accum(out.grad * (1.0 - out.data**2))
    return _wire(out, (a,), bw)


def sigmoid(a):
    data = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(data)

    def bw():
        if a.requires_grad:
            a._accum(out.grad * out.data * (1.0 - out.data))
    return _wire(out, (a,), bw)


def relu(a):
    out = Tensor(np.maximum(a.data, 0.0))

    def bw():
        if a.requires_grad:
            a._accum(out.grad * (a.data > 0.0))
    return _wire(out, (a,), bw)


def reduce_sum(a):
    out = Tensor(a.data.sum())

    def bw():
        if a.requires_grad:
            a._accum(np.full_like(a.data, float(out.grad)))
    return _wire(out, (a,), bw)


def reduce_mean(a):
    out = Tensor(a.data.mean())

    def bw():
        if a.requires_grad:
            a._accum(np.full_like(a.data, float(out.grad) / a.data.size))
    return _wire(out, (a,), bw)


# ---------- layers ----------


def _fan_in_uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Dense:
    """Affine map x @ W + b with fan-in uniform init."""

    def __init__(self, rng, n_in, n_out, name):
        self.W = parameter(_fan_in_uniform(rng, n_in, (n_in, n_out)), f"{name}/W")
        self.b = parameter(_fan_in_uniform(rng, n_in, (n_out,)), f"{name}/b")

    def __call__(self, x):
        return add(matmul(x, self.W), self.b)

    def parameters(self):
        return [self.W, self.b]


class LSTMCell:
    """Standard LSTM cell; gate layout (input, forget, candidate, output).

    step(x [B,I], h [B,H], c [B,H]) -> (h', c') with
        z = x @ Wx + h @ Wh + b
        c' = sigmoid(f) * c + sigmoid(i) * tanh(g)
        h' = sigmoid(o) * tanh(c')
    Forget-gate bias starts at +1.
    """

    def __init__(self, rng, n_in, n_hidden, name):
        self.n_hidden = n_hidden
        self.Wx = parameter(_fan_in_uniform(rng, n_in, (n_in, 4 * n_hidden)), f"{name}/Wx")
        self.Wh = parameter(_fan_in_uniform(rng, n_hidden, (n_hidden, 4 * n_hidden)),
                            f"{name}/Wh")
        bias = _fan_in_uniform(rng, n_in, (4 * n_hidden,))
        bias[n_hidden:2 * n_hidden] += 1.0
        self.b = parameter(bias, f"{name}/b")

    def init_state(self, batch):
        z = np.zeros((batch, self.n_hidden))
        return Tensor(z.copy()), Tensor(z.copy())

    def step(self, x, h, c):
        z = add(add(matmul(x, self.Wx), matmul(h, self.Wh)), self.b)
        H = self.n_hidden
        gate_i = sigmoid(slice_last(z, 0, H))
        gate_f = sigmoid(slice_last(z, H, 2 * H))
        gate_g = tanh(slice_last(z, 2 * H, 3 * H))
        gate_o = sigmoid(slice_last(z, 3 * H, 4 * H))
        c_next = add(mul(gate_f, c), mul(gate_i, gate_g))
        h_next = mul(gate_o, tanh(c_next))
        return h_next, c_next

    def parameters(self):
        return [self.Wx, self.Wh, self.b]


# ---------- optimization ----------


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            if not np.all(np.isfinite(p.grad)):
                raise FloatingPointError(f"non-finite gradient for parameter {p.name}")
            g = p.grad
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1**self.t)
            v_hat = v / (1 - self.beta2**self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def soft_update(target_params, online_params, tau):
    """Polyak move: target <- tau * online + (1 - tau) * target, elementwise."""
    if len(target_params) != len(online_params):
        raise ValueError("parameter lists differ in length")
    for t, o in zip(target_params, online_params):
        if t.data.shape != o.data.shape:
            raise ValueError(f"shape mismatch {t.name} vs {o.name}")
        t.data = tau * o.data + (1.0 - tau) * t.data


# ---------- checkpoints ----------


def save_checkpoint(path, arrays, meta=None):
    """Write named arrays + metadata; returns the actual path (.npz)."""
    path = str(path)
    if not path.endswith(".npz"):
        path += ".npz"
    payload = {f"param/{k}": np.asarray(v) for k, v in arrays.items()}
    payload["format_version"] = np.int64(1)
    payload["meta_json"] = np.array(json.dumps(meta or {}))
    with open(path, "wb") as fh:
        np.savez(fh, **payload)
    return path


def load_checkpoint(path):
    """Read back (arrays, meta); refuses unknown format versions."""
    with np.load(path, allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != 1:
            raise ValueError(f"unsupported checkpoint format_version {version}")
        meta = json.loads(str(z["meta_json"]))
        arrays = {k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")}
    return arrays, meta
