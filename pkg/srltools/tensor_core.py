"""
Dense numpy tensors with a recorded computation graph and reverse-mode
gradients, plus a central-difference gradient checker and the flat
checkpoint archive.

Broadcasting is limited to leading axes: the second operand of `add`/`mul`
may have the trailing shape of the first, and its gradient is summed over the
leading axes.
"""

import contextlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict

import numpy as np

from .common import NotScalarLoss, ShapeMismatch, SrlError

logger = logging.getLogger(__name__)

_DTYPES = {64: np.float64, 32: np.float32}
_state = {"dtype": np.float64, "grad_enabled": True}


def set_precision(bits):
    if bits not in _DTYPES:
        raise SrlError(f"precision must be 64 or 32, not {bits}")
    _state["dtype"] = _DTYPES[bits]


def default_dtype():
    return _state["dtype"]


@contextlib.contextmanager
def no_grad():
    previous = _state["grad_enabled"]
    _state["grad_enabled"] = False
    try:
        yield
    finally:
        _state["grad_enabled"] = previous


class Tensor:

    """
    A numpy array that may take part in a recorded computation graph.
    Leaves created with requires_grad=True accumulate d(loss)/d(leaf) in
    `.grad` on every `backward`.
    """

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=default_dtype())
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_leaf(self):
        return self._backward is None

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        name = f" {self.name}" if self.name else ""
        return f"<Tensor{name} shape={self.shape} requires_grad={self.requires_grad}>"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward):
    # Records the node only when some input is tracked.
    out = Tensor(data)
    if _state["grad_enabled"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _reduce_to(grad, shape):
    # Sum a gradient over the leading axes it was broadcast along.
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    return grad


def _check_trailing(a, b, op):
    if a.shape[a.ndim - b.ndim:] != b.shape or b.ndim > a.ndim:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} are incompatible")


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_trailing(a.data, b.data, "add")

    def backward(g):
        return g, _reduce_to(g, b.shape)

    return _result(a.data + b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_trailing(a.data, b.data, "mul")

    def backward(g):
        return g * b.data, _reduce_to(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward)


def scale(x, c):
    x = as_tensor(x)
    return _result(x.data * c, (x,), lambda g: (g * c,))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: shapes {a.shape} and {b.shape} are incompatible")
    if b.data.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeMismatch(f"matmul: batch shapes {a.shape} and {b.shape} differ")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, _reduce_to(gb, b.shape)

    return _result(a.data @ b.data, (a, b), backward)


def transpose_last_two(x):
    x = as_tensor(x)
    return _result(np.swapaxes(x.data, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),))


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return _result(x.data * mask, (x,), lambda g: (g * mask,))


def softmax(x):
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return _result(s, (x,), backward)


def log_softmax(x):
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    s = np.exp(out)

    def backward(g):
        return (g - s * g.sum(axis=-1, keepdims=True),)

    return _result(out, (x,), backward)


def layer_norm(x, gain, bias, eps=1e-6):

    """LayerNorm over the last axis: gain * (x - mean) / sqrt(var + eps) + bias."""

    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeMismatch(f"layer_norm: input {x.shape}, gain {gain.shape}, bias {bias.shape}")

    mean = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mean
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std

    def backward(g):
        dxhat = g * gain.data
        dx = inv_std / d * (d * dxhat
                            - dxhat.sum(axis=-1, keepdims=True)
                            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        return dx, _reduce_to(g * xhat, gain.shape), _reduce_to(g, bias.shape)

    return _result(xhat * gain.data + bias.data, (x, gain, bias), backward)


def embedding_lookup(table, ids):
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeMismatch(f"embedding_lookup: table shape {table.shape} is not 2-d")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeMismatch(f"embedding_lookup: ids outside [0, {table.shape[0]}) for table {table.shape}")

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _result(table.data[ids], (table,), backward)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeMismatch(f"concat: shapes {ref} and {t.shape} differ off axis {axis}")

    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _result(np.concatenate([t.data for t in tensors], axis=ax), tensors, backward)


def slice_last(x, start, stop):
    x = as_tensor(x)
    if not 0 <= start < stop <= x.shape[-1]:
        raise ShapeMismatch(f"slice_last: [{start}, {stop}) outside width {x.shape[-1]}")

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[..., start:stop] = g
        return (gx,)

    return _result(x.data[..., start:stop], (x,), backward)


def sum_all(x):
    x = as_tensor(x)
    return _result(x.data.sum(), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def dropout(x, rate, train_mode, rng=None):

    """
    Inverted dropout: in train mode each element is zeroed with probability
    `rate` and survivors are scaled by 1/(1-rate); in eval mode the identity.
    """

    x = as_tensor(x)
    if not 0 <= rate < 1:
        raise SrlError(f"dropout rate {rate} outside [0, 1)")
    if not train_mode or rate == 0:
        return x
    if rng is None:
        raise SrlError("dropout in train mode needs an rng")

    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _result(x.data * mask, (x,), lambda g: (g * mask,))


def _topological(loss):
    order, seen = [], set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss):

    """
    Populate `.grad` of every tracked leaf reachable from a scalar loss.
    Interior nodes release their graph records afterwards.
    """

    if loss.data.size != 1 or loss.data.ndim != 0:
        raise NotScalarLoss(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise NotScalarLoss("the loss is not graph-tracked")

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
        node._parents = ()
        node._backward = None
        node.requires_grad = False


@dataclass
class GradCheckReport:
    errors: Dict[str, float] = field(default_factory=dict)
    tol: float = 1e-4

    @property
    def max_error(self):
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self):
        return self.max_error < self.tol


def grad_check(f, inputs, h=1e-5, tol=1e-4, floor=1e-3, max_elements=None, seed=0):

    """
    Compare analytic gradients with central finite differences.

    Parameters:
    -----------
    f (callable): f(*inputs) -> Tensor. Must be deterministic (no dropout).
    inputs (list of Tensor): Leaves to differentiate; perturbed in place and restored.
    h (float): Finite-difference step.
    tol (float): Pass threshold on the maximum relative error.
    floor (float): Lower bound of the relative-error denominator, so that
        near-zero gradients are compared absolutely.
    max_elements (int or None): If set, check a random subset of this many
        elements per input.
    seed (int): Seed for the output projection and element sampling.

    Returns:
    --------
    A GradCheckReport with the max relative error per input.
    """

    rng = np.random.default_rng(seed)
    for t in inputs:
        t.requires_grad = True
        t.zero_grad()

    out = f(*inputs)
    weights = rng.uniform(-1.0, 1.0, size=out.shape)
    backward(sum_all(mul(out, weights)))
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in inputs]

    def objective():
        with no_grad():
            return float((f(*inputs).data * weights).sum())

    report = GradCheckReport(tol=tol)
    for k, (t, a) in enumerate(zip(inputs, analytic)):
        flat = t.data.reshape(-1)
        positions = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            positions = rng.choice(flat.size, max_elements, replace=False)

        worst = 0.0
        for pos in positions:
            original = flat[pos]
            flat[pos] = original + h
            up = objective()
            flat[pos] = original - h
            down = objective()
            flat[pos] = original
            numeric = (up - down) / (2 * h)
            exact = a.reshape(-1)[pos]
            err = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
            worst = max(worst, err)

        report.errors[t.name or f"input{k}"] = worst

    for t in inputs:
        t.zero_grad()
    return report


def save_archive(directory, arrays):

    """
    Write named arrays as `params.bin` (little-endian float64 payloads) and
    `params.manifest` (one `name shape dtype offset` line per array).
    """

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    offset = 0
    with open(directory / "params.bin", "wb") as payload, \
            open(directory / "params.manifest", "w", encoding="utf-8") as manifest:
        for name, array in arrays.items():
            data = np.ascontiguousarray(np.asarray(array, dtype="<f8"))
            shape = "x".join(str(d) for d in data.shape) or "scalar"
            manifest.write(f"{name} {shape} <f8 {offset}\n")
            payload.write(data.tobytes())
            offset += data.nbytes
    logger.debug("wrote %d arrays (%d bytes) to %s", len(arrays), offset, directory)


def load_archive(directory):
    directory = Path(directory)
    raw = (directory / "params.bin").read_bytes()
    arrays = {}
    with open(directory / "params.manifest", "r", encoding="utf-8") as manifest:
        for line in manifest:
            if not line.strip():
                continue
            name, shape, dtype, offset = line.split()
            shape = () if shape == "scalar" else tuple(int(d) for d in shape.split("x"))
            count = int(np.prod(shape)) if shape else 1
            arrays[name] = np.frombuffer(raw, dtype=dtype, count=count, offset=int(offset)).reshape(shape).copy()
    return arrays
