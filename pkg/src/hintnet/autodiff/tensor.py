"""Define-by-run reverse-mode automatic differentiation over float64 numpy arrays.

Every operation on :class:`Tensor` records its parents and a closure that
propagates the output gradient back to them. :func:`backward` sorts the
recorded graph topologically and runs each closure exactly once. The graph is
released afterwards, so a second ``backward`` over the same forward pass raises
instead of silently accumulating.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording for the current thread."""
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class GraphError(RuntimeError):
    """Raised when backward is requested on a graph that cannot be replayed."""


class Tensor:
    """A float64 array that may take part in a recorded computation."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64, order="C")
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._released = False

    # -- bookkeeping -------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        # never mutate in place: the same array may have been handed to another leaf
        g = np.asarray(g)
        if g.shape != self.shape and g.size == self.size:
            g = g.reshape(self.shape)
        if self.grad is None:
            owned = isinstance(g, np.ndarray) and g.flags.owndata and g.flags.c_contiguous
            self.grad = g if owned and g.shape == self.shape else np.array(np.broadcast_to(g, self.shape))
        else:
            self.grad = self.grad + g

    def backward(self) -> None:
        backward(self)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return mul(self, power(as_tensor(other), -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p: float):
        return power(self, p)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # sum out the axes numpy broadcasting added or stretched
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise -------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), grad_fn)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), grad_fn)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def grad_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), grad_fn)


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    out = a.data**p

    def grad_fn(g):
        return (g * p * a.data ** (p - 1),)

    return _make(out, (a,), grad_fn)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,))


# -- reductions and shape ----------------------------------------------------


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _make(out, (a,), grad_fn)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def take(a, index) -> Tensor:
    """Basic or advanced indexing; gradients scatter back with ``np.add.at``."""
    a = as_tensor(a)

    def grad_fn(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(a.data[index], (a,), grad_fn)


def concat(tensors, axis: int = 0) -> Tensor:
    """Join tensors along ``axis``; every other axis must agree."""
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ValueError(f"concat: shapes {ref} and {t.shape} differ off axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _make(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), grad_fn)


# -- linear algebra and layers ---------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def grad_fn(g):
        return g @ b.data.T, a.data.T @ g

    return _make(a.data @ b.data, (a, b), grad_fn)


def dense(x, weights, bias=None) -> Tensor:
    """Affine map ``x @ weights + bias`` for ``x`` of shape (batch, in)."""
    x, weights = as_tensor(x), as_tensor(weights)
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ValueError(f"dense: input {x.shape} does not conform to weights {weights.shape}")
    if bias is None:
        return matmul(x, weights)
    bias = as_tensor(bias)
    if bias.shape != (weights.shape[1],):
        raise ValueError(f"dense: bias {bias.shape} does not match {weights.shape[1]} outputs")
    out = x.data @ weights.data
    out += bias.data

    def grad_fn(g):
        gx = g @ weights.data.T if x.requires_grad else None
        return gx, x.data.T @ g, g.sum(axis=0)

    return _make(out, (x, weights, bias), grad_fn)


def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    span = size + 2 * padding - k
    if k > size + 2 * padding or span % stride:
        raise ValueError(
            f"conv: size {size}, kernel {k}, stride {stride}, padding {padding} "
            "does not give an integral output size"
        )
    return span // stride + 1


def conv2d(x, kernel, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate NCHW input with an (F, C, k, k) kernel."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4 or x.shape[1] != kernel.shape[1]:
        raise ValueError(f"conv2d: input {x.shape} does not conform to kernel {kernel.shape}")
    n, c, h, w = x.shape
    f, _, k, k2 = kernel.shape
    if k != k2:
        raise ValueError("conv2d: only square kernels are supported")
    ho = conv_output_size(h, k, stride, padding)
    wo = conv_output_size(w, k, stride, padding)
    patchify = stride == k and padding == 0
    if patchify:
        # non-overlapping windows: im2col is a reshape plus one transposing copy
        xp = x.data
        blocks = xp[:, :, : ho * k, : wo * k].reshape(n, c, ho, k, wo, k)
        cols = np.ascontiguousarray(blocks.transpose(0, 2, 4, 1, 3, 5)).reshape(n * ho * wo, c * k * k)
    else:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
        # win: (n, c, ho, wo, k, k)
        cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * k * k)
    kmat = kernel.data.reshape(f, c * k * k)
    out = cols @ kmat.T
    if bias is not None:
        bias = as_tensor(bias)
        out += bias.data
    out = np.ascontiguousarray(out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2))
    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def grad_fn(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, f)
        gk = (gmat.T @ cols).reshape(kernel.shape)
        gx = None
        if x.requires_grad:
            gcols = (gmat @ kmat).reshape(n, ho, wo, c, k, k)
            if patchify:
                gx = np.zeros_like(x.data)
                gx[:, :, : ho * k, : wo * k] = gcols.transpose(0, 3, 1, 4, 2, 5).reshape(n, c, ho * k, wo * k)
            else:
                gxp = np.zeros_like(xp)
                for i in range(k):
                    for j in range(k):
                        gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[
                            :, :, :, :, i, j
                        ].transpose(0, 3, 1, 2)
                gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        grads = (gx, gk)
        return grads if bias is None else grads + (gmat.sum(axis=0),)

    return _make(out, parents, grad_fn)


def max_pool2d(x, size: int = 2, stride: int | None = None) -> Tensor:
    """Max pooling over square windows; ties route the gradient to the first maximum."""
    x = as_tensor(x)
    stride = stride or size
    n, c, h, w = x.shape
    ho = conv_output_size(h, size, stride, 0)
    wo = conv_output_size(w, size, stride, 0)
    if stride == size and h == ho * size and w == wo * size:
        # non-overlapping windows: a reshape exposes them without copying
        blocks = x.data.reshape(n, c, ho, size, wo, size).transpose(0, 1, 2, 4, 3, 5)
        flat = blocks.reshape(n, c, ho, wo, size * size)
        arg = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

        def grad_fn(g):
            onehot = np.arange(size * size) == arg[..., None]
            gw = (onehot * g[..., None]).reshape(n, c, ho, wo, size, size)
            return (gw.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w),)

        return _make(out, (x,), grad_fn)

    win = sliding_window_view(x.data, (size, size), axis=(2, 3))[:, :, ::stride, ::stride]
    flat = win.reshape(n, c, ho, wo, size * size)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        di, dj = np.divmod(arg, size)
        rows = np.arange(ho)[None, None, :, None] * stride + di
        cols = np.arange(wo)[None, None, None, :] * stride + dj
        nn = np.arange(n)[:, None, None, None]
        cc = np.arange(c)[None, :, None, None]
        np.add.at(gx, (nn, cc, rows, cols), g)
        return (gx,)

    return _make(out, (x,), grad_fn)


def global_avg_pool(x) -> Tensor:
    """Average each channel over its spatial extent: (N, C, H, W) -> (N, C)."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    return _make(
        x.data.mean(axis=(2, 3)),
        (x,),
        lambda g: (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape),),
    )


# -- the backward pass -------------------------------------------------------


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring grad.

    Leaf gradients add onto whatever is already stored; call ``zero_grad`` between
    steps. Interior nodes are released after use.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._released:
        raise GraphError("graph already consumed by an earlier backward pass; rerun forward")
    if not loss.requires_grad:
        raise GraphError("loss does not depend on any tensor that requires grad")
    order = _topological(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if node._released:
            raise GraphError("graph already consumed by an earlier backward pass; rerun forward")
        if node._backward is None:
            if node.requires_grad and g is not None:
                node._accumulate(g)
            continue
        if g is not None:
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        node._backward = None
        node._parents = ()
        node._released = True
