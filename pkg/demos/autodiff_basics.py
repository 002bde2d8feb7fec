"""
Reverse-mode autodiff from the ground up
========================================

A tour of the tensor engine: build a graph, call backward, compare with
central differences, then fit a small MLP with Adam.

Run with ``python demos/autodiff_basics.py``.
"""

# %%
# Every operation records its parents and a backward rule. ``backward``
# walks the graph once in reverse topological order.
import numpy as np

from hintnet.autodiff import MLP, Adam, GraphError, Tensor, backward, mean, tsum

x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
y = tsum(x * x + 3.0 * x)
backward(y)
print("y =", y.item(), " dy/dx =", x.grad, " expected", 2 * x.data + 3)

# %%
# Central differences give an independent check of any gradient.
def f(v):
    return np.sum(v * v + 3.0 * v)


h = 1e-5
numeric = np.array([(f(x.data + h * e) - f(x.data - h * e)) / (2 * h) for e in np.eye(3)])
print("finite differences:", numeric)

# %%
# A graph can be differentiated once; a second backward raises GraphError
# instead of silently doubling gradients.
try:
    backward(y)
except GraphError as exc:
    print("second backward:", type(exc).__name__)

# %%
# Fit sin(3x) on [-1, 1] with a two-layer MLP and Adam.
rng = np.random.default_rng(0)
xs = np.linspace(-1, 1, 128)[:, None]
ys = np.sin(3 * xs)
net = MLP(1, (32, 32), 1, rng)
opt = Adam(dict(net.named_parameters()), lr=1e-2)
for step in range(1, 1501):
    loss = mean((net(Tensor(xs)) - ys) ** 2)
    opt.zero_grad()
    backward(loss)
    opt.step()
    if step % 300 == 0:
        print(f"step {step:5d}  mse {loss.item():.5f}")
