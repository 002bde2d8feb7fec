"""Parameterised layers and the small module protocol the models are built from."""

from __future__ import annotations

from collections.abc import Iterator

import numpy as np

from .tensor import Tensor, conv2d, dense, global_avg_pool, max_pool2d, relu


class Module:
    """Anything owning named parameters.

    Subclasses register parameters as attributes holding :class:`Tensor` objects
    and sub-modules as attributes holding :class:`Module` objects; list-valued
    attributes are walked too. Names are dotted attribute paths.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            if key.startswith("_"):
                continue
            yield from _walk(value, f"{prefix}{key}")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def _walk(value, name: str):
    if isinstance(value, Tensor) and value.requires_grad:
        yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(prefix=name + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}")


def he_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, gain: float = 1.0) -> np.ndarray:
    return rng.standard_normal(shape) * (gain * np.sqrt(2.0 / fan_in))


class Dense(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, gain: float = 1.0):
        self.weight = Tensor(he_normal(rng, (n_in, n_out), n_in, gain), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True)

    @property
    def n_in(self) -> int:
        return self.weight.shape[0]

    @property
    def n_out(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        return dense(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(
        self,
        c_in: int,
        c_out: int,
        k: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int | None = None,
    ):
        self.kernel = Tensor(he_normal(rng, (c_out, c_in, k, k), c_in * k * k), requires_grad=True)
        self.bias = Tensor(np.zeros(c_out), requires_grad=True)
        self._stride = stride
        self._padding = (k - stride) // 2 if padding is None else padding

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.kernel, self.bias, stride=self._stride, padding=self._padding)


class ConvBlock(Module):
    """conv -> relu -> 2x2 max pool."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, k: int = 3, stride: int = 1):
        self.conv = Conv2d(c_in, c_out, k, rng, stride=stride)

    def __call__(self, x: Tensor) -> Tensor:
        return max_pool2d(relu(self.conv(x)), 2)


class MLP(Module):
    """Stack of relu hidden layers followed by a linear output layer."""

    def __init__(
        self,
        n_in: int,
        hidden: tuple[int, ...],
        n_out: int,
        rng: np.random.Generator,
        out_gain: float = 1.0,
    ):
        widths = (n_in, *hidden)
        self.hidden = [Dense(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]
        self.out = Dense(widths[-1], n_out, rng, gain=out_gain)

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.hidden:
            x = relu(layer(x))
        return self.out(x)


__all__ = ["Module", "Dense", "Conv2d", "ConvBlock", "MLP", "he_normal", "global_avg_pool"]
