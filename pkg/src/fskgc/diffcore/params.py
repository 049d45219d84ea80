"""Named parameter storage, Xavier init, Adam, and gradient evaluation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping

import numpy as np

from .tensor import Tensor


class ShapeMismatch(ValueError):
    pass


class ParameterSet(Mapping):
    """Ordered mapping of parameter name to float64 array.

    All arrays are views into one contiguous buffer (``flat``), which keeps
    optimizer updates and Reptile arithmetic vectorized. Shapes are fixed at
    construction; :meth:`assign` refuses to change them. Arithmetic helpers
    return new sets and never alias the operands.
    """

    def __init__(self, arrays: Mapping[str, np.ndarray] | None = None, *, _layout=None, _flat=None):
        if _layout is not None:
            self._layout = _layout
            self.flat = _flat
        else:
            layout = {}
            offset = 0
            items = [(k, np.asarray(v, dtype=np.float64)) for k, v in (arrays or {}).items()]
            for name, value in items:
                layout[name] = (offset, offset + value.size, value.shape)
                offset += value.size
            self._layout = layout
            self.flat = np.empty(offset)
            for name, value in items:
                start, stop, _ = layout[name]
                self.flat[start:stop] = value.reshape(-1)
        self._cache: dict[str, np.ndarray] = {}

    @property
    def _views(self) -> dict[str, np.ndarray]:
        return {k: self[k] for k in self._layout}

    def _like(self, flat: np.ndarray) -> "ParameterSet":
        return ParameterSet(_layout=self._layout, _flat=flat)

    def __getitem__(self, name: str) -> np.ndarray:
        view = self._cache.get(name)
        if view is None:
            start, stop, shape = self._layout[name]
            view = self._cache[name] = self.flat[start:stop].reshape(shape)
        return view

    def __iter__(self) -> Iterator[str]:
        return iter(self._layout)

    def __len__(self) -> int:
        return len(self._layout)

    def __repr__(self):
        return f"ParameterSet({len(self)} arrays, {self.size} values)"

    @property
    def size(self) -> int:
        return self.flat.size

    def shapes(self) -> dict[str, tuple]:
        return {k: shape for k, (_, _, shape) in self._layout.items()}

    def assign(self, name: str, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=np.float64)
        target = self[name]
        if value.shape != target.shape:
            raise ShapeMismatch(f"{name}: {value.shape} != {target.shape}")
        target[...] = value

    def copy(self) -> "ParameterSet":
        return self._like(self.flat.copy())

    snapshot = copy

    def restore(self, snap: "ParameterSet") -> None:
        """Overwrite every array in place with the values from ``snap``."""
        self.check_compatible(snap)
        self.flat[...] = snap.flat

    def check_compatible(self, other: Mapping[str, np.ndarray]) -> None:
        if isinstance(other, ParameterSet) and other._layout is self._layout:
            return
        if list(self) != list(other):
            missing = set(self) ^ set(other)
            raise ShapeMismatch(f"parameter names differ: {sorted(missing)}")
        for k, (_, _, shape) in self._layout.items():
            if np.shape(other[k]) != shape:
                raise ShapeMismatch(f"{k}: {np.shape(other[k])} != {shape}")

    def _flat_of(self, other: Mapping[str, np.ndarray]) -> np.ndarray:
        self.check_compatible(other)
        if isinstance(other, ParameterSet):
            return other.flat
        return np.concatenate([np.asarray(other[k], dtype=np.float64).reshape(-1) for k in self])

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "ParameterSet":
        return ParameterSet({k: fn(v) for k, v in self._views.items()})

    def zeros_like(self) -> "ParameterSet":
        return self._like(np.zeros_like(self.flat))

    def __add__(self, other: "ParameterSet") -> "ParameterSet":
        return self._like(self.flat + self._flat_of(other))

    def __sub__(self, other: "ParameterSet") -> "ParameterSet":
        return self._like(self.flat - self._flat_of(other))

    def scale(self, c: float) -> "ParameterSet":
        return self._like(c * self.flat)

    def allclose(self, other: "ParameterSet", **kw) -> bool:
        return list(self) == list(other) and np.allclose(self.flat, self._flat_of(other), **kw)

    def array_equal(self, other: "ParameterSet") -> bool:
        return list(self) == list(other) and np.array_equal(self.flat, self._flat_of(other))

    def norms(self) -> dict[str, float]:
        return {k: float(np.linalg.norm(v)) for k, v in self._views.items()}

    def leaves(self) -> dict[str, Tensor]:
        """Differentiable leaves over a private copy of the values."""
        snap = self.copy()
        return {k: Tensor(v, requires_grad=True) for k, v in snap._views.items()}

    def constants(self) -> dict[str, Tensor]:
        return {k: Tensor(v) for k, v in self._views.items()}


def mean_of(sets: list[ParameterSet]) -> ParameterSet:
    """Elementwise mean; sums in a fixed pairwise order for reproducibility."""
    if not sets:
        raise ValueError("mean of empty list")
    first = sets[0]
    flats = [first._flat_of(s) for s in sets]
    return first._like(_pairwise_sum(flats) / len(sets))


def _pairwise_sum(arrays: list[np.ndarray]) -> np.ndarray:
    if len(arrays) == 1:
        return arrays[0].copy()
    mid = len(arrays) // 2
    return _pairwise_sum(arrays[:mid]) + _pairwise_sum(arrays[mid:])


def xavier_init(shape: tuple, rng: np.random.Generator) -> np.ndarray:
    """Glorot uniform: U[-b, b] with b = sqrt(6 / (fan_in + fan_out)).

    For 1-d shapes both fans are the length; for ≥2-d shapes fan_out is the
    last axis and fan_in the product of the rest (im2col layout).
    """
    shape = tuple(int(d) for d in shape)
    if not shape or min(shape) < 1:
        raise ValueError(f"invalid shape {shape}")
    if len(shape) == 1:
        fan_in = fan_out = shape[0]
    else:
        fan_out = shape[-1]
        fan_in = int(np.prod(shape[:-1]))
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def value_and_grad(
    loss_fn: Callable[[dict[str, Tensor]], Tensor], params: ParameterSet
) -> tuple[float, ParameterSet]:
    """Evaluate ``loss_fn`` on differentiable leaves and backpropagate."""
    leaves = params.leaves()
    loss = loss_fn(leaves)
    if not loss.requires_grad:
        return float(loss.data), params.zeros_like()
    loss.backward()
    grads = params.zeros_like()
    for k, leaf in leaves.items():
        if leaf.grad is not None:
            start, stop, _ = params._layout[k]
            grads.flat[start:stop] = leaf.grad.reshape(-1)
    return float(loss.data), grads


@dataclass
class AdamState:
    m: ParameterSet
    v: ParameterSet
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params: ParameterSet, **kw) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), **kw)


def adam_step(
    params: ParameterSet, grads: ParameterSet, state: AdamState, lr: float
) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    g = params._flat_of(grads)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    m, v = state.m.flat, state.v.flat
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    denom = np.sqrt(v * (1.0 / c2))
    denom += state.eps
    params.flat -= (lr / c1) * m / denom


@dataclass
class SGDState:
    """Plain gradient descent; a drop-in for :class:`AdamState` in tests."""

    t: int = 0
    extra: dict = field(default_factory=dict)

    @classmethod
    def fresh(cls, params: ParameterSet, **kw) -> "SGDState":
        return cls()


def sgd_step(params: ParameterSet, grads: ParameterSet, state: SGDState, lr: float) -> None:
    state.t += 1
    params.flat -= lr * params._flat_of(grads)
