"""Dense float64 tensors with a dynamic tape for reverse-mode gradients.

Every differentiable operation is registered in ``_OPS`` under its kind name
with a forward rule and an adjoint rule, Wengert-list style. ``forward_op``
evaluates a kind and, when a ``Tape`` is active and any input requires a
gradient, appends a node to that tape. ``backward`` walks the tape once in
reverse order and returns a ``GradientMap`` keyed by leaf tensor name.
"""
from __future__ import annotations

import contextvars
import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import (
    ContractError,
    DegenerateSimilarityError,
    DimensionError,
    DomainError,
    NumericError,
)

logger = logging.getLogger(__name__)

ArrayLike = Union[float, int, Sequence, np.ndarray]

_name_counter = itertools.count()
_ACTIVE_TAPE: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar(
    "physe_inv_active_tape", default=None
)


class Tensor:
    """A dense float64 array that may take part in gradient recording."""

    __array_priority__ = 1000  # ndarray <op> Tensor dispatches to Tensor's reflected ops

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
        *,
        copy: bool = True,
        check_finite: bool = True,
    ):
        array = np.array(data, dtype=np.float64) if copy else np.asarray(data, dtype=np.float64)
        if check_finite and not np.all(np.isfinite(array)):
            raise NumericError(f"Tensor '{name or 'unnamed'}' contains non-finite values")
        self.data = array
        self.requires_grad = bool(requires_grad)
        self.name = name if name is not None else f"tensor_{next(_name_counter)}"

    # --- introspection ---------------------------------------------------
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def values(self) -> np.ndarray:
        """Row-major flat view of the data."""
        return self.data.ravel()

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() requires a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self) -> str:
        return f"Tensor(name={self.name!r}, shape={self.shape}, requires_grad={self.requires_grad})"

    # --- arithmetic sugar ------------------------------------------------
    def __add__(self, other): return forward_op("add", [self, other])
    def __radd__(self, other): return forward_op("add", [other, self])
    def __sub__(self, other): return forward_op("sub", [self, other])
    def __rsub__(self, other): return forward_op("sub", [other, self])
    def __mul__(self, other): return forward_op("mul", [self, other])
    def __rmul__(self, other): return forward_op("mul", [other, self])
    def __truediv__(self, other): return forward_op("div", [self, other])
    def __rtruediv__(self, other): return forward_op("div", [other, self])
    def __matmul__(self, other): return forward_op("matmul", [self, other])
    def __rmatmul__(self, other): return forward_op("matmul", [other, self])
    def __neg__(self): return forward_op("mul", [self, -1.0])

    def __pow__(self, exponent: float):
        return forward_op("power", [self], exponent=float(exponent))

    def __getitem__(self, index):
        return forward_op("slice", [self], index=index)

    def sigmoid(self): return forward_op("sigmoid", [self])
    def tanh(self): return forward_op("tanh", [self])
    def exp(self): return forward_op("exp", [self])
    def log(self): return forward_op("log", [self])
    def relu(self): return forward_op("relu", [self])
    def row_softmax(self): return forward_op("row_softmax", [self])

    def clip(self, low: float, high: float):
        return forward_op("clip", [self], low=float(low), high=float(high))

    def sum(self, axis=None, keepdims: bool = False):
        return forward_op("sum", [self], axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return forward_op("mean", [self], axis=axis, keepdims=keepdims)

    def transpose(self, axes: Optional[Sequence[int]] = None):
        return forward_op("transpose", [self], axes=None if axes is None else tuple(axes))

    def reshape(self, shape: Sequence[int]):
        return forward_op("reshape", [self], shape=tuple(shape))


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    """Wraps constants; tensors pass through untouched."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False, name="const")


class GradientMap(dict):
    """Gradients keyed by parameter name; shapes equal the parameter shapes."""

    def of(self, tensor: Tensor) -> np.ndarray:
        grad = self.get(tensor.name)
        return np.zeros_like(tensor.data) if grad is None else grad


@dataclass
class TapeNode:
    index: int
    kind: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    saved: Dict[str, Any] = field(default_factory=dict)
    attrs: Dict[str, Any] = field(default_factory=dict)


class Tape:
    """Ordered record of operations; active inside a ``with`` block.

    A tape belongs to a single worker. Parallel evaluations each open their own.
    """

    def __init__(self):
        self.nodes: List[TapeNode] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, kind: str, inputs: Tuple[Tensor, ...], output: Tensor,
               saved: Dict[str, Any], attrs: Dict[str, Any]) -> int:
        node = TapeNode(len(self.nodes), kind, inputs, output, saved, attrs)
        self.nodes.append(node)
        return node.index

    def reset(self) -> None:
        self.nodes.clear()


def active_tape() -> Optional[Tape]:
    return _ACTIVE_TAPE.get()


# --- operation registry ---------------------------------------------------

@dataclass(frozen=True)
class OpSpec:
    forward: Callable[..., Tuple[np.ndarray, Dict[str, Any]]]
    backward: Callable[..., Tuple[Optional[np.ndarray], ...]]
    arity: Optional[int]


_OPS: Dict[str, OpSpec] = {}


def _register(kind: str, arity: Optional[int]):
    def wrap(pair):
        fwd, bwd = pair()
        _OPS[kind] = OpSpec(fwd, bwd, arity)
        return pair
    return wrap


def op_kinds() -> List[str]:
    return sorted(_OPS)


def _broadcast_shape(kind: str, a: np.ndarray, b: np.ndarray) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{kind}: shapes {a.shape} and {b.shape} do not broadcast") from None


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _reduced_axes(ndim: int, axis) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(sorted(a % ndim for a in axes))


def _expand_reduced(grad: np.ndarray, shape: Tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if not keepdims:
        for a in _reduced_axes(len(shape), axis):
            grad = np.expand_dims(grad, a)
    return np.broadcast_to(grad, shape).copy()


def _swap_last(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


@_register("matmul", 2)
def _matmul():
    def fwd(a, b):
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise DimensionError(f"matmul: inner dimensions disagree for shapes {a.shape} and {b.shape}")
        try:
            return np.matmul(a, b), {}
        except ValueError:
            raise DimensionError(f"matmul: batch dimensions disagree for shapes {a.shape} and {b.shape}") from None

    def bwd(g, inputs, out, saved, attrs):
        a, b = inputs
        return np.matmul(g, _swap_last(b)), np.matmul(_swap_last(a), g)
    return fwd, bwd


@_register("add", 2)
def _add():
    def fwd(a, b):
        _broadcast_shape("add", a, b)
        return a + b, {}

    def bwd(g, inputs, out, saved, attrs):
        return g, g
    return fwd, bwd


@_register("sub", 2)
def _sub():
    def fwd(a, b):
        _broadcast_shape("sub", a, b)
        return a - b, {}

    def bwd(g, inputs, out, saved, attrs):
        return g, -g
    return fwd, bwd


@_register("mul", 2)
def _mul():
    def fwd(a, b):
        _broadcast_shape("mul", a, b)
        return a * b, {}

    def bwd(g, inputs, out, saved, attrs):
        a, b = inputs
        return g * b, g * a
    return fwd, bwd


@_register("div", 2)
def _div():
    def fwd(a, b):
        _broadcast_shape("div", a, b)
        if np.any(b == 0.0):
            raise DomainError(f"div: divisor contains zeros (shape {b.shape})")
        return a / b, {}

    def bwd(g, inputs, out, saved, attrs):
        a, b = inputs
        return g / b, -g * a / (b * b)
    return fwd, bwd


@_register("sigmoid", 1)
def _sigmoid():
    def fwd(x):
        z = np.exp(-np.abs(x))
        return np.where(x >= 0.0, 1.0 / (1.0 + z), z / (1.0 + z)), {}

    def bwd(g, inputs, out, saved, attrs):
        return (g * out * (1.0 - out),)
    return fwd, bwd


@_register("tanh", 1)
def _tanh():
    def fwd(x):
        return np.tanh(x), {}

    def bwd(g, inputs, out, saved, attrs):
        return (g * (1.0 - out * out),)
    return fwd, bwd


@_register("exp", 1)
def _exp():
    def fwd(x):
        if np.any(x > 709.0):
            raise DomainError(f"exp: argument {float(np.max(x)):.6g} overflows float64")
        return np.exp(x), {}

    def bwd(g, inputs, out, saved, attrs):
        return (g * out,)
    return fwd, bwd


@_register("log", 1)
def _log():
    def fwd(x):
        if np.any(x <= 0.0):
            raise DomainError("log: argument must be strictly positive")
        return np.log(x), {}

    def bwd(g, inputs, out, saved, attrs):
        return (g / inputs[0],)
    return fwd, bwd


@_register("power", 1)
def _power():
    def fwd(x, exponent: float):
        if not float(exponent).is_integer() and np.any(x < 0.0):
            raise DomainError(f"power: negative base with non-integer exponent {exponent}")
        if exponent < 0.0 and np.any(x == 0.0):
            raise DomainError(f"power: zero base with negative exponent {exponent}")
        return np.power(x, exponent), {}

    def bwd(g, inputs, out, saved, attrs):
        p = attrs["exponent"]
        return (g * p * np.power(inputs[0], p - 1.0),)
    return fwd, bwd


@_register("relu", 1)
def _relu():
    def fwd(x):
        return np.maximum(x, 0.0), {}

    def bwd(g, inputs, out, saved, attrs):
        return (g * (inputs[0] > 0.0),)
    return fwd, bwd


@_register("clip", 1)
def _clip():
    def fwd(x, low: float, high: float):
        if low > high:
            raise ContractError(f"clip: low {low} exceeds high {high}")
        return np.clip(x, low, high), {}

    def bwd(g, inputs, out, saved, attrs):
        x = inputs[0]
        return (g * ((x >= attrs["low"]) & (x <= attrs["high"])),)
    return fwd, bwd


@_register("sum", 1)
def _sum():
    def fwd(x, axis=None, keepdims=False):
        return np.sum(x, axis=axis, keepdims=keepdims), {}

    def bwd(g, inputs, out, saved, attrs):
        return (_expand_reduced(g, inputs[0].shape, attrs.get("axis"), attrs.get("keepdims", False)),)
    return fwd, bwd


@_register("mean", 1)
def _mean():
    def fwd(x, axis=None, keepdims=False):
        if x.size == 0:
            raise ContractError("mean: empty tensor")
        return np.mean(x, axis=axis, keepdims=keepdims), {}

    def bwd(g, inputs, out, saved, attrs):
        x = inputs[0]
        axes = _reduced_axes(x.ndim, attrs.get("axis"))
        count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
        return (_expand_reduced(g, x.shape, attrs.get("axis"), attrs.get("keepdims", False)) / count,)
    return fwd, bwd


@_register("concat", None)
def _concat():
    def fwd(*arrays, axis=0):
        if not arrays:
            raise ContractError("concat: no inputs")
        try:
            out = np.concatenate(arrays, axis=axis)
        except ValueError:
            shapes = [a.shape for a in arrays]
            raise DimensionError(f"concat: shapes {shapes} disagree off axis {axis}") from None
        return out, {"sizes": [a.shape[axis] for a in arrays]}

    def bwd(g, inputs, out, saved, attrs):
        cuts = np.cumsum(saved["sizes"])[:-1]
        return tuple(np.split(g, cuts, axis=attrs.get("axis", 0)))
    return fwd, bwd


@_register("slice", 1)
def _slice():
    def fwd(x, index):
        try:
            return np.array(x[index]), {}
        except IndexError as exc:
            raise DimensionError(f"slice: index {index!r} invalid for shape {x.shape}: {exc}") from None

    def bwd(g, inputs, out, saved, attrs):
        grad = np.zeros_like(inputs[0])
        grad[attrs["index"]] = g
        return (grad,)
    return fwd, bwd


@_register("transpose", 1)
def _transpose():
    def fwd(x, axes=None):
        if axes is not None and sorted(axes) != list(range(x.ndim)):
            raise DimensionError(f"transpose: axes {axes} invalid for shape {x.shape}")
        return np.transpose(x, axes), {}

    def bwd(g, inputs, out, saved, attrs):
        axes = attrs.get("axes")
        inverse = None if axes is None else tuple(np.argsort(axes))
        return (np.transpose(g, inverse),)
    return fwd, bwd


@_register("reshape", 1)
def _reshape():
    def fwd(x, shape):
        try:
            return np.reshape(x, shape).copy(), {}
        except ValueError:
            raise DimensionError(f"reshape: cannot reshape {x.shape} into {shape}") from None

    def bwd(g, inputs, out, saved, attrs):
        return (g.reshape(inputs[0].shape),)
    return fwd, bwd


@_register("row_softmax", 1)
def _row_softmax():
    def fwd(x):
        shifted = np.exp(x - np.max(x, axis=-1, keepdims=True))
        return shifted / np.sum(shifted, axis=-1, keepdims=True), {}

    def bwd(g, inputs, out, saved, attrs):
        return (out * (g - np.sum(g * out, axis=-1, keepdims=True)),)
    return fwd, bwd


@_register("dropout", 1)
def _dropout():
    def fwd(x, rate: float = 0.0, train: bool = False, rng: Optional[np.random.Generator] = None):
        if not 0.0 <= rate < 1.0:
            raise ContractError(f"dropout: rate {rate} outside [0, 1)")
        if not train or rate == 0.0:
            return x.copy(), {"mask": None}
        if rng is None:
            raise ContractError("dropout: train mode requires a random generator")
        keep = 1.0 - rate
        mask = (rng.random(x.shape) < keep) / keep
        return x * mask, {"mask": mask}

    def bwd(g, inputs, out, saved, attrs):
        mask = saved["mask"]
        return (g if mask is None else g * mask,)
    return fwd, bwd


COSINE_NORM_FLOOR = 1e-12


@_register("cosine_similarity", 2)
def _cosine_similarity():
    def fwd(a, b):
        if a.shape[-1] != b.shape[-1]:
            raise DimensionError(f"cosine_similarity: feature sizes differ for {a.shape} and {b.shape}")
        _broadcast_shape("cosine_similarity", a, b)
        na = np.linalg.norm(a, axis=-1, keepdims=True)
        nb = np.linalg.norm(b, axis=-1, keepdims=True)
        if np.any(na < COSINE_NORM_FLOOR) or np.any(nb < COSINE_NORM_FLOOR):
            raise DegenerateSimilarityError("cosine_similarity: zero-norm embedding")
        sim = np.sum(a * b, axis=-1) / (na * nb)[..., 0]
        return sim, {"na": na, "nb": nb}

    def bwd(g, inputs, out, saved, attrs):
        a, b = inputs
        na, nb = saved["na"], saved["nb"]
        gs = g[..., None]
        s = out[..., None]
        ga = gs * (b / (na * nb) - s * a / (na * na))
        gb = gs * (a / (na * nb) - s * b / (nb * nb))
        return ga, gb
    return fwd, bwd


# --- public entry points --------------------------------------------------

def forward_op(kind: str, inputs: Iterable[Union[Tensor, ArrayLike]], tape: Optional[Tape] = None,
               **attrs) -> Tensor:
    """Evaluates ``kind`` and records it on the active tape when gradients are needed."""
    spec = _OPS.get(kind)
    if spec is None:
        raise ContractError(f"Unknown operation kind '{kind}'")
    tensors = tuple(as_tensor(t) for t in inputs)
    if spec.arity is not None and len(tensors) != spec.arity:
        raise ContractError(f"{kind}: expected {spec.arity} inputs, got {len(tensors)}")

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        data, saved = spec.forward(*(t.data for t in tensors), **attrs)
    data = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise NumericError(f"{kind}: produced non-finite values for input shapes {[t.shape for t in tensors]}")

    requires_grad = any(t.requires_grad for t in tensors)
    out = Tensor(data, requires_grad=requires_grad, name=f"{kind}_{next(_name_counter)}",
                 copy=False, check_finite=False)
    tape = tape if tape is not None else active_tape()
    if requires_grad and tape is not None:
        tape.record(kind, tensors, out, saved, attrs)
    return out


def concat(tensors: Sequence[Union[Tensor, ArrayLike]], axis: int = 0) -> Tensor:
    return forward_op("concat", tensors, axis=axis)


def cosine_similarity(a, b) -> Tensor:
    return forward_op("cosine_similarity", [a, b])


def dropout(x, rate: float, train: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    return forward_op("dropout", [x], rate=rate, train=train, rng=rng)


def backward(tape: Tape, loss: Tensor) -> GradientMap:
    """Gradients of a scalar ``loss`` for every requires_grad leaf on ``tape``.

    The tape is reset afterwards.
    """
    if loss.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")

    produced = {id(node.output) for node in tape.nodes}
    adjoints: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: Dict[int, Tensor] = {}
    if loss.requires_grad and id(loss) not in produced:
        leaves[id(loss)] = loss

    for node in reversed(tape.nodes):
        grad_out = adjoints.pop(id(node.output), None)
        if grad_out is None:
            continue
        spec = _OPS[node.kind]
        grads = spec.backward(grad_out, tuple(t.data for t in node.inputs), node.output.data,
                              node.saved, node.attrs)
        for tensor, grad in zip(node.inputs, grads):
            if grad is None or not tensor.requires_grad:
                continue
            grad = _unbroadcast(np.asarray(grad, dtype=np.float64), tensor.shape)
            key = id(tensor)
            adjoints[key] = adjoints[key] + grad if key in adjoints else grad
            if key not in produced:
                leaves[key] = tensor

    result = GradientMap()
    for key, tensor in leaves.items():
        result[tensor.name] = adjoints.get(key, np.zeros_like(tensor.data))
    logger.debug(f"Backward pass over {len(tape.nodes)} nodes produced {len(result)} gradients")
    tape.reset()
    return result
