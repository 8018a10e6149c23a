"""Dense tensors with a recorded tape for reverse-mode gradients.

Every op reads ``Tensor.data`` (a numpy array), computes its forward result,
and, when a :class:`ComputationTape` is active and any input requires grad,
records a node holding the backward rule. :func:`backward` replays the tape
in reverse recorded order. Outside a tape nothing is recorded, which is the
inference path.

Arrays are float32 by default; :func:`precision` switches newly created
tensors to float64 for tight gradient checks.
"""

from __future__ import annotations

import contextvars
import math
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import erf

from config import get_settings
from core.foundation import ContractViolationError, DimensionError, NumericalError

settings = get_settings()

# Additive attention mask; exp() of it underflows to exactly 0 in float32.
MASK_FILL = -1e9

_DTYPE: contextvars.ContextVar[type] = contextvars.ContextVar("molcap_dtype", default=np.float32)
_ACTIVE_TAPE: contextvars.ContextVar[Optional["ComputationTape"]] = contextvars.ContextVar(
    "molcap_tape", default=None
)

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]
BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def default_dtype() -> type:
    return _DTYPE.get()


@contextmanager
def precision(name: str) -> Iterator[None]:
    """Create new tensors as ``float32`` or ``float64`` inside the block."""
    dtypes = {"float32": np.float32, "float64": np.float64}
    if name not in dtypes:
        raise ValueError(f"precision must be one of {sorted(dtypes)}")
    token = _DTYPE.set(dtypes[name])
    try:
        yield
    finally:
        _DTYPE.reset(token)


class Tensor:
    """Rank 0..4 float array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        name: Optional[str] = None,
        dtype: Optional[type] = None,
    ):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            dtype = default_dtype()
        # np.require keeps rank-0 scalars rank-0.
        array = np.require(np.asarray(data, dtype=dtype), requirements="C")
        if array.ndim > 4:
            raise DimensionError("tensor", [array.shape], "rank above 4 is not supported")
        self.data: np.ndarray = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.item())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return add(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return mul(other, self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


@dataclass
class TapeNode:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardRule


class ComputationTape:
    """Ordered record of differentiable ops run while the tape is active.

    Use as a context manager; ops inside the block that touch a
    ``requires_grad`` tensor are appended in execution order.
    """

    def __init__(self) -> None:
        self.nodes: List[TapeNode] = []
        self._token: Optional[contextvars.Token] = None

    def __enter__(self) -> "ComputationTape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc_info: object) -> None:
        if self._token is not None:
            _ACTIVE_TAPE.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self.nodes)

    def produced(self, tensor: Tensor) -> bool:
        return any(node.output is tensor for node in self.nodes)

    def leaves(self) -> List[Tensor]:
        """requires_grad inputs not produced by any recorded op, in first-use order."""
        produced = {id(node.output) for node in self.nodes}
        seen: set = set()
        leaves: List[Tensor] = []
        for node in self.nodes:
            for tensor in node.inputs:
                key = id(tensor)
                if tensor.requires_grad and key not in produced and key not in seen:
                    seen.add(key)
                    leaves.append(tensor)
        return leaves


def _as_tensor(value: ArrayLike, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype.type if like is not None else None
    return Tensor(value, dtype=dtype)


def _emit(op: str, inputs: Sequence[Tensor], data: np.ndarray, rule: BackwardRule) -> Tensor:
    if settings.debug and not np.all(np.isfinite(data)):
        raise NumericalError(op)
    tape = _ACTIVE_TAPE.get()
    track = tape is not None and any(tensor.requires_grad for tensor in inputs)
    out = Tensor(data, requires_grad=track, dtype=inputs[0].dtype.type if inputs else None)
    if track:
        tape.nodes.append(TapeNode(op=op, inputs=tuple(inputs), output=out, backward=rule))
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum out broadcast dimensions so grad matches shape."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ============================================================================
# ELEMENTWISE
# ============================================================================


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise DimensionError("add", [a.shape, b.shape], "cannot broadcast") from exc

    def rule(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit("add", (a, b), data, rule)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise DimensionError("mul", [a.shape, b.shape], "cannot broadcast") from exc

    def rule(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _emit("mul", (a, b), data, rule)


def scale(x: Tensor, factor: float) -> Tensor:
    factor_cast = x.dtype.type(factor)
    return _emit("scale", (x,), x.data * factor_cast, lambda g: (g * factor_cast,))


def gelu(x: Tensor) -> Tensor:
    """x * Phi(x) with the exact Gaussian CDF."""
    cdf = 0.5 * (1.0 + erf(x.data / math.sqrt(2.0)))
    data = (x.data * cdf).astype(x.dtype, copy=False)

    def rule(g: np.ndarray) -> Tuple[np.ndarray]:
        pdf = np.exp(-0.5 * x.data * x.data) / math.sqrt(2.0 * math.pi)
        return ((g * (cdf + x.data * pdf)).astype(x.dtype, copy=False),)

    return _emit("gelu", (x,), data, rule)


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Bernoulli keep-mask scaled by 1/(1-rate); identity when off."""
    if not training or rate <= 0.0:
        return x
    if rng is None:
        raise ContractViolationError("dropout", "training-mode dropout needs an rng")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return _emit("dropout", (x,), x.data * keep, lambda g: (g * keep,))


# ============================================================================
# LINEAR ALGEBRA / SHAPE
# ============================================================================


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError("matmul", [a.shape, b.shape], "inner dimensions differ")

    def rule(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return g @ b.data.T, a.data.T @ g

    return _emit("matmul", (a, b), a.data @ b.data, rule)


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise DimensionError("transpose", [x.shape], "expects a matrix")
    return _emit("transpose", (x,), np.ascontiguousarray(x.data.T), lambda g: (g.T,))


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    def rule(g: np.ndarray) -> Tuple[np.ndarray]:
        full = np.zeros_like(x.data)
        full[..., start:stop] = g
        return (full,)

    return _emit("slice_cols", (x,), x.data[..., start:stop], rule)


def _concat(op: str, tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ContractViolationError(op, "nothing to concatenate")
    try:
        data = np.concatenate([tensor.data for tensor in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(op, [tensor.shape for tensor in tensors], "incompatible shapes") from exc
    bounds = np.cumsum([tensor.shape[axis] for tensor in tensors])[:-1]

    def rule(g: np.ndarray) -> List[np.ndarray]:
        return np.split(g, bounds, axis=axis)

    return _emit(op, tuple(tensors), data, rule)


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    return _concat("concat_rows", tensors, axis=0)


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    return _concat("concat_cols", tensors, axis=-1)


def embedding(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of table; the backward scatter-adds in id order."""
    index = np.asarray(ids, dtype=np.int64)
    if index.ndim != 1:
        raise DimensionError("embedding", [index.shape], "ids must be one-dimensional")
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise ContractViolationError("embedding", f"id out of range for table with {table.shape[0]} rows")

    def rule(g: np.ndarray) -> Tuple[np.ndarray]:
        full = np.zeros_like(table.data)
        np.add.at(full, index, g)
        return (full,)

    return _emit("embedding", (table,), table.data[index], rule)


def total(x: Tensor) -> Tensor:
    """Sum of all entries as a rank-0 tensor."""
    return _emit("total", (x,), np.asarray(x.data.sum(), dtype=x.dtype), lambda g: (np.full_like(x.data, g),))


# ============================================================================
# NORMALIZATION / PROBABILITY
# ============================================================================


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis with max subtraction."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    probs = exps / exps.sum(axis=-1, keepdims=True)

    def rule(g: np.ndarray) -> Tuple[np.ndarray]:
        return (probs * (g - (g * probs).sum(axis=-1, keepdims=True)),)

    return _emit("softmax", (x,), probs, rule)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row standardization over the last axis, then affine gain/bias."""
    width = x.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise DimensionError("layer_norm", [x.shape, gain.shape, bias.shape], "gain/bias width differs")
    mean = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + x.dtype.type(eps))
    xhat = centered * inv_std
    data = xhat * gain.data + bias.data

    def rule(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        reduce_axes = tuple(range(g.ndim - 1))
        d_gain = (g * xhat).sum(axis=reduce_axes)
        d_bias = g.sum(axis=reduce_axes)
        d_xhat = g * gain.data
        d_x = inv_std * (
            d_xhat
            - d_xhat.mean(axis=-1, keepdims=True)
            - xhat * (d_xhat * xhat).mean(axis=-1, keepdims=True)
        )
        return d_x, d_gain, d_bias

    return _emit("layer_norm", (x, gain, bias), data, rule)


def xent_loss(logits: Tensor, targets: Sequence[int], pad_id: int) -> Tensor:
    """Mean of -log softmax(logits)[target] over non-PAD target positions."""
    target_ids = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or target_ids.shape != (logits.shape[0],):
        raise DimensionError("xent_loss", [logits.shape, target_ids.shape], "one target per logit row")
    keep = target_ids != pad_id
    count = int(keep.sum())
    if count == 0:
        raise ContractViolationError("xent_loss", "every target is PAD")
    if target_ids.min() < 0 or target_ids.max() >= logits.shape[1]:
        raise ContractViolationError("xent_loss", "target id outside the vocabulary")

    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_probs = shifted - log_norm
    rows = np.nonzero(keep)[0]
    picked = log_probs[rows, target_ids[rows]]
    value = np.asarray(-picked.sum() / count, dtype=logits.dtype)

    def rule(g: np.ndarray) -> Tuple[np.ndarray]:
        grad = np.exp(log_probs)
        grad[rows, target_ids[rows]] -= 1.0
        grad[~keep] = 0.0
        return (grad * (g / count),)

    return _emit("xent_loss", (logits,), value, rule)


# ============================================================================
# BACKWARD
# ============================================================================


def backward(tape: ComputationTape, loss: Tensor) -> None:
    """Populate ``grad`` on every requires_grad leaf of the tape.

    Leaf gradients accumulate across calls; zero them between optimizer steps.
    """
    if loss.data.size != 1:
        raise ContractViolationError("backward", f"loss must be scalar, got shape {loss.shape}")
    if not tape.produced(loss):
        raise ContractViolationError("backward", "loss was not recorded on this tape")

    pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        upstream = pending.pop(id(node.output), None)
        if upstream is None:
            continue
        for tensor, grad in zip(node.inputs, node.backward(upstream)):
            if grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            pending[key] = pending[key] + grad if key in pending else grad

    for leaf in tape.leaves():
        grad = pending.get(id(leaf))
        if grad is None:
            grad = np.zeros_like(leaf.data)
        grad = np.asarray(grad, dtype=leaf.dtype).reshape(leaf.shape)
        leaf.grad = grad.copy() if leaf.grad is None else leaf.grad + grad


def gradient_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-3,
    floor: float = 1e-3,
    max_entries: Optional[int] = None,
) -> float:
    """Max elementwise relative error between analytic and central-difference grads.

    ``loss_fn`` must rebuild the loss from the current parameter data. The
    relative error of one entry is |a - n| / max(|a|, |n|, floor).
    ``max_entries`` bounds the number of entries probed per parameter.
    """
    for param in params:
        param.zero_grad()
    with ComputationTape() as tape:
        loss = loss_fn()
    backward(tape, loss)

    worst = 0.0
    for param in params:
        analytic = param.grad if param.grad is not None else np.zeros_like(param.data)
        flat = param.data.reshape(-1)
        indices = range(flat.size) if max_entries is None else range(min(flat.size, max_entries))
        for index in indices:
            original = flat[index]
            flat[index] = original + h
            upper = loss_fn().item()
            flat[index] = original - h
            lower = loss_fn().item()
            flat[index] = original
            numeric = (upper - lower) / (2.0 * h)
            exact = float(analytic.reshape(-1)[index])
            denom = max(abs(exact), abs(numeric), floor)
            worst = max(worst, abs(exact - numeric) / denom)
    return worst
