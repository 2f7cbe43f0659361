# core/autodiff/tensor.py
"""
Tensor and Computation Tape
---------------------------
Dense NCHW tensors backed by numpy arrays, and a tape that records executed
operators so gradients can be replayed in reverse execution order.
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import ShapeError

logger = logging.getLogger("core.autodiff")

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_local = threading.local()


class Tensor:
    """
    Immutable-by-convention dense array.

    Leaves created with ``requires_grad=True`` are parameters; after
    ``backward`` their gradient is available in ``.grad``. Operator outputs
    are never written after construction.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None,
                 dtype=None):
        array = np.asarray(data, dtype=dtype)
        if array.dtype.kind != "f":
            array = array.astype(np.float32 if dtype is None else dtype)
        self.data = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item() requires a single-element tensor", self.shape)
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, name=self.name)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad, name=self.name)

    def __repr__(self):
        label = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"


@dataclass
class TapeNode:
    """One executed operator: inputs, output and its vector-Jacobian product."""

    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward_fn: BackwardFn


@dataclass
class ComputationTape:
    """Ordered record of executed operators."""

    nodes: List[TapeNode] = field(default_factory=list)

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward_fn: BackwardFn):
        self.nodes.append(TapeNode(op, tuple(inputs), output, backward_fn))

    def __len__(self):
        return len(self.nodes)

    def __enter__(self) -> "ComputationTape":
        stack = _tape_stack()
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _tape_stack().pop()
        return False


def _tape_stack() -> List[ComputationTape]:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_tape() -> Optional[ComputationTape]:
    """Innermost tape of the current thread, if recording."""
    stack = _tape_stack()
    return stack[-1] if stack else None


def record(op: str, inputs: Sequence[Tensor], output_data: np.ndarray,
           backward_fn: BackwardFn) -> Tensor:
    """
    Wrap an operator result and record it on the active tape.

    Nothing is recorded when no tape is active or when no input needs a
    gradient, so inference runs carry no bookkeeping.
    """
    out = Tensor(output_data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(op, inputs, out, backward_fn)
    return out


def backward(tape: ComputationTape, loss: Tensor) -> Dict[int, np.ndarray]:
    """
    Replay the tape in reverse and accumulate gradients.

    Args:
        tape: Tape the loss was recorded on
        loss: Single-element tensor produced by recorded operators

    Returns:
        Mapping from ``id(tensor)`` to gradient for every tensor reached.
        Leaf tensors with ``requires_grad`` also get ``.grad`` set.
    """
    if loss.size != 1:
        raise ShapeError("backward requires a scalar loss", loss.shape)

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    produced = {id(node.output) for node in tape.nodes}
    leaves: Dict[int, Tensor] = {}

    for node in reversed(tape.nodes):
        g_out = grads.get(id(node.output))
        if g_out is None:
            continue
        input_grads = node.backward_fn(g_out)
        for t, g in zip(node.inputs, input_grads):
            if g is None or not t.requires_grad:
                continue
            if g.shape != t.shape:
                raise ShapeError(f"gradient shape mismatch in '{node.op}'", g.shape, t.shape)
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g
            if key not in produced:
                leaves[key] = t

    for key, t in leaves.items():
        t.grad = grads[key]
    logger.debug(f"Backward over {len(tape)} nodes, {len(leaves)} leaf gradients")
    return grads
