"""Dense float64 tensors with a per-forward-pass gradient tape.

Every differentiable operation records a backward rule onto the thread's
active :class:`Tape`. Operations append in execution order, so the tape is
topologically sorted by construction and a single reverse sweep populates
gradients for every tensor that requires them.
"""

import threading

import numpy as np

from ..errors import ContractViolation, InvalidShape

_tls = threading.local()


def _tape_stack():
    if not hasattr(_tls, "tapes"):
        _tls.tapes = []
    return _tls.tapes


def active_tape():
    """The innermost open tape on this thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """A dense n-dimensional float64 array with an optional gradient slot.

    ``data`` is always a float64 ndarray; ``grad`` is either None or an
    ndarray of identical shape. Values are expected to stay finite; inputs
    entering from outside the op graph are validated on construction.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ContractViolation("tensor values must be finite (found NaN/Inf)")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @classmethod
    def _wrap(cls, arr, requires_grad):
        """Internal fast path for op outputs; skips the finiteness scan."""
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = requires_grad
        t.grad = None
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0])

    def accumulate_grad(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Ordered record of one forward pass.

    Use as a context manager; ops executed inside record their backward
    rules. A tape drives exactly one :func:`backward` call and is consumed
    by it.
    """

    __slots__ = ("_nodes", "consumed")

    def __init__(self):
        self._nodes = []
        self.consumed = False

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        assert stack and stack[-1] is self
        stack.pop()
        return False

    def record(self, out, backward_fn):
        """Append a node: ``backward_fn(out_grad)`` scatters into the inputs."""
        self._nodes.append((out, backward_fn))

    def __len__(self):
        return len(self._nodes)


def record(out, backward_fn):
    """Record onto the active tape if the output participates in autodiff."""
    tape = active_tape()
    if tape is not None and out.requires_grad:
        tape.record(out, backward_fn)


def backward(loss, tape):
    """Reverse sweep: populate ``grad`` on every reachable requires_grad tensor.

    The loss must be a scalar produced on this tape. Fan-out gradients
    accumulate additively. The tape is consumed and cannot be replayed.
    """
    if loss.data.size != 1:
        raise ContractViolation(
            f"backward needs a scalar loss, got shape {loss.data.shape}"
        )
    if tape.consumed:
        raise ContractViolation("tape was already consumed by a previous backward")
    if not any(out is loss for out, _ in tape._nodes):
        raise ContractViolation("loss tensor was not produced on this tape")
    loss.grad = np.ones_like(loss.data)
    for out, backward_fn in reversed(tape._nodes):
        if out.grad is not None:
            backward_fn(out.grad)
    tape.consumed = True
    tape._nodes = []


def zero_grads(tensors):
    for t in tensors:
        t.zero_grad()


def tensor_init(shape, scheme, value=0.0, seed=0, requires_grad=False):
    """Create a tensor from one of the supported deterministic schemes.

    ``scheme`` is one of ``"zeros"``, ``"constant"`` (uses ``value``) or
    ``"fan_in_scaled"`` (uses ``seed``; zero-mean normal with variance
    2/fan_in, where fan_in is the product of all non-leading extents).
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0:
        raise InvalidShape("shape must be non-empty")
    if any(s < 1 for s in shape):
        raise InvalidShape(f"all extents must be >= 1, got {shape}")
    if scheme == "zeros":
        return Tensor._wrap(np.zeros(shape), requires_grad)
    if scheme == "constant":
        arr = np.full(shape, float(value))
        if not np.isfinite(value):
            raise ContractViolation("constant fill value must be finite")
        return Tensor._wrap(arr, requires_grad)
    if scheme == "fan_in_scaled":
        fan_in = 1
        for s in shape[1:]:
            fan_in *= s
        if len(shape) == 1:
            fan_in = shape[0]
        rng = np.random.default_rng(seed)
        arr = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        return Tensor._wrap(arr, requires_grad)
    raise ContractViolation(f"unknown init scheme: {scheme!r}")
