"""Finite-difference verification of analytic gradients."""

import numpy as np

from ..errors import ContractViolation
from .tensor import Tape, backward, zero_grads


def grad_check(fn, inputs, epsilon=1e-5, entries=None):
    """Compare analytic gradients of ``fn`` against central differences.

    ``fn`` maps the given tensors to a scalar tensor. Returns the maximum
    over checked entries of ``|analytic - numeric| / max(|analytic|,
    |numeric|, 1e-8)``. By default every entry of every input is checked;
    ``entries`` may restrict the sweep to a list of ``(input_index,
    flat_index)`` pairs (used for sampled checks on large models).
    """
    for t in inputs:
        t.requires_grad = True
    zero_grads(inputs)

    with Tape() as tape:
        out = fn(*inputs)
    if out.data.size != 1:
        raise ContractViolation(
            f"grad_check needs a scalar-valued fn, got shape {out.data.shape}"
        )
    backward(out, tape)
    analytic = [
        np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs
    ]
    zero_grads(inputs)

    if entries is None:
        entries = [
            (i, j) for i, t in enumerate(inputs) for j in range(t.data.size)
        ]

    def eval_scalar():
        return float(fn(*inputs).data.reshape(-1)[0])

    max_rel = 0.0
    for i, j in entries:
        flat = inputs[i].data.reshape(-1)
        orig = flat[j]
        flat[j] = orig + epsilon
        f_plus = eval_scalar()
        flat[j] = orig - epsilon
        f_minus = eval_scalar()
        flat[j] = orig
        numeric = (f_plus - f_minus) / (2.0 * epsilon)
        a = analytic[i].reshape(-1)[j]
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        max_rel = max(max_rel, rel)
    return max_rel
