"""LSTM cell, bidirectional layer, and the stacked Bi-LSTM context encoder.

Each cell holds four gate matrices acting on the concatenation
``[h(t-1), x(t)]``. Inputs may be single vectors ``[D]`` or batches
``[B, D]``; hidden state starts at zero for every sequence.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    add,
    add_rowvec,
    concat,
    matmul,
    mul,
    sigmoid,
    tanh,
    transpose,
)
from .errors import ConfigError, InvalidInput, ShapeError


@dataclass
class LSTMCellParams:
    w_f: Tensor
    w_i: Tensor
    w_c: Tensor
    w_o: Tensor
    b_f: Tensor
    b_i: Tensor
    b_c: Tensor
    b_o: Tensor

    @property
    def hidden_size(self):
        return self.w_f.data.shape[0]

    @property
    def input_size(self):
        return self.w_f.data.shape[1] - self.w_f.data.shape[0]


@dataclass
class BiLSTMStackParams:
    layers: list  # [(forward cell, backward cell), ...]

    @property
    def num_layers(self):
        return len(self.layers)


def build_lstm_cell(builder, name, input_size, hidden_size):
    """Forget-gate bias starts at 1 to keep early memory open; others at 0."""
    shape = [hidden_size, hidden_size + input_size]
    return LSTMCellParams(
        w_f=builder.weight(f"{name}.w_f", shape),
        w_i=builder.weight(f"{name}.w_i", shape),
        w_c=builder.weight(f"{name}.w_c", shape),
        w_o=builder.weight(f"{name}.w_o", shape),
        b_f=builder.const(f"{name}.b_f", [hidden_size], 1.0),
        b_i=builder.const(f"{name}.b_i", [hidden_size], 0.0),
        b_c=builder.const(f"{name}.b_c", [hidden_size], 0.0),
        b_o=builder.const(f"{name}.b_o", [hidden_size], 0.0),
    )


def build_bilstm_stack(builder, name, input_size, hidden_size, depth):
    if depth < 1:
        raise ConfigError("stack depth must be >= 1")
    layers = []
    d = input_size
    for k in range(depth):
        fwd = build_lstm_cell(builder, f"{name}.l{k}.fwd", d, hidden_size)
        bwd = build_lstm_cell(builder, f"{name}.l{k}.bwd", d, hidden_size)
        layers.append((fwd, bwd))
        d = 2 * hidden_size
    return BiLSTMStackParams(layers)


def _gate(zcat, w, b, act):
    if zcat.data.ndim == 1:
        return act(add(matmul(w, zcat), b))
    return act(add_rowvec(matmul(zcat, transpose(w)), b))


def lstm_cell_step(x_t, h_prev, c_prev, p):
    """One step of the gated recurrence.

    f = sigma(W_f [h, x] + b_f), i = sigma(W_i [h, x] + b_i),
    c~ = tanh(W_c [h, x] + b_c), c = f*c_prev + i*c~,
    o = sigma(W_o [h, x] + b_o), h = o*tanh(c).
    """
    if x_t.data.ndim not in (1, 2) or x_t.data.ndim != h_prev.data.ndim:
        raise ShapeError(
            f"lstm step: x {x_t.data.shape} vs h {h_prev.data.shape}"
        )
    expected = p.hidden_size + p.input_size
    if x_t.data.shape[-1] + h_prev.data.shape[-1] != expected:
        raise ShapeError(
            f"lstm step: concat width {x_t.data.shape[-1] + h_prev.data.shape[-1]}"
            f" does not match weights ({expected})"
        )
    zcat = concat([h_prev, x_t], axis=-1)
    f = _gate(zcat, p.w_f, p.b_f, sigmoid)
    i = _gate(zcat, p.w_i, p.b_i, sigmoid)
    c_hat = _gate(zcat, p.w_c, p.b_c, tanh)
    c_t = add(mul(f, c_prev), mul(i, c_hat))
    o = _gate(zcat, p.w_o, p.b_o, sigmoid)
    h_t = mul(o, tanh(c_t))
    return h_t, c_t


def _zero_state(like, hidden_size):
    if like.data.ndim == 1:
        return Tensor(np.zeros(hidden_size))
    return Tensor(np.zeros((like.data.shape[0], hidden_size)))


def _run_direction(seq, cell):
    h = _zero_state(seq[0], cell.hidden_size)
    c = _zero_state(seq[0], cell.hidden_size)
    outputs = []
    for x_t in seq:
        h, c = lstm_cell_step(x_t, h, c, cell)
        outputs.append(h)
    return outputs


def bilstm_layer_forward(seq, layer):
    """Concatenate forward-direction and (re-reversed) backward-direction states."""
    if not seq:
        raise InvalidInput("bilstm layer got an empty sequence")
    fwd_cell, bwd_cell = layer
    fwd = _run_direction(seq, fwd_cell)
    bwd = _run_direction(list(reversed(seq)), bwd_cell)[::-1]
    return [concat([f, b], axis=-1) for f, b in zip(fwd, bwd)]


def stack_forward(seq, stack):
    if stack.num_layers < 1:
        raise ConfigError("stack depth must be >= 1")
    out = seq
    for k, layer in enumerate(stack.layers):
        expected = layer[0].input_size
        if out[0].data.shape[-1] != expected:
            raise ConfigError(
                f"stack layer {k} expects input dim {expected}, "
                f"got {out[0].data.shape[-1]}"
            )
        out = bilstm_layer_forward(out, layer)
    return out
