"""Relevance maps and feature export for model interpretation.

GradCAM over one window: differentiate the target-class score with respect
to the middle epoch's final conv activation map, average the gradients per
channel into weights, rectify the weighted activation sum, then upsample
to signal length and min-max normalize. The gradient source defaults to
the log-probability the model is trained on; the raw logit is available
for comparison.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import STAGES
from .autodiff import Tape, backward, take_per_row, zero_grads
from .blocks import feature_extractor_forward
from .autodiff import Tensor
from .errors import ConfigError, InvalidInput, IoError
from .model import forward_batch


@dataclass
class Heatmap:
    """Per-sample relevance in [0, 1] over one 30-second epoch."""

    values: np.ndarray
    target_class: int
    predicted_class: int
    raw_max: float
    empty: bool = False


def cam_from(activations, gradients):
    """Raw relevance: relu of the gradient-weighted channel sum."""
    if activations.shape != gradients.shape or activations.ndim != 2:
        raise InvalidInput(
            f"activations {activations.shape} vs gradients {gradients.shape}"
        )
    weights = gradients.mean(axis=1)
    return np.maximum(weights @ activations, 0.0)


def upsample_linear(values, length):
    """Cell-centered linear interpolation from len(values) to ``length``."""
    src = (np.arange(len(values)) + 0.5) * (length / len(values))
    dst = np.arange(length) + 0.5
    return np.interp(dst, src, values)


def normalize_minmax(values):
    lo, hi = float(values.min()), float(values.max())
    if hi <= 0.0:
        return np.zeros_like(values), True
    if hi == lo:
        return np.ones_like(values), False
    return (values - lo) / (hi - lo), False


def gradcam(params, cfg, window, target=None, gradient_source="log_prob"):
    """Relevance heatmap for the middle epoch of one window (eval mode)."""
    if gradient_source not in ("log_prob", "logit"):
        raise ConfigError(f"unknown gradient source {gradient_source!r}")
    arr = np.asarray(window, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[1] == 1:
        arr = arr[:, 0, :]
    tensors = list(params.registry.values())
    zero_grads(tensors)
    with Tape() as tape:
        out = forward_batch(arr[None], params, cfg, "eval")
        predicted = int(np.argmax(out.log_probs.data[0]))
        chosen = predicted if target is None else int(target)
        if not 0 <= chosen < cfg.num_classes:
            raise InvalidInput(f"target class {chosen} outside 0..4")
        source = out.log_probs if gradient_source == "log_prob" else out.logits
        score = take_per_row(source, np.array([chosen]))
        backward(score, tape)
    mid = out.middle_rows[0]
    acts = out.activations.data[mid]
    grads = out.activations.grad[mid]
    zero_grads(tensors)
    raw = cam_from(acts, grads)
    raw_max = float(raw.max())
    upsampled = upsample_linear(raw, cfg.epoch_len)
    values, empty = normalize_minmax(upsampled)
    return Heatmap(
        values=values,
        target_class=chosen,
        predicted_class=predicted,
        raw_max=raw_max,
        empty=empty,
    )


def heatmap_mass_fraction(heatmap, intervals, sample_rate, pad_s=0.0):
    """Fraction of total relevance mass inside the given (t0, t1) intervals."""
    total = float(heatmap.values.sum())
    if total == 0.0:
        return 0.0
    t = np.arange(len(heatmap.values)) / sample_rate
    mask = np.zeros(len(t), dtype=bool)
    for t0, t1 in intervals:
        mask |= (t >= t0 - pad_s) & (t < t1 + pad_s)
    return float(heatmap.values[mask].sum()) / total


def export_features(params, cfg, epoch_set, batch_size=256):
    """Per-epoch extractor feature matrix ``[N, D]`` plus the stage labels."""
    n = len(epoch_set)
    d = cfg.extractor.feature_dim
    out = np.empty((n, d))
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        x = Tensor(epoch_set.epochs[start:stop, None, :])
        feats, _ = feature_extractor_forward(x, cfg.extractor, params.extractor,
                                             "eval")
        out[start:stop] = feats.data
    return out, epoch_set.labels.copy()


def export_features_csv(params, cfg, epoch_set, path, batch_size=256):
    features, labels = export_features(params, cfg, epoch_set, batch_size)
    try:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow([f"f{i}" for i in range(features.shape[1])] + ["label"])
            for row, label in zip(features, labels):
                writer.writerow([f"{v:.10g}" for v in row] + [STAGES[label]])
    except OSError as e:
        raise IoError(f"cannot write feature CSV {path}: {e}") from e
    return features, labels


def _svg_heatmap(heatmap, signal, width=1000.0, height=300.0):
    l = len(signal)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width:g} {height:g}">',
        f'<rect width="{width:g}" height="{height:g}" fill="white"/>',
    ]
    # relevance bands: contiguous runs of equal two-decimal opacity
    q = np.round(heatmap.values, 2)
    x_of = lambda i: i * width / l
    start = 0
    for i in range(1, l + 1):
        if i == l or q[i] != q[start]:
            if q[start] > 0:
                parts.append(
                    f'<rect x="{x_of(start):.2f}" y="0" '
                    f'width="{x_of(i) - x_of(start):.2f}" height="{height:g}" '
                    f'fill="#d62728" fill-opacity="{0.85 * q[start]:.3f}"/>'
                )
            start = i
    lo, hi = float(signal.min()), float(signal.max())
    span = hi - lo if hi > lo else 1.0
    ys = height - 10 - (signal - lo) / span * (height - 20)
    xs = np.arange(l) * width / (l - 1 if l > 1 else 1)
    points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    parts.append(
        f'<polyline points="{points}" fill="none" stroke="#1f3b70" stroke-width="0.8"/>'
    )
    parts.append("</svg>")
    return "\n".join(parts)


def render_heatmap(heatmap, signal, path_base):
    """Write ``<path_base>.csv`` and ``<path_base>.svg``; both deterministic."""
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 1 or len(signal) != len(heatmap.values):
        raise InvalidInput(
            f"signal length {signal.shape} != heatmap length {len(heatmap.values)}"
        )
    csv_path = f"{path_base}.csv"
    svg_path = f"{path_base}.svg"
    try:
        with open(csv_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["sample_index", "signal_value", "relevance"])
            for i, (v, r) in enumerate(zip(signal, heatmap.values)):
                writer.writerow([i, f"{v:.10g}", f"{r:.6f}"])
        with open(svg_path, "w") as f:
            f.write(_svg_heatmap(heatmap, signal))
    except OSError as e:
        raise IoError(f"cannot write heatmap artifacts at {path_base}: {e}") from e
    return csv_path, svg_path
