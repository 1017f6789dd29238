"""The full stager: feature extractor + Bi-LSTM stack + middle-epoch head.

A window of W consecutive epochs runs through the shared extractor, the
per-epoch features form a sequence for the stacked Bi-LSTM, and the linear
head reads the sequence output at the middle position (W-1)/2. Checkpoints
serialize every learnable tensor plus batchnorm running state bit-exactly.
"""

import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import NUM_STAGES
from .autodiff import (
    Tensor,
    add_rowvec,
    log_softmax,
    matmul,
    relu,
    reshape,
    select_row,
    take_rows,
    transpose,
)
from .blocks import (
    FeatureExtractorConfig,
    ParamBuilder,
    build_extractor,
    feature_extractor_forward,
)
from .errors import ConfigError, CorruptCheckpoint, ShapeError
from .recurrent import build_bilstm_stack, stack_forward

CHECKPOINT_MAGIC = b"SSTG"
CHECKPOINT_VERSION = 1


@dataclass
class StagerConfig:
    window_size: int = 9
    stride_train: int = 4
    stride_eval: int = 1
    num_classes: int = NUM_STAGES
    extractor: FeatureExtractorConfig = field(
        default_factory=FeatureExtractorConfig.create
    )
    lstm_hidden: int = 128
    lstm_depth: int = 3
    head_widths: tuple = (NUM_STAGES,)
    sample_rate: float = 100.0
    seed: int = 0

    def validate(self):
        if self.window_size < 1 or self.window_size % 2 == 0:
            raise ConfigError(
                f"window_size must be odd and >= 1, got {self.window_size}"
            )
        if self.stride_train < 1:
            raise ConfigError("stride_train must be >= 1")
        if self.stride_eval != 1:
            raise ConfigError("stride_eval is fixed at 1")
        if self.num_classes != NUM_STAGES:
            raise ConfigError("the stager is a five-class model")
        if not self.head_widths or self.head_widths[-1] != NUM_STAGES:
            raise ConfigError(
                f"head widths must end in {NUM_STAGES}, got {self.head_widths}"
            )
        if any(w < 1 for w in self.head_widths):
            raise ConfigError("head widths must be positive")
        if self.lstm_hidden < 1 or self.lstm_depth < 1:
            raise ConfigError("lstm hidden size and depth must be >= 1")
        rate_samples = 30.0 * self.sample_rate
        if abs(rate_samples - round(rate_samples)) > 1e-9 or rate_samples < 1:
            raise ConfigError(
                f"sample_rate {self.sample_rate} does not give an integer epoch length"
            )
        self.extractor.validate()
        return self

    @property
    def epoch_len(self):
        return int(round(30.0 * self.sample_rate))

    @property
    def middle_index(self):
        return (self.window_size - 1) // 2

    def to_dict(self):
        return {
            "window_size": self.window_size,
            "stride_train": self.stride_train,
            "stride_eval": self.stride_eval,
            "num_classes": self.num_classes,
            "extractor": self.extractor.to_dict(),
            "lstm_hidden": self.lstm_hidden,
            "lstm_depth": self.lstm_depth,
            "head_widths": list(self.head_widths),
            "sample_rate": self.sample_rate,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        cfg = cls(
            window_size=int(d["window_size"]),
            stride_train=int(d["stride_train"]),
            stride_eval=int(d["stride_eval"]),
            num_classes=int(d["num_classes"]),
            extractor=FeatureExtractorConfig.from_dict(d["extractor"]),
            lstm_hidden=int(d["lstm_hidden"]),
            lstm_depth=int(d["lstm_depth"]),
            head_widths=tuple(int(w) for w in d["head_widths"]),
            sample_rate=float(d["sample_rate"]),
            seed=int(d["seed"]),
        )
        return cfg.validate()

    def with_seed(self, seed):
        return replace(self, seed=int(seed))


@dataclass
class StagerParams:
    extractor: object
    stack: object
    head: list  # [(w, b), ...]
    registry: dict  # stable name -> learnable Tensor
    states: dict  # batchnorm name -> BatchNormState


def build_stager_params(cfg):
    cfg.validate()
    builder = ParamBuilder(cfg.seed)
    extractor = build_extractor(builder, cfg.extractor)
    stack = build_bilstm_stack(
        builder, "lstm", cfg.extractor.feature_dim, cfg.lstm_hidden, cfg.lstm_depth
    )
    head = []
    in_dim = 2 * cfg.lstm_hidden
    for i, width in enumerate(cfg.head_widths):
        w = builder.weight(f"head.{i}.w", [width, in_dim])
        b = builder.const(f"head.{i}.b", [width])
        head.append((w, b))
        in_dim = width
    return StagerParams(extractor, stack, head, builder.registry, builder.states)


def _head_forward(h, head):
    for i, (w, b) in enumerate(head):
        if i > 0:
            h = relu(h)
        h = add_rowvec(matmul(h, transpose(w)), b)
    return h


@dataclass
class WindowForward:
    log_probs: Tensor  # [B, 5]
    logits: Tensor  # [B, 5]
    activations: Tensor  # [B*W, C_last, L_last], final conv maps of every epoch
    middle_rows: np.ndarray  # row indices of the middle epochs in `activations`


def forward_batch(windows, params, cfg, mode):
    """Run a batch of windows ``[B, W, L_epoch]`` through the full model."""
    arr = windows.data if isinstance(windows, Tensor) else np.asarray(windows)
    if arr.ndim != 3:
        raise ShapeError(f"expected windows [B, W, L], got {arr.shape}")
    b, w, l = arr.shape
    if w != cfg.window_size:
        raise ShapeError(f"window size {w} != configured {cfg.window_size}")
    if l != cfg.epoch_len:
        raise ShapeError(f"epoch length {l} != configured {cfg.epoch_len}")
    x = windows if isinstance(windows, Tensor) else Tensor(arr)
    x = reshape(x, (b * w, 1, l))
    feats, acts = feature_extractor_forward(x, cfg.extractor, params.extractor, mode)
    base = np.arange(b) * w
    seq = [take_rows(feats, base + t) for t in range(w)]
    outs = stack_forward(seq, params.stack)
    logits = _head_forward(outs[cfg.middle_index], params.head)
    return WindowForward(
        log_probs=log_softmax(logits, axis=1),
        logits=logits,
        activations=acts,
        middle_rows=base + cfg.middle_index,
    )


def forward_window(window, params, cfg, mode="eval"):
    """Single-window forward.

    Accepts ``[W, 1, L]`` or ``[W, L]``; returns the middle epoch's
    log-probabilities ``[5]`` and its final conv activation map
    ``[C_last, L_last]`` (a view into the batch activations, which is what
    relevance attribution differentiates).
    """
    arr = window.data if isinstance(window, Tensor) else np.asarray(window)
    if arr.ndim == 3:
        if arr.shape[1] != 1:
            raise ShapeError(f"expected [W, 1, L], got {arr.shape}")
        arr = arr[:, 0, :]
    if arr.ndim != 2:
        raise ShapeError(f"expected a [W, L] window, got {arr.shape}")
    out = forward_batch(arr[None], params, cfg, mode)
    log_probs = reshape(out.log_probs, (cfg.num_classes,))
    middle_acts = select_row(out.activations, out.middle_rows[0])
    return log_probs, middle_acts


def predict(window, params, cfg):
    """Most likely stage index; exact ties resolve to the lowest index."""
    log_probs, _ = forward_window(window, params, cfg, mode="eval")
    return int(np.argmax(log_probs.data))


# ---------------------------------------------------------------------------
# checkpoints


def _manifest(params, cfg):
    tensors = [
        {"name": name, "shape": list(t.data.shape)}
        for name, t in params.registry.items()
    ]
    state = []
    for name, st in params.states.items():
        state.append(
            {
                "name": name,
                "shape": list(st.running_mean.shape),
                "initialized": bool(st.initialized),
            }
        )
    return {"config": cfg.to_dict(), "tensors": tensors, "state": state}


def checkpoint_save(params, cfg, path):
    manifest = json.dumps(_manifest(params, cfg), sort_keys=True,
                          separators=(",", ":")).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(np.uint32(CHECKPOINT_VERSION).tobytes())
    buf.write(np.uint64(len(manifest)).tobytes())
    buf.write(manifest)
    for t in params.registry.values():
        buf.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    for st in params.states.values():
        buf.write(np.ascontiguousarray(st.running_mean, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(st.running_var, dtype="<f8").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def _read_exact(f, n, field):
    data = f.read(n)
    if len(data) != n:
        raise CorruptCheckpoint(
            f"file ends after {len(data)} of {n} expected bytes", field=field
        )
    return data


def _read_array(f, shape, field):
    count = int(np.prod(shape))
    raw = _read_exact(f, count * 8, field)
    arr = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    if not np.all(np.isfinite(arr)):
        raise CorruptCheckpoint("non-finite values in payload", field=field)
    return arr


def checkpoint_load(path):
    """Rebuild ``(params, config)`` from a checkpoint file, bit-exactly."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise CorruptCheckpoint(f"bad magic {magic!r}", field="magic")
        version = int(np.frombuffer(_read_exact(f, 4, "version"), dtype="<u4")[0])
        if version != CHECKPOINT_VERSION:
            raise CorruptCheckpoint(f"unsupported version {version}", field="version")
        mlen = int(np.frombuffer(_read_exact(f, 8, "manifest_len"), dtype="<u8")[0])
        try:
            manifest = json.loads(_read_exact(f, mlen, "manifest"))
        except json.JSONDecodeError as e:
            raise CorruptCheckpoint(f"manifest is not valid JSON: {e}",
                                    field="manifest") from e
        try:
            cfg = StagerConfig.from_dict(manifest["config"])
            tensor_entries = manifest["tensors"]
            state_entries = manifest["state"]
        except (KeyError, TypeError, ConfigError) as e:
            raise CorruptCheckpoint(f"bad manifest: {e}", field="manifest") from e

        params = build_stager_params(cfg)
        declared = [e["name"] for e in tensor_entries]
        if declared != list(params.registry.keys()):
            raise CorruptCheckpoint(
                "tensor list does not match the declared config", field="tensors"
            )
        for entry in tensor_entries:
            name = entry["name"]
            t = params.registry[name]
            if tuple(entry["shape"]) != t.data.shape:
                raise CorruptCheckpoint(
                    f"declared shape {entry['shape']} != expected "
                    f"{list(t.data.shape)}", field=name
                )
            t.data = _read_array(f, t.data.shape, name)
        if [e["name"] for e in state_entries] != list(params.states.keys()):
            raise CorruptCheckpoint(
                "state list does not match the declared config", field="state"
            )
        for entry in state_entries:
            name = entry["name"]
            st = params.states[name]
            if tuple(entry["shape"]) != st.running_mean.shape:
                raise CorruptCheckpoint(
                    f"declared shape {entry['shape']} != expected "
                    f"{list(st.running_mean.shape)}", field=name
                )
            st.running_mean = _read_array(f, st.running_mean.shape, name)
            st.running_var = _read_array(f, st.running_mean.shape, name)
            st.initialized = bool(entry["initialized"])
        if f.read(1):
            raise CorruptCheckpoint("trailing bytes after payload", field="payload")
    return params, cfg


def trainable_tensors(params):
    return list(params.registry.values())


def set_requires_grad(params, flag):
    for t in params.registry.values():
        t.requires_grad = flag
