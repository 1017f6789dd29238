"""Adam optimization, NLL loss, the training loop, and k-fold cross-validation.

Training windows come from the ``skip`` edge policy at the configured
training stride; evaluation always walks every epoch (stride 1,
``replicate`` edges) so each labeled epoch receives exactly one
prediction. Runs are bit-reproducible for a fixed seed.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import Tape, backward, scale, sum_all, take_per_row, zero_grads
from .data.folds import kfold_split
from .data.windows import make_windows
from .errors import (
    ConfigError,
    ContractViolation,
    EmptyDataset,
    InvalidInput,
    InvalidLabel,
)
from .metrics import confusion_from, metrics_report
from .model import build_stager_params, checkpoint_save, forward_batch

from . import NUM_STAGES


@dataclass
class TrainConfig:
    epochs: int = 45
    batch_size: int = 128
    lr: float = 0.001
    stride_train: int = 4
    stride_eval: int = 1
    seed: int = 0
    shuffle: bool = True

    def validate(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.stride_train < 1:
            raise ConfigError("stride_train must be >= 1")
        if self.stride_eval != 1:
            raise ConfigError("stride_eval is fixed at 1")
        return self


def nll_loss(log_probs, targets):
    """Mean negative log-likelihood of the target stages; differentiable."""
    targets = np.asarray(targets, dtype=np.int64)
    if targets.ndim != 1:
        raise InvalidLabel(f"targets must be a vector, got shape {targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= NUM_STAGES):
        raise InvalidLabel(f"targets outside 0..{NUM_STAGES - 1}")
    if log_probs.data.ndim != 2 or log_probs.data.shape[0] != targets.size:
        raise InvalidLabel(
            f"log_probs {log_probs.data.shape} vs {targets.size} targets"
        )
    picked = take_per_row(log_probs, targets)
    return scale(sum_all(picked), -1.0 / targets.size)


@dataclass
class AdamState:
    """First/second moment estimates per parameter plus the step count."""

    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def init_adam(params, lr=0.001, beta1=0.9, beta2=0.999, epsilon=1e-8):
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)
    for name, tensor in params.registry.items():
        state.m[name] = np.zeros_like(tensor.data)
        state.v[name] = np.zeros_like(tensor.data)
    return state


def adam_step(params, state):
    """One in-place update; every registered parameter must hold a gradient."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** state.t
    bias2 = 1.0 - b2 ** state.t
    for name, tensor in params.registry.items():
        g = tensor.grad
        if g is None:
            raise ContractViolation(f"parameter {name} has no gradient")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / bias1
        v_hat = v / bias2
        tensor.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)


def _training_windows(epoch_sets, window_size, stride):
    views = []
    index = []
    for si, es in enumerate(epoch_sets):
        if len(es) < window_size:
            continue
        view = make_windows(es, window_size, stride, "skip")
        views.append(view)
        index.extend((len(views) - 1, k) for k in range(len(view)))
    if not index:
        raise EmptyDataset("no training windows: every recording is too short")
    return views, np.array(index, dtype=np.intp)


def fit(train_sets, model_cfg, train_cfg, params=None, checkpoint_path=None):
    """Train the stager; returns ``(params, per-epoch mean loss history)``.

    Deterministic for fixed configs: parameter init derives from the model
    seed, shuffling from the training seed, and batches run single-threaded.
    """
    if not train_sets:
        raise EmptyDataset("no training recordings")
    model_cfg.validate()
    train_cfg.validate()
    for es in train_sets:
        if not np.all(np.isfinite(es.epochs)):
            raise ContractViolation(f"recording {es.subject_id} has non-finite samples")
        if es.epoch_len != model_cfg.epoch_len:
            raise ConfigError(
                f"recording {es.subject_id} epoch length {es.epoch_len} "
                f"!= model's {model_cfg.epoch_len}"
            )
    if params is None:
        params = build_stager_params(model_cfg)
    views, index = _training_windows(
        train_sets, model_cfg.window_size, train_cfg.stride_train
    )
    rng = np.random.default_rng(train_cfg.seed)
    adam = init_adam(params, lr=train_cfg.lr)
    tensors = list(params.registry.values())
    history = []
    n = len(index)
    for _ in range(train_cfg.epochs):
        order = rng.permutation(n) if train_cfg.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, train_cfg.batch_size):
            chosen = index[order[start : start + train_cfg.batch_size]]
            batch = np.concatenate(
                [
                    views[vi].gather(ks[:, 1])
                    for vi, ks in _group_by_view(chosen)
                ]
            )
            targets = np.concatenate(
                [views[vi].labels()[ks[:, 1]] for vi, ks in _group_by_view(chosen)]
            )
            zero_grads(tensors)
            with Tape() as tape:
                out = forward_batch(batch, params, model_cfg, "train")
                loss = nll_loss(out.log_probs, targets)
            value = loss.item()
            if not np.isfinite(value):
                raise ContractViolation("training loss diverged to NaN/Inf")
            backward(loss, tape)
            adam_step(params, adam)
            total += value * len(chosen)
        history.append(total / n)
    if checkpoint_path is not None:
        checkpoint_save(params, model_cfg, checkpoint_path)
    return params, history


def _group_by_view(chosen):
    """Split a (view_idx, window_idx) batch by view, preserving order."""
    groups = []
    start = 0
    for i in range(1, len(chosen) + 1):
        if i == len(chosen) or chosen[i, 0] != chosen[start, 0]:
            groups.append((int(chosen[start, 0]), chosen[start:i]))
            start = i
    return groups


def predict_epochs(params, model_cfg, es, batch_size=256):
    """Stage prediction for every epoch (stride 1, replicate edges)."""
    view = make_windows(es, model_cfg.window_size, 1, "replicate")
    preds = np.empty(len(view), dtype=np.int64)
    for start in range(0, len(view), batch_size):
        ks = np.arange(start, min(start + batch_size, len(view)))
        out = forward_batch(view.gather(ks), params, model_cfg, "eval")
        preds[ks] = np.argmax(out.log_probs.data, axis=1)
    return preds


def evaluate(params, model_cfg, epoch_sets, batch_size=256):
    """Pooled confusion matrix over every epoch of the given recordings."""
    all_preds = []
    all_labels = []
    for es in epoch_sets:
        if len(es) == 0:
            continue
        all_preds.append(predict_epochs(params, model_cfg, es, batch_size))
        all_labels.append(es.labels.astype(np.int64))
    if not all_preds:
        raise EmptyDataset("no epochs to evaluate")
    return confusion_from(np.concatenate(all_preds), np.concatenate(all_labels))


@dataclass
class FoldResult:
    fold_index: int
    train_subjects: list
    test_subjects: list
    confusion: np.ndarray
    loss_history: list
    wall_clock_s: float
    checkpoint_path: str | None = None

    @property
    def report(self):
        return metrics_report(self.confusion)


def _run_fold(args):
    (fold_index, train_ids, test_ids, sets_by_id, model_cfg, train_cfg,
     checkpoint_path) = args
    t0 = time.perf_counter()
    fold_seed = train_cfg.seed + fold_index
    model_cfg_f = model_cfg.with_seed(model_cfg.seed + fold_index)
    train_cfg_f = replace(train_cfg, seed=fold_seed)
    train_sets = [sets_by_id[s] for s in train_ids]
    test_sets = [sets_by_id[s] for s in test_ids]
    leak = {es.subject_id for es in train_sets} & {es.subject_id for es in test_sets}
    if leak:
        raise ContractViolation(f"fold {fold_index} leaks subjects: {sorted(leak)}")
    params, history = fit(train_sets, model_cfg_f, train_cfg_f,
                          checkpoint_path=checkpoint_path)
    cm = evaluate(params, model_cfg_f, test_sets)
    return FoldResult(
        fold_index=fold_index,
        train_subjects=list(train_ids),
        test_subjects=list(test_ids),
        confusion=cm,
        loss_history=history,
        wall_clock_s=time.perf_counter() - t0,
        checkpoint_path=str(checkpoint_path) if checkpoint_path else None,
    )


def cross_validate(epoch_sets, k, model_cfg, train_cfg, jobs=1,
                   checkpoint_dir=None):
    """Subject-wise k-fold CV.

    Returns ``(fold_results, pooled_report)`` where the pooled report is
    computed on the sum of the per-fold confusion matrices (micro pooling),
    with per-fold metrics available on each FoldResult.
    """
    sets_by_id = {}
    for es in epoch_sets:
        if es.subject_id in sets_by_id:
            raise InvalidInput(f"duplicate subject id {es.subject_id}")
        sets_by_id[es.subject_id] = es
    subjects = list(sets_by_id)
    splits = kfold_split(subjects, k, train_cfg.seed)
    tasks = []
    for i, (train_ids, test_ids) in enumerate(splits):
        path = None
        if checkpoint_dir is not None:
            path = str(Path(checkpoint_dir) / f"fold_{i}.sstg")
        tasks.append((i, train_ids, test_ids, sets_by_id, model_cfg, train_cfg, path))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_fold, tasks))
    else:
        results = [_run_fold(t) for t in tasks]
    pooled = np.sum([r.confusion for r in results], axis=0)
    return results, metrics_report(pooled)
