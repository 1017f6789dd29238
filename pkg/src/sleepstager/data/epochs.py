"""Labeled 30-second epochs: slicing, normalization, and the SEPC cache.

The cache layout is: magic "SEPC", u32 version, u16 subject-id length +
utf-8 bytes, f64 sample rate, u64 N, u64 L, N stage bytes, then N*L
little-endian f32 samples.
"""

from dataclasses import dataclass, field

import numpy as np

from .. import EXCLUDED, NUM_STAGES
from ..errors import (
    ChannelNotFound,
    ConfigError,
    CorruptCheckpoint,
    DegenerateSignal,
    InvalidInput,
)

CACHE_MAGIC = b"SEPC"
CACHE_VERSION = 1


@dataclass
class EpochSet:
    """A recording cut into labeled 30 s epochs for one subject.

    ``events`` optionally carries per-epoch ground-truth intervals
    (kind, start_s, end_s) used by localization experiments; it is not
    persisted in the cache format.
    """

    epochs: np.ndarray  # [N, L] float64
    labels: np.ndarray  # [N] int8 in 0..4
    subject_id: str
    channel: str
    sample_rate: float
    events: list | None = field(default=None, repr=False)

    def __post_init__(self):
        self.epochs = np.asarray(self.epochs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int8)
        if self.epochs.ndim != 2:
            raise InvalidInput(f"epochs must be [N, L], got {self.epochs.shape}")
        if len(self.labels) != len(self.epochs):
            raise InvalidInput("labels and epochs disagree on length")
        if np.any(self.labels < 0) or np.any(self.labels >= NUM_STAGES):
            raise InvalidInput("labels must be stage indices 0..4")
        expected = self.sample_rate * 30.0
        if abs(self.epochs.shape[1] - expected) > 1e-6:
            raise ConfigError(
                f"epoch length {self.epochs.shape[1]} != 30 s at "
                f"{self.sample_rate} Hz"
            )

    def __len__(self):
        return len(self.labels)

    @property
    def epoch_len(self):
        return self.epochs.shape[1]

    def stage_counts(self):
        return np.bincount(self.labels, minlength=NUM_STAGES)


def epochize(recording, channel_name, hypnogram, subject_id="subject"):
    """Slice one channel into the hypnogram's 30 s epochs, dropping EXCLUDED.

    Epochs whose samples run past the end of the signal are dropped, as are
    hypnogram entries beyond the recorded duration.
    """
    signal = recording.channel(channel_name)
    rate = recording.sample_rate(channel_name)
    samples_30s = rate * 30.0
    if abs(samples_30s - round(samples_30s)) > 1e-9:
        raise ConfigError(
            f"sample rate {rate} Hz does not give an integer 30 s epoch"
        )
    l_epoch = int(round(samples_30s))
    n_available = len(signal) // l_epoch
    n = min(len(hypnogram), n_available)
    keep = [i for i in range(n) if hypnogram.labels[i] != EXCLUDED]
    if not keep:
        return EpochSet(
            np.empty((0, l_epoch)), np.empty(0, dtype=np.int8),
            subject_id, channel_name, rate,
        )
    rows = np.stack([signal[i * l_epoch : (i + 1) * l_epoch] for i in keep])
    labels = hypnogram.labels[keep].astype(np.int8)
    return EpochSet(rows, labels, subject_id, channel_name, rate)


def normalize_recording(es, scheme):
    """Affine normalization; labels and metadata pass through untouched."""
    if scheme == "none":
        return es
    if scheme == "zscore_per_recording":
        flat = es.epochs.reshape(-1)
        std = flat.std()
        if std < 1e-12:
            raise DegenerateSignal("recording has (near-)zero variance")
        epochs = (es.epochs - flat.mean()) / std
    elif scheme == "zscore_per_epoch":
        std = es.epochs.std(axis=1, keepdims=True)
        if np.any(std < 1e-12):
            raise DegenerateSignal("an epoch has (near-)zero variance")
        epochs = (es.epochs - es.epochs.mean(axis=1, keepdims=True)) / std
    else:
        raise ConfigError(f"unknown normalization scheme {scheme!r}")
    return EpochSet(epochs, es.labels.copy(), es.subject_id, es.channel,
                    es.sample_rate, events=es.events)


def save_epochset(es, path):
    with open(path, "wb") as f:
        f.write(CACHE_MAGIC)
        f.write(np.uint32(CACHE_VERSION).tobytes())
        sid = es.subject_id.encode("utf-8")
        f.write(np.uint16(len(sid)).tobytes())
        f.write(sid)
        f.write(np.float64(es.sample_rate).astype("<f8").tobytes())
        f.write(np.uint64(len(es)).tobytes())
        f.write(np.uint64(es.epoch_len).tobytes())
        f.write(es.labels.astype(np.uint8).tobytes())
        f.write(np.ascontiguousarray(es.epochs, dtype="<f4").tobytes())


def _need(f, n, field_name):
    data = f.read(n)
    if len(data) != n:
        raise CorruptCheckpoint(
            f"cache ends after {len(data)} of {n} expected bytes", field=field_name
        )
    return data


def load_epochset(path):
    """Read a SEPC cache. The channel name is not part of the format."""
    with open(path, "rb") as f:
        if f.read(4) != CACHE_MAGIC:
            raise CorruptCheckpoint("bad cache magic", field="magic")
        version = int(np.frombuffer(_need(f, 4, "version"), dtype="<u4")[0])
        if version != CACHE_VERSION:
            raise CorruptCheckpoint(f"unsupported cache version {version}",
                                    field="version")
        sid_len = int(np.frombuffer(_need(f, 2, "subject_id"), dtype="<u2")[0])
        subject_id = _need(f, sid_len, "subject_id").decode("utf-8")
        rate = float(np.frombuffer(_need(f, 8, "sample_rate"), dtype="<f8")[0])
        n = int(np.frombuffer(_need(f, 8, "n_epochs"), dtype="<u8")[0])
        l_epoch = int(np.frombuffer(_need(f, 8, "epoch_len"), dtype="<u8")[0])
        labels = np.frombuffer(_need(f, n, "labels"), dtype=np.uint8).astype(np.int8)
        samples = np.frombuffer(
            _need(f, n * l_epoch * 4, "samples"), dtype="<f4"
        ).astype(np.float64).reshape(n, l_epoch)
        if f.read(1):
            raise CorruptCheckpoint("trailing bytes after samples", field="samples")
    return EpochSet(samples, labels, subject_id, "", rate)
