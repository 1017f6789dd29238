"""Window/stride views over an epoch set.

A window of W consecutive epochs is labeled by its middle epoch. The
``skip`` policy only emits fully in-range windows (training); the
``replicate`` policy clamps indices at the recording edges so every epoch
can be a center (evaluation).
"""

import numpy as np

from ..errors import ConfigError, EmptyDataset


class WindowView:
    def __init__(self, epoch_set, window_size, stride, edge_policy):
        self.epoch_set = epoch_set
        self.window_size = window_size
        self.stride = stride
        self.edge_policy = edge_policy
        n = len(epoch_set)
        half = (window_size - 1) // 2
        if edge_policy == "skip":
            if n < window_size:
                raise EmptyDataset(
                    f"window {window_size} exceeds the {n} available epochs"
                )
            count = (n - window_size) // stride + 1
            self._centers = np.arange(count) * stride + half
        elif edge_policy == "replicate":
            if n < 1:
                raise EmptyDataset("no epochs to window")
            count = (n - 1) // stride + 1
            self._centers = np.arange(count) * stride
        else:
            raise ConfigError(f"unknown edge policy {edge_policy!r}")
        self._half = half

    def __len__(self):
        return len(self._centers)

    def centers(self):
        return self._centers.copy()

    def center(self, k):
        return int(self._centers[k])

    def indices(self, k):
        """Epoch indices covered by window k (clamped under replicate)."""
        c = self._centers[k]
        span = np.arange(c - self._half, c + self._half + 1)
        if self.edge_policy == "replicate":
            span = np.clip(span, 0, len(self.epoch_set) - 1)
        return span

    def label(self, k):
        return int(self.epoch_set.labels[self._centers[k]])

    def labels(self):
        return self.epoch_set.labels[self._centers].copy()

    def gather(self, ks):
        """Materialize windows ``ks`` as an array ``[len(ks), W, L]``."""
        ks = np.asarray(ks, dtype=np.intp)
        spans = (
            self._centers[ks][:, None]
            + np.arange(-self._half, self._half + 1)[None, :]
        )
        if self.edge_policy == "replicate":
            spans = np.clip(spans, 0, len(self.epoch_set) - 1)
        return self.epoch_set.epochs[spans]


def make_windows(epoch_set, window_size, stride, edge_policy="skip"):
    if window_size < 1 or window_size % 2 == 0:
        raise ConfigError(f"window size must be odd and >= 1, got {window_size}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    return WindowView(epoch_set, window_size, stride, edge_policy)
