"""Subject-wise k-fold splitting: folds never share a subject."""

import numpy as np

from ..errors import ConfigError


def kfold_split(subject_ids, k, seed):
    """Shuffle subjects with ``seed`` and cut k near-equal test folds.

    Returns ``[(train_ids, test_ids), ...]``; fold sizes differ by at most
    one, every subject appears in exactly one test fold, and k equal to the
    subject count gives leave-one-subject-out.
    """
    subjects = list(subject_ids)
    if len(set(subjects)) != len(subjects):
        raise ConfigError("subject ids must be unique")
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if k > len(subjects):
        raise ConfigError(f"k={k} exceeds the {len(subjects)} subjects")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(subjects))
    shuffled = [subjects[i] for i in order]
    folds = np.array_split(np.arange(len(subjects)), k)
    splits = []
    for f in folds:
        test = [shuffled[i] for i in f]
        test_set = set(test)
        train = [s for s in shuffled if s not in test_set]
        splits.append((train, test))
    return splits
