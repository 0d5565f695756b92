"""Semi-crowdsourced deep clustering: BayesSCDC and amortized SCDC."""

import numpy as np

from ._scdc import (
    EpochRecord,
    Error,
    InvalidParameter,
    IoError,
    Model,
    ParseError,
    UsageError,
    clustering_accuracy,
    config_keys,
    nmi,
    pinwheel,
    simulate_annotations,
    spearman,
    worker_weight,
)
from ._scdc import train as _train

__all__ = [
    "EpochRecord",
    "Error",
    "InvalidParameter",
    "IoError",
    "Model",
    "ParseError",
    "UsageError",
    "clustering_accuracy",
    "config_keys",
    "nmi",
    "pinwheel",
    "simulate_annotations",
    "spearman",
    "train",
    "worker_weight",
]


def _text(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def train(x, labels=None, annotations=None, num_workers=0, **config):
    """Train on observations `x` (N x D) with optional annotation rows (i, j, worker, label).

    Keyword arguments are run-config keys; `seed` is required.
    """
    rows = np.zeros((0, 4), dtype=np.int64) if annotations is None else np.asarray(annotations, dtype=np.int64)
    settings = {k: _text(v) for k, v in config.items()}
    return _train(np.asarray(x, dtype=np.float64), labels, rows.reshape(-1, 4), num_workers, settings)
