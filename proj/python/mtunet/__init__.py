"""MT-UNet: saliency prediction and classification with uncertainty-weighted multi-task losses."""

import json as _json
import os as _os

from . import _core
from ._core import (
    ConfigError,
    DivergenceError,
    Error,
    FormatError,
    ShapeError,
    accuracy,
    auc_multiclass,
    auc_one_vs_rest,
    classification_loss,
    cross_entropy,
    entropy,
    equilibrium_f,
    equilibrium_inverse,
    hs,
    kld,
    labels,
    pcc,
    saliency_loss,
    scheme_total,
    sigma_descent_trace,
    sigma_gradient,
    sigma_lab,
    split,
)

__version__ = "0.1.0"


def _dump(config):
    return _json.dumps({k: _os.fspath(v) if isinstance(v, _os.PathLike) else v for k, v in config.items()})


def generate(out, **config):
    """Writes a synthetic dataset to `out` and returns its sample count."""
    return _core.generate(_dump(config), out)


def train(dataset, output_dir, **config):
    """Trains one run. Keyword arguments are flat training/model config keys."""
    return _core.train(_dump(dict(config, dataset=dataset, output_dir=output_dir)))


def evaluate(checkpoint, dataset, split="test", out_csv="eval_metrics.csv"):
    return _core.evaluate(checkpoint, dataset, split, out_csv)


def ablate(dataset, output_dir, seeds=(1, 2, 3, 4, 5), configs=(), **config):
    """Median and std per metric for each ablation configuration."""
    cfg = dict(config, dataset=dataset, output_dir=output_dir)
    return _core.ablate(_dump(cfg), list(seeds), output_dir, list(configs))
