import json
import logging
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import pandas as pd
import torch

from ro_norm.utils._errors import ConfigError, DataError, ShapeError

logger = logging.getLogger(__name__)


def _check_pair(pred, truth):
    if tuple(pred.shape) != tuple(truth.shape):
        raise ShapeError(
            f"prediction of shape {tuple(pred.shape)} against truth of shape "
            f"{tuple(truth.shape)}"
        )


def relative_l2_loss(pred, truth, strict=True):
    """Mean over samples of ``||pred - truth|| / ||truth||``.

    Each sample is flattened over all remaining axes. Arrays are converted
    to float64 tensors, tensors keep their graph.

    Parameters
    ----------
    pred, truth : tensor | array, shape=(N, ...)
    strict : bool
        If True a zero-norm target raises ``DataError``. Otherwise the
        sample is skipped with a warning.

    Returns
    -------
    loss : tensor, shape=()
    """
    if not torch.is_tensor(pred):
        pred = torch.as_tensor(pred, dtype=torch.float64)
    if not torch.is_tensor(truth):
        truth = torch.as_tensor(truth, dtype=pred.dtype)
    _check_pair(pred, truth)
    n = pred.shape[0]
    norms = truth.reshape(n, -1).norm(dim=1)
    residuals = (pred - truth).reshape(n, -1).norm(dim=1)
    zero = norms == 0
    if zero.any():
        indices = torch.nonzero(zero).flatten().tolist()
        if strict:
            raise DataError(f"targets {indices} have zero norm")
        message = f"skipping zero-norm targets {indices}"
        warnings.warn(message)
        logger.warning(message)
        if zero.all():
            raise DataError("every target has zero norm")
        residuals, norms = residuals[~zero], norms[~zero]
    return (residuals / norms).mean()


def e_l2(pred, truth):
    """Relative L2 test error, zero-norm samples skipped."""
    with torch.no_grad():
        return float(relative_l2_loss(pred, truth, strict=False))


def _max_errors(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    _check_pair(pred, truth)
    return np.abs(pred - truth).reshape(len(pred), -1).max(axis=1)


def mme(pred, truth):
    """Mean over samples of the maximum absolute pointwise error."""
    return float(_max_errors(pred, truth).mean())


def max_error_distribution(pred, truth):
    return np.sort(_max_errors(pred, truth))


@dataclass(frozen=True)
class PointSelection:
    """Random space-time points shared by all samples of a histogram."""

    n_space: int = 600
    n_time: int = 10
    seed: int = 0

    def indices(self, n_x, n_t):
        if self.n_space < 1 or self.n_time < 1:
            raise ConfigError(f"empty point selection {self}")
        rng = np.random.RandomState(self.seed)
        xs = np.sort(rng.choice(n_x, min(self.n_space, n_x), replace=False))
        ts = np.sort(rng.choice(n_t, min(self.n_time, n_t), replace=False))
        return xs, ts


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    threshold: float = None
    fraction_below: float = None

    @property
    def n_points(self):
        return int(self.counts.sum())

    def to_frame(self):
        return pd.DataFrame(
            {"left": self.edges[:-1], "right": self.edges[1:], "count": self.counts}
        )


def error_histogram(pred, truth, selection=PointSelection(), n_bins=50,
                    threshold=None, bins=None):
    """Histogram of absolute errors at randomly selected space-time points.

    Parameters
    ----------
    pred, truth : array, shape=(N, n_x, n_t, c)
    selection : PointSelection
        Seeded choice of spatial and temporal indices.
    n_bins : int
        Number of equal bins on ``[0, max(error, threshold)]`` when
        ``bins`` is not given.
    threshold : float | None
        If given, the fraction of errors strictly below it is reported.
    bins : array | None
        Explicit bin edges. Errors outside them are counted in the first
        or last bin.

    Returns
    -------
    histogram : Histogram
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    _check_pair(pred, truth)
    xs, ts = selection.indices(pred.shape[1], pred.shape[2])
    errors = np.abs(pred - truth)[:, xs][:, :, ts].ravel()
    if bins is None:
        upper = max(errors.max(), threshold or 0.0)
        bins = np.linspace(0.0, upper if upper > 0 else 1.0, n_bins + 1)
    bins = np.asarray(bins, dtype=np.float64)
    counts, edges = np.histogram(np.clip(errors, bins[0], bins[-1]), bins=bins)
    below = None if threshold is None else float((errors < threshold).mean())
    return Histogram(edges, counts, threshold, below)


@dataclass
class EvalReport:
    """Test-split metrics of one trained model."""

    e_l2: float
    mme: float
    max_errors: np.ndarray
    histogram: Histogram
    wall_clock_s: float = 0.0
    n_params: int = 0
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_predictions(cls, pred, truth, wall_clock_s=0.0, n_params=0,
                         selection=PointSelection(), threshold=None, **meta):
        return cls(
            e_l2=e_l2(pred, truth),
            mme=mme(pred, truth),
            max_errors=max_error_distribution(pred, truth),
            histogram=error_histogram(pred, truth, selection, threshold=threshold),
            wall_clock_s=wall_clock_s,
            n_params=n_params,
            meta=meta,
        )

    def summary(self):
        row = dict(self.meta)
        row.update(
            e_l2=self.e_l2,
            mme=self.mme,
            n_params=self.n_params,
            wall_clock_s=self.wall_clock_s,
        )
        if self.histogram.fraction_below is not None:
            row["fraction_below"] = self.histogram.fraction_below
        return row

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        report = self.summary()
        report["max_errors"] = self.max_errors.tolist()
        report["histogram"] = {
            k: v.tolist() if isinstance(v, np.ndarray) else v
            for k, v in asdict(self.histogram).items()
        }
        with open(directory / "report.json", "w") as f:
            json.dump(report, f, indent=2, default=str)
        self.histogram.to_frame().to_csv(directory / "histogram.csv", index=False)
        pd.DataFrame({"max_error": self.max_errors}).to_csv(
            directory / "max_errors.csv", index_label="sample"
        )
        return directory


def aggregate_reports(rows, by=("name", "method", "config_hash")):
    """Mean and standard deviation of repeated runs.

    Parameters
    ----------
    rows : list of dict | DataFrame
        One ``EvalReport.summary()`` per run.
    by : tuple of str
        Columns identifying a configuration. Missing ones are ignored.

    Returns
    -------
    table : DataFrame
        One row per configuration with ``<metric>_mean``, ``<metric>_std``
        and a ``<metric>`` column formatted as ``"mean (std)"``.
    """
    df = pd.DataFrame(rows)
    by = [c for c in by if c in df.columns]
    if not by:
        df["name"] = "run"
        by = ["name"]
    metrics = [m for m in ("e_l2", "mme", "wall_clock_s") if m in df.columns]
    table = df.groupby(by).agg({m: ["mean", "std"] for m in metrics})
    table.columns = [f"{m}_{stat}" for m, stat in table.columns]
    table = table.fillna(0.0)
    for m in metrics:
        table[m] = table.apply(
            lambda x: f"{x[f'{m}_mean']:.4g} ({x[f'{m}_std']:.2g})", axis=1
        )
    if "n_params" in df.columns:
        table["n_params"] = df.groupby(by).n_params.first()
    table["repeats"] = df.groupby(by).size()
    return table.reset_index()
