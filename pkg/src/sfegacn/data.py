"""Feature tables: CSV ingestion, synthetic generation and subsampling."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DataFormatError

UNLABELED = ""


@dataclass
class LabeledSet:
    """A ``t x M`` real matrix with one label per row.

    Rows whose label equals :data:`UNLABELED` carry no category. ``generated``
    flags rows produced by a generator rather than observed.
    """

    X: np.ndarray
    labels: np.ndarray
    columns: list = field(default_factory=list)
    generated: np.ndarray = None
    source: str = ""

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise DataFormatError(f"feature matrix must be 2-D, got shape {self.X.shape}")
        self.labels = np.asarray(self.labels, dtype=object).astype(str).astype(object)
        if len(self.labels) != len(self.X):
            raise DataFormatError(f"{len(self.X)} rows but {len(self.labels)} labels")
        if not self.columns:
            self.columns = [f"f{i}" for i in range(self.X.shape[1])]
        self.columns = list(self.columns)
        if len(self.columns) != self.X.shape[1]:
            raise DataFormatError(f"{self.X.shape[1]} columns but {len(self.columns)} names")
        if self.generated is None:
            self.generated = np.zeros(len(self.X), dtype=bool)
        self.generated = np.asarray(self.generated, dtype=bool)

    def __len__(self):
        return len(self.X)

    @property
    def n_features(self):
        return self.X.shape[1]

    @property
    def labeled_mask(self):
        return self.labels != UNLABELED

    def known_labels(self):
        """Sorted distinct labels, excluding :data:`UNLABELED`."""
        return sorted(set(self.labels[self.labeled_mask]))

    def subset(self, idx):
        idx = np.asarray(idx)
        return LabeledSet(self.X[idx], self.labels[idx], self.columns,
                          self.generated[idx], self.source)

    def with_label(self, label):
        return self.subset(np.flatnonzero(self.labels == label))


SessionFeatureSet = LabeledSet
EmbeddedSet = LabeledSet


def concat(sets):
    sets = list(sets)
    if not sets:
        raise ConfigError("nothing to concatenate")
    width = sets[0].n_features
    for s in sets:
        if s.n_features != width:
            raise DataFormatError(f"cannot stack widths {width} and {s.n_features}")
    return LabeledSet(
        np.vstack([s.X for s in sets]),
        np.concatenate([s.labels for s in sets]),
        sets[0].columns,
        np.concatenate([s.generated for s in sets]),
        sets[0].source,
    )


def load_csv(path, label_column="label", generated_column=None):
    """Read a comma-separated feature table with a header row.

    Every column except ``label_column`` (and ``generated_column``, if
    present) must parse as a finite float. An empty label cell means the row
    is unlabeled.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file, header row expected") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataFormatError(f"{path}: label column {label_column!r} not in header {header}")
        label_pos = header.index(label_column)
        gen_pos = header.index(generated_column) if generated_column in header else None
        feat_pos = [i for i in range(len(header)) if i not in (label_pos, gen_pos)]
        rows, labels, generated = [], [], []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}: row {row_no} has {len(row)} cells, header has {len(header)}"
                )
            values = []
            for i in feat_pos:
                cell = row[i].strip()
                try:
                    value = float(cell)
                except ValueError:
                    raise DataFormatError(
                        f"{path}: row {row_no}, column {header[i]!r}: not a number: {cell!r}"
                    ) from None
                if not math.isfinite(value):
                    raise DataFormatError(
                        f"{path}: row {row_no}, column {header[i]!r}: non-finite value {cell!r}"
                    )
                values.append(value)
            rows.append(values)
            labels.append(row[label_pos].strip())
            if gen_pos is not None:
                generated.append(row[gen_pos].strip() not in ("", "0", "false", "False"))
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(feat_pos))
    return LabeledSet(X, labels, [header[i] for i in feat_pos],
                      generated if gen_pos is not None else None, str(path))


def save_csv(data, path, label_column="label", generated_column=None):
    """Write ``data`` so that :func:`load_csv` reproduces it exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = list(data.columns) + [label_column]
        if generated_column:
            header.append(generated_column)
        writer.writerow(header)
        for i in range(len(data)):
            row = [repr(float(v)) for v in data.X[i]] + [data.labels[i]]
            if generated_column:
                row.append("1" if data.generated[i] else "0")
            writer.writerow(row)


@dataclass
class SynthClass:
    label: str
    mean: tuple
    var: tuple
    count: int


@dataclass
class SynthConfig:
    """Gaussian classes with diagonal covariance.

    ``overlap`` shrinks every class mean toward the grand mean by
    ``1 / (1 + overlap)``; 0 leaves the means as given. With
    ``distribution="lognormal"`` each Gaussian draw ``g`` is mapped to the
    count-like value ``rint(exp(g))``, which mimics heavy-tailed session
    statistics such as byte and packet counts.
    """

    classes: list
    overlap: float = 0.0
    seed: int = 0
    distribution: str = "normal"

    def __post_init__(self):
        if not self.classes:
            raise ConfigError("at least one class is required")
        dim = len(self.classes[0].mean)
        for c in self.classes:
            if c.count < 1:
                raise ConfigError(f"class {c.label!r}: count must be positive")
            if len(c.mean) != dim or len(c.var) != dim:
                raise ConfigError(f"class {c.label!r}: mean/var must have length {dim}")
            if any(v < 0 for v in c.var):
                raise ConfigError(f"class {c.label!r}: variances must be non-negative")
        if self.overlap < 0:
            raise ConfigError("overlap must be non-negative")
        if self.distribution not in ("normal", "lognormal"):
            raise ConfigError(f"unknown distribution {self.distribution!r}")


def synth_generate(cfg):
    rng = np.random.default_rng(cfg.seed)
    means = np.array([c.mean for c in cfg.classes], dtype=np.float64)
    center = means.mean(axis=0)
    means = center + (means - center) / (1.0 + cfg.overlap)
    blocks, labels = [], []
    for c, mean in zip(cfg.classes, means):
        std = np.sqrt(np.asarray(c.var, dtype=np.float64))
        block = mean + std * rng.standard_normal((c.count, len(mean)))
        if cfg.distribution == "lognormal":
            block = np.rint(np.exp(block))
        blocks.append(block)
        labels.extend([c.label] * c.count)
    return LabeledSet(np.vstack(blocks), labels, source="synthetic")


def make_synth_config(n_classes, n_features, count, separation=10.0, spread=1.0,
                      overlap=0.0, seed=0, prefix="c", distribution="normal", low=0.0):
    """Random class means in ``[low, low + separation]^M`` with variances ``spread**2``."""
    rng = np.random.default_rng(seed)
    classes = []
    for k in range(n_classes):
        mean = tuple(rng.uniform(low, low + separation, n_features))
        var = tuple(np.full(n_features, spread ** 2))
        classes.append(SynthClass(f"{prefix}{k}", mean, var, int(count)))
    return SynthConfig(classes, overlap=overlap, seed=seed, distribution=distribution)


def _per_label(value, label, what):
    if isinstance(value, dict):
        if label not in value:
            raise ConfigError(f"no {what} given for label {label!r}")
        return value[label]
    return value


def subsample(data, rate=None, count=None, seed=0):
    """Uniform per-label sampling without replacement.

    ``rate`` (in ``(0, 1]``) or ``count`` may be a scalar or a mapping from
    label to value. Row order of the input is preserved.
    """
    if (rate is None) == (count is None):
        raise ConfigError("give exactly one of rate or count")
    rng = np.random.default_rng(seed)
    keep = []
    for label in sorted(set(data.labels)):
        idx = np.flatnonzero(data.labels == label)
        if rate is not None:
            r = float(_per_label(rate, label, "rate"))
            if not 0.0 < r <= 1.0:
                raise ConfigError(f"rate for {label!r} must lie in (0, 1], got {r}")
            n = max(1, int(round(r * len(idx))))
        else:
            n = int(_per_label(count, label, "count"))
            if n < 0 or n > len(idx):
                raise ConfigError(f"requested {n} rows of {label!r}, only {len(idx)} available")
        keep.append(rng.choice(idx, size=n, replace=False))
    return data.subset(np.sort(np.concatenate(keep)) if keep else np.array([], dtype=int))


def split_labeled(data, rate, holdout=(), seed=0):
    """Reveal the labels of a per-category fraction of rows.

    Categories in ``holdout`` are never revealed. Returns ``(labeled,
    unlabeled)``; the unlabeled set keeps its true labels so detections can
    be scored, and both keep the input row order.
    """
    if not 0.0 < float(rate) <= 1.0:
        raise ConfigError(f"label rate must lie in (0, 1], got {rate}")
    holdout = {str(h) for h in holdout}
    missing = holdout - set(data.known_labels())
    if missing:
        raise ConfigError(f"held-out labels not in the data: {', '.join(sorted(missing))}")
    rng = np.random.default_rng(seed)
    mask = np.zeros(len(data), dtype=bool)
    for label in data.known_labels():
        if label in holdout:
            continue
        idx = np.flatnonzero(data.labels == label)
        n = max(1, int(round(float(rate) * len(idx))))
        mask[rng.choice(idx, size=n, replace=False)] = True
    return data.subset(np.flatnonzero(mask)), data.subset(np.flatnonzero(~mask))
