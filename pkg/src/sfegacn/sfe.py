"""Session feature embedding.

Each feature column is quantized to non-negative integers, written out as a
fixed-width big-endian bit matrix, and treated as a sentence whose words are
the rows. A bias-free ``v -> N -> v`` network is trained CBOW-style to predict
every row's bits from the summed bits of its ``c`` neighbours on each side;
the first matrix then projects the bit rows into an ``N``-dimensional space.
The embedded table is the horizontal concatenation of all per-feature
projections, ``t x (M * N)``.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .data import LabeledSet
from .exceptions import ConfigError, RangeError, SchemaError
from .nn import DenseNet, TrainConfig, train_net
from .seeding import derive_seed

log = logging.getLogger(__name__)

MAX_BITS = 62


class ShortColumnWarning(UserWarning):
    """A column is too short to yield any full context window."""


class ClampWarning(UserWarning):
    """Values outside the fitted range were clamped before encoding."""


@dataclass
class Quantizer:
    """Integer conversion ``round((x - offset) / scale)``."""

    offset: float
    scale: float = 1.0

    def __call__(self, col):
        return np.rint((np.asarray(col, dtype=np.float64) - self.offset) / self.scale)


@dataclass
class EmbeddingModel:
    projections: list
    embedding_dim: int
    window: int
    bit_widths: list
    quantizers: list
    columns: list = field(default_factory=list)
    loss_curves: list = field(default_factory=list)

    @property
    def n_features(self):
        return len(self.projections)


def fit_quantizers(X, max_bits=None):
    """One quantizer per column: subtract the column minimum.

    With ``max_bits`` the scale is chosen so that the column range fits in
    that many bits; otherwise the scale is 1 (plain rounding).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ConfigError("cannot fit quantizers on an empty feature set")
    quantizers = []
    for col in X.T:
        lo, hi = float(col.min()), float(col.max())
        scale = 1.0
        if max_bits is not None and hi > lo:
            scale = (hi - lo) / (2 ** int(max_bits) - 1)
        quantizers.append(Quantizer(lo, scale))
    return quantizers


def bit_width(max_value):
    """Bits needed to write ``max_value`` in binary; never less than 1."""
    return max(1, int(max_value).bit_length())


def compute_bit_widths(X, quantizers=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ConfigError("cannot compute bit widths of an empty feature set")
    if quantizers is None:
        quantizers = fit_quantizers(X)
    widths = []
    for i, (col, q) in enumerate(zip(X.T, quantizers)):
        top = q(col).max()
        if top >= 2 ** MAX_BITS:
            raise ConfigError(f"column {i}: quantized maximum {top:g} needs more than {MAX_BITS} bits")
        widths.append(bit_width(max(top, 0)))
    return widths


def encode_bits(values, width):
    """Big-endian fixed-width bits of non-negative integers, one row each."""
    ints = np.asarray(values, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    return ((ints[:, None] >> shifts) & 1).astype(np.float64)


def decode_bits(bits):
    bits = np.asarray(bits).astype(np.int64)
    width = bits.shape[1]
    weights = np.int64(1) << np.arange(width - 1, -1, -1, dtype=np.int64)
    return bits @ weights


def binarize_column(col, quantizer, width, clamp=False, column=None):
    """Encode one feature column as a ``t x width`` 0/1 matrix.

    Out-of-range values raise :class:`RangeError` unless ``clamp`` is set, in
    which case they are clipped to ``[0, 2**width - 1]``. Returns the matrix
    and the number of clamped values.
    """
    q = quantizer(col) if quantizer is not None else np.rint(np.asarray(col, dtype=np.float64))
    top = 2 ** int(width) - 1
    bad = (q < 0) | (q > top)
    n_bad = int(bad.sum())
    if n_bad and not clamp:
        row = int(np.flatnonzero(bad)[0])
        where = "" if column is None else f", column {column}"
        raise RangeError(
            f"row {row}{where}: quantized value {q[row]:g} outside [0, {top}] for {width} bits"
        )
    q = np.clip(q, 0, top)
    return encode_bits(q, int(width)), n_bad


def build_cbow_dataset(bits, window):
    """Context sums and centre rows for every full window.

    For centre ``j`` (``window <= j < t - window``) the input is the sum of
    rows ``j-window .. j+window`` without row ``j``; the target is row ``j``.
    """
    bits = np.asarray(bits, dtype=np.float64)
    t, width = bits.shape
    c = int(window)
    if c < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    n = t - 2 * c
    if n <= 0:
        warnings.warn(f"column of {t} rows is too short for window {c}", ShortColumnWarning,
                      stacklevel=2)
        return np.zeros((0, width)), np.zeros((0, width))
    csum = np.vstack([np.zeros((1, width)), np.cumsum(bits, axis=0)])
    centres = np.arange(c, t - c)
    X = csum[centres + c + 1] - csum[centres - c] - bits[centres]
    return X, bits[centres].copy()


def train_embedding(X, embedding_dim, window, cfg=None, max_bits=None, columns=None):
    """Fit one CBOW projection per feature column of ``X``.

    The net for feature ``i`` is seeded from the stream ``sfe-feature-i`` of
    ``cfg.seed`` so features can be trained in any order.
    """
    if isinstance(X, LabeledSet):
        columns = columns or X.columns
        X = X.X
    X = np.asarray(X, dtype=np.float64)
    if int(embedding_dim) < 1:
        raise ConfigError(f"embedding dimension must be >= 1, got {embedding_dim}")
    if int(window) < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    cfg = cfg or TrainConfig()
    quantizers = fit_quantizers(X, max_bits)
    widths = compute_bit_widths(X, quantizers)
    projections, curves = [], []
    for i, (col, q, v) in enumerate(zip(X.T, quantizers, widths)):
        bits, _ = binarize_column(col, q, v, column=i)
        ctx, centre = build_cbow_dataset(bits, window)
        stream = derive_seed(cfg.seed, f"sfe-feature-{i}")
        net = DenseNet([v, embedding_dim, v], ["linear", "sigmoid"], seed=stream, use_bias=False)
        sub_cfg = TrainConfig(cfg.learning_rate, cfg.batch_size, cfg.epochs, stream)
        curve = train_net(net, ctx, centre, sub_cfg, loss="bce")
        log.debug("feature %d: %d bits, final loss %s", i, v, curve[-1] if curve else None)
        projections.append(net.weights[0].copy())
        curves.append(curve)
    return EmbeddingModel(projections, int(embedding_dim), int(window), widths, quantizers,
                          list(columns) if columns is not None else [], curves)


def embed(X, model, clamp=True):
    """Project a feature table through a fitted model.

    Returns an :class:`~sfegacn.data.LabeledSet` when given one (labels are
    copied through), otherwise a plain ``t x (M*N)`` array.
    """
    source = X if isinstance(X, LabeledSet) else None
    X = np.asarray(source.X if source is not None else X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise SchemaError(
            f"model was fitted on {model.n_features} features, input has shape {X.shape}"
        )
    blocks = []
    n_clamped = 0
    for i, (col, q, v, W) in enumerate(zip(X.T, model.quantizers, model.bit_widths,
                                           model.projections)):
        bits, bad = binarize_column(col, q, v, clamp=clamp, column=i)
        n_clamped += bad
        blocks.append(bits @ W)
    if n_clamped:
        warnings.warn(f"{n_clamped} values clamped into the fitted range", ClampWarning,
                      stacklevel=2)
    E = np.hstack(blocks) if blocks else np.zeros((len(X), 0))
    if source is None:
        return E
    cols = [f"e{i}_{j}" for i in range(model.n_features) for j in range(model.embedding_dim)]
    return LabeledSet(E, source.labels, cols, source.generated, source.source)


class SessionFeatureEmbedding(TransformerMixin, BaseEstimator):
    """Scikit-learn transformer wrapping :func:`train_embedding` / :func:`embed`.

    Parameters
    ----------
    embedding_dim : int
        Width ``N`` of each per-feature projection.
    window : int
        Context rows ``c`` on each side of the centre row.
    learning_rate, batch_size, epochs, seed
        CBOW training settings.
    max_bits : int or None
        Cap on bits per feature; ``None`` quantizes with unit scale.
    """

    def __init__(self, embedding_dim=4, window=2, learning_rate=0.5, batch_size=32,
                 epochs=50, seed=0, max_bits=None):
        self.embedding_dim = embedding_dim
        self.window = window
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.max_bits = max_bits

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        cfg = TrainConfig(self.learning_rate, self.batch_size, self.epochs, self.seed)
        self.model_ = train_embedding(X, self.embedding_dim, self.window, cfg, self.max_bits)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        return embed(X, self.model_)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "model_")
        return np.array([f"e{i}_{j}" for i in range(self.model_.n_features)
                         for j in range(self.embedding_dim)], dtype=object)
