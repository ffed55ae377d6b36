"""Generative adversarial cooperative network (GACN).

A generator ``G`` is trained against an adversarial discriminator ``D_adv``
(target rows vs. fakes) while a cooperative discriminator ``D_coo`` (side
rows vs. fakes) watches it. When the mean ``D_coo`` score of fresh fakes
stops dropping, the generator is pulled back toward its last backup and
``D_coo`` is retrained on fresh samples.
"""

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import UNLABELED, LabeledSet, concat
from .exceptions import ConfigError, NumericError
from .nn import (DenseNet, TrainConfig, interpolate_params, loss_and_logit_grad,
                 restore, sgd_step, snapshot, train_net)
from .seeding import derive_seed, rng_for

log = logging.getLogger(__name__)

NOISE_MODES = ("normal", "side")


@dataclass(frozen=True)
class GacnConfig:
    """Hyperparameters of one GACN run.

    ``e_r`` is the rollback-check horizon in iterations, ``eps_r`` the drop a
    score must exceed over that horizon to avoid a rollback. ``eps_r=inf``
    disables rollback entirely (plain GAN with an idle ``D_coo``).
    ``noise_mode="side"`` feeds the generator side rows plus Gaussian noise
    of std ``noise_scale`` instead of pure noise; it requires
    ``noise_dim == data_dim``. With ``residual`` the generator adds its
    input to its output, so generation starts from the noise rows themselves
    (also requires ``noise_dim == data_dim``).
    """

    target_label: str = None
    k: int = 1
    cy_b: int = 10
    e_r: int = 20
    c_r: float = 0.5
    iterations: int = 500
    noise_dim: int = 8
    batch_size: int = 32
    learning_rate: float = 0.05
    eps_r: float = 0.01
    hidden: tuple = (32,)
    activation: str = "relu"
    noise_mode: str = "normal"
    noise_scale: float = 1.0
    residual: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.cy_b < 1:
            raise ConfigError(f"cy_b must be >= 1, got {self.cy_b}")
        if self.e_r < 1:
            raise ConfigError(f"e_r must be >= 1, got {self.e_r}")
        if not 0.0 <= self.c_r <= 1.0:
            raise ConfigError(f"c_r must lie in [0, 1], got {self.c_r}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.noise_dim < 1 or self.batch_size < 1:
            raise ConfigError("noise_dim and batch_size must be positive")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not self.eps_r >= 0:
            raise ConfigError(f"eps_r must be non-negative, got {self.eps_r}")
        if self.noise_mode not in NOISE_MODES:
            raise ConfigError(f"noise_mode must be one of {NOISE_MODES}")

    @property
    def rollback_enabled(self):
        return not math.isinf(self.eps_r)


@dataclass
class HistoryRecord:
    iteration: int
    mean_dcoo: float
    min_dcoo: float
    max_dcoo: float
    rollback: bool = False


@dataclass
class GacnModels:
    G: DenseNet
    D_adv: DenseNet
    D_coo: DenseNet
    backup: object
    config: GacnConfig
    history: list = field(default_factory=list)
    noise_pool: np.ndarray = None

    @property
    def data_dim(self):
        return self.G.layer_dims[-1]

    @property
    def rollback_iterations(self):
        return [h.iteration for h in self.history if h.rollback]


def rollback_due(scores, e_r, eps_r):
    """True when the last ``e_r`` scores never beat the score before them by more than ``eps_r``.

    The reference is the score recorded ``e_r`` iterations ago; the
    improvement is that reference minus the minimum over the window.
    """
    if math.isinf(eps_r) or len(scores) < e_r + 1:
        return False
    reference = scores[-e_r - 1]
    best = min(scores[-e_r:])
    return reference - best <= eps_r


def _draw_noise(rng, n, cfg, pool):
    if cfg.noise_mode == "side":
        rows = pool[rng.integers(0, len(pool), size=n)]
        return rows + cfg.noise_scale * rng.standard_normal(rows.shape)
    return rng.standard_normal((n, cfg.noise_dim))


def _sample_rows(rng, X, n):
    return X[rng.integers(0, len(X), size=n)]


def _disc_batch(real, fake):
    batch = np.vstack([real, fake])
    targets = np.concatenate([np.ones(len(real)), np.zeros(len(fake))])[:, None]
    return batch, targets


def generator_output(G, z, residual=False):
    out = G.forward(z)
    return out + z if residual else out


def generator_step(G, D_adv, z, lr, residual=False):
    """Non-saturating update: descend ``-mean log D_adv(G(z))`` on ``G`` only."""
    fake, g_cache = G.forward_cache(z)
    if residual:
        fake = fake + z
    _, d_cache = D_adv.forward_cache(fake)
    logits = d_cache[-1][1]
    value, grad = loss_and_logit_grad(D_adv, logits, np.ones_like(logits), "bce")
    _, _, grad_fake = D_adv.backward(d_cache, grad)
    # grad_fake is w.r.t. G's output; G's output layer is linear
    grad_w, grad_b, _ = G.backward(g_cache, grad_fake)
    G.apply_gradients(grad_w, grad_b, lr)
    return value


def build_networks(data_dim, cfg):
    hidden = tuple(cfg.hidden)
    acts = [cfg.activation] * len(hidden)
    G = DenseNet([cfg.noise_dim, *hidden, data_dim], acts + ["linear"],
                 seed=derive_seed(cfg.seed, "init-G"))
    D_adv = DenseNet([data_dim, *hidden, 1], acts + ["sigmoid"],
                     seed=derive_seed(cfg.seed, "init-D_adv"))
    D_coo = DenseNet([data_dim, *hidden, 1], acts + ["sigmoid"],
                     seed=derive_seed(cfg.seed, "init-D_coo"))
    return G, D_adv, D_coo


def train_gacn(X, y, cfg, score_fn=None, on_rollback=None, on_iteration=None):
    """Train a GACN for ``cfg.target_label`` on rows ``X`` with labels ``y``.

    Rows with any other (non-empty) label are side samples.

    Parameters
    ----------
    score_fn : callable, optional
        ``score_fn(iteration, D_coo_scores) -> float`` replaces the recorded
        mean ``D_coo`` score (used to script the rollback trigger).
    on_rollback : callable, optional
        Called as ``on_rollback(iteration, backup, before, after)`` with
        parameter snapshots around every rollback.
    on_iteration : callable, optional
        Called as ``on_iteration(iteration, models)`` at the end of every
        outer iteration.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=object).astype(str)
    A = cfg.target_label
    if A is None:
        raise ConfigError("target_label is required")
    target = X[y == str(A)]
    side = X[(y != str(A)) & (y != UNLABELED)]
    if len(target) == 0:
        raise ConfigError(f"no rows with target label {A!r}")
    if len(side) == 0:
        raise ConfigError(f"no side rows (labels other than {A!r})")
    data_dim = X.shape[1]
    if (cfg.noise_mode == "side" or cfg.residual) and cfg.noise_dim != data_dim:
        raise ConfigError("side noise and residual generators need noise_dim equal to the data width")

    G, D_adv, D_coo = build_networks(data_dim, cfg)
    models = GacnModels(G, D_adv, D_coo, snapshot(G), cfg,
                        noise_pool=side.copy() if cfg.noise_mode == "side" else None)
    streams = {tag: rng_for(cfg.seed, tag)
               for tag in ("z1", "real", "side1", "z2", "z3", "side2", "z4")}
    r = cfg.batch_size
    lr = cfg.learning_rate
    pool = models.noise_pool
    scores = []

    def gen(z):
        return generator_output(G, z, cfg.residual)

    for it in range(cfg.iterations):
        try:
            for _ in range(cfg.k):
                fake = gen(_draw_noise(streams["z1"], r, cfg, pool))
                x_real = _sample_rows(streams["real"], target, r)
                x_side = _sample_rows(streams["side1"], side, r)
                sgd_step(D_adv, *_disc_batch(x_real, fake), lr)
                sgd_step(D_coo, *_disc_batch(x_side, fake), lr)

            coo = D_coo.forward(gen(_draw_noise(streams["z2"], r, cfg, pool)))[:, 0]
            score = float(coo.mean()) if score_fn is None else float(score_fn(it, coo))
            scores.append(score)
            record = HistoryRecord(it, score, float(coo.min()), float(coo.max()))

            if (it + 1) % cfg.cy_b == 0:
                models.backup = snapshot(G)

            if rollback_due(scores, cfg.e_r, cfg.eps_r):
                before = snapshot(G)
                after = interpolate_params(models.backup, before, cfg.c_r)
                restore(G, after)
                record.rollback = True
                if on_rollback is not None:
                    on_rollback(it, models.backup, before, snapshot(G))
                # iterations since the last backup; at least one retraining pass
                n_retrain = (it + 1) % cfg.cy_b or 1
                for _ in range(n_retrain):
                    fake = gen(_draw_noise(streams["z3"], r, cfg, pool))
                    x_side = _sample_rows(streams["side2"], side, r)
                    sgd_step(D_coo, *_disc_batch(x_side, fake), lr)

            g_loss = generator_step(G, D_adv, _draw_noise(streams["z4"], r, cfg, pool), lr,
                                    cfg.residual)
            if not np.isfinite(g_loss):
                raise NumericError(f"non-finite generator loss {g_loss}")
        except NumericError as exc:
            raise NumericError(str(exc), iteration=it) from None
        models.history.append(record)
        if on_iteration is not None:
            on_iteration(it, models)

    log.debug("GACN %r: %d iterations, %d rollbacks", A, cfg.iterations,
              len(models.rollback_iterations))
    return models


def generate(models, n, seed=0):
    """Draw ``n`` generated rows; deterministic under ``seed``."""
    n = int(n)
    if n <= 0:
        return np.zeros((0, models.data_dim))
    rng = rng_for(seed, "generate")
    z = _draw_noise(rng, n, models.config, models.noise_pool)
    return generator_output(models.G, z, models.config.residual)


def augment_all(data, counts, template=None, return_models=False):
    """Augment every labelled category with GACN samples.

    ``counts`` maps label to number of rows to generate (or is one int for
    all labels). Each label gets its own GACN trained with that label as
    target and every other labelled row as side samples, seeded from the
    stream ``gacn-label-<label>`` of ``template.seed``. Returns the original
    rows followed by generated rows (flagged in ``generated``); with
    ``return_models`` also the dict of trained models.
    """
    template = template or GacnConfig()
    labels = data.known_labels()
    if isinstance(counts, dict):
        for label in counts:
            if str(label) not in labels:
                raise ConfigError(f"label {label!r} not present in the data")
        per_label = {str(k): int(v) for k, v in counts.items()}
    else:
        per_label = {label: int(counts) for label in labels}
    parts = [data]
    models = {}
    for label in labels:
        n = per_label.get(label, 0)
        if n <= 0:
            continue
        cfg = replace(template, target_label=label,
                      seed=derive_seed(template.seed, f"gacn-label-{label}"))
        models[label] = m = train_gacn(data.X, data.labels, cfg)
        rows = generate(m, n, seed=derive_seed(cfg.seed, "augment"))
        parts.append(LabeledSet(rows, [label] * n, data.columns, np.ones(n, dtype=bool),
                                data.source))
    out = concat(parts)
    return (out, models) if return_models else out


@dataclass
class AffinityReport:
    mins: list = field(default_factory=list)
    means: list = field(default_factory=list)
    maxs: list = field(default_factory=list)

    @property
    def converged_epoch(self):
        """First epoch whose mean evaluator score is below 0.5, else None."""
        for epoch, m in enumerate(self.means):
            if m < 0.5:
                return epoch
        return None

    def __len__(self):
        return len(self.means)


class SideAffinityEvaluator:
    """Binary evaluator scoring how strongly samples lean toward side rows.

    Target rows are labelled 0 and side rows 1, so a score below 0.5 means a
    sample does not lean toward the side categories.
    """

    def __init__(self, hidden=(16,), train_cfg=None):
        self.hidden = tuple(hidden)
        self.train_cfg = train_cfg or TrainConfig(learning_rate=0.1, batch_size=32, epochs=200)

    def fit(self, target, side):
        target = np.asarray(target, dtype=np.float64)
        side = np.asarray(side, dtype=np.float64)
        if len(target) == 0 or len(side) == 0:
            raise ConfigError("evaluator needs both target and side rows")
        X = np.vstack([target, side])
        Y = np.concatenate([np.zeros(len(target)), np.ones(len(side))])[:, None]
        hidden = self.hidden
        self.net_ = DenseNet([X.shape[1], *hidden, 1],
                             ["tanh"] * len(hidden) + ["sigmoid"],
                             seed=derive_seed(self.train_cfg.seed, "evaluator"))
        self.loss_curve_ = train_net(self.net_, X, Y, self.train_cfg, loss="bce")
        return self

    def score(self, batch):
        return self.net_.forward(np.asarray(batch, dtype=np.float64))[:, 0]

    def report(self, batches):
        rep = AffinityReport()
        for batch in batches:
            s = self.score(batch)
            rep.mins.append(float(s.min()))
            rep.means.append(float(s.mean()))
            rep.maxs.append(float(s.max()))
        return rep


def eval_side_affinity(target, side, batches, hidden=(16,), train_cfg=None):
    """Pre-train a :class:`SideAffinityEvaluator` and score each generated batch."""
    evaluator = SideAffinityEvaluator(hidden, train_cfg).fit(target, side)
    return evaluator.report(batches)


def write_history_csv(history, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "mean_dcoo", "min", "max", "rollback_flag"])
        for h in history:
            writer.writerow([h.iteration, repr(h.mean_dcoo), repr(h.min_dcoo),
                             repr(h.max_dcoo), int(h.rollback)])


def write_affinity_csv(report, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "mean", "min", "max"])
        for i, (lo, m, hi) in enumerate(zip(report.mins, report.means, report.maxs)):
            writer.writerow([i, repr(m), repr(lo), repr(hi)])


class GACN(BaseEstimator):
    """Scikit-learn style wrapper: ``fit(X, y)`` then ``sample(n)``.

    All constructor arguments mirror :class:`GacnConfig`.
    """

    def __init__(self, target_label=None, k=1, cy_b=10, e_r=20, c_r=0.5, iterations=500,
                 noise_dim=8, batch_size=32, learning_rate=0.05, eps_r=0.01, hidden=(32,),
                 activation="relu", noise_mode="normal", noise_scale=1.0, residual=False,
                 seed=0):
        self.target_label = target_label
        self.k = k
        self.cy_b = cy_b
        self.e_r = e_r
        self.c_r = c_r
        self.iterations = iterations
        self.noise_dim = noise_dim
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.eps_r = eps_r
        self.hidden = hidden
        self.activation = activation
        self.noise_mode = noise_mode
        self.noise_scale = noise_scale
        self.residual = residual
        self.seed = seed

    def _config(self):
        return GacnConfig(**self.get_params())

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=False)
        self.models_ = train_gacn(X, y, self._config())
        self.history_ = self.models_.history
        self.n_features_in_ = X.shape[1]
        return self

    def sample(self, n_samples=1, seed=None):
        check_is_fitted(self, "models_")
        return generate(self.models_, n_samples, self.seed if seed is None else seed)

    def side_score(self, X):
        """Cooperative discriminator output for rows of ``X``."""
        check_is_fitted(self, "models_")
        return self.models_.D_coo.forward(check_array(X, dtype=np.float64))[:, 0]
