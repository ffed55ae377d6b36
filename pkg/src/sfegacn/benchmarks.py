"""Seeded desk-scale experiments.

* :func:`run_scenario`: macro-F1 of a classifier trained on few-shot rows
  with no augmentation, plain-GAN augmentation and GACN augmentation.
* :func:`embedding_benchmark`: validation loss of one classifier on raw and
  on embedded count-like session features.
* :func:`rollback_benchmark`: first iteration at which generated rows stop
  leaning toward the side category, with and without rollback.
* :func:`detection_benchmark`: a five-category scenario with one category
  held out as the unknown attack.
"""

import math
import time
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
from sklearn.metrics import f1_score

from .classifier import DenseClassifier
from .config import build_dataclass, dataclass_keys, read_kv
from .data import SynthConfig, make_synth_config, split_labeled, synth_generate
from .detector import DetectionConfig, detect
from .exceptions import ConfigError
from .gacn import (GacnConfig, SideAffinityEvaluator, _draw_noise, augment_all,
                   generator_output, train_gacn)
from .nn import TrainConfig
from .seeding import derive_seed, rng_for
from .sfe import embed, train_embedding

VARIANTS = ("gacn", "gan", "none")


@dataclass(frozen=True)
class ClassifierConfig:
    hidden: tuple = (32, 32)
    learning_rate: float = 0.05
    batch_size: int = 32
    epochs: int = 30

    def build(self, seed):
        return DenseClassifier(hidden=self.hidden, learning_rate=self.learning_rate,
                               batch_size=self.batch_size, epochs=self.epochs, seed=seed)


@dataclass(frozen=True)
class FewShotScenario:
    """Few-shot augmentation comparison read from a ``key=value`` file.

    Plain keys set the fields below; ``gacn.*`` keys the generator and
    ``classifier.*`` keys the downstream classifier. ``variants`` is a comma
    list drawn from ``gacn``, ``gan`` and ``none``.
    """

    classes: int = 5
    features: int = 8
    separation: float = 8.0
    spread: float = 1.0
    distribution: str = "normal"
    shots: int = 5
    test_count: int = 300
    gen_count: int = 100
    variants: str = ",".join(VARIANTS)
    seeds: str = "0,1,2"
    gacn: GacnConfig = GacnConfig(iterations=1000, noise_dim=4, learning_rate=0.05)
    classifier: ClassifierConfig = ClassifierConfig()

    @property
    def variant_list(self):
        names = [v.strip() for v in self.variants.split(",") if v.strip()]
        for v in names:
            if v not in VARIANTS:
                raise ConfigError(f"unknown variant {v!r}; choose from {', '.join(VARIANTS)}")
        return names

    @property
    def seed_list(self):
        try:
            return [int(s) for s in self.seeds.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"seeds must be a comma list of integers, got {self.seeds!r}") from None

    @classmethod
    def from_settings(cls, settings, **overrides):
        allowed = (set(dataclass_keys(cls)) | set(dataclass_keys(GacnConfig, "gacn."))
                   | set(dataclass_keys(ClassifierConfig, "classifier.")))
        unknown = sorted(set(settings) - allowed)
        if unknown:
            raise ConfigError(f"unknown scenario keys: {', '.join(unknown)}")
        base = cls()
        gacn = build_dataclass(GacnConfig, settings, "gacn.", base.gacn)
        clf = build_dataclass(ClassifierConfig, settings, "classifier.", base.classifier)
        return build_dataclass(cls, settings, base=base, gacn=gacn, classifier=clf, **overrides)

    def as_dict(self):
        out = {}
        for key in dataclass_keys(type(self)):
            out[key] = getattr(self, key)
        for key in dataclass_keys(GacnConfig):
            if key != "target_label":
                out[f"gacn.{key}"] = getattr(self.gacn, key)
        for key in dataclass_keys(ClassifierConfig):
            out[f"classifier.{key}"] = getattr(self.classifier, key)
        return out


def default_scenario_path():
    return resources.files("sfegacn") / "fixtures" / "fewshot.scenario"


def load_scenario(path=None, **overrides):
    """Read a scenario file; ``None`` loads the shipped few-shot fixture."""
    path = default_scenario_path() if path is None else path
    return FewShotScenario.from_settings(read_kv(path), **overrides)


def scenario_data(scenario, seed):
    """Few-shot training rows and a large held-out test set sharing class means."""
    cfg = make_synth_config(scenario.classes, scenario.features, scenario.shots,
                            separation=scenario.separation, spread=scenario.spread,
                            seed=derive_seed(seed, "means"),
                            distribution=scenario.distribution)
    train = synth_generate(replace(cfg, seed=derive_seed(seed, "train")))
    test_classes = [replace(c, count=scenario.test_count) for c in cfg.classes]
    test = synth_generate(SynthConfig(test_classes, cfg.overlap, derive_seed(seed, "test"),
                                      cfg.distribution))
    return train, test


@dataclass
class VariantResult:
    variant: str
    f1: float
    f1_per_seed: list = field(default_factory=list)
    seconds: float = 0.0


def run_variant(scenario, variant, train, test, seed):
    """Macro-F1 on ``test`` after training on ``train`` (augmented per ``variant``)."""
    if variant == "none":
        data = train
    else:
        gacn = replace(scenario.gacn, seed=derive_seed(seed, "augment"))
        if variant == "gan":
            gacn = replace(gacn, eps_r=math.inf)
        data = augment_all(train, scenario.gen_count, gacn)
    clf = scenario.classifier.build(derive_seed(seed, "classifier"))
    clf.fit(data.X, data.labels)
    return float(f1_score(test.labels.astype(str), clf.predict(test.X).astype(str),
                          average="macro"))


def run_scenario(scenario):
    """One :class:`VariantResult` per variant; F1 is averaged over the scenario seeds."""
    variants = scenario.variant_list
    seeds = scenario.seed_list
    results = {v: VariantResult(v, float("nan")) for v in variants}
    for seed in seeds:
        train, test = scenario_data(scenario, seed)
        for v in variants:
            start = time.perf_counter()
            results[v].f1_per_seed.append(run_variant(scenario, v, train, test, seed))
            results[v].seconds += time.perf_counter() - start
    for r in results.values():
        if r.f1_per_seed:
            r.f1 = float(np.mean(r.f1_per_seed))
    return [results[v] for v in variants]


# --------------------------------------------------------------------------
# embedding benefit on count-like features


def session_like(n_per_class, means, sigma, rng):
    """Rows ``rint(exp(mu + sigma * N(0, 1)))`` per class mean vector ``mu``."""
    X = np.vstack([np.rint(np.exp(mu + sigma * rng.standard_normal((n_per_class, len(mu)))))
                   for mu in means])
    y = np.repeat([f"c{k}" for k in range(len(means))], n_per_class)
    return X, y


def embedding_benchmark(seed, n_classes=5, n_features=8, shots=40, pretrain=400,
                        embedding_dim=8, window=2, sigma=1.5, log_low=1.0, log_high=9.0,
                        sfe_cfg=None, hidden=(16,), learning_rate=0.05, epochs=100):
    """Final validation loss ``(embedded, raw)`` of the same classifier.

    The embedding is fitted on a larger unlabelled pool from the same
    classes; the few-shot set (``n_classes * shots`` rows) is split in half
    for training and validation. Both inputs are z-scored by the classifier.
    """
    rng = rng_for(seed, "embedding-benchmark")
    means = rng.uniform(log_low, log_high, size=(n_classes, n_features))
    X_pool, _ = session_like(pretrain, means, sigma, rng)
    sfe_cfg = sfe_cfg or TrainConfig(learning_rate=0.5, batch_size=32, epochs=30, seed=seed)
    model = train_embedding(X_pool, embedding_dim, window, sfe_cfg)
    X, y = session_like(shots, means, sigma, rng)
    order = rng.permutation(len(X))
    tr, va = order[:len(X) // 2], order[len(X) // 2:]
    out = []
    for F in (embed(X, model), X):
        clf = DenseClassifier(hidden=hidden, learning_rate=learning_rate, epochs=epochs,
                              seed=seed)
        clf.fit(F[tr], y[tr], F[va], y[va])
        out.append(clf.val_loss_curve_[-1])
    return tuple(out)


# --------------------------------------------------------------------------
# rollback benefit on two overlapping Gaussians


ROLLBACK_DEFAULTS = dict(noise_dim=2, noise_mode="side", noise_scale=0.5, residual=True,
                         learning_rate=0.01, iterations=2000)


def rollback_benchmark(seed, distance=1.5, n=200, eval_batch=256, **gacn_kw):
    """Evaluator-score trajectories of GACN and of the same run without rollback.

    Target rows are ``N(0, I)`` and side rows ``N(distance, I)`` in 2-D. The
    generator is fed side rows plus noise, so generation begins inside the
    side category. Returns a dict ``{"gacn": means, "gan": means}`` of the
    per-iteration mean evaluator score on a fixed noise batch.
    """
    rng = rng_for(seed, "rollback-benchmark")
    T = rng.standard_normal((n, 2))
    S = rng.standard_normal((n, 2)) + distance
    X = np.vstack([T, S])
    y = np.array(["target"] * n + ["side"] * n)
    evaluator = SideAffinityEvaluator().fit(T, S)
    kw = {**ROLLBACK_DEFAULTS, **gacn_kw}
    out = {}
    for name in ("gacn", "gan"):
        cfg = GacnConfig(target_label="target", seed=seed, **kw)
        if name == "gan":
            cfg = replace(cfg, eps_r=math.inf)
        z = _draw_noise(rng_for(seed, "rollback-eval"), eval_batch, cfg, S)
        means = []

        def monitor(it, models, z=z, cfg=cfg, means=means):
            means.append(float(evaluator.score(generator_output(models.G, z, cfg.residual)).mean()))

        train_gacn(X, y, cfg, on_iteration=monitor)
        out[name] = means
    return out


def first_crossing(scores, level=0.5):
    return next((i for i, s in enumerate(scores) if s < level), None)


# --------------------------------------------------------------------------
# unknown-attack mining


def detection_scenario(seed, n_classes=5, n_features=8, count=300, separation=6.0,
                       unknown=None, label_rate=0.1):
    """Labelled and unlabeled sets of a Gaussian scenario with one held-out category.

    A fraction ``label_rate`` of every known category is labelled; the rest
    of the known rows and all rows of the held-out category form the
    unlabeled set (their labels kept as ground truth).
    """
    cfg = make_synth_config(n_classes, n_features, count, separation=separation,
                            seed=derive_seed(seed, "detection-means"))
    full = synth_generate(replace(cfg, seed=derive_seed(seed, "detection-rows")))
    unknown = full.known_labels()[-1] if unknown is None else unknown
    return split_labeled(full, label_rate, [unknown], derive_seed(seed, "detection-labels"))


DETECTION_DEFAULTS = dict(gen_count=300, clusters=30, class_weight="balanced")
DETECTION_GACN = GacnConfig(iterations=500, noise_dim=4, learning_rate=0.05)


def detection_benchmark(seed, scenario_kw=None, **cfg_kw):
    labeled, unlabeled = detection_scenario(seed, **(scenario_kw or {}))
    kw = {**DETECTION_DEFAULTS, "gacn": DETECTION_GACN, **cfg_kw}
    return detect(labeled, unlabeled, DetectionConfig(seed=seed, **kw))
