"""Two-step unknown-attack mining.

Step one clusters labelled (augmented) rows together with unlabeled rows and
flags the unlabeled members of every cluster that is mostly unlabeled. Step
two trains a ``(K+1)``-class network on the labelled rows plus the flagged
rows (as class ``unknown``) and keeps only the flagged rows it still
predicts as unknown.
"""

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .classifier import DenseClassifier
from .data import UNLABELED, LabeledSet
from .exceptions import ConfigError
from .gacn import GacnConfig, augment_all
from .seeding import derive_seed

log = logging.getLogger(__name__)

UNKNOWN = "__unknown__"


# --------------------------------------------------------------------------
# KMeans


@dataclass
class Clustering:
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_history: list = field(default_factory=list)
    n_iter: int = 0


def _sq_distances(X, C):
    # ||x||^2 - 2 x.c + ||c||^2, clipped at zero against cancellation
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def farthest_point_seeds(X, q, rng):
    """Random first centre, then repeatedly the row farthest from all chosen centres."""
    first = int(rng.integers(len(X)))
    chosen = [first]
    nearest = _sq_distances(X, X[[first]])[:, 0]
    for _ in range(1, q):
        nxt = int(np.argmax(nearest))  # ties -> lowest row index
        chosen.append(nxt)
        nearest = np.minimum(nearest, _sq_distances(X, X[[nxt]])[:, 0])
    return X[chosen].copy()


def _inertia(X, centroids, assignments):
    diff = X - centroids[assignments]
    return float((diff * diff).sum())


def kmeans(X, q, seed=0, max_iters=300, tol=1e-4):
    """Lloyd iterations from farthest-point seeding.

    Stops when the relative inertia improvement drops to ``tol`` or after
    ``max_iters`` rounds. A centroid left without members is moved onto the
    row farthest from its own centroid.
    """
    X = np.asarray(X, dtype=np.float64)
    q = int(q)
    if q < 1:
        raise ConfigError(f"cluster count must be >= 1, got {q}")
    if len(X) < q:
        raise ConfigError(f"{len(X)} rows cannot form {q} clusters")
    rng = np.random.default_rng(seed)
    centroids = farthest_point_seeds(X, q, rng)
    history = []
    assignments = np.zeros(len(X), dtype=np.int64)
    n_iter = 0
    for n_iter in range(1, int(max_iters) + 1):
        d = _sq_distances(X, centroids)
        assignments = np.argmin(d, axis=1)  # ties -> lowest cluster index
        counts = np.bincount(assignments, minlength=q)
        for j in np.flatnonzero(counts == 0):
            own = d[np.arange(len(X)), assignments]
            far = int(np.argmax(own))
            centroids[j] = X[far]
            assignments[far] = j
            d[far] = _sq_distances(X[[far]], centroids)[0]
        history.append(_inertia(X, centroids, assignments))
        for j in range(q):
            centroids[j] = X[assignments == j].mean(axis=0)
        if len(history) > 1 and history[-2] - history[-1] <= tol * max(history[-2], 1e-300):
            break
    inertia = _inertia(X, centroids, assignments)
    return Clustering(assignments, centroids, inertia, history, n_iter)


class KMeans(ClusterMixin, BaseEstimator):
    """Deterministic Lloyd KMeans with farthest-point seeding."""

    def __init__(self, n_clusters=8, max_iter=300, tol=1e-4, seed=0):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.tol = tol
        self.seed = seed

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        result = kmeans(X, self.n_clusters, self.seed, self.max_iter, self.tol)
        self.cluster_centers_ = result.centroids
        self.labels_ = result.assignments
        self.inertia_ = result.inertia
        self.n_iter_ = result.n_iter
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, dtype=np.float64)
        return np.argmin(_sq_distances(X, self.cluster_centers_), axis=1)


# --------------------------------------------------------------------------
# two-step mining


@dataclass
class ClusterStats:
    cluster: int
    n_total: int
    n_labeled: int
    flagged: bool


def first_step(labeled_mask, assignments, delta, q=None):
    """Flag unlabeled members of every cluster with ``n_labeled <= delta * n_total``.

    Returns ``(flagged_row_indices, per_cluster_stats)``; indices refer to
    the rows of ``assignments``.
    """
    labeled_mask = np.asarray(labeled_mask, dtype=bool)
    assignments = np.asarray(assignments)
    if not 0.0 <= delta <= 1.0:
        raise ConfigError(f"delta must lie in [0, 1], got {delta}")
    q = int(assignments.max()) + 1 if q is None and len(assignments) else (q or 0)
    flagged = []
    stats = []
    for j in range(q):
        members = assignments == j
        n_total = int(members.sum())
        n_labeled = int((members & labeled_mask).sum())
        hit = n_total > 0 and n_labeled <= delta * n_total
        stats.append(ClusterStats(j, n_total, n_labeled, bool(hit)))
        if hit:
            flagged.append(np.flatnonzero(members & ~labeled_mask))
    H1 = np.sort(np.concatenate(flagged)) if flagged else np.array([], dtype=np.int64)
    return H1, stats


def second_step(X_known, y_known, X_flagged, classifier=None):
    """Boolean mask over ``X_flagged``: True where the ``(K+1)``-class net says unknown.

    The flagged rows are both part of the training set (as ``unknown``) and
    the set being filtered.
    """
    X_flagged = np.asarray(X_flagged, dtype=np.float64)
    if len(X_flagged) == 0:
        return np.zeros(0, dtype=bool)
    clf = classifier if classifier is not None else DenseClassifier()
    X = np.vstack([np.asarray(X_known, dtype=np.float64), X_flagged])
    y = np.concatenate([np.asarray(y_known, dtype=object).astype(str),
                        np.full(len(X_flagged), UNKNOWN, dtype=object)])
    clf.fit(X, y)
    return clf.predict(X_flagged) == UNKNOWN


@dataclass
class Metrics:
    tpr: float = None
    fpr: float = None
    f1: float = None
    precision: float = None
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0


def metrics(detected, truth, population):
    """TPR, FPR and F1 of a detected id set against the true unknown ids.

    Rates whose denominator is zero are reported as None.
    """
    detected = set(int(i) for i in detected)
    truth = set(int(i) for i in truth)
    population = set(int(i) for i in population)
    if not detected <= population:
        raise ConfigError("detected ids must be drawn from the population")
    truth &= population
    tp = len(detected & truth)
    fp = len(detected - truth)
    fn = len(truth - detected)
    tn = len(population) - tp - fp - fn
    tpr = tp / (tp + fn) if truth else None
    fpr = fp / (fp + tn) if fp + tn else None
    precision = tp / (tp + fp) if detected else None
    f1 = None
    if tpr is not None and precision is not None:
        f1 = 2 * precision * tpr / (precision + tpr) if precision + tpr else 0.0
    return Metrics(tpr, fpr, f1, precision, tp, fp, fn, tn)


@dataclass(frozen=True)
class DetectionConfig:
    """Settings of the full detector.

    ``clusters=None`` uses twice the number of known labels. ``gen_count``
    is the number of GACN rows generated per known label (int or mapping).
    """

    clusters: int = None
    delta: float = 0.1
    gen_count: object = 100
    hidden: tuple = (32,)
    learning_rate: float = 0.05
    batch_size: int = 32
    epochs: int = 30
    class_weight: str = None
    kmeans_max_iters: int = 300
    kmeans_tol: float = 1e-4
    baseline: bool = False
    gacn: GacnConfig = GacnConfig()
    seed: int = 0

    def __post_init__(self):
        if self.clusters is not None and self.clusters < 2:
            raise ConfigError(f"clusters must be >= 2, got {self.clusters}")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError(f"delta must lie in [0, 1], got {self.delta}")

    def as_dict(self):
        d = asdict(self)
        d.pop("gacn")
        d.update({f"gacn.{k}": v for k, v in asdict(self.gacn).items() if k != "target_label"})
        return d


@dataclass
class DetectionReport:
    H1: np.ndarray
    H2: np.ndarray
    clusters: list
    metrics: Metrics = None
    baseline_metrics: Metrics = None
    config: dict = field(default_factory=dict)
    n_unlabeled: int = 0
    known_labels: list = field(default_factory=list)

    def to_text(self):
        """Render the report as key/value and CSV sections."""
        lines = ["# unknown-attack detection report", "[config]"]
        for key in sorted(self.config):
            lines.append(f"{key}={_fmt(self.config[key])}")
        lines.append(f"known_labels={','.join(self.known_labels)}")
        lines.append(f"n_unlabeled={self.n_unlabeled}")
        lines.append("[metrics]")
        for name, m in (("detector", self.metrics), ("first_step", self.baseline_metrics)):
            if m is None:
                continue
            for key, value in asdict(m).items():
                lines.append(f"{name}.{key}={_fmt(value)}")
        lines.append("[clusters]")
        lines.append("cluster,n_total,n_labeled,flagged")
        for c in self.clusters:
            lines.append(f"{c.cluster},{c.n_total},{c.n_labeled},{int(c.flagged)}")
        lines.append("[H1]")
        lines.append(",".join(str(int(i)) for i in self.H1))
        lines.append("[H2]")
        lines.append(",".join(str(int(i)) for i in self.H2))
        return "\n".join(lines) + "\n"


def _fmt(value):
    if value is None:
        return "NA"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return str(value)


def parse_report(text):
    """Inverse of :meth:`DetectionReport.to_text` for the plain sections.

    Returns a dict with ``config`` and ``metrics`` (str -> str), ``clusters``
    (list of int tuples), ``H1`` and ``H2`` (lists of int).
    """
    out = {"config": {}, "metrics": {}, "clusters": [], "H1": [], "H2": []}
    section = None
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1]
            continue
        if section in ("config", "metrics"):
            key, _, value = line.partition("=")
            out[section][key] = value
        elif section == "clusters":
            if line.startswith("cluster,"):
                continue
            out["clusters"].append(tuple(int(v) for v in line.split(",")))
        elif section in ("H1", "H2"):
            out[section] = [int(v) for v in line.split(",") if v]
    return out


def detect(labeled, unlabeled, cfg=None, truth=None):
    """Run augmentation, clustering and both detection steps.

    Parameters
    ----------
    labeled : LabeledSet
        Few-shot labelled rows (``K >= 1`` categories).
    unlabeled : LabeledSet
        Rows to mine. Their labels are ignored by the detector; if ``truth``
        is None and any are non-empty they serve as ground truth (a row is a
        true unknown when its label is not among the known labels).
    truth : array of bool, optional
        Explicit ground-truth unknown mask over ``unlabeled``.
    """
    cfg = cfg or DetectionConfig()
    known = labeled.known_labels()
    if not known:
        raise ConfigError("labelled set has no categories")
    if labeled.n_features != unlabeled.n_features:
        raise ConfigError(
            f"labelled width {labeled.n_features} differs from unlabeled width {unlabeled.n_features}"
        )
    lab = labeled.subset(np.flatnonzero(labeled.labeled_mask))
    gacn_cfg = replace(cfg.gacn, seed=derive_seed(cfg.seed, "augment"))
    counts = cfg.gen_count
    if len(known) == 1 and not isinstance(counts, dict) and int(counts) > 0:
        log.warning("single known label: no side rows, skipping augmentation")
        counts = 0
    augmented = augment_all(lab, counts, gacn_cfg)

    n_u = len(unlabeled)
    U_t = np.vstack([unlabeled.X, augmented.X])
    is_labeled = np.concatenate([np.zeros(n_u, dtype=bool), np.ones(len(augmented), dtype=bool)])
    q = cfg.clusters or max(2, 2 * len(known))
    clustering = kmeans(U_t, q, derive_seed(cfg.seed, "kmeans"), cfg.kmeans_max_iters,
                        cfg.kmeans_tol)
    H1, stats = first_step(is_labeled, clustering.assignments, cfg.delta, q)

    if cfg.baseline:
        H2 = H1.copy()
    else:
        clf = DenseClassifier(hidden=tuple(cfg.hidden), learning_rate=cfg.learning_rate,
                              batch_size=cfg.batch_size, epochs=cfg.epochs,
                              class_weight=cfg.class_weight,
                              seed=derive_seed(cfg.seed, "classifier"))
        keep = second_step(augmented.X, augmented.labels, unlabeled.X[H1], clf)
        H2 = H1[keep]

    if truth is None and np.any(unlabeled.labels != UNLABELED):
        truth = ~np.isin(unlabeled.labels, known)
    report = DetectionReport(H1, H2, stats, config={**cfg.as_dict(), "clusters": q},
                             n_unlabeled=n_u, known_labels=list(known))
    if truth is not None:
        truth_ids = np.flatnonzero(np.asarray(truth, dtype=bool))
        population = range(n_u)
        report.metrics = metrics(H2, truth_ids, population)
        report.baseline_metrics = metrics(H1, truth_ids, population)
    return report


class UnknownAttackDetector(BaseEstimator):
    """Estimator facade: ``fit`` stores the labelled few-shot set, ``predict``
    returns a boolean unknown-attack mask over new unlabeled rows.
    """

    def __init__(self, clusters=None, delta=0.1, gen_count=100, hidden=(32,),
                 learning_rate=0.05, batch_size=32, epochs=30, baseline=False,
                 gacn=None, seed=0):
        self.clusters = clusters
        self.delta = delta
        self.gen_count = gen_count
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.baseline = baseline
        self.gacn = gacn
        self.seed = seed

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        self.labeled_ = LabeledSet(X, y)
        self.n_features_in_ = X.shape[1]
        return self

    def detect(self, X, truth=None):
        check_is_fitted(self, "labeled_")
        X = check_array(X, dtype=np.float64)
        params = self.get_params()
        params["gacn"] = params["gacn"] or GacnConfig()
        cfg = DetectionConfig(**params)
        unlabeled = LabeledSet(X, [UNLABELED] * len(X))
        self.report_ = detect(self.labeled_, unlabeled, cfg, truth)
        return self.report_

    def predict(self, X):
        report = self.detect(X)
        mask = np.zeros(report.n_unlabeled, dtype=bool)
        mask[report.H2] = True
        return mask
