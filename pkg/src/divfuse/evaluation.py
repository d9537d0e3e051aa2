"""Metrics, ROC curves and the repeated balanced-subsample protocol.

Healthy is the positive class (label 1), arrhythmia the negative (label 0).
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientRows, SingleClassInput
from .features import FeatureMatrix
from .fusion import apply_affine, fuse, zscore_normalize
from .gbdt import GbdtConfig, predict_proba, train_gbdt


@dataclass(frozen=True)
class ExperimentConfig:
    n_runs: int = 100
    n_per_class: int = 1000
    train_fraction: float = 0.7
    base_seed: int = 42

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.n_per_class < 10:
            raise ValueError("n_per_class must be >= 10")


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


@dataclass
class Metrics:
    accuracy: float
    fpr: float
    fnr: float
    auc: float
    per_run: list  # (accuracy, fpr, fnr) per run, in run order
    per_run_auc: list = field(default_factory=list)
    roc: RocCurve | None = None

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "fpr": self.fpr,
            "fnr": self.fnr,
            "auc": self.auc,
            "per_run": [list(r) for r in self.per_run],
            "per_run_auc": list(self.per_run_auc),
        }


def _check_labels(labels):
    labels = np.asarray(labels).astype(int).ravel()
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise SingleClassInput("both classes must be present")
    return labels


def confusion(scores, labels, threshold=0.5):
    labels = np.asarray(labels).astype(int).ravel()
    pred = np.asarray(scores, dtype=float).ravel() >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    tn = int(np.sum(~pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    return tp, fp, tn, fn


def compute_metrics(scores, labels, threshold=0.5):
    """(accuracy, FPR, FNR) at ``threshold``; scores >= threshold predict healthy."""
    labels = _check_labels(labels)
    if np.size(scores) != labels.size:
        raise ValueError("scores and labels differ in length")
    tp, fp, tn, fn = confusion(scores, labels, threshold)
    total = tp + fp + tn + fn
    return (tp + tn) / total, fp / (fp + tn), fn / (fn + tp)


def roc_curve(scores, labels):
    labels = _check_labels(labels)
    scores = np.asarray(scores, dtype=float).ravel()
    order = np.argsort(-scores, kind="mergesort")
    s, l = scores[order], labels[order]
    # one point per distinct score, taken after all tied samples
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tps = np.cumsum(l)[last]
    fps = (last + 1) - tps
    tpr = np.r_[0.0, tps / l.sum()]
    fpr = np.r_[0.0, fps / (l.size - l.sum())]
    return RocCurve(fpr, tpr, float(np.trapezoid(tpr, fpr)))


def mann_whitney_auc(scores, labels):
    """P(score_pos > score_neg) + 0.5 P(tie), by direct pair counting."""
    labels = _check_labels(labels)
    scores = np.asarray(scores, dtype=float).ravel()
    pos, neg = scores[labels == 1], scores[labels == 0]
    diff = pos[:, None] - neg[None, :]
    return float((np.sum(diff > 0) + 0.5 * np.sum(diff == 0)) / diff.size)


# experiment protocol

def _matrix(data, columns):
    if isinstance(data, FeatureMatrix):
        vals = data.values
    else:
        vals = np.asarray(data, dtype=float)
        vals = vals[:, None] if vals.ndim == 1 else vals
    return vals if columns is None else vals[:, columns]


def _columns(data, feature_subset):
    if feature_subset is None or feature_subset == "combined":
        return None
    kinds = data.kinds if isinstance(data, FeatureMatrix) else None
    subset = feature_subset if isinstance(feature_subset, (list, tuple, set, frozenset)) else [feature_subset]
    cols = []
    for k in subset:
        cols.append(kinds.index(k) if kinds is not None and not isinstance(k, int) else int(k))
    return sorted(cols)


def _split(rng, n, train_fraction):
    perm = rng.permutation(n)
    k = int(round(train_fraction * n))
    return perm[:k], perm[k:]


def _one_run(run, healthy, disease, exp, gbdt):
    rng = np.random.default_rng(exp.base_seed + run)
    hi = rng.choice(healthy.shape[0], exp.n_per_class, replace=False)
    di = rng.choice(disease.shape[0], exp.n_per_class, replace=False)
    h_tr, h_te = _split(rng, exp.n_per_class, exp.train_fraction)
    d_tr, d_te = _split(rng, exp.n_per_class, exp.train_fraction)
    X_tr = np.vstack([healthy[hi[h_tr]], disease[di[d_tr]]])
    y_tr = np.r_[np.ones(h_tr.size), np.zeros(d_tr.size)]
    X_te = np.vstack([healthy[hi[h_te]], disease[di[d_te]]])
    y_te = np.r_[np.ones(h_te.size), np.zeros(d_te.size)]
    model = train_gbdt(X_tr, y_tr, gbdt)
    scores = predict_proba(model, X_te)
    acc, fpr, fnr = compute_metrics(scores, y_te)
    auc = roc_curve(scores, y_te).auc
    return (acc, fpr, fnr), auc, scores, y_te


def _threads():
    try:
        return max(1, int(os.environ.get("DIVFUSE_THREADS", "1")))
    except ValueError:
        return 1


def run_experiments(healthy, disease, feature_subset=None, exp=ExperimentConfig(), gbdt=GbdtConfig()):
    """Repeat: draw ``n_per_class`` rows per class, split, train, score.

    Run ``r`` is seeded with ``base_seed + r`` so results do not depend on
    execution order. ``feature_subset`` is a kind, a collection of kinds (or
    column indices), or None / "combined" for every column.
    """
    cols = _columns(healthy, feature_subset)
    H, Dz = _matrix(healthy, cols), _matrix(disease, cols)
    for name, m in (("healthy", H), ("disease", Dz)):
        if m.shape[0] < exp.n_per_class:
            raise InsufficientRows(f"{name} has {m.shape[0]} rows, need {exp.n_per_class}")

    runs = range(exp.n_runs)
    threads = _threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: _one_run(r, H, Dz, exp, gbdt), runs))
    else:
        results = [_one_run(r, H, Dz, exp, gbdt) for r in runs]

    per_run = [r[0] for r in results]
    aucs = [r[1] for r in results]
    arr = np.asarray(per_run)
    roc = roc_curve(np.concatenate([r[2] for r in results]), np.concatenate([r[3] for r in results]))
    return Metrics(
        accuracy=float(arr[:, 0].mean()),
        fpr=float(arr[:, 1].mean()),
        fnr=float(arr[:, 2].mean()),
        auc=float(np.mean(aucs)),
        per_run=per_run,
        per_run_auc=aucs,
        roc=roc,
    )


# normalization vs fusion

@dataclass
class PairedMetrics:
    normalization: Metrics
    fusion: Metrics
    params: list  # (AffineParams, FusionReport) per fused column
    distributions: list


def _columns_2d(data, cols):
    m = _matrix(data, cols)
    return m.astype(float, copy=True)


def _as_cols(a):
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def normalize_sources(reference, source, disease=None, baseline="reference_frame"):
    """Standardization arm: z-score each healthy source column-wise.

    With ``baseline="reference_frame"`` the z-scores are re-expressed in the
    reference cohort's units so untouched disease features share their frame.
    ``"per_dataset"`` instead z-scores the disease cohort with its own moments.
    Returns ``(healthy, disease)`` matrices.
    """
    ref, src = _as_cols(reference), _as_cols(source)
    zr = np.column_stack([zscore_normalize(c) for c in ref.T])
    zs = np.column_stack([zscore_normalize(c) for c in src.T])
    if baseline == "reference_frame":
        mu, sd = ref.mean(axis=0), ref.std(axis=0)
        return np.vstack([zr * sd + mu, zs * sd + mu]), disease
    if baseline == "per_dataset":
        dz = None if disease is None else np.column_stack([zscore_normalize(c) for c in _as_cols(disease).T])
        return np.vstack([zr, zs]), dz
    raise ValueError(f"unknown baseline {baseline!r}")


def fuse_sources(reference, source, dists, config=None):
    """Fusion arm: map every source column onto its reference column."""
    from .fusion import FusionConfig

    config = config or FusionConfig()
    ref, src = _as_cols(reference), _as_cols(source)
    out = np.empty_like(src)
    params = []
    for j in range(ref.shape[1]):
        p, rep = fuse(ref[:, j], src[:, j], dists[j], config)
        out[:, j] = apply_affine(src[:, j], p)
        params.append((p, rep))
    return np.vstack([ref, out]), params


def compare_pipelines(
    reference,
    source,
    disease,
    feature=None,
    dists=None,
    fusion_config=None,
    exp=ExperimentConfig(),
    gbdt=GbdtConfig(),
    baseline="reference_frame",
    policy="paper_default",
):
    """Run the normalization arm and the fusion arm on identical seeds.

    ``reference``/``source``/``disease`` are FeatureMatrix objects or plain
    arrays (1-D for a single feature). ``feature`` selects a kind, a set of
    kinds, or "combined"/None for all columns. ``dists`` overrides the
    per-column distribution class.
    """
    from .features import DistributionClass, FeatureKind, classify_distribution

    cols = _columns(reference, feature)
    ref = _columns_2d(reference, cols)
    src = _columns_2d(source, cols)
    dis = _columns_2d(disease, cols)

    if dists is None:
        if not isinstance(reference, FeatureMatrix):
            raise ValueError("dists is required for plain-array inputs")
        kinds = [reference.kinds[c] for c in (cols if cols is not None else range(ref.shape[1]))]
        pooled = np.vstack([ref, src])
        dists = [
            classify_distribution(pooled[:, j], policy, kind=k) for j, k in enumerate(kinds)
        ]
    elif isinstance(dists, (DistributionClass, str)):
        dists = [DistributionClass(dists)] * ref.shape[1]
    dists = [DistributionClass(d) for d in dists]

    healthy_a, disease_a = normalize_sources(ref, src, dis, baseline)
    healthy_b, params = fuse_sources(ref, src, dists, fusion_config)
    arm_a = run_experiments(healthy_a, disease_a, None, exp, gbdt)
    arm_b = run_experiments(healthy_b, dis, None, exp, gbdt)
    return PairedMetrics(arm_a, arm_b, params, dists)
