"""Entropy and fractal-dimension features of a beat window.

Parameter defaults follow the conventions of the `antropy` package:
Chebyshev template matching with ``r = 0.2 * std`` for approximate and sample
entropy, order 3 / delay 1 embeddings, ``kmax = 10`` for Higuchi and a
geometric 1.2x ladder of window sizes from 4 to ``n / 10`` for DFA.
"""

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps
from scipy import stats

from .errors import AllRowsDropped, DegenerateSignal, DivfuseError, TooFewSamples, TooShort
from .ingest import ClassLabel


class FeatureKind(enum.Enum):
    APPROXIMATE_ENTROPY = "approximate_entropy"
    SAMPLE_ENTROPY = "sample_entropy"
    PERMUTATION_ENTROPY = "permutation_entropy"
    SPECTRAL_ENTROPY = "spectral_entropy"
    SVD_ENTROPY = "svd_entropy"
    PETROSIAN_FD = "petrosian_fd"
    KATZ_FD = "katz_fd"
    HIGUCHI_FD = "higuchi_fd"
    DETRENDED_FD = "detrended_fd"

    @property
    def title(self):
        return _TITLES[self]


KINDS = tuple(FeatureKind)

_TITLES = {
    FeatureKind.APPROXIMATE_ENTROPY: "Approximate Entropy",
    FeatureKind.SAMPLE_ENTROPY: "Sample Entropy",
    FeatureKind.PERMUTATION_ENTROPY: "Permutation Entropy",
    FeatureKind.SPECTRAL_ENTROPY: "Spectral Entropy",
    FeatureKind.SVD_ENTROPY: "Singular Value Decomposition Entropy",
    FeatureKind.PETROSIAN_FD: "Petrosian Fractal Dimension",
    FeatureKind.KATZ_FD: "Katz Fractal Dimension",
    FeatureKind.HIGUCHI_FD: "Higuchi Fractal Dimension",
    FeatureKind.DETRENDED_FD: "Detrended Fractal Dimension",
}


class DistributionClass(enum.Enum):
    GAUSSIAN = "gaussian"
    NON_GAUSSIAN = "non_gaussian"


PAPER_GROUPING = {
    FeatureKind.APPROXIMATE_ENTROPY: DistributionClass.GAUSSIAN,
    FeatureKind.SAMPLE_ENTROPY: DistributionClass.GAUSSIAN,
    FeatureKind.SPECTRAL_ENTROPY: DistributionClass.GAUSSIAN,
    FeatureKind.HIGUCHI_FD: DistributionClass.GAUSSIAN,
    FeatureKind.KATZ_FD: DistributionClass.GAUSSIAN,
    FeatureKind.DETRENDED_FD: DistributionClass.GAUSSIAN,
    FeatureKind.PERMUTATION_ENTROPY: DistributionClass.NON_GAUSSIAN,
    FeatureKind.PETROSIAN_FD: DistributionClass.NON_GAUSSIAN,
    FeatureKind.SVD_ENTROPY: DistributionClass.NON_GAUSSIAN,
}


@dataclass(frozen=True)
class FeatureParams:
    embed_dim: int = 2
    tolerance_ratio: float = 0.2
    perm_order: int = 3
    perm_delay: int = 1
    svd_order: int = 3
    svd_delay: int = 1
    higuchi_kmax: int = 10
    dfa_min_scale: int = 4
    dfa_max_fraction: float = 0.1
    spectral_rate: float = 500.0

    def __post_init__(self):
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")
        if not self.tolerance_ratio > 0:
            raise ValueError("tolerance_ratio must be positive")
        if self.perm_order < 2 or self.svd_order < 2:
            raise ValueError("embedding orders must be >= 2")
        if self.perm_delay < 1 or self.svd_delay < 1:
            raise ValueError("delays must be >= 1")
        if self.higuchi_kmax < 2:
            raise ValueError("higuchi_kmax must be >= 2")
        if self.dfa_min_scale < 2:
            raise ValueError("dfa_min_scale must be >= 2")


# helpers

def embed(x, order, delay):
    """Delay-embedding matrix of shape ``(n - (order - 1) * delay, order)``."""
    n = x.size - (order - 1) * delay
    if n < 1:
        raise TooShort(f"{x.size} samples too short for order {order}, delay {delay}")
    idx = np.arange(order) * delay + np.arange(n)[:, None]
    return x[idx]


def _slope(x, y):
    return float(np.polyfit(x, y, 1)[0])


def _tolerance(x, ratio):
    sd = float(np.std(x))
    if sd == 0.0:
        raise DegenerateSignal("zero variance; tolerance would be 0")
    return ratio * sd


def _match_counts(x, m, r):
    """Per-template count of Chebyshev neighbours within ``r`` (self included)."""
    emb = embed(x, m, 1)
    dist = np.abs(emb[:, None, 0] - emb[None, :, 0])
    for k in range(1, m):
        np.maximum(dist, np.abs(emb[:, None, k] - emb[None, :, k]), out=dist)
    return (dist <= r).sum(axis=1)


# entropies

def approximate_entropy(x, m=2, ratio=0.2):
    x = np.asarray(x, dtype=float)
    if x.size < m + 2:
        raise TooShort("approximate entropy needs at least m + 2 samples")
    r = _tolerance(x, ratio)
    phi = []
    for order in (m, m + 1):
        counts = _match_counts(x, order, r)
        phi.append(np.mean(np.log(counts / counts.size)))
    return float(phi[0] - phi[1])


def sample_entropy(x, m=2, ratio=0.2):
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < m + 2:
        raise TooShort("sample entropy needs at least m + 2 samples")
    r = _tolerance(x, ratio)
    # both lengths use the same n - m templates
    tmpl = embed(x, m + 1, 1)
    dist = np.zeros((tmpl.shape[0], tmpl.shape[0]))
    for k in range(m):
        np.maximum(dist, np.abs(tmpl[:, None, k] - tmpl[None, :, k]), out=dist)
    iu = np.triu_indices(tmpl.shape[0], k=1)
    b_mask = dist[iu] <= r
    dist_m1 = np.maximum(dist, np.abs(tmpl[:, None, m] - tmpl[None, :, m]))
    a_mask = dist_m1[iu] <= r
    b, a = int(b_mask.sum()), int(a_mask.sum())
    if a == 0 or b == 0:
        raise DegenerateSignal("no template matches; sample entropy undefined")
    return float(-math.log(a / b))


def permutation_entropy(x, order=3, delay=1, normalize=True):
    x = np.asarray(x, dtype=float)
    emb = embed(x, order, delay)
    ranks = np.argsort(emb, axis=1, kind="stable")
    codes = ranks @ (order ** np.arange(order))
    _, counts = np.unique(codes, return_counts=True)
    p = counts / counts.sum()
    h = float(-np.sum(p * np.log(p)))
    if normalize:
        h /= math.log(math.factorial(order))
    return abs(h)


def spectral_entropy(x, rate=500.0, normalize=True):
    x = np.asarray(x, dtype=float)
    if x.size < 4:
        raise TooShort("spectral entropy needs at least 4 samples")
    _, psd = sps.periodogram(x, fs=rate)
    total = psd.sum()
    if total <= 0:
        raise DegenerateSignal("zero spectral power")
    p = psd / total
    nz = p[p > 0]
    h = float(-np.sum(nz * np.log(nz)))
    if normalize:
        h /= math.log(p.size)
    return abs(h)


def svd_entropy(x, order=3, delay=1, normalize=True):
    """Entropy of the normalized singular values of the delay embedding.

    The window is mean-centred first so the value does not depend on the
    baseline offset of the recording.
    """
    x = np.asarray(x, dtype=float)
    emb = embed(x - x.mean(), order, delay)
    w = np.linalg.svd(emb, compute_uv=False)
    if w.sum() <= 0:
        raise DegenerateSignal("all singular values are zero")
    w = w / w.sum()
    nz = w[w > 0]
    h = float(-np.sum(nz * np.log(nz)))
    if normalize:
        h /= math.log(order)
    return abs(h)


# fractal dimensions

def petrosian_fd(x):
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 3:
        raise TooShort("petrosian FD needs at least 3 samples")
    d = np.diff(x)
    n_delta = int(np.count_nonzero(d[1:] * d[:-1] < 0))
    return math.log10(n) / (math.log10(n) + math.log10(n / (n + 0.4 * n_delta)))


def katz_fd(x):
    x = np.asarray(x, dtype=float)
    if x.size < 3:
        raise TooShort("katz FD needs at least 3 samples")
    dists = np.abs(np.diff(x))
    total = dists.sum()
    if total == 0:
        raise DegenerateSignal("constant signal has no path length")
    ln = math.log10(total / dists.mean())
    extent = np.max(np.abs(x[1:] - x[0]))
    return ln / (ln + math.log10(extent / total))


def higuchi_curve(x, kmax=10):
    """Mean normalized curve length L(k) for ``k = 1 .. kmax``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    lengths = np.empty(kmax)
    for k in range(1, kmax + 1):
        lm = []
        for m in range(k):
            n_max = (n - 1 - m) // k
            if n_max < 1:
                continue
            seg = x[m : m + n_max * k + 1 : k]
            ll = np.abs(np.diff(seg)).sum() * (n - 1) / (n_max * k)
            lm.append(ll / k)
        lengths[k - 1] = np.mean(lm)
    return lengths


def higuchi_fd(x, kmax=10):
    x = np.asarray(x, dtype=float)
    if x.size < 2 * kmax:
        raise TooShort(f"higuchi FD with kmax={kmax} needs at least {2 * kmax} samples")
    lengths = higuchi_curve(x, kmax)
    if np.any(lengths <= 0):
        raise DegenerateSignal("zero curve length")
    k = np.arange(1, kmax + 1)
    return _slope(np.log(1.0 / k), np.log(lengths))


def dfa_scales(n, min_scale=4, max_fraction=0.1, factor=1.2):
    max_scale = max_fraction * n
    scales = [min_scale]
    i = 1
    while True:
        s = int(math.floor(min_scale * factor**i))
        if s > max_scale:
            break
        if s > scales[-1]:
            scales.append(s)
        i += 1
    return np.asarray(scales)


def dfa_fluctuations(x, scales):
    walk = np.cumsum(x - x.mean())
    out = np.empty(len(scales))
    for i, s in enumerate(scales):
        n_seg = walk.size // s
        seg = walk[: n_seg * s].reshape(n_seg, s)
        t = np.arange(s, dtype=float)
        coef = np.polyfit(t, seg.T, 1)
        trend = coef[0][:, None] * t + coef[1][:, None]
        out[i] = np.mean(np.sqrt(np.mean((seg - trend) ** 2, axis=1)))
    return out


def detrended_fd(x, min_scale=4, max_fraction=0.1):
    """DFA scaling exponent (log-log least-squares slope)."""
    x = np.asarray(x, dtype=float)
    scales = dfa_scales(x.size, min_scale, max_fraction)
    if scales.size < 2:
        raise TooShort(f"{x.size} samples give fewer than two DFA scales")
    fl = dfa_fluctuations(x, scales)
    keep = fl > 0
    if keep.sum() < 2:
        raise DegenerateSignal("zero fluctuation at every scale")
    return _slope(np.log(scales[keep]), np.log(fl[keep]))


# dispatch

def _values(window):
    return window.values if hasattr(window, "values") else np.asarray(window, dtype=float)


def extract_feature(window, kind, params=FeatureParams()):
    x = _values(window)
    p = params
    if kind is FeatureKind.APPROXIMATE_ENTROPY:
        return approximate_entropy(x, p.embed_dim, p.tolerance_ratio)
    if kind is FeatureKind.SAMPLE_ENTROPY:
        return sample_entropy(x, p.embed_dim, p.tolerance_ratio)
    if kind is FeatureKind.PERMUTATION_ENTROPY:
        return permutation_entropy(x, p.perm_order, p.perm_delay)
    if kind is FeatureKind.SPECTRAL_ENTROPY:
        rate = getattr(window, "rate", None) or p.spectral_rate
        return spectral_entropy(x, rate)
    if kind is FeatureKind.SVD_ENTROPY:
        return svd_entropy(x, p.svd_order, p.svd_delay)
    if kind is FeatureKind.PETROSIAN_FD:
        return petrosian_fd(x)
    if kind is FeatureKind.KATZ_FD:
        return katz_fd(x)
    if kind is FeatureKind.HIGUCHI_FD:
        return higuchi_fd(x, p.higuchi_kmax)
    if kind is FeatureKind.DETRENDED_FD:
        return detrended_fd(x, p.dfa_min_scale, p.dfa_max_fraction)
    raise ValueError(f"unknown feature kind {kind!r}")


def extract_vector(window, params=FeatureParams()):
    if np.std(_values(window)) == 0.0:
        raise DegenerateSignal("flat window")
    vec = np.array([extract_feature(window, k, params) for k in KINDS])
    if not np.all(np.isfinite(vec)):
        raise DegenerateSignal("non-finite feature value")
    return vec


@dataclass
class FeatureMatrix:
    values: np.ndarray  # records x 9
    labels: np.ndarray  # ClassLabel ints
    sources: list
    record_ids: list
    kinds: tuple = KINDS
    dropped: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1, len(self.kinds))
        self.labels = np.asarray(self.labels, dtype=int)
        n = self.values.shape[0]
        if not (self.labels.size == len(self.sources) == len(self.record_ids) == n):
            raise ValueError("rows, labels, sources and ids must align")
        if np.isnan(self.values).any():
            raise ValueError("feature matrix contains NaN")

    def __len__(self):
        return self.values.shape[0]

    def column(self, kind):
        return self.values[:, self.kinds.index(kind)]

    def select(self, mask):
        mask = np.asarray(mask)
        idx = np.flatnonzero(mask) if mask.dtype == bool else mask
        return FeatureMatrix(
            self.values[idx],
            self.labels[idx],
            [self.sources[i] for i in idx],
            [self.record_ids[i] for i in idx],
            self.kinds,
        )

    def by_source(self, name):
        return self.select(np.array([s == name for s in self.sources], dtype=bool))

    @classmethod
    def concat(cls, parts):
        parts = [p for p in parts if len(p)]
        return cls(
            np.vstack([p.values for p in parts]),
            np.concatenate([p.labels for p in parts]),
            [s for p in parts for s in p.sources],
            [r for p in parts for r in p.record_ids],
        )


def _threads():
    import os

    try:
        return max(1, int(os.environ.get("DIVFUSE_THREADS", "1")))
    except ValueError:
        return 1


def extract_matrix(windows, labels, params=FeatureParams(), sources=None):
    """Featurize every window; windows that fail extraction are dropped.

    Dropped rows are reported as ``(record_id, reason)`` pairs on the result.
    """
    windows = list(windows)
    if not windows:
        raise AllRowsDropped("no windows given")
    labels = [int(ClassLabel.parse(l)) for l in labels]
    sources = list(sources) if sources is not None else [""] * len(windows)

    def one(w):
        try:
            return extract_vector(w, params), None
        except DivfuseError as exc:
            return None, f"{type(exc).__name__}: {exc}"

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(one, windows))

    rows, keep, dropped = [], [], []
    for i, (vec, err) in enumerate(results):
        rid = getattr(windows[i], "source_id", str(i))
        if vec is None:
            dropped.append((rid, err))
        else:
            rows.append(vec)
            keep.append(i)
    if not rows:
        raise AllRowsDropped(f"all {len(windows)} windows failed extraction")
    return FeatureMatrix(
        np.vstack(rows),
        [labels[i] for i in keep],
        [sources[i] for i in keep],
        [getattr(windows[i], "source_id", str(i)) for i in keep],
        dropped=dropped,
    )


def classify_distribution(values=None, policy="paper_default", kind=None, alpha=0.05):
    """Gaussian vs non-Gaussian call for one feature column.

    ``paper_default`` uses the fixed per-feature grouping and needs ``kind``;
    ``auto_test`` runs D'Agostino-Pearson's skewness/kurtosis test.
    """
    if policy == "paper_default":
        if kind is None:
            raise ValueError("paper_default policy needs the feature kind")
        return PAPER_GROUPING[FeatureKind(kind)]
    if policy == "auto_test":
        v = np.asarray(values, dtype=float)
        if v.size < 20:
            raise TooFewSamples(f"normality test needs >= 20 values, got {v.size}")
        _, p = stats.normaltest(v)
        return DistributionClass.GAUSSIAN if p >= alpha else DistributionClass.NON_GAUSSIAN
    raise ValueError(f"unknown policy {policy!r}")


# feature CSV: record_id, source, label, <nine feature columns>

def write_feature_csv(fm, path):
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["record_id", "source", "label"] + [k.value for k in fm.kinds])
        for rid, src, lab, row in zip(fm.record_ids, fm.sources, fm.labels, fm.values):
            w.writerow([rid, src, int(lab)] + [repr(float(v)) for v in row])


def read_feature_csv(path):
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["record_id", "source", "label"]:
            raise ValueError(f"{path}: not a feature CSV")
        kinds = tuple(FeatureKind(h) for h in header[3:])
        if set(kinds) != set(KINDS) or len(kinds) != len(KINDS):
            raise ValueError(f"{path}: expected the nine feature columns")
        ids, sources, labels, rows = [], [], [], []
        for row in reader:
            if not row:
                continue
            ids.append(row[0])
            sources.append(row[1])
            labels.append(int(ClassLabel.parse(row[2])))
            vals = dict(zip(kinds, (float(v) for v in row[3:])))
            rows.append([vals[k] for k in KINDS])
    return FeatureMatrix(np.asarray(rows).reshape(-1, len(KINDS)), labels, sources, ids)
