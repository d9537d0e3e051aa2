import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from divfuse.errors import InsufficientRows, SingleClassInput
from divfuse.evaluation import (
    ExperimentConfig,
    compare_pipelines,
    compute_metrics,
    confusion,
    mann_whitney_auc,
    normalize_sources,
    roc_curve,
    run_experiments,
)
from divfuse.features import DistributionClass, FeatureKind, FeatureMatrix
from divfuse.fusion import AffineParams
from divfuse.gbdt import GbdtConfig

FAST = GbdtConfig(n_trees=20)


def test_metrics_examples():
    labels = np.r_[np.ones(5), np.zeros(5)]
    assert compute_metrics(labels, labels) == (1.0, 0.0, 0.0)
    assert compute_metrics(np.ones(10), labels) == (0.5, 1.0, 0.0)
    # 4 TP, 1 FN, 2 FP, 3 TN
    y = np.array([1, 1, 1, 1, 1, 0, 0, 0, 0, 0])
    s = np.array([0.9, 0.8, 0.7, 0.6, 0.1, 0.9, 0.8, 0.2, 0.3, 0.1])
    assert confusion(s, y) == (4, 2, 3, 1)
    acc, fpr, fnr = compute_metrics(s, y)
    assert (acc, fpr, fnr) == pytest.approx((0.7, 0.4, 0.2))


def test_single_class_metrics():
    with pytest.raises(SingleClassInput):
        compute_metrics(np.ones(4), np.ones(4))
    with pytest.raises(SingleClassInput):
        roc_curve(np.ones(4), np.zeros(4))


@given(
    scores=hnp.arrays(np.float64, st.integers(4, 60), elements=st.floats(0, 1)),
    data=st.data(),
)
def test_metric_identities(scores, data):
    labels = data.draw(hnp.arrays(np.int64, scores.size, elements=st.integers(0, 1)))
    if labels.min() == labels.max():
        return
    tp, fp, tn, fn = confusion(scores, labels)
    acc, fpr, fnr = compute_metrics(scores, labels)
    assert acc + (fp + fn) / labels.size == pytest.approx(1.0, abs=1e-12)
    # swapping labels (and the decision) swaps the error rates
    acc2, fpr2, fnr2 = compute_metrics(-scores, 1 - labels, threshold=-0.5)
    flipped = scores == 0.5  # ties at the threshold stay on the positive side
    if not flipped.any():
        assert (fpr2, fnr2) == (fnr, fpr)
    # AUC equivalence
    assert roc_curve(scores, labels).auc == pytest.approx(mann_whitney_auc(scores, labels), abs=1e-9)


def test_roc_examples():
    y = np.r_[np.ones(50), np.zeros(50)]
    s = np.r_[np.linspace(0.6, 1, 50), np.linspace(0, 0.4, 50)]
    assert roc_curve(s, y).auc == 1.0
    rng = np.random.default_rng(0)
    r = rng.random(2000)
    yy = rng.integers(0, 2, 2000)
    assert abs(roc_curve(r, yy).auc - 0.5) < 0.05
    a = roc_curve(r, yy).auc
    assert roc_curve(-r, yy).auc == pytest.approx(1 - a, abs=1e-12)
    curve = roc_curve(r, yy)
    assert curve.fpr[0] == curve.tpr[0] == 0 and curve.fpr[-1] == curve.tpr[-1] == 1


def test_run_experiments_separable():
    rng = np.random.default_rng(1)
    h, d = rng.normal(6, 1, (1500, 1)), rng.normal(0, 1, (1500, 1))
    m = run_experiments(h, d, exp=ExperimentConfig(n_runs=10))
    assert m.accuracy >= 0.99


def test_run_experiments_chance():
    rng = np.random.default_rng(2)
    h, d = rng.normal(0, 1, (1500, 2)), rng.normal(0, 1, (1500, 2))
    m = run_experiments(h, d, exp=ExperimentConfig(n_runs=10), gbdt=FAST)
    assert abs(m.accuracy - 0.5) <= 0.05


def test_run_experiments_protocol_and_determinism(monkeypatch):
    rng = np.random.default_rng(3)
    h, d = rng.normal(0.5, 1, (1100, 2)), rng.normal(0, 1, (1100, 2))
    exp = ExperimentConfig(n_runs=6)
    a = run_experiments(h, d, exp=exp, gbdt=FAST)
    monkeypatch.setenv("DIVFUSE_THREADS", "3")
    b = run_experiments(h, d, exp=exp, gbdt=FAST)
    assert len(a.per_run) == 6
    assert a.per_run == b.per_run and a.per_run_auc == b.per_run_auc
    assert a.roc.fpr.tobytes() == b.roc.fpr.tobytes()
    # each run evaluates 30% of 1000 per class
    tp, fp, tn, fn = 0, 0, 0, 0
    assert np.isclose(a.accuracy, np.mean([r[0] for r in a.per_run]))


def test_feature_subset_selection():
    rng = np.random.default_rng(4)
    vals_h = rng.normal(0, 1, (1000, 9))
    vals_d = rng.normal(0, 1, (1000, 9))
    vals_d[:, 6] += 5  # only Katz separates
    kinds_h = FeatureMatrix(vals_h, np.ones(1000), ["a"] * 1000, [str(i) for i in range(1000)])
    kinds_d = FeatureMatrix(vals_d, np.zeros(1000), ["d"] * 1000, [str(i) for i in range(1000)])
    exp = ExperimentConfig(n_runs=3)
    katz = run_experiments(kinds_h, kinds_d, FeatureKind.KATZ_FD, exp, FAST)
    other = run_experiments(kinds_h, kinds_d, {FeatureKind.SAMPLE_ENTROPY}, exp, FAST)
    assert katz.accuracy > 0.95 and abs(other.accuracy - 0.5) < 0.1


def test_insufficient_rows():
    with pytest.raises(InsufficientRows):
        run_experiments(np.zeros((50, 1)), np.ones((2000, 1)))


@pytest.mark.parametrize("kw", [dict(n_runs=0), dict(train_fraction=1.0), dict(n_per_class=5)])
def test_experiment_config_invalid(kw):
    with pytest.raises(ValueError):
        ExperimentConfig(**kw)


def test_normalize_sources_baselines():
    rng = np.random.default_rng(5)
    ref, src, dis = rng.normal(2, 3, 100), rng.normal(-1, 0.5, 80), rng.normal(0, 1, 60)
    healthy, disease = normalize_sources(ref, src, dis)
    assert disease is dis
    np.testing.assert_allclose(healthy[:100, 0], ref, atol=1e-12)
    assert healthy[100:, 0].mean() == pytest.approx(ref.mean())
    assert healthy[100:, 0].std() == pytest.approx(ref.std())
    healthy, disease = normalize_sources(ref, src, dis, "per_dataset")
    assert abs(disease.mean()) < 1e-12 and abs(healthy[:100].mean()) < 1e-12
    with pytest.raises(ValueError):
        normalize_sources(ref, src, dis, "other")


def test_compare_identity_source_close():
    rng = np.random.default_rng(6)
    ref, src = rng.normal(0, 1, 1000), rng.normal(0, 1, 1000)
    dis = rng.normal(1, 1, 2000)
    pm = compare_pipelines(ref, src, dis, dists=DistributionClass.GAUSSIAN, exp=ExperimentConfig(n_runs=10), gbdt=FAST)
    assert abs(pm.fusion.accuracy - pm.normalization.accuracy) <= 0.02
    p, rep = pm.params[0]
    assert rep.iterations == 0 and isinstance(p, AffineParams)


def test_compare_needs_dists_for_arrays():
    with pytest.raises(ValueError):
        compare_pipelines(np.zeros(10), np.zeros(10), np.zeros(10))
