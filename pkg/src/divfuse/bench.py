"""Synthetic two-device benchmarks with known affine distortions.

Each profile draws a healthy reference cohort, a healthy source cohort seen
through a distorted "device", and a disease cohort recorded on the reference
device. The ground truth for fusion is the inverse of the distortion.
"""

import os
from pathlib import Path
from dataclasses import dataclass

import numpy as np

from .evaluation import ExperimentConfig, compare_pipelines
from .features import DistributionClass
from .fusion import AffineParams, FusionConfig, KdeModel, apply_affine
from .gbdt import GbdtConfig
from .ingest import Gaussian, Mixture, SynthSpec, synth_dataset
from .report import (
    ReportBundle,
    fusion_entry,
    render_density_svg,
    render_roc_svg,
    table_rows,
    write_fusion_report,
    write_table_csv,
)

PROFILES = ("gaussian_shift", "bimodal_affine", "identity")

_BIMODAL = Mixture((0.5, 0.5), (-2.0, 2.0), (0.5, 0.5))


@dataclass(frozen=True)
class BenchProfile:
    name: str
    reference: object
    source: object
    disease: object
    distortion: AffineParams | None
    dist: DistributionClass
    n_healthy: int = 1000  # per device
    n_disease: int = 2000


def _shifted(mix, shift):
    return Mixture(mix.weights, tuple(m + shift for m in mix.mus), mix.sigmas)


def get_profile(name):
    """Benchmark definition for ``name``.

    ``bimodal_affine`` gives the source device a different mode balance
    (70/30) as well as the distortion ``0.5 * x - 1.5``; the disease cohort is
    the reference mixture shifted by 1.5 component standard deviations.
    """
    if name == "gaussian_shift":
        return BenchProfile(
            name,
            Gaussian(0.0, 1.0),
            Gaussian(0.0, 1.0),
            Gaussian(0.75, 1.0),
            AffineParams(2.0, 3.0),
            DistributionClass.GAUSSIAN,
        )
    if name == "bimodal_affine":
        return BenchProfile(
            name,
            _BIMODAL,
            Mixture((0.7, 0.3), _BIMODAL.mus, _BIMODAL.sigmas),
            _shifted(_BIMODAL, 0.75),
            AffineParams(0.5, -1.5),
            DistributionClass.NON_GAUSSIAN,
        )
    if name == "identity":
        return BenchProfile(
            name,
            _BIMODAL,
            _BIMODAL,
            _shifted(_BIMODAL, 0.75),
            None,
            DistributionClass.NON_GAUSSIAN,
        )
    raise ValueError(f"unknown profile {name!r}; expected one of {PROFILES}")


def synth_cohorts(profile, seed):
    """Draw ``(reference, source, disease, truth)`` for one profile and seed."""
    if isinstance(profile, str):
        profile = get_profile(profile)
    s_ref, s_src, s_dis = np.random.SeedSequence(seed).generate_state(3)
    ref, _ = synth_dataset(SynthSpec(profile.n_healthy, profile.reference, None, int(s_ref)))
    src, distortion = synth_dataset(SynthSpec(profile.n_healthy, profile.source, profile.distortion, int(s_src)))
    dis, _ = synth_dataset(SynthSpec(profile.n_disease, profile.disease, None, int(s_dis)))
    return ref, src, dis, distortion.inverse()


def cmd_synth_bench(
    seed=0,
    profile="bimodal_affine",
    out_dir=None,
    exp=ExperimentConfig(),
    gbdt=GbdtConfig(),
    fusion_config=FusionConfig(),
    baseline="reference_frame",
):
    """Run both arms on a synthetic benchmark and write an annotated report.

    The single table row is named after the profile; the fusion report
    records the ground-truth and recovered ``(C, D)``.
    """
    prof = get_profile(profile)
    ref, src, dis, truth = synth_cohorts(prof, seed)
    pm = compare_pipelines(
        ref, src, dis, dists=prof.dist, fusion_config=fusion_config, exp=exp, gbdt=gbdt, baseline=baseline
    )
    params, rep = pm.params[0]
    name = f"synthetic_{prof.name}"
    rows = table_rows([(prof.dist.value, name, pm)])
    entry = fusion_entry(params, rep, truth)

    out_dir = out_dir or os.path.join("out", f"bench_{prof.name}_{seed}")
    os.makedirs(out_dir, exist_ok=True)
    table = write_table_csv(rows, os.path.join(out_dir, "table.csv"))
    freport = write_fusion_report({name: entry}, os.path.join(out_dir, "fusion_report.json"))
    kx = KdeModel.fit(ref)
    density = render_density_svg(
        (kx, KdeModel.fit(src)),
        (kx, KdeModel.fit(apply_affine(src, params))),
        os.path.join(out_dir, f"density_{name}.svg"),
        title=name,
    )
    roc = render_roc_svg(
        [("normalization", pm.normalization.roc), ("fusion", pm.fusion.roc)],
        os.path.join(out_dir, "roc.svg"),
        title=name,
    )
    return ReportBundle(table, freport, {name: density}, roc, rows, {name: entry}, {name: pm})


def write_ecg_cohorts(out_dir, n_records=30, seed=0, seconds=5.0, leads=2):
    """Write three CSV-record manifests: reference, source and disease.

    The source device records at 1000 Hz with a lower gain and a baseline
    offset; the disease cohort has faster, irregular rhythms with early beats.
    Returns the three manifest paths.
    """
    from .ingest import ClassLabel, DatasetManifest, ManifestEntry, Record, synth_ecg, write_csv_record, write_manifest

    out = Path(out_dir)
    seeds = np.random.SeedSequence(seed).generate_state(3 * n_records).reshape(3, n_records)
    cohorts = (
        ("reference", 500.0, 1.0, 0.0, ClassLabel.HEALTHY, dict(ectopic=0.0, rr_jitter=0.04)),
        ("source", 1000.0, 0.6, 0.2, ClassLabel.HEALTHY, dict(ectopic=0.0, rr_jitter=0.04)),
        ("disease", 500.0, 1.0, 0.0, ClassLabel.ARRHYTHMIA, dict(ectopic=0.3, rr_jitter=0.15)),
    )
    paths = []
    for (name, rate, gain, offset, label, kw), cohort_seeds in zip(cohorts, seeds):
        (out / name).mkdir(parents=True, exist_ok=True)
        entries = []
        for i, s in enumerate(cohort_seeds):
            rng = np.random.default_rng(int(s))
            hr = rng.uniform(90, 120) if label == ClassLabel.ARRHYTHMIA else rng.uniform(55, 85)
            rec = synth_ecg(f"{name}_{i:03d}", seconds, rate, hr, leads, int(s), label=label, **kw)
            rec = Record(rec.id, gain * rec.signal + offset, rec.rate, rec.label)
            rel = f"{name}/{rec.id}.csv"
            write_csv_record(rec, out / rel)
            entries.append(ManifestEntry(rel, "csv", rate, label))
        manifest = DatasetManifest(name, tuple(entries), lead_select=1, root=str(out))
        path = out / f"{name}.json"
        write_manifest(manifest, path)
        paths.append(str(path))
    return paths
