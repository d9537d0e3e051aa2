"""Command-line entry point and the end-to-end pipeline driver.

``divfuse run --config cfg.json`` loads three manifests (healthy reference
device, healthy source device, disease cohort), windows and featurizes every
record, then compares standardization against fusion for each feature and
for all nine together.
"""

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .bench import PROFILES, cmd_synth_bench
from .errors import DivfuseError, InvalidSpec, StageError
from .evaluation import (
    ExperimentConfig,
    PairedMetrics,
    fuse_sources,
    normalize_sources,
    run_experiments,
)
from .features import (
    KINDS,
    FeatureMatrix,
    FeatureParams,
    classify_distribution,
    extract_matrix,
    read_feature_csv,
    write_feature_csv,
)
from .fusion import FusionConfig, KdeModel, apply_affine, fuse
from .gbdt import GbdtConfig
from .ingest import ClassLabel, load_manifest, load_record
from .preprocess import PreprocConfig, preprocess_record, read_windows_csv, write_windows_csv
from .report import (
    ReportBundle,
    fusion_entry,
    render_density_svg,
    render_roc_svg,
    table_rows,
    write_fusion_report,
    write_table_csv,
)

POLICIES = ("paper_default", "auto_test")
BASELINES = ("reference_frame", "per_dataset")


@dataclass(frozen=True)
class PipelineConfig:
    reference_manifest: str
    source_manifest: str
    disease_manifest: str
    output_dir: str = "out"
    preproc: PreprocConfig = field(default_factory=PreprocConfig)
    feature_params: FeatureParams = field(default_factory=FeatureParams)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    gbdt: GbdtConfig = field(default_factory=GbdtConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    distribution_policy: str = "paper_default"
    baseline: str = "reference_frame"

    def __post_init__(self):
        paths = [os.path.abspath(p) for p in self.manifests]
        if len(set(paths)) != 3:
            raise InvalidSpec("reference, source and disease manifests must be distinct")
        if self.distribution_policy not in POLICIES:
            raise InvalidSpec(f"distribution_policy must be one of {POLICIES}")
        if self.baseline not in BASELINES:
            raise InvalidSpec(f"baseline must be one of {BASELINES}")

    @property
    def manifests(self):
        return (self.reference_manifest, self.source_manifest, self.disease_manifest)


_SECTIONS = {
    "preproc": PreprocConfig,
    "feature_params": FeatureParams,
    "fusion": FusionConfig,
    "gbdt": GbdtConfig,
    "experiment": ExperimentConfig,
}


def config_from_dict(doc, root="."):
    """Build a PipelineConfig; relative paths resolve against ``root``."""
    if not isinstance(doc, dict):
        raise InvalidSpec("config must be a JSON object")
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(doc) - known
    if unknown:
        raise InvalidSpec(f"unknown config keys: {sorted(unknown)}")
    kw = dict(doc)
    try:
        for key, cls in _SECTIONS.items():
            if key in kw:
                kw[key] = cls(**kw[key])
        for key in ("reference_manifest", "source_manifest", "disease_manifest", "output_dir"):
            if key in kw and not os.path.isabs(kw[key]):
                kw[key] = os.path.join(root, kw[key])
        return PipelineConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise InvalidSpec(str(exc)) from None


def load_config(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise StageError("config", FileNotFoundError(str(path)), str(path)) from None
    except json.JSONDecodeError as exc:
        raise StageError("config", exc, str(path)) from None
    return config_from_dict(doc, root=path.parent)


def config_to_dict(config):
    return asdict(config)


# pipeline stages

def _threads():
    try:
        return max(1, int(os.environ.get("DIVFUSE_THREADS", "1")))
    except ValueError:
        return 1


def _ingest(path):
    try:
        manifest = load_manifest(path)
    except DivfuseError as exc:
        raise StageError("ingest", exc, str(path)) from None
    records = []
    for entry in manifest.entries:
        try:
            records.append(load_record(manifest, entry))
        except DivfuseError as exc:
            raise StageError("ingest", exc, f"{manifest.name}/{entry.path}") from None
    return manifest, records


def _preprocess(manifest, records, config):
    def one(rec):
        try:
            return preprocess_record(rec, config, lead=manifest.lead_select)
        except DivfuseError as exc:
            raise StageError("preprocess", exc, rec.id) from None

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        return list(pool.map(one, records))


def _extract(windows, labels, params, sources):
    try:
        return extract_matrix(windows, labels, params, sources)
    except DivfuseError as exc:
        raise StageError("extract", exc, sources[0] if sources else None) from None


def featurize(manifest_path, config):
    """Ingest, window and featurize one cohort; returns its FeatureMatrix."""
    manifest, records = _ingest(manifest_path)
    windows = _preprocess(manifest, records, config.preproc)
    return _extract(windows, [r.label for r in records], config.feature_params, [manifest.name] * len(windows))


def _pair_columns(ref, src, dis, fused, distributions, cols, config):
    h_a, d_a = normalize_sources(ref[:, cols], src[:, cols], dis[:, cols], config.baseline)
    h_b = np.vstack([ref[:, cols], fused[:, cols]])
    a = run_experiments(h_a, d_a, None, config.experiment, config.gbdt)
    b = run_experiments(h_b, dis[:, cols], None, config.experiment, config.gbdt)
    return PairedMetrics(a, b, [], [distributions[c] for c in cols])


def cmd_run(config):
    """Full pipeline; writes the report bundle into ``config.output_dir``."""
    cohorts = []
    for path in config.manifests:
        cohorts.append(featurize(path, config))
    ref_fm, src_fm, dis_fm = cohorts
    ref, src, dis = ref_fm.values, src_fm.values, dis_fm.values

    try:
        pooled = np.vstack([ref, src])
        distributions = [
            classify_distribution(pooled[:, j], config.distribution_policy, kind=k)
            for j, k in enumerate(KINDS)
        ]
    except DivfuseError as exc:
        raise StageError("fuse", exc, "distribution") from None

    try:
        healthy_b, params = fuse_sources(ref, src, distributions, config.fusion)
    except DivfuseError as exc:
        raise StageError("fuse", exc, src_fm.sources[0] if len(src_fm) else None) from None
    fused = healthy_b[ref.shape[0]:]

    results = []
    try:
        for j, kind in enumerate(KINDS):
            pm = _pair_columns(ref, src, dis, fused, distributions, [j], config)
            pm.params = [params[j]]
            results.append((distributions[j].value, kind.value, pm))
        pm = _pair_columns(ref, src, dis, fused, distributions, list(range(len(KINDS))), config)
        pm.params = params
        results.append(("all", "combined", pm))
    except DivfuseError as exc:
        raise StageError("classify", exc, results[-1][1] if results else KINDS[0].value) from None

    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        rows = table_rows(results)
        table = write_table_csv(rows, out / "table.csv")
        entries = {k.value: fusion_entry(*params[j]) for j, k in enumerate(KINDS)}
        freport = write_fusion_report(entries, out / "fusion_report.json")
        write_feature_csv(FeatureMatrix.concat([ref_fm, src_fm, dis_fm]), out / "features.csv")
        svgs = {}
        for j, k in enumerate(KINDS):
            kx = KdeModel.fit(ref[:, j])
            svgs[k.value] = render_density_svg(
                (kx, KdeModel.fit(src[:, j])),
                (kx, KdeModel.fit(fused[:, j])),
                out / f"density_{k.value}.svg",
                title=k.title,
            )
        combined = results[-1][2]
        roc = render_roc_svg(
            [("normalization", combined.normalization.roc), ("fusion", combined.fusion.roc)],
            out / "roc.svg",
            title="combined features",
        )
    except (OSError, ValueError) as exc:
        raise StageError("report", exc, str(out)) from None
    paired = {name: pm for _, name, pm in results}
    return ReportBundle(str(table), str(freport), {k: str(v) for k, v in svgs.items()}, str(roc), rows, entries, paired)


# standalone stages

def cmd_ingest(manifest_path, out_path):
    """Load a manifest and list its records as CSV."""
    manifest, records = _ingest(manifest_path)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", "label", "rate_hz", "leads", "samples"])
        for r in records:
            w.writerow([r.id, r.label.text, repr(r.rate), r.leads, r.samples])
    return records


def cmd_preprocess(manifest_path, out_path, config=PreprocConfig()):
    manifest, records = _ingest(manifest_path)
    windows = _preprocess(manifest, records, config)
    write_windows_csv(windows, [manifest.name] * len(windows), [r.label for r in records], out_path)
    return windows


def cmd_extract(windows_path, out_path, params=FeatureParams()):
    windows, sources, labels = read_windows_csv(windows_path)
    fm = _extract(windows, labels, params, sources)
    write_feature_csv(fm, out_path)
    return fm


def cmd_fuse(features_path, out_path, reference, source, policy="paper_default", config=FusionConfig(), report_path=None):
    """Map the ``source`` rows onto the ``reference`` rows, feature by feature.

    Parameters are learned on the healthy rows of each source and applied to
    every row of ``source``.
    """
    fm = read_feature_csv(features_path)
    src_names = np.asarray(fm.sources)
    healthy = np.asarray(fm.labels) == int(ClassLabel.HEALTHY)
    ref_rows = (src_names == reference) & healthy
    src_rows = (src_names == source) & healthy
    if not ref_rows.any() or not src_rows.any():
        raise StageError("fuse", InvalidSpec("no healthy rows for reference or source"), f"{reference}/{source}")
    values = fm.values.copy()
    entries = {}
    for j, kind in enumerate(KINDS):
        ref_col, src_col = values[ref_rows, j], values[src_rows, j]
        try:
            dist = classify_distribution(np.r_[ref_col, src_col], policy, kind=kind)
            p, rep = fuse(ref_col, src_col, dist, config)
        except DivfuseError as exc:
            raise StageError("fuse", exc, kind.value) from None
        values[src_names == source, j] = apply_affine(values[src_names == source, j], p)
        entries[kind.value] = fusion_entry(p, rep)
    out = FeatureMatrix(values, fm.labels, fm.sources, fm.record_ids)
    write_feature_csv(out, out_path)
    if report_path:
        write_fusion_report(entries, report_path)
    return out, entries


def cmd_classify(features_path, out_path, exp=ExperimentConfig(), gbdt=GbdtConfig()):
    """Single-arm metrics for each feature and for all nine together."""
    fm = read_feature_csv(features_path)
    labels = np.asarray(fm.labels)
    healthy, disease = fm.values[labels == 1], fm.values[labels == 0]
    rows = []
    subsets = [(k.value, [j]) for j, k in enumerate(KINDS)] + [("combined", None)]
    for name, cols in subsets:
        try:
            m = run_experiments(healthy, disease, cols, exp, gbdt)
        except DivfuseError as exc:
            raise StageError("classify", exc, name) from None
        rows.append([name] + [f"{v:.6f}" for v in (m.accuracy, m.fpr, m.fnr, m.auc)])
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "accuracy", "fpr", "fnr", "auc"])
        w.writerows(rows)
    return rows


# argument parsing

def build_parser():
    p = argparse.ArgumentParser(prog="divfuse", description="Distribution-based fusion of ECG feature datasets.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the full pipeline from a JSON config")
    r.add_argument("--config", required=True)

    s = sub.add_parser("synth-bench", help="run a synthetic two-device benchmark")
    s.add_argument("--profile", choices=PROFILES, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None, help="output directory")
    s.add_argument("--runs", type=int, default=100, help="number of classification runs")
    s.add_argument("--baseline", choices=BASELINES, default="reference_frame")

    i = sub.add_parser("ingest", help="load a manifest and list its records")
    i.add_argument("--in", dest="inp", required=True, help="manifest JSON")
    i.add_argument("--out", required=True, help="record listing CSV")

    pp = sub.add_parser("preprocess", help="window every record of a manifest")
    pp.add_argument("--in", dest="inp", required=True, help="manifest JSON")
    pp.add_argument("--out", required=True, help="windows CSV")
    pp.add_argument("--window-len", type=int, default=500)
    pp.add_argument("--target-rate", type=float, default=500.0)
    pp.add_argument("--theta", type=float, default=0.05)

    e = sub.add_parser("extract", help="compute the nine features of each window")
    e.add_argument("--in", dest="inp", required=True, help="windows CSV")
    e.add_argument("--out", required=True, help="feature CSV")

    f = sub.add_parser("fuse", help="map one source onto a reference in a feature CSV")
    f.add_argument("--in", dest="inp", required=True, help="feature CSV")
    f.add_argument("--out", required=True, help="fused feature CSV")
    f.add_argument("--reference", required=True, help="source name of the reference rows")
    f.add_argument("--source", required=True, help="source name of the rows to transform")
    f.add_argument("--policy", choices=POLICIES, default="paper_default")
    f.add_argument("--report", default=None, help="optional fusion report JSON")

    c = sub.add_parser("classify", help="per-feature classification metrics")
    c.add_argument("--in", dest="inp", required=True, help="feature CSV")
    c.add_argument("--out", required=True, help="metrics CSV")
    c.add_argument("--runs", type=int, default=100)
    c.add_argument("--per-class", type=int, default=1000)
    c.add_argument("--seed", type=int, default=42)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            bundle = cmd_run(load_config(args.config))
            print(bundle.table_csv)
        elif args.command == "synth-bench":
            bundle = cmd_synth_bench(
                args.seed, args.profile, args.out, exp=ExperimentConfig(n_runs=args.runs), baseline=args.baseline
            )
            print(bundle.table_csv)
        elif args.command == "ingest":
            cmd_ingest(args.inp, args.out)
        elif args.command == "preprocess":
            cfg = PreprocConfig(target_rate=args.target_rate, denoise_theta=args.theta, window_len=args.window_len)
            cmd_preprocess(args.inp, args.out, cfg)
        elif args.command == "extract":
            cmd_extract(args.inp, args.out)
        elif args.command == "fuse":
            cmd_fuse(args.inp, args.out, args.reference, args.source, args.policy, report_path=args.report)
        elif args.command == "classify":
            exp = ExperimentConfig(n_runs=args.runs, n_per_class=args.per_class, base_seed=args.seed)
            cmd_classify(args.inp, args.out, exp)
    except StageError as exc:
        print(f"divfuse: error in stage {exc.stage}: {exc}", file=sys.stderr)
        return 2
    except (DivfuseError, OSError, ValueError) as exc:
        print(f"divfuse: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
