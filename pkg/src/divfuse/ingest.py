"""Loading ECG records from CSV / WFDB-subset files and synthetic generation.

The manifest is a JSON document::

    {
      "name": "health_a",
      "lead_select": 1,
      "entries": [
        {"path": "rec001.csv", "format": "csv", "rate_hz": 500, "label": "healthy"},
        {"path": "rec002.hea", "format": "wfdb", "label": "arrhythmia"}
      ]
    }

Relative paths are resolved against the manifest's directory. For WFDB entries
the sampling rate declared in the header wins over ``rate_hz``.
"""

import csv
import enum
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyFile,
    HeaderDataMismatch,
    InvalidManifest,
    InvalidSpec,
    MissingDataFile,
    MissingFile,
    NonFiniteValue,
    ParseError,
    UnsupportedFormat,
)


class ClassLabel(enum.IntEnum):
    """Binary cohort label; healthy is 1 and arrhythmia is 0."""

    ARRHYTHMIA = 0
    HEALTHY = 1

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower()
        if key in ("healthy", "1"):
            return cls.HEALTHY
        if key in ("arrhythmia", "0"):
            return cls.ARRHYTHMIA
        raise ValueError(f"unknown label {text!r}")

    @property
    def text(self):
        return self.name.lower()


@dataclass(frozen=True)
class Record:
    id: str
    signal: np.ndarray  # leads x samples, millivolts
    rate: float
    label: ClassLabel

    def __post_init__(self):
        sig = np.asarray(self.signal, dtype=float)
        if sig.ndim == 1:
            sig = sig[None, :]
        if sig.ndim != 2 or sig.shape[0] < 1 or sig.shape[1] < 2:
            raise ValueError(f"record {self.id}: signal must be leads x samples with >= 2 samples")
        if not self.rate > 0:
            raise ValueError(f"record {self.id}: rate must be positive")
        if not np.all(np.isfinite(sig)):
            raise ValueError(f"record {self.id}: non-finite amplitudes")
        sig.setflags(write=False)
        object.__setattr__(self, "signal", sig)

    @property
    def leads(self):
        return self.signal.shape[0]

    @property
    def samples(self):
        return self.signal.shape[1]


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    format: str
    rate: float | None
    label: ClassLabel


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    entries: tuple
    lead_select: int = 1
    root: str = "."

    def resolve(self, entry):
        p = Path(entry.path)
        return p if p.is_absolute() else Path(self.root) / p


# manifest

def _require(doc, key, kind):
    if key not in doc:
        raise InvalidManifest(key, "missing")
    value = doc[key]
    if not isinstance(value, kind):
        raise InvalidManifest(key, f"expected {kind.__name__ if isinstance(kind, type) else kind}")
    return value


def parse_manifest(doc, root="."):
    """Validate a decoded manifest document and build a `DatasetManifest`."""
    if not isinstance(doc, dict):
        raise InvalidManifest("<root>", "expected an object")
    name = _require(doc, "name", str)
    lead = doc.get("lead_select", 1)
    if isinstance(lead, bool) or not isinstance(lead, int) or lead < 0:
        raise InvalidManifest("lead_select", "expected a non-negative integer")
    raw_entries = _require(doc, "entries", list)
    if not raw_entries:
        raise InvalidManifest("entries", "empty")

    entries = []
    seen = set()
    for i, e in enumerate(raw_entries):
        where = f"entries[{i}]"
        if not isinstance(e, dict):
            raise InvalidManifest(where, "expected an object")
        path = e.get("path")
        if not isinstance(path, str) or not path:
            raise InvalidManifest(f"{where}.path")
        if path in seen:
            raise InvalidManifest(f"{where}.path", f"duplicate path {path!r}")
        seen.add(path)
        fmt = e.get("format")
        if fmt not in ("csv", "wfdb"):
            raise InvalidManifest(f"{where}.format", f"{fmt!r} not in csv/wfdb")
        rate = e.get("rate_hz")
        if rate is None:
            if fmt == "csv":
                raise InvalidManifest(f"{where}.rate_hz", "required for csv entries")
        elif isinstance(rate, bool) or not isinstance(rate, (int, float)) or not rate > 0:
            raise InvalidManifest(f"{where}.rate_hz", "expected a positive number")
        try:
            label = ClassLabel.parse(e.get("label"))
        except ValueError as exc:
            raise InvalidManifest(f"{where}.label", str(exc)) from None
        entries.append(ManifestEntry(path, fmt, None if rate is None else float(rate), label))

    return DatasetManifest(name=name, entries=tuple(entries), lead_select=lead, root=str(root))


def load_manifest(path):
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.lineno, exc.msg) from None
    return parse_manifest(doc, root=path.parent)


def manifest_to_dict(manifest):
    return {
        "name": manifest.name,
        "lead_select": manifest.lead_select,
        "entries": [
            {
                "path": e.path,
                "format": e.format,
                **({"rate_hz": e.rate} if e.rate is not None else {}),
                "label": e.label.text,
            }
            for e in manifest.entries
        ],
    }


def write_manifest(manifest, path):
    Path(path).write_text(json.dumps(manifest_to_dict(manifest), indent=2) + "\n", encoding="utf-8")


# CSV records

def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def read_csv_record(path, rate, label, record_id=None):
    """Read a samples x leads CSV into a `Record` (leads x samples)."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise EmptyFile(f"{path}: no rows")
    if not all(_is_number(c) for c in rows[0]):
        rows = rows[1:]
        start = 2
    else:
        start = 1
    if not rows:
        raise EmptyFile(f"{path}: header only")

    width = len(rows[0])
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        lineno = start + i
        if len(row) != width:
            raise ParseError(lineno, f"expected {width} columns, got {len(row)}", col=len(row))
        for j, tok in enumerate(row):
            try:
                v = float(tok)
            except ValueError:
                raise ParseError(lineno, f"not a number: {tok!r}", col=j + 1) from None
            if not math.isfinite(v):
                raise NonFiniteValue(lineno, j + 1)
            data[i, j] = v
    if data.shape[0] < 2:
        raise EmptyFile(f"{path}: fewer than 2 samples")
    return Record(record_id or path.stem, data.T.copy(), float(rate), ClassLabel.parse(label))


def write_csv_record(record, path, header=True):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"lead{i}" for i in range(record.leads)])
        for row in record.signal.T:
            w.writerow([repr(float(v)) for v in row])


# WFDB subset (format 16 only)

_GAIN_RE = re.compile(r"^([-+0-9.eE]+)(?:\(([-+0-9]+)\))?(?:/\S*)?$")


def _parse_signal_line(tokens, lineno):
    if len(tokens) < 2:
        raise ParseError(lineno, "signal line needs at least file name and format")
    fname = tokens[0]
    fmt_tok = tokens[1].split("x")[0].split(":")[0].split("+")[0]
    try:
        fmt = int(fmt_tok)
    except ValueError:
        raise ParseError(lineno, f"bad format field {tokens[1]!r}") from None
    if fmt != 16:
        raise UnsupportedFormat(fmt)

    gain, baseline = 200.0, None
    if len(tokens) > 2:
        m = _GAIN_RE.match(tokens[2])
        if m is None:
            raise ParseError(lineno, f"bad gain field {tokens[2]!r}")
        gain = float(m.group(1)) or 200.0
        if m.group(2) is not None:
            baseline = int(m.group(2))
    if baseline is None:
        if len(tokens) == 4:
            # simplified form: file 16 gain baseline
            baseline = int(tokens[3])
        elif len(tokens) > 4:
            baseline = int(tokens[4])  # ADC zero
        else:
            baseline = 0
    return fname, gain, baseline


def read_wfdb_record(header_path, label, record_id=None):
    """Read a format-16 WFDB record; amplitudes are (raw - baseline) / gain."""
    header_path = Path(header_path)
    if not header_path.is_file():
        raise MissingFile(header_path)
    lines = []
    for i, raw in enumerate(header_path.read_text(encoding="utf-8").splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            lines.append((i, body.split()))
    if not lines:
        raise EmptyFile(f"{header_path}: empty header")

    lineno, rec = lines[0]
    if len(rec) < 4:
        raise ParseError(lineno, "record line needs name, n_leads, rate, n_samples")
    try:
        n_leads = int(rec[1])
        rate = float(rec[2].split("/")[0].split("(")[0])
        n_samples = int(rec[3])
    except ValueError:
        raise ParseError(lineno, "non-numeric record line field") from None
    if n_leads < 1 or rate <= 0 or n_samples < 2:
        raise ParseError(lineno, "record line values out of range")
    if len(lines) - 1 < n_leads:
        raise ParseError(lines[-1][0], f"expected {n_leads} signal lines, got {len(lines) - 1}")

    specs = [_parse_signal_line(toks, ln) for ln, toks in lines[1 : 1 + n_leads]]
    files = {s[0] for s in specs}
    if len(files) != 1:
        raise UnsupportedFormat("multi-file")
    dat_path = header_path.parent / files.pop()
    if not dat_path.is_file():
        raise MissingDataFile(str(dat_path))

    expected = n_leads * n_samples * 2
    size = dat_path.stat().st_size
    if size != expected:
        raise HeaderDataMismatch(f"{dat_path}: {size} bytes on disk, header declares {expected}")
    raw = np.fromfile(dat_path, dtype="<i2").reshape(n_samples, n_leads).T
    gains = np.array([s[1] for s in specs])[:, None]
    base = np.array([s[2] for s in specs], dtype=float)[:, None]
    signal = (raw.astype(float) - base) / gains
    return Record(record_id or header_path.stem, signal, rate, ClassLabel.parse(label))


def load_record(manifest, entry, record_id=None):
    path = manifest.resolve(entry)
    rid = record_id or f"{manifest.name}/{Path(entry.path).stem}"
    if entry.format == "csv":
        rec = read_csv_record(path, entry.rate, entry.label, record_id=rid)
    else:
        rec = read_wfdb_record(path, entry.label, record_id=rid)
    if manifest.lead_select >= rec.leads:
        raise InvalidManifest("lead_select", f"{rid} has only {rec.leads} leads")
    return rec


def load_dataset(manifest):
    """Load every record listed in ``manifest`` in order."""
    return [load_record(manifest, e) for e in manifest.entries]


# synthetic generation

@dataclass(frozen=True)
class Gaussian:
    mu: float
    sigma: float


@dataclass(frozen=True)
class Mixture:
    weights: tuple
    mus: tuple
    sigmas: tuple


@dataclass(frozen=True)
class LogNormal:
    mu: float
    sigma: float


@dataclass(frozen=True)
class SynthSpec:
    n: int
    base: object  # Gaussian | Mixture | LogNormal
    distortion: object = None  # AffineParams; identity when None
    seed: int = 0

    def validate(self):
        if self.n < 1:
            raise InvalidSpec("n must be >= 1")
        b = self.base
        if isinstance(b, (Gaussian, LogNormal)):
            if not b.sigma > 0:
                raise InvalidSpec("sigma must be positive")
        elif isinstance(b, Mixture):
            if not (len(b.weights) == len(b.mus) == len(b.sigmas)) or not b.weights:
                raise InvalidSpec("mixture parameter lengths differ")
            if any(not s > 0 for s in b.sigmas):
                raise InvalidSpec("mixture sigma must be positive")
            if any(w < 0 for w in b.weights) or abs(sum(b.weights) - 1.0) > 1e-12:
                raise InvalidSpec("mixture weights must be non-negative and sum to 1")
        else:
            raise InvalidSpec(f"unknown base distribution {b!r}")
        d = self.distortion
        if d is not None and (not math.isfinite(d.C) or d.C == 0 or not math.isfinite(d.D)):
            raise InvalidSpec("distortion C must be finite and nonzero, D finite")


def _draw_base(base, n, rng):
    if isinstance(base, Gaussian):
        return rng.normal(base.mu, base.sigma, n)
    if isinstance(base, LogNormal):
        return rng.lognormal(base.mu, base.sigma, n)
    comp = rng.choice(len(base.weights), size=n, p=np.asarray(base.weights, dtype=float))
    mus = np.asarray(base.mus, dtype=float)[comp]
    sig = np.asarray(base.sigmas, dtype=float)[comp]
    return mus + sig * rng.standard_normal(n)


def synth_dataset(spec):
    """Draw ``spec.n`` base samples and push them through the distortion.

    Returns ``(values, ground_truth)`` where ``ground_truth`` is the distortion
    that was applied (identity if the spec carries none).
    """
    from .fusion import AffineParams

    spec.validate()
    rng = np.random.default_rng(spec.seed)
    base = _draw_base(spec.base, spec.n, rng)
    truth = spec.distortion if spec.distortion is not None else AffineParams(1.0, 0.0)
    return truth.C * base + truth.D, truth


# P, Q, R, S, T bumps: (offset from R in seconds, width in seconds, amplitude in mV)
_WAVES = ((-0.2, 0.025, 0.15), (-0.03, 0.01, -0.12), (0.0, 0.012, 1.0), (0.03, 0.01, -0.25), (0.25, 0.04, 0.3))


def synth_ecg(
    record_id="synthetic",
    seconds=10.0,
    rate=500.0,
    heart_rate=70.0,
    leads=12,
    seed=0,
    noise=0.02,
    rr_jitter=0.05,
    ectopic=0.0,
    label=ClassLabel.HEALTHY,
):
    """Sum-of-Gaussians ECG-like record, one lead-specific gain per lead.

    ``rr_jitter`` is the relative spread of RR intervals; ``ectopic`` is the
    probability that a beat comes early (30% short RR) with a widened QRS.
    """
    rng = np.random.default_rng(seed)
    n = int(round(seconds * rate))
    t = np.arange(n) / rate
    rr = 60.0 / heart_rate
    beats, wide = [], []
    pos = rng.uniform(0.1, rr)
    while pos < seconds + 0.3:
        early = rng.random() < ectopic
        beats.append(pos)
        wide.append(early)
        step = rr * (1 + rr_jitter * rng.standard_normal())
        pos += max(0.3, step * (0.7 if early else 1.0))
    base = np.zeros(n)
    for b, w in zip(beats, wide):
        for off, width, amp in _WAVES:
            width = width * (2.5 if (w and abs(off) < 0.05) else 1.0)
            base += amp * np.exp(-0.5 * ((t - b - off) / width) ** 2)
    gains = rng.uniform(0.5, 1.5, leads) * rng.choice([-1.0, 1.0], leads, p=[0.2, 0.8])
    gains[min(1, leads - 1)] = abs(gains[min(1, leads - 1)])
    sig = gains[:, None] * base[None, :] + noise * rng.standard_normal((leads, n))
    return Record(record_id, sig, float(rate), ClassLabel.parse(label))
