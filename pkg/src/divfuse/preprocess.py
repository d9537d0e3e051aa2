"""Rate normalization, FFT denoising, R-peak detection and beat windowing."""

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import EmptySignal, InvalidRate, NoPeaksFound, PeakOutOfRange


@dataclass(frozen=True)
class PreprocConfig:
    target_rate: float = 500.0
    denoise_theta: float = 0.05
    window_len: int = 500
    peak_refractory: float = 0.25

    def __post_init__(self):
        if not self.target_rate > 0:
            raise ValueError("target_rate must be positive")
        if not 0 <= self.denoise_theta < 1:
            raise ValueError("denoise_theta must lie in [0, 1)")
        if self.window_len < 2:
            raise ValueError("window_len must be >= 2")
        if not self.peak_refractory > 0:
            raise ValueError("peak_refractory must be positive")


@dataclass(frozen=True)
class BeatWindow:
    values: np.ndarray
    source_id: str
    peak_index: int
    rate: float = 500.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValueError("window values must be a finite 1-D vector")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


def _as_signal(x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise EmptySignal("signal must be 1-D with at least 2 samples")
    return x


def resample(x, from_rate, to_rate):
    """Fourier-domain resampling to ``round(len * to_rate / from_rate)`` samples."""
    x = _as_signal(x)
    if not (from_rate > 0 and to_rate > 0):
        raise InvalidRate(f"rates must be positive, got {from_rate} -> {to_rate}")
    if from_rate == to_rate:
        return x.copy()
    n_out = int(round(x.size * to_rate / from_rate))
    if n_out < 1:
        raise EmptySignal("resampled signal would be empty")
    return sps.resample(x, n_out)


def fft_denoise(x, theta):
    """Zero every non-DC Fourier coefficient below ``theta`` times the largest one.

    The DC term is kept regardless and does not take part in picking the maximum.
    """
    x = _as_signal(x)
    if not 0 <= theta < 1:
        raise ValueError("theta must lie in [0, 1)")
    spec = np.fft.rfft(x)
    mag = np.abs(spec)
    if mag.size > 1:
        cutoff = theta * mag[1:].max()
        drop = mag < cutoff
        drop[0] = False
        spec[drop] = 0.0
    return np.fft.irfft(spec, n=x.size)


def detection_envelope(x, rate, smooth=0.12):
    """Squared first difference smoothed by a ``smooth``-second moving average."""
    d = np.diff(x, prepend=x[0])
    w = max(1, int(round(smooth * rate)))
    return np.convolve(d * d, np.ones(w) / w, mode="same")


def detect_r_peaks(x, rate, refractory=0.25):
    """Locate beats as envelope maxima above half the envelope RMS.

    The signal is mirrored at both ends before smoothing so beats at the very
    edge still form a maximum. Flat envelope tops resolve to their midpoint;
    peaks closer than the refractory period are thinned keeping the larger one.
    """
    x = np.asarray(x, dtype=float)
    if not rate > 0:
        raise InvalidRate(f"rate must be positive, got {rate}")
    w = max(1, int(round(0.12 * rate)))
    if x.ndim != 1 or x.size <= w:
        raise NoPeaksFound(f"signal of {x.size} samples is shorter than the detector window")
    pad = min(w, x.size - 1)
    env = detection_envelope(np.pad(x, pad, mode="reflect"), rate)
    inner = env[pad:-pad]
    rms = math.sqrt(float(np.mean(inner * inner)))
    if rms == 0.0:
        raise NoPeaksFound("flat signal")
    distance = max(1, int(math.ceil(refractory * rate)))
    peaks, _ = sps.find_peaks(env, height=0.5 * rms, distance=distance)
    peaks = peaks[(peaks >= pad) & (peaks < pad + x.size)] - pad
    if peaks.size == 0:
        raise NoPeaksFound("no envelope maxima above threshold")
    return peaks.astype(int)


def extract_window(x, peak, window_len, source_id="", rate=500.0):
    """Cut ``window_len`` samples around ``peak``, zero-padding at the edges."""
    x = np.asarray(x, dtype=float)
    if window_len < 2:
        raise ValueError("window_len must be >= 2")
    if not 0 <= peak < x.size:
        raise PeakOutOfRange(f"peak {peak} outside [0, {x.size})")
    start = peak - window_len // 2
    out = np.zeros(window_len)
    lo, hi = max(start, 0), min(start + window_len, x.size)
    out[lo - start : hi - start] = x[lo:hi]
    return BeatWindow(out, source_id, int(peak), float(rate))


def preprocess_record(record, config=PreprocConfig(), lead=1):
    """Resample, denoise and window one lead of ``record`` around its median beat."""
    if not 0 <= lead < record.leads:
        raise IndexError(f"lead {lead} not in record {record.id} with {record.leads} leads")
    x = resample(record.signal[lead], record.rate, config.target_rate)
    x = fft_denoise(x, config.denoise_theta)
    peaks = detect_r_peaks(x, config.target_rate, config.peak_refractory)
    peak = int(peaks[(peaks.size - 1) // 2])
    return extract_window(x, peak, config.window_len, record.id, config.target_rate)


# windows CSV: record_id, source, label, rate, peak_index, v0 .. v{n-1}

def write_windows_csv(windows, sources, labels, path):
    import csv

    windows = list(windows)
    width = len(windows[0]) if windows else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["record_id", "source", "label", "rate", "peak_index"] + [f"v{i}" for i in range(width)])
        for win, src, lab in zip(windows, sources, labels):
            w.writerow(
                [win.source_id, src, int(lab), repr(float(win.rate)), win.peak_index]
                + [repr(float(v)) for v in win.values]
            )


def read_windows_csv(path):
    """Returns ``(windows, sources, labels)``."""
    import csv

    windows, sources, labels = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:5] != ["record_id", "source", "label", "rate", "peak_index"]:
            raise ValueError(f"{path}: not a windows CSV")
        for row in reader:
            if not row:
                continue
            vals = np.array([float(v) for v in row[5:]])
            windows.append(BeatWindow(vals, row[0], int(row[4]), float(row[3])))
            sources.append(row[1])
            labels.append(int(row[2]))
    return windows, sources, labels
