import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from divfuse.errors import EmptySignal, InvalidRate, NoPeaksFound, PeakOutOfRange
from divfuse.ingest import Record, synth_ecg
from divfuse.preprocess import (
    BeatWindow,
    PreprocConfig,
    detect_r_peaks,
    extract_window,
    fft_denoise,
    preprocess_record,
    read_windows_csv,
    resample,
    write_windows_csv,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


# resampling

def test_resample_constant_halves():
    out = resample(np.full(1000, 3.5), 1000, 500)
    assert out.size == 500
    np.testing.assert_allclose(out, 3.5, atol=1e-12)


def test_resample_sine_keeps_tone():
    t = np.arange(10_000) / 1000
    out = resample(np.sin(2 * np.pi * 10 * t), 1000, 500)
    assert out.size == 5000
    spec = np.abs(np.fft.rfft(out)) * 2 / out.size
    freqs = np.fft.rfftfreq(out.size, 1 / 500)
    k = int(np.argmax(spec))
    assert freqs[k] == pytest.approx(10.0)
    assert spec[k] == pytest.approx(1.0, rel=0.01)


@pytest.mark.parametrize("n, src, dst, expected", [(1000, 100, 500, 5000), (10, 1000, 500, 5), (7, 3, 2, 5)])
def test_resample_length(n, src, dst, expected):
    assert resample(np.arange(n, dtype=float), src, dst).size == expected


def test_resample_identity_is_exact_copy():
    x = np.random.default_rng(0).standard_normal(77)
    y = resample(x, 500, 500)
    assert y is not x
    np.testing.assert_array_equal(x, y)


@given(
    a=finite,
    b=finite,
    xy=hnp.arrays(np.float64, st.tuples(st.just(2), st.integers(2, 200)), elements=finite),
)
def test_resample_linear(a, b, xy):
    x, y = xy
    lhs = resample(a * x + b * y, 1000, 500)
    rhs = a * resample(x, 1000, 500) + b * resample(y, 1000, 500)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + abs(a) + abs(b)) * 1e3)


@pytest.mark.parametrize("args, err", [(([1.0], 1, 2), EmptySignal), (([1.0, 2.0], 0, 2), InvalidRate), (([1.0, 2.0], 1, -2), InvalidRate)])
def test_resample_errors(args, err):
    with pytest.raises(err):
        resample(np.asarray(args[0]), *args[1:])


# denoising

def test_denoise_theta_zero_round_trip():
    x = np.random.default_rng(1).standard_normal(501)
    np.testing.assert_allclose(fft_denoise(x, 0.0), x, atol=1e-9)


def test_denoise_sine_with_noise():
    rng = np.random.default_rng(2)
    t = np.arange(2000) / 500
    clean = np.sin(2 * np.pi * 5 * t)
    out = fft_denoise(clean + rng.uniform(-0.01, 0.01, t.size), 0.05)
    assert np.corrcoef(out, clean)[0, 1] > 0.99


def test_denoise_white_noise_high_theta():
    x = np.random.default_rng(3).standard_normal(4096)
    out = fft_denoise(x, 0.99)
    assert np.sum(out**2) < 0.05 * np.sum(x**2)


def test_denoise_keeps_dc():
    x = 10.0 + 0.001 * np.sin(np.linspace(0, 20 * np.pi, 400, endpoint=False))
    out = fft_denoise(x, 0.5)
    assert out.mean() == pytest.approx(10.0)


@given(x=hnp.arrays(np.float64, st.integers(2, 300), elements=finite), theta=st.floats(0, 0.95))
def test_denoise_idempotent(x, theta):
    once = fft_denoise(x, theta)
    np.testing.assert_allclose(fft_denoise(once, theta), once, atol=1e-6)


# peak detection

def test_impulse_train_peaks():
    x = np.zeros(5000)
    x[::500] = 1.0
    peaks = detect_r_peaks(x, 500)
    assert peaks.size == 10
    np.testing.assert_array_less(np.abs(peaks - 500 * np.arange(10)), 6)


def test_constant_signal_has_no_peaks():
    with pytest.raises(NoPeaksFound):
        detect_r_peaks(np.ones(2000), 500)


def test_refractory_suppression():
    x = np.zeros(1000)
    x[500] = x[550] = 1.0
    assert detect_r_peaks(x, 500, refractory=0.25).size == 1


@given(
    x=hnp.arrays(np.float64, st.integers(100, 1500), elements=finite),
    refractory=st.floats(0.05, 0.5),
)
def test_peaks_sorted_separated(x, refractory):
    try:
        peaks = detect_r_peaks(x, 500, refractory)
    except NoPeaksFound:
        return
    assert np.all(np.diff(peaks) >= np.ceil(refractory * 500))
    assert np.all((peaks >= 0) & (peaks < x.size))


# windows

@pytest.mark.parametrize(
    "n, peak, left_pad, right_pad",
    [(1000, 250, 0, 0), (1000, 10, 240, 0), (5000, 4999, 0, 249)],
)
def test_window_padding(n, peak, left_pad, right_pad):
    x = np.arange(1, n + 1, dtype=float)
    w = extract_window(x, peak, 500)
    assert len(w) == 500 and w.peak_index == peak
    assert np.all(w.values[:left_pad] == 0) and np.all(w.values[500 - right_pad :] == 0)
    body = w.values[left_pad : 500 - right_pad]
    assert np.all(body > 0)
    assert body[0] == x[peak - 250 + left_pad]


def test_window_exact_left_fit():
    x = np.arange(1000, dtype=float)
    np.testing.assert_array_equal(extract_window(x, 250, 500).values, x[:500])


@given(n=st.integers(2, 600), wl=st.integers(2, 700), data=st.data())
def test_window_length_always_exact(n, wl, data):
    peak = data.draw(st.integers(0, n - 1))
    assert len(extract_window(np.ones(n), peak, wl)) == wl


@pytest.mark.parametrize("peak", [-1, 100])
def test_window_out_of_range(peak):
    with pytest.raises(PeakOutOfRange):
        extract_window(np.ones(100), peak, 50)


# composition

def test_preprocess_record_1000hz():
    rec = synth_ecg("r", seconds=10, rate=1000, seed=4)
    w = preprocess_record(rec, PreprocConfig())
    assert isinstance(w, BeatWindow) and len(w) == 500 and w.rate == 500
    # the median beat's R wave sits at the centre of the window
    assert abs(int(np.argmax(w.values)) - 250) <= 10
    again = preprocess_record(rec, PreprocConfig())
    assert w.values.tobytes() == again.values.tobytes()


def test_preprocess_flat_lead():
    sig = np.vstack([np.random.default_rng(0).standard_normal(5000), np.zeros(5000)])
    with pytest.raises(NoPeaksFound):
        preprocess_record(Record("flat", sig, 500.0, 1), PreprocConfig(), lead=1)


@pytest.mark.parametrize(
    "kw", [dict(target_rate=0), dict(denoise_theta=1.0), dict(window_len=1), dict(peak_refractory=0)]
)
def test_preproc_config_invalid(kw):
    with pytest.raises(ValueError):
        PreprocConfig(**kw)


def test_windows_csv_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    wins = [BeatWindow(rng.standard_normal(50), f"r{i}", 100 + i, 500.0) for i in range(3)]
    write_windows_csv(wins, ["a", "a", "b"], [1, 0, 1], tmp_path / "w.csv")
    back, sources, labels = read_windows_csv(tmp_path / "w.csv")
    assert sources == ["a", "a", "b"] and labels == [1, 0, 1]
    for w, b in zip(wins, back):
        assert (b.source_id, b.peak_index, b.rate) == (w.source_id, w.peak_index, w.rate)
        np.testing.assert_array_equal(b.values, w.values)
