"""Synthetic generator: determinism and spectral signatures via FFT oracles."""

import numpy as np
import pytest

from sleepstager import STAGE_TO_INDEX
from sleepstager.data import synth_generate

FS = 32.0


def band_power(x, fs, lo, hi):
    """Periodogram power in [lo, hi) Hz; independent of the generator."""
    spectrum = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(len(x), 1.0 / fs)
    mask = (freqs >= lo) & (freqs < hi)
    return spectrum[mask].sum()


def band_filtered(x, fs, lo, hi):
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(len(x), 1.0 / fs)
    spec[(freqs < lo) | (freqs >= hi)] = 0.0
    return np.fft.irfft(spec, n=len(x))


@pytest.fixture(scope="module")
def dataset():
    return synth_generate(4, 60, FS, seed=123)


class TestDeterminism:
    def test_bit_identical_rerun(self, dataset):
        again = synth_generate(4, 60, FS, seed=123)
        for a, b in zip(dataset, again):
            assert np.array_equal(a.epochs, b.epochs)
            assert np.array_equal(a.labels, b.labels)
            assert a.events == b.events

    def test_different_seed_differs(self, dataset):
        other = synth_generate(4, 60, FS, seed=124)
        assert not np.array_equal(dataset[0].epochs, other[0].epochs)


class TestStructure:
    def test_shapes_and_ids(self, dataset):
        assert len(dataset) == 4
        for i, es in enumerate(dataset):
            assert es.subject_id == f"synth-{i:03d}"
            assert es.epochs.shape == (60, int(30 * FS))
            assert es.sample_rate == FS

    def test_all_stages_present_per_subject(self, dataset):
        for es in dataset:
            assert set(np.unique(es.labels)) == {0, 1, 2, 3, 4}

    def test_events_only_on_n2(self, dataset):
        n2 = STAGE_TO_INDEX["N2"]
        for es in dataset:
            for label, events in zip(es.labels, es.events):
                kinds = {k for k, _, _ in events}
                if label == n2:
                    assert kinds == {"spindle", "kcomplex"}
                else:
                    assert events == []

    def test_event_intervals_inside_epoch(self, dataset):
        for es in dataset:
            for events in es.events:
                for _, t0, t1 in events:
                    assert 0.0 <= t0 < t1 <= 30.0


class TestSpectralSignatures:
    def test_n3_delta_dominates_alpha(self, dataset):
        n3 = STAGE_TO_INDEX["N3"]
        checked = 0
        for es in dataset:
            for x, label in zip(es.epochs, es.labels):
                if label != n3:
                    continue
                delta = band_power(x, FS, 0.5, 2.0)
                alpha = band_power(x, FS, 8.0, 12.0)
                assert delta >= 10.0 * alpha
                checked += 1
        assert checked >= 10

    def test_w_alpha_dominates_delta_band_of_n1(self, dataset):
        w = STAGE_TO_INDEX["W"]
        for es in dataset:
            for x, label in zip(es.epochs, es.labels):
                if label == w:
                    assert band_power(x, FS, 8.0, 12.0) > band_power(x, FS, 4.0, 7.0)

    def test_spindle_interval_holds_band_energy(self, dataset):
        n2 = STAGE_TO_INDEX["N2"]
        checked = 0
        for es in dataset:
            for x, label, events in zip(es.epochs, es.labels, es.events):
                if label != n2:
                    continue
                (kind, s0, s1) = next(e for e in events if e[0] == "spindle")
                y = band_filtered(x, FS, 12.0, 14.0)
                energy = y * y
                t = np.arange(len(x)) / FS
                inside = energy[(t >= s0) & (t < s1)].sum()
                assert inside >= 0.60 * energy.sum(), (es.subject_id, s0, s1)
                checked += 1
        assert checked >= 10

    def test_rem_envelope_modulation_exceeds_n1(self, dataset):
        # REM's slow amplitude modulation shows up as high variance of the
        # band-signal envelope relative to its mean; N1 stays comparatively flat
        n1, rem = STAGE_TO_INDEX["N1"], STAGE_TO_INDEX["REM"]

        def envelope_cv(x, lo, hi):
            y = np.abs(band_filtered(x, FS, lo, hi))
            smooth = np.convolve(y, np.ones(32) / 32, mode="same")
            return smooth.std() / smooth.mean()

        n1_cv, rem_cv = [], []
        for es in dataset:
            for x, label in zip(es.epochs, es.labels):
                if label == n1:
                    n1_cv.append(envelope_cv(x, 4.0, 7.0))
                elif label == rem:
                    rem_cv.append(envelope_cv(x, 2.0, 8.0))
        assert np.median(rem_cv) > np.median(n1_cv)
