import numpy as np
import pytest

from axondelay.analysis import (
    spectral_radius,
    spike_rate_spectrum,
    write_spectrum_csv,
)


class TestSpikeRateSpectrum:
    def test_constant_rate_is_flat_zero(self):
        spikes = np.ones((64, 3))
        spec = spike_rate_spectrum(spikes)
        np.testing.assert_allclose(spec.magnitudes, 0.0, atol=1e-9)

    def test_silent_train_is_zero(self):
        spec = spike_rate_spectrum(np.zeros((32, 4)))
        assert np.all(spec.magnitudes == 0.0)

    def test_square_wave_peaks_at_fundamental_and_odd_harmonics(self):
        # 100 ms period at dt=1ms over 1000 steps: 10 Hz fundamental
        T = 1000
        t = np.arange(T)
        wave = ((t % 100) < 50).astype(float)
        spikes = wave[:, None]
        spec = spike_rate_spectrum(spikes, dt=1.0)
        mags = spec.magnitudes
        freqs = spec.frequencies

        def mag_at(f):
            return mags[np.argmin(np.abs(freqs - f))]

        fundamental = mag_at(10.0)
        assert fundamental == pytest.approx(mags.max(), rel=1e-12)
        assert mag_at(30.0) > 10 * mag_at(20.0)  # odd harmonic beats even
        assert mag_at(50.0) > 10 * mag_at(40.0)

    def test_magnitudes_even_in_frequency(self):
        rng = np.random.default_rng(0)
        spikes = (rng.random((257, 6)) < 0.2).astype(float)
        spec = spike_rate_spectrum(spikes)
        for f, m in zip(spec.frequencies, spec.magnitudes):
            j = np.argmin(np.abs(spec.frequencies + f))
            assert m == pytest.approx(spec.magnitudes[j], rel=1e-9, abs=1e-9)

    def test_parseval(self):
        rng = np.random.default_rng(1)
        spikes = (rng.random((300, 5)) < 0.3).astype(float)
        spec = spike_rate_spectrum(spikes)
        signal = spikes.sum(axis=1)
        signal = signal - signal.mean()
        lhs = np.sum(spec.magnitudes**2) / signal.shape[0]
        rhs = np.sum(signal**2)
        assert lhs == pytest.approx(rhs, rel=1e-9)

    def test_frequency_axis_in_hz(self):
        spec = spike_rate_spectrum(np.zeros((100, 1)), dt=2.0)
        # dt=2ms -> sampling 500 Hz -> frequencies within +-250 Hz
        assert spec.frequencies.min() == pytest.approx(-250.0)
        assert spec.frequencies.max() == pytest.approx(245.0)

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            spike_rate_spectrum(np.zeros((1, 4)))

    def test_hann_window_option(self):
        rng = np.random.default_rng(2)
        spikes = (rng.random((128, 3)) < 0.4).astype(float)
        a = spike_rate_spectrum(spikes, window="rect")
        b = spike_rate_spectrum(spikes, window="hann")
        assert not np.allclose(a.magnitudes, b.magnitudes)
        with pytest.raises(ValueError):
            spike_rate_spectrum(spikes, window="gauss")

    def test_csv_export(self, tmp_path):
        spec = spike_rate_spectrum(np.zeros((8, 2)))
        path = tmp_path / "spec.csv"
        write_spectrum_csv(path, spec)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "frequency_hz,magnitude"
        assert len(lines) == 9


class TestSpectralRadius:
    def test_identity(self):
        assert spectral_radius(np.eye(5)) == pytest.approx(1.0, rel=1e-8)

    def test_diagonal(self):
        assert spectral_radius(np.diag([3.0, -2.0, 0.5])) == pytest.approx(3.0, rel=1e-8)

    def test_scaled_rotation_has_complex_pair_modulus(self):
        theta = 0.7
        r = 1.3
        rot = r * np.array(
            [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
        )
        # characteristic polynomial: z^2 - 2 r cos(theta) z + r^2, |z| = r
        assert spectral_radius(rot) == pytest.approx(r, rel=1e-7)

    def test_nilpotent_is_zero(self):
        w = np.array([[0.0, 1.0], [0.0, 0.0]])
        assert spectral_radius(w) == 0.0

    def test_zero_matrix(self):
        assert spectral_radius(np.zeros((4, 4))) == 0.0

    def test_matches_eigvals_on_random_matrices(self):
        rng = np.random.default_rng(3)
        for n in (3, 8, 25, 60):
            w = rng.normal(0, 1.0 / np.sqrt(n), (n, n))
            expected = float(np.max(np.abs(np.linalg.eigvals(w))))
            assert spectral_radius(w) == pytest.approx(expected, rel=1e-6)

    def test_scaling_homogeneity(self):
        rng = np.random.default_rng(4)
        w = rng.normal(size=(10, 10))
        rho = spectral_radius(w)
        assert spectral_radius(-2.5 * w) == pytest.approx(2.5 * rho, rel=1e-7)

    def test_permutation_similarity_invariant(self):
        rng = np.random.default_rng(5)
        w = rng.normal(size=(12, 12))
        perm = rng.permutation(12)
        p = np.eye(12)[perm]
        assert spectral_radius(p @ w @ p.T) == pytest.approx(
            spectral_radius(w), rel=1e-9
        )

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            spectral_radius(np.zeros((3, 4)))

    def test_non_finite_rejected(self):
        w = np.eye(3)
        w[0, 0] = np.nan
        with pytest.raises(ValueError):
            spectral_radius(w)
