import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ofdm_rsma.channel import (
    ChannelRealization,
    ConfigurationError,
    build_cp_matrices,
    build_dft_matrix,
    delay_matrix,
    doppler_matrix,
    freq_channel,
    freq_equiv_channel,
    raised_cosine,
    sample_channel,
    time_domain_channel,
)
from conftest import small_config


class TestDftMatrix:
    def test_one_point(self):
        assert np.allclose(build_dft_matrix(1), [[1.0]])

    def test_two_point(self):
        expected = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
        assert np.allclose(build_dft_matrix(2), expected)

    def test_unitary_eight(self):
        f = build_dft_matrix(8)
        assert np.linalg.norm(f @ f.conj().T - np.eye(8)) < 1e-12

    @given(st.integers(min_value=1, max_value=32))
    def test_unitary_any(self, n):
        f = build_dft_matrix(n)
        assert np.linalg.norm(f @ f.conj().T - np.eye(n)) < 1e-10

    def test_matches_fft(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        assert np.allclose(build_dft_matrix(8) @ x, np.fft.fft(x) / np.sqrt(8))


class TestCpMatrices:
    def test_no_cp(self):
        add, rem = build_cp_matrices(4, 0)
        assert np.array_equal(add, np.eye(4))
        assert np.array_equal(rem, np.eye(4))

    def test_cp_copies_tail(self):
        add, _ = build_cp_matrices(3, 1)
        x = np.array([1.0, 2.0, 3.0])
        assert np.array_equal(add @ x, [3.0, 1.0, 2.0, 3.0])

    @given(st.integers(1, 16), st.integers(0, 8))
    def test_round_trip(self, nc, cp_len):
        add, rem = build_cp_matrices(nc, min(cp_len, nc))
        assert np.array_equal(rem @ add, np.eye(nc))


class TestDopplerMatrix:
    def test_zero_doppler(self):
        assert np.allclose(doppler_matrix(0.0, 5, 120e3), np.eye(5))

    def test_full_cycle(self):
        assert np.allclose(doppler_matrix(240e3, 2, 240e3), np.eye(2))

    def test_phase_value(self):
        d = doppler_matrix(100.0, 4, 240e3)
        assert np.isclose(d[3, 3], np.exp(2j * np.pi * 300.0 / 240e3))


class TestRaisedCosine:
    def test_peak(self):
        assert raised_cosine(0.0, 0.4, 1.0) == pytest.approx(1.0)

    def test_nyquist_zeros(self):
        for k in (1, -1, 2, 5):
            assert abs(raised_cosine(k * 1.0, 0.4, 1.0)) < 1e-12

    def test_singular_point_limit(self):
        beta = 0.4
        expected = np.pi / 4.0 * np.sinc(1.0 / (2.0 * beta))
        at = 1.0 / (2.0 * beta)
        assert raised_cosine(at, beta, 1.0) == pytest.approx(expected, abs=1e-12)
        assert raised_cosine(-at, beta, 1.0) == pytest.approx(expected, abs=1e-12)

    def test_limit_is_continuous(self):
        beta = 0.4
        at = 1.0 / (2.0 * beta)
        near = raised_cosine(at + 1e-9, beta, 1.0)
        assert raised_cosine(at, beta, 1.0) == pytest.approx(near, abs=1e-6)

    def test_zero_rolloff_is_sinc(self):
        t = np.linspace(-3, 3, 41)
        assert np.allclose(raised_cosine(t, 0.0, 1.0), np.sinc(t))

    @given(st.floats(-10, 10), st.floats(0, 1))
    def test_bounded_and_finite(self, t, beta):
        val = raised_cosine(t, beta, 1.0)
        assert np.isfinite(val)
        assert abs(val) <= 1.0 + 1e-9


class TestDelayMatrix:
    def pulse(self, beta=0.4, fs=120e3):
        return lambda t: raised_cosine(t, beta, 1.0 / fs)

    def test_zero_delay_identity(self):
        fs = 120e3
        g = delay_matrix(0.0, 6, fs, self.pulse(fs=fs))
        assert np.linalg.norm(g - np.eye(6)) < 1e-10

    def test_one_sample_delay_shift(self):
        fs = 120e3
        g = delay_matrix(1.0 / fs, 6, fs, self.pulse(fs=fs))
        assert np.linalg.norm(g - np.eye(6, k=-1)) < 1e-10

    def test_half_sample_entries(self):
        fs = 120e3
        beta = 0.4
        g = delay_matrix(0.5 / fs, 5, fs, self.pulse(beta, fs))
        p, q = 3, 1
        expected = raised_cosine((p - q - 0.5) / fs, beta, 1.0 / fs)
        assert g[p, q] == pytest.approx(expected)

    def test_finite_at_pulse_singularity(self):
        # lag of 1.25 samples hits the raised-cosine singular point for beta=0.4
        fs = 120e3
        g = delay_matrix(0.75 / fs, 6, fs, self.pulse(0.4, fs))
        assert np.all(np.isfinite(g))


class TestSampleChannel:
    def test_deterministic_given_seed(self):
        cfg = small_config()
        a = sample_channel(cfg, np.random.default_rng(9))
        b = sample_channel(cfg, np.random.default_rng(9))
        assert np.array_equal(a.gain, b.gain)
        assert np.array_equal(a.delay, b.delay)
        assert np.array_equal(a.doppler, b.doppler)
        assert np.array_equal(a.angle, b.angle)

    def test_gain_normalization(self):
        cfg = small_config(K=1, n_paths=50)
        rng = np.random.default_rng(3)
        total = 0.0
        n_trials = 1000
        for _ in range(n_trials):
            real = sample_channel(cfg, rng)
            total += np.sum(np.abs(real.gain) ** 2)
        assert total / n_trials == pytest.approx(1.0, rel=0.05)

    def test_doppler_bounded_by_speed(self):
        cfg = small_config(v_max=100.0, fc=4e9)  # 360 km/h
        assert cfg.nu_max == pytest.approx(1333.3, abs=0.1)
        real = sample_channel(cfg, np.random.default_rng(0))
        assert np.all(np.abs(real.doppler) <= cfg.nu_max)

    def test_support_of_delays_and_angles(self):
        cfg = small_config()
        real = sample_channel(cfg, np.random.default_rng(5))
        assert np.all(real.delay >= 0.0)
        assert np.all(real.delay <= 4.0 / cfg.Fs)
        assert np.all(np.abs(real.angle) <= np.pi / 2)

    def test_path_accessor(self):
        cfg = small_config()
        real = sample_channel(cfg, np.random.default_rng(5))
        p = real.path(1, 3)
        assert p.gain == complex(real.gain[1, 3])
        assert p.delay == real.delay[1, 3]


def _single_path(cfg, gain, delay, doppler, angle):
    shape = (cfg.K, 1)
    return ChannelRealization(
        gain=np.full(shape, gain, dtype=complex),
        delay=np.full(shape, delay),
        doppler=np.full(shape, doppler),
        angle=np.full(shape, angle),
    )


class TestTimeDomainChannel:
    def test_flat_static_channel_is_identity(self):
        cfg = small_config(n_paths=1)
        real = _single_path(cfg, 1.0, 0.0, 0.0, 0.0)
        for m in range(cfg.Nt):
            ht = time_domain_channel(real, cfg, 0, m)
            assert np.linalg.norm(ht - np.eye(cfg.Nc + cfg.cp_len)) < 1e-9

    def test_steering_phase_flips_sign(self):
        cfg = small_config(n_paths=1)
        real = _single_path(cfg, 1.0, 0.0, 0.0, np.pi / 2)
        base = time_domain_channel(real, cfg, 0, 0)
        second = time_domain_channel(real, cfg, 0, 1)
        assert np.allclose(second, np.exp(1j * np.pi) * base)
        assert np.allclose(second, -base)

    def test_linearity_over_paths(self):
        cfg = small_config(n_paths=2)
        rng = np.random.default_rng(11)
        real = sample_channel(cfg, rng)
        combined = time_domain_channel(real, cfg, 0, 1)
        parts = []
        for i in range(2):
            solo = ChannelRealization(
                gain=real.gain[:, i : i + 1],
                delay=real.delay[:, i : i + 1],
                doppler=real.doppler[:, i : i + 1],
                angle=real.angle[:, i : i + 1],
            )
            cfg1 = small_config(n_paths=1)
            parts.append(time_domain_channel(solo, cfg1, 0, 1))
        assert np.allclose(combined, parts[0] + parts[1])

    def test_index_validation(self):
        cfg = small_config(n_paths=1)
        real = _single_path(cfg, 1.0, 0.0, 0.0, 0.0)
        with pytest.raises(ConfigurationError):
            time_domain_channel(real, cfg, cfg.K, 0)


class TestFreqEquivChannel:
    def test_identity_channel(self):
        h = freq_equiv_channel(np.eye(12), 8, 4)
        assert np.linalg.norm(h - np.eye(8)) < 1e-12

    def test_integer_delay_within_cp_is_diagonal(self):
        cfg = small_config(K=1, Nt=1, n_paths=1)
        fs = cfg.Fs
        real = _single_path(cfg, 1.0, 2.0 / fs, 0.0, 0.0)
        ht = time_domain_channel(real, cfg, 0, 0)
        h = freq_equiv_channel(ht, cfg.Nc, cfg.cp_len)
        off_diag = h - np.diag(np.diag(h))
        assert np.linalg.norm(off_diag) < 1e-9

    def test_matches_time_domain_pipeline(self):
        # independent oracle: numpy fft + slicing, no package matrices
        rng = np.random.default_rng(17)
        nc, cp_len = 8, 4
        size = nc + cp_len
        ht = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
        s = rng.standard_normal(nc) + 1j * rng.standard_normal(nc)
        h = freq_equiv_channel(ht, nc, cp_len)
        tx = np.fft.ifft(s) * np.sqrt(nc)
        tx_cp = np.concatenate([tx[-cp_len:], tx])
        rx = (ht @ tx_cp)[cp_len:]
        expected = np.fft.fft(rx) / np.sqrt(nc)
        assert np.linalg.norm(h @ s - expected) / np.linalg.norm(expected) < 1e-10


class TestNoiseWhiteness:
    def test_cp_removal_preserves_whiteness_exactly(self):
        from ofdm_rsma.channel import build_cp_matrices, build_dft_matrix

        nc, cp_len = 8, 4
        f = build_dft_matrix(nc)
        _, rem = build_cp_matrices(nc, cp_len)
        fb = f @ rem
        assert np.linalg.norm(fb @ fb.conj().T - np.eye(nc)) < 1e-12

    def test_empirical_covariance(self):
        from ofdm_rsma.channel import build_cp_matrices, build_dft_matrix

        nc, cp_len, sigma2 = 4, 2, 0.5
        f = build_dft_matrix(nc)
        _, rem = build_cp_matrices(nc, cp_len)
        fb = f @ rem
        rng = np.random.default_rng(2)
        n_draws = 20000
        scale = np.sqrt(sigma2 / 2.0)
        noise = rng.normal(scale=scale, size=(n_draws, nc + cp_len)) + 1j * rng.normal(
            scale=scale, size=(n_draws, nc + cp_len)
        )
        z = noise @ fb.T
        cov = z.conj().T @ z / n_draws
        assert np.linalg.norm(cov - sigma2 * np.eye(nc)) < 0.02


class TestFreqChannel:
    def test_shape_and_accessor(self, cfg, channel):
        assert channel.H.shape == (cfg.K, cfg.Nt, cfg.Nc, cfg.Nc)
        vec = channel.coupling(1, 2, 3)
        assert np.array_equal(vec, np.conj(channel.H[1, :, 2, 3]))

    def test_finite_for_sampled_realizations(self, channel):
        assert np.all(np.isfinite(channel.H))

    def test_zero_doppler_integer_delays_no_ici(self):
        cfg = small_config(K=1, Nt=2, n_paths=3)
        rng = np.random.default_rng(9)
        fs = cfg.Fs
        real = ChannelRealization(
            gain=(rng.standard_normal((1, 3)) + 1j * rng.standard_normal((1, 3))),
            delay=np.array([[0.0, 1.0 / fs, 3.0 / fs]]),
            doppler=np.zeros((1, 3)),
            angle=rng.uniform(-1.5, 1.5, (1, 3)),
        )
        h = freq_channel(real, cfg)
        for m in range(cfg.Nt):
            mat = h.H[0, m]
            off = mat - np.diag(np.diag(mat))
            assert np.linalg.norm(off) < 1e-9

    def test_doppler_creates_ici(self, channel):
        off = channel.H[0, 0] - np.diag(np.diag(channel.H[0, 0]))
        assert np.linalg.norm(off) > 1e-6
