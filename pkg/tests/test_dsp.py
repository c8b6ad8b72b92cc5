import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from unfoldsep.dsp import (
    ComplexSpectrogram,
    StftConfig,
    Waveform,
    from_planes,
    from_polar,
    istft,
    istft_adjoint,
    istft_array,
    istft_matrix,
    magnitude,
    make_windows,
    phase,
    stft,
    stft_adjoint,
    stft_array,
    stft_matrix,
    to_planes,
)
from unfoldsep.errors import ConfigError, InputError
from unfoldsep.wavio import quantize, read_wav, write_wav


class TestConfig:
    def test_defaults(self):
        cfg = StftConfig()
        assert (cfg.win_len, cfg.hop, cfg.dft_size, cfg.sample_rate) == (256, 64, 256, 8000)
        assert cfg.n_freq == 129

    @pytest.mark.parametrize(
        "kwargs",
        [dict(win_len=256, hop=60), dict(win_len=256, dft_size=128), dict(hop=0), dict(dft_size=257, win_len=256)],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            StftConfig(**kwargs)


class TestWindows:
    def test_sqrt_hann_peak(self):
        assert make_windows(StftConfig()).analysis[128] == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("win,hop", [(256, 64), (256, 128), (16, 4), (12, 3)])
    def test_wola_sum_is_one(self, win, hop):
        w = make_windows(StftConfig(win, hop, win))
        prod = w.analysis * w.synthesis
        # sum over all frames that overlap a given interior sample
        total = prod.reshape(-1, hop).sum(axis=0)
        np.testing.assert_allclose(total, 1.0, atol=1e-12)

    def test_tiny_by_hand(self):
        # win 4, hop 2: sqrt-Hann = sqrt([0, .5, 1, .5]); energy per offset
        # n=0: 0 + 1 = 1, n=1: .5 + .5 = 1, so synthesis equals analysis
        w = make_windows(StftConfig(4, 2, 4))
        expected = np.sqrt([0.0, 0.5, 1.0, 0.5])
        np.testing.assert_allclose(w.analysis, expected, atol=1e-15)
        np.testing.assert_allclose(w.synthesis, expected, atol=1e-15)

    def test_tiny_hop4_by_hand(self):
        # win 8, hop 4: hann = [0, .146, .5, .854, 1, .854, .5, .146];
        # energy at offset n is hann[n] + hann[n+4] = 1 for every n
        w = make_windows(StftConfig(8, 4, 8))
        hann = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(8) / 8)
        denom = np.tile(hann[:4] + hann[4:], 2)
        np.testing.assert_allclose(w.synthesis, np.sqrt(hann) / denom, atol=1e-15)

    def test_hop_eighth(self):
        # win 16, hop 2: eight overlapping frames, energy sums to 4
        w = make_windows(StftConfig(16, 2, 16))
        np.testing.assert_allclose(w.synthesis, w.analysis / 4.0, atol=1e-15)


class TestStft:
    def test_frame_count(self, rng):
        cfg = StftConfig()
        x = rng.standard_normal(8000)
        spec = stft(Waveform(x), cfg)
        # ceil((8000 + 2*192 - 256) / 64) + 1 = ceil(127) + 1
        assert spec.shape == (128, 129)
        assert cfg.n_frames(8000) == 128
        assert cfg.n_frames(8001) == 129

    def test_on_bin_cosine(self):
        cfg = StftConfig()
        n = np.arange(4096)
        x = np.cos(2 * np.pi * 16 * n / 256)
        spec = np.abs(stft(x, cfg).data)
        interior = spec[8:-8]
        # sqrt-Hann leaks into neighbours; the peak must still sit on bin 16
        assert np.all(np.argmax(interior, axis=1) == 16)
        assert np.all(interior[:, 16] > 10 * interior[:, 20])

    def test_zero_signal(self):
        assert not np.any(stft(np.zeros(1000)).data)

    def test_empty_rejected(self):
        with pytest.raises(InputError):
            stft(np.zeros(0))

    def test_rate_mismatch(self):
        with pytest.raises(InputError):
            stft(Waveform(np.ones(100), 16000), StftConfig())

    @pytest.mark.parametrize("length", [1, 7, 63, 64, 65, 1000, 8000])
    def test_perfect_reconstruction(self, rng, length):
        x = rng.uniform(-1, 1, length)
        y = istft(stft(x)).samples
        assert y.size == length
        assert np.max(np.abs(y - x)) / max(np.max(np.abs(x)), 1e-12) < 1e-9

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, st.integers(1, 600), elements=st.floats(-1, 1)))
    def test_perfect_reconstruction_property(self, x):
        cfg = StftConfig(64, 16, 64)
        y = istft_array(stft_array(x, cfg), cfg, x.size)
        assert np.max(np.abs(y - x), initial=0) <= 1e-9 * max(np.max(np.abs(x)), 1e-12)

    def test_linearity(self, rng):
        x, y = rng.standard_normal((2, 3000))
        a, b = 0.7, -1.3
        lhs = stft(a * x + b * y).data
        rhs = a * stft(x).data + b * stft(y).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_istft_zero(self):
        cfg = StftConfig()
        spec = ComplexSpectrogram(np.zeros((cfg.n_frames(1100), 129)), cfg, 1100)
        assert not np.any(istft(spec).samples)

    def test_istft_needs_length(self):
        with pytest.raises(InputError):
            istft(ComplexSpectrogram(np.zeros((5, 129))))

    def test_frames_must_match_length(self):
        with pytest.raises(InputError):
            ComplexSpectrogram(np.zeros((5, 129)), StftConfig(), 8000)


class TestDenseAndAdjoint:
    @pytest.mark.parametrize("length", [5, 16, 37])
    def test_dense_matches_fft(self, rng, mini, length):
        x = rng.standard_normal(length)
        np.testing.assert_allclose(stft(x, mini, "dense").data, stft(x, mini).data, atol=1e-12)
        spec = stft(x, mini)
        np.testing.assert_allclose(istft(spec, "dense").samples, x, atol=1e-12)

    def test_stft_adjoint(self, rng, mini):
        length = 41
        x = rng.standard_normal(length)
        z = rng.standard_normal((mini.n_frames(length), mini.n_freq)) + 1j * rng.standard_normal(
            (mini.n_frames(length), mini.n_freq)
        )
        lhs = np.sum(to_planes(stft_array(x, mini)) * to_planes(z))
        rhs = np.dot(x, stft_adjoint(z, mini, length))
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))

    def test_istft_adjoint(self, rng, mini):
        length = 41
        shape = (mini.n_frames(length), mini.n_freq)
        z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        g = rng.standard_normal(length)
        lhs = np.dot(istft_array(z, mini, length), g)
        rhs = np.sum(to_planes(z) * to_planes(istft_adjoint(g, mini)))
        assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))

    def test_adjoints_equal_dense_transposes(self, rng, mini):
        length = 23
        shape = (mini.n_frames(length), mini.n_freq)
        a = stft_matrix(mini, length)
        g = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        dense = a.real.T @ g.real.ravel() + a.imag.T @ g.imag.ravel()
        np.testing.assert_allclose(stft_adjoint(g, mini, length), dense, atol=1e-12)
        b = istft_matrix(mini, length)
        h = rng.standard_normal(length)
        np.testing.assert_allclose(to_planes(istft_adjoint(h, mini)).ravel(), b.T @ h, atol=1e-12)


class TestPolar:
    def test_values(self):
        z = np.array([[3 + 4j]])
        assert magnitude(z)[0, 0] == 5.0
        assert phase(z)[0, 0] == pytest.approx(np.arctan2(4, 3))
        assert from_polar(np.ones((1, 1)), np.zeros((1, 1)))[0, 0] == 1 + 0j

    def test_roundtrip(self, rng):
        spec = stft(rng.standard_normal(2000))
        back = from_polar(magnitude(spec), phase(spec), like=spec)
        assert isinstance(back, ComplexSpectrogram)
        np.testing.assert_allclose(back.data, spec.data, atol=1e-12)

    def test_planes(self, rng):
        z = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
        np.testing.assert_array_equal(from_planes(to_planes(z)), z)

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            from_polar(np.ones((2, 3)), np.ones((3, 2)))


class TestWav:
    def test_roundtrip_on_grid(self, tmp_path, rng):
        x = quantize(rng.uniform(-0.9, 0.9, 1234))
        write_wav(tmp_path / "a.wav", Waveform(x, 8000))
        back = read_wav(tmp_path / "a.wav")
        assert back.sample_rate == 8000
        np.testing.assert_array_equal(back.samples, x)

    def test_clipping(self, tmp_path):
        write_wav(tmp_path / "c.wav", Waveform(np.array([-2.0, 2.0, 0.5])))
        back = read_wav(tmp_path / "c.wav").samples
        np.testing.assert_array_equal(back, [-1.0, 1 - 2**-15, 0.5])

    def test_rejects_stereo(self, tmp_path):
        import wave

        with wave.open(str(tmp_path / "s.wav"), "wb") as f:
            f.setnchannels(2)
            f.setsampwidth(2)
            f.setframerate(8000)
            f.writeframes(b"\x00" * 8)
        with pytest.raises(InputError):
            read_wav(tmp_path / "s.wav")
