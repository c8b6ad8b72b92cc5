import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from unfoldsep.errors import ConfigError, InputError
from unfoldsep.masks import (
    ActivationKind,
    MaskKind,
    activate,
    apply_mask,
    ideal_amplitude_mask,
    ideal_binary_mask,
    magnitude_ratio_mask,
    oracle_masks,
    phase_sensitive_mask,
    softmax3,
)


def _complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestIdealBinaryMask:
    def test_dominant(self):
        m = ideal_binary_mask([np.array([[3.0]]), np.array([[1.0]])])
        assert m.kind is MaskKind.IBM
        np.testing.assert_array_equal(m.masks[:, 0, 0], [1, 0])

    def test_tie_goes_to_first(self):
        m = ideal_binary_mask([np.array([[2.0j]]), np.array([[-2.0]])])
        np.testing.assert_array_equal(m.masks[:, 0, 0], [1, 0])

    def test_partition(self, rng):
        m = ideal_binary_mask([_complex(rng, (7, 9)) for _ in range(3)])
        np.testing.assert_array_equal(m.masks.sum(axis=0), 1.0)
        assert set(np.unique(m.masks)) <= {0.0, 1.0}

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            ideal_binary_mask([np.ones((2, 3)), np.ones((3, 2))])


class TestRatioMask:
    def test_values(self):
        m = magnitude_ratio_mask([np.array([[3.0]]), np.array([[-1.0]])])
        np.testing.assert_allclose(m.masks[:, 0, 0], [0.75, 0.25])

    def test_silent_unit(self):
        m = magnitude_ratio_mask([np.zeros((1, 1)), np.zeros((1, 1))])
        np.testing.assert_allclose(m.masks[:, 0, 0], [0.5, 0.5])

    def test_sums_to_one(self, rng):
        srcs = [_complex(rng, (5, 6)) for _ in range(2)]
        srcs[0][0, 0] = srcs[1][0, 0] = 0
        m = magnitude_ratio_mask(srcs)
        np.testing.assert_allclose(m.masks.sum(axis=0), 1.0, atol=1e-15)
        assert np.all((m.masks >= 0) & (m.masks <= 1))


class TestAmplitudeMask:
    def test_values(self):
        assert ideal_amplitude_mask(np.array([[2.0]]), np.array([[1.0j]]))[0, 0] == 2.0
        assert ideal_amplitude_mask(np.array([[0.0]]), np.array([[1.0]]))[0, 0] == 0.0

    def test_cancellation_is_floored(self):
        s1, s2 = np.array([[1.0 + 1.0j]]), np.array([[-1.0 - 1.0j]])
        x = s1 + s2
        assert np.abs(x)[0, 0] == 0.0
        # |S| / 1e-12 rather than inf
        assert ideal_amplitude_mask(s1, x)[0, 0] == pytest.approx(np.sqrt(2) / 1e-12)
        assert np.isfinite(ideal_amplitude_mask(s1, x)).all()

    def test_reconstructs_magnitude(self, rng):
        s = _complex(rng, (6, 5))
        x = s + _complex(rng, (6, 5))
        m = ideal_amplitude_mask(s, x)
        np.testing.assert_allclose(apply_mask(m, np.abs(x)), np.abs(s), rtol=1e-12)


class TestPhaseSensitiveMask:
    def test_single_source(self, rng):
        s = _complex(rng, (4, 4))
        np.testing.assert_allclose(phase_sensitive_mask(s, s, 2.0), 1.0, atol=1e-12)

    def test_quadrature(self):
        assert phase_sensitive_mask(np.array([[1j]]), np.array([[1.0]]), 2.0)[0, 0] == pytest.approx(0.0)

    def test_truncated(self):
        assert phase_sensitive_mask(np.array([[3.0]]), np.array([[1.0]]), 2.0)[0, 0] == 2.0

    def test_bad_gamma(self):
        with pytest.raises(ConfigError):
            phase_sensitive_mask(np.ones((1, 1)), np.ones((1, 1)), 0.0)

    @settings(max_examples=50, deadline=None)
    @given(
        arrays(np.float64, (4, 4, 4), elements=st.floats(-10, 10)),
        st.sampled_from([0.5, 1.0, 2.0]),
    )
    def test_range(self, parts, gamma):
        s = parts[0] + 1j * parts[1]
        x = parts[2] + 1j * parts[3]
        m = phase_sensitive_mask(s, x, gamma)
        assert np.all(m >= 0) and np.all(m <= gamma)


class TestApplyMask:
    def test_examples(self):
        assert apply_mask(np.ones((1, 1)), np.array([[0.3]]))[0, 0] == 0.3
        assert apply_mask(np.zeros((1, 1)), np.array([[0.3]]))[0, 0] == 0.0
        assert apply_mask(np.full((1, 1), 2.0), np.array([[0.5]]))[0, 0] == 1.0

    def test_negative(self):
        with pytest.raises(InputError):
            apply_mask(-np.ones((1, 1)), np.ones((1, 1)))


def test_oracle_dispatch(rng):
    srcs = [_complex(rng, (3, 4)) for _ in range(2)]
    x = srcs[0] + srcs[1]
    for kind in ("ibm", "mrm", "iam", "psm"):
        assert oracle_masks(kind, srcs, x).masks.shape == (2, 3, 4)
    with pytest.raises(ConfigError):
        oracle_masks("estimated", srcs, x)


class TestActivations:
    def test_examples(self):
        assert activate(0.0, "dsig") == 1.0
        assert activate(3.5, "crelu") == 2.0
        assert activate(np.zeros(3), "csoftmax") == pytest.approx(1.0, abs=1e-15)
        assert activate(0.0, "sigmoid") == 0.5

    def test_arity(self):
        assert ActivationKind.CONVEX_SOFTMAX.arity == 3
        assert ActivationKind.SIGMOID.arity == 1
        with pytest.raises(InputError):
            activate(np.zeros(2), "csoftmax")

    def test_extreme_logits_finite(self):
        z = np.array([-1e300, -800.0, 800.0, 1e300])
        for kind in ("sigmoid", "dsig", "crelu"):
            assert np.all(np.isfinite(activate(z, kind)))
        assert np.all(np.isfinite(activate(np.stack([z, -z, z], axis=-1), "csoftmax")))

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (8, 3), elements=st.floats(-50, 50)))
    def test_softmax_sums_to_one(self, z):
        np.testing.assert_allclose(softmax3(z).sum(axis=-1), 1.0, atol=1e-12)
        y = activate(z, "csoftmax")
        assert np.all((y >= 0) & (y <= 2))
