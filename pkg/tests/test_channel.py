import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vdjscc import channel as ch
from vdjscc.autodiff import Tensor
from vdjscc.errors import ConfigError


def test_sigma2_at_13_db():
    assert abs(ch.noise_power(13) - 10 ** (-1.3)) < 1e-15
    assert abs(ch.noise_power(13) - 0.05012) < 1e-5


def test_noiseless():
    assert ch.noise_power(math.inf) == 0.0
    frame = ch.ChannelFrame(np.array([1 + 1j, -1j]))
    assert np.array_equal(ch.awgn(frame, math.inf, 0).symbols, frame.symbols)


def test_complex_pairing_even_real_odd_imag():
    z = ch.reals_to_complex(np.array([[1.0, 2.0, 3.0, 4.0]]))
    assert z.tolist() == [1 + 2j, 3 + 4j]
    np.testing.assert_array_equal(ch.complex_to_reals(z, 4), [[1, 2, 3, 4]])


def test_odd_c_rejected():
    with pytest.raises(ConfigError):
        ch.reals_to_complex(np.zeros((2, 3)))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.floats(1e-3, 1e3), st.integers(0, 2**31))
def test_normalized_power_is_one(n, scale, seed):
    x = np.random.default_rng(seed).normal(size=(2, n, 4)) * scale
    normed, s = ch.normalize_power(Tensor(x))
    for b in range(2):
        assert abs(np.mean(np.abs(ch.reals_to_complex(normed.data[b])) ** 2) - 1.0) < 1e-9
    np.testing.assert_allclose(normed.data * s[:, None, None], x, rtol=1e-12)


def test_frame_power_from_head():
    rng = np.random.default_rng(0)
    frame = ch.to_channel_symbols(Tensor(rng.normal(size=(7, 6))), (Tensor(rng.normal(size=(6, 4))), Tensor(np.zeros(4))))
    assert frame.symbols.size == 14
    assert abs(frame.power - 1.0) < 1e-9


def test_noise_power_over_a_million_samples():
    n = ch.sample_noise(np.random.default_rng(1), 1_000_000, ch.noise_power(13))
    assert abs(np.mean(np.sum(n**2, axis=1)) / ch.noise_power(13) - 1) < 0.01


@pytest.mark.parametrize("snr", [1, 7, 13])
def test_empirical_snr(snr):
    rng = np.random.default_rng(snr)
    sig = (rng.standard_normal(1_000_000) + 1j * rng.standard_normal(1_000_000)) / np.sqrt(2)
    frame = ch.ChannelFrame(sig)
    noisy = ch.awgn(frame, snr, 123)
    err = noisy.symbols - sig
    measured = 10 * np.log10(np.mean(np.abs(sig) ** 2) / np.mean(np.abs(err) ** 2))
    assert abs(measured - snr) < 0.1


def test_awgn_seeded_reproducible():
    frame = ch.ChannelFrame(np.ones(10, dtype=complex))
    assert np.array_equal(ch.awgn(frame, 4, 9).symbols, ch.awgn(frame, 4, 9).symbols)


@pytest.mark.parametrize("gamma, expected", [(1.0, 0.03125), (0.8, 0.025)])
def test_cbr_full_scale_dims(gamma, expected):
    N = 16 * 3 * 224 * 224
    r = ch.rate_report(gamma, 1568, 96, N)
    assert abs(r.cbr - expected) <= 48 / N
    if gamma == 1.0:
        assert r.n_complex_symbols == 75_264 and r.cbr == 0.03125


def test_cbr_toy_dims():
    r = ch.rate_report(0.5, 32, 4, 4 * 16 * 16)
    assert r.n_complex_symbols == 32
    assert r.mask_side_info_bits == 32


def test_rate_rejects_nonpositive():
    with pytest.raises(ConfigError):
        ch.rate_report(0.5, 0, 4, 10)
