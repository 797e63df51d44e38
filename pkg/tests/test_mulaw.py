"""Companding and 8-bit quantization behavior."""
import numpy as np
import pytest

from multivoice.dsp import (
    mu_law_compand,
    mu_law_decode,
    mu_law_encode,
    mu_law_expand,
)


class TestEncode:
    def test_center_code(self):
        assert mu_law_encode(np.array(0.0)) == 128

    def test_extremes(self):
        assert mu_law_encode(np.array(1.0)) == 255
        assert mu_law_encode(np.array(-1.0)) == 0

    def test_codes_in_range(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(-1, 1, 5000)
        codes = mu_law_encode(x)
        assert codes.min() >= 0 and codes.max() <= 255

    def test_monotone(self):
        x = np.linspace(-1, 1, 4001)
        codes = mu_law_encode(x)
        assert np.all(np.diff(codes.astype(int)) >= 0)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            mu_law_encode(np.array(1.0001))
        with pytest.raises(ValueError):
            mu_law_encode(np.array(-1.5))


class TestDecode:
    def test_center_decodes_near_zero(self):
        # one companded quantization step is 2/255
        assert abs(float(mu_law_decode(np.array(128)))) < 2.0 / 255.0

    def test_top_code(self):
        v = float(mu_law_decode(np.array(255)))
        assert 0.99 < v <= 1.0

    def test_code_lattice_fixed_point(self):
        codes = np.arange(256)
        again = mu_law_encode(mu_law_decode(codes))
        np.testing.assert_array_equal(again, codes)

    def test_rejects_bad_codes(self):
        with pytest.raises(ValueError):
            mu_law_decode(np.array(256))
        with pytest.raises(ValueError):
            mu_law_decode(np.array(-1))


class TestRoundtrip:
    """Quantization error bounds.

    The companded (log) domain is quantized uniformly with cell half-width
    1/255, so the companded-domain roundtrip error never exceeds 1/128.
    In the amplitude domain the expansion stretches the top cell to width
    ~0.0217, so the worst amplitude-domain error is ~2.8x larger than
    1/128; the sweep below freezes both true bounds.
    """

    def test_companded_domain_bound(self):
        x = np.linspace(-1, 1, 2001)
        back = mu_law_decode(mu_law_encode(x))
        err = np.abs(mu_law_compand(back) - mu_law_compand(x))
        assert float(err.max()) <= 1.0 / 128.0

    def test_amplitude_domain_worst_case(self):
        x = np.linspace(-1, 1, 2001)
        back = mu_law_decode(mu_law_encode(x))
        worst = float(np.abs(back - x).max())
        assert worst < 0.022
        # the bound is tight near |x| = 1: markedly worse than 1/128
        assert worst > 1.0 / 128.0

    def test_amplitude_error_small_near_origin(self):
        # the 1/128 amplitude bound holds only for |x| below ~0.35, where
        # the expansion slope stays under 255/(128*2)
        x = np.linspace(-0.3, 0.3, 1201)
        back = mu_law_decode(mu_law_encode(x))
        assert float(np.abs(back - x).max()) <= 1.0 / 128.0


class TestCompand:
    def test_odd_function(self):
        x = np.linspace(0, 1, 101)
        np.testing.assert_allclose(mu_law_compand(-x), -mu_law_compand(x),
                                   atol=1e-12)

    def test_expand_inverts_compand(self):
        x = np.linspace(-1, 1, 101)
        np.testing.assert_allclose(mu_law_expand(mu_law_compand(x)), x,
                                   atol=1e-12)

    def test_compresses_toward_unity(self):
        # small amplitudes gain, large amplitudes saturate
        assert float(mu_law_compand(np.array(0.01))) > 0.2
        assert float(mu_law_compand(np.array(0.9))) < 0.99
