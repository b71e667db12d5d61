import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import signal as sps

from vemo.errors import LengthError
from vemo.signal import (
    ScalingTable,
    apply_zero_phase,
    design_butterworth_lowpass,
    scale,
    unscale,
    welch_psd,
)

FS = 100.0


@pytest.fixture(scope="module")
def lp5():
    return design_butterworth_lowpass(8, 5.0, FS)


def analog_gain_db(f, fc, order, fs=FS):
    # analog prototype evaluated at the prewarped frequency: exactly what the
    # bilinear transform maps the digital frequency f onto
    w = np.tan(np.pi * f / fs) / np.tan(np.pi * fc / fs)
    return -10.0 * np.log10(1.0 + w ** (2 * order))


class TestDesign:
    def test_cutoff_is_minus_3db(self, lp5):
        assert lp5.gain_db([5.0])[0] == pytest.approx(-3.0103, abs=0.05)

    def test_unity_dc(self, lp5):
        assert abs(lp5.response([0.0])[0]) == pytest.approx(1.0, rel=1e-9)
        assert lp5.gain_db([0.0])[0] == pytest.approx(0.0, abs=1e-9)

    def test_one_octave_attenuation(self, lp5):
        # |H|^2 = 1 / (1 + 2^16) at one octave in the analog prototype
        assert 10 * np.log10(1 + 2.0 ** 16) == pytest.approx(48.16, abs=0.01)
        g10 = lp5.gain_db([10.0])[0]
        assert g10 == pytest.approx(analog_gain_db(10.0, 5.0, 8), abs=1e-6)
        assert g10 <= -48.0

    @pytest.mark.parametrize("fc", [0.5, 5.0, 25.0, 45.0])
    def test_matches_analog_prototype_everywhere(self, fc):
        filt = design_butterworth_lowpass(8, fc, FS)
        f = np.linspace(0.01, 49.9, 400)
        ref = analog_gain_db(f, fc, 8)
        got = filt.gain_db(f)
        ok = ref > -250  # below that the prototype falls under double precision
        np.testing.assert_allclose(got[ok], ref[ok], atol=1e-6)

    @pytest.mark.parametrize("fc", [0.5, 5.0, 25.0, 45.0])
    def test_monotone_magnitude(self, fc):
        filt = design_butterworth_lowpass(8, fc, FS)
        mag = np.abs(filt.response(np.linspace(0, FS / 2, 1000)))
        assert np.all(np.diff(mag) <= 1e-12)

    def test_section_count_and_layout(self, lp5):
        assert lp5.order == 8
        assert lp5.sections.shape == (4, 6)
        np.testing.assert_array_equal(lp5.sections[:, 3], 1.0)
        # poles inside the unit circle
        assert np.all(lp5.sections[:, 5] < 1.0)

    def test_same_filter_as_scipy_design(self, lp5):
        # cross-check against an independent design routine through the response
        sos = sps.butter(8, 5.0, fs=FS, output="sos")
        _, h = sps.sosfreqz(sos, worN=np.linspace(0, 50, 200), fs=FS)
        np.testing.assert_allclose(lp5.response(np.linspace(0, 50, 200)), h, atol=1e-10)

    @pytest.mark.parametrize("fc", [50.0, 60.0, 0.0, -1.0])
    def test_bad_cutoff(self, fc):
        with pytest.raises(ValueError):
            design_butterworth_lowpass(8, fc, FS)

    @pytest.mark.parametrize("order", [7, 0, 3, 2.5])
    def test_bad_order(self, order):
        with pytest.raises(ValueError):
            design_butterworth_lowpass(order, 5.0, FS)


class TestZeroPhase:
    def test_constant_passes_through(self, lp5):
        x = np.full(500, 3.7)
        np.testing.assert_allclose(apply_zero_phase(lp5, x), x, rtol=1e-12)

    def test_passband_sine_unchanged_no_lag(self, lp5):
        t = np.arange(2000) / FS
        x = np.sin(2 * np.pi * 1.0 * t)
        y = apply_zero_phase(lp5, x)
        core = slice(300, -300)
        amp = np.sqrt(2 * np.mean(y[core] ** 2))
        assert amp == pytest.approx(1.0, rel=0.01)
        xc = np.correlate(y[core], x[core], mode="full")
        lag = np.argmax(xc) - (len(x[core]) - 1)
        assert lag == 0

    def test_stopband_sine_removed(self, lp5):
        t = np.arange(2000) / FS
        x = np.sin(2 * np.pi * 40.0 * t)
        y = apply_zero_phase(lp5, x)
        # analytic two-pass attenuation at 40 Hz is far below 1e-6
        assert 2 * analog_gain_db(40.0, 5.0, 8) < -120
        # edge transients of the 5 Hz filter have died out after 3 s
        assert np.max(np.abs(y[300:-300])) < 1e-6

    def test_multichannel_matches_per_channel(self, lp5):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(300, 3))
        y = apply_zero_phase(lp5, x)
        for c in range(3):
            np.testing.assert_allclose(y[:, c], apply_zero_phase(lp5, x[:, c]), rtol=1e-13, atol=1e-15)

    def test_length_preserved(self, lp5):
        x = np.random.default_rng(1).normal(size=123)
        assert apply_zero_phase(lp5, x).shape == x.shape

    def test_minimum_length(self, lp5):
        apply_zero_phase(lp5, np.ones(24))
        with pytest.raises(LengthError):
            apply_zero_phase(lp5, np.ones(23))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(-5, 5), st.floats(-5, 5))
    def test_linearity(self, seed, a, b):
        filt = design_butterworth_lowpass(8, 5.0, FS)
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=(2, 256))
        lhs = apply_zero_phase(filt, a * x + b * y)
        rhs = a * apply_zero_phase(filt, x) + b * apply_zero_phase(filt, y)
        scale_ = max(np.max(np.abs(lhs)), np.max(np.abs(rhs)), 1e-12)
        assert np.max(np.abs(lhs - rhs)) <= 1e-9 * scale_


class TestWelch:
    def test_sine_peak(self):
        t = np.arange(4096) / FS
        psd = welch_psd(np.sin(2 * np.pi * 10.0 * t), FS, 1024, 0.5)
        assert psd.frequencies[np.argmax(psd.power)] == pytest.approx(10.0, abs=FS / 1024)

    def test_zero_series(self):
        psd = welch_psd(np.zeros(2048), FS, 1024, 0.5)
        assert np.all(psd.power == 0)

    def test_white_noise_parseval(self):
        rng = np.random.default_rng(12345)
        sigma = 1.7
        x = rng.normal(0, sigma, size=200_000)
        psd = welch_psd(x, FS, 1024, 0.5)
        assert psd.integrate() == pytest.approx(sigma ** 2, rel=0.05)

    def test_non_negative(self):
        x = np.random.default_rng(3).normal(size=3000)
        assert np.all(welch_psd(x, FS, 512, 0.25).power >= 0)

    def test_segment_too_long(self):
        with pytest.raises(LengthError):
            welch_psd(np.zeros(100), FS, 1024, 0.5)

    def test_bad_overlap(self):
        with pytest.raises(ValueError):
            welch_psd(np.zeros(2048), FS, 1024, 1.0)


class TestScaling:
    def test_table_values(self):
        tab = ScalingTable.default()
        assert tab.factors["v_x"] == 280.0
        assert tab.factors["u_s"] == 250.0
        assert tab.factors["a_x"] == pytest.approx(2 * 9.81)
        assert tab.factors["yaw_rate"] == 60.0

    def test_examples(self):
        tab = ScalingTable.default()
        rec = np.zeros(8)
        rec[7] = 280.0
        rec[4] = 19.62
        out = scale(rec, tab)
        assert out[7] == 1.0
        assert out[4] == pytest.approx(1.0, rel=1e-15)
        assert out[2] == 0.0

    def test_state_only_vectors(self):
        tab = ScalingTable.default()
        np.testing.assert_allclose(scale([19.62, 0, 60, 140], tab), [1, 0, 1, 0.5])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        n = 64
        rec = np.column_stack([
            rng.uniform(0, 100, n), rng.uniform(0, 100, n), rng.uniform(-179, 179, n),
            rng.integers(1, 7, n), rng.normal(0, 10, n), rng.normal(0, 10, n),
            rng.normal(0, 40, n), rng.uniform(0, 300, n),
        ])
        tab = ScalingTable.default()
        back = unscale(scale(rec, tab), tab)
        np.testing.assert_allclose(back, rec, rtol=1e-12, atol=0)

    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            ScalingTable.default().with_overrides(v_x=0.0)
