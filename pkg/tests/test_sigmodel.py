import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import circ_diff
from fluxdemod import sigmodel as sm
from fluxdemod.errors import ParameterError, UndefinedPhaseError
from fluxdemod.formats import FMT_F64


def make_pulses(rate=20.0, rise=10e-6, decay=1e-3, amp=1.0):
    return sm.PulseSpec(rise_time_s=rise, decay_time_s=decay,
                        amplitude_rad=amp, event_rate_hz=rate)


class TestPulseTrain:
    def test_zero_rate_gives_silence(self):
        timeline, times = sm.gen_pulse_train(make_pulses(rate=0.0), 1.0, 1000.0, seed=3)
        assert times.size == 0
        assert not timeline.any()

    def test_forced_event_peak_matches_closed_form(self):
        # peak of exp(-t/d) - exp(-t/r) sits at t* = ln(d/r) * r*d/(d-r)
        r, d, amp = 10e-6, 1e-3, 1.0
        rate_out = 10e6  # fine grid so the sampled max approximates the extremum
        pulses = make_pulses(rise=r, decay=d, amp=amp)
        t0 = 1e-4
        timeline = sm.render_pulse_train([t0], pulses, 8e-4, rate_out)
        peak_expected = amp * ((d / r) ** (r / (r - d)) - (d / r) ** (d / (r - d)))
        t_star = math.log(d / r) * r * d / (d - r)
        k_peak = int(np.argmax(timeline))
        assert abs(timeline.max() - peak_expected) < 1e-6
        assert abs(k_peak / rate_out - (t0 + t_star)) <= 2.0 / rate_out

    def test_event_before_sample_zero_contributes_tail(self):
        pulses = make_pulses()
        timeline = sm.render_pulse_train([-0.5e-3], pulses, 1e-3, 1e6)
        assert timeline[0] > 0

    def test_poisson_count_within_5_sigma(self):
        pulses = make_pulses(rate=20.0)
        _, times = sm.gen_pulse_train(pulses, 10.0, 1000.0, seed=7)
        assert abs(times.size - 200) <= 5 * math.sqrt(200)

    def test_poisson_mean_over_100_seeds(self):
        pulses = make_pulses(rate=20.0)
        counts = [sm.gen_pulse_train(pulses, 10.0, 100.0, seed=s)[1].size
                  for s in range(100)]
        # mean of 100 draws: sigma of the mean is sqrt(200/100)
        assert abs(np.mean(counts) - 200) < 5 * math.sqrt(200 / 100)

    def test_superposition_is_exact(self):
        pulses = make_pulses()
        a = sm.render_pulse_train([0.1], pulses, 1.0, 5000.0)
        b = sm.render_pulse_train([0.4], pulses, 1.0, 5000.0)
        both = sm.render_pulse_train([0.1, 0.4], pulses, 1.0, 5000.0)
        assert np.array_equal(both, a + b)

    def test_determinism(self):
        pulses = make_pulses()
        t1, e1 = sm.gen_pulse_train(pulses, 2.0, 4000.0, seed=99)
        t2, e2 = sm.gen_pulse_train(pulses, 2.0, 4000.0, seed=99)
        assert t1.tobytes() == t2.tobytes()
        assert np.array_equal(e1, e2)

    def test_invalid_specs_rejected(self):
        with pytest.raises(ParameterError):
            make_pulses(rise=0.0)
        with pytest.raises(ParameterError):
            make_pulses(rise=2e-3)  # slower than decay
        with pytest.raises(ParameterError):
            make_pulses(rate=-1.0)
        with pytest.raises(ParameterError):
            sm.PulseSpec(10e-6, 1e-3, amplitude_rad=0.0, event_rate_hz=1.0)


def base_spec(**kw):
    defaults = dict(sample_rate_hz=1000.0, ramp_length_samples=1000,
                    modulation_freq_hz=40.0, amplitude=1.0, dc_offset=0.0)
    defaults.update(kw)
    return sm.RampSpec(**defaults)


class TestOracleDemod:
    def test_basis_alignment(self):
        spec = base_spec()
        assert abs(sm.oracle_demod(sm.tone_ramp(spec, 0.0), spec)) < 1e-12

    def test_quarter_turn(self):
        spec = base_spec()
        got = sm.oracle_demod(sm.tone_ramp(spec, math.pi / 4), spec)
        assert abs(got - math.pi / 4) < 1e-9

    def test_dc_offset_cancels(self):
        spec = base_spec()
        ramp = sm.tone_ramp(spec, 1.1)
        with_dc = sm.oracle_demod(ramp + 17.25, spec)
        without = sm.oracle_demod(ramp, spec)
        assert abs(with_dc - without) < 1e-9

    def test_phase_sweep_recovery(self):
        spec = base_spec()
        for phi in np.linspace(0, 2 * math.pi, 64, endpoint=False):
            got = sm.oracle_demod(sm.tone_ramp(spec, phi), spec)
            assert circ_diff(got, phi) < 1e-9

    def test_trimmed_span_with_integer_periods(self):
        # 25-sample carrier period: trimming 25 from each side keeps 38 periods
        spec = base_spec()
        got = sm.oracle_demod(sm.tone_ramp(spec, 0.8), spec, o_beg=25, o_end=25)
        assert circ_diff(got, 0.8) < 1e-9

    def test_window_kinds_accept_tone(self):
        spec = base_spec()
        for kind in ("rectangular", "bartlett", "hann"):
            got = sm.oracle_demod(sm.tone_ramp(spec, -2.0), spec, window=kind)
            assert circ_diff(got, -2.0) < 1e-6

    def test_all_zero_ramp_is_undefined(self):
        spec = base_spec()
        with pytest.raises(UndefinedPhaseError):
            sm.oracle_demod(np.zeros(1000), spec)

    def test_wrong_length_rejected(self):
        spec = base_spec()
        with pytest.raises(ParameterError):
            sm.oracle_demod(np.zeros(999), spec)

    def test_bad_trims_rejected(self):
        spec = base_spec()
        with pytest.raises(ParameterError):
            sm.oracle_demod(np.zeros(1000), spec, o_beg=600, o_end=400)

    def test_result_range_excludes_minus_pi(self):
        spec = base_spec()
        got = sm.oracle_demod(sm.tone_ramp(spec, math.pi), spec)
        assert -math.pi < got <= math.pi
        assert circ_diff(got, math.pi) < 1e-9

    @settings(max_examples=40, deadline=None)
    @given(phi=st.floats(0, 2 * math.pi - 1e-9),
           periods=st.integers(2, 50),
           n=st.sampled_from([200, 500, 1000]))
    def test_recovery_property(self, phi, periods, n):
        spec = sm.RampSpec(sample_rate_hz=float(n), ramp_length_samples=n,
                           modulation_freq_hz=float(periods))
        got = sm.oracle_demod(sm.tone_ramp(spec, phi), spec)
        assert circ_diff(got, phi) < 1e-9


class TestScene:
    def test_static_scene_ramps_identical(self):
        spec = base_spec(amplitude=10000.0)
        scene = sm.ChannelScene(channel_count=1, ramp=spec, duration_s=5.0,
                                sample_format=FMT_F64)
        stream, truth = sm.gen_scene(scene)
        ramps = stream.frames[:, 0].reshape(5, 1000)
        assert np.array_equal(ramps, np.tile(ramps[0], (5, 1)))
        assert not truth.phase.any()

    def test_constant_phase_recovered_by_oracle(self):
        spec = base_spec(amplitude=10000.0)
        scene = sm.ChannelScene(channel_count=1, ramp=spec, duration_s=3.0,
                                static_phase_rad=0.5, sample_format=FMT_F64)
        stream, truth = sm.gen_scene(scene)
        assert np.all(truth.phase == 0.5)
        for m in range(3):
            ramp = stream.frames[m * 1000:(m + 1) * 1000, 0]
            assert circ_diff(sm.oracle_demod(ramp, spec), 0.5) < 1e-9

    def test_constant_phase_recovered_from_quantized_samples(self):
        spec = base_spec(amplitude=12000.0, dc_offset=2000.0)
        scene = sm.ChannelScene(channel_count=1, ramp=spec, duration_s=2.0,
                                static_phase_rad=0.5)
        stream, _ = sm.gen_scene(scene)
        ramp = stream.frames[:1000, 0].astype(float)
        assert circ_diff(sm.oracle_demod(ramp, spec), 0.5) < 5e-4

    def test_sync_markers_every_ramp(self):
        scene = sm.ChannelScene(channel_count=2, ramp=base_spec(), duration_s=2.0)
        stream, _ = sm.gen_scene(scene)
        assert np.array_equal(stream.sync_positions(), [0, 1000])

    def test_zero_duration_gives_empty_stream(self):
        scene = sm.ChannelScene(channel_count=2, ramp=base_spec(), duration_s=0.0)
        stream, truth = sm.gen_scene(scene)
        assert stream.n_frames == 0
        assert truth.phase.shape == (0, 2)

    def test_determinism_byte_for_byte(self):
        pulses = make_pulses(rate=100.0)
        scene = sm.ChannelScene(channel_count=3, ramp=base_spec(amplitude=9000.0),
                                pulses=pulses, noise_sigma=25.0, duration_s=1.0, seed=5)
        s1, t1 = sm.gen_scene(scene)
        s2, t2 = sm.gen_scene(scene)
        assert s1.frames.tobytes() == s2.frames.tobytes()
        assert t1.phase.tobytes() == t2.phase.tobytes()

    def test_glitch_corrupts_only_ramp_edges(self):
        spec = base_spec(amplitude=5000.0)
        clean = sm.ChannelScene(channel_count=1, ramp=spec, duration_s=2.0,
                                sample_format=FMT_F64)
        dirty = sm.ChannelScene(channel_count=1, ramp=spec, duration_s=2.0,
                                glitch_begin=3, glitch_end=2, glitch_amplitude=500.0,
                                sample_format=FMT_F64)
        a, _ = sm.gen_scene(clean)
        b, _ = sm.gen_scene(dirty)
        diff = (b.frames - a.frames)[:, 0].reshape(2, 1000)
        assert np.all(diff[:, :3] == 500.0)
        assert np.all(diff[:, 998:] == 500.0)
        assert not diff[:, 3:998].any()

    def test_pulse_phase_quasi_static_per_ramp(self):
        pulses = make_pulses(rate=0.0)
        spec = base_spec(amplitude=8000.0)
        scene = sm.ChannelScene(channel_count=1, ramp=spec, pulses=pulses,
                                duration_s=1.0, sample_format=FMT_F64)
        stream, truth = sm.gen_scene(scene)
        # phase is sampled at ramp starts: every ramp demodulates to its truth row
        for m in range(truth.phase.shape[0]):
            ramp = stream.frames[m * 1000:(m + 1) * 1000, 0]
            assert circ_diff(sm.oracle_demod(ramp, spec), truth.phase[m, 0]) < 1e-9

    def test_per_channel_ramps_must_share_clock(self):
        a = base_spec()
        b = base_spec(ramp_length_samples=500, modulation_freq_hz=20.0)
        with pytest.raises(ParameterError):
            sm.ChannelScene(channel_count=2, ramp=[a, b], duration_s=1.0)

    def test_per_channel_modulation_freqs_allowed(self):
        a = base_spec()
        b = base_spec(modulation_freq_hz=44.0)
        scene = sm.ChannelScene(channel_count=2, ramp=[a, b], duration_s=1.0,
                                static_phase_rad=[0.3, -0.7], sample_format=FMT_F64)
        stream, _ = sm.gen_scene(scene)
        r0 = stream.frames[:1000, 0]
        r1 = stream.frames[:1000, 1]
        assert circ_diff(sm.oracle_demod(r0, a), 0.3) < 1e-9
        assert circ_diff(sm.oracle_demod(r1, b), -0.7) < 1e-9

    def test_two_tone_ramp_matches_formula(self):
        n = np.arange(1000)
        expected = (np.sin(2 * np.pi * 40 / 1000 * n + 0.2)
                    + np.sin(2 * np.pi * 44.4 / 1000 * n + 1.3))
        got = sm.two_tone_ramp(1000, 40.0, 44.4, 0.2, 1.3)
        assert np.allclose(got, expected, atol=0, rtol=0)

    def test_nyquist_guard(self):
        with pytest.raises(ParameterError):
            base_spec(modulation_freq_hz=500.0)
