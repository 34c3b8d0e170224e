import math

import numpy as np
import pytest

from conftest import circ_diff
from fluxdemod import cordic


class TestMagnitude:
    def test_origin(self):
        assert cordic.magnitude(0, 0) == 0

    def test_pythagorean_triple(self):
        assert abs(cordic.magnitude(3, 4) - 5) <= 1

    def test_axes_pass_through(self):
        assert abs(cordic.magnitude(30000, 0) - 30000) <= 1
        assert abs(cordic.magnitude(0, -30000) - 30000) <= 1

    def test_random_sweep_vs_hypot(self, rng):
        i = rng.integers(-32768, 32768, 1024)
        q = rng.integers(-32768, 32768, 1024)
        got = np.array([cordic.magnitude(int(a), int(b)) for a, b in zip(i, q)])
        ref = np.hypot(i.astype(float), q.astype(float))
        assert np.max(np.abs(got - ref)) <= 4

    def test_relative_error_bound(self, rng):
        iters = 16
        i = rng.integers(-2 ** 15, 2 ** 15, 512)
        q = rng.integers(-2 ** 15, 2 ** 15, 512)
        for a, b in zip(i, q):
            true = math.hypot(a, b)
            if true < 256:
                continue  # absolute rounding dominates far below full scale
            got = cordic.magnitude(int(a), int(b), iterations=iters)
            assert abs(got - true) / true <= 2.0 ** -(iters - 1) + 2 / true

    def test_vectorized_is_bit_equal(self, rng):
        i = rng.integers(-32768, 32768, 2048)
        q = rng.integers(-32768, 32768, 2048)
        arr = cordic.magnitude_array(i, q)
        sca = np.array([cordic.magnitude(int(a), int(b)) for a, b in zip(i, q)])
        assert np.array_equal(arr, sca)


class TestAtan2:
    def test_positive_x_axis(self):
        assert cordic.atan2_fixed(0, 12345) == 0.0

    def test_diagonal(self):
        assert abs(cordic.atan2_fixed(1000, 1000) - math.pi / 4) < 1e-4

    def test_negative_x_axis_maps_to_plus_pi(self):
        assert cordic.atan2_fixed(0, -4096) == pytest.approx(math.pi, abs=1e-12)

    def test_quadrants(self):
        cases = [(100, 100), (100, -100), (-100, -100), (-100, 100),
                 (1, 1000), (1000, 1), (-1, 1000), (7, -9999)]
        for y, x in cases:
            got = cordic.atan2_fixed(y, x)
            assert circ_diff(got, math.atan2(y, x)) < 1e-4
            assert -math.pi < got <= math.pi

    def test_random_sweep_accuracy(self, rng):
        y = rng.integers(-2 ** 14, 2 ** 14, 4000)
        x = rng.integers(-2 ** 14, 2 ** 14, 4000)
        got = cordic.atan2_fixed_array(y, x)
        ref = np.arctan2(y.astype(float), x.astype(float))
        mask = (x != 0) | (y != 0)
        assert np.max(circ_diff(got[mask], ref[mask])) < 5e-5

    def test_vectorized_is_bit_equal(self, rng):
        y = rng.integers(-2 ** 14, 2 ** 14, 4096)
        x = rng.integers(-2 ** 14, 2 ** 14, 4096)
        arr = cordic.atan2_fixed_array(y, x)
        sca = np.array([cordic.atan2_fixed(int(b), int(a)) for b, a in zip(y, x)])
        assert np.array_equal(arr, sca)

    def test_gain_constant(self):
        # prod sqrt(1 + 2^-2k) approaches the known CORDIC gain
        assert cordic.cordic_gain(16) == pytest.approx(1.646760258121, abs=1e-9)
