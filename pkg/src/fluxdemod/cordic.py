"""Integer shift-add (CORDIC) kernels for magnitude and four-quadrant arctangent.

Both kernels run in vectoring mode: the vector is rotated onto the positive
x axis by a fixed schedule of arctangent micro-rotations, accumulating either
the stretched magnitude or the rotation angle.  All arithmetic is integer
shifts and adds, mirroring a hardware datapath; the vectorized variants
perform the identical operations across numpy arrays and are bit-equal to
the scalar ones.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

_GUARD_BITS = 8  # headroom below the LSB so iteration truncation stays sub-LSB
_GAIN_FRAC_BITS = 30
_ANGLE_FRAC_BITS = 48  # angle unit: 2^-48 rad
_ANGLE_SCALE = 1 << _ANGLE_FRAC_BITS


def cordic_gain(iterations: int) -> float:
    """Magnitude stretch of the rotation schedule, prod(sqrt(1 + 2^-2k))."""
    g = 1.0
    for k in range(iterations):
        g *= math.sqrt(1.0 + 2.0 ** (-2 * k))
    return g


@lru_cache(maxsize=None)
def _inverse_gain_q(iterations: int) -> int:
    return round((1 << _GAIN_FRAC_BITS) / cordic_gain(iterations))


@lru_cache(maxsize=None)
def _atan_table_q(iterations: int) -> tuple[int, ...]:
    return tuple(round(math.atan(2.0 ** -k) * _ANGLE_SCALE) for k in range(iterations))


def magnitude(i: int, q: int, iterations: int = 16) -> int:
    """sqrt(i*i + q*q) by vectoring, relative error <= 2^-(iterations-1).

    Inputs are signed integers; the result is the unsigned magnitude at the
    same scale, rounded to the nearest integer.  Rotation continues on
    y == 0 (direction +1) so the gain of the full schedule always applies.
    """
    x = abs(int(i)) << _GUARD_BITS
    y = abs(int(q)) << _GUARD_BITS
    if x == 0 and y == 0:
        return 0
    if x < y:
        x, y = y, x
    for k in range(iterations):
        if y >= 0:
            x, y = x + (y >> k), y - (x >> k)
        else:
            x, y = x - (y >> k), y + (x >> k)
    x = (x * _inverse_gain_q(iterations) + (1 << (_GAIN_FRAC_BITS - 1))) >> _GAIN_FRAC_BITS
    return (x + (1 << (_GUARD_BITS - 1))) >> _GUARD_BITS


def magnitude_array(i: np.ndarray, q: np.ndarray, iterations: int = 16) -> np.ndarray:
    """Vectorized magnitude; element-wise identical to magnitude()."""
    x = np.abs(i.astype(np.int64)) << _GUARD_BITS
    y = np.abs(q.astype(np.int64)) << _GUARD_BITS
    zero = (x == 0) & (y == 0)
    swap = x < y
    x2 = np.where(swap, y, x)
    y2 = np.where(swap, x, y)
    x, y = x2, y2
    for k in range(iterations):
        step = np.where(y >= 0, 1, -1).astype(np.int64)
        nx = x + step * (y >> k)
        ny = y - step * (x >> k)
        x, y = nx, ny
    x = (x * _inverse_gain_q(iterations) + (1 << (_GAIN_FRAC_BITS - 1))) >> _GAIN_FRAC_BITS
    out = (x + (1 << (_GUARD_BITS - 1))) >> _GUARD_BITS
    return np.where(zero, 0, out)


def _vector_angle_q(x: int, y: int, iterations: int) -> int:
    """Angle in 2^-48 rad units after vectoring (x > 0 assumed)."""
    table = _atan_table_q(iterations)
    z = 0
    for k in range(iterations):
        if y > 0:
            x, y = x + (y >> k), y - (x >> k)
            z += table[k]
        elif y < 0:
            x, y = x - (y >> k), y + (x >> k)
            z -= table[k]
        else:
            break
    return z


_PI_Q = round(math.pi * _ANGLE_SCALE)


def atan2_fixed(y: int, x: int, iterations: int = 16) -> float:
    """Four-quadrant arctangent of integer operands, result in (-pi, pi].

    The y operand is kept at sub-LSB precision via guard bits so small
    ratios are not lost; quadrant folding matches math.atan2 except that
    -pi is mapped to +pi.
    """
    x = int(x)
    y = int(y)
    if x == 0 and y == 0:
        return 0.0
    xs = abs(x) << _GUARD_BITS
    ys = y << _GUARD_BITS
    z = _vector_angle_q(xs, ys, iterations)
    if x < 0:
        z = _PI_Q - z if y >= 0 else -_PI_Q - z
    return z / _ANGLE_SCALE


def atan2_fixed_array(y: np.ndarray, x: np.ndarray, iterations: int = 16) -> np.ndarray:
    """Vectorized atan2_fixed, element-wise identical to the scalar version."""
    x = x.astype(np.int64)
    y = y.astype(np.int64)
    table = _atan_table_q(iterations)
    xs = np.abs(x) << _GUARD_BITS
    ys = y << _GUARD_BITS
    z = np.zeros_like(xs)
    for k in range(iterations):
        pos = ys > 0
        neg = ys < 0
        step = np.where(pos, 1, np.where(neg, -1, 0)).astype(np.int64)
        if not step.any():
            break
        nx = xs + step * (ys >> k)
        ny = ys - step * (xs >> k)
        xs, ys = nx, ny
        z += step * table[k]
    neg_x = x < 0
    fold = np.where(y >= 0, _PI_Q - z, -_PI_Q - z)
    z = np.where(neg_x, fold, z)
    z = np.where((x == 0) & (y == 0), 0, z)
    return z / _ANGLE_SCALE
