import math

import numpy as np
import pytest

from thetamilstein.rng import (IncrementStream, block_increments, coarsen, coupled_increments,
                               standard_normals)


def test_coarse_increments_are_sums_of_fine():
    s = IncrementStream(42, 3, 0.01)
    fine = s.increments(0, 4)
    coarse = coupled_increments(s, 2)
    assert coarse.level_dt == pytest.approx(0.02)
    c = coarse.increments(0, 2)
    assert c[0] == fine[0] + fine[1]
    assert c[1] == fine[2] + fine[3]
    assert coarse[1] == c[1]


def test_nested_coarsening():
    s = IncrementStream(1, 0, 2 ** -10)
    four = coupled_increments(coupled_increments(s, 2), 2)
    direct = coupled_increments(s, 4)
    np.testing.assert_array_equal(four.increments(0, 8), direct.increments(0, 8))
    np.testing.assert_allclose(four.increments(0, 8), coarsen(s.increments(0, 32), 4), rtol=0, atol=0)


def test_variance_within_three_standard_errors():
    dt = 0.01
    x = block_increments(7, np.arange(1000), dt, 0, 1000).ravel()
    assert x.size == 10 ** 6
    n = x.size
    var = np.mean(x * x)
    se = dt * math.sqrt(2.0 / n)
    assert abs(var - dt) < 3 * se
    assert abs(np.mean(x)) < 3 * math.sqrt(dt / n)
    # coarse level too
    c = coarsen(x.reshape(1000, 1000), 4).ravel()
    assert abs(np.mean(c * c) - 4 * dt) < 3 * 4 * dt * math.sqrt(2.0 / c.size)


def test_determinism_and_independence_from_chunking():
    a = standard_normals(99, np.arange(10), 0, 50)
    b = np.concatenate([standard_normals(99, np.arange(lo, lo + 5), 0, 50) for lo in (0, 5)])
    np.testing.assert_array_equal(a, b)
    c = np.concatenate([standard_normals(99, np.arange(10), s, 10) for s in range(0, 50, 10)], axis=1)
    np.testing.assert_array_equal(a, c)
    assert standard_normals(99, [3], 7, 1)[0, 0] == a[3, 7]


def test_different_seeds_and_paths_differ():
    a = standard_normals(1, [0, 1], 0, 100)
    b = standard_normals(2, [0, 1], 0, 100)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a[0], a[1])
    assert abs(np.corrcoef(a[0], a[1])[0, 1]) < 0.4


def test_normal_tail_shape():
    z = standard_normals(5, np.arange(200), 0, 5000).ravel()
    assert np.all(np.isfinite(z))
    # P(|Z| > 2) = 0.0455
    frac = np.mean(np.abs(z) > 2)
    assert abs(frac - 0.0455) < 3 * math.sqrt(0.0455 * 0.9545 / z.size)


def test_errors():
    with pytest.raises(ValueError):
        coupled_increments(IncrementStream(0, 0, 0.1), 1)
    with pytest.raises(ValueError):
        coarsen(np.zeros(5), 2)
