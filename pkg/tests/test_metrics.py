import math

import numpy as np
import pytest

from snrlab.core.metrics import (
    EnergyDistance,
    energy_distance,
    energy_distance_with_stderr,
    projections,
    sliced_wasserstein,
)


def test_identical_sets_have_zero_distance(rng):
    a = rng.standard_normal((50, 1, 2, 2))
    assert energy_distance(a, a) == pytest.approx(0.0, abs=1e-12)
    assert sliced_wasserstein(a, a, n_proj=8, seed=0) == pytest.approx(0.0, abs=1e-12)


def test_shift_increases_distance(rng):
    a = rng.standard_normal((200, 1, 2, 2))
    b = rng.standard_normal((200, 1, 2, 2))
    near = energy_distance(a, b)
    far = energy_distance(a + 2.0, b)
    assert far > near > -1e-12
    assert sliced_wasserstein(a + 2.0, b, 16, 3) > sliced_wasserstein(a, b, 16, 3)


def test_symmetry(rng):
    a = rng.standard_normal((40, 1, 2, 2))
    b = rng.standard_normal((60, 1, 2, 2)) + 0.5
    assert energy_distance(a, b) == pytest.approx(energy_distance(b, a), rel=1e-12)


def test_brute_force_v_statistic(rng):
    a = rng.standard_normal((7, 1, 2, 2)).reshape(7, -1)
    b = rng.standard_normal((5, 1, 2, 2)).reshape(5, -1)

    def mean_dist(x, y):
        return np.mean(np.linalg.norm(x[:, None] - y[None], axis=-1))

    expected = 2 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b)
    assert energy_distance(a.reshape(7, 1, 2, 2), b.reshape(5, 1, 2, 2)) == pytest.approx(expected)


def test_cached_reference_and_chunking(rng):
    ref = rng.standard_normal((30, 1, 2, 2))
    samples = rng.standard_normal((25, 1, 2, 2))
    small = EnergyDistance(ref, chunk=4)(samples)
    big = EnergyDistance(ref)(samples)
    assert small[0] == pytest.approx(big[0], rel=1e-12)
    assert small[1] == pytest.approx(big[1], rel=1e-9)
    value, stderr = energy_distance_with_stderr(samples, ref)
    assert value == pytest.approx(big[0])
    assert stderr > 0


def test_stderr_undefined_for_single_sample(rng):
    _, stderr = energy_distance_with_stderr(rng.standard_normal((1, 1, 2, 2)), rng.standard_normal((5, 1, 2, 2)))
    assert math.isnan(stderr)


def test_errors(rng):
    with pytest.raises(ValueError):
        energy_distance(np.zeros((0, 1, 2, 2)), np.zeros((3, 1, 2, 2)))
    with pytest.raises(ValueError):
        energy_distance(np.zeros((3, 1, 2, 2)), np.zeros((3, 1, 4, 4)))
    with pytest.raises(ValueError):
        sliced_wasserstein(np.zeros((3, 4)), np.zeros((3, 4)), 0, 0)


def test_projections_deterministic():
    p = projections(16, 8, seed=5)
    assert p.shape == (8, 16)
    np.testing.assert_allclose(np.linalg.norm(p, axis=1), 1.0)
    assert np.array_equal(p, projections(16, 8, seed=5))
    assert not np.array_equal(p, projections(16, 8, seed=6))
