import numpy as np
import pytest

from snrlab.core.wavelet import SubbandSet, dwt_haar, idwt_haar
from snrlab.models.grid import GridShapeError


def test_round_trip_and_energy(rng):
    x = rng.standard_normal((5, 3, 8, 6))
    s = dwt_haar(x)
    assert s.shape == (5, 3, 4, 3)
    np.testing.assert_allclose(idwt_haar(s), x, atol=1e-12)
    np.testing.assert_allclose(s.energy(), np.sum(x**2, axis=(1, 2, 3)), rtol=1e-12)


def test_single_grid_input(rng):
    x = rng.standard_normal((2, 4, 4))
    np.testing.assert_allclose(idwt_haar(dwt_haar(x)), x, atol=1e-12)


def test_constant_image_lives_in_ll():
    x = np.full((1, 4, 4), 3.0)
    s = dwt_haar(x)
    np.testing.assert_allclose(s.ll, 6.0)
    for band in (s.lh, s.hl, s.hh):
        np.testing.assert_allclose(band, 0.0)


def test_subband_formulas():
    x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
    s = dwt_haar(x)
    assert s.ll[0, 0, 0] == pytest.approx(5.0)
    assert s.lh[0, 0, 0] == pytest.approx(-2.0)
    assert s.hl[0, 0, 0] == pytest.approx(-1.0)
    assert s.hh[0, 0, 0] == pytest.approx(0.0)


def test_wrong_scale_breaks_round_trip(rng):
    x = rng.standard_normal((1, 4, 4))
    s = dwt_haar(x, scale=0.6)
    assert np.max(np.abs(idwt_haar(s, scale=0.6) - x)) > 0.1


def test_shape_errors():
    with pytest.raises(GridShapeError):
        dwt_haar(np.zeros((1, 3, 4)))
    with pytest.raises(GridShapeError):
        SubbandSet(np.zeros((1, 2, 2)), np.zeros((1, 2, 2)), np.zeros((1, 2, 2)), np.zeros((1, 1, 2)))


def test_scaled_subbands(rng):
    s = dwt_haar(rng.standard_normal((1, 4, 4)))
    doubled = s.scaled({"hh": 2.0})
    np.testing.assert_array_equal(doubled.ll, s.ll)
    np.testing.assert_allclose(doubled.hh, 2.0 * s.hh)
