import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kernelmaps.errors import InvalidParameterError
from kernelmaps.kernel import DEFAULT_WIDTHS, KernelParams, gauss, gram, kernel_row

coord = st.floats(-10, 10, allow_nan=False)
point = st.tuples(coord, coord)
width = st.floats(1e-3, 10.0)


def test_identity_case():
    assert gauss((0.3, 0.7), (0.3, 0.7), 0.05) == 1.0


def test_hand_value():
    # ||d||^2 = 0.1 and 2 * sigma2 = 0.1
    assert gauss((0.0, 0.0), (np.sqrt(0.1), 0.0), 0.05) == pytest.approx(np.exp(-1.0), abs=1e-15)
    assert gauss((0.0, 0.0), (0.316228, 0.0), 0.05) == pytest.approx(0.367879, abs=1e-6)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.nan, np.inf])
def test_bad_width(bad):
    with pytest.raises(InvalidParameterError):
        gauss((0, 0), (1, 1), bad)


def test_symmetry_random_pairs():
    rng = np.random.default_rng(1)
    for a, b in rng.uniform(-1, 1, size=(100, 2, 2)):
        assert gauss(a, b, 0.05) == gauss(b, a, 0.05)


@given(point, point, width)
def test_range_and_translation(a, b, s2):
    v = gauss(a, b, s2)
    assert 0.0 <= v <= 1.0
    shift = np.array([3.25, -1.5])
    assert gauss(np.add(a, shift), np.add(b, shift), s2) == pytest.approx(v, abs=1e-12)


def test_positive_for_moderate_distances():
    assert gauss((0, 0), (1, 1), 0.05) > 0


def test_gram_psd():
    rng = np.random.default_rng(2)
    for _ in range(20):
        pts = rng.uniform(0, 1, size=(10, 2))
        G = gram(pts, pts, 0.05)
        assert np.allclose(G, G.T)
        assert np.linalg.eigvalsh(G).min() >= -1e-10


def test_kernel_params_validation():
    assert KernelParams().M == len(DEFAULT_WIDTHS)
    with pytest.raises(InvalidParameterError):
        KernelParams((0.1, 0.1))
    with pytest.raises(InvalidParameterError):
        KernelParams((0.5, 0.1))
    with pytest.raises(InvalidParameterError):
        KernelParams(())
    with pytest.raises(InvalidParameterError):
        KernelParams((-1.0,))


def test_kernel_row_identity_and_empty():
    p = KernelParams((0.01, 0.1))
    x = (0.2, 0.4)
    assert np.array_equal(kernel_row(x, [x], p), np.ones((2, 1)))
    assert kernel_row(x, [], p).shape == (2, 0)


def test_kernel_row_single_width():
    rng = np.random.default_rng(3)
    x, centers = rng.uniform(size=2), rng.uniform(size=(5, 2))
    row = kernel_row(x, centers, KernelParams((0.05,)))
    assert row.shape == (1, 5)
    assert np.allclose(row[0], [gauss(x, c, 0.05) for c in centers], atol=1e-15)


@settings(max_examples=50)
@given(st.integers(0, 2**31 - 1))
def test_kernel_row_elementwise(seed):
    rng = np.random.default_rng(seed)
    p = KernelParams()
    x, centers = rng.uniform(size=2), rng.uniform(size=(4, 2))
    K = kernel_row(x, centers, p)
    m, i = rng.integers(p.M), rng.integers(4)
    assert K[m, i] == pytest.approx(gauss(x, centers[i], p.widths[m]), rel=1e-13, abs=1e-300)
