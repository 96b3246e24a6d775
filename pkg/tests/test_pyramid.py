import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scopedepth import DepthMap, ValidMask, build_gt_pyramid
from scopedepth.pyramid import level_shape


def _pyr(values, flags=None):
    values = np.asarray(values, dtype=np.float64)
    flags = np.ones(values.shape, bool) if flags is None else np.asarray(flags, bool)
    return build_gt_pyramid(DepthMap(values), ValidMask(flags))


def test_plain_mean_all_valid():
    pyr = _pyr([[1.0, 2.0], [3.0, 4.0]])
    assert pyr.depth(2).values[0, 0] == pytest.approx(2.5)
    assert pyr.mask(2).flags[0, 0]


def test_mean_over_valid_subset():
    pyr = _pyr([[1.0, 2.0], [3.0, 4.0]], [[True, True], [True, False]])
    assert pyr.depth(2).values[0, 0] == pytest.approx(2.0)
    assert pyr.mask(2).flags[0, 0]


def test_three_invalid_contributors_invalidate():
    pyr = _pyr([[1.0, 2.0], [3.0, 4.0]], [[True, False], [False, False]])
    assert not pyr.mask(2).flags[0, 0]


def test_exactly_two_valid_is_valid():
    pyr = _pyr([[1.0, 2.0], [3.0, 4.0]], [[True, False], [False, True]])
    assert pyr.mask(2).flags[0, 0]
    assert pyr.depth(2).values[0, 0] == pytest.approx(2.5)


def test_truncated_footprint_needs_one_valid():
    # 3x3 input: the bottom-right footprint at level 2 covers one pixel.
    values = np.arange(9, dtype=np.float64).reshape(3, 3) + 1
    pyr = _pyr(values)
    assert pyr.depth(2).shape == (2, 2)
    assert pyr.mask(2).flags[1, 1]
    assert pyr.depth(2).values[1, 1] == pytest.approx(values[2, 2])


def test_degenerate_1x1_input():
    pyr = _pyr([[7.0]])
    for level in range(1, 5):
        assert pyr.depth(level).shape == (1, 1)
        assert pyr.depth(level).values[0, 0] == 7.0
        assert pyr.mask(level).flags[0, 0]


@pytest.mark.parametrize("shape", [(16, 16), (17, 13), (9, 32), (1, 1), (5, 5)])
def test_level_shapes(shape):
    h, w = shape
    pyr = _pyr(np.ones(shape))
    for level in range(1, 5):
        f = 2 ** (level - 1)
        expected = (-(-h // f), -(-w // f))
        assert pyr.depth(level).shape == expected
        assert level_shape(h, w, level) == expected


@settings(max_examples=40, deadline=None)
@given(
    st.integers(min_value=1, max_value=24),
    st.integers(min_value=1, max_value=24),
    st.floats(min_value=0.01, max_value=99.0),
)
def test_constant_map_stays_constant(h, w, c):
    pyr = _pyr(np.full((h, w), c))
    for level in range(1, 5):
        assert pyr.mask(level).flags.all()
        assert np.allclose(pyr.depth(level).values, c)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError, match="shape"):
        build_gt_pyramid(DepthMap(np.ones((2, 2))), ValidMask(np.ones((3, 2), bool)))
