import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from tvgarch.basis import design_matrix, eval_basis, make_basis, smooth_eval


def test_three_centres_unit_width():
    b = make_basis(3, 0.0, 2.0, 1.0)
    assert_array_equal(b.centers, [0.0, 1.0, 2.0])
    assert b.width == 1.0


def test_spacing_default_time_domain():
    b = make_basis(15, 1.0, 1000.0, 1.0)
    assert_allclose(np.diff(b.centers), 999.0 / 14.0, rtol=1e-12)
    assert b.centers[0] == 1.0 and b.centers[-1] == 1000.0
    assert_allclose(b.width, 71.357142857142857, rtol=1e-12)


@pytest.mark.parametrize("args", [(1, 0.0, 1.0, 1.0), (3, 1.0, 1.0, 1.0), (3, 2.0, 1.0, 1.0),
                                  (3, 0.0, 1.0, 0.0), (2.5, 0.0, 1.0, 1.0)])
def test_invalid_arguments(args):
    with pytest.raises(ValueError):
        make_basis(*args)


def test_eval_at_centre_and_one_width_away():
    b = make_basis(15, 1.0, 1000.0)
    for p in (0, 7, 14):
        row = eval_basis(b, b.centers[p])
        assert row[p] == 1.0
        assert np.all(row > 0) and np.all(row <= 1)
        assert_allclose(eval_basis(b, b.centers[p] + b.width)[p], np.exp(-0.5), rtol=1e-14)


def test_midpoint_symmetry():
    b = make_basis(6, 0.0, 5.0)
    row = eval_basis(b, 2.5)
    assert_allclose(row[2], row[3], rtol=1e-14)


def test_design_matrix_rows_match_eval():
    b = make_basis(15, 1.0, 1000.0)
    xs = np.arange(1, 1001, dtype=float)
    B = design_matrix(b, xs)
    assert B.shape == (1000, 15)
    assert np.all(B > 0)
    for i in (0, 10, 499, 999):
        assert_array_equal(B[i], eval_basis(b, xs[i]))
    assert_array_equal(np.diag(design_matrix(b, b.centers)), np.ones(15))
    assert_array_equal(design_matrix(b, [3.0]), eval_basis(b, 3.0)[None, :])
    with pytest.raises(ValueError):
        design_matrix(b, [])


def test_smooth_eval_linearity():
    rng = np.random.default_rng(0)
    b = make_basis(15, 1.0, 1000.0)
    row = eval_basis(b, 123.4)
    t1, t2 = rng.standard_normal(15), rng.standard_normal(15)
    lhs = smooth_eval(2.5 * t1 - 0.7 * t2, row)
    rhs = 2.5 * smooth_eval(t1, row) - 0.7 * smooth_eval(t2, row)
    assert_allclose(lhs, rhs, rtol=1e-12)
    assert smooth_eval(np.zeros(15), row) == 0.0
    assert smooth_eval(np.eye(15)[4], eval_basis(b, b.centers[4])) == 1.0
    assert_allclose(smooth_eval(np.ones(15), row), row.sum(), rtol=1e-14)
    with pytest.raises(ValueError):
        smooth_eval(np.ones(3), row)


def test_translation_equivariance():
    b1 = make_basis(10, 0.0, 9.0, 1.3)
    b2 = make_basis(10, 100.0, 109.0, 1.3)
    assert_allclose(eval_basis(b1, 4.2), eval_basis(b2, 104.2), rtol=1e-12)
