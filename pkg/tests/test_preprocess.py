import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ddm.preprocess import Preprocessor, fit_preprocessor
from ddm.special import DomainError


def test_identity_preprocessor_has_zero_log_det():
    pre = Preprocessor.identity(3)
    assert pre.log_det() == pytest.approx(0.0, abs=1e-15)
    y = np.array([[0.2, 0.5, 0.9]])
    np.testing.assert_allclose(pre.apply(y), y, atol=1e-15)


def test_pure_scaling_log_det():
    k = 4
    pre = Preprocessor(np.zeros(k), np.eye(k), np.full(k, 2.0), np.full(k, 0.05), np.full(k, 0.95))
    assert pre.log_det() == pytest.approx(k * np.log(2.0), abs=1e-14)


def test_standardised_data_is_left_alone(rng):
    z = rng.standard_normal((5000, 3))
    z = (z - z.mean(0)) / z.std(0, ddof=1)
    pre = fit_preprocessor(z)
    np.testing.assert_allclose(pre.mean, 0.0, atol=1e-12)
    np.testing.assert_allclose(pre.scale, 1.0, atol=1e-12)


def test_squash_hits_margin_exactly(rng):
    data = rng.gamma(2.0, size=(300, 4)) * [1, 10, 100, 0.01]
    pre = fit_preprocessor(data, margin=0.07)
    y = pre.apply(data)
    np.testing.assert_allclose(y.min(0), 0.07, atol=1e-12)
    np.testing.assert_allclose(y.max(0), 0.93, atol=1e-12)


def test_pca_on_a_line(rng):
    t = rng.standard_normal(400)
    data = np.column_stack([t, 2 * t + 1e-3 * rng.standard_normal(400)])
    pre = fit_preprocessor(data, use_pca=True, target_dim=1)
    centred = data - data.mean(0)
    proj = centred @ pre.basis
    assert proj.var() / centred.var(0).sum() > 0.999
    np.testing.assert_allclose(pre.basis.T @ pre.basis, np.eye(1), atol=1e-10)


def test_pca_basis_orthonormal(rng):
    data = rng.standard_normal((200, 8)) @ rng.standard_normal((8, 8))
    pre = fit_preprocessor(data, use_pca=True, target_dim=5)
    np.testing.assert_allclose(pre.basis.T @ pre.basis, np.eye(5), atol=1e-10)
    assert pre.dim == 5 and pre.input_dim == 8


def test_zero_variance_dimension_dropped(rng, caplog):
    data = np.column_stack([rng.standard_normal(50), np.full(50, 3.0), rng.standard_normal(50)])
    pre = fit_preprocessor(data)
    assert pre.dropped == (1,)
    assert pre.dim == 2
    assert "zero-variance" in caplog.text


def test_bad_arguments(rng):
    with pytest.raises(ValueError):
        fit_preprocessor(np.ones((1, 3)))
    with pytest.raises(ValueError):
        fit_preprocessor(rng.random((10, 3)), use_pca=True, target_dim=4)
    with pytest.raises(ValueError):
        fit_preprocessor(rng.random((10, 3)), margin=0.5)


def test_invert_rejects_out_of_range():
    pre = Preprocessor.identity(2)
    with pytest.raises(DomainError):
        pre.invert(np.array([[0.5, 1.2]]))


def test_clip_pulls_points_into_margin(caplog):
    pre = Preprocessor.identity(2, margin=0.05)
    y = pre.apply(np.array([[-3.0, 0.5], [0.5, 7.0]]), clip=True)
    np.testing.assert_allclose(y, [[0.05, 0.5], [0.5, 0.95]], atol=1e-15)
    assert "clamping 2" in caplog.text


@settings(max_examples=40)
@given(arrays(np.float64, (20, 3), elements=st.floats(-1e3, 1e3)), st.booleans())
def test_round_trip(data, use_pca):
    if np.any(data.std(0) < 1e-3 * (1 + np.abs(data).max())):
        return
    pre = fit_preprocessor(data, use_pca=use_pca)
    if pre.dim != 3:
        return
    back = pre.invert(pre.apply(data))
    scale = 1 + np.abs(data).max()
    assert np.max(np.abs(back - data)) < 1e-10 * scale
    y = pre.apply(data)
    np.testing.assert_allclose(pre.apply(pre.invert(y)), y, atol=1e-10)
