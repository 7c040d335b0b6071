import math

import numpy as np
import pytest
from scipy import stats

from ddm.beta import BetaParams, beta_entropy
from ddm.density import (
    ModelBundle,
    bernoulli_check,
    corrupted_density,
    entropy_report,
    evaluate_density,
    log_density,
    log_density_decoder_grad,
    sample,
)
from ddm.network import Decoder, Encoder, Layer, decoder_inverse, log_det_jacobian, sigmoid
from ddm.preprocess import Preprocessor, fit_preprocessor
from ddm.synthetic import sigmoid_warped_2d
from ddm.trainer import TrainConfig, train


def _k1_model(marginal=BetaParams(1.0, 1.0)):
    dec = Decoder([Layer(np.array([[1.0]]), np.array([0.0]))])
    enc = Encoder([Layer(np.array([[1.0]]), np.array([0.0]))])
    return ModelBundle(enc, dec, marginal, Preprocessor.identity(1))


@pytest.fixture(scope="module")
def trained():
    rng = np.random.default_rng(0)
    data = sigmoid_warped_2d(1000, rng)
    cfg = TrainConfig(epochs=60, per_example_divergence=False, window_size=256,
                      initial_target=(4.0, 10.0), final_target=(2.0, 5.0), interpolation_steps=4,
                      noise_rate=0.0, weight_ratios=(5.0, 0.1, 1.0))
    pre = fit_preprocessor(data)
    state = train(cfg, pre.apply(data))
    model = ModelBundle(state.encoder, state.decoder, BetaParams(*cfg.final_target), pre)
    test = sigmoid_warped_2d(400, np.random.default_rng(1))
    return model, data, test


def test_k1_point_value(oracle):
    y = sigmoid(0.5)
    got = log_density(_k1_model(), np.array([[y]]), preprocessed=True)[0]
    assert got == pytest.approx(oracle["density_k1_at_sigmoid_half"], abs=1e-12)
    assert got == pytest.approx(1.4482, abs=1e-4)


def test_k1_mass(oracle):
    grid = np.linspace(sigmoid(0.0), sigmoid(1.0), 20001)[1:-1]
    dens = np.exp(log_density(_k1_model(), grid[:, None], preprocessed=True))
    mass = np.trapezoid(dens, grid)
    assert mass == pytest.approx(1.0, abs=1e-3)
    assert oracle["density_k1_mass"] == pytest.approx(1.0, abs=1e-9)


def test_out_of_support_is_reported_not_raised():
    res = evaluate_density(_k1_model(), np.array([[0.3], [0.6], [0.9]]), preprocessed=True)
    assert res.out_of_support.tolist() == [True, False, True]
    assert np.isneginf(res.log_density[[0, 2]]).all()
    assert np.isfinite(res.log_density[1])


def test_matches_change_of_variables(rng):
    k = 3
    dec = Decoder([Layer(np.eye(k) + 0.3 * rng.standard_normal((k, k)), 0.2 * rng.standard_normal(k)) for _ in range(2)])
    enc = Encoder([Layer(np.eye(k), np.zeros(k))])
    marg = BetaParams(0.8, 2.0)
    model = ModelBundle(enc, dec, marg, Preprocessor.identity(k))
    x = rng.uniform(0.05, 0.95, size=(50, k))
    y = dec(x)
    want = stats.beta(marg.alpha, marg.beta).logpdf(x).sum(1) - log_det_jacobian(dec, x)
    got = log_density(model, y, preprocessed=True)
    np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(decoder_inverse(dec, y), x, atol=1e-10)


def test_original_coordinates_add_preprocessor_log_det(trained):
    model, data, _ = trained
    y = model.preprocessor.apply(data, clip=True)
    a = log_density(model, y, preprocessed=True)
    b = log_density(model, data)
    np.testing.assert_array_equal(np.isfinite(a), np.isfinite(b))
    ok = np.isfinite(a)
    np.testing.assert_allclose(b[ok] - a[ok], model.preprocessor.log_det(), rtol=0, atol=1e-12)


def test_continuity(trained):
    model, data, _ = trained
    y = model.preprocessor.apply(data[:50], clip=True)
    a = log_density(model, y, preprocessed=True)
    b = log_density(model, y + 1e-7, preprocessed=True)
    ok = np.isfinite(a) & np.isfinite(b)
    assert ok.mean() > 0.8
    assert np.max(np.abs(a[ok] - b[ok])) < 1e-3


def test_decoder_gradient_matches_finite_differences(rng):
    k = 2
    dec = Decoder([Layer(np.eye(k) + 0.2 * rng.standard_normal((k, k)), 0.1 * rng.standard_normal(k)) for _ in range(2)])
    marg = BetaParams(1.5, 3.0)
    y = dec(rng.uniform(0.1, 0.9, size=(20, k)))
    w = rng.random(20)
    _, inside, grads = log_density_decoder_grad(dec, marg, y, w)
    assert inside.all()
    params = [(layer.weights.copy(), layer.bias.copy()) for layer in dec.layers]

    def f():
        # fresh layers each call: Layer caches its LU factorisation
        d = Decoder([Layer(W.copy(), b.copy()) for W, b in params])
        model = ModelBundle(Encoder([Layer(np.eye(k), np.zeros(k))]), d, marg, Preprocessor.identity(k))
        return float(np.dot(w, log_density(model, y, preprocessed=True)))

    h = 1e-6
    for m in range(len(params)):
        for arr, g in ((params[m][0], grads[m][0]), (params[m][1], grads[m][1])):
            flat, gflat = arr.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + h
                up = f()
                flat[i] = old - h
                down = f()
                flat[i] = old
                fd = (up - down) / (2 * h)
                assert gflat[i] == pytest.approx(fd, rel=1e-5, abs=1e-6)


def test_sampling_is_seeded(trained):
    model = trained[0]
    a = sample(model, 200, np.random.default_rng(5))
    b = sample(model, 200, np.random.default_rng(5))
    assert a.tobytes() == b.tobytes()


def test_sample_latents_follow_marginal(trained):
    model = trained[0]
    y = sample(model, 3000, np.random.default_rng(6), original=False)
    x = decoder_inverse(model.decoder, y)
    for j in range(x.shape[1]):
        assert stats.kstest(x[:, j], stats.beta(model.marginal.alpha, model.marginal.beta).cdf).pvalue > 1e-3


def test_samples_are_near_data_and_likely(trained):
    model, data, _ = trained
    rng = np.random.default_rng(8)
    s = sample(model, 400, rng)
    lo, hi = data.min(0), data.max(0)
    u = rng.uniform(lo, hi, size=(400, 2))

    def nn(points):
        d = np.linalg.norm(points[:, None, :] - data[None, :, :], axis=2)
        return d.min(1).mean()

    assert nn(s) < nn(u)
    ls, lu = log_density(model, s), log_density(model, u)
    floor = min(ls[np.isfinite(ls)].min(), lu[np.isfinite(lu)].min())
    assert np.mean(np.maximum(ls, floor)) >= np.mean(np.maximum(lu, floor))


def test_corruption(trained):
    model, _, test = trained
    clean = evaluate_density(model, test)
    same = corrupted_density(model, test, 0.0, np.random.default_rng(0))
    assert same.log_density.tobytes() == clean.log_density.tobytes()
    bad = corrupted_density(model, test, 0.1, np.random.default_rng(0)).log_density
    good = clean.log_density
    floor = min(good[np.isfinite(good)].min(), bad[np.isfinite(bad)].min())
    assert np.mean(np.maximum(bad, floor)) < np.mean(np.maximum(good, floor))
    with pytest.raises(ValueError):
        corrupted_density(model, test, 1.5, np.random.default_rng(0))


def test_entropy_report(trained):
    model, data, _ = trained
    y = model.preprocessor.apply(data, clip=True)
    rep = entropy_report(model, y)
    assert rep.marginal_entropy_sum == pytest.approx(2 * beta_entropy(model.marginal), abs=1e-14)
    assert rep.observed_entropy_upper_bound == pytest.approx(rep.marginal_entropy_sum + rep.expected_log_det, abs=1e-12)
    assert rep.original_entropy_upper_bound == pytest.approx(
        rep.observed_entropy_upper_bound - model.preprocessor.log_det(), abs=1e-12)


def test_entropy_report_uniform_marginal():
    model = _k1_model()
    y = sigmoid(np.linspace(0.1, 0.9, 9))[:, None]
    rep = entropy_report(model, y)
    assert rep.marginal_entropy_sum == pytest.approx(0.0, abs=1e-14)
    s = sigmoid(sigmoid(y))  # encoder latent, then decoder output
    want = np.mean(np.log(s * (1 - s)))
    assert rep.observed_entropy_upper_bound == pytest.approx(want, abs=1e-12)


def test_bernoulli_check(oracle):
    rng = np.random.default_rng(3)
    marg = BetaParams(0.01, 0.4)
    from ddm.special import beta_sample

    x = beta_sample(marg.alpha, marg.beta, size=(20000, 10), rng=rng)
    empirical, expected, p = bernoulli_check(x, marg)
    assert p == pytest.approx(oracle["bernoulli_p"], rel=1e-9)
    assert expected == pytest.approx(-10 * oracle["bernoulli_entropy"], rel=1e-9)
    assert empirical == pytest.approx(expected, rel=0.05)
    assert math.isfinite(empirical)
