"""Normalised densities, ancestral sampling and entropy characterisation.

Densities are always computed through the exact decoder inverse; the encoder
plays no part in evaluation. A point whose preimage leaves the unit cube
(or whose inversion leaves a layer's range) has zero density and is reported
as ``-inf``.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.linalg import lu_solve

from .beta import BetaParams, beta_entropy
from .network import Decoder, Encoder, encoder_forward, inverse_with_mask, log_det_jacobian
from .preprocess import Preprocessor
from .special import beta_sample, log_beta, regularized_incomplete_beta

__all__ = [
    "ModelBundle",
    "DensityResult",
    "evaluate_density",
    "corrupted_density",
    "log_density",
    "log_density_decoder_grad",
    "sample",
    "beta_entropy",
    "EntropyReport",
    "entropy_report",
    "bernoulli_check",
]


@dataclass
class ModelBundle:
    encoder: Encoder
    decoder: Decoder
    marginal: BetaParams
    preprocessor: Preprocessor

    def __post_init__(self):
        if self.encoder.dim != self.decoder.dim:
            raise ValueError("encoder output width must equal decoder dimension")
        if self.preprocessor.dim != self.decoder.dim:
            raise ValueError("preprocessor output dimension must equal decoder dimension")

    @property
    def dim(self):
        return self.decoder.dim


@dataclass
class DensityResult:
    log_density: np.ndarray
    out_of_support: np.ndarray
    latents: np.ndarray


def _beta_logpdf_rows(x, marginal):
    a, b = marginal.alpha, marginal.beta
    return ((a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x)).sum(axis=1) - x.shape[1] * log_beta(a, b)


def _latent_log_density(dec, marginal, y):
    """log density of preprocessed points; returns (values, support mask, x, hidden)."""
    x, valid, hidden = inverse_with_mask(dec, y)
    inside = valid & np.all((x > 0.0) & (x < 1.0), axis=1)
    xs = np.where(inside[:, None], x, 0.5)
    lp = _beta_logpdf_rows(xs, marginal)
    log_det = np.zeros(len(xs))
    for m, layer in enumerate(dec.layers):
        h = np.where(inside[:, None], hidden[m], 0.5)
        log_det += np.sum(np.log(h) + np.log1p(-h), axis=1) + layer.log_abs_det(f"decoder layer {m}")
    values = np.where(inside, lp - log_det, -np.inf)
    return values, inside, x, hidden


def evaluate_density(model, points, preprocessed=False, clip=True):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if preprocessed:
        y = pts
        offset = 0.0
    else:
        y = model.preprocessor.apply(pts, clip=clip)
        offset = model.preprocessor.log_det()
    values, inside, x, _ = _latent_log_density(model.decoder, model.marginal, y)
    return DensityResult(values + offset, ~inside, x)


def corrupted_density(model, points, fraction, rng):
    """Density after masking ``ceil(fraction * K)`` preprocessed coordinates per row.

    Points are mapped into the unit cube first; the chosen coordinates are set
    to zero and then clamped to the preprocessor margin, the same rule any
    out-of-range coordinate gets. Masking in the K-dimensional model space
    (rather than in the original coordinates) keeps the corruption visible
    after a PCA projection, which would otherwise average it away.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    pre = model.preprocessor
    y = pre.apply(np.atleast_2d(np.asarray(points, dtype=float)), clip=True)
    n, k = y.shape
    count = math.ceil(fraction * k)
    if count:
        y = y.copy()
        for i in range(n):
            y[i, rng.choice(k, size=count, replace=False)] = pre.margin
    values, inside, x, _ = _latent_log_density(model.decoder, model.marginal, y)
    return DensityResult(values + pre.log_det(), ~inside, x)


def log_density(model, points, preprocessed=False, clip=True):
    """Log density of observed points (original coordinates unless ``preprocessed``).

    Uses the change of variables with the reciprocal decoder Jacobian plus the
    preprocessor's constant log-determinant. Out-of-support points give ``-inf``.
    """
    single = np.ndim(points) == 1
    values = evaluate_density(model, points, preprocessed, clip).log_density
    return float(values[0]) if single else values


def log_density_decoder_grad(dec, marginal, y, point_weights):
    """Gradient of ``sum_i w_i log p(y_i)`` w.r.t. every decoder parameter.

    ``y`` are preprocessed points; out-of-support points contribute nothing.
    Returns ``(values, inside, [(dW, db), ...])``.
    """
    values, inside, x, hidden = _latent_log_density(dec, marginal, y)
    w = np.where(inside, point_weights, 0.0)[:, None]
    a, b = marginal.alpha, marginal.beta
    xs = np.where(inside[:, None], x, 0.5)
    g = w * ((a - 1.0) / xs - (b - 1.0) / (1.0 - xs))
    grads = [None] * dec.depth
    total_w = float(w.sum())
    for m, layer in enumerate(dec.layers):
        h_in = xs if m == 0 else np.where(inside[:, None], hidden[m - 1], 0.5)
        h_out = np.where(inside[:, None], hidden[m], 0.5)
        # v = W^{-T} g for every row
        lu, piv, _ = layer.lu(f"decoder layer {m}")
        v = lu_solve((lu, piv), g.T, trans=1, check_finite=False).T
        inv_t = lu_solve((lu, piv), np.eye(layer.n_in), trans=1, check_finite=False)
        dW = -v.T @ h_in - total_w * inv_t
        db = -v.sum(axis=0)
        grads[m] = (dW, db)
        hv = h_out * (1.0 - h_out)
        g = v / hv - w * (1.0 - 2.0 * h_out) / hv
    return values, inside, grads


def sample(model, n, rng=None, original=True):
    """Ancestral samples: independent Beta latents pushed through the decoder."""
    if rng is None:
        rng = np.random.default_rng()
    k = model.dim
    x = beta_sample(model.marginal.alpha, model.marginal.beta, size=(n, k), rng=rng)
    y = model.decoder(x)
    if not original:
        return y
    return model.preprocessor.invert(y)


@dataclass
class EntropyReport:
    marginal_entropy_sum: float
    expected_log_det: float
    observed_entropy_upper_bound: float
    original_entropy_upper_bound: float


def entropy_report(model, data):
    """Upper bound on the observed-space entropy from its two tractable parts.

    ``data`` is preprocessed. The marginal term is ``K * H(marginal)``; the
    log-det term is the sample mean over encoded data. Dropping the
    (nonnegative) mutual information makes their sum an upper bound.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    marginal_sum = model.dim * beta_entropy(model.marginal)
    latents = encoder_forward(model.encoder, data)
    expected = float(np.mean(log_det_jacobian(model.decoder, latents)))
    upper = marginal_sum + expected
    return EntropyReport(marginal_sum, expected, upper, upper - model.preprocessor.log_det())


def bernoulli_check(latents, marginal):
    """Compare rounded latents against the Bernoulli implied by ``marginal``.

    Returns ``(empirical, expected, p)``: the mean over examples of the summed
    Bernoulli(p) log-probabilities of the rounded latents, and ``-K H(Bern(p))``
    with ``p = P(x > 1/2)`` under the marginal.
    """
    latents = np.atleast_2d(np.asarray(latents, dtype=float))
    k = latents.shape[1]
    p = 1.0 - regularized_incomplete_beta(0.5, marginal.alpha, marginal.beta)
    bits = np.ceil(latents - 0.5)
    empirical = float(np.mean(np.sum(bits * math.log(p) + (1.0 - bits) * math.log1p(-p), axis=1)))
    h = -(p * math.log(p) + (1.0 - p) * math.log1p(-p))
    return empirical, -k * h, p
