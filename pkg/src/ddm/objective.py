"""Training objective: divergence, invertibility and reconstruction penalties.

Gradients are accumulated by hand in reverse mode. The encoder threshold and
the sample clamp used by the moment fits are both treated as the identity on
the backward pass (straight-through), so divergence gradients keep flowing
into thresholded units.
"""

from dataclasses import dataclass, field

import numpy as np

from .beta import (
    FitError,
    SHAPE_MAX,
    SHAPE_MIN,
    degenerate_mask,
    moment_match_columns,
    sym_kl_array,
    sym_kl_grad_array,
)
from .network import condition_penalty, encoder_forward

__all__ = [
    "PenaltyWeights",
    "ObjectiveReport",
    "Gradients",
    "divergence_penalty",
    "divergence_penalty_grad",
    "reconstruction_loss",
    "total_objective",
    "objective_gradients",
    "evaluate",
]


@dataclass(frozen=True)
class PenaltyWeights:
    mu_D: float = 1.0
    mu_I: float = 0.1
    mu_R: float = 1.0

    def __post_init__(self):
        vals = (self.mu_D, self.mu_I, self.mu_R)
        if not all(np.isfinite(v) and v >= 0 for v in vals):
            raise ValueError(f"penalty weights must be finite and nonnegative: {vals}")
        if not any(v > 0 for v in vals):
            raise ValueError("at least one penalty weight must be positive")

    def as_tuple(self):
        return (self.mu_D, self.mu_I, self.mu_R)


@dataclass
class ObjectiveReport:
    divergence: float
    invertibility: float
    reconstruction: float
    total: float
    per_dimension_divergences: np.ndarray
    per_example_divergence_mean: float
    extra: float = 0.0


@dataclass
class Gradients:
    """Per-layer ``(dW, db)`` pairs for the encoder and decoder stacks."""

    encoder: list
    decoder: list

    @classmethod
    def zeros_like(cls, enc, dec):
        return cls(
            [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in enc.layers],
            [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in dec.layers],
        )

    def _map2(self, other, fn):
        return Gradients(
            [(fn(a[0], b[0]), fn(a[1], b[1])) for a, b in zip(self.encoder, other.encoder)],
            [(fn(a[0], b[0]), fn(a[1], b[1])) for a, b in zip(self.decoder, other.decoder)],
        )

    def __add__(self, other):
        return self._map2(other, np.add)

    def scaled(self, c):
        return Gradients(
            [(c * w, c * b) for w, b in self.encoder],
            [(c * w, c * b) for w, b in self.decoder],
        )

    def blocks(self):
        for j, g in enumerate(self.encoder):
            yield ("encoder", j), g
        for m, g in enumerate(self.decoder):
            yield ("decoder", m), g

    def block(self, key):
        stack, idx = key
        return (self.encoder if stack == "encoder" else self.decoder)[idx]

    def norm(self):
        return float(np.sqrt(sum(np.sum(w * w) + np.sum(b * b) for _, (w, b) in self.blocks())))


def _fit_and_grad(samples, target, need_grad):
    """Moment-fit each column of ``samples`` against ``target``.

    Returns per-column sym-KL values, the gradient with respect to the samples
    (or None), and the boolean mask of degenerate columns.
    """
    n = samples.shape[0]
    a_hat, b_hat, mu, var, common = moment_match_columns(samples)
    bad = degenerate_mask(mu, var)
    vals = sym_kl_array(a_hat, b_hat, target.alpha, target.beta)
    if not need_grad:
        return vals, None, bad
    ga, gb = sym_kl_grad_array(a_hat, b_hat, target.alpha, target.beta)
    safe_var = np.where(bad, 1.0, var)
    safe_common = np.where(bad, 0.0, common)
    raw_a = mu * safe_common
    raw_b = (1.0 - mu) * safe_common
    live_a = (~bad) & (raw_a > SHAPE_MIN) & (raw_a < SHAPE_MAX)
    live_b = (~bad) & (raw_b > SHAPE_MIN) & (raw_b < SHAPE_MAX)
    one_m2 = 1.0 - 2.0 * mu
    da_dmu = safe_common + mu * one_m2 / safe_var
    db_dmu = -safe_common + (1.0 - mu) * one_m2 / safe_var
    da_dvar = -mu * mu * (1.0 - mu) / safe_var**2
    db_dvar = -mu * (1.0 - mu) ** 2 / safe_var**2
    ga = np.where(live_a, ga, 0.0)
    gb = np.where(live_b, gb, 0.0)
    d_mu = ga * da_dmu + gb * db_dmu
    d_var = ga * da_dvar + gb * db_dvar
    clamped = np.clip(samples, 1e-6, 1.0 - 1e-6)
    grad = d_mu / n + d_var * 2.0 * (clamped - mu) / n
    grad = np.where(bad, 0.0, grad)
    return vals, grad, bad


def _divergence(latents, target, per_example, strict, need_grad):
    latents = np.asarray(latents, dtype=float)
    n, k = latents.shape
    if n < 2:
        raise FitError("divergence penalty needs at least two examples")
    if per_example and k < 2:
        raise FitError("per-example divergence needs at least two latent dimensions")
    dim_vals, dim_grad, dim_bad = _fit_and_grad(latents, target, need_grad)
    if strict and np.any(dim_bad):
        raise FitError("degenerate latent marginal", f"dimension {int(np.argmax(dim_bad))}")
    value = float(dim_vals.mean())
    grad = dim_grad / k if need_grad else None
    ex_mean = 0.0
    if per_example:
        ex_vals, ex_grad, _ = _fit_and_grad(latents.T, target, need_grad)
        ex_mean = float(ex_vals.mean())
        value += ex_mean
        if need_grad:
            grad = grad + ex_grad.T / n
    return value, dim_vals, ex_mean, grad


def divergence_penalty(latents, target, per_example=True, strict=True):
    """Mean per-dimension plus mean per-example symmetrised KL to ``target``.

    Returns ``(value, per_dimension, per_example_mean)``. With ``strict`` a
    degenerate marginal fit raises ``FitError``; degenerate per-example fits
    always contribute the sym-KL of their clamped shapes.
    """
    value, dims, ex_mean, _ = _divergence(latents, target, per_example, strict, False)
    return value, dims, ex_mean


def divergence_penalty_grad(latents, target, per_example=True, strict=True):
    value, _, _, grad = _divergence(latents, target, per_example, strict, True)
    return value, grad


def reconstruction_loss(batch, enc, dec, noisy=None):
    """Mean squared round-trip error ``f(g(noisy)) - batch`` in observed space."""
    batch = np.asarray(batch, dtype=float)
    inputs = batch if noisy is None else noisy
    recon = dec(enc(inputs))
    return float(np.mean(np.sum((recon - batch) ** 2, axis=1)))


def _backprop_stack(layers, inputs, outputs, grad_out):
    """Reverse pass through sigmoid layers; returns (layer grads, grad wrt input)."""
    grads = [None] * len(layers)
    g = grad_out
    for i in range(len(layers) - 1, -1, -1):
        h = outputs[i]
        dz = g * h * (1.0 - h)
        h_in = inputs if i == 0 else outputs[i - 1]
        grads[i] = (dz.T @ h_in, dz.sum(axis=0))
        g = dz @ layers[i].weights
    return grads, g


def _zeros(layers):
    return [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in layers]


@dataclass
class _Evaluation:
    report: ObjectiveReport
    grad_D: Gradients = None
    grad_I: Gradients = None
    grad_R: Gradients = None
    grad_extra: Gradients = None
    total_grad: Gradients = None
    extras: dict = field(default_factory=dict)


def evaluate(batch, enc, dec, target, weights, noisy=None, per_example=True,
             strict=True, need_grad=False, extra_terms=()):
    """Evaluate the objective and, optionally, per-term gradients.

    ``noisy`` (if given) replaces the clean batch as encoder input on the
    reconstruction path only. ``extra_terms`` are objects exposing
    ``value_and_grad(enc, dec, need_grad) -> (value, Gradients or None)``
    whose values are added to the total unweighted.
    """
    batch = np.asarray(batch, dtype=float)
    if batch.ndim != 2:
        raise ValueError("batch must be a 2-D array of rows")
    if batch.shape[1] != enc.n_in or dec.dim != enc.dim or dec.dim != batch.shape[1]:
        raise ValueError(
            f"dimension mismatch: batch {batch.shape[1]}, encoder {enc.n_in}->{enc.dim}, "
            f"decoder {dec.dim}"
        )
    n = batch.shape[0]

    latent_c, outs_c = encoder_forward(enc, batch, return_cache=True)
    D, dims, ex_mean, gD_lat = _divergence(latent_c, target, per_example, strict, need_grad)

    inputs_r = batch if noisy is None else np.asarray(noisy, dtype=float)
    if noisy is None:
        latent_r, outs_r = latent_c, outs_c
    else:
        latent_r, outs_r = encoder_forward(enc, inputs_r, return_cache=True)
    dec_outs = []
    h = latent_r
    for layer in dec.layers:
        h = layer(h)
        dec_outs.append(h)
    resid = h - batch
    R = float(np.mean(np.sum(resid * resid, axis=1)))

    if need_grad:
        I, gI_dec = condition_penalty(dec, with_grad=True)
    else:
        I = condition_penalty(dec)

    extra_val = 0.0
    extra_grads = []
    for term in extra_terms:
        v, g = term.value_and_grad(enc, dec, need_grad)
        extra_val += v
        extra_grads.append(g)

    total = weights.mu_D * D + weights.mu_I * I + weights.mu_R * R + extra_val
    report = ObjectiveReport(D, I, R, float(total), dims, ex_mean, extra_val)
    ev = _Evaluation(report)
    if not need_grad:
        return ev

    enc_D, _ = _backprop_stack(enc.layers, batch, outs_c, gD_lat)
    ev.grad_D = Gradients(enc_D, _zeros(dec.layers))
    ev.grad_I = Gradients(_zeros(enc.layers), [(g, np.zeros_like(l.bias)) for g, l in zip(gI_dec, dec.layers)])
    dec_R, g_lat = _backprop_stack(dec.layers, latent_r, dec_outs, 2.0 * resid / n)
    enc_R, _ = _backprop_stack(enc.layers, inputs_r, outs_r, g_lat)
    ev.grad_R = Gradients(enc_R, dec_R)
    total_grad = (
        ev.grad_D.scaled(weights.mu_D)
        + ev.grad_I.scaled(weights.mu_I)
        + ev.grad_R.scaled(weights.mu_R)
    )
    if extra_grads:
        ge = extra_grads[0]
        for g in extra_grads[1:]:
            ge = ge + g
        ev.grad_extra = ge
        total_grad = total_grad + ge
    ev.total_grad = total_grad
    return ev


def total_objective(batch, enc, dec, target, weights, noisy=None, per_example=True,
                    strict=True, extra_terms=()):
    return evaluate(batch, enc, dec, target, weights, noisy=noisy, per_example=per_example,
                    strict=strict, extra_terms=extra_terms).report


def objective_gradients(batch, enc, dec, target, weights, noisy=None, per_example=True,
                        strict=True, extra_terms=()):
    """Return ``(decoder grads, encoder grads)`` of the weighted total objective."""
    ev = evaluate(batch, enc, dec, target, weights, noisy=noisy, per_example=per_example,
                  strict=strict, need_grad=True, extra_terms=extra_terms)
    return ev.total_grad.decoder, ev.total_grad.encoder
