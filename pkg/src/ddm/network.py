"""Sigmoid layer stacks: the bijective decoder and the thresholded encoder.

Points are stored as rows, so a layer maps ``h -> sigmoid(h @ W.T + b)``.
Decoder layer 0 acts on the representation side; the last decoder layer
produces observed-space points.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .special import DomainError

__all__ = [
    "InversionError",
    "Layer",
    "Decoder",
    "Encoder",
    "sigmoid",
    "logit",
    "log_sigmoid_prime",
    "decoder_forward",
    "decoder_inverse",
    "inverse_with_mask",
    "encoder_forward",
    "log_det_jacobian",
    "condition_penalty",
    "LOGIT_CLAMP",
    "SINGULAR_FLOOR",
]

LOGIT_CLAMP = 1e-12
SINGULAR_FLOOR = 1e-12


class InversionError(ArithmeticError):
    """A decoder layer is numerically singular."""


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.exp(-np.logaddexp(0.0, -z))
    return float(out) if out.ndim == 0 else out


def logit(y):
    y = np.asarray(y, dtype=float)
    if np.any((y <= 0.0) | (y >= 1.0)) or not np.all(np.isfinite(y)):
        raise DomainError("logit: argument must lie in the open interval (0, 1)")
    out = np.log(y) - np.log1p(-y)
    return float(out) if out.ndim == 0 else out


def log_sigmoid_prime(z):
    """ln(sigmoid(z) * (1 - sigmoid(z))) without cancellation."""
    a = np.abs(z)
    return -a - 2.0 * np.log1p(np.exp(-a))


@dataclass
class Layer:
    weights: np.ndarray
    bias: np.ndarray
    _lu: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=float, ndmin=2)
        self.bias = np.array(self.bias, dtype=float, ndmin=1)
        if self.weights.shape[0] != self.bias.shape[0]:
            raise ValueError(
                f"weights {self.weights.shape} and bias {self.bias.shape} disagree"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("layer parameters must be finite")

    @property
    def n_in(self):
        return self.weights.shape[1]

    @property
    def n_out(self):
        return self.weights.shape[0]

    def preactivation(self, h):
        return h @ self.weights.T + self.bias

    def __call__(self, h):
        return sigmoid(self.preactivation(h))

    def lu(self, name="layer"):
        """Cached LU factorisation; raises ``InversionError`` when singular."""
        if self._lu is None:
            if self.n_in != self.n_out:
                raise InversionError(f"{name} is not square")
            lu, piv = lu_factor(self.weights, check_finite=False)
            diag = np.abs(np.diag(lu))
            scale = max(np.abs(self.weights).max(), 1e-300)
            if diag.min() <= 1e-14 * scale:
                raise InversionError(f"{name} is numerically singular")
            self._lu = (lu, piv, float(np.sum(np.log(diag))))
        return self._lu

    def log_abs_det(self, name="layer"):
        return self.lu(name)[2]

    def solve(self, rhs, name="layer"):
        """Solve ``W h = rhs`` for each row of ``rhs``."""
        lu, piv, _ = self.lu(name)
        return lu_solve((lu, piv), np.asarray(rhs).T, check_finite=False).T


@dataclass
class Decoder:
    layers: list

    def __post_init__(self):
        if not self.layers:
            raise ValueError("decoder needs at least one layer")
        k = self.layers[0].n_in
        for m, layer in enumerate(self.layers):
            if layer.weights.shape != (k, k):
                raise ValueError(f"decoder layer {m} has shape {layer.weights.shape}, expected {(k, k)}")

    @property
    def dim(self):
        return self.layers[0].n_in

    @property
    def depth(self):
        return len(self.layers)

    def __call__(self, x):
        return decoder_forward(self, x)


@dataclass
class Encoder:
    layers: list
    threshold: float = 0.01

    def __post_init__(self):
        if not self.layers:
            raise ValueError("encoder needs at least one layer")
        for j in range(1, len(self.layers)):
            if self.layers[j].n_in != self.layers[j - 1].n_out:
                raise ValueError(f"encoder layer {j} input width does not match layer {j - 1}")
        if not 0.0 <= self.threshold < 0.5:
            raise ValueError(f"threshold must lie in [0, 0.5), got {self.threshold!r}")

    @property
    def n_in(self):
        return self.layers[0].n_in

    @property
    def dim(self):
        return self.layers[-1].n_out

    @property
    def widths(self):
        return [layer.n_out for layer in self.layers]

    def __call__(self, y):
        return encoder_forward(self, y)


def _check_width(arr, width, what):
    if arr.shape[-1] != width:
        raise ValueError(f"{what}: expected trailing dimension {width}, got {arr.shape[-1]}")


def decoder_forward(dec, x):
    x = np.asarray(x, dtype=float)
    _check_width(x, dec.dim, "decoder_forward")
    h = x
    for layer in dec.layers:
        h = layer(h)
    return h


def inverse_with_mask(dec, y):
    """Invert a batch, flagging points that leave the decoder's image.

    Returns ``(x, valid, hidden)`` where ``hidden[m]`` is the output of decoder
    layer ``m`` (``hidden[-1]`` is ``y`` itself) and invalid rows are NaN.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    _check_width(y, dec.dim, "decoder_inverse")
    valid = np.all((y > 0.0) & (y < 1.0), axis=1)
    hidden = [None] * dec.depth
    h = np.where(valid[:, None], y, 0.5)
    for m in range(dec.depth - 1, -1, -1):
        hidden[m] = np.where(valid[:, None], h, np.nan)
        layer = dec.layers[m]
        z = np.log(h) - np.log1p(-h)
        h = layer.solve(z - layer.bias, name=f"decoder layer {m}")
        if m > 0:
            inside = np.all((h > 0.0) & (h < 1.0), axis=1)
            valid &= inside
            h = np.where(valid[:, None], h, 0.5)
    x = np.where(valid[:, None], h, np.nan)
    return x, valid, hidden


def decoder_inverse(dec, y):
    """Analytic inverse of the decoder, one linear solve per layer."""
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    if np.any((y <= 0.0) | (y >= 1.0)):
        raise DomainError("decoder_inverse: y must lie in the open unit cube")
    x, valid, _ = inverse_with_mask(dec, y)
    if not np.all(valid):
        raise DomainError(
            f"decoder_inverse: {int((~valid).sum())} point(s) fall outside the decoder's image"
        )
    return x[0] if single else x


def encoder_forward(enc, y, return_cache=False):
    """Encode ``y``; outputs below the threshold are set to exactly zero."""
    y = np.asarray(y, dtype=float)
    _check_width(y, enc.n_in, "encoder_forward")
    h = y
    outputs = []
    for layer in enc.layers:
        h = layer(h)
        outputs.append(h)
    if enc.threshold > 0.0:
        latent = np.where(h < enc.threshold, 0.0, h)
    else:
        latent = h
    if return_cache:
        return latent, outputs
    return latent


def log_det_jacobian(dec, x):
    """ln|det df/dx| of the decoder at ``x`` (scalar for a vector, array for rows)."""
    x = np.asarray(x, dtype=float)
    _check_width(x, dec.dim, "log_det_jacobian")
    total = np.zeros(x.shape[:-1])
    h = x
    for m, layer in enumerate(dec.layers):
        z = layer.preactivation(h)
        total = total + log_sigmoid_prime(z).sum(axis=-1) + layer.log_abs_det(f"decoder layer {m}")
        h = sigmoid(z)
    return float(total) if total.ndim == 0 else total


def condition_penalty(dec, with_grad=False):
    """Mean over layers of ln(s_max / s_min) of each weight matrix.

    With ``with_grad`` also returns one gradient matrix per layer, built from
    the rank-one derivatives of the extreme singular values. A smallest
    singular value under ``SINGULAR_FLOOR`` is floored, giving a large but
    finite penalty.
    """
    m = dec.depth
    total = 0.0
    grads = []
    for layer in dec.layers:
        u, s, vt = np.linalg.svd(layer.weights)
        s_max = s[0]
        s_min = max(s[-1], SINGULAR_FLOOR)
        total += np.log(s_max / s_min)
        if with_grad:
            g = np.outer(u[:, 0], vt[0]) / s_max
            if s[-1] >= SINGULAR_FLOOR:
                g = g - np.outer(u[:, -1], vt[-1]) / s_min
            grads.append(g / m)
    value = float(total / m)
    if with_grad:
        return value, grads
    return value
