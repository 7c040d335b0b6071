"""Scalar and vectorised special functions for Beta densities.

Every function accepts either a Python float or a numpy array and returns
the same kind of object. Arguments outside the mathematical domain raise
``DomainError``; clamping is the caller's job.
"""

import math

import numpy as np

__all__ = [
    "DomainError",
    "log_gamma",
    "log_beta",
    "digamma",
    "trigamma",
    "beta_log_pdf",
    "beta_sample",
    "gamma_sample",
    "regularized_incomplete_beta",
]

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Stirling coefficients B_{2n} / (2n (2n-1)) for ln Gamma.
_LGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
)
# B_{2n} / (2n) for digamma.
_DIGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
# B_{2n} for trigamma.
_TRIGAMMA_SERIES = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)

_LGAMMA_SHIFT = 10.0
_PSI_SHIFT = 6.0


class DomainError(ValueError):
    """Raised when an argument lies outside a function's domain."""


def _as_array(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name}: non-finite argument")
    return arr


def _require_positive(arr, name):
    if np.any(arr <= 0):
        raise DomainError(f"{name}: argument must be > 0, got min {arr.min()!r}")


def _wrap(x, value):
    if np.ndim(x) == 0:
        return float(value)
    return value


def _shift_up(arr, threshold, term):
    """Recur ``arr`` upwards past ``threshold``; accumulate ``term(x)``."""
    z = np.array(arr, dtype=float, copy=True)
    acc = np.zeros_like(z)
    mask = z < threshold
    while np.any(mask):
        acc[mask] += term(z[mask])
        z[mask] += 1.0
        mask = z < threshold
    return z, acc


def log_gamma(x):
    """Natural log of the Gamma function for positive real arguments."""
    arr = _as_array(x, "log_gamma")
    _require_positive(arr, "log_gamma")
    z, acc = _shift_up(arr, _LGAMMA_SHIFT, np.log)
    inv = 1.0 / z
    inv2 = inv * inv
    series = np.zeros_like(z)
    for c in reversed(_LGAMMA_SERIES):
        series = series * inv2 + c
    value = (z - 0.5) * np.log(z) - z + _HALF_LOG_2PI + series * inv - acc
    return _wrap(x, value)


def log_beta(a, b):
    """ln B(a, b) = ln Gamma(a) + ln Gamma(b) - ln Gamma(a + b)."""
    return log_gamma(a) + log_gamma(b) - log_gamma(np.add(a, b))


def digamma(x):
    """psi(x): upward recurrence to x > 6, then the asymptotic expansion."""
    arr = _as_array(x, "digamma")
    _require_positive(arr, "digamma")
    z, acc = _shift_up(arr, _PSI_SHIFT, lambda v: 1.0 / v)
    inv2 = 1.0 / (z * z)
    series = np.zeros_like(z)
    for c in reversed(_DIGAMMA_SERIES):
        series = series * inv2 + c
    value = np.log(z) - 0.5 / z - series * inv2 - acc
    return _wrap(x, value)


def trigamma(x):
    """psi'(x), same shift-then-expand scheme as ``digamma``."""
    arr = _as_array(x, "trigamma")
    _require_positive(arr, "trigamma")
    z, acc = _shift_up(arr, _PSI_SHIFT, lambda v: 1.0 / (v * v))
    inv = 1.0 / z
    inv2 = inv * inv
    series = np.zeros_like(z)
    for c in reversed(_TRIGAMMA_SERIES):
        series = series * inv2 + c
    value = inv + 0.5 * inv2 + series * inv2 * inv + acc
    return _wrap(x, value)


def beta_log_pdf(x, alpha, beta):
    """ln q(x; alpha, beta) on the open unit interval."""
    xa = _as_array(x, "beta_log_pdf")
    if np.any((xa <= 0.0) | (xa >= 1.0)):
        raise DomainError("beta_log_pdf: x must lie in the open interval (0, 1)")
    a = _as_array(alpha, "beta_log_pdf alpha")
    b = _as_array(beta, "beta_log_pdf beta")
    _require_positive(a, "beta_log_pdf alpha")
    _require_positive(b, "beta_log_pdf beta")
    value = (a - 1.0) * np.log(xa) + (b - 1.0) * np.log1p(-xa) - log_beta(a, b)
    return _wrap(x, value)


def gamma_sample(shape, size, rng):
    """Log of Gamma(shape, 1) draws.

    Marsaglia-Tsang squeeze/rejection for shape >= 1; for shape < 1 a
    Gamma(shape + 1) draw is scaled by U**(1/shape). Logs are returned so
    the tiny values produced by very sparse shapes do not underflow.
    """
    if not (shape > 0 and math.isfinite(shape)):
        raise DomainError(f"gamma_sample: shape must be > 0, got {shape!r}")
    boost = shape < 1.0
    a = shape + 1.0 if boost else shape
    d = a - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    n = int(np.prod(size))
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(n - filled, 16)
        z = rng.standard_normal(m)
        u = rng.random(m)
        v = (1.0 + c * z) ** 3
        ok = v > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            logv = np.where(ok, np.log(np.where(ok, v, 1.0)), -np.inf)
            squeeze = u < 1.0 - 0.0331 * z**4
            full = np.log(u) < 0.5 * z * z + d - d * v + d * logv
        accept = ok & (squeeze | full)
        draws = np.log(d) + logv[accept]
        take = min(draws.size, n - filled)
        out[filled:filled + take] = draws[:take]
        filled += take
    if boost:
        u = rng.random(n)
        # log(U) / shape; U == 0 has probability ~2^-53, map it to -inf safely
        with np.errstate(divide="ignore"):
            out = out + np.log(u) / shape
    return out.reshape(size)


def beta_sample(alpha, beta, size=None, rng=None):
    """Draw from Beta(alpha, beta) as X / (X + Y) of two Gamma draws.

    Results are clipped into the open unit interval so downstream logit and
    log-density evaluations stay finite.
    """
    if rng is None:
        rng = np.random.default_rng()
    shape = () if size is None else size
    lx = gamma_sample(float(alpha), shape, rng)
    ly = gamma_sample(float(beta), shape, rng)
    # x / (x + y) = 1 / (1 + exp(ly - lx))
    with np.errstate(over="ignore", invalid="ignore"):
        out = 1.0 / (1.0 + np.exp(ly - lx))
    out = np.where(np.isnan(out), 0.5, out)
    out = np.clip(out, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
    if size is None:
        return float(out)
    return out


def _betacf(x, a, b, max_iter=10000, tol=1e-16):
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def _ibeta_scalar(x, a, b):
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = a * math.log(x) + b * math.log1p(-x) - log_beta(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(x, a, b) / a
    return 1.0 - math.exp(log_front) * _betacf(1.0 - x, b, a) / b


def regularized_incomplete_beta(x, alpha, beta):
    """I_x(alpha, beta), the Beta CDF, by continued fraction."""
    xa = _as_array(x, "regularized_incomplete_beta")
    if np.any((xa < 0.0) | (xa > 1.0)):
        raise DomainError("regularized_incomplete_beta: x must lie in [0, 1]")
    a = float(alpha)
    b = float(beta)
    if not (a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b)):
        raise DomainError("regularized_incomplete_beta: shapes must be positive and finite")
    if xa.ndim == 0:
        return _ibeta_scalar(float(xa), a, b)
    flat = np.array([_ibeta_scalar(float(v), a, b) for v in xa.ravel()])
    return flat.reshape(xa.shape)
