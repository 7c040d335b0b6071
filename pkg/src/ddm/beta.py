"""Beta fitting by moment matching, symmetrised KL, and the target schedule."""

from dataclasses import dataclass, replace
import math

import numpy as np

from .special import DomainError, digamma, log_beta, trigamma

SAMPLE_CLAMP = 1e-6
SHAPE_MIN = 1e-4
SHAPE_MAX = 1e6


class FitError(ValueError):
    """A moment-matched Beta fit is degenerate (zero or excessive variance)."""

    def __init__(self, message, location=None):
        super().__init__(message if location is None else f"{message} (at {location})")
        self.location = location


@dataclass(frozen=True)
class BetaParams:
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"Beta {name} must be positive and finite, got {v!r}")

    @property
    def mean(self):
        return self.alpha / (self.alpha + self.beta)

    @property
    def variance(self):
        s = self.alpha + self.beta
        return self.alpha * self.beta / (s * s * (s + 1.0))

    def as_tuple(self):
        return (self.alpha, self.beta)


@dataclass(frozen=True)
class MomentFit:
    mean: float
    variance: float
    count: int

    def __post_init__(self):
        if not 0.0 < self.mean < 1.0:
            raise FitError(f"mean {self.mean!r} outside (0, 1)")
        if not 0.0 < self.variance < self.mean * (1.0 - self.mean):
            raise FitError(
                f"variance {self.variance!r} not in (0, mean(1-mean)={self.mean * (1 - self.mean)!r})"
            )

    @classmethod
    def from_samples(cls, samples):
        x = np.clip(np.asarray(samples, dtype=float).ravel(), SAMPLE_CLAMP, 1.0 - SAMPLE_CLAMP)
        if x.size < 2:
            raise FitError("need at least two samples for a moment fit")
        mu = float(x.mean())
        var = float(np.mean((x - mu) ** 2))
        return cls(mu, var, int(x.size))

    def params(self):
        common = self.mean * (1.0 - self.mean) / self.variance - 1.0
        a = min(max(self.mean * common, SHAPE_MIN), SHAPE_MAX)
        b = min(max((1.0 - self.mean) * common, SHAPE_MIN), SHAPE_MAX)
        return BetaParams(a, b)


def moment_match(samples, location=None):
    """Fit Beta shapes to ``samples`` by matching mean and (biased) variance."""
    try:
        return MomentFit.from_samples(samples).params()
    except FitError as err:
        if location is None:
            raise
        raise FitError(str(err), location) from None


def moment_match_columns(x, clamp=True):
    """Vectorised moment fit of every column of ``x``.

    Returns ``(alpha, beta, mean, var, common)`` arrays. Degenerate columns are
    not rejected here; their shapes end up at the clamp bounds and callers
    decide what to do with them via ``degenerate_mask``.
    """
    x = np.asarray(x, dtype=float)
    if clamp:
        x = np.clip(x, SAMPLE_CLAMP, 1.0 - SAMPLE_CLAMP)
    mu = x.mean(axis=0)
    var = np.mean((x - mu) ** 2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        common = mu * (1.0 - mu) / var - 1.0
    common = np.where(np.isnan(common), np.inf, common)
    with np.errstate(invalid="ignore"):
        a = np.clip(mu * common, SHAPE_MIN, SHAPE_MAX)
        b = np.clip((1.0 - mu) * common, SHAPE_MIN, SHAPE_MAX)
    return a, b, mu, var, common


def degenerate_mask(mu, var):
    return (var <= 0.0) | (var >= mu * (1.0 - mu))


def sym_kl(p, q):
    """Symmetrised KL between two Beta distributions in closed form."""
    return float(sym_kl_array(p.alpha, p.beta, q.alpha, q.beta))


def sym_kl_array(a_hat, b_hat, a, b):
    a_hat = np.asarray(a_hat, dtype=float)
    b_hat = np.asarray(b_hat, dtype=float)
    da = a_hat - a
    db = b_hat - b
    return (
        da * (digamma(a_hat) - digamma(a))
        + db * (digamma(b_hat) - digamma(b))
        - (da + db) * (digamma(a_hat + b_hat) - digamma(a + b))
    )


def sym_kl_grad(p, q):
    """Partials of ``sym_kl(p, q)`` with respect to ``p.alpha`` and ``p.beta``."""
    ga, gb = sym_kl_grad_array(p.alpha, p.beta, q.alpha, q.beta)
    return float(ga), float(gb)


def sym_kl_grad_array(a_hat, b_hat, a, b):
    a_hat = np.asarray(a_hat, dtype=float)
    b_hat = np.asarray(b_hat, dtype=float)
    s_hat = a_hat + b_hat
    ds = s_hat - (a + b)
    shared = digamma(s_hat) - digamma(a + b) + ds * trigamma(s_hat)
    ga = digamma(a_hat) - digamma(a) + (a_hat - a) * trigamma(a_hat) - shared
    gb = digamma(b_hat) - digamma(b) + (b_hat - b) * trigamma(b_hat) - shared
    return ga, gb


def beta_entropy(params):
    """Differential entropy of Beta(alpha, beta)."""
    a, b = params.alpha, params.beta
    return float(
        log_beta(a, b)
        - (a - 1.0) * digamma(a)
        - (b - 1.0) * digamma(b)
        + (a + b - 2.0) * digamma(a + b)
    )


@dataclass
class TargetSchedule:
    """Constant-mean sequence of Beta targets from an easy start to the final one.

    Step ``j`` of ``interpolation_steps`` interpolates alpha log-linearly between
    ``initial.alpha`` and ``final.alpha``; beta follows from the fixed mean.
    """

    initial: BetaParams
    final: BetaParams
    advance_tolerance: float = 0.1
    interpolation_steps: int = 12
    current_index: int = 0

    def __post_init__(self):
        if self.initial.alpha <= 1.0 or self.initial.beta <= 1.0:
            raise ValueError("initial target shapes must both exceed 1")
        if abs(self.initial.mean - self.final.mean) > 1e-12:
            raise ValueError(
                f"initial mean {self.initial.mean!r} != final mean {self.final.mean!r}"
            )
        if self.interpolation_steps < 1:
            raise ValueError("interpolation_steps must be positive")
        if not self.advance_tolerance > 0:
            raise ValueError("advance_tolerance must be positive")

    @property
    def mean(self):
        return self.final.mean

    def target_at(self, index):
        if index <= 0:
            return self.initial
        if index >= self.interpolation_steps:
            return self.final
        frac = index / self.interpolation_steps
        log_a = (1.0 - frac) * math.log(self.initial.alpha) + frac * math.log(self.final.alpha)
        alpha = math.exp(log_a)
        # mean = a / (a + b)  =>  b = a (1 - mean) / mean, written with the
        # final shapes so the ratio is exact to rounding
        beta = alpha * self.final.beta / self.final.alpha
        return BetaParams(alpha, beta)

    @property
    def current(self):
        return self.target_at(self.current_index)

    @property
    def exhausted(self):
        return self.current_index >= self.interpolation_steps

    def path(self):
        return [self.target_at(j) for j in range(self.interpolation_steps + 1)]

    def copy(self):
        return replace(self)


def schedule_next(schedule, fit_divergence):
    """Advance ``schedule`` by one step if the fit is close enough.

    Mutates ``schedule.current_index`` and returns the (possibly new) target.
    """
    if fit_divergence <= schedule.advance_tolerance and not schedule.exhausted:
        schedule.current_index += 1
    return schedule.current
