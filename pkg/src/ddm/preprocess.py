"""Affine preprocessing into the decoder's open unit cube.

The forward map is ``u -> squash(((u - mean) @ basis) * scale)``. ``basis``
is either a PCA eigenbasis or a selection of the original coordinate axes,
so the stack is affine and its log-determinant is a constant.
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from .special import DomainError

log = logging.getLogger(__name__)

__all__ = ["Preprocessor", "fit_preprocessor"]


@dataclass
class Preprocessor:
    mean: np.ndarray
    basis: np.ndarray
    scale: np.ndarray
    squash_low: np.ndarray
    squash_high: np.ndarray
    margin: float = 0.05
    use_pca: bool = False
    dropped: tuple = field(default=())

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.basis = np.asarray(self.basis, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)
        self.squash_low = np.asarray(self.squash_low, dtype=float)
        self.squash_high = np.asarray(self.squash_high, dtype=float)
        if not 0.0 < self.margin < 0.5:
            raise ValueError(f"margin must lie in (0, 0.5), got {self.margin!r}")
        if self.basis.shape != (self.input_dim, self.dim):
            raise ValueError("basis shape does not match mean/scale")
        if np.any(self.squash_high <= self.squash_low):
            raise ValueError("squash bounds must satisfy high > low")

    @classmethod
    def identity(cls, dim, margin=0.05):
        return cls(
            mean=np.zeros(dim),
            basis=np.eye(dim),
            scale=np.ones(dim),
            squash_low=np.full(dim, margin),
            squash_high=np.full(dim, 1.0 - margin),
            margin=margin,
        )

    @property
    def input_dim(self):
        return self.mean.shape[0]

    @property
    def dim(self):
        return self.scale.shape[0]

    @property
    def _gain(self):
        return (1.0 - 2.0 * self.margin) / (self.squash_high - self.squash_low)

    def whiten(self, u):
        return ((np.asarray(u, dtype=float) - self.mean) @ self.basis) * self.scale

    def apply(self, u, clip=False):
        """Map original points into the unit cube.

        With ``clip`` any coordinate outside the open unit interval is pulled
        back to ``[margin, 1 - margin]`` (with a logged warning).
        """
        y = self.margin + (self.whiten(u) - self.squash_low) * self._gain
        if clip:
            bad = (y <= 0.0) | (y >= 1.0)
            if np.any(bad):
                log.warning("clamping %d out-of-range coordinate(s) into the margin", int(bad.sum()))
                y = np.where(bad, np.clip(y, self.margin, 1.0 - self.margin), y)
        return y

    def invert(self, y):
        y = np.asarray(y, dtype=float)
        if np.any((y < 0.0) | (y > 1.0)) or not np.all(np.isfinite(y)):
            raise DomainError("Preprocessor.invert: input outside the unit cube")
        z = self.squash_low + (y - self.margin) / self._gain
        return (z / self.scale) @ self.basis.T + self.mean

    def log_det(self):
        """ln|det| of the forward map (restricted to the retained subspace)."""
        return float(np.sum(np.log(np.abs(self.scale))) + np.sum(np.log(self._gain)))


def fit_preprocessor(data, use_pca=False, target_dim=None, margin=0.05, whiten=True):
    """Centre/scale (optionally PCA-project) ``data`` and fit the unit-cube squash.

    Zero-variance directions are dropped with a warning and listed in
    ``Preprocessor.dropped``.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError("need a 2-D array with at least two rows")
    n, d = data.shape
    mean = data.mean(axis=0) if whiten else np.zeros(d)
    centred = data - data.mean(axis=0)
    tiny = 1e-12

    if use_pca:
        k = d if target_dim is None else int(target_dim)
        if not 1 <= k <= d:
            raise ValueError(f"target_dim must lie in [1, {d}], got {k}")
        cov = centred.T @ centred / (n - 1)
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1]
        evals = evals[order]
        evecs = evecs[:, order]
        # deterministic sign: largest-magnitude loading positive
        pivots = np.argmax(np.abs(evecs), axis=0)
        evecs = evecs * np.sign(evecs[pivots, np.arange(d)])
        keep = np.flatnonzero(evals > tiny * max(evals[0], tiny))[:k]
        dropped = tuple(int(i) for i in range(k) if i not in set(keep.tolist()))
        if dropped:
            log.warning("dropping %d zero-variance principal direction(s)", len(dropped))
        basis = evecs[:, keep]
        var = evals[keep]
    else:
        var_all = centred.var(axis=0, ddof=1)
        keep = np.flatnonzero(var_all > tiny)
        dropped = tuple(int(i) for i in np.flatnonzero(var_all <= tiny))
        if dropped:
            log.warning("dropping zero-variance dimension(s) %s", list(dropped))
        if target_dim is not None and int(target_dim) != keep.size:
            raise ValueError(
                f"target_dim={target_dim} requires use_pca (data has {keep.size} usable dimensions)"
            )
        basis = np.eye(d)[:, keep]
        var = var_all[keep]
    if keep.size == 0:
        raise ValueError("no dimension with nonzero variance")
    scale = 1.0 / np.sqrt(var) if whiten else np.ones(keep.size)

    z = ((data - mean) @ basis) * scale
    low = z.min(axis=0)
    high = z.max(axis=0)
    return Preprocessor(mean, basis, scale, low, high, margin, use_pca, dropped)
