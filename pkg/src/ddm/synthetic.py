"""Small synthetic datasets used by the experiments and acceptance tests."""

import numpy as np


def gaussian_mixture_1d(n, rng, means=(-2.0, 1.5), scales=(0.6, 0.9), weights=(0.4, 0.6)):
    comp = rng.choice(len(means), size=n, p=np.asarray(weights) / np.sum(weights))
    x = rng.normal(np.take(means, comp), np.take(scales, comp))
    return x[:, None]


def gaussian_mixture_2d(n, rng):
    """Three anisotropic Gaussian blobs in the plane."""
    centres = np.array([[-2.0, 0.0], [1.5, 1.5], [1.0, -2.0]])
    covs = np.array([
        [[0.5, 0.3], [0.3, 0.4]],
        [[0.3, -0.1], [-0.1, 0.6]],
        [[0.6, 0.0], [0.0, 0.2]],
    ])
    comp = rng.choice(3, size=n, p=[0.4, 0.35, 0.25])
    noise = rng.standard_normal((n, 2))
    chols = np.linalg.cholesky(covs)
    return centres[comp] + np.einsum("nij,nj->ni", chols[comp], noise)


def two_class_gaussians(n_per_class, rng, separation=4.0):
    """Two well separated Gaussian classes; labels 0 and 1."""
    a = rng.normal(size=(n_per_class, 2)) * [1.0, 0.6] + [-separation / 2, 0.0]
    b = rng.normal(size=(n_per_class, 2)) * [0.7, 1.0] + [separation / 2, 0.5]
    points = np.vstack([a, b])
    labels = np.repeat([0, 1], n_per_class)
    order = rng.permutation(points.shape[0])
    return points[order], labels[order]


def sigmoid_warped_2d(n, rng, shapes=(2.0, 5.0), scale=2.5, angle=0.6):
    """Beta latents pushed through two rotated sigmoid layers, then mapped to R^2.

    The result lies in the span of the model family, which keeps the learned
    density smooth enough for grid quadrature.
    """
    a, b = shapes
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    h = rng.beta(a, b, size=(n, 2))
    h = 1.0 / (1.0 + np.exp(-(scale * h @ rot.T - scale * a / (a + b) * rot.sum(axis=1))))
    h = 1.0 / (1.0 + np.exp(-(scale * h @ rot - scale * 0.5 * rot.sum(axis=0))))
    return np.log(h) - np.log1p(-h)
