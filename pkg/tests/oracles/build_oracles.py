"""Independent reference values, computed without the package under test.

Run once to regenerate ``frozen_values.json``::

    python tests/oracles/build_oracles.py

Special functions come from mpmath at 50 digits. Divergences on the shape
grid use the digamma expression for Beta KL evaluated in mpmath; that
expression is itself cross-checked against direct quadrature on the shapes
where quadrature is well conditioned. Entropies and normalisation integrals
come from quadrature. Nothing here imports ``ddm``.
"""

import json
import math
from pathlib import Path

import mpmath as mp
import numpy as np
from scipy import integrate

mp.mp.dps = 50


def f(x):
    return float(x)


def beta_logpdf(x, a, b):
    return (a - 1) * mp.log(x) + (b - 1) * mp.log(1 - x) - (mp.loggamma(a) + mp.loggamma(b) - mp.loggamma(a + b))


def kl_quad(p, q):
    """KL(Beta(p) || Beta(q)) by quadrature, split at the mode region for sharp shapes."""
    def integrand(x):
        if x <= 0 or x >= 1:  # tanh-sinh nodes can round onto the endpoints
            return mp.mpf(0)
        lp = beta_logpdf(x, *p)
        return mp.exp(lp) * (lp - beta_logpdf(x, *q))
    return mp.quad(integrand, [0, mp.mpf("1e-8"), mp.mpf("1e-4"), mp.mpf("0.01"), 0.5, mp.mpf("0.99"), 1 - mp.mpf("1e-4"), 1 - mp.mpf("1e-8"), 1])


def sym_kl_quad(p, q):
    return kl_quad(p, q) + kl_quad(q, p)


def kl_closed(p, q):
    (a1, b1), (a2, b2) = p, q
    lbeta = lambda a, b: mp.loggamma(a) + mp.loggamma(b) - mp.loggamma(a + b)  # noqa: E731
    return (lbeta(a2, b2) - lbeta(a1, b1) + (a1 - a2) * mp.digamma(a1) + (b1 - b2) * mp.digamma(b1)
            + (a2 - a1 + b2 - b1) * mp.digamma(a1 + b1))


def sym_kl_closed(p, q):
    return kl_closed(p, q) + kl_closed(q, p)


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def main():
    out = {}
    # special functions
    out["log_gamma"] = {str(x): f(mp.loggamma(x)) for x in (1e-3, 0.5, 1.0, 2.0, 3.7, 10.0, 123.456, 1e6)}
    out["digamma"] = {str(x): f(mp.digamma(x)) for x in (1e-3, 0.5, 1.0, 2.0, 3.7, 6.5, 100.0)}
    out["trigamma"] = {str(x): f(mp.polygamma(1, x)) for x in (1e-3, 0.5, 1.0, 2.0, 3.7, 6.5, 100.0)}
    out["ibeta"] = {
        "0.5,0.01,0.4": f(mp.betainc(0.01, 0.4, 0, 0.5, regularized=True)),
        "0.01,0.02,0.2": f(mp.betainc(0.02, 0.2, 0, 0.01, regularized=True)),
        "0.3,2,5": f(mp.betainc(2, 5, 0, 0.3, regularized=True)),
        "0.9,0.5,0.5": f(mp.betainc(0.5, 0.5, 0, 0.9, regularized=True)),
    }
    out["beta_log_pdf_0.5_2_2"] = f(beta_logpdf(mp.mpf("0.5"), 2, 2))

    # symmetrised KL: the hand value for (2,2) vs (1,1) and a 5^4 shape grid
    out["sym_kl_22_11"] = f(sym_kl_quad((2, 2), (1, 1)))
    shapes = [0.02, 0.1, 0.5, 1.5, 5.0]
    grid = {}
    for a1 in shapes:
        for b1 in shapes:
            for a2 in shapes:
                for b2 in shapes:
                    grid[f"{a1},{b1},{a2},{b2}"] = f(sym_kl_closed((a1, b1), (a2, b2)))
    for p, q in [((0.5, 1.5), (5.0, 0.5)), ((1.5, 5.0), (1.5, 1.5)), ((5.0, 5.0), (0.5, 0.5))]:
        direct = f(sym_kl_quad(p, q))
        ref = grid[f"{p[0]},{p[1]},{q[0]},{q[1]}"]
        assert abs(direct - ref) <= 1e-8 * max(1.0, abs(ref)), (p, q, direct, ref)
    out["sym_kl_grid"] = grid

    # entropy of Beta(2,2) by quadrature of -p ln p
    out["beta_entropy_2_2"] = f(-mp.quad(lambda x: mp.exp(beta_logpdf(x, 2, 2)) * beta_logpdf(x, 2, 2), [0, 1]))

    # expected per-dimension sym-KL for a large-N sample of Beta(5,1) against (1,1):
    # the moment fit of Beta(5,1) samples converges to (5,1) itself
    out["sym_kl_51_11"] = f(sym_kl_quad((5, 1), (1, 1)))

    # network hand values
    out["decoder_two_identity_at_zero"] = sigmoid(sigmoid(0.0))
    out["inverse_k1"] = (1.5 - 1.0) / 2.0
    out["log_det_k1_scale2"] = math.log(0.25 * 2.0)

    # density: K=1, M=1, W=1, b=0, uniform marginal
    y = sigmoid(0.5)
    out["density_k1_at_sigmoid_half"] = math.log(1.0 / (y * (1.0 - y)))
    dens = lambda t: 1.0 / (t * (1.0 - t))  # noqa: E731
    out["density_k1_mass"] = integrate.quad(dens, sigmoid(0.0), sigmoid(1.0))[0]

    # trainer hand values
    out["bias_2_20"] = math.log(2.0 / 20.0)
    out["beta_var_2_20"] = 2.0 * 20.0 / (22.0 ** 2 * 23.0)

    # Bernoulli probability used by the entropy check
    p = 1 - mp.betainc(0.01, 0.4, 0, 0.5, regularized=True)
    out["bernoulli_p"] = f(p)
    out["bernoulli_entropy"] = f(-(p * mp.log(p) + (1 - p) * mp.log(1 - p)))

    # mean of Beta(2,5)
    out["beta_mean_2_5"] = 2.0 / 7.0
    out["schedule_mean"] = 2.0 / 22.0

    # model file size for K=2, M=2, widths (3, 2), D=4
    k, m, widths, d = 2, 2, (3, 2), 4
    n_float = 1 + (3 * 2 + 3) + (2 * 3 + 2) + m * (k * k + k) + 2 + 1 + d + d * k + 3 * k
    out["model_size_k2_m2_w32_d4"] = 8 + 4 * (6 + len(widths)) + 8 * n_float

    path = Path(__file__).with_name("frozen_values.json")
    path.write_text(json.dumps(out, indent=1, sort_keys=True) + "\n")
    print(f"wrote {path} ({len(grid)} grid entries)")


if __name__ == "__main__":
    np.seterr(all="raise")
    main()
