"""Anneal a 2-D model to the default sparse target and compare rounded latents with a Bernoulli.

The rounded encoder outputs should have a mean log-probability close to
``-K H(Bern(p))`` with ``p = P(x > 1/2)`` under the final Beta target.

    python scripts/entropy_check.py
"""

import argparse
import time

import numpy as np

from ddm.beta import BetaParams
from ddm.density import ModelBundle, bernoulli_check, entropy_report
from ddm.preprocess import fit_preprocessor
from ddm.presets import preset
from ddm.synthetic import sigmoid_warped_2d
from ddm.trainer import train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    pts = sigmoid_warped_2d(args.n, np.random.default_rng(args.seed))
    cfg = preset("peaked", seed=args.seed)
    pre = fit_preprocessor(pts)
    y = pre.apply(pts)
    start = time.perf_counter()
    state = train(cfg, y)
    target = BetaParams(*cfg.final_target)
    print(f"trained in {time.perf_counter() - start:.0f}s; final target reached: {state.current_target == target}")
    empirical, expected, p = bernoulli_check(state.encoder(y), target)
    print(f"p = {p:.5f}; rounded mean log-probability {empirical:.4f}; expected {expected:.4f}; "
          f"relative gap {abs(empirical - expected) / abs(expected):.3f}")
    rep = entropy_report(ModelBundle(state.encoder, state.decoder, target, pre), y)
    for name in ("marginal_entropy_sum", "expected_log_det", "observed_entropy_upper_bound",
                 "original_entropy_upper_bound"):
        print(f"{name}: {getattr(rep, name):.4f}")


if __name__ == "__main__":
    main()
