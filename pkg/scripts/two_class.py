"""Class-conditional models on the two-Gaussian task, with and without the foreign penalty.

For every foreign weight given, prints test accuracy, the own-minus-foreign
mean log-density gap (log-densities floored at -30) and the accuracy among
accepted points when the rejection threshold discards about 5% of them.

    python scripts/two_class.py --foreign 0 1e-4 1e-3
"""

import argparse
import time

import numpy as np

from ddm.classifier import REJECT, class_scores, classify, classify_with_reject, train_class_models
from ddm.presets import preset
from ddm.synthetic import two_class_gaussians


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=300, help="examples per class")
    ap.add_argument("--foreign", type=float, nargs="+", default=[0.0, 1e-4])
    ap.add_argument("--window", type=int, default=None)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    x_tr, l_tr = two_class_gaussians(args.n, rng)
    x_te, l_te = two_class_gaussians(args.n, rng)
    rows = np.arange(len(l_te))
    cfg = preset("classifier", seed=args.seed, **({"window_size": args.window} if args.window else {}))
    print("foreign_weight\taccuracy\tgap\treject_fraction\taccepted_accuracy\tseconds")
    for fw in args.foreign:
        start = time.perf_counter()
        bundle = train_class_models(x_tr, l_tr, cfg, foreign_weight=fw)
        seconds = time.perf_counter() - start
        labels, _ = classify(bundle, x_te)
        s = class_scores(bundle, x_te)
        gap = np.mean(np.maximum(s[rows, l_te], -30.0)) - np.mean(np.maximum(s[rows, 1 - l_te], -30.0))
        thr = float(np.quantile(s.max(axis=1), 0.05))
        kept, _ = classify_with_reject(bundle, x_te, thr)
        ok = kept != REJECT
        print(f"{fw:g}\t{np.mean(labels == l_te):.4f}\t{gap:.3f}\t{1 - ok.mean():.3f}\t"
              f"{np.mean(kept[ok] == l_te[ok]):.4f}\t{seconds:.0f}")


if __name__ == "__main__":
    main()
