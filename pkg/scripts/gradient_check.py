"""Compare the analytic KL gradient with central finite differences.

Usage: python3 scripts/gradient_check.py [--configs 100] [--n 200]
"""

import argparse

import numpy as np

from divfuse.fusion import AffineParams, KdeModel, apply_affine, bandwidth_silverman, kl_divergence, kl_gradient


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--configs", type=int, default=100)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--h", type=float, default=1e-5)
    args = ap.parse_args()

    errs = []
    for seed in range(args.configs):
        rng = np.random.default_rng(seed)
        x = rng.normal(rng.uniform(-2, 2), rng.uniform(0.5, 2), args.n)
        y = rng.standard_normal(args.n)
        p = AffineParams(rng.uniform(0.3, 3), rng.uniform(-2, 2))
        fx = KdeModel.fit(x)
        s = bandwidth_silverman(apply_affine(y, p))
        f = lambda c, d: kl_divergence(fx, y, AffineParams(c, d), s)
        h = args.h
        num = ((f(p.C + h, p.D) - f(p.C - h, p.D)) / (2 * h), (f(p.C, p.D + h) - f(p.C, p.D - h)) / (2 * h))
        g = kl_gradient(fx, y, p, s)
        errs.append([abs(a - b) / max(abs(a), abs(b), 1e-8) for a, b in zip(g, num)])
    errs = np.asarray(errs)
    print(f"max relative error  dC {errs[:, 0].max():.2e}  dD {errs[:, 1].max():.2e}")
    print(f"median              dC {np.median(errs[:, 0]):.2e}  dD {np.median(errs[:, 1]):.2e}")


if __name__ == "__main__":
    main()
