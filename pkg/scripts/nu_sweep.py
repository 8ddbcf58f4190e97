"""nu(tau) for the round three-sphere with m = 1, against the bubble probe and the flat value."""

import argparse

import numpy as np

from weighted_yamabe.functionals import nu_lambda_convert
from weighted_yamabe.geometry import make_space
from weighted_yamabe.minimize import bubble_probe, nu_sweep
from weighted_yamabe.specfun import lambda_euclidean


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--points", type=int, default=7)
    parser.add_argument("--tau-min", type=float, default=0.01)
    parser.add_argument("--cutoff", type=float, default=1.0)
    args = parser.parse_args()
    space = make_space("sphere", 3, 1)
    nu_flat = nu_lambda_convert(lambda_euclidean(1, 3), 1, 3)
    print(f"# flat value {nu_flat:.12f}")
    print(f"{'tau':>10} {'nu':>16} {'probe':>16} {'nu - flat':>12}")
    for tau, nu, _ in nu_sweep(space, np.geomspace(1.0, args.tau_min, args.points)):
        probe = bubble_probe(space, tau, args.cutoff)
        print(f"{tau:10.4g} {nu:16.10f} {probe:16.10f} {nu - nu_flat:12.3e}")


if __name__ == "__main__":
    main()
