"""Table of the sphere-to-flat ratio F(m, n) with its sign relative to 1."""

import argparse

import numpy as np

from weighted_yamabe.specfun import ratio_F


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--m-max", type=float, default=3.0)
    parser.add_argument("--m-step", type=float, default=0.25)
    parser.add_argument("--n-max", type=int, default=10)
    args = parser.parse_args()
    ms = np.round(np.arange(0.0, args.m_max + args.m_step / 2, args.m_step), 10)
    ns = range(3, args.n_max + 1)
    print("m    " + "".join(f"{f'n={n}':>12}" for n in ns))
    for m in ms:
        print(f"{m:<5g}" + "".join(f"{ratio_F(float(m), n):12.8f}" for n in ns))


if __name__ == "__main__":
    main()
