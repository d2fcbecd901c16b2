"""Photon-number distribution and g2 of coherent light scattered by one atom.

Prints P(N) for N <= n_max next to the Poisson weights of the drive, the
quadrature error estimates, and g2 at coincidence deep inside the box for a
detuning sweep (full outgoing light and the scattered part alone).

    python3 scripts/coherent_statistics.py [--alpha 0.5] [--L 10] [--n-max 3]
"""

import argparse
import math

import numpy as np

from chiral_smatrix import (
    CoherentInput,
    CoherentOutput,
    StatisticsConfig,
    TwoLevel,
    WaveguideBox,
    g2_zero_distance,
    photon_statistics,
)

G = 1 / math.sqrt(math.pi)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--L", type=float, default=10.0)
    ap.add_argument("--n-max", type=int, default=3)
    ap.add_argument("--k", type=float, default=0.0)
    args = ap.parse_args()

    out = CoherentOutput(CoherentInput(args.k, args.alpha, WaveguideBox(args.L)), TwoLevel(0.0, G), args.n_max)
    st = photon_statistics(out, StatisticsConfig(panel_width=2.0))
    nbar = out.input.mean_photons
    print(f"mean photon number {nbar:.4g}, box L = {args.L:g}, n_max = {args.n_max}")
    print(f"{'N':>3} {'P(N)':>14} {'Poisson':>14} {'error':>10}")
    for n, (w, e) in enumerate(zip(st.weights, st.errors)):
        print(f"{n:>3} {w:>14.10f} {math.exp(-nbar) * nbar**n / math.factorial(n):>14.10f} {e:>10.2e}")
    print(f"sum {st.total:.10f}")

    print()
    print(f"{'k - Omega':>10} {'g2 full':>10} {'g2 scattered':>13}")
    big = CoherentOutput(CoherentInput(0.0, args.alpha, WaveguideBox(60.0)), TwoLevel(0.0, G), 2)
    x = -20.0
    for k in np.linspace(-3.0, 3.0, 13):
        o = CoherentOutput(CoherentInput(float(k), args.alpha, big.input.box), big.emitter, 2)
        full = g2_zero_distance(o, x, x)
        scat = g2_zero_distance(o, x, x, component="scattered")
        print(f"{k:>10.2f} {full:>10.4f} {scat:>13.2e}")


if __name__ == "__main__":
    main()
