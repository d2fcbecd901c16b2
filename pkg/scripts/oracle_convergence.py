"""Oracle versus closed forms as the discretization is refined.

One-photon: worst per-mode error of the extracted S(p) for a single atom and
a two-atom chain.  Two-photon: 1 - overlap between the simulated outgoing pair
amplitude and the closed-form prediction, at fixed mode spacing while the band
grows (n_modes = 128, 256, 512).

    python3 scripts/oracle_convergence.py [--max-modes 256] [--json out.json]
"""

import argparse
import json
import math
import time
import warnings

import numpy as np

from chiral_smatrix import EmitterChain, TwoLevel, s1_chain, s1_two_level, s2_full
from chiral_smatrix import oracle as orc

G = 1 / math.sqrt(math.pi)


def one_photon(n_modes_list):
    rows = []
    at = TwoLevel(0.0, G)
    ch = EmitterChain.of((TwoLevel(0.0, G), -1.0), (TwoLevel(0.3, 0.9 * G), 1.0))
    for n in n_modes_list:
        cfg = orc.DiscretizationConfig(n_modes=n, bandwidth=40.0 * n / 256)
        long = orc.DiscretizationConfig(n_modes=n, bandwidth=40.0 * n / 384, packet_start=-20.0, t_final=44.0)
        for name, system, c, ref in (
            ("single", at, cfg, lambda p: s1_two_level(p, at)),
            ("chain", ch, long, lambda p: s1_chain(p, ch)),
        ):
            t0 = time.perf_counter()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", orc.ResolutionWarning)
                res = orc.run_single_photon(system, c, 0.0)
            sel = res.select(1e-2)
            err = float(np.max(np.abs(res.S[sel] - ref(res.p[sel]))))
            rows.append({"sector": 1, "system": name, "n_modes": n, "error": err, "seconds": time.perf_counter() - t0})
    return rows


def two_photon(n_modes_list):
    rows = []
    systems = {
        "single": TwoLevel(0.0, G),
        "pair": EmitterChain.of((TwoLevel(0.2, G), 1.0), (TwoLevel(-0.5, math.sqrt(2) * G), -1.0)),
    }
    for name, system in systems.items():
        dec = s2_full(system)
        for n in n_modes_list:
            t0 = time.perf_counter()
            cfg = orc.DiscretizationConfig(n_modes=n, bandwidth=40.0 * n / 256)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", orc.ResolutionWarning)
                _, res = orc.run_two_photon(system, cfg, 0.0)
            pred = orc.predict_two_photon(res.psi_in, res.grid, dec.one_photon, lambda *a: 1j * dec.irreducible_kernel(*a))
            rows.append(
                {
                    "sector": 2,
                    "system": name,
                    "n_modes": n,
                    "error": 1 - orc.pair_overlap(pred, res.psi_out),
                    "seconds": time.perf_counter() - t0,
                }
            )
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-modes", type=int, default=512)
    ap.add_argument("--json", help="write rows to this file")
    args = ap.parse_args()
    ns = [n for n in (128, 256, 512) if n <= args.max_modes]
    rows = one_photon(ns) + two_photon(ns)
    print(f"{'sector':>6} {'system':>7} {'n_modes':>7} {'error':>11} {'seconds':>8}")
    for r in rows:
        print(f"{r['sector']:>6} {r['system']:>7} {r['n_modes']:>7} {r['error']:>11.3e} {r['seconds']:>8.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
