#!/usr/bin/env python3
"""Normalized-root growth of the closed-form I3^2 coefficient stream.

With super-Liouville surrogate gaps e^(-n^2 (k_n + l_n)) on the sqrt(2)
convergents, the Cauchy-Hadamard roots grow without bound: the
radius-of-convergence estimate collapses to zero.
"""

import argparse

import mpmath

from bnflab.scalars import Backend
from bnflab.frequencies import FrequencyVector
from bnflab.sequences import ScaleProfile, resonance_sequence
from bnflab.models import ModelSpec, i3sq_stream
from bnflab.normalform import divergence_probe


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=3)
    ap.add_argument("--true-gaps", action="store_true",
                    help="use the actual sqrt(2) gaps instead of the surrogate")
    args = ap.parse_args()

    be = Backend("float", 256)
    om = FrequencyVector((1, -mpmath.sqrt(2), 0.9), be)
    prof = ScaleProfile(amplitude="printed", index_start=1,
                        gap_surrogate=None if args.true_gaps else "super-liouville")
    seq = resonance_sequence(om, args.count, "B", profile=prof)
    spec = ModelSpec(family="A3", omega=om, seq=seq,
                     order=2 * (seq.entries[-1].k + seq.entries[-1].l))
    rep = divergence_probe(list(i3sq_stream(spec, shapes=("k",))), backend=be)
    print(f"{'entry':>6} {'index':>14} {'|coeff|':>12} {'rho':>12}")
    for (idx, deg, mag, rho), e in zip(rep.roots, seq.entries):
        print(f"{e.n:>6} {str(idx):>14} {mag:>12.4e} {rho:>12.5g}")
    print(f"monotonicity: {rep.monotonicity}")
    print(f"radius estimate: {rep.radius_estimate:.4g}"
          f"{'  -> radius-to-zero trend' if rep.radius_zero else ''}")


if __name__ == "__main__":
    main()
