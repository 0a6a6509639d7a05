#!/usr/bin/env python3
"""Quadratic-in-zeta normal-form coefficient table for the 2-dof family.

For each coupling entry: fits Gamma(zeta) through three exact
normalizations, prints the fitted quadratic coefficient next to the
closed-form pole prediction, and runs the constructive zeta selection.
"""

import argparse
from fractions import Fraction

from bnflab.scalars import Backend
from bnflab.frequencies import FrequencyVector
from bnflab.sequences import ScaleProfile, resonance_sequence
from bnflab.models import (ModelSpec, closed_form_coefficients,
                           gamma_quadratic_fit, select_zeta)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--w2", default="-21/10", help="second frequency (rational)")
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--l", type=int, default=1)
    ap.add_argument("--khat", type=int, default=None)
    ap.add_argument("--samesign", action="store_true")
    args = ap.parse_args()

    be = Backend("exact")
    w2 = Fraction(args.w2)
    family = "B-samesign" if args.samesign else "B"
    om = FrequencyVector((Fraction(1), w2), be)
    entry = {"k": args.k, "l": args.l}
    if args.khat is not None:
        entry["khat"] = args.khat
    seq = resonance_sequence(om, 1, "B-samesign" if args.samesign else "B",
                             profile=ScaleProfile(amplitude="unit"),
                             overrides={"entries": [entry]})
    e = seq.entries[0]
    order = 2 * (e.k - 1 + e.khat)
    spec = ModelSpec(family=family, omega=om, seq=seq, order=max(order, e.k + e.l))
    fit = gamma_quadratic_fit(spec, e.n)
    cf = closed_form_coefficients(spec, "gamma", e.n)
    print(f"family {family}, (k, l, khat) = ({e.k}, {e.l}, {e.khat}), "
          f"gap = {be.format_parts(e.gap)[0]}")
    print(f"  Gamma(z) = ({be.format_parts(fit.c2)[0]}) z^2 "
          f"+ ({be.format_parts(fit.c1)[0]}) z + ({be.format_parts(fit.c0)[0]})")
    print(f"  closed-form quadratic coefficient: {be.format_parts(cf.value)[0]}"
          f"   (|.| = {be.magnitude(cf.value):g})")
    print(f"  fit == closed form: {fit.c2 == cf.value}")
    zeta, gamma_at, _ = select_zeta(spec, e.n)
    print(f"  constructive choice: zeta = {be.format_parts(zeta)[0]}, "
          f"|Gamma| = {be.magnitude(gamma_at):g}")


if __name__ == "__main__":
    main()
