"""Command-line front end.

Subcommands: ``run <config>`` executes a full action list;
``normalize``, ``coeffs``, ``probe``, ``sequence`` and ``experiment``
build a single action against a config's model table.  Global flags
``--out``, ``--backend``, ``--precision-bits`` and ``--profile``
override the config; ``BNFLAB_OUT`` sets the default output root.

Exit codes: 0 all verdicts pass, 1 an experiment verdict failed,
2 validation error (with a message naming the offending key).
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, load_config, run
from .frequencies import FrequencyError
from .models import ModelError
from .normalform import NormalFormError
from .scalars import BackendError
from .sequences import ProfileError, SequenceError
from .experiments import ExperimentError

VALIDATION_ERRORS = (ConfigError, ModelError, SequenceError, ProfileError,
                     FrequencyError, BackendError, NormalFormError,
                     ExperimentError)


def _common_flags(p):
    p.add_argument("config", help="run config (.json or .toml)")
    p.add_argument("--out", help="output directory (default: config 'out' or $BNFLAB_OUT)")
    p.add_argument("--backend", choices=["exact", "float"], help="coefficient backend")
    p.add_argument("--precision-bits", type=int, help="mantissa bits for the float backend")
    p.add_argument("--profile", help="scale profile JSON file overriding the config's")


def _overrides(args):
    out = {}
    if args.backend:
        out["backend"] = args.backend
    if args.precision_bits:
        out["precision_bits"] = args.precision_bits
    if args.profile:
        with open(args.profile) as fh:
            out["profile"] = json.load(fh)
    return out


def build_parser():
    parser = argparse.ArgumentParser(prog="bnflab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute every action in the config")
    _common_flags(p)

    p = sub.add_parser("normalize", help="Birkhoff-normalize one model")
    _common_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--order", type=int, default=2, help="action order N")
    p.add_argument("--allow-resonant", action="store_true")
    p.add_argument("--write-generators", action="store_true")

    p = sub.add_parser("coeffs", help="closed-form vs measured coefficient table")
    _common_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--which", required=True,
                   choices=["gamma", "i3sq-series", "order2-pattern"])
    p.add_argument("--target", action="append", required=True,
                   help="entry index (gamma) or comma-separated action index; repeatable")

    p = sub.add_parser("probe", help="divergence probe of the closed-form stream")
    _common_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--shapes", default="k", help="comma list from {k,l}")
    p.add_argument("--growth-factor", type=float, default=2.0)

    p = sub.add_parser("sequence", help="emit the model's resonance sequence")
    _common_flags(p)
    p.add_argument("--model", required=True)

    p = sub.add_parser("experiment", help="run one experiment")
    _common_flags(p)
    p.add_argument("--kind", required=True,
                   choices=["delta", "resonant", "gronwall", "coupled"])
    p.add_argument("--params", help="JSON object with the experiment parameters")
    return parser


def _single_action(args):
    if args.command == "normalize":
        return {"action": "normalize", "model": args.model, "order": args.order,
                "allow_resonant": args.allow_resonant,
                "write_generators": args.write_generators}
    if args.command == "coeffs":
        targets = []
        for t in args.target:
            if "," in t:
                targets.append([int(x) for x in t.split(",")])
            else:
                targets.append(int(t))
        return {"action": "coefficients", "model": args.model,
                "which": args.which, "targets": targets}
    if args.command == "probe":
        return {"action": "divergence-probe", "model": args.model,
                "shapes": args.shapes.split(","),
                "growth_factor": args.growth_factor}
    if args.command == "sequence":
        return {"action": "sequence", "model": args.model}
    if args.command == "experiment":
        params = json.loads(args.params) if args.params else {}
        return {"action": "experiment", "kind": args.kind, "params": params}
    return None


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.command != "run":
            config = dict(config)
            config["actions"] = [_single_action(args)]
        code, manifest = run(config, outdir=args.out, overrides=_overrides(args))
    except VALIDATION_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for v in manifest["verdicts"]:
        print(f"{v['name']}: {'PASS' if v['passed'] else 'FAIL'}")
    print(f"artifacts: {len(manifest['artifacts'])} file(s)")
    return code


if __name__ == "__main__":
    sys.exit(main())
