"""Config-driven runs: parse, execute actions, emit artifacts + manifest.

The canonical config format is JSON; TOML files (``.toml``) are accepted
through ``tomli``.  An ``include`` key may name other config files whose
top-level tables are merged underneath (shared scale profiles live
there).  All tolerances come from the config; nothing is hard-coded.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import List, Optional

import mpmath

from .scalars import Backend
from .frequencies import FrequencyVector
from .sequences import (DESK_PROFILE, ResonanceSequence, ScaleProfile,
                        resonance_sequence)
from .models import (ModelSpec, build_model, closed_form_coefficients,
                     gamma_quadratic_fit, i3sq_stream)
from .normalform import (divergence_probe, normal_form_to_dict,
                         normalize_to_order)
from .series import series_to_dict
from .flows import trajectory_to_csv
from . import experiments as xp


class ConfigError(ValueError):
    """Raised on invalid configuration; maps to exit code 2."""


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    if path.suffix == ".toml":
        import tomli
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    else:
        with open(path) as fh:
            data = json.load(fh)
    for inc in data.pop("include", []):
        base = load_config(path.parent / inc)
        base.update(data)
        data = base
    return data


def parse_scalar(x, backend: Backend):
    """Scalar from config: ints, 'p/q' or decimal strings, sqrt(n) forms."""
    if isinstance(x, bool):
        raise ConfigError("booleans are not scalars")
    if isinstance(x, int):
        return backend.coerce(x)
    if isinstance(x, float):
        if backend.kind == "exact":
            raise ConfigError(
                f"float literal {x} is ambiguous on the exact backend; "
                "write it as a string like '21/10' or '0.1'")
        return backend.coerce(x)
    if isinstance(x, str):
        s = x.strip()
        neg = s.startswith("-")
        body = s[1:] if neg else s
        if body.startswith("sqrt(") and body.endswith(")"):
            if backend.kind == "exact":
                raise ConfigError(f"{x!r} is irrational; use the float backend")
            with backend.context():
                val = mpmath.sqrt(mpmath.mpf(body[5:-1]))
                return backend.coerce(-val if neg else val)
        if body.startswith("2^"):
            expo = int(body[2:])
            frac = Fraction(2) ** expo
            frac = -frac if neg else frac
            return backend.coerce(frac if backend.kind == "exact" else frac)
        try:
            return backend.coerce(Fraction(s))
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"cannot parse scalar {x!r}")
    raise ConfigError(f"cannot parse scalar {x!r}")


def parse_profile(data) -> ScaleProfile:
    if data is None:
        return DESK_PROFILE
    if isinstance(data, ScaleProfile):
        return data
    known = {"name", "gap_threshold_base", "amplitude", "gap_surrogate",
             "coupling_action", "index_start", "max_terms"}
    bad = set(data) - known
    if bad:
        raise ConfigError(f"unknown scale profile keys: {sorted(bad)}")
    return ScaleProfile(**data)


def parse_omega(data, backend: Backend) -> FrequencyVector:
    values = tuple(parse_scalar(v, backend) for v in data["values"])
    lattice = tuple(tuple(int(x) for x in m) for m in data.get("lattice", []))
    return FrequencyVector(values, backend, lattice=lattice)


def parse_model(name, data, backend: Backend, profile: ScaleProfile) -> ModelSpec:
    try:
        omega = parse_omega(data["omega"], backend)
    except KeyError:
        raise ConfigError(f"model {name!r} has no omega")
    seq = None
    seq_cfg = data.get("sequence")
    if seq_cfg is not None:
        prof = parse_profile(seq_cfg.get("scale_profile")) \
            if seq_cfg.get("scale_profile") else profile
        seq = resonance_sequence(
            omega, int(seq_cfg.get("count", 1)), seq_cfg["mode"], profile=prof,
            khat_epsilon=float(data.get("epsilon", 0.005)),
            overrides=seq_cfg.get("overrides"))
    a = data.get("a")
    return ModelSpec(
        family=data["family"], omega=omega, seq=seq,
        terms=data.get("terms"), order=int(data.get("order", 10)),
        a=None if a is None else parse_scalar(a, backend),
        k=data.get("k"), l=data.get("l"),
        epsilon=float(data.get("epsilon", 0.005)), name=name)


@dataclass
class RunContext:
    backend: Backend
    profile: ScaleProfile
    outdir: Path
    seed: int
    models: dict
    artifacts: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)

    def model(self, name) -> ModelSpec:
        if name not in self.models:
            raise ConfigError(f"action references undefined model {name!r}")
        return self.models[name]

    def write(self, name: str, text: str):
        path = self.outdir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        digest = hashlib.sha256(text.encode()).hexdigest()
        self.artifacts.append({"name": name, "sha256": digest})
        return path

    def write_json(self, name: str, payload) -> Path:
        return self.write(name, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def build_context(config: dict, outdir=None, overrides=None) -> RunContext:
    overrides = overrides or {}
    backend_kind = overrides.get("backend") or config.get("backend", "exact")
    bits = int(overrides.get("precision_bits") or config.get("precision_bits", 256))
    backend = Backend(backend_kind, bits) if backend_kind == "float" else Backend("exact")
    profile = parse_profile(overrides.get("profile") or config.get("profile"))
    out = outdir or config.get("out") or os.environ.get("BNFLAB_OUT", "bnflab-out")
    models = {}
    for name, mdata in config.get("models", {}).items():
        models[name] = parse_model(name, mdata, backend, profile)
    return RunContext(backend=backend, profile=profile, outdir=Path(out),
                      seed=int(config.get("seed", 0)), models=models)


# -- actions -------------------------------------------------------------------


def _omega_series(spec, order):
    from .series import from_terms
    d = spec.omega.d
    return from_terms(d, order, spec.backend, (
        (tuple(1 if i == j else 0 for i in range(d)),) * 2 + (spec.omega.values[j],)
        for j in range(d)))


def action_normalize(ctx: RunContext, spec_data: dict):
    spec = ctx.model(spec_data["model"])
    order = int(spec_data.get("order", 2))
    h = build_model(spec)
    result = normalize_to_order(h, spec.omega, order,
                                allow_resonant=bool(spec_data.get("allow_resonant")))
    name = f"{spec.name}_normalform.json"
    ctx.write_json(name, normal_form_to_dict(result))
    if spec_data.get("write_generators"):
        gen = [{"degree": g, "series": series_to_dict(chi)} for g, chi in result.generators]
        ctx.write_json(f"{spec.name}_generators.json", gen)
    return result


def action_coefficients(ctx: RunContext, spec_data: dict):
    spec = ctx.model(spec_data["model"])
    which = spec_data["which"]
    backend = spec.backend
    rows = []
    for target in spec_data["targets"]:
        predicted = closed_form_coefficients(
            spec, which, tuple(target) if isinstance(target, list) else target)
        if which == "gamma":
            fit = gamma_quadratic_fit(spec, int(target))
            measured = fit.c2
        else:
            from .normalform import bnf_coefficient
            from .models import integrable_part, saddle_series
            from .series import s_add, s_scale
            idx = tuple(target)
            order = sum(idx)
            if which == "order2-pattern":
                # measured against the rotation-plus-saddle Hamiltonian
                k, l = spec.saddle_kl()
                a = backend.coerce(spec.a if spec.a is not None else 1)
                w = 2 * order
                h = s_add(_omega_series(spec, w),
                          s_scale(saddle_series(2, w, backend, k, l), a, w), w)
            else:
                h = build_model(spec)
            result = normalize_to_order(h, spec.omega, order)
            measured = bnf_coefficient(result, idx)
        m_re, m_im = backend.format_parts(backend.coerce(measured))
        p_re, p_im = backend.format_parts(backend.coerce(predicted.value))
        rows.append({
            "target": target, "shape": list(predicted.shape),
            "measured": {"re": m_re, "im": m_im},
            "predicted": {"re": p_re, "im": p_im},
            "measured_magnitude": backend.magnitude(measured),
            "predicted_magnitude": backend.magnitude(predicted.value),
            "sign_convention_caveat": predicted.sign_convention_caveat,
        })
    ctx.write_json(f"{spec.name}_coeffs_{which}.json", {"which": which, "rows": rows})
    return rows


def action_probe(ctx: RunContext, spec_data: dict):
    spec = ctx.model(spec_data["model"])
    shapes = tuple(spec_data.get("shapes", ("k",)))
    stream = list(i3sq_stream(spec, shapes))
    report = divergence_probe(stream,
                              growth_factor=float(spec_data.get("growth_factor", 2.0)),
                              min_terms=int(spec_data.get("min_terms", 3)),
                              backend=spec.backend)
    payload = {
        "roots": [{"idx": list(i), "degree": d, "magnitude": m, "rho": r}
                  for i, d, m, r in report.roots],
        "monotonicity": report.monotonicity,
        "radius_estimate": report.radius_estimate,
        "radius_infinite": report.radius_infinite,
        "radius_zero": report.radius_zero,
        "growth_factor": report.growth_factor,
        "min_terms": report.min_terms,
    }
    ctx.write_json(f"{spec.name}_probe.json", payload)
    return report


def action_sequence(ctx: RunContext, spec_data: dict):
    spec = ctx.model(spec_data["model"])
    if spec.seq is None:
        raise ConfigError(f"model {spec.name!r} carries no sequence")
    ctx.write_json(f"{spec.name}_sequence.json", spec.seq.to_dict())
    return spec.seq


def action_experiment(ctx: RunContext, spec_data: dict):
    kind = spec_data["kind"]
    params = dict(spec_data.get("params", {}))
    if kind == "delta":
        opts = xp.DeltaOptions(**params.get("opts", {}))
        report = xp.delta_experiment(int(params["k"]), int(params["l"]),
                                     int(params["n"]), opts, backend=ctx.backend
                                     if ctx.backend.kind == "float" else None)
    elif kind == "resonant":
        spec = ctx.model(params["model"])
        opts = xp.ResonantOptions(**params.get("opts", {}))
        report = xp.resonant_escape(spec.omega, float(params["a"]),
                                    int(params["n"]), opts)
    elif kind == "gronwall":
        fspec = ctx.model(params["f_model"])
        gspec = ctx.model(params["g_model"])
        opts = xp.GronwallOptions(**params.get("opts", {}))
        report = xp.gronwall_suite(
            fspec.omega, build_model(fspec), build_model(gspec),
            [float(a) for a in params["a_values"]],
            [float(v) for v in params["z0"]], float(params["T"]), opts,
            slope_tol=float(params.get("slope_tol", 0.1)))
    elif kind == "coupled":
        spec = ctx.model(params["model"])
        opts = xp.CoupledOptions(**params.get("opts", {}))
        report = xp.coupled_escape(spec, int(params.get("n", 0)), opts)
    else:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    stem = spec_data.get("name", f"{kind}_{len(ctx.artifacts)}")
    ctx.write_json(f"{stem}_report.json", report.to_dict())
    for i, traj in enumerate(report.trajectories):
        if params.get("write_trajectories", True):
            ctx.write(f"{stem}_traj{i}.csv", trajectory_to_csv(traj))
    if kind == "delta" and params.get("plot_script", False):
        ctx.write(f"{stem}_plot.gp",
                  xp.delta_plot_script(report, f"{stem}_traj0.csv"))
    ctx.verdicts.append({"action": f"experiment:{kind}", "name": stem,
                         "passed": report.verdict})
    return report


ACTIONS = {
    "normalize": action_normalize,
    "coefficients": action_coefficients,
    "divergence-probe": action_probe,
    "sequence": action_sequence,
    "experiment": action_experiment,
}


def run(config: dict, outdir=None, overrides=None):
    """Execute a run config; returns (exit_code, manifest dict).

    Exit code 0 iff all experiment verdicts pass and no action errored;
    validation failures raise :class:`ConfigError` (exit 2 at the CLI).
    """
    ctx = build_context(config, outdir=outdir, overrides=overrides)
    canonical = json.dumps(config, sort_keys=True).encode()
    for spec_data in config.get("actions", []):
        kind = spec_data.get("action")
        if kind not in ACTIONS:
            raise ConfigError(f"unknown action {kind!r}")
        ACTIONS[kind](ctx, spec_data)
    manifest = {
        "config_sha256": hashlib.sha256(canonical).hexdigest(),
        "backend": ctx.backend.tag(),
        "seed": ctx.seed,
        "artifacts": ctx.artifacts,
        "verdicts": ctx.verdicts,
    }
    ctx.write_json("manifest.json", manifest)
    failed = [v for v in ctx.verdicts if not v["passed"]]
    return (1 if failed else 0), manifest
