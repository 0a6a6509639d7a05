"""Realification, generated vector fields, and trajectory integration.

Series are integrated in the real coordinates (x_1, y_1, ..., x_d, y_d)
with the field x' = dH/dy, y' = -dH/dx, the real form of
``xi' = -i dH/deta``.  The Hamiltonian is expanded once into a real
polynomial (the xi/eta -> (x +- iy)/sqrt(2) substitution is exact up to
one final float rounding) and compiled to a plain Python function, which
keeps long runs fast without extra dependencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .series import PoissonSeries


class FlowError(RuntimeError):
    """Raised on integration failures (NaN states, no convergence)."""


# -- realification -----------------------------------------------------------


def _plane_factor(a: int, b: int):
    """(x + iy)^a (x - iy)^b as {(i, j): complex}; exact integer arithmetic."""
    poly = {(0, 0): complex(1.0)}
    for sign, reps in ((1.0, a), (-1.0, b)):
        for _ in range(reps):
            nxt = {}
            for (i, j), c in poly.items():
                nxt[(i + 1, j)] = nxt.get((i + 1, j), 0.0) + c
                nxt[(i, j + 1)] = nxt.get((i, j + 1), 0.0) + c * complex(0.0, sign)
            poly = nxt
    return poly


def realify(h: PoissonSeries) -> dict:
    """Expand a real series into {(a1, b1, ..., ad, bd): float coefficient}.

    Exponents are on (x_1, y_1, ..., x_d, y_d).  Raises if the imaginary
    residue of any coefficient is not at float roundoff level.
    """
    d = h.d
    backend = h.backend
    acc = {}
    scale_max = 0.0
    for m, c in h.terms.items():
        cc = backend.to_complex(c) * 2.0 ** (-m.degree / 2.0)
        parts = [_plane_factor(m.u[j], m.v[j]) for j in range(d)]
        expanded = {(): cc}
        for p in parts:
            nxt = {}
            for key, base in expanded.items():
                for (i, j), pc in p.items():
                    nk = key + (i, j)
                    nxt[nk] = nxt.get(nk, 0.0) + base * pc
            expanded = nxt
        for key, val in expanded.items():
            acc[key] = acc.get(key, 0.0) + val
            scale_max = max(scale_max, abs(acc[key]))
    out = {}
    for key, val in acc.items():
        if abs(val.imag) > 1e-10 * max(scale_max, 1.0):
            raise FlowError(f"series is not real: residue {val.imag} at {key}")
        if val.real != 0.0:
            out[key] = val.real
    return out


def poly_derivative(poly: dict, var: int) -> dict:
    out = {}
    for key, c in poly.items():
        e = key[var]
        if e:
            nk = key[:var] + (e - 1,) + key[var + 1:]
            out[nk] = out.get(nk, 0.0) + c * e
    return out


def poly_sup_bound(poly: dict, radius: float) -> float:
    """Upper bound for sup |P| on the Euclidean ball of the given radius."""
    return sum(abs(c) * radius ** sum(key) for key, c in poly.items())


def ck_norm_bound(h: PoissonSeries, k: int, radius: float) -> float:
    """Upper bound for the C^k norm of the realified series on a ball.

    Takes the maximum, over all derivative multi-indices of order <= k,
    of the coefficient-sum bound; an overestimate of the true sup norm,
    which only loosens bounds it feeds.
    """
    base = realify(h)
    polys = [((), base)]
    best = poly_sup_bound(base, radius)
    for _ in range(k):
        nxt = []
        for tag, p in polys:
            for var in range(2 * h.d):
                dp = poly_derivative(p, var)
                if dp:
                    nxt.append((tag + (var,), dp))
                    best = max(best, poly_sup_bound(dp, radius))
        polys = nxt
    return best


def _poly_source(poly: dict, indent: str = "        ") -> str:
    if not poly:
        return "0.0"
    chunks = []
    for key in sorted(poly, key=lambda k: (sum(k), k)):
        c = poly[key]
        factors = [repr(c)]
        for var, e in enumerate(key):
            if e == 0:
                continue
            name = f"x{var // 2 + 1}" if var % 2 == 0 else f"y{var // 2 + 1}"
            factors.append(name if e == 1 else f"{name}**{e}")
        chunks.append("*".join(factors))
    return ("\n" + indent + "+ ").join(chunks)


def compile_field(h: PoissonSeries):
    """Compile (field, hamiltonian, actions) fast evaluators from a series."""
    d = h.d
    poly = realify(h)
    unpack = "\n    ".join(
        f"x{j + 1} = y[{2 * j}]; y{j + 1} = y[{2 * j + 1}]" for j in range(d))
    lines = [f"def _field(t, y):", f"    {unpack}", "    return ("]
    for j in range(d):
        dx = poly_derivative(poly, 2 * j + 1)      # dH/dy_j
        dy = poly_derivative(poly, 2 * j)          # dH/dx_j
        lines.append(f"        {_poly_source(dx)},")
        lines.append(f"        -({_poly_source(dy)}),")
    lines.append("    )")
    lines.append("def _ham(y):")
    lines.append(f"    {unpack}")
    lines.append(f"    return ({_poly_source(poly, indent='        ')}")
    lines.append("    )")
    src = "\n".join(lines)
    ns = {}
    exec(compile(src, f"<field d={d}>", "exec"), ns)

    def actions(y):
        return [(y[2 * j] ** 2 + y[2 * j + 1] ** 2) / 2.0 for j in range(d)]

    return ns["_field"], ns["_ham"], actions


# -- trajectories -------------------------------------------------------------


@dataclass
class IntegratorOptions:
    """Knobs for :func:`integrate`.

    ``method="rk8"`` is adaptive DOP853 (default; blow-up friendly),
    ``method="midpoint"`` the fixed-step implicit midpoint rule for long
    conservation runs.  ``escape_radius`` installs a terminal event on
    the Euclidean norm; ``escape_monitor`` may replace it with any
    scalar function of the state crossing zero upward.
    """

    method: str = "rk8"
    rtol: float = 1e-10
    atol: float = 1e-12
    n_samples: int = 1000
    max_step: float = math.inf
    escape_radius: Optional[float] = None
    escape_monitor: Optional[Callable] = None
    dt: float = 1e-2
    midpoint_tol: float = 1e-13
    midpoint_max_iter: int = 100


@dataclass
class Trajectory:
    """Sampled flow with invariant monitors.

    ``t`` is strictly increasing in |t| along the run direction; ``y``
    has one row per sample.  ``escape_time`` is the refined event time
    when an escape condition was installed and crossed; ``blow_up``
    marks integrator breakdown by step-size collapse (expected for the
    multi-saddle runs).
    """

    model_id: str
    t: np.ndarray
    y: np.ndarray
    h_values: np.ndarray
    actions: np.ndarray
    method: str
    rtol: float
    atol: float
    escaped: bool = False
    escape_time: Optional[float] = None
    escape_state: Optional[np.ndarray] = None
    blow_up: bool = False
    nfev: int = 0
    message: str = ""

    @property
    def d(self) -> int:
        return self.y.shape[1] // 2

    def final_state(self) -> np.ndarray:
        return self.y[-1]

    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.h_values - self.h_values[0])))

    def action_drift(self, j: int) -> float:
        col = self.actions[:, j]
        return float(np.max(np.abs(col - col[0])))


def integrate(h: PoissonSeries, z0: Sequence[float], tspan,
              opts: Optional[IntegratorOptions] = None,
              model_id: str = "model") -> Trajectory:
    """Integrate the Hamiltonian flow of ``h`` from a real phase point.

    Raises
    ------
    FlowError
        When the state turns NaN.  Step-size collapse near blow-up is
        *not* an error: the trajectory is returned with ``blow_up`` set.
    """
    opts = opts or IntegratorOptions()
    field, ham, actions = compile_field(h)
    z0 = np.asarray(z0, dtype=float)
    if z0.size != 2 * h.d:
        raise FlowError(f"state has size {z0.size}, expected {2 * h.d}")
    if opts.method == "midpoint":
        traj = _integrate_midpoint(field, z0, tspan, opts, model_id)
    else:
        traj = _integrate_rk8(field, z0, tspan, opts, model_id)
    if np.isnan(traj.y).any():
        raise FlowError("NaN state encountered during integration")
    traj.h_values = np.array([ham(row) for row in traj.y])
    traj.actions = np.array([actions(row) for row in traj.y])
    return traj


def _escape_event(opts: IntegratorOptions):
    if opts.escape_monitor is not None:
        fn = opts.escape_monitor

        def event(t, y):
            return fn(y)
    elif opts.escape_radius is not None:
        r2 = float(opts.escape_radius) ** 2

        def event(t, y):
            return float(np.dot(y, y)) - r2
    else:
        return None
    event.terminal = True
    event.direction = 1
    return event


def _integrate_rk8(field, z0, tspan, opts, model_id):
    t0, t1 = float(tspan[0]), float(tspan[1])
    t_eval = np.linspace(t0, t1, opts.n_samples)
    event = _escape_event(opts)
    sol = solve_ivp(field, (t0, t1), z0, method="DOP853",
                    rtol=opts.rtol, atol=opts.atol, max_step=opts.max_step,
                    t_eval=t_eval, events=[event] if event else None)
    escaped = False
    escape_time = None
    escape_state = None
    if event is not None and sol.t_events[0].size:
        escaped = True
        escape_time = float(sol.t_events[0][0])
        escape_state = sol.y_events[0][0]
    blow_up = sol.status == -1
    t = sol.t
    y = sol.y.T
    if escaped and (t.size == 0 or t[-1] != escape_time):
        t = np.append(t, escape_time)
        y = np.vstack([y, escape_state]) if y.size else escape_state[None, :]
    return Trajectory(model_id=model_id, t=t, y=y,
                      h_values=np.empty(0), actions=np.empty(0),
                      method="rk8", rtol=opts.rtol, atol=opts.atol,
                      escaped=escaped, escape_time=escape_time,
                      escape_state=escape_state, blow_up=blow_up,
                      nfev=sol.nfev, message=sol.message or "")


def _integrate_midpoint(field, z0, tspan, opts, model_id):
    t0, t1 = float(tspan[0]), float(tspan[1])
    direction = 1.0 if t1 >= t0 else -1.0
    dt = abs(opts.dt) * direction
    n_steps = max(1, int(round((t1 - t0) / dt)))
    stride = max(1, n_steps // max(2, opts.n_samples - 1))
    ts = [t0]
    ys = [np.array(z0, dtype=float)]
    y = np.array(z0, dtype=float)
    t = t0
    escaped = False
    escape_time = None
    escape_state = None
    mon = None
    if opts.escape_monitor is not None:
        mon = opts.escape_monitor
    elif opts.escape_radius is not None:
        r2 = opts.escape_radius ** 2
        mon = lambda state: float(np.dot(state, state)) - r2
    prev_mon = mon(y) if mon else None
    for step in range(1, n_steps + 1):
        y_new = y + dt * np.asarray(field(t + dt / 2, y))
        for _ in range(opts.midpoint_max_iter):
            mid = (y + y_new) / 2.0
            y_next = y + dt * np.asarray(field(t + dt / 2, mid))
            delta = float(np.max(np.abs(y_next - y_new)))
            y_new = y_next
            if delta <= opts.midpoint_tol * (1.0 + float(np.max(np.abs(y_new)))):
                break
        else:
            raise FlowError("implicit midpoint iteration did not converge")
        t += dt
        y = y_new
        if mon:
            cur = mon(y)
            if prev_mon is not None and prev_mon < 0 <= cur:
                frac = prev_mon / (prev_mon - cur)
                escape_time = t - dt + frac * dt
                escape_state = ys[-1] + frac * (y - ys[-1])
                escaped = True
            prev_mon = cur
        if step % stride == 0 or step == n_steps or escaped:
            ts.append(t)
            ys.append(y.copy())
        if escaped:
            break
    return Trajectory(model_id=model_id, t=np.array(ts), y=np.array(ys),
                      h_values=np.empty(0), actions=np.empty(0),
                      method="midpoint", rtol=opts.rtol, atol=opts.atol,
                      escaped=escaped, escape_time=escape_time,
                      escape_state=escape_state, blow_up=False,
                      nfev=n_steps, message="")


def flow_map(h: PoissonSeries, z0: Sequence[float], t: float,
             rtol: float = 1e-12, atol: float = 1e-14) -> np.ndarray:
    """Time-t flow map of the Hamiltonian field of ``h`` (real coords)."""
    if t == 0:
        return np.asarray(z0, dtype=float)
    opts = IntegratorOptions(rtol=rtol, atol=atol, n_samples=2)
    traj = integrate(h, z0, (0.0, t), opts)
    return traj.final_state()


def trajectory_to_csv(traj: Trajectory) -> str:
    """CSV export with header t,x1,y1,...,xd,yd,H,I1,...,Id."""
    d = traj.d
    cols = ["t"]
    for j in range(d):
        cols += [f"x{j + 1}", f"y{j + 1}"]
    cols.append("H")
    cols += [f"I{j + 1}" for j in range(d)]
    lines = [",".join(cols)]
    for i in range(traj.t.size):
        row = [repr(float(traj.t[i]))]
        row += [repr(float(v)) for v in traj.y[i]]
        row.append(repr(float(traj.h_values[i])))
        row += [repr(float(v)) for v in traj.actions[i]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
