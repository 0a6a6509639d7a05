"""Constructors for the explicit Hamiltonian families and their predictions.

Families
--------
* ``bare-saddle``    F = xi1^k xi2^l + eta1^k eta2^l on R^4.
* ``resonant-2dof``  w1 I1 + w2 I2 + a F_{k,l} with k w1 + l w2 = 0.
* ``A3`` (d=3)       sum w_j I_j + sum_n a_n I3 F_n.
* ``A3-tilde``       (w1+I3^3) I1 + (w2+I3^4) I2 + w3 I3 + couplings.
* ``A4`` (d=4)       (w1+I4) I1 + w2 I2 + w3 I3 + w4 I4 + couplings.
* ``A4-tilde``       (w1+I4) I1 + (w2+I4^2) I2 + (w3+I4^3) I3 + w4 I4 + couplings.
* ``B`` (d=2)        (w1+I2) I1 + w2 I2 + sum_n zeta_n a_n (xi1^k xi2^l + eta1^k eta2^l).
* ``B-samesign``     same skeleton with xi1^k eta2^l + eta1^k xi2^l couplings.

Closed-form coefficient predictions are returned in the engine's sign
convention, which the normalization oracle validates; where the source
formulas carry the opposite sign the result is flagged (magnitudes are
convention-free).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import mpmath

from .scalars import Backend
from .frequencies import FrequencyVector
from .sequences import ResonanceSequence, SequenceError
from .series import (Monomial, PoissonSeries, SeriesError, from_terms,
                     s_add, s_multiply, s_scale, term_series, zero_series)

FAMILIES = ("A3", "A3-tilde", "A4", "A4-tilde", "B", "B-samesign",
            "resonant-2dof", "bare-saddle")


class ModelError(ValueError):
    """Raised on inconsistent model specifications."""


@dataclass
class ModelSpec:
    """Everything needed to build one model Hamiltonian.

    ``order`` is the series truncation; requested coupling terms whose
    degree exceeds it are an error, never silently dropped.  ``terms``
    caps how many sequence entries are included (None = all).
    """

    family: str
    omega: FrequencyVector
    seq: Optional[ResonanceSequence] = None
    terms: Optional[int] = None
    order: int = 10
    a: object = None          # resonant-2dof coupling strength
    k: Optional[int] = None   # bare-saddle / resonant-2dof exponents
    l: Optional[int] = None
    epsilon: float = 0.005    # khat = floor((1+epsilon) l) when not supplied
    name: str = "model"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ModelError(f"unknown family {self.family!r}")
        d = self.omega.d
        need = {"A3": 3, "A3-tilde": 3, "A4": 4, "A4-tilde": 4,
                "B": 2, "B-samesign": 2, "resonant-2dof": 2, "bare-saddle": 2}
        if d != need[self.family]:
            raise ModelError(f"family {self.family} needs d={need[self.family]}, got d={d}")
        backend = self.omega.backend
        w1 = backend.real(self.omega.values[0])
        w2 = backend.real(self.omega.values[1])
        sign = (1 if w1 > 0 else -1 if w1 < 0 else 0) * (1 if w2 > 0 else -1 if w2 < 0 else 0)
        if self.family in ("A3", "A3-tilde", "B") and sign >= 0:
            raise ModelError(f"family {self.family} needs w1*w2 < 0")
        if self.family == "B-samesign" and sign <= 0:
            raise ModelError("family B-samesign needs w1*w2 > 0")
        if self.family == "resonant-2dof" and not self.omega.lattice:
            raise ModelError("resonant-2dof needs a declared lattice relation")

    @property
    def backend(self) -> Backend:
        return self.omega.backend

    def active_entries(self):
        if self.seq is None:
            return []
        entries = self.seq.entries
        return entries if self.terms is None else entries[: self.terms]

    def saddle_kl(self) -> Tuple[int, int]:
        if self.k is not None and self.l is not None:
            return self.k, self.l
        if self.family == "resonant-2dof":
            rel = next((m for m in self.omega.lattice if m[0] >= 1 and m[1] >= 1), None)
            if rel is None:
                raise ModelError("no usable (k, l) lattice relation declared")
            return rel[0], rel[1]
        raise ModelError("saddle exponents (k, l) not specified")


def saddle_series(d: int, order: int, backend: Backend, k: int, l: int,
                  plane_a: int = 0, plane_b: int = 1,
                  coeff=1, samesign: bool = False, anti: bool = False) -> PoissonSeries:
    """F = xi_a^k xi_b^l + eta_a^k eta_b^l (or the samesign/anti variants)."""
    def expo(ka, lb, kind):
        u = [0] * d
        v = [0] * d
        (u if kind[0] == "x" else v)[plane_a] = ka
        (u if kind[1] == "x" else v)[plane_b] = lb
        return tuple(u), tuple(v)

    s = -1 if anti else 1
    if samesign:
        (u1, v1) = expo(k, l, "xe")
        (u2, v2) = expo(k, l, "ex")
    else:
        (u1, v1) = expo(k, l, "xx")
        (u2, v2) = expo(k, l, "ee")
    if k + l > order:
        raise ModelError(f"saddle degree {k + l} exceeds truncation order {order}")
    return from_terms(d, order, backend, [(u1, v1, coeff), (u2, v2, s * coeff)])


def _action_term(d, order, backend, exponents, coeff):
    m = tuple(exponents)
    return term_series(d, order, backend, m, m, coeff)


def integrable_part(spec: ModelSpec) -> PoissonSeries:
    """The action-only skeleton of the family."""
    d, order, backend = spec.omega.d, spec.order, spec.backend
    h = zero_series(d, order, backend)
    for j in range(d):
        e = tuple(1 if i == j else 0 for i in range(d))
        h = s_add(h, _action_term(d, order, backend, e, spec.omega.values[j]), order)
    extra = []
    if spec.family in ("B", "B-samesign"):
        extra = [((1, 1), 1)]
    elif spec.family == "A3-tilde":
        extra = [((1, 0, 3), 1), ((0, 1, 4), 1)]
    elif spec.family == "A4":
        extra = [((1, 0, 0, 1), 1)]
    elif spec.family == "A4-tilde":
        extra = [((1, 0, 0, 1), 1), ((0, 1, 0, 2), 1), ((0, 0, 1, 3), 1)]
    for expo, c in extra:
        if 2 * sum(expo) > order:
            raise ModelError(
                f"integrable action term I^{expo} of degree {2 * sum(expo)} exceeds "
                f"truncation order {order}; raise the order")
        h = s_add(h, _action_term(d, order, backend, expo, c), order)
    return h


def build_model(spec: ModelSpec) -> PoissonSeries:
    """Assemble the model Hamiltonian as a real Poisson series.

    Raises
    ------
    ModelError
        When a requested coupling does not fit below the truncation
        order (the offending terms are listed; nothing is dropped
        silently).
    """
    d, order, backend = spec.omega.d, spec.order, spec.backend
    if spec.family == "bare-saddle":
        k, l = spec.saddle_kl()
        return saddle_series(d, order, backend, k, l)
    h = integrable_part(spec)
    if spec.family == "resonant-2dof":
        k, l = spec.saddle_kl()
        a = backend.coerce(spec.a if spec.a is not None else 1)
        return s_add(h, s_scale(saddle_series(d, order, backend, k, l), a, order), order)

    entries = spec.active_entries()
    too_big = []
    for e in entries:
        weight = 2 if spec.family.startswith("A") else 0  # I3 factor
        if e.k + e.l + weight > order:
            too_big.append((e.n, e.k, e.l))
    if too_big:
        raise ModelError(
            f"coupling terms exceed truncation order {order}: "
            + ", ".join(f"n={n} (k={k}, l={l})" for n, k, l in too_big))

    for e in entries:
        if spec.family.startswith("A"):
            f = saddle_series(d, order, backend, e.k, e.l)
            i3 = _action_term(d, order, backend, (0, 0, 1) + (0,) * (d - 3), 1)
            term = s_scale(s_multiply(i3, f, order), e.a, order)
        else:
            zeta = e.zeta if e.zeta is not None else backend.one()
            f = saddle_series(d, order, backend, e.k, e.l,
                              samesign=(spec.family == "B-samesign"))
            term = s_scale(f, backend.coerce(zeta) * e.a, order)
        h = s_add(h, term, order)
    return h


# -- Delta-line geometry of the multi-saddle --------------------------------


@dataclass(frozen=True)
class SaddleGeometry:
    """Invariant-line data of F_{k,l} (float arithmetic).

    The line carries the radial equation |r|' = speed * |r|^alpha on its
    escaping ray.  When u = sqrt(l/k) < 1 the roles of the two planes
    are swapped internally (``swapped``) so the closed forms hold as
    stated; the stored phases refer to the effective (swapped) planes.

    ``ray_sign`` marks the escaping ray for forward time; with the
    engine's field convention the direct computation gives
    r' = -speed * r^alpha along the line, so for even alpha the ray with
    r < 0 escapes forward while odd alpha escapes only backward in time
    (``time_sign = -1``).
    """

    k: int
    l: int
    swapped: bool
    u: float
    alpha: int
    speed: float
    nu: float
    nup: float
    direction: tuple      # real 4-vector at r = 1, original plane order
    norm_scale: float     # |state| at |r| = 1
    ray_sign: int
    time_sign: int

    def state(self, r: float, d: int = 2, extra=()):
        """Real phase point at signed radius r (planes beyond 2 from extra)."""
        base = [r * c for c in self.direction]
        base += list(extra) + [0.0] * (2 * d - len(base) - len(extra))
        return base

    def radius_of(self, y) -> float:
        den = sum(c * c for c in self.direction)
        return sum(a * b for a, b in zip(y[:4], self.direction)) / den

    def transverse_of(self, y) -> float:
        r = self.radius_of(y)
        return math.sqrt(sum((a - r * b) ** 2 for a, b in zip(y[:4], self.direction)))


def saddle_geometry(k: int, l: int) -> SaddleGeometry:
    if k < 1 or l < 1 or k + l <= 2:
        raise ModelError("saddle geometry needs k, l >= 1 and k + l > 2")
    swapped = l < k  # u = sqrt(l/k) < 1: swap plane roles
    ke, le = (l, k) if swapped else (k, l)
    u = math.sqrt(le / ke)
    alpha = k + l - 1
    speed = ke * u ** le
    nu = nup = 1.25 / (k + l)
    if not (0 < nu < 1):
        raise ModelError("phase rule left (0,1)")
    za = (math.sqrt(2) * math.cos(2 * math.pi * nu),
          math.sqrt(2) * math.sin(2 * math.pi * nu))
    zb = (math.sqrt(2) * u * math.cos(2 * math.pi * nup),
          math.sqrt(2) * u * math.sin(2 * math.pi * nup))
    direction = zb + za if swapped else za + zb
    norm_scale = math.sqrt(2 * (1 + u * u))
    ray_sign = -1 if alpha % 2 == 0 else +1
    time_sign = +1 if alpha % 2 == 0 else -1
    return SaddleGeometry(k=k, l=l, swapped=swapped, u=u, alpha=alpha,
                          speed=speed, nu=nu, nup=nup, direction=direction,
                          norm_scale=norm_scale, ray_sign=ray_sign,
                          time_sign=time_sign)


def blowup_time(geom: SaddleGeometry, n: int) -> float:
    """Explosion time of |r| from |r0| = 1/(2n)."""
    return (2 * n) ** (geom.alpha - 1) / (geom.speed * (geom.alpha - 1))


def escape_time(geom: SaddleGeometry, n: int, radius: float) -> float:
    """Time for |r| to reach ``radius`` from 1/(2n), by the closed form."""
    a1 = geom.alpha - 1
    return ((2 * n) ** a1 - radius ** (-a1)) / (a1 * geom.speed)


def radius_closed_form(geom: SaddleGeometry, n: int, t):
    """|r|(t) from |r0| = 1/(2n): |r|^(alpha-1) = 1/((2n)^(alpha-1) - (alpha-1) c t)."""
    a1 = geom.alpha - 1
    den = (2 * n) ** a1 - a1 * geom.speed * t
    return den ** (-1.0 / a1)


# -- closed-form coefficient predictions -------------------------------------


@dataclass
class ClosedFormValue:
    value: object
    shape: tuple
    sign_convention_caveat: bool
    note: str = ""


def _pattern_value(backend, a, k, l, gap, which_shape):
    with backend.context():
        if which_shape == "k":
            return backend.div(-(a * a) * (k * k), gap)
        return backend.div(-(a * a) * (l * l), gap)


def closed_form_coefficients(spec: ModelSpec, which: str, target) -> ClosedFormValue:
    """Predicted normal-form coefficients licensed by the construction.

    * ``which="order2-pattern"``: plain 2-dof saddle; coefficient of
      I1^(k-1) I2^l is -a^2 k^2 / (k w1 + l w2) and of I1^k I2^(l-1) is
      -a^2 l^2 / (k w1 + l w2).  ``target`` is the action index.
    * ``which="i3sq-series"``: the same pattern carrying an I3^2 weight,
      per coupling entry; ``target`` is the 3-component action index.
    * ``which="gamma"``: the quadratic-in-zeta coefficient of
      I1^(k-1) I2^khat for the B family, ``target`` is the entry index n.
      Returned in the oracle-validated sign
      (-1)^(khat-l+1) a^2 k (k/gap)^(khat-l+1); the printed source
      formula carries the opposite sign, hence the caveat flag.

    Raises
    ------
    ModelError
        When the target index is not of the covered shape.
    """
    backend = spec.backend
    if which == "order2-pattern":
        k, l = spec.saddle_kl()
        a = backend.coerce(spec.a if spec.a is not None else 1)
        gap = spec.omega.pairing((k, l) + (0,) * (spec.omega.d - 2))
        idx = tuple(target)
        if idx == (k - 1, l):
            return ClosedFormValue(_pattern_value(backend, a, k, l, gap, "k"),
                                   idx, False)
        if idx == (k, l - 1):
            return ClosedFormValue(_pattern_value(backend, a, k, l, gap, "l"),
                                   idx, False)
        raise ModelError(f"index {idx} is not of shape I1^(k-1) I2^l or I1^k I2^(l-1)")
    if which == "i3sq-series":
        idx = tuple(target)
        if len(idx) != 3 or idx[2] != 2:
            raise ModelError("i3sq-series targets have shape (m1, m2, 2)")
        for e in spec.active_entries():
            gap = e.gap
            if (idx[0], idx[1]) == (e.k - 1, e.l):
                return ClosedFormValue(_pattern_value(backend, e.a, e.k, e.l, gap, "k"),
                                       idx, False)
            if (idx[0], idx[1]) == (e.k, e.l - 1):
                return ClosedFormValue(_pattern_value(backend, e.a, e.k, e.l, gap, "l"),
                                       idx, False)
        raise ModelError(f"index {idx} matches no active coupling entry")
    if which == "gamma":
        e = spec.seq.entry(int(target))
        khat = e.khat
        if khat is None:
            khat = int(math.floor((1 + spec.epsilon) * e.l))
        if not (e.l <= khat < e.k):
            raise ModelError(f"need l <= khat < k, got l={e.l}, khat={khat}, k={e.k}")
        p = khat - e.l + 1
        with backend.context():
            ratio = backend.div(backend.coerce(e.k), e.gap)
            val = (e.a * e.a) * e.k * ((-1) ** p)
            for _ in range(p):
                val = val * ratio
        return ClosedFormValue(val, (e.k - 1, khat), True,
                               note="sign is the oracle-validated one; the printed "
                                    "pole formula carries the opposite sign")
    raise ModelError(f"unknown closed form {which!r}")


def u_expansion_coefficients(k: int, gap, m_max: int, backend: Backend):
    """Geometric expansion 1/(gap + k I2) = sum_m (-k)^m I2^m / gap^(m+1)."""
    out = []
    with backend.context():
        inv = backend.div(backend.one(), gap)
        cur = inv
        for m in range(m_max + 1):
            out.append(cur)
            cur = cur * backend.coerce(-k) * inv
    return out


def generator_chi(spec: ModelSpec, j: int, order: Optional[int] = None,
                  i2_order: int = 4) -> PoissonSeries:
    """Conjugation generator for coupling entry ``j``.

    A-families: chi_j = i b_j I3 E_j with E_j = xi1^k xi2^l - eta1^k eta2^l,
    satisfying {H_omega, chi_j} = -a_j I3 F_j exactly.  (The engine's
    bracket convention absorbs the sign of the printed generator.)

    B-families: chi_n = i zeta_n E~_n U_n with the pole factor U_n
    replaced by its geometric expansion through I2^i2_order; the
    defining identity {H_omega, chi_n} = -zeta_n F~_n -+ zeta_n l I1 F~_n U_n
    then holds up to terms of I2-power > i2_order.

    Raises
    ------
    ModelError
        When the entry is exactly resonant (zero divisor).
    """
    backend = spec.backend
    d = spec.omega.d
    order = spec.order if order is None else order
    e = spec.seq.entry(j)
    if backend.is_zero(e.gap):
        raise ModelError(f"entry {j} is exactly resonant; generator undefined")
    eye = backend.i()
    if spec.family.startswith("A"):
        ee = saddle_series(d, order, backend, e.k, e.l, anti=True)
        i3 = _action_term(d, order, backend, (0, 0, 1) + (0,) * (d - 3), 1)
        with backend.context():
            b = backend.div(e.a, e.gap)
            return s_scale(s_multiply(i3, ee, order), eye * b, order)
    if spec.family in ("B", "B-samesign"):
        zeta = e.zeta if e.zeta is not None else backend.one()
        ee = s_scale(saddle_series(d, order, backend, e.k, e.l, anti=True,
                                   samesign=(spec.family == "B-samesign")),
                     e.a, order)
        coeffs = u_expansion_coefficients(e.k, e.gap, i2_order, backend)
        u_series = from_terms(d, order, backend,
                              (((0, m), (0, m), c) for m, c in enumerate(coeffs)))
        with backend.context():
            return s_scale(s_multiply(ee, u_series, order),
                           eye * backend.coerce(zeta), order)
    raise ModelError(f"family {spec.family} has no chi generator")


def chi_hat(spec: ModelSpec, upto_n: int, order: Optional[int] = None) -> PoissonSeries:
    """Accumulated generator sum over entries with index < upto_n."""
    order = spec.order if order is None else order
    acc = zero_series(spec.omega.d, order, spec.backend)
    for e in spec.active_entries():
        if e.n < upto_n:
            acc = s_add(acc, generator_chi(spec, e.n, order), order)
    return acc


# -- quadratic Gamma(zeta) machinery ------------------------------------------


@dataclass
class GammaFit:
    """Quadratic fit Gamma(zeta) = c2 zeta^2 + c1 zeta + c0 for one entry."""

    n: int
    index: tuple
    c2: object
    c1: object
    c0: object

    def at(self, zeta, backend):
        with backend.context():
            z = backend.coerce(zeta)
            return (self.c2 * z + self.c1) * z + self.c0


def _with_zeta(spec: ModelSpec, n: int, zeta):
    new_entries = []
    for e in spec.seq.entries:
        ne = replace(e)
        if ne.n == n:
            ne.zeta = spec.backend.coerce(zeta)
        new_entries.append(ne)
    seq = ResonanceSequence(omega=spec.seq.omega, mode=spec.seq.mode,
                            entries=new_entries, profile=spec.seq.profile)
    return replace(spec, seq=seq)


def gamma_index(spec: ModelSpec, n: int) -> tuple:
    e = spec.seq.entry(n)
    khat = e.khat if e.khat is not None else int(math.floor((1 + spec.epsilon) * e.l))
    return (e.k - 1, khat)


def gamma_measure(spec: ModelSpec, n: int, zeta):
    """Normal-form coefficient of I1^(k-1) I2^khat at the given zeta_n."""
    from .normalform import bnf_coefficient, normalize_to_order
    idx = gamma_index(spec, n)
    n_actions = sum(idx)
    probe = _with_zeta(spec, n, zeta)
    order_needed = 2 * n_actions
    if probe.order < order_needed:
        probe = replace(probe, order=order_needed)
    h = build_model(probe)
    result = normalize_to_order(h, spec.omega, n_actions)
    return bnf_coefficient(result, idx)


def gamma_quadratic_fit(spec: ModelSpec, n: int,
                        samples=(0, Fraction(1, 2), 1)) -> GammaFit:
    """Interpolate Gamma(zeta) through three sample points.

    On the exact backend the interpolation is exact and the quadratic
    coefficient can be compared bit-for-bit with the closed form.
    """
    backend = spec.backend
    z0, z1, z2 = (backend.coerce(z) for z in samples)
    g0, g1, g2 = (gamma_measure(spec, n, z) for z in (z0, z1, z2))
    with backend.context():
        d01 = backend.div(g1 - g0, z1 - z0)
        d12 = backend.div(g2 - g1, z2 - z1)
        c2 = backend.div(d12 - d01, z2 - z0)
        c1 = d01 - c2 * (z0 + z1)
        c0 = g0 - (c2 * z0 + c1) * z0
    return GammaFit(n=n, index=gamma_index(spec, n), c2=c2, c1=c1, c0=c0)


def select_zeta(spec: ModelSpec, n: int):
    """Constructive zeta_n choice: maximize |Gamma_n| over [0, 1].

    Fits the quadratic through zeta in {0, 1/2, 1} and evaluates the
    candidates {0, 1, vertex} (the vertex only when it lands in [0, 1]).

    Returns
    -------
    (zeta_star, gamma_at_star, fit)
    """
    backend = spec.backend
    fit = gamma_quadratic_fit(spec, n)
    candidates = [backend.coerce(0), backend.coerce(1)]
    if not backend.is_zero(fit.c2):
        with backend.context():
            vertex = backend.div(-fit.c1, backend.coerce(2) * fit.c2)
        v = backend.real(vertex)
        if backend.is_real(vertex) and 0 <= v <= 1:
            candidates.append(vertex)
    best = max(candidates,
               key=lambda z: backend.magnitude(fit.at(z, backend)))
    return best, fit.at(best, backend), fit


def gamma_lower_bound_check(n: int, theta: float = 2.0, epsilon: float = 0.005):
    """Check |gamma_n| >= e^(n k_n) on the growth constraints symbolically.

    Uses the constraint chain with k_n = 10 e^(e^n), l_n = k_n/theta,
    khat = (1+epsilon) l_n, |gap| <= 1/k_n (worst case) and the printed
    amplitudes, entirely in log space (mpmath handles the huge
    exponents).  Integer floors are immaterial at this scale and are
    dropped.

    Returns
    -------
    (ok, log_gamma_lower, n_times_k)
    """
    with mpmath.workprec(128):
        log_k = mpmath.log(10) + mpmath.exp(n)
        k = mpmath.exp(log_k)
        l = k / theta
        pole_power = epsilon * l + 1  # khat - l + 1
        log_a = -n * (k + l)
        # |gap| <= 1/k  =>  log(k/|gap|) >= 2 log k
        log_gamma_lower = 2 * log_a + log_k + pole_power * 2 * log_k
        target = mpmath.mpf(n) * k
        return bool(log_gamma_lower >= target), log_gamma_lower, target


def i3sq_stream(spec: ModelSpec, shapes=("k",)):
    """Closed-form I3^2 coefficient stream for divergence probing.

    Yields (action index, scalar) pairs ordered by entry; ``shapes``
    selects the I1^(k-1) I2^l ("k") and/or I1^k I2^(l-1) ("l") branch.
    """
    backend = spec.backend
    for e in spec.active_entries():
        for shape in shapes:
            if shape == "k":
                idx = (e.k - 1, e.l, 2)
            else:
                idx = (e.k, e.l - 1, 2)
            yield idx, closed_form_coefficients(spec, "i3sq-series", idx).value
