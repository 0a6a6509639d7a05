"""Sparse truncated Poisson-series algebra in complexified phase space.

Series live in the complex variables ``xi_j = (x_j + i y_j)/sqrt(2)``,
``eta_j = (x_j - i y_j)/sqrt(2)``; the actions are ``I_j = xi_j eta_j``.
A series is a finite map from exponent pairs ``(u, v)`` to scalar
coefficients, truncated at a fixed total degree.

Sign convention
---------------
The bracket implemented here is

    {F, G} = i * sum_j (dF/deta_j * dG/dxi_j - dF/dxi_j * dG/deta_j)

which is minus the textbook complex-variable formula.  It is the unique
choice for which both of the following hold at once:

* ``{f, H}`` is the derivative of ``f`` along the flow of
  ``xi_j' = -i dH/deta_j``, ``eta_j' = i dH/dxi_j``;
* the elimination identity ``{H_omega, chi} = -c xi^u eta^v`` holds for
  the generator ``chi = i c / <omega, u - v> * xi^u eta^v``.

With this convention ``{H_omega, xi^u eta^v} = i <omega, u-v> xi^u eta^v``.
"""

from __future__ import annotations

from typing import Iterable, NamedTuple, Optional, Sequence, Tuple

from .scalars import Backend, BackendError, require_same_backend

BRACKET_SIGN = -1  # engine bracket = BRACKET_SIGN * (textbook complex formula)


class SeriesError(ValueError):
    """Raised on dimension mismatches and invalid series operations."""


class Monomial(NamedTuple):
    """Exponent pair ``xi^u eta^v``; ``u`` and ``v`` are integer tuples."""

    u: Tuple[int, ...]
    v: Tuple[int, ...]

    @property
    def d(self) -> int:
        return len(self.u)

    @property
    def degree(self) -> int:
        return sum(self.u) + sum(self.v)

    @property
    def is_action(self) -> bool:
        return self.u == self.v

    @property
    def action_index(self) -> Tuple[int, ...]:
        if not self.is_action:
            raise SeriesError(f"{self} is not an action monomial")
        return self.u

    def gradlex_key(self):
        return (self.degree, self.u, self.v)

    def conjugate(self) -> "Monomial":
        return Monomial(self.v, self.u)


def monomial(u: Sequence[int], v: Sequence[int]) -> Monomial:
    u = tuple(int(x) for x in u)
    v = tuple(int(x) for x in v)
    if len(u) != len(v):
        raise SeriesError("exponent vectors must have equal length")
    if any(x < 0 for x in u + v):
        raise SeriesError("exponents must be non-negative")
    return Monomial(u, v)


def action_monomial(m: Sequence[int]) -> Monomial:
    m = tuple(int(x) for x in m)
    return Monomial(m, m)


class PoissonSeries:
    """Truncated sparse polynomial in ``(xi_1..xi_d, eta_1..eta_d)``.

    Instances are immutable by convention: no method mutates ``terms``
    and every operation returns a new series.

    Parameters
    ----------
    d : int
        Degrees of freedom.
    order : int
        Truncation order; only terms of total degree <= order are kept.
    backend : Backend
        Coefficient domain.
    terms : dict
        Map ``Monomial -> scalar``; exact zeros are dropped.
    real : bool or None
        Reality flag.  ``None`` means "verify from the coefficients":
        a series is real when ``coeff(u, v) == conj(coeff(v, u))``.
    """

    __slots__ = ("d", "order", "backend", "terms", "real")

    def __init__(self, d, order, backend, terms=None, real=None):
        if d < 1:
            raise SeriesError("need at least one degree of freedom")
        if order < 0:
            raise SeriesError("truncation order must be >= 0")
        self.d = int(d)
        self.order = int(order)
        self.backend = backend
        clean = {}
        for m, c in (terms or {}).items():
            if m.d != self.d:
                raise SeriesError(f"monomial {m} has wrong dimension (d={self.d})")
            if m.degree > self.order:
                raise SeriesError(
                    f"monomial {m} of degree {m.degree} exceeds truncation order {self.order}"
                )
            if not backend.is_zero(c):
                clean[m] = c
        self.terms = clean
        self.real = self._check_real() if real is None else bool(real)

    def _check_real(self) -> bool:
        for m, c in self.terms.items():
            cc = self.terms.get(m.conjugate())
            if cc is None or not self.backend.is_zero(cc - self.backend.conj(c)):
                return False
        return True

    # -- inspection ----------------------------------------------------

    def coeff(self, m: Monomial):
        return self.terms.get(m, self.backend.zero())

    def items_sorted(self):
        return sorted(self.terms.items(), key=lambda kv: kv[0].gradlex_key())

    def is_zero(self) -> bool:
        return not self.terms

    def min_degree(self) -> Optional[int]:
        return min((m.degree for m in self.terms), default=None)

    def max_degree(self) -> Optional[int]:
        return max((m.degree for m in self.terms), default=None)

    def degree_part(self, g: int) -> "PoissonSeries":
        return self.filter(lambda m, c: m.degree == g)

    def action_part(self) -> "PoissonSeries":
        return self.filter(lambda m, c: m.is_action)

    def nonaction_part(self) -> "PoissonSeries":
        return self.filter(lambda m, c: not m.is_action)

    def filter(self, pred) -> "PoissonSeries":
        kept = {m: c for m, c in self.terms.items() if pred(m, c)}
        return PoissonSeries(self.d, self.order, self.backend, kept)

    def pair_degree_cap(self, j: int, cap: int) -> "PoissonSeries":
        """Drop terms whose combined xi_j/eta_j exponent exceeds ``cap``."""
        return self.filter(lambda m, c: m.u[j] + m.v[j] <= cap)

    def with_order(self, order: int) -> "PoissonSeries":
        kept = {m: c for m, c in self.terms.items() if m.degree <= order}
        return PoissonSeries(self.d, order, self.backend, kept, real=self.real)

    def conjugate(self) -> "PoissonSeries":
        out = {m.conjugate(): self.backend.conj(c) for m, c in self.terms.items()}
        return PoissonSeries(self.d, self.order, self.backend, out)

    def __eq__(self, other):
        if not isinstance(other, PoissonSeries):
            return NotImplemented
        if self.d != other.d or self.backend != other.backend:
            return False
        if set(self.terms) != set(other.terms):
            return False
        return all(self.backend.is_zero(c - other.terms[m]) for m, c in self.terms.items())

    def __repr__(self):
        n = len(self.terms)
        return f"PoissonSeries(d={self.d}, order={self.order}, {n} terms, {self.backend.tag()})"

    # -- operator sugar (truncation at min of the two orders) -----------

    def __add__(self, other):
        return s_add(self, other, min(self.order, other.order))

    def __sub__(self, other):
        return s_add(self, s_scale(other, -1, other.order), min(self.order, other.order))

    def __neg__(self):
        return s_scale(self, -1, self.order)

    def __mul__(self, other):
        if isinstance(other, PoissonSeries):
            return s_multiply(self, other, min(self.order, other.order))
        return s_scale(self, other, self.order)

    __rmul__ = __mul__


# -- constructors -------------------------------------------------------


def zero_series(d, order, backend) -> PoissonSeries:
    return PoissonSeries(d, order, backend, {})


def term_series(d, order, backend, u, v, coeff) -> PoissonSeries:
    m = monomial(u, v)
    if m.d != d:
        raise SeriesError("exponent length does not match d")
    return PoissonSeries(d, order, backend, {m: backend.coerce(coeff)})


def from_terms(d, order, backend, entries: Iterable) -> PoissonSeries:
    """Build a series from ``(u, v, coeff)`` triples, merging duplicates."""
    acc = {}
    for u, v, c in entries:
        m = monomial(u, v)
        c = backend.coerce(c)
        if m in acc:
            acc[m] = acc[m] + c
        else:
            acc[m] = c
    return PoissonSeries(d, order, backend, acc)


def action_series(d, order, backend, coeffs: dict) -> PoissonSeries:
    """Build an action polynomial from ``{action index: coeff}``."""
    return from_terms(d, order, backend,
                      ((m, m, c) for m, c in coeffs.items()))


# -- ring operations ----------------------------------------------------


def _check_compatible(a: PoissonSeries, b: PoissonSeries):
    if a.d != b.d:
        raise SeriesError(f"dimension mismatch: d={a.d} vs d={b.d}")
    require_same_backend(a.backend, b.backend)


def s_add(a: PoissonSeries, b: PoissonSeries, order: int) -> PoissonSeries:
    _check_compatible(a, b)
    backend = a.backend
    with backend.context():
        out = {m: c for m, c in a.terms.items() if m.degree <= order}
        for m, c in b.terms.items():
            if m.degree > order:
                continue
            if m in out:
                out[m] = out[m] + c
            else:
                out[m] = c
    return PoissonSeries(a.d, order, backend, out, real=(a.real and b.real) or None)


def s_scale(a: PoissonSeries, c, order: int) -> PoissonSeries:
    backend = a.backend
    c = backend.coerce(c)
    with backend.context():
        out = {m: cf * c for m, cf in a.terms.items() if m.degree <= order}
    real = (a.real and backend.is_real(c)) or None
    return PoissonSeries(a.d, order, backend, out, real=real)


def s_multiply(a: PoissonSeries, b: PoissonSeries, order: int) -> PoissonSeries:
    _check_compatible(a, b)
    backend = a.backend
    out = {}
    with backend.context():
        for m1, c1 in a.terms.items():
            deg1 = m1.degree
            if deg1 > order:
                continue
            for m2, c2 in b.terms.items():
                if deg1 + m2.degree > order:
                    continue
                m = Monomial(tuple(x + y for x, y in zip(m1.u, m2.u)),
                             tuple(x + y for x, y in zip(m1.v, m2.v)))
                c = c1 * c2
                if m in out:
                    out[m] = out[m] + c
                else:
                    out[m] = c
    return PoissonSeries(a.d, order, backend, out, real=(a.real and b.real) or None)


def series_combine(mode: str, a: PoissonSeries, b_or_c, order: int) -> PoissonSeries:
    """Ring operation followed by truncation to total degree <= order.

    Parameters
    ----------
    mode : str
        One of ``"add"``, ``"scale"``, ``"multiply"``.
    a : PoissonSeries
    b_or_c : PoissonSeries or scalar
        Second series for add/multiply, scalar for scale.
    order : int
        Truncation order of the result.
    """
    if mode == "add":
        return s_add(a, b_or_c, order)
    if mode == "scale":
        return s_scale(a, b_or_c, order)
    if mode == "multiply":
        return s_multiply(a, b_or_c, order)
    raise SeriesError(f"unknown combine mode {mode!r}")


def s_power(a: PoissonSeries, n: int, order: int) -> PoissonSeries:
    out = term_series(a.d, order, a.backend, (0,) * a.d, (0,) * a.d, 1)
    for _ in range(n):
        out = s_multiply(out, a, order)
    return out


# -- calculus -----------------------------------------------------------


def partial(a: PoissonSeries, var: str, j: int) -> PoissonSeries:
    """Partial derivative with respect to ``xi_j`` or ``eta_j`` (0-based j)."""
    if var not in ("xi", "eta"):
        raise SeriesError("var must be 'xi' or 'eta'")
    backend = a.backend
    out = {}
    with backend.context():
        for m, c in a.terms.items():
            e = m.u[j] if var == "xi" else m.v[j]
            if e == 0:
                continue
            if var == "xi":
                nm = Monomial(m.u[:j] + (e - 1,) + m.u[j + 1:], m.v)
            else:
                nm = Monomial(m.u, m.v[:j] + (e - 1,) + m.v[j + 1:])
            out[nm] = c * e
    return PoissonSeries(a.d, a.order, backend, out)


def poisson_bracket(a: PoissonSeries, b: PoissonSeries, order: int) -> PoissonSeries:
    """Poisson bracket truncated to total degree <= order.

    Uses the engine sign convention (module docstring); term-pair formula

        {xi^p eta^q, xi^r eta^s} -> i (q_j r_j - p_j s_j)
                                     xi^{p+r-e_j} eta^{q+s-e_j}.
    """
    _check_compatible(a, b)
    backend = a.backend
    d = a.d
    eye = backend.i()
    out = {}
    with backend.context():
        for m1, c1 in a.terms.items():
            deg1 = m1.degree
            for m2, c2 in b.terms.items():
                if deg1 + m2.degree - 2 > order:
                    continue
                base = c1 * c2
                for j in range(d):
                    pre = m1.v[j] * m2.u[j] - m1.u[j] * m2.v[j]
                    if not pre:
                        continue
                    m = Monomial(
                        tuple(m1.u[i] + m2.u[i] - (i == j) for i in range(d)),
                        tuple(m1.v[i] + m2.v[i] - (i == j) for i in range(d)),
                    )
                    c = eye * base * pre
                    if m in out:
                        out[m] = out[m] + c
                    else:
                        out[m] = c
    return PoissonSeries(d, order, backend, out, real=(a.real and b.real) or None)


def lie_transform(h: PoissonSeries, chi: PoissonSeries, order: int) -> PoissonSeries:
    """Exponential Lie series ``H o Phi^1_chi`` truncated at ``order``.

    ``H + {H,chi} + {{H,chi},chi}/2! + ...``; requires the generator to
    have lowest degree >= 3 so that the series terminates.
    """
    _check_compatible(h, chi)
    lo = chi.min_degree()
    if lo is not None and lo <= 2:
        raise SeriesError(
            f"generator has terms of degree {lo} <= 2; Lie series would not terminate"
        )
    backend = h.backend
    acc = h.with_order(order)
    term = acc
    k = 1
    with backend.context():
        while not term.is_zero():
            term = poisson_bracket(term, chi, order)
            if term.is_zero():
                break
            term = s_scale(term, backend.div(backend.one(), backend.coerce(k)), order)
            acc = s_add(acc, term, order)
            k += 1
    return acc


# -- evaluation ----------------------------------------------------------


def xy_to_xieta(xy, backend: Backend):
    """Real phase point (x1, y1, ..., xd, yd) -> (xi, eta) tuples.

    Uses ``xi = (x + i y)/sqrt(2)``; float backends only, since the
    conversion involves sqrt(2).
    """
    if backend.kind == "exact":
        raise BackendError("real-coordinate evaluation needs the float backend "
                           "(the conversion involves sqrt(2)); pass (xi, eta) instead")
    import mpmath
    if len(xy) % 2:
        raise SeriesError("real phase point must have even length")
    with backend.context():
        rt2 = mpmath.sqrt(2)
        xi = tuple(mpmath.mpc(xy[2 * j], xy[2 * j + 1]) / rt2 for j in range(len(xy) // 2))
        eta = tuple(mpmath.conj(z) for z in xi)
    return xi, eta


def evaluate(h: PoissonSeries, z, coords: str = "xieta", with_derivatives: bool = False):
    """Evaluate a series, and optionally its Hamiltonian vector field, at a point.

    Parameters
    ----------
    h : PoissonSeries
    z : tuple
        ``coords="xieta"``: a pair ``(xi, eta)`` of length-d scalar tuples.
        ``coords="xy"``: a flat sequence ``(x1, y1, ..., xd, yd)``.
    with_derivatives : bool
        When True, also return the field ``(xi_dot, eta_dot)`` with
        ``xi_dot_j = -i dH/deta_j`` and ``eta_dot_j = i dH/dxi_j``.

    Returns
    -------
    (value, field)
        ``field`` is None unless requested.
    """
    backend = h.backend
    if coords == "xy":
        xi, eta = xy_to_xieta(z, backend)
    elif coords == "xieta":
        xi, eta = z
        xi = tuple(backend.coerce(c) for c in xi)
        eta = tuple(backend.coerce(c) for c in eta)
    else:
        raise SeriesError(f"unknown coordinate tag {coords!r}")
    if len(xi) != h.d or len(eta) != h.d:
        raise SeriesError(f"phase point has dimension {len(xi)}, series has d={h.d}")

    def _eval(series):
        tot = backend.zero()
        with backend.context():
            for m, c in series.terms.items():
                val = c
                for j in range(h.d):
                    for _ in range(m.u[j]):
                        val = val * xi[j]
                    for _ in range(m.v[j]):
                        val = val * eta[j]
                tot = tot + val
        return tot

    value = _eval(h)
    field = None
    if with_derivatives:
        eye = backend.i()
        with backend.context():
            xidot = tuple((-1) * eye * _eval(partial(h, "eta", j)) for j in range(h.d))
            etadot = tuple(eye * _eval(partial(h, "xi", j)) for j in range(h.d))
        field = (xidot, etadot)
    return value, field


# -- serialization -------------------------------------------------------


def series_to_dict(a: PoissonSeries) -> dict:
    """Canonical JSON form with graded-lex term order."""
    terms = []
    for m, c in a.items_sorted():
        re_s, im_s = a.backend.format_parts(c)
        terms.append({"u": list(m.u), "v": list(m.v), "re": re_s, "im": im_s})
    return {
        "d": a.d,
        "N": a.order,
        "backend": a.backend.tag(),
        "real": a.real,
        "terms": terms,
    }


def series_from_dict(data: dict) -> PoissonSeries:
    from .scalars import backend_from_tag
    backend = backend_from_tag(data["backend"])
    terms = {}
    for t in data["terms"]:
        m = monomial(t["u"], t["v"])
        terms[m] = backend.parse_parts(t["re"], t["im"])
    return PoissonSeries(data["d"], data["N"], backend, terms)
