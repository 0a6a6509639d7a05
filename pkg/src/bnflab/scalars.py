"""Coefficient backends for Poisson series.

Two backends are supported:

* ``exact`` -- complex numbers with rational real and imaginary parts
  (Gaussian rationals).  No rounding ever occurs; equality is exact.
* ``float`` -- mpmath complex numbers at a configurable mantissa size
  (at least 128 bits).  Every series operation runs inside a working
  precision context so the declared precision propagates.

All series code talks to a :class:`Backend` instance instead of raw
numbers, which keeps the two coefficient domains interchangeable.
"""

from __future__ import annotations

import contextlib
from fractions import Fraction

import mpmath

MIN_FLOAT_BITS = 128
DEFAULT_FLOAT_BITS = 256


class BackendError(ValueError):
    """Raised on invalid backend construction or backend mismatch."""


class GaussianRational:
    """Complex number with Fraction real and imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = re if isinstance(re, Fraction) else Fraction(re)
        self.im = im if isinstance(im, Fraction) else Fraction(im)

    def __add__(self, other):
        other = _as_gr(other)
        if other is NotImplemented:
            return NotImplemented
        return GaussianRational(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __neg__(self):
        return GaussianRational(-self.re, -self.im)

    def __sub__(self, other):
        other = _as_gr(other)
        if other is NotImplemented:
            return NotImplemented
        return GaussianRational(self.re - other.re, self.im - other.im)

    def __rsub__(self, other):
        other = _as_gr(other)
        if other is NotImplemented:
            return NotImplemented
        return other - self

    def __mul__(self, other):
        other = _as_gr(other)
        if other is NotImplemented:
            return NotImplemented
        return GaussianRational(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_gr(other)
        if other is NotImplemented:
            return NotImplemented
        den = other.re * other.re + other.im * other.im
        if den == 0:
            raise ZeroDivisionError("division by zero Gaussian rational")
        return GaussianRational(
            (self.re * other.re + self.im * other.im) / den,
            (self.im * other.re - self.re * other.im) / den,
        )

    def __rtruediv__(self, other):
        other = _as_gr(other)
        if other is NotImplemented:
            return NotImplemented
        return other / self

    def conjugate(self):
        return GaussianRational(self.re, -self.im)

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            return self.im == 0 and self.re == other
        if isinstance(other, GaussianRational):
            return self.re == other.re and self.im == other.im
        return NotImplemented

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return self.re != 0 or self.im != 0

    def __repr__(self):
        return f"GaussianRational({self.re!r}, {self.im!r})"

    def __complex__(self):
        return complex(self.re) + 1j * complex(self.im)


def _as_gr(x):
    if isinstance(x, GaussianRational):
        return x
    if isinstance(x, (int, Fraction)):
        return GaussianRational(x)
    return NotImplemented


def _fraction_str(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


class Backend:
    """Factory and helper namespace for one coefficient domain.

    Parameters
    ----------
    kind : str
        Either ``"exact"`` or ``"float"``.
    bits : int, optional
        Mantissa size for the float backend.  Ignored for ``"exact"``.
    """

    __slots__ = ("kind", "bits")

    def __init__(self, kind="exact", bits=DEFAULT_FLOAT_BITS):
        if kind not in ("exact", "float"):
            raise BackendError(f"unknown backend kind {kind!r}")
        if kind == "float" and bits < MIN_FLOAT_BITS:
            raise BackendError(
                f"float backend requires at least {MIN_FLOAT_BITS} mantissa bits, got {bits}"
            )
        self.kind = kind
        self.bits = int(bits) if kind == "float" else 0

    # -- construction -------------------------------------------------

    def scalar(self, re=0, im=0):
        """Build a scalar from exact or floating inputs."""
        if self.kind == "exact":
            if isinstance(re, GaussianRational):
                base = re
            else:
                base = GaussianRational(Fraction(re))
            if im:
                base = base + GaussianRational(0, Fraction(im))
            return base
        with self.context():
            return mpmath.mpc(re) + mpmath.mpc(0, 1) * mpmath.mpc(im)

    def zero(self):
        return self.scalar(0)

    def one(self):
        return self.scalar(1)

    def i(self):
        return self.scalar(0, 1)

    def from_fraction_parts(self, re: Fraction, im: Fraction):
        if self.kind == "exact":
            return GaussianRational(re, im)
        with self.context():
            return mpmath.mpc(mpmath.mpf(re.numerator) / re.denominator,
                              mpmath.mpf(im.numerator) / im.denominator)

    # -- predicates and pieces ----------------------------------------

    def is_scalar(self, x) -> bool:
        if self.kind == "exact":
            return isinstance(x, (GaussianRational, int, Fraction))
        return isinstance(x, (mpmath.mpc, mpmath.mpf, int, float))

    def coerce(self, x):
        """Map plain ints/Fractions (and floats on the float backend) to scalars."""
        if self.kind == "exact":
            if isinstance(x, GaussianRational):
                return x
            if isinstance(x, (int, Fraction)):
                return GaussianRational(x)
            raise BackendError(f"cannot coerce {type(x).__name__} into exact backend")
        if isinstance(x, mpmath.mpc):
            return x
        with self.context():
            if isinstance(x, (int, float, mpmath.mpf)):
                return mpmath.mpc(x)
            if isinstance(x, Fraction):
                return mpmath.mpc(mpmath.mpf(x.numerator) / x.denominator)
            if isinstance(x, GaussianRational):
                return mpmath.mpc(mpmath.mpf(x.re.numerator) / x.re.denominator,
                                  mpmath.mpf(x.im.numerator) / x.im.denominator)
        raise BackendError(f"cannot coerce {type(x).__name__} into float backend")

    def is_zero(self, x) -> bool:
        if self.kind == "exact":
            return not x
        return x == 0

    def conj(self, x):
        if self.kind == "exact":
            return x.conjugate()
        with self.context():
            return mpmath.conj(x)

    def real(self, x):
        return x.re if self.kind == "exact" else x.real

    def imag(self, x):
        return x.im if self.kind == "exact" else x.imag

    def is_real(self, x) -> bool:
        return self.imag(x) == 0

    def div(self, a, b):
        with self.context():
            return a / b

    def abs2(self, x):
        """|x|^2 in the backend's own arithmetic (exact on exact)."""
        with self.context():
            if self.kind == "exact":
                return x.re * x.re + x.im * x.im
            return (x * mpmath.conj(x)).real

    def magnitude(self, x) -> float:
        """|x| as a Python float, for logs and reports only."""
        if self.kind == "exact":
            return float(mpmath.sqrt(mpmath.mpf(self.abs2(x).numerator) /
                                     self.abs2(x).denominator))
        with self.context():
            return float(mpmath.fabs(x))

    def to_complex(self, x) -> complex:
        if self.kind == "exact":
            return complex(x)
        return complex(x)

    # -- precision management ------------------------------------------

    def context(self):
        """Working-precision context; a no-op for the exact backend."""
        if self.kind == "exact":
            return contextlib.nullcontext()
        return mpmath.workprec(self.bits)

    # -- serialization --------------------------------------------------

    def format_parts(self, x):
        """Canonical (re, im) string pair used in JSON output."""
        if self.kind == "exact":
            return _fraction_str(x.re), _fraction_str(x.im)
        dps = int(self.bits * 0.30103) + 2
        with self.context():
            return (mpmath.nstr(x.real, dps), mpmath.nstr(x.imag, dps))

    def parse_parts(self, re_s: str, im_s: str):
        if self.kind == "exact":
            return GaussianRational(Fraction(re_s), Fraction(im_s))
        with self.context():
            return mpmath.mpc(mpmath.mpf(re_s), mpmath.mpf(im_s))

    def tag(self) -> str:
        return "exact" if self.kind == "exact" else f"float{self.bits}"

    def __eq__(self, other):
        return (isinstance(other, Backend) and self.kind == other.kind
                and self.bits == other.bits)

    def __hash__(self):
        return hash((self.kind, self.bits))

    def __repr__(self):
        return f"Backend({self.tag()!r})"


def backend_from_tag(tag: str) -> Backend:
    if tag == "exact":
        return Backend("exact")
    if tag.startswith("float"):
        return Backend("float", int(tag[5:] or DEFAULT_FLOAT_BITS))
    raise BackendError(f"unknown backend tag {tag!r}")


EXACT = Backend("exact")


def require_same_backend(a: Backend, b: Backend):
    if a != b:
        raise BackendError(f"backend mismatch: {a.tag()} vs {b.tag()}")
