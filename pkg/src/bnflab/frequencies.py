"""Frequency vectors, resonance lattices and monomial classification.

Resonance decisions are lattice-exact: a monomial ``xi^u eta^v`` is
resonant iff ``u - v`` is zero or lies in the *integer* span of the
declared lattice vectors.  Floating comparison of the pairing
``<omega, u - v>`` against zero is never used for classification.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

from .scalars import Backend
from .series import PoissonSeries, SeriesError


class FrequencyError(ValueError):
    """Raised on invalid frequency data or dimension mismatch."""


def _hnf_rows(rows):
    """Integer row-echelon form (Hermite style) via unimodular row ops."""
    rows = [list(r) for r in rows if any(r)]
    if not rows:
        return []
    ncols = len(rows[0])
    out = []
    r0 = 0
    for col in range(ncols):
        idx = [i for i in range(r0, len(rows)) if rows[i][col] != 0]
        if not idx:
            continue
        while True:
            idx = [i for i in range(r0, len(rows)) if rows[i][col] != 0]
            if len(idx) <= 1:
                break
            piv = min(idx, key=lambda i: abs(rows[i][col]))
            rows[r0], rows[piv] = rows[piv], rows[r0]
            for i in idx:
                if i == r0 or rows[i][col] == 0:
                    continue
                q = rows[i][col] // rows[r0][col]
                rows[i] = [a - q * b for a, b in zip(rows[i], rows[r0])]
        idx = [i for i in range(r0, len(rows)) if rows[i][col] != 0]
        if not idx:
            continue
        if idx[0] != r0:
            rows[r0], rows[idx[0]] = rows[idx[0]], rows[r0]
        if rows[r0][col] < 0:
            rows[r0] = [-a for a in rows[r0]]
        out.append((col, rows[r0]))
        r0 += 1
    return out


def in_integer_span(w: Sequence[int], lattice: Sequence[Sequence[int]]) -> bool:
    """Whether integer vector ``w`` is an integer combination of ``lattice``."""
    w = [int(x) for x in w]
    if not any(w):
        return True
    if not lattice:
        return False
    for col, row in _hnf_rows(lattice):
        if w[col] % row[col] != 0:
            return False
        q = w[col] // row[col]
        w = [a - q * b for a, b in zip(w, row)]
    return not any(w)


@dataclass(frozen=True)
class FrequencyVector:
    """Frequencies plus an explicitly declared integer resonance lattice.

    Parameters
    ----------
    values : tuple
        Real scalars in the given backend.
    backend : Backend
    lattice : tuple of integer tuples
        Declared relations m with <m, omega> = 0.  Verified exactly on
        the exact backend.
    near_resonances : tuple of (integer tuple, scalar)
        Optional declared near-resonances with their gap values.
    """

    values: tuple
    backend: Backend
    lattice: Tuple[Tuple[int, ...], ...] = ()
    near_resonances: tuple = ()

    def __post_init__(self):
        vals = tuple(self.backend.coerce(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        for v in vals:
            if not self.backend.is_real(v):
                raise FrequencyError("frequency values must be real")
        lat = tuple(tuple(int(x) for x in m) for m in self.lattice)
        object.__setattr__(self, "lattice", lat)
        for m in lat:
            if len(m) != self.d:
                raise FrequencyError(f"lattice vector {m} has wrong length")
            if not any(m):
                raise FrequencyError("lattice vectors must be nonzero")
            if self.backend.kind == "exact":
                if not self.backend.is_zero(self.pairing(m)):
                    raise FrequencyError(
                        f"declared relation {m} does not annihilate omega exactly"
                    )

    @property
    def d(self) -> int:
        return len(self.values)

    def pairing(self, k: Sequence[int]):
        """<omega, k> in backend arithmetic."""
        if len(k) != self.d:
            raise FrequencyError(f"vector length {len(k)} != d={self.d}")
        with self.backend.context():
            tot = self.backend.zero()
            for w, kk in zip(self.values, k):
                tot = tot + w * int(kk)
        return tot

    def is_declared_resonant(self, k: Sequence[int]) -> bool:
        return in_integer_span(k, self.lattice)


def frequency_pairing(m, omega: FrequencyVector):
    """Pairing and resonance class of a monomial.

    Returns
    -------
    (pairing, cls)
        ``pairing = sum_j omega_j (u_j - v_j)``; ``cls`` is ``"resonant"``
        iff ``u - v`` is zero or in the integer span of the declared
        lattice, else ``"nonresonant"``.
    """
    if len(m.u) != omega.d:
        raise FrequencyError(f"monomial dimension {len(m.u)} != omega dimension {omega.d}")
    k = tuple(a - b for a, b in zip(m.u, m.v))
    pairing = omega.pairing(k)
    cls = "resonant" if omega.is_declared_resonant(k) else "nonresonant"
    return pairing, cls


def split_resonant(h: PoissonSeries, omega: FrequencyVector):
    """Split a series into (resonant, nonresonant) parts.

    With an empty lattice the resonant part is exactly the action part.
    ``res + nonres`` reconstructs the input term-for-term.
    """
    if h.d != omega.d:
        raise SeriesError(f"series d={h.d} does not match omega d={omega.d}")
    res = {}
    nonres = {}
    for m, c in h.terms.items():
        _, cls = frequency_pairing(m, omega)
        (res if cls == "resonant" else nonres)[m] = c
    return (PoissonSeries(h.d, h.order, h.backend, res),
            PoissonSeries(h.d, h.order, h.backend, nonres))
