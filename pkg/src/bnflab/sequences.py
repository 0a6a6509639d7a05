"""Resonance sequences, continued-fraction discovery and scale profiles.

The reference constructions pick coupling indices ``(k_n, l_n)`` whose
gaps ``k_n w_1 + l_n w_2`` shrink double-exponentially; those constants
do not exist at desk scale.  A :class:`ScaleProfile` supplies the
configurable surrogates (gap thresholds, amplitudes, the frozen
coupling-plane action) and validates the ordering assumptions the
downstream experiments rely on, failing loudly when they are violated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence, Tuple

import mpmath

from .scalars import Backend
from .frequencies import FrequencyVector


class SequenceError(ValueError):
    """Raised when a resonance sequence cannot be built as requested."""


class ProfileError(ValueError):
    """Raised when a scale profile violates an ordering assumption."""


# -- continued fractions --------------------------------------------------


def cf_terms_exact(x: Fraction, max_terms: int = 64):
    """Continued-fraction terms of a rational number (terminating)."""
    out = []
    p, q = x.numerator, x.denominator
    for _ in range(max_terms):
        a, r = divmod(p, q)
        out.append(a)
        if r == 0:
            break
        p, q = q, r
    return out


def cf_terms_mpf(x, bits: int, max_terms: int = 64):
    """Continued-fraction terms of an mpf, stopped before precision runs out."""
    out = []
    with mpmath.workprec(bits):
        y = mpmath.mpf(x)
        budget = mpmath.mpf(2) ** (bits // 2)
        qprev, q = 0, 1
        for _ in range(max_terms):
            a = int(mpmath.floor(y))
            out.append(a)
            frac = y - a
            if frac == 0:
                break
            qprev, q = q, a * q + qprev
            if q > budget:
                break
            y = 1 / frac
    return out


def convergents(terms: Sequence[int]):
    """Yield convergents (p, q) of a continued fraction [a0; a1, ...]."""
    p_prev, p = 1, terms[0]
    q_prev, q = 0, 1
    yield p, q
    for a in terms[1:]:
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
        yield p, q


def ratio_convergents(omega: FrequencyVector, sign: int = +1, max_terms: int = 64):
    """Convergents (l, k) of ``-w1/w2`` (``sign=+1``) or ``w1/w2`` (``sign=-1``).

    Candidate coupling pairs are ``(k, l) = (q, p)`` since
    ``k w1 + sign*l w2 ~ 0`` means ``l/k ~ -sign*w1/w2``.
    """
    backend = omega.backend
    w1, w2 = omega.values[0], omega.values[1]
    if backend.is_zero(w2):
        raise SequenceError("w2 must be nonzero")
    if backend.kind == "exact":
        x = Fraction(-sign) * w1.re / w2.re
        if x <= 0:
            raise SequenceError("frequency ratio has the wrong sign for this mode")
        terms = cf_terms_exact(x, max_terms)
    else:
        with backend.context():
            x = -sign * w1.real / w2.real
            if x <= 0:
                raise SequenceError("frequency ratio has the wrong sign for this mode")
            terms = cf_terms_mpf(x, backend.bits, max_terms)
    for p, q in convergents(terms):
        if p >= 1 and q >= 1:
            yield q, p  # (k, l)


# -- scale profile ----------------------------------------------------------


@dataclass(frozen=True)
class ScaleProfile:
    """Desk-scale surrogate for the construction's constants.

    Parameters
    ----------
    gap_threshold_base : float
        Mode-L gap filter: entry n requires 0 < |gap| < base^-(n+2).
    amplitude : str or dict
        ``"printed"`` -> a_n = exp(-n (k_n + l_n)); ``"unit"`` -> 1;
        or an explicit ``{n: value}`` map (rationals allowed, needed on
        the exact backend where exp() is unavailable).
    gap_surrogate : str or dict or None
        Replaces the true gap *after* convergent selection.
        ``"super-liouville"`` -> gap_n = exp(-n^2 (k_n + l_n)), the
        weakest decay that still forces divergence of the normal form.
    coupling_action : float
        The frozen third-plane action (the coupling strength knob).
    index_start : int
        Index given to the first discovered entry.
    """

    name: str = "desk-default"
    gap_threshold_base: float = 10.0
    amplitude: object = "printed"
    gap_surrogate: object = None
    coupling_action: float = 1e-4
    index_start: int = 0
    max_terms: int = 64

    def threshold(self, n: int) -> float:
        return float(self.gap_threshold_base) ** (-(n + 2))

    def amplitude_value(self, n: int, k: int, l: int, backend: Backend):
        if isinstance(self.amplitude, dict):
            val = self.amplitude.get(n, self.amplitude.get(str(n)))
            if val is None:
                raise ProfileError(f"amplitude profile has no entry for n={n}")
            return _coerce_cfg(val, backend)
        if self.amplitude == "unit":
            return backend.one()
        if self.amplitude == "printed":
            if backend.kind == "exact":
                raise ProfileError(
                    "printed amplitudes exp(-n(k+l)) are irrational; use the "
                    "'unit' or an explicit rational amplitude profile on the exact backend")
            with backend.context():
                return backend.coerce(mpmath.exp(-n * (k + l)))
        raise ProfileError(f"unknown amplitude profile {self.amplitude!r}")

    def surrogate_gap(self, n: int, k: int, l: int, backend: Backend):
        if self.gap_surrogate is None:
            return None
        if isinstance(self.gap_surrogate, dict):
            val = self.gap_surrogate.get(n, self.gap_surrogate.get(str(n)))
            if val is None:
                raise ProfileError(f"gap surrogate has no entry for n={n}")
            return _coerce_cfg(val, backend)
        if self.gap_surrogate == "super-liouville":
            if backend.kind == "exact":
                raise ProfileError("the super-Liouville surrogate is irrational; "
                                   "use the float backend or explicit values")
            with backend.context():
                return backend.coerce(mpmath.exp(-n * n * (k + l)))
        raise ProfileError(f"unknown gap surrogate {self.gap_surrogate!r}")


DESK_PROFILE = ScaleProfile()


def _coerce_cfg(value, backend: Backend):
    """Coerce a config-level number (int, float, Fraction, 'p/q' string)."""
    if isinstance(value, str):
        value = Fraction(value)
    if isinstance(value, float) and backend.kind == "exact":
        value = Fraction(value)
    return backend.coerce(value)


# -- resonance sequences -----------------------------------------------------


@dataclass
class ResonanceEntry:
    """One coupling term of a model family.

    ``gap`` is the value used downstream (b_n, closed forms); when a
    surrogate is active the actual pairing is kept in ``true_gap``.
    ``b = a / gap`` (undefined for exactly resonant entries).
    """

    n: int
    k: int
    l: int
    gap: object
    a: object
    b: object = None
    zeta: object = None
    i4: object = None
    khat: Optional[int] = None
    true_gap: object = None


@dataclass
class ResonanceSequence:
    omega: FrequencyVector
    mode: str
    entries: List[ResonanceEntry]
    profile: ScaleProfile = DESK_PROFILE

    def entry(self, n: int) -> ResonanceEntry:
        for e in self.entries:
            if e.n == n:
                return e
        raise SequenceError(f"no sequence entry with index {n}")

    def __len__(self):
        return len(self.entries)

    def validate(self):
        """Re-check the defining invariants of the stored entries."""
        backend = self.omega.backend
        prev_sum = 0
        for e in self.entries:
            if e.k < 1 or e.l < 1:
                raise SequenceError(f"entry {e.n}: k, l must be >= 1")
            if e.k + e.l <= prev_sum:
                raise SequenceError("k_n + l_n must increase strictly")
            prev_sum = e.k + e.l
            if e.khat is not None and not (e.l <= e.khat < e.k):
                raise SequenceError(f"entry {e.n}: need l <= khat < k")
            if self.mode == "R":
                if e.i4 is None:
                    raise SequenceError("mode R entries carry I4")
                with backend.context():
                    if backend.kind == "exact" and e.i4.re <= 0:
                        raise SequenceError("I4 must be positive")
                    shifted = (self.omega.values[0] + e.i4) * e.k \
                        + self.omega.values[1] * e.l
                    if backend.kind == "exact" and not backend.is_zero(shifted):
                        raise SequenceError(
                            f"entry {e.n}: k(w1+I4)+l w2 != 0 on the exact backend")
        return True

    def to_dict(self):
        backend = self.omega.backend

        def fmt(x):
            if x is None:
                return None
            re_s, im_s = backend.format_parts(backend.coerce(x))
            return {"re": re_s, "im": im_s}

        return {
            "mode": self.mode,
            "profile": self.profile.name,
            "entries": [{
                "n": e.n, "k": e.k, "l": e.l,
                "gap": fmt(e.gap), "a": fmt(e.a), "b": fmt(e.b),
                "zeta": fmt(e.zeta), "i4": fmt(e.i4), "khat": e.khat,
                "true_gap": fmt(e.true_gap),
            } for e in self.entries],
        }


def _mode_predicate(mode, omega, profile, idx, k, l, gap):
    backend = omega.backend
    mag = backend.magnitude(gap)
    if mode == "L":
        return 0 < mag < profile.threshold(idx)
    if mode in ("B", "B-samesign"):
        return k + l > 2 and 0 < mag < 1.0 / k
    if mode == "R":
        if k + l <= 2:
            return False
        if backend.kind == "exact":
            neg = gap.re < 0
        else:
            neg = gap.real < 0
        # Dirichlet-style decay; the |w2| factor keeps the test meaningful
        # for badly approximable ratios where 1/k^2 is unattainable.
        bound = max(1.0, backend.magnitude(omega.values[1])) / k
        return neg and 0 < mag < bound
    raise SequenceError(f"unknown sequence mode {mode!r}")


def _separation_ok(omega, i4, prev_sum, backend):
    """(NR)-style check: no small pair resonates with the shifted frequency."""
    if prev_sum <= 0:
        return True
    with backend.context():
        w1 = omega.values[0] + i4
        w2 = omega.values[1]
        for kk in range(0, prev_sum + 1):
            for ll in range(0, prev_sum + 1 - kk):
                if kk == 0 and ll == 0:
                    continue
                if backend.is_zero(w1 * kk + w2 * ll):
                    return False
    return True


def resonance_sequence(omega: FrequencyVector, count: int, mode: str,
                       profile: ScaleProfile = DESK_PROFILE,
                       khat_epsilon: float = 0.005,
                       overrides: Optional[dict] = None) -> ResonanceSequence:
    """Build the (k_n, l_n, gap, a_n, b_n, ...) data for ``count`` entries.

    Entries come from continued-fraction convergents of the frequency
    ratio, filtered by the mode's gap predicate under the active scale
    profile:

    * ``"L"``   -- 0 < |gap| < threshold(n) (profile surrogate of the
      Liouville condition);
    * ``"B"`` / ``"B-samesign"`` -- |gap| < 1/k and k + l > 2;
    * ``"R"``   -- gap < 0 (so the shift I4 = -gap/k is a positive
      action) with Dirichlet-style decay, plus the separation check that
      no smaller pair resonates with the shifted frequency;
    * ``"exact-resonant"`` -- multiples of the declared lattice relation.

    ``overrides`` may carry ``{"entries": [...]}`` to bypass discovery
    (each item: n, k, l, gap and optional a, zeta, khat), or
    ``{"zetas": [...]}`` / ``{"khat": int}`` applied after discovery.

    Raises
    ------
    SequenceError
        When fewer than ``count`` admissible convergents exist; the
        message reports how many were found.
    """
    backend = omega.backend
    overrides = overrides or {}

    def finish(entries):
        seq = ResonanceSequence(omega=omega, mode=mode, entries=entries, profile=profile)
        zetas = overrides.get("zetas")
        if zetas is not None:
            for e, z in zip(seq.entries, zetas):
                e.zeta = _coerce_cfg(z, backend)
        khat = overrides.get("khat")
        if khat is not None:
            for e in seq.entries:
                e.khat = int(khat)
        seq.validate()
        return seq

    if "entries" in overrides:
        entries = []
        for i, item in enumerate(overrides["entries"]):
            n = int(item.get("n", profile.index_start + i))
            k, l = int(item["k"]), int(item["l"])
            gap = item.get("gap")
            gap = omega.pairing((k, l) + (0,) * (omega.d - 2)) if gap is None \
                else _coerce_cfg(gap, backend)
            a = item.get("a")
            a = profile.amplitude_value(n, k, l, backend) if a is None else _coerce_cfg(a, backend)
            b = None if backend.is_zero(gap) else backend.div(a, gap)
            i4 = None
            if mode == "R":
                i4 = backend.div(-gap, backend.coerce(k))
            khat = item.get("khat")
            if khat is None and mode.startswith("B"):
                khat = int(math.floor((1 + khat_epsilon) * l))
            zeta = item.get("zeta")
            if zeta is not None:
                zeta = _coerce_cfg(zeta, backend)
            entries.append(ResonanceEntry(n=n, k=k, l=l, gap=gap, a=a, b=b,
                                          zeta=zeta, i4=i4,
                                          khat=None if khat is None else int(khat)))
        return finish(entries)

    if mode == "exact-resonant":
        rel = next((m for m in omega.lattice
                    if m[0] >= 1 and m[1] >= 1 and not any(m[2:])), None)
        if rel is None:
            raise SequenceError("exact-resonant mode needs a declared lattice "
                                "relation on the first two planes")
        entries = []
        for i in range(count):
            n = profile.index_start + i
            k, l = rel[0] * (i + 1), rel[1] * (i + 1)
            a = profile.amplitude_value(n, k, l, backend)
            entries.append(ResonanceEntry(n=n, k=k, l=l, gap=backend.zero(), a=a, b=None))
        return finish(entries)

    sign = -1 if mode == "B-samesign" else +1
    entries = []
    prev_sum = 0
    for k, l in ratio_convergents(omega, sign=sign, max_terms=profile.max_terms):
        if len(entries) == count:
            break
        if k + l <= prev_sum:
            continue
        n = profile.index_start + len(entries)
        kvec = (k, sign * l) + (0,) * (omega.d - 2)
        gap = omega.pairing(kvec)
        if not _mode_predicate(mode, omega, profile, n, k, l, gap):
            continue
        i4 = None
        if mode == "R":
            i4 = backend.div(-gap, backend.coerce(k))
            if not _separation_ok(omega, i4, prev_sum, backend):
                continue
        true_gap = None
        used_gap = gap
        sur = profile.surrogate_gap(n, k, l, backend)
        if sur is not None:
            true_gap, used_gap = gap, sur
        a = profile.amplitude_value(n, k, l, backend)
        b = None if backend.is_zero(used_gap) else backend.div(a, used_gap)
        khat = None
        if mode.startswith("B"):
            khat = int(math.floor((1 + khat_epsilon) * l))
        entries.append(ResonanceEntry(n=n, k=k, l=l, gap=used_gap, a=a, b=b,
                                      i4=i4, khat=khat, true_gap=true_gap))
        prev_sum = k + l
    if len(entries) < count:
        raise SequenceError(
            f"only {len(entries)} of {count} requested entries admissible in "
            f"mode {mode} (continued fraction exhausted)")
    return finish(entries)


# -- profile ordering validation ---------------------------------------------


def validate_profile_for_coupling(seq: ResonanceSequence, dominant_n: int):
    """Check the ordering assumptions the coupled experiment leans on.

    * effective coupling a_eff = I3 * a_n is small: a_eff <= 1/100
      (so a_eff^2 << a_eff);
    * the resonance defect is a second-order effect: |gap_n| / k_n <= a_eff^2
      unless the entry is exactly resonant;
    * the accumulated prior generators stay a small correction:
      I3 * sum_{j<n} |b_j| * max(1, ln k_j) <= I3^0.9.

    Raises :class:`ProfileError` naming the violated ordering.
    """
    backend = seq.omega.backend
    big_i = seq.profile.coupling_action
    if not (0 < big_i < 1):
        raise ProfileError("coupling action must lie in (0, 1)")
    e = seq.entry(dominant_n)
    a_eff = big_i * backend.magnitude(e.a)
    if a_eff > 1e-2:
        raise ProfileError(
            f"effective coupling a_eff={a_eff:.3g} too large (need <= 0.01 so a^2 << a)")
    if e.i4 is not None:
        # mode R: the I4 shift cancels the gap; check the shifted pairing
        with backend.context():
            shifted = (seq.omega.values[0] + e.i4) * e.k + seq.omega.values[1] * e.l
        gap_mag = backend.magnitude(shifted)
    else:
        gap_mag = backend.magnitude(e.gap)
    if gap_mag > 0 and gap_mag / e.k > a_eff ** 2:
        raise ProfileError(
            f"resonance defect |gap|/k = {gap_mag / e.k:.3g} exceeds a_eff^2 = "
            f"{a_eff ** 2:.3g}; the resonant approximation breaks down")
    prior = 0.0
    for other in seq.entries:
        if other.n >= dominant_n or other.b is None:
            continue
        prior += backend.magnitude(other.b) * max(1.0, math.log(other.k))
    if big_i * prior > big_i ** 0.9:
        raise ProfileError(
            f"prior-generator weight I3*sum|b_j|ln k_j = {big_i * prior:.3g} exceeds "
            f"I3^0.9 = {big_i ** 0.9:.3g}")
    return True
