"""Exact tip-exponent arithmetic for cone Laplacians and their squares.

Separating variables at a conical point of cross-section spectrum
{lambda_j <= 0} turns the Laplacian on mode j into an Euler operator whose
characteristic ("indicial") polynomial is

    p_j(z) = z^2 + (n - 1) z + lambda_j ,    n = surface dimension,

so solutions behave like x^q (times powers of log x at multiple roots) with

    q_j(+-) = -(n-1)/2 +- sqrt( ((n-1)/2)^2 - lambda_j ).

For the squared Laplacian the exponent set per mode is the root set of
p_j(z) * p_j(z - 2), i.e. the mode roots and their shifts by +2, with
multiplicities merged exactly when values coincide.  Roots are stored as the
exponents q of the solution branches x^q.

Every quantity here is exact: for rational inputs all radicands
((n-1)/2)^2 - lambda_j are rational, so values live in the set
{a + b*sqrt(r) : a, b, r rational} which the ``Surd`` type models with exact
comparisons against rationals (no floating point in any decision).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .geometry import BoundarySpectrum, exact_number

__all__ = [
    "Surd",
    "IndicialRoot",
    "GammaWindow",
    "AsymptoticSpace",
    "MinimalDomainResult",
    "laplacian_indicial_roots",
    "bilaplacian_indicial_roots",
    "ch_gamma_window",
    "laplacian_gamma_window",
    "asymptotic_space",
    "minimal_domain_check",
    "interpolation_exclusions",
]

#: No root of p_j(z) p_j(z-2) can exceed this log-power (double-double roots
#: would need two coincidences at once, which the shift structure forbids).
LOG_POWER_BOUND = 3


def _sqrt_fraction(f: Fraction) -> Fraction | None:
    """Exact square root of a nonnegative Fraction, or None if irrational."""
    if f < 0:
        return None
    pn, pd = f.numerator, f.denominator
    rn, rd = math.isqrt(pn), math.isqrt(pd)
    if rn * rn == pn and rd * rd == pd:
        return Fraction(rn, rd)
    return None


class Surd:
    """Exact real number of the form a + b*sqrt(r) with a, b, r rational, r >= 0.

    Perfect-square radicands fold into the rational part on construction.
    Comparisons against rationals (and equality against any Surd) are exact.
    """

    __slots__ = ("a", "b", "r")

    def __init__(self, a, b=0, r=0):
        a, b, r = exact_number(a), exact_number(b), exact_number(r)
        if r < 0:
            raise ValueError("negative radicand")
        if b == 0:
            r = Fraction(0)
        else:
            root = _sqrt_fraction(r)
            if root is not None:
                a, b, r = a + b * root, Fraction(0), Fraction(0)
        self.a, self.b, self.r = a, b, r

    @classmethod
    def sqrt(cls, radicand) -> "Surd":
        return cls(0, 1, radicand)

    # ----------------------------------------------------------- arithmetic

    @property
    def is_rational(self) -> bool:
        return self.b == 0

    def __add__(self, other):
        if isinstance(other, Surd):
            if other.b == 0:
                return Surd(self.a + other.a, self.b, self.r)
            if self.b == 0:
                return Surd(self.a + other.a, other.b, other.r)
            if self.r == other.r:
                return Surd(self.a + other.a, self.b + other.b, self.r)
            raise ArithmeticError("cannot add surds with different radicands exactly")
        return Surd(self.a + exact_number(other), self.b, self.r)

    __radd__ = __add__

    def __neg__(self):
        return Surd(-self.a, -self.b, self.r)

    def __sub__(self, other):
        return self.__add__(-other if isinstance(other, Surd) else -exact_number(other))

    def __rsub__(self, other):
        return (-self).__add__(exact_number(other))

    # ----------------------------------------------------------- comparisons

    def _sign(self) -> int:
        """Exact sign of a + b*sqrt(r)."""
        a, b, r = self.a, self.b, self.r
        if b == 0:
            return (a > 0) - (a < 0)
        if a == 0:
            return 1 if b > 0 else -1
        if a > 0 and b > 0:
            return 1
        if a < 0 and b < 0:
            return -1
        lhs, rhs = a * a, b * b * r  # compare |a| vs |b|sqrt(r)
        if lhs == rhs:
            return 0
        if a > 0:  # b < 0 here
            return 1 if lhs > rhs else -1
        return 1 if rhs > lhs else -1

    def _as_surd(self, other) -> "Surd":
        return other if isinstance(other, Surd) else Surd(exact_number(other))

    def __eq__(self, other) -> bool:
        try:
            o = self._as_surd(other)
        except TypeError:
            return NotImplemented
        if self.b == 0 or o.b == 0 or self.r == o.r:
            try:
                return (self - o)._sign() == 0
            except ArithmeticError:
                pass
        # cross-radical case: b1*sqrt(r1) - b2*sqrt(r2) == a2 - a1 =: p
        p = o.a - self.a
        t = (self.b ** 2 * self.r + o.b ** 2 * o.r - p * p) / (2 * self.b * o.b)
        if t < 0 or t * t != self.r * o.r:
            return False
        coef = self.b - o.b * t / self.r  # expression reduces to coef*sqrt(r1) == p
        if coef == 0:
            return p == 0
        ratio = p / coef
        return ratio >= 0 and ratio * ratio == self.r

    def __hash__(self):
        # hash by float value; exact equality above keeps semantics consistent
        # for the rational case, which is the only one placed in sets here.
        return hash(self.a) if self.b == 0 else hash(float(self))

    def _compare(self, other) -> int:
        o = self._as_surd(other)
        diff = self - o  # raises ArithmeticError for distinct radicands
        return diff._sign()

    def __lt__(self, other):
        return self._compare(other) < 0

    def __le__(self, other):
        return self._compare(other) <= 0

    def __gt__(self, other):
        return self._compare(other) > 0

    def __ge__(self, other):
        return self._compare(other) >= 0

    def __float__(self) -> float:
        return float(self.a) + float(self.b) * math.sqrt(float(self.r))

    def __repr__(self) -> str:
        if self.b == 0:
            return str(self.a)
        mag = abs(self.b)
        tail = f"sqrt({self.r})" if mag == 1 else f"({mag})*sqrt({self.r})"
        if self.a == 0:
            return tail if self.b > 0 else f"-{tail}"
        sign = "+" if self.b > 0 else "-"
        return f"{self.a} {sign} {tail}"

    def exact_str(self) -> str:
        return repr(self)


def _exact_min(x, y):
    """Exact min of a Surd/Fraction pair (single-radical comparison)."""
    xs = x if isinstance(x, Surd) else Surd(x)
    return x if xs._compare(y) <= 0 else y


def _spectrum_entries(spectrum) -> list[tuple[int, Fraction, int]]:
    """Normalize a spectrum argument to (mode, eigenvalue, multiplicity) triples."""
    if isinstance(spectrum, BoundarySpectrum):
        return [(e.mode, e.eigenvalue_exact, e.multiplicity) for e in spectrum.entries]
    out = []
    for entry in spectrum:
        k, lam = entry[0], exact_number(entry[1])
        mult = entry[2] if len(entry) > 2 else (1 if k == 0 else 2)
        out.append((int(k), lam, int(mult)))
    return out


def _check_dimension(n: int):
    if not isinstance(n, int) or n < 1:
        raise ValueError(f"surface dimension n must be a positive integer, got {n!r}")


def _radicand(n: int, lam: Fraction) -> Fraction:
    return Fraction(n - 1, 2) ** 2 - lam


@dataclass(frozen=True)
class IndicialRoot:
    """One exponent q of a solution branch x^q (times log^p x for p < log_power_max + 1).

    ``multiplicity`` is the algebraic multiplicity of q as an indicial
    polynomial root; the maximal log power of the branch is multiplicity - 1.
    """

    operator: str          # "laplacian" or "bilaplacian"
    mode: int
    value: Surd
    multiplicity: int

    @property
    def log_power_max(self) -> int:
        return self.multiplicity - 1

    @property
    def value_float(self) -> float:
        return float(self.value)


def laplacian_indicial_roots(n: int, spectrum) -> list[IndicialRoot]:
    """Exponents q with Laplacian-harmonic branches x^q per angular mode.

    Roots come in pairs -(n-1)/2 +- sqrt(((n-1)/2)^2 - lambda_j); the pair
    collapses to one double root (with a log branch) exactly when the
    radicand vanishes, e.g. the mode-0 pair {1, log x} on a surface.
    """
    _check_dimension(n)
    shift = -Fraction(n - 1, 2)
    out: list[IndicialRoot] = []
    for mode, lam, _ in _spectrum_entries(spectrum):
        rad = _radicand(n, lam)
        if rad == 0:
            out.append(IndicialRoot("laplacian", mode, Surd(shift), 2))
        else:
            root = Surd.sqrt(rad)
            out.append(IndicialRoot("laplacian", mode, Surd(shift) - root, 1))
            out.append(IndicialRoot("laplacian", mode, Surd(shift) + root, 1))
    return out


def bilaplacian_indicial_roots(n: int, spectrum) -> list[IndicialRoot]:
    """Exponent set of the squared Laplacian per mode: roots of p(z) p(z-2).

    The set is {q-, q+, q- + 2, q+ + 2} with exact multiplicity merging:
    radicand 0 gives double roots at q and q + 2, radicand 1 makes q- + 2
    collide with q+ (one double root), and no other coincidences are
    possible.  Log powers stay below LOG_POWER_BOUND structurally.
    """
    _check_dimension(n)
    shift = -Fraction(n - 1, 2)
    out: list[IndicialRoot] = []
    for mode, lam, _ in _spectrum_entries(spectrum):
        rad = _radicand(n, lam)
        if rad == 0:
            base = [(Surd(shift), 2), (Surd(shift) + 2, 2)]
        else:
            root = Surd.sqrt(rad)
            values = [Surd(shift) - root, Surd(shift) + root,
                      Surd(shift) - root + 2, Surd(shift) + root + 2]
            base = []
            for v in values:
                for i, (w, m) in enumerate(base):
                    if w == v:
                        base[i] = (w, m + 1)
                        break
                else:
                    base.append((v, 1))
        for value, mult in sorted(base, key=lambda t: float(t[0])):
            assert mult - 1 < LOG_POWER_BOUND
            out.append(IndicialRoot("bilaplacian", mode, value, mult))
    return out


@dataclass(frozen=True)
class GammaWindow:
    """Open admissibility interval for the tip weight gamma.

    ``nonempty`` is decided at float precision: windows of width below float
    resolution count as empty even when exact arithmetic keeps them open a
    hair's breadth.
    """

    lower: Surd
    upper: Surd

    @property
    def nonempty(self) -> bool:
        return float(self.upper) > float(self.lower)

    def contains(self, gamma) -> bool:
        """Exact strict containment lower < gamma < upper."""
        g = Surd(exact_number(gamma))
        return self.lower < g and g < self.upper

    def __str__(self) -> str:
        return f"({float(self.lower):g}, {float(self.upper):g})"


def _first_nonzero_eigenvalue(entries) -> Fraction:
    lams = [lam for _, lam, _ in entries if lam != 0]
    if not lams:
        raise ValueError("spectrum has no nonzero eigenvalue")
    return max(lams)


def ch_gamma_window(n: int, lambda_1) -> GammaWindow:
    """Weight window for the fourth-order flow on an (n+1)-dimensional cone.

    With d = n + 1:  gamma in ( (d-4)/2 , min{ -1 + sqrt(((d-2)/2)^2 - lambda_1),
    (d-4)/4 } ), lambda_1 < 0 the first nonzero cross-section eigenvalue.
    """
    _check_dimension(n)
    lam1 = exact_number(lambda_1)
    if lam1 >= 0:
        raise ValueError(f"lambda_1 must be negative, got {lam1}")
    d = n + 1
    lower = Surd(Fraction(d - 4, 2))
    upper = _exact_min(Surd(-1) + Surd.sqrt(Fraction(d - 2, 2) ** 2 - lam1),
                       Surd(Fraction(d - 4, 4)))
    return GammaWindow(lower=lower, upper=upper)


def laplacian_gamma_window(n: int, lambda_1) -> GammaWindow:
    """Weight window for the second-order problem on the n-dimensional surface:
    gamma in ( (n-3)/2 , min{ -1 + sqrt(((n-1)/2)^2 - lambda_1), (n+1)/2 } ).
    """
    _check_dimension(n)
    lam1 = exact_number(lambda_1)
    if lam1 >= 0:
        raise ValueError(f"lambda_1 must be negative, got {lam1}")
    lower = Surd(Fraction(n - 3, 2))
    upper = _exact_min(Surd(-1) + Surd.sqrt(_radicand(n, lam1)),
                       Surd(Fraction(n + 1, 2)))
    return GammaWindow(lower=lower, upper=upper)


@dataclass(frozen=True)
class AsymptoticSpace:
    """Finite-dimensional space of tip branches attached to a weight gamma.

    ``members`` lists the squared-Laplacian exponents q whose real part lies
    in the half-open window [(n-7)/2 - gamma, (n-3)/2 - gamma); solutions in
    the maximal domain split into these branches plus a remainder that is
    two orders flatter.
    """

    window_lower: Surd
    window_upper: Surd
    members: tuple[IndicialRoot, ...]

    @property
    def dimension(self) -> int:
        """Branch count with angular multiplicity 2 for modes >= 1 and log branches."""
        return sum((2 if r.mode else 1) * r.multiplicity for r in self.members)


def asymptotic_space(n: int, spectrum, gamma) -> AsymptoticSpace:
    """Collect squared-Laplacian exponents in [(n-7)/2 - gamma, (n-3)/2 - gamma)."""
    _check_dimension(n)
    g = exact_number(gamma)
    lo = Surd(Fraction(n - 7, 2) - g)
    hi = Surd(Fraction(n - 3, 2) - g)
    members = [root for root in bilaplacian_indicial_roots(n, spectrum)
               if lo <= root.value and root.value < hi]
    return AsymptoticSpace(window_lower=lo, window_upper=hi, members=tuple(members))


@dataclass(frozen=True)
class MinimalDomainResult:
    """Whether the maximal domain collapses to the clean weighted space.

    The obstruction is an exact hit of gamma + 1 or gamma + 3 by one of the
    symmetric exponent offsets +-sqrt(((n-1)/2)^2 - lambda_j); ``offending``
    lists the hits as (shift value, mode).
    """

    clean: bool
    offending: tuple[tuple[Surd, int], ...]


def minimal_domain_check(n: int, spectrum, gamma) -> MinimalDomainResult:
    """Exact test that {gamma+1, gamma+3} avoids every exponent offset."""
    _check_dimension(n)
    g = exact_number(gamma)
    targets = [Surd(g + 1), Surd(g + 3)]
    hits: list[tuple[Surd, int]] = []
    for mode, lam, _ in _spectrum_entries(spectrum):
        root = Surd.sqrt(_radicand(n, lam))
        for offset in (root, -root):
            if any(t == offset for t in targets):
                hits.append((offset, mode))
    return MinimalDomainResult(clean=not hits, offending=tuple(hits))


def interpolation_exclusions(n: int, spectrum, gamma) -> list[Surd]:
    """Interpolation parameters in (0, 1) that must be avoided for this gamma.

    These are the values (1 - gamma)/2 +- sqrt(((n-1)/2)^2 - lambda_j)/2
    that land strictly inside (0, 1), deduplicated exactly and sorted.
    """
    _check_dimension(n)
    g = exact_number(gamma)
    center = (1 - g) / 2
    out: list[Surd] = []
    for _, lam, _ in _spectrum_entries(spectrum):
        half_root = Surd(0, Fraction(1, 2), _radicand(n, lam))
        for cand in (Surd(center) + half_root, Surd(center) - half_root):
            if Surd(0) < cand and cand < Surd(1) and not any(cand == c for c in out):
                out.append(cand)
    return sorted(out, key=float)
