"""Surfaces of revolution with a conical tip, and radial finite-volume meshes.

A surface is described by its profile radius f(s) >= 0 as a function of arc
length s in [0, L].  Near s = 0 the profile is exactly linear, f(s) = c*s with
0 < c <= 1, which is a cone of opening slope c (c = 1 is a flat disk, i.e. no
singularity).  The induced area measure is dmu = f(s) ds dtheta.

Meshes are cell-centered in s with geometric grading toward the tip.  Cell
volumes are computed with a composite trapezoid rule (two panels per cell),
which keeps the measured area-convergence order at 2 and volumes strictly
positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "SurfaceProfile",
    "RadialMesh",
    "SpectrumEntry",
    "BoundarySpectrum",
    "build_profile",
    "build_mesh",
    "boundary_spectrum",
    "exact_number",
]

PROFILE_KINDS = ("cone_capped", "sphere", "spindle")

#: Geometric grading is applied until cell widths have shrunk by this factor
#: relative to the bulk width; beyond that depth extra cells go to the bulk.
#: A pure geometric law with many cells would otherwise drive the smallest
#: width below representable scales and starve the outer region.
GRADING_DEPTH_FLOOR = 1.0e-8

#: Meshes whose smallest cell is below this fraction of the total length are
#: rejected outright.
MIN_WIDTH_FRACTION = 1.0e-14


def exact_number(value) -> Fraction:
    """Coerce int/float/str/Fraction to an exact Fraction.

    Strings accept both "1/3" and decimal forms; floats convert exactly
    (every binary float is rational).
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, (float, np.floating)):
        return Fraction(float(value))
    raise TypeError(f"cannot interpret {value!r} as an exact number")


def _smoothstep_quintic(t: np.ndarray) -> np.ndarray:
    """C^2 monotone ramp 0 -> 1 on [0, 1] (6t^5 - 15t^4 + 10t^3)."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


@dataclass(frozen=True)
class SurfaceProfile:
    """Profile radius of a surface of revolution with a conical tip at s=0.

    Attributes
    ----------
    kind : one of ``cone_capped``, ``sphere``, ``spindle``.
    length : total arc length L of the generating curve.
    tip_slope : exact cone opening slope c at s=0 (Fraction; f(s) = c*s there).
    end_slope : for ``spindle``, the exact slope at the far tip; else None.
    radius : for ``sphere``, the sphere radius; else None.
    """

    kind: str
    length: float
    tip_slope: Fraction
    end_slope: Fraction | None = None
    radius: float | None = None
    _f: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False, default=None)

    def __call__(self, s):
        """Profile radius f(s), vectorized."""
        return self._f(np.asarray(s, dtype=float))

    @property
    def tip_slope_float(self) -> float:
        return float(self.tip_slope)

    def serialize(self) -> list[tuple[str, str]]:
        """Ordered (key, value) pairs sufficient to rebuild the profile."""
        items = [("kind", self.kind)]
        if self.kind == "sphere":
            items.append(("radius", format(self.radius, ".17g")))
        else:
            items.append(("c", str(self.tip_slope)))
            if self.kind == "spindle":
                items.append(("c2", str(self.end_slope)))
            items.append(("L", format(self.length, ".17g")))
        return items


def build_profile(kind: str, *, c=None, c2=None, radius=None, length=None) -> SurfaceProfile:
    """Construct a named profile.

    ``cone_capped``: f = c*s near the tip, blended over the middle third of
    [0, L] into a spherical cap of radius L/2 that closes smoothly at s = L.
    Requires 0 < c <= 1 and length > 0.

    ``sphere``: round sphere of the given radius, f = R sin(s/R), L = pi*R.
    The poles are smooth (slope 1), so this is the no-singularity reference.

    ``spindle``: two conical tips, f = c*s near s=0 and f = c2*(L-s) near
    s=L, blended over the middle third.

    The blend is a C^2 quintic ramp, so every profile is C^2 on (0, L) and
    exactly linear near each conical tip.
    """
    if kind == "sphere":
        if radius is None or radius <= 0:
            raise ValueError("sphere profile needs radius > 0")
        if c is not None or c2 is not None or length is not None:
            raise ValueError("sphere profile takes only 'radius'")
        r = float(radius)

        def f_sphere(s, _r=r):
            return _r * np.sin(np.clip(s / _r, 0.0, math.pi))

        return SurfaceProfile(kind="sphere", length=math.pi * r,
                              tip_slope=Fraction(1), radius=r, _f=f_sphere)

    if kind not in PROFILE_KINDS:
        raise ValueError(f"unknown profile kind {kind!r}; expected one of {PROFILE_KINDS}")
    if length is None or length <= 0:
        raise ValueError(f"{kind} profile needs length > 0")
    if c is None:
        raise ValueError(f"{kind} profile needs a tip slope c")
    c_exact = exact_number(c)
    if not (0 < c_exact <= 1):
        raise ValueError(f"tip slope must satisfy 0 < c <= 1, got {c_exact}")
    L = float(length)
    a, b = L / 3.0, 2.0 * L / 3.0
    c_f = float(c_exact)

    if kind == "cone_capped":
        if c2 is not None:
            raise ValueError("cone_capped takes no c2")
        r_cap = L / 2.0

        def f_cone(s, _c=c_f, _a=a, _b=b, _L=L, _r=r_cap):
            s = np.asarray(s, dtype=float)
            w = _smoothstep_quintic((s - _a) / (_b - _a))
            cap = _r * np.sin(np.clip((_L - s) / _r, 0.0, math.pi))
            return (1.0 - w) * (_c * s) + w * cap

        return SurfaceProfile(kind="cone_capped", length=L, tip_slope=c_exact, _f=f_cone)

    # spindle
    if c2 is None:
        raise ValueError("spindle profile needs both tip slopes c and c2")
    c2_exact = exact_number(c2)
    if not (0 < c2_exact <= 1):
        raise ValueError(f"far tip slope must satisfy 0 < c2 <= 1, got {c2_exact}")
    c2_f = float(c2_exact)

    def f_spindle(s, _c=c_f, _c2=c2_f, _a=a, _b=b, _L=L):
        s = np.asarray(s, dtype=float)
        w = _smoothstep_quintic((s - _a) / (_b - _a))
        return (1.0 - w) * (_c * s) + w * (_c2 * (_L - s))

    return SurfaceProfile(kind="spindle", length=L, tip_slope=c_exact,
                          end_slope=c2_exact, _f=f_spindle)


@dataclass(frozen=True)
class RadialMesh:
    """Cell-centered radial mesh on [0, L] with tip-graded widths.

    ``faces`` has cells+1 entries with faces[0] = 0 and faces[-1] = L;
    ``volumes`` are the per-cell area measures 2*pi*int_cell f(s) ds computed
    with the two-panel trapezoid rule.
    """

    profile: SurfaceProfile
    grading: float
    faces: np.ndarray
    centers: np.ndarray
    widths: np.ndarray
    volumes: np.ndarray
    f_faces: np.ndarray
    f_centers: np.ndarray

    @property
    def cells(self) -> int:
        return self.centers.size

    @property
    def length(self) -> float:
        return float(self.faces[-1])

    @property
    def area(self) -> float:
        """Total surface area (sum of cell volumes)."""
        return float(self.volumes.sum())

    @property
    def min_width(self) -> float:
        return float(self.widths.min())

    @property
    def s_min(self) -> float:
        """First cell center: the smallest resolved radial coordinate."""
        return float(self.centers[0])

    def integrate_radial(self, values: np.ndarray) -> float:
        """Integrate a cell-centered radial function against dmu."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.cells,):
            raise ValueError(f"expected {self.cells} cell values, got shape {values.shape}")
        return float(self.volumes @ values)

    def same_as(self, other: "RadialMesh") -> bool:
        return self is other or (
            self.cells == other.cells
            and self.profile.kind == other.profile.kind
            and np.array_equal(self.faces, other.faces)
        )


def _graded_widths(cells: int, grading: float, length: float) -> np.ndarray:
    """Cell widths, smallest at the tip.

    Geometric grading with ratio ``grading`` is applied for
    m = min(cells-1, floor(ln(depth_floor)/ln q)) cells at the tip; remaining
    cells share a uniform bulk width.  Widths are normalized to sum to L.
    """
    if grading == 1.0:
        return np.full(cells, length / cells)
    m_star = int(math.floor(math.log(GRADING_DEPTH_FLOOR) / math.log(grading)))
    m = min(cells - 1, m_star)
    # tip -> outer: h*q^m, ..., h*q, then (cells - m) bulk cells of width h
    ratios = np.concatenate([grading ** np.arange(m, 0, -1), np.ones(cells - m)])
    h = length / ratios.sum()
    return h * ratios


def build_mesh(profile: SurfaceProfile, cells: int, grading: float = 1.0) -> RadialMesh:
    """Build a tip-graded cell-centered mesh for the given profile.

    ``grading`` is the width ratio q in (0, 1] between a tip cell and its
    outward neighbor (q = 1 is uniform).  Raises ValueError for meshes whose
    smallest cell would be below 1e-14 of the total length.
    """
    if cells < 4:
        raise ValueError("need at least 4 cells")
    if not (0.0 < grading <= 1.0):
        raise ValueError(f"grading ratio must lie in (0, 1], got {grading}")
    L = profile.length
    widths = _graded_widths(cells, float(grading), L)
    if widths.min() < MIN_WIDTH_FRACTION * L:
        raise ValueError(
            f"mesh rejected: smallest cell {widths.min():.3e} is below "
            f"{MIN_WIDTH_FRACTION:g} * L = {MIN_WIDTH_FRACTION * L:.3e}")
    faces = np.concatenate([[0.0], np.cumsum(widths)])
    faces[-1] = L  # kill cumulative roundoff at the outer end
    centers = 0.5 * (faces[:-1] + faces[1:])
    f_faces = profile(faces)
    f_centers = profile(centers)
    # two-panel trapezoid per cell: weights (1/4, 1/2, 1/4) on (left, center, right)
    volumes = 2.0 * math.pi * widths * (f_faces[:-1] + 2.0 * f_centers + f_faces[1:]) / 4.0
    if not np.all(volumes > 0.0):
        raise ValueError("mesh rejected: nonpositive cell volume (profile touches zero inside?)")
    return RadialMesh(profile=profile, grading=float(grading), faces=faces,
                      centers=centers, widths=widths, volumes=volumes,
                      f_faces=f_faces, f_centers=f_centers)


@dataclass(frozen=True)
class SpectrumEntry:
    """One angular eigenvalue -(k/c)^2 of the tip cross-section circle."""

    mode: int
    eigenvalue_exact: Fraction
    multiplicity: int

    @property
    def eigenvalue(self) -> float:
        return float(self.eigenvalue_exact)


@dataclass(frozen=True)
class BoundarySpectrum:
    """Laplace spectrum of the tip cross-section (a circle of circumference 2*pi*c).

    Entries hold lambda_k = -(k/c)^2 for 0 <= k <= max_mode with multiplicity
    1 for k = 0 and 2 for k >= 1 (cos and sin channels).
    """

    tip_slope: Fraction
    entries: tuple[SpectrumEntry, ...]

    @property
    def max_mode(self) -> int:
        return self.entries[-1].mode

    def flattened(self) -> list[float]:
        """Eigenvalues repeated by multiplicity, sorted descending (0 first)."""
        out: list[float] = []
        for e in self.entries:
            out.extend([e.eigenvalue] * e.multiplicity)
        return sorted(out, reverse=True)

    @property
    def lambda_1(self) -> Fraction:
        """Largest nonzero eigenvalue, -(1/c)^2 (exact)."""
        if len(self.entries) < 2:
            raise ValueError("spectrum truncated at mode 0 has no nonzero eigenvalue")
        return self.entries[1].eigenvalue_exact


def boundary_spectrum(profile: SurfaceProfile, max_mode: int) -> BoundarySpectrum:
    """Exact cross-section spectrum of the tip cone of the given profile.

    The link of the conical point is a circle of circumference 2*pi*c, whose
    Laplace eigenvalues are -(k/c)^2 (nonpositive sign convention), k = 0..max_mode.
    """
    if max_mode < 0:
        raise ValueError("need max_mode >= 0")
    c = profile.tip_slope
    entries = [SpectrumEntry(0, Fraction(0), 1)]
    entries += [SpectrumEntry(k, -Fraction(k, 1) ** 2 / c ** 2, 2)
                for k in range(1, max_mode + 1)]
    return BoundarySpectrum(tip_slope=c, entries=tuple(entries))
