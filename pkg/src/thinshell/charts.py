"""Analytic parametric charts for the built-in closed surfaces.

Every chart here is separable: each Cartesian component of the map is a
product f(s0) * g(s1) of sinusoids (or constants), composed with a fixed
linear map.  That makes chart derivatives of *any* order closed-form,
which the jet-based operator engine relies on (surface fields built from
the normal or curvature need third chart derivatives and beyond).

Conventions: s = (s0, s1) are the chart coordinates.  For sphere-like
charts s0 is the polar angle and s1 the azimuth; the polar direction is
trimmed away from the coordinate singularities and two rotated copies
cover the surface.  The torus chart is doubly periodic and covers the
surface alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

HALF_PI = 0.5 * math.pi
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Sinusoid:
    """amp * sin(freq * x + phase) + offset, with derivatives of any order."""

    amp: float = 0.0
    freq: float = 1.0
    phase: float = 0.0
    offset: float = 0.0

    def deriv(self, x, n: int):
        x = np.asarray(x, dtype=float)
        if n == 0:
            return self.amp * np.sin(self.freq * x + self.phase) + self.offset
        scale = self.amp * self.freq**n
        return scale * np.sin(self.freq * x + self.phase + n * HALF_PI)


SIN = Sinusoid(amp=1.0)
COS = Sinusoid(amp=1.0, phase=HALF_PI)
ONE = Sinusoid(amp=0.0, offset=1.0)


class SeparableChart:
    """Chart map mu(s) = L @ (f_c(s0) g_c(s1))_c with closed-form derivatives."""

    def __init__(self, linear_map: np.ndarray, factors, shift=None):
        self.linear_map = np.asarray(linear_map, dtype=float)
        self.factors = tuple(factors)  # three (Sinusoid, Sinusoid) pairs
        self.shift = np.zeros(3) if shift is None else np.asarray(shift, dtype=float)

    def derivative(self, s, i: int, j: int):
        """d^i/ds0^i d^j/ds1^j of the chart map; s has shape (..., 2)."""
        s = np.asarray(s, dtype=float)
        comps = [f.deriv(s[..., 0], i) * g.deriv(s[..., 1], j) for f, g in self.factors]
        base = np.stack(comps, axis=-1)
        out = np.einsum("ij,...j->...i", self.linear_map, base)
        if i == 0 and j == 0:
            out = out + self.shift
        return out


def _rotation_y90() -> np.ndarray:
    # maps e3 -> e1 (rotation by +90 degrees about e2)
    return np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])


def smoothstep(u):
    """C-infinity ramp: 0 for u<=0, 1 for u>=1, exp-flat at both ends."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    out[u >= 1.0] = 1.0
    mid = (u > 0.0) & (u < 1.0)
    if np.any(mid):
        um = u[mid]
        a = np.exp(-1.0 / um)
        b = np.exp(-1.0 / (1.0 - um))
        out[mid] = a / (a + b)
    return out


@dataclass
class SurfacePatch:
    """One analytic chart of a closed surface.

    Attributes
    ----------
    chart : SeparableChart
        The map and all its chart derivatives.
    domain : ((lo0, hi0), (lo1, hi1))
        Parameter rectangle.
    periodic : (bool, bool)
        Per-axis periodicity.  Non-periodic axes are trimmed away from any
        coordinate degeneracy and carry a partition-of-unity taper.
    orientation : float
        Sign making ``orientation * (d0 mu x d1 mu)`` the outward normal.
    inverse : callable (..., 3) -> (..., 2)
        Analytic chart inverse for points on the surface.
    taper_width : float
        Width of the partition-of-unity ramp measured from each
        non-periodic domain edge.
    """

    chart: SeparableChart
    domain: tuple
    periodic: tuple
    orientation: float
    inverse: object
    taper_width: float = 0.0
    name: str = ""

    def chart_map(self, s):
        return self.chart.derivative(s, 0, 0)

    def first_derivs(self, s):
        """Tangent vectors (d0 mu, d1 mu), stacked on axis -2."""
        return np.stack(
            [self.chart.derivative(s, 1, 0), self.chart.derivative(s, 0, 1)], axis=-2
        )

    def second_derivs(self, s):
        """(d00 mu, d01 mu, d11 mu), stacked on axis -2."""
        return np.stack(
            [
                self.chart.derivative(s, 2, 0),
                self.chart.derivative(s, 1, 1),
                self.chart.derivative(s, 0, 2),
            ],
            axis=-2,
        )

    def derivative(self, s, i: int, j: int):
        return self.chart.derivative(s, i, j)

    def wrap(self, s):
        """Wrap periodic coordinates into the domain; non-periodic pass through."""
        s = np.array(s, dtype=float, copy=True)
        for ax in (0, 1):
            lo, hi = self.domain[ax]
            if self.periodic[ax]:
                s[..., ax] = lo + np.mod(s[..., ax] - lo, hi - lo)
        return s

    def contains(self, s, margin: float = 0.0):
        ok = np.ones(np.asarray(s).shape[:-1], dtype=bool)
        for ax in (0, 1):
            if self.periodic[ax]:
                continue
            lo, hi = self.domain[ax]
            ok &= (s[..., ax] >= lo + margin) & (s[..., ax] <= hi - margin)
        return ok

    def interior_score(self, s):
        """Distance to the nearest non-periodic domain edge (inf if none)."""
        score = np.full(np.asarray(s).shape[:-1], np.inf)
        for ax in (0, 1):
            if self.periodic[ax]:
                continue
            lo, hi = self.domain[ax]
            score = np.minimum(score, np.minimum(s[..., ax] - lo, hi - s[..., ax]))
        return score

    def pou_weight(self, s):
        """Raw partition-of-unity weight in chart coordinates."""
        w = np.ones(np.asarray(s).shape[:-1])
        if self.taper_width <= 0.0:
            return w
        for ax in (0, 1):
            if self.periodic[ax]:
                continue
            lo, hi = self.domain[ax]
            w = w * smoothstep((s[..., ax] - lo) / self.taper_width)
            w = w * smoothstep((hi - s[..., ax]) / self.taper_width)
        return w


# ---------------------------------------------------------------------------
# Concrete patch builders


def _sphere_like_inverse(rot: np.ndarray, radii: np.ndarray, shift: np.ndarray):
    inv_radii = 1.0 / radii
    rot_t = rot.T

    def inverse(y):
        y = np.asarray(y, dtype=float)
        w = np.einsum("ij,...j->...i", rot_t, (y - shift) * inv_radii)
        r = np.linalg.norm(w, axis=-1)
        w = w / np.where(r == 0.0, 1.0, r)[..., None]
        theta = np.arccos(np.clip(w[..., 2], -1.0, 1.0))
        phi = np.mod(np.arctan2(w[..., 1], w[..., 0]), TWO_PI)
        return np.stack([theta, phi], axis=-1)

    return inverse


def sphere_like_patches(radii, trim: float = 0.30, taper: float = 0.45):
    """Two rotated polar charts covering a sphere or axis-aligned ellipsoid.

    Each chart is trimmed ``trim`` away from its poles; the partition of
    unity tapers over ``taper`` so that wherever one chart's weight decays
    the other is at full weight.
    """
    radii = np.asarray(radii, dtype=float)
    factors = ((SIN, COS), (SIN, SIN), (COS, ONE))
    patches = []
    for name, rot in (("polar-z", np.eye(3)), ("polar-x", _rotation_y90())):
        lin = np.diag(radii) @ rot
        chart = SeparableChart(lin, factors)
        patches.append(
            SurfacePatch(
                chart=chart,
                domain=((trim, math.pi - trim), (0.0, TWO_PI)),
                periodic=(False, True),
                orientation=1.0,
                inverse=_sphere_like_inverse(rot, radii, np.zeros(3)),
                taper_width=taper,
                name=name,
            )
        )
    return patches


def sphere_like_full_patch(radii):
    """Single untrimmed polar chart used for integration only.

    Covers the whole surface minus the measure-zero poles and seam, so a
    quadrature rule with interior nodes counts every point exactly once
    without any partition-of-unity blending.  Pointwise geometry should
    keep using the trimmed two-patch atlas (the chart degenerates at the
    poles).
    """
    radii = np.asarray(radii, dtype=float)
    factors = ((SIN, COS), (SIN, SIN), (COS, ONE))
    chart = SeparableChart(np.diag(radii), factors)
    return SurfacePatch(
        chart=chart,
        domain=((0.0, math.pi), (0.0, TWO_PI)),
        periodic=(False, True),
        orientation=1.0,
        inverse=_sphere_like_inverse(np.eye(3), radii, np.zeros(3)),
        taper_width=0.0,
        name="polar-full",
    )


def torus_patch(major_radius: float, minor_radius: float):
    """Single doubly-periodic chart of a torus around the z-axis.

    s0 is the tube angle (0 at the outer equator), s1 the azimuth.
    """
    r0, r = float(major_radius), float(minor_radius)
    ring = Sinusoid(amp=r, phase=HALF_PI, offset=r0)  # r0 + r cos(s0)
    factors = ((ring, COS), (ring, SIN), (Sinusoid(amp=r), ONE))
    chart = SeparableChart(np.eye(3), factors)

    def inverse(y):
        y = np.asarray(y, dtype=float)
        phi = np.mod(np.arctan2(y[..., 1], y[..., 0]), TWO_PI)
        rho = np.hypot(y[..., 0], y[..., 1])
        theta = np.mod(np.arctan2(y[..., 2], rho - r0), TWO_PI)
        return np.stack([theta, phi], axis=-1)

    return SurfacePatch(
        chart=chart,
        domain=((0.0, TWO_PI), (0.0, TWO_PI)),
        periodic=(True, True),
        orientation=-1.0,  # (d0 x d1) points into the tube for this ordering
        inverse=inverse,
        taper_width=0.0,
        name="torus",
    )


def transform_patch(patch: SurfacePatch, linear=None, shift=None, name_suffix=""):
    """Apply x -> M x + c to a patch (M invertible; rigid or uniform scale).

    Curvature data is recomputed from the transformed chart, so any
    invertible M yields consistent geometry; the analytic inverse assumes
    M is invertible.
    """
    m = np.eye(3) if linear is None else np.asarray(linear, dtype=float)
    c = np.zeros(3) if shift is None else np.asarray(shift, dtype=float)
    base = patch.chart
    new_chart = SeparableChart(
        m @ base.linear_map, base.factors, shift=m @ base.shift + c
    )
    m_inv = np.linalg.inv(m)
    base_inverse = patch.inverse

    def inverse(y):
        y = np.asarray(y, dtype=float)
        return base_inverse(np.einsum("ij,...j->...i", m_inv, y - c))

    sign = 1.0 if np.linalg.det(m) > 0 else -1.0
    return SurfacePatch(
        chart=new_chart,
        domain=patch.domain,
        periodic=patch.periodic,
        orientation=patch.orientation * sign,
        inverse=inverse,
        taper_width=patch.taper_width,
        name=patch.name + name_suffix,
    )
