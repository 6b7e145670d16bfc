"""Moving-surface kinematics.

A ``MovingSurface`` is a time-indexed family of closed surfaces generated
by a flow map applied to a base surface.  Geometry at each time is a full
analytic snapshot (charts transformed exactly), so curvature and normals
stay exact along the motion.  The built-in motions are rigid translation,
rigid rotation, and a uniform "breathing" rescale; rigid motions preserve
the surface area exactly, the breathing sphere deliberately does not and
serves as a negative control for the kinematic audits.

Time derivatives of on-surface quantities follow two routes: the
normal-time derivative differentiates the constant-normal extension
(central differences of ``t -> f(pi(y, t), t)``), and the material
derivative adds tangential transport.  A flow-map oracle cross-checks the
material derivative along exact trajectories.
"""

from __future__ import annotations

import math

import numpy as np

from . import fields as F
from . import operators as O
from .charts import transform_patch
from .geometry import ClosedSurface, GeometryJets

__all__ = [
    "MovingSurface",
    "SpaceTimeField",
    "ambient_spacetime",
    "stationary",
    "translate_sphere",
    "rotate_ellipsoid",
    "breathe_sphere",
    "parse_moving_surface",
    "normal_velocity",
    "normal_time_derivative",
    "material_derivative",
    "flow_material_derivative",
]


def _rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class MovingSurface:
    """Family t -> Gamma(t) = M(t) Gamma(0) + c(t).

    ``transform(t)`` returns the pair (M, c); ``velocity(y, t)`` is the
    Eulerian flow velocity at points currently on Gamma(t).  ``velocity``
    must be affine in y so its ambient derivatives are exact.
    """

    def __init__(self, base: ClosedSurface, transform, velocity, velocity_grad,
                 label: str, time_interval=(0.0, 1.0)):
        self.base = base
        self._transform = transform
        self._velocity = velocity
        self._velocity_grad = velocity_grad
        self.label = label
        self.time_interval = tuple(time_interval)
        self._snapshots = {}

    # geometry snapshots ------------------------------------------------

    def surface_at(self, t: float) -> ClosedSurface:
        key = round(float(t), 12)
        surf = self._snapshots.get(key)
        if surf is None:
            m, c = self._transform(t)
            if np.allclose(m, np.eye(3)) and np.allclose(c, 0.0):
                surf = self.base
            else:
                patches = [transform_patch(p, m, c) for p in self.base.patches]
                surf = ClosedSurface(
                    patches, self.base.euler_characteristic,
                    f"{self.base.label}@t={key:g}",
                )
            self._snapshots[key] = surf
        return surf

    # flow --------------------------------------------------------------

    def flow_map(self, Y, t: float):
        m, c = self._transform(t)
        return np.einsum("ij,...j->...i", m, np.asarray(Y, dtype=float)) + c

    def flow_inverse(self, y, t: float):
        m, c = self._transform(t)
        minv = np.linalg.inv(m)
        return np.einsum("ij,...j->...i", minv, np.asarray(y, dtype=float) - c)

    def velocity_values(self, y, t: float):
        return self._velocity(np.asarray(y, dtype=float), t)

    def velocity_field(self, t: float) -> F.AmbientField:
        """Eulerian flow velocity as an ambient field (affine, exact jets)."""

        def value(y):
            return self._velocity(y, t)

        def grad(y):
            return self._velocity_grad(y, t)

        def hess(y):
            return np.zeros(y.shape[:-1] + (3, 3, 3))

        return F.AmbientField("vector", value, grad, hess, name=f"flow-velocity@{t:g}")

    def normal_velocity_field(self, t: float) -> F.SurfaceField:
        """V = (flow velocity) . nu on Gamma(t)."""
        return F.dot(self.velocity_field(t), F.NormalField())


class SpaceTimeField:
    """Field on the space-time track of a moving surface.

    ``builder(t)`` returns the surface field at that time; instances are
    cached per time so jet memoization stays effective within a snapshot.
    """

    def __init__(self, kind: str, builder, name: str = ""):
        self.kind = kind
        self._builder = builder
        self.name = name
        self._cache = {}

    def at_time(self, t: float) -> F.SurfaceField:
        key = round(float(t), 12)
        if key not in self._cache:
            self._cache[key] = self._builder(t)
        return self._cache[key]

    def values(self, ms: MovingSurface, y, t: float):
        surf = ms.surface_at(t)
        pidx, s = surf.locate(np.atleast_2d(np.asarray(y, dtype=float)))
        return F.evaluate_values(self.at_time(t), surf, pidx, s)


def ambient_spacetime(kind, value, grad=None, hess=None, name="") -> SpaceTimeField:
    """Space-time field from ambient callables f(y, t), with y-derivatives."""

    def builder(t):
        g = None if grad is None else (lambda y, t=t: grad(y, t))
        h = None if hess is None else (lambda y, t=t: hess(y, t))
        return F.AmbientField(kind, lambda y, t=t: value(y, t), g, h, name=name)

    return SpaceTimeField(kind, builder, name=name)


def constant_spacetime(field: F.SurfaceField, name="") -> SpaceTimeField:
    return SpaceTimeField(field.kind, lambda t: field, name=name)


# ---------------------------------------------------------------------------
# Built-in motions


def stationary(surface: ClosedSurface, time_interval=(0.0, 1.0)) -> MovingSurface:
    return MovingSurface(
        surface,
        transform=lambda t: (np.eye(3), np.zeros(3)),
        velocity=lambda y, t: np.zeros_like(y),
        velocity_grad=lambda y, t: np.zeros(y.shape[:-1] + (3, 3)),
        label=f"stationary[{surface.label}]",
        time_interval=time_interval,
    )


def translate_sphere(radius: float = 1.0, vx: float = 0.3,
                     time_interval=(0.0, 1.0)) -> MovingSurface:
    from .geometry import sphere

    vvec = np.array([vx, 0.0, 0.0])
    return MovingSurface(
        sphere(radius),
        transform=lambda t: (np.eye(3), vvec * t),
        velocity=lambda y, t: np.broadcast_to(vvec, y.shape).copy(),
        velocity_grad=lambda y, t: np.zeros(y.shape[:-1] + (3, 3)),
        label=f"translate-sphere(R={radius:g},vx={vx:g})",
        time_interval=time_interval,
    )


def rotate_ellipsoid(a: float = 1.0, b: float = 1.2, c: float = 0.8,
                     omega: float = 0.5, time_interval=(0.0, 1.0)) -> MovingSurface:
    from .geometry import ellipsoid

    wmat = np.array([[0.0, -omega, 0.0], [omega, 0.0, 0.0], [0.0, 0.0, 0.0]])

    def velocity(y, t):
        # omega e3 x y at the current position
        return np.stack([-omega * y[..., 1], omega * y[..., 0],
                         np.zeros(y.shape[:-1])], axis=-1)

    return MovingSurface(
        ellipsoid(a, b, c),
        transform=lambda t: (_rot_z(omega * t), np.zeros(3)),
        velocity=velocity,
        velocity_grad=lambda y, t: np.broadcast_to(wmat, y.shape[:-1] + (3, 3)).copy(),
        label=f"rotate-ellipsoid(a={a:g},b={b:g},c={c:g},omega={omega:g})",
        time_interval=time_interval,
    )


def breathe_sphere(radius: float = 1.0, amp: float = 0.1,
                   time_interval=(0.0, 1.0)) -> MovingSurface:
    """Radially pulsating sphere R(t) = R + amp sin t.

    Not area preserving; used only for kinematic (negative-control) tests.
    """
    from .geometry import sphere

    def lam(t):
        return (radius + amp * math.sin(t)) / radius

    def lam_dot(t):
        return (amp * math.cos(t)) / radius

    def velocity(y, t):
        return (lam_dot(t) / lam(t)) * y

    def velocity_grad(y, t):
        return np.broadcast_to((lam_dot(t) / lam(t)) * np.eye(3),
                               y.shape[:-1] + (3, 3)).copy()

    return MovingSurface(
        sphere(radius),
        transform=lambda t: (lam(t) * np.eye(3), np.zeros(3)),
        velocity=velocity,
        velocity_grad=velocity_grad,
        label=f"breathe-sphere(R={radius:g},amp={amp:g})",
        time_interval=time_interval,
    )


def parse_moving_surface(spec: str) -> MovingSurface:
    """Moving-surface spec strings.

    ``translate-sphere:R=1,vx=0.3``, ``rotate-ellipsoid:a=1,b=1.2,c=0.8,omega=0.5``,
    ``breathe-sphere:R=1,amp=0.1``, or any stationary surface spec
    (``sphere:R=1`` etc).
    """
    head, _, body = spec.partition(":")
    kv = {}
    for item in filter(None, body.split(",")):
        key, _, val = item.partition("=")
        kv[key.strip()] = float(val)
    if head == "translate-sphere":
        return translate_sphere(kv.get("R", 1.0), kv.get("vx", 0.3))
    if head == "rotate-ellipsoid":
        return rotate_ellipsoid(kv.get("a", 1.0), kv.get("b", 1.2),
                                kv.get("c", 0.8), kv.get("omega", 0.5))
    if head == "breathe-sphere":
        return breathe_sphere(kv.get("R", 1.0), kv.get("amp", 0.1))
    from .geometry import parse_surface

    return stationary(parse_surface(spec))


# ---------------------------------------------------------------------------
# Time derivatives


def normal_velocity(ms: MovingSurface, y, t: float):
    """Outward normal speed at on-surface points y."""
    y = np.asarray(y, dtype=float)
    surf = ms.surface_at(t)
    pidx, s = surf.locate(np.atleast_2d(y))
    vals = F.evaluate_values(ms.normal_velocity_field(t), surf, pidx, s)
    return vals[0] if y.ndim == 1 else vals


def _default_dt(ms: MovingSurface) -> float:
    t0, t1 = ms.time_interval
    return 1e-4 * max(t1 - t0, 1e-12)


def normal_time_derivative(ms: MovingSurface, f: SpaceTimeField, y, t: float,
                           dt: float | None = None):
    """d/dt of t' -> f(pi(y, t'), t'), central differences (order 2).

    Richardson extrapolation is available by passing two dt values to the
    caller; this primitive keeps a single step.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    dt = _default_dt(ms) if dt is None else dt

    def sample(tp):
        surf = ms.surface_at(tp)
        cp = surf.closest_point_batch(y)
        return F.evaluate_values(f.at_time(tp), surf, cp["patch_index"], cp["s"])

    return (sample(t + dt) - sample(t - dt)) / (2.0 * dt)


def material_derivative(ms: MovingSurface, f: SpaceTimeField, vel: SpaceTimeField,
                        y, t: float, dt: float | None = None,
                        normal_tol: float = 1e-6):
    """Material derivative along vel: normal-time part plus transport.

    ``vel`` must satisfy vel . nu = V (the surface's normal speed) at the
    sample points; a mismatch means the transport problem is ill-posed and
    raises ValueError.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    surf = ms.surface_at(t)
    pidx, s = surf.locate(y)
    vfield = vel.at_time(t)
    vvals = F.evaluate_values(vfield, surf, pidx, s)
    nu = F.evaluate_values(F.NormalField(), surf, pidx, s)
    vn_expected = F.evaluate_values(ms.normal_velocity_field(t), surf, pidx, s)
    mismatch = np.max(np.abs(np.einsum("ni,ni->n", vvals, nu) - vn_expected))
    if mismatch > normal_tol:
        raise ValueError(
            f"velocity normal component deviates from the surface normal "
            f"speed by {mismatch:.3g} (tolerance {normal_tol:g})"
        )
    dnormal = normal_time_derivative(ms, f, y, t, dt)
    ft = f.at_time(t)
    grad = O.tangential_gradient(ft)
    vtan = vvals - vn_expected[:, None] * nu
    out = np.array(dnormal, copy=True)
    for k in np.unique(pidx):
        sel = pidx == k
        geom = GeometryJets(surf.patches[int(k)], s[sel], order=1)
        g = grad.jet(geom, 0).v
        if ft.kind == "scalar":
            out[sel] += np.einsum("ni,ni->n", vtan[sel], g)
        else:
            # rows of g are derivative directions: (v . grad) f = g^T v
            out[sel] += np.einsum("nij,ni->nj", g, vtan[sel])
    return out


def flow_material_derivative(ms: MovingSurface, f: SpaceTimeField, y, t: float,
                             dt: float | None = None):
    """Oracle: d/dt f(Phi(Y, t'), t') along the exact flow trajectory."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    dt = _default_dt(ms) if dt is None else dt
    Y0 = ms.flow_inverse(y, t)

    def sample(tp):
        pos = ms.flow_map(Y0, tp)
        surf = ms.surface_at(tp)
        pidx, s = surf.locate(pos)
        return F.evaluate_values(f.at_time(tp), surf, pidx, s)

    return (sample(t + dt) - sample(t - dt)) / (2.0 * dt)
