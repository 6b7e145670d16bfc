"""Exact pointwise geometry of closed parametric surfaces.

Sign conventions, fixed once for the whole package:

* ``nu`` is the outward unit normal and the signed distance ``d`` is
  positive outside.
* The shape operator is ``A = -grad_tan(nu)``, so it annihilates ``nu``
  and its nonzero eigenvalues are the principal curvatures.
* ``H = tr A = -div_tan(nu)``.  On the outward-oriented unit sphere this
  gives ``A = -P``, ``kappa_1 = kappa_2 = -1`` and ``H = -2`` — note most
  geometry texts use the opposite sign.

Geometry is evaluated from analytic chart derivatives (first and second
fundamental forms), never from discretized distance functions; the
distance-Hessian route exists only as a cross-check in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import jets as J
from .charts import (
    SurfacePatch,
    sphere_like_full_patch,
    sphere_like_patches,
    torus_patch,
)

__all__ = [
    "ClosedSurface",
    "GeometryEval",
    "TubularPoint",
    "DegenerateChartError",
    "OutsideReachError",
    "eval_geometry",
    "sphere",
    "torus",
    "ellipsoid",
    "parse_surface",
]


class DegenerateChartError(ValueError):
    """Raised when the chart immersion degenerates at a parameter point."""


class OutsideReachError(ValueError):
    """Raised when a point lies outside the usable tubular neighborhood."""


def chart_jet(patch: SurfacePatch, s, a: int, b: int, order: int) -> J.Jet:
    """Jet of the (a,b) chart-derivative of the chart map."""
    s = np.asarray(s, dtype=float)
    batch = s.shape[:-1]
    data = []
    for n in range(order + 1):
        arr = np.empty((2,) * n + batch + (3,))
        cache = {}
        for idx in np.ndindex(*((2,) * n)):
            i = sum(1 for k in idx if k == 0)
            j = n - i
            key = (i, j)
            if key not in cache:
                cache[key] = patch.derivative(s, a + i, b + j)
            arr[idx] = cache[key]
        data.append(arr if n else patch.derivative(s, a, b))
    return J.Jet(data)


class GeometryJets:
    """Lazy bundle of geometric jets at chart points of one patch.

    Requested ``order`` is the jet order of first-derivative quantities
    (tangents, normal, projection); the chart must supply derivatives up
    to ``order + 2``.
    """

    def __init__(self, patch: SurfacePatch, s, order: int = 2):
        self.patch = patch
        self.s = np.asarray(s, dtype=float)
        self.order = order
        self._cache = {}
        self.field_cache = {}

    def require(self, order: int):
        """Upgrade the bundle so geometric jets carry at least this order."""
        if order > self.order:
            self.order = order
            self._cache.clear()
            self.field_cache.clear()

    def _get(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    @property
    def mu(self) -> J.Jet:
        return self._get("mu", lambda: chart_jet(self.patch, self.s, 0, 0, self.order))

    @property
    def tangents(self) -> J.Jet:
        def build():
            t0 = chart_jet(self.patch, self.s, 1, 0, self.order)
            t1 = chart_jet(self.patch, self.s, 0, 1, self.order)
            return J.pack_rows([t0, t1])

        return self._get("tangents", build)

    @property
    def metric(self) -> J.Jet:
        return self._get(
            "metric", lambda: J.matmul(self.tangents, J.transpose(self.tangents))
        )

    @property
    def inv_metric(self) -> J.Jet:
        return self._get("inv_metric", lambda: J.inv2(self.metric))

    @property
    def sqrt_det_metric(self) -> J.Jet:
        return self._get("sqrt_det_metric", lambda: J.sqrt(J.det2(self.metric)))

    @property
    def normal(self) -> J.Jet:
        def build():
            t = self.tangents
            c = J.cross(J.component(t, (0, slice(None))), J.component(t, (1, slice(None))))
            n = J.norm(c)
            nv = n.v
            if np.any(nv <= 1e-12 * np.max(nv, initial=1.0)):
                raise DegenerateChartError(
                    f"chart immersion degenerates near s={self.s!r} on patch "
                    f"{self.patch.name!r}"
                )
            unit = J.smul(J.reciprocal(n), c, 1)
            return J.scale(self.patch.orientation, unit)

        return self._get("normal", build)

    @property
    def projection(self) -> J.Jet:
        def build():
            nu = self.normal
            eye = J.const(np.eye(3), nu.order, batch_shape=nu.v.shape[:-1])
            return J.sub(eye, J.outer(nu, nu))

        return self._get("projection", build)

    @property
    def second_form(self) -> J.Jet:
        """Second fundamental form B_lm = (d_l d_m mu) . nu, a 2x2 jet."""

        def build():
            nu = self.normal
            b00 = chart_jet(self.patch, self.s, 2, 0, self.order)
            b01 = chart_jet(self.patch, self.s, 1, 1, self.order)
            b11 = chart_jet(self.patch, self.s, 0, 2, self.order)
            e00 = J.dot(b00, nu)
            e01 = J.dot(b01, nu)
            e11 = J.dot(b11, nu)
            row0 = J.pack([e00, e01], 2)
            row1 = J.pack([e01, e11], 2)
            return J.pack_rows([row0, row1])

        return self._get("second_form", build)

    @property
    def weingarten_chart(self) -> J.Jet:
        """Matrix of the shape operator in the chart basis: G^{-1} B."""
        return self._get(
            "weingarten_chart", lambda: J.matmul(self.inv_metric, self.second_form)
        )

    @property
    def shape_operator(self) -> J.Jet:
        """Ambient 3x3 shape operator A = T^t G^{-1} B G^{-1} T."""

        def build():
            t = self.tangents
            mid = J.matmul(J.matmul(self.inv_metric, self.second_form), self.inv_metric)
            return J.matmul(J.matmul(J.transpose(t), mid), t)

        return self._get("shape_operator", build)

    @property
    def mean_curvature(self) -> J.Jet:
        return self._get("mean_curvature", lambda: J.trace(self.weingarten_chart))

    @property
    def gauss_curvature(self) -> J.Jet:
        def build():
            return J.mul(J.det2(self.second_form), J.reciprocal(J.det2(self.metric)))

        return self._get("gauss_curvature", build)

    def principal_curvatures(self):
        """(kappa_min, kappa_max) values, ordered ascending."""
        h = self.mean_curvature.v
        k = self.gauss_curvature.v
        disc = np.sqrt(np.maximum(h * h - 4.0 * k, 0.0))
        return 0.5 * (h - disc), 0.5 * (h + disc)


@dataclass
class GeometryEval:
    """Pointwise geometric data at a surface point."""

    point: np.ndarray
    normal: np.ndarray
    projection: np.ndarray
    shape_operator: np.ndarray
    mean_curvature: float
    gauss_curvature: float
    principal_curvatures: tuple
    tangents: np.ndarray
    metric: np.ndarray
    sqrt_det_metric: float


def eval_geometry(patch: SurfacePatch, s) -> GeometryEval:
    """Evaluate all pointwise geometry at chart coordinates s.

    Raises DegenerateChartError if the immersion degenerates there.
    """
    g = GeometryJets(patch, s, order=0)
    k1, k2 = g.principal_curvatures()
    single = np.asarray(s).ndim == 1
    scalar = float if single else np.asarray
    return GeometryEval(
        point=np.asarray(g.mu.v),
        normal=np.asarray(g.normal.v),
        projection=np.asarray(g.projection.v),
        shape_operator=np.asarray(g.shape_operator.v),
        mean_curvature=scalar(g.mean_curvature.v),
        gauss_curvature=scalar(g.gauss_curvature.v),
        principal_curvatures=(scalar(k1), scalar(k2)),
        tangents=np.asarray(g.tangents.v),
        metric=np.asarray(g.metric.v),
        sqrt_det_metric=scalar(g.sqrt_det_metric.v),
    )


@dataclass
class TubularPoint:
    """Result of a closest-point solve for an ambient point."""

    x: np.ndarray
    foot: np.ndarray
    dist: float
    patch_index: int
    s: np.ndarray
    converged: bool
    iterations: int


class ClosedSurface:
    """A closed oriented surface covered by analytic patches."""

    def __init__(self, patches, euler_characteristic: int, label: str,
                 seed_res: int = 64, integration_patches=None):
        self.patches = list(patches)
        self.euler_characteristic = int(euler_characteristic)
        self.label = label
        # seam-free single cover used by quadrature; the overlapping atlas
        # with partition-of-unity blending remains available as a cross-check
        self.integration_patches = (
            self.patches if integration_patches is None else list(integration_patches)
        )
        self._seed_res = seed_res
        self._seed_cache = None
        self._reach_cache = None

    # -- sampling -----------------------------------------------------

    def _seed_grid(self):
        if self._seed_cache is None:
            pts, pidx, svals = [], [], []
            for k, patch in enumerate(self.patches):
                (lo0, hi0), (lo1, hi1) = patch.domain
                n = self._seed_res
                pad0 = 0.0 if patch.periodic[0] else 1e-3 * (hi0 - lo0)
                pad1 = 0.0 if patch.periodic[1] else 1e-3 * (hi1 - lo1)
                u = np.linspace(lo0 + pad0, hi0 - pad0, n, endpoint=not patch.periodic[0])
                v = np.linspace(lo1 + pad1, hi1 - pad1, n, endpoint=not patch.periodic[1])
                uu, vv = np.meshgrid(u, v, indexing="ij")
                s = np.stack([uu.ravel(), vv.ravel()], axis=-1)
                pts.append(patch.chart_map(s))
                pidx.append(np.full(len(s), k))
                svals.append(s)
            self._seed_cache = (
                np.concatenate(pts),
                np.concatenate(pidx),
                np.concatenate(svals),
            )
        return self._seed_cache

    def sample_points(self, n: int, seed: int = 0):
        """n quasi-random surface points as (patch_index, s, y) arrays."""
        rng = np.random.default_rng(seed)
        out_idx, out_s = [], []
        per = [n // len(self.patches)] * len(self.patches)
        per[0] += n - sum(per)
        for k, patch in enumerate(self.patches):
            (lo0, hi0), (lo1, hi1) = patch.domain
            m0 = 0.0 if patch.periodic[0] else 0.35 * (hi0 - lo0) * 0.5
            m1 = 0.0 if patch.periodic[1] else 0.35 * (hi1 - lo1) * 0.5
            s0 = rng.uniform(lo0 + m0, hi0 - m0, per[k])
            s1 = rng.uniform(lo1 + m1, hi1 - m1, per[k])
            out_idx.append(np.full(per[k], k))
            out_s.append(np.stack([s0, s1], axis=-1))
        pidx = np.concatenate(out_idx)
        s = np.concatenate(out_s)
        y = np.concatenate(
            [self.patches[k].chart_map(s[pidx == k]) for k in range(len(self.patches))]
        )
        # re-order y to match (pidx, s) ordering
        y2 = np.empty_like(y)
        pos = 0
        for k in range(len(self.patches)):
            sel = pidx == k
            y2[sel] = self.patches[k].chart_map(s[sel])
        return pidx, s, y2

    @property
    def diameter(self) -> float:
        pts = self._seed_grid()[0]
        return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))

    # -- reach --------------------------------------------------------

    def _curvature_bound(self) -> float:
        if self._reach_cache is None:
            kmax = 0.0
            pts, pidx, s = self._seed_grid()
            for k, patch in enumerate(self.patches):
                sk = s[pidx == k]
                g = GeometryJets(patch, sk, order=0)
                k1, k2 = g.principal_curvatures()
                kmax = max(kmax, float(np.max(np.abs(k1))), float(np.max(np.abs(k2))))
            self._reach_cache = kmax
        return self._reach_cache

    @property
    def reach(self) -> float:
        """Estimated reach 1/max|kappa| by curvature sampling (not exact)."""
        return 1.0 / self._curvature_bound()

    @property
    def eps_max(self) -> float:
        """Largest usable shell half-width, capped at 0.4/max|kappa|."""
        return 0.4 / self._curvature_bound()

    # -- chart lookup ---------------------------------------------------

    def locate(self, y):
        """Chart coordinates of on-surface points: (patch_index, s) arrays."""
        y = np.asarray(y, dtype=float)
        single = y.ndim == 1
        ys = y[None] if single else y
        best_idx = np.zeros(len(ys), dtype=int)
        best_s = np.zeros((len(ys), 2))
        best_score = np.full(len(ys), -np.inf)
        for k, patch in enumerate(self.patches):
            s = patch.wrap(patch.inverse(ys))
            score = patch.interior_score(s)
            better = score > best_score
            best_idx[better] = k
            best_s[better] = s[better]
            best_score[better] = score[better]
        if single:
            return int(best_idx[0]), best_s[0]
        return best_idx, best_s

    def geometry_at(self, y) -> GeometryEval:
        k, s = self.locate(y)
        return eval_geometry(self.patches[k], s)

    # -- closest point ---------------------------------------------------

    def closest_point_batch(self, x, seeds=None, tol: float = 1e-12, max_iter: int = 50):
        """Vectorized damped-Newton closest-point solve.

        Parameters
        ----------
        x : (N, 3) ambient points.
        seeds : optional (patch_index, s) arrays to warm-start from.

        Returns
        -------
        dict with foot, dist, patch_index, s, converged, iterations arrays.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = len(x)
        if seeds is None:
            pts, pidx, sgrid = self._seed_grid()
            # chunk the distance matrix to bound memory
            nearest = np.empty(n, dtype=int)
            step = max(1, 2_000_000 // max(len(pts), 1))
            for a in range(0, n, step):
                d2 = ((x[a : a + step, None, :] - pts[None, :, :]) ** 2).sum(-1)
                nearest[a : a + step] = np.argmin(d2, axis=1)
            patch_index = pidx[nearest]
            s = sgrid[nearest].copy()
        else:
            patch_index = np.asarray(seeds[0], dtype=int).copy()
            s = np.asarray(seeds[1], dtype=float).copy()
            if patch_index.ndim == 0:
                patch_index = np.full(n, int(patch_index))
                s = np.broadcast_to(s, (n, 2)).copy()

        foot = np.zeros_like(x)
        converged = np.zeros(n, dtype=bool)
        iters = np.zeros(n, dtype=int)
        for k, patch in enumerate(self.patches):
            sel = np.flatnonzero(patch_index == k)
            if len(sel) == 0:
                continue
            sk, fk, ck, ik = self._newton_patch(patch, x[sel], s[sel], tol, max_iter)
            s[sel] = sk
            foot[sel] = fk
            converged[sel] = ck
            iters[sel] = ik
        # signed distance from the normal at the foot
        dist = np.empty(n)
        nrm = np.empty_like(x)
        for k, patch in enumerate(self.patches):
            sel = patch_index == k
            if not np.any(sel):
                continue
            g = GeometryJets(patch, s[sel], order=0)
            nu = g.normal.v
            nrm[sel] = nu
            dist[sel] = np.einsum("ij,ij->i", x[sel] - foot[sel], nu)
        return {
            "foot": foot,
            "dist": dist,
            "patch_index": patch_index,
            "s": s,
            "normal": nrm,
            "converged": converged,
            "iterations": iters,
        }

    @staticmethod
    def _newton_patch(patch, x, s, tol, max_iter):
        s = patch.wrap(s)
        mu = patch.chart_map(s)
        t = patch.first_derivs(s)
        diff = x - mu
        res = np.einsum("nkj,nj->nk", t, diff)
        tnorm = np.linalg.norm(t, axis=-1)
        scale = tnorm * (1.0 + np.linalg.norm(diff, axis=-1))[:, None]
        err = np.max(np.abs(res) / scale, axis=-1)
        active = err > tol
        iters = np.zeros(len(x), dtype=int)
        for it in range(max_iter):
            if not np.any(active):
                break
            idx = np.flatnonzero(active)
            sa = s[idx]
            xa = x[idx]
            ta = patch.first_derivs(sa)
            dd = patch.second_derivs(sa)  # rows: (00, 01, 11)
            diff_a = xa - patch.chart_map(sa)
            r = np.einsum("nkj,nj->nk", ta, diff_a)
            # jac[k, l] = -t_k . t_l + diff . d_l t_k
            jac = -np.einsum("nkj,nlj->nkl", ta, ta)
            jac[:, 0, 0] += np.einsum("nj,nj->n", diff_a, dd[:, 0])
            jac[:, 0, 1] += np.einsum("nj,nj->n", diff_a, dd[:, 1])
            jac[:, 1, 0] += np.einsum("nj,nj->n", diff_a, dd[:, 1])
            jac[:, 1, 1] += np.einsum("nj,nj->n", diff_a, dd[:, 2])
            det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
            det = np.where(np.abs(det) < 1e-300, 1e-300, det)
            step = np.empty_like(sa)
            step[:, 0] = -(jac[:, 1, 1] * r[:, 0] - jac[:, 0, 1] * r[:, 1]) / det
            step[:, 1] = -(-jac[:, 1, 0] * r[:, 0] + jac[:, 0, 0] * r[:, 1]) / det
            rnorm_old = np.linalg.norm(r, axis=-1)
            lam = np.ones(len(idx))
            s_new = sa + step
            for _ in range(8):
                s_try = patch.wrap(s_new)
                t_try = patch.first_derivs(s_try)
                r_try = np.einsum("nkj,nj->nk", t_try, xa - patch.chart_map(s_try))
                worse = np.linalg.norm(r_try, axis=-1) > rnorm_old
                if not np.any(worse):
                    break
                lam[worse] *= 0.5
                s_new[worse] = sa[worse] + lam[worse, None] * step[worse]
            s[idx] = patch.wrap(s_new)
            iters[idx] += 1
            mu_i = patch.chart_map(s[idx])
            t_i = patch.first_derivs(s[idx])
            diff_i = x[idx] - mu_i
            r_i = np.einsum("nkj,nj->nk", t_i, diff_i)
            scale_i = np.linalg.norm(t_i, axis=-1) * (
                1.0 + np.linalg.norm(diff_i, axis=-1)
            )[:, None]
            err_i = np.max(np.abs(r_i) / scale_i, axis=-1)
            done = err_i <= tol
            active[idx[done]] = False
        foot = patch.chart_map(s)
        return s, foot, ~active, iters

    def closest_point(self, x, guess=None, check_reach: bool = True) -> TubularPoint:
        """Closest-point projection of one ambient point.

        Raises OutsideReachError when the converged distance exceeds the
        estimated reach (pre-condition of the tubular coordinates).
        """
        seeds = None
        if guess is not None:
            seeds = (np.asarray([guess[0]]), np.asarray([guess[1]], dtype=float))
        out = self.closest_point_batch(np.asarray(x, dtype=float)[None], seeds=seeds)
        dist = float(out["dist"][0])
        if check_reach and abs(dist) > self.reach:
            raise OutsideReachError(
                f"point at signed distance {dist:.3g} exceeds estimated reach "
                f"{self.reach:.3g} of {self.label}"
            )
        return TubularPoint(
            x=np.asarray(x, dtype=float),
            foot=out["foot"][0],
            dist=dist,
            patch_index=int(out["patch_index"][0]),
            s=out["s"][0],
            converged=bool(out["converged"][0]),
            iterations=int(out["iterations"][0]),
        )

    def signed_distance(self, x) -> float:
        return self.closest_point(x).dist


# ---------------------------------------------------------------------------
# Built-in surfaces


def sphere(radius: float = 1.0) -> ClosedSurface:
    return ClosedSurface(
        sphere_like_patches([radius] * 3),
        euler_characteristic=2,
        label=f"sphere(R={radius:g})",
        integration_patches=[sphere_like_full_patch([radius] * 3)],
    )


def ellipsoid(a: float, b: float, c: float) -> ClosedSurface:
    return ClosedSurface(
        sphere_like_patches([a, b, c]),
        euler_characteristic=2,
        label=f"ellipsoid(a={a:g},b={b:g},c={c:g})",
        integration_patches=[sphere_like_full_patch([a, b, c])],
    )


def torus(major_radius: float = 2.0, minor_radius: float = 0.5) -> ClosedSurface:
    if minor_radius >= major_radius:
        raise ValueError("torus requires r < R0")
    return ClosedSurface(
        [torus_patch(major_radius, minor_radius)],
        euler_characteristic=0,
        label=f"torus(R0={major_radius:g},r={minor_radius:g})",
    )


def _parse_kv(body: str):
    out = {}
    if body:
        for item in body.split(","):
            key, _, val = item.partition("=")
            out[key.strip()] = float(val)
    return out


def parse_surface(spec: str) -> ClosedSurface:
    """Build a surface from a spec string like ``"sphere:R=1"``.

    Supported: ``sphere:R=<r>``, ``torus:R0=<R0>,r=<r>``,
    ``ellipsoid:a=<a>,b=<b>,c=<c>``.
    """
    head, _, body = spec.partition(":")
    kv = _parse_kv(body)
    try:
        if head == "sphere":
            return sphere(kv.get("R", 1.0))
        if head == "torus":
            return torus(kv.get("R0", 2.0), kv.get("r", 0.5))
        if head == "ellipsoid":
            return ellipsoid(kv["a"], kv["b"], kv["c"])
    except KeyError as exc:
        raise ValueError(f"surface spec {spec!r} missing field {exc}") from exc
    raise ValueError(f"unknown surface spec {spec!r}")
