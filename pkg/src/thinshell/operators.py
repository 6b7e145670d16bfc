"""Tangential differential operators and their verification residuals.

Two independent derivative routes are provided:

* intrinsic mode (the default): operators are assembled from exact chart
  jets through the inverse first fundamental form, so results are exact
  up to rounding;
* normal-extension FD mode: fields are extended constantly along the
  normal through the closest-point map and differentiated by ambient
  central differences.  This is the route the operator *definitions* use,
  so extension independence and the agreement of the two modes are
  themselves properties under test.

Matrix divergence follows the column convention
``[div M]_j = sum_i dtan_i M_ij`` (the transpose convention is equally
common elsewhere; all identities here assume this one).
"""

from __future__ import annotations

import numpy as np

from . import jets as J
from . import fields as F
from .fields import Lambda, SurfaceField
from .geometry import ClosedSurface, GeometryJets

__all__ = [
    "tangential_gradient",
    "surface_divergence",
    "laplace_beltrami",
    "tangential_hessian",
    "exchange_defect",
    "strain_rate",
    "projected_strain",
    "covariant_derivative",
    "gauss_formula_defect",
    "bochner_laplacian",
    "bochner_frame_oracle",
    "viscous_identity_defect",
    "compare_viscous_defect",
    "visc_equiv_defect",
    "div_grad_nu_defect",
    "killing_field",
    "surface_curl",
    "tangential_polynomial",
    "divfree_tangential_field",
    "parse_field",
    "FDEvaluator",
]


# ---------------------------------------------------------------------------
# Intrinsic operators (field -> field)


def _dchart(jet: J.Jet, l: int) -> J.Jet:
    return J.partial(jet, l)


def tangential_gradient(f: SurfaceField) -> SurfaceField:
    """Tangential gradient; scalar -> vector, vector -> matrix.

    For a vector field the rows of the result are indexed by the
    derivative direction: ``[grad v]_ij = dtan_i v_j``.
    """
    if f.kind == "scalar":

        def build(geom, order):
            geom.require(order + 1)
            fj = f.jet(geom, order + 1)
            acc = None
            for k in (0, 1):
                tk = J.component(geom.tangents, (k, slice(None))).truncated(order)
                for l in (0, 1):
                    gkl = J.component(geom.inv_metric, (k, l)).truncated(order)
                    term = J.smul(J.mul(gkl, _dchart(fj, l)), tk, 1)
                    acc = term if acc is None else J.add(acc, term)
            return acc

        return Lambda("vector", build)

    if f.kind == "vector":

        def build(geom, order):
            geom.require(order + 1)
            fj = f.jet(geom, order + 1)
            acc = None
            for k in (0, 1):
                tk = J.component(geom.tangents, (k, slice(None))).truncated(order)
                for l in (0, 1):
                    gkl = J.component(geom.inv_metric, (k, l)).truncated(order)
                    term = J.outer(J.smul(gkl, tk, 1), _dchart(fj, l))
                    acc = term if acc is None else J.add(acc, term)
            return acc

        return Lambda("matrix", build)

    raise ValueError("tangential gradient of a matrix field is not defined here")


def surface_divergence(f: SurfaceField) -> SurfaceField:
    """Surface divergence; vector -> scalar, matrix -> vector (column rule)."""
    if f.kind == "vector":

        def build(geom, order):
            geom.require(order + 1)
            fj = f.jet(geom, order + 1)
            acc = None
            for k in (0, 1):
                tk = J.component(geom.tangents, (k, slice(None))).truncated(order)
                for l in (0, 1):
                    gkl = J.component(geom.inv_metric, (k, l)).truncated(order)
                    term = J.mul(gkl, J.dot(tk, _dchart(fj, l)))
                    acc = term if acc is None else J.add(acc, term)
            return acc

        return Lambda("scalar", build)

    if f.kind == "matrix":

        def build(geom, order):
            geom.require(order + 1)
            fj = f.jet(geom, order + 1)
            acc = None
            for k in (0, 1):
                tk = J.component(geom.tangents, (k, slice(None))).truncated(order)
                for l in (0, 1):
                    gkl = J.component(geom.inv_metric, (k, l)).truncated(order)
                    term = J.smul(gkl, J.vecmat(tk, _dchart(fj, l)), 1)
                    acc = term if acc is None else J.add(acc, term)
            return acc

        return Lambda("vector", build)

    raise ValueError("surface divergence needs a vector or matrix field")


def laplace_beltrami(f: SurfaceField) -> SurfaceField:
    """div_tan grad_tan, componentwise on vectors."""
    if f.kind == "scalar":
        return surface_divergence(tangential_gradient(f))
    if f.kind == "vector":
        comps = []
        for j in range(3):
            fj = Lambda("scalar", lambda geom, order, j=j: J.component(f.jet(geom, order), (j,)))
            comps.append(surface_divergence(tangential_gradient(fj)))

        def build(geom, order):
            return J.pack([c.jet(geom, order) for c in comps], 3)

        return Lambda("vector", build)
    raise ValueError("componentwise Laplacian defined for scalars and vectors")


def tangential_hessian(f: SurfaceField) -> SurfaceField:
    """Matrix of second tangential derivatives (dtan_i dtan_j f)."""
    return tangential_gradient(tangential_gradient(f))


def exchange_defect(f: SurfaceField) -> SurfaceField:
    """Commutator of tangential derivatives minus its curvature value.

    E_ij = dtan_i dtan_j f - dtan_j dtan_i f
           - ([A grad f]_i nu_j - [A grad f]_j nu_i); identically zero.
    """
    hess = tangential_hessian(f)
    aw = F.matvec(F.ShapeOperatorField(), tangential_gradient(f))
    skew = F.outer(aw, F.NormalField()) - F.outer(F.NormalField(), aw)

    def build(geom, order):
        h = hess.jet(geom, order)
        comm = J.sub(h, J.transpose(h))
        return J.sub(comm, skew.jet(geom, order))

    return Lambda("matrix", build)


def strain_rate(v: SurfaceField) -> SurfaceField:
    """Tangential strain rate (grad v + (grad v)^T)/2."""
    return F.sym(tangential_gradient(v))


def projected_strain(v: SurfaceField) -> SurfaceField:
    """P D_tan(v) P, the deformation tensor of the surface fluid."""
    p = F.ProjectionField()
    return F.matmul(F.matmul(p, strain_rate(v)), p)


def covariant_derivative(x: SurfaceField, y: SurfaceField) -> SurfaceField:
    """Levi-Civita covariant derivative of tangential x along tangential y."""
    return F.project(F.matvec(F.transpose(tangential_gradient(x)), y))


def gauss_formula_defect(x: SurfaceField, y: SurfaceField) -> SurfaceField:
    """(y . grad) x - covariant part - (Ax . y) nu; zero for tangential x, y."""
    directional = F.matvec(F.transpose(tangential_gradient(x)), y)
    normal_part = F.scalar_mul(
        F.dot(F.matvec(F.ShapeOperatorField(), x), y), F.NormalField()
    )
    return directional - covariant_derivative(x, y) - normal_part


def bochner_laplacian(x: SurfaceField) -> SurfaceField:
    """Connection Laplacian on tangential fields: P lap(x) + A^2 x."""
    a = F.ShapeOperatorField()
    return F.project(laplace_beltrami(x)) + F.matvec(a, F.matvec(a, x))


class _FrameField(SurfaceField):
    """Local orthonormal tangent frame from Gram-Schmidt on chart tangents."""

    kind = "vector"

    def __init__(self, index: int):
        self.index = index

    def _jet(self, geom, order):
        geom.require(order)
        t0 = J.component(geom.tangents, (0, slice(None)))
        e0 = J.smul(J.reciprocal(J.norm(t0)), t0, 1)
        if self.index == 0:
            return e0.truncated(order)
        t1 = J.component(geom.tangents, (1, slice(None)))
        w = J.sub(t1, J.smul(J.dot(t1, e0), e0, 1))
        return J.smul(J.reciprocal(J.norm(w)), w, 1).truncated(order)


def bochner_frame_oracle(x: SurfaceField) -> SurfaceField:
    """Frame-based connection Laplacian: sum_i (cd_i cd_i x - cd_{cd_i e_i} x)."""
    acc = None
    for i in (0, 1):
        e = _FrameField(i)
        z = covariant_derivative(x, e)
        first = covariant_derivative(z, e)
        w = covariant_derivative(e, e)
        second = F.project(F.matvec(F.transpose(tangential_gradient(x)), w))
        term = first - second
        acc = term if acc is None else acc + term
    return acc


# ---------------------------------------------------------------------------
# Identity defects (all identically zero within their hypotheses)


def viscous_identity_defect(v: SurfaceField) -> SurfaceField:
    """Full divergence-of-projected-strain identity for arbitrary v.

    2 div(P D_tan(v) P) - { 2 tr[A grad v] nu + P lap(v)
                            + grad(div v) + H (grad v) nu }.
    """
    lhs = 2.0 * surface_divergence(projected_strain(v))
    grad_v = tangential_gradient(v)
    nu = F.NormalField()
    rhs = (
        F.scalar_mul(2.0 * F.trace(F.matmul(F.ShapeOperatorField(), grad_v)), nu)
        + F.project(laplace_beltrami(v))
        + tangential_gradient(surface_divergence(v))
        + F.scalar_mul(F.MeanCurvatureField(), F.matvec(grad_v, nu))
    )
    return lhs - rhs


def compare_viscous_defect(v: SurfaceField) -> SurfaceField:
    """2 P div(P D_tan(v) P) - (bochner(v) + K v); zero for tangential
    divergence-free v."""
    lhs = F.project(2.0 * surface_divergence(projected_strain(v)))
    rhs = bochner_laplacian(v) + F.scalar_mul(F.GaussCurvatureField(), v)
    return lhs - rhs


def visc_equiv_defect(v: SurfaceField) -> SurfaceField:
    """2 div(P D_tan(v) P) - (lap v + H (grad v) nu).

    Zero for limit-compatible v: tangential, divergence-free, and with
    streamlines along level sets of H (any field on a constant-H surface).
    """
    lhs = 2.0 * surface_divergence(projected_strain(v))
    rhs = laplace_beltrami(v) + F.scalar_mul(
        F.MeanCurvatureField(), F.matvec(tangential_gradient(v), F.NormalField())
    )
    return lhs - rhs


def div_grad_nu_defect(v: SurfaceField) -> SurfaceField:
    """div[(grad v) nu] - { (lap v) . nu - tr[A grad v] }; zero for all v."""
    grad_v = tangential_gradient(v)
    lhs = surface_divergence(F.matvec(grad_v, F.NormalField()))
    rhs = F.dot(laplace_beltrami(v), F.NormalField()) - F.trace(
        F.matmul(F.ShapeOperatorField(), grad_v)
    )
    return lhs - rhs


def spectral_identity_defect(v: SurfaceField) -> SurfaceField:
    """H A v - (K v + A^2 v); zero for tangential v."""
    a = F.ShapeOperatorField()
    lhs = F.scalar_mul(F.MeanCurvatureField(), F.matvec(a, v))
    rhs = F.scalar_mul(F.GaussCurvatureField(), v) + F.matvec(a, F.matvec(a, v))
    return lhs - rhs


# ---------------------------------------------------------------------------
# Manufactured fields


def killing_field(axis="z") -> F.AmbientField:
    """Rigid rotation generator w x y (an isometry flow of any surface of
    revolution about that axis)."""
    w = {"x": [1.0, 0, 0], "y": [0, 1.0, 0], "z": [0, 0, 1.0]}.get(axis, axis)
    w = np.asarray(w, dtype=float)
    wmat = np.array(
        [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
    )  # (w x y)_i = wmat[i, j] y_j

    def value(y):
        return np.cross(w, y)

    def grad(y):
        # [grad]_{ij} = d_j (w x y)_i under the (component, ambient) layout
        return np.broadcast_to(wmat, y.shape[:-1] + (3, 3))

    def hess(y):
        return np.zeros(y.shape[:-1] + (3, 3, 3))

    return F.AmbientField("vector", value, grad, hess, name=f"killing({axis})")


def surface_curl(psi: SurfaceField) -> SurfaceField:
    """nu x grad_tan(psi): tangential and exactly divergence-free."""
    return F.cross(F.NormalField(), tangential_gradient(psi))


def tangential_polynomial(seed: int, degree: int = 3) -> SurfaceField:
    """P applied to a random ambient polynomial vector field."""
    return F.project(F.random_polynomial("vector", seed, degree))


def divfree_tangential_field(surface: ClosedSurface, seed: int, degree: int = 3,
                             level_h: bool = False) -> SurfaceField:
    """Random divergence-free tangential field as a surface curl.

    With ``level_h`` the stream function is a random polynomial in the
    mean curvature, so streamlines follow level sets of H; that is the
    family on which the reduced viscous expansion identity holds on
    surfaces with varying H.
    """
    rng = np.random.default_rng(seed)
    if level_h:
        coeffs = rng.uniform(-1.0, 1.0, 4)
        psi = F.PolynomialOf(coeffs, F.MeanCurvatureField(), name=f"poly(H;seed={seed})")
    else:
        psi = F.random_polynomial("scalar", seed, degree)
    return surface_curl(psi)


def has_constant_mean_curvature(surface: ClosedSurface, tol: float = 1e-8) -> bool:
    pidx, s, _ = surface.sample_points(40, seed=0)
    vals = F.evaluate_values(F.MeanCurvatureField(), surface, pidx, s)
    return float(vals.max() - vals.min()) < tol * max(1.0, float(np.abs(vals).max()))


def parse_field(spec: str, surface: ClosedSurface | None = None) -> SurfaceField:
    """Manufactured-field spec strings.

    ``poly:deg=3,seed=7`` (tangentially projected random polynomial),
    ``curl:deg=3,seed=7`` (random surface curl, divergence-free),
    ``killing:axis=z``, ``normal`` (v = nu),
    ``curlh:seed=7`` (surface curl with an H-level stream function).
    """
    head, _, body = spec.partition(":")
    kv = {}
    for item in filter(None, body.split(",")):
        key, _, val = item.partition("=")
        kv[key.strip()] = val.strip()
    if head == "poly":
        return tangential_polynomial(int(kv.get("seed", 0)), int(kv.get("deg", 3)))
    if head == "curl":
        psi = F.random_polynomial("scalar", int(kv.get("seed", 0)), int(kv.get("deg", 3)))
        return surface_curl(psi)
    if head == "curlh":
        rng = np.random.default_rng(int(kv.get("seed", 0)))
        psi = F.PolynomialOf(rng.uniform(-1, 1, 4), F.MeanCurvatureField())
        return surface_curl(psi)
    if head == "killing":
        return killing_field(kv.get("axis", "z"))
    if head == "normal":
        return F.NormalField()
    raise ValueError(f"unknown field spec {spec!r}")


# ---------------------------------------------------------------------------
# Normal-extension finite-difference mode


class FDEvaluator:
    """Tangential derivatives via constant-normal extension and central FD.

    The extension is f_bar(x) = f(pi(x)); first derivatives use step ``h``,
    second (nested) derivatives use ``h`` outside and ``h/10`` inside.
    """

    def __init__(self, surface: ClosedSurface, h: float | None = None):
        self.surface = surface
        self.h = 1e-4 * surface.diameter if h is None else float(h)
        # nested differences amplify foot error by 1/(4 h h_in); solve the
        # closest point to near machine precision so it never dominates
        self.cp_tol = 1e-14

    # extension values ------------------------------------------------

    def extend(self, field: SurfaceField, x, warm=None):
        """f(pi(x)) for ambient points x of any batch shape (..., 3)."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 3)
        cp = self.surface.closest_point_batch(flat, seeds=warm, tol=self.cp_tol)
        vals = F.evaluate_values(field, self.surface, cp["patch_index"], cp["s"])
        return vals.reshape(x.shape[:-1] + vals.shape[1:])

    def _stencil(self, y, h):
        y = np.asarray(y, dtype=float)
        offs = np.concatenate([h * np.eye(3), -h * np.eye(3)])  # (6, 3)
        return y[..., None, :] + offs

    def ambient_gradient(self, fn, y, h):
        """Central-difference ambient gradient of fn at points y.

        Returns D with layout D[..., i, <value axes>] = d_i fn.
        """
        vals = fn(self._stencil(y, h))  # (..., 6, value...)
        plus = np.take(vals, [0, 1, 2], axis=y.ndim - 1)
        minus = np.take(vals, [3, 4, 5], axis=y.ndim - 1)
        return (plus - minus) / (2.0 * h)

    def tangential_gradient(self, field, points, h=None):
        """FD tangential gradient at located surface points.

        ``points`` is a dict with patch_index, s, y, projection keys (see
        ``locate_points``).  Scalar fields give vectors; vector fields
        give the (direction, component) gradient matrix.
        """
        h = self.h if h is None else h
        fn = lambda x: self.extend(field, x)
        d = self.ambient_gradient(fn, points["y"], h)
        if field.kind == "scalar":
            return np.einsum("...ij,...j->...i", points["projection"], d)
        return np.einsum("...ik,...kj->...ij", points["projection"], d)

    def tangential_hessian(self, field, points, h=None):
        """Nested FD second tangential derivatives of a scalar field."""
        h = self.h if h is None else h
        inner = h / 10.0

        def inner_grad(x):
            x = np.asarray(x, dtype=float)
            flat = x.reshape(-1, 3)
            cp = self.surface.closest_point_batch(flat, tol=self.cp_tol)
            pts = self._points_from_cp(cp)
            g = self.tangential_gradient(field, pts, h=inner)
            return g.reshape(x.shape[:-1] + g.shape[1:])

        d = self.ambient_gradient(inner_grad, points["y"], h)  # (..., i, j)
        return np.einsum("...ik,...kj->...ij", points["projection"], d)

    def surface_divergence(self, field, points, h=None):
        g = self.tangential_gradient(field, points, h)
        if field.kind == "vector":
            return np.einsum("...ii->...", g)
        raise ValueError("FD divergence implemented for vector fields")

    def matrix_divergence(self, field, points, h=None):
        """FD divergence of a matrix field, column convention."""
        h = self.h if h is None else h
        fn = lambda x: self.extend(field, x)
        d = self.ambient_gradient(fn, points["y"], h)  # (..., i, a, b)
        dt = np.einsum("...ik,...kab->...iab", points["projection"], d)
        return np.einsum("...iib->...b", dt)

    def vector_laplacian(self, field, points, h=None):
        """Nested FD componentwise Laplace-Beltrami of a vector field."""
        h = self.h if h is None else h
        inner = h / 10.0

        def inner_grad(x):
            x = np.asarray(x, dtype=float)
            flat = x.reshape(-1, 3)
            cp = self.surface.closest_point_batch(flat, tol=self.cp_tol)
            pts = self._points_from_cp(cp)
            g = self.tangential_gradient(field, pts, h=inner)  # (n, i, j)
            return g.reshape(x.shape[:-1] + g.shape[1:])

        d = self.ambient_gradient(inner_grad, points["y"], h)  # (..., k, i, j)
        dt = np.einsum("...km,...mij->...kij", points["projection"], d)
        return np.einsum("...iij->...j", dt)

    def _points_from_cp(self, cp):
        pts = {"patch_index": cp["patch_index"], "s": cp["s"], "y": cp["foot"]}
        nu = cp["normal"]
        pts["projection"] = np.eye(3) - np.einsum("...i,...j->...ij", nu, nu)
        return pts

    def locate_points(self, pidx, s):
        """Assemble the point bundle for FD calls from chart samples."""
        surface = self.surface
        s = np.asarray(s, dtype=float)
        proj = np.empty(s.shape[:-1] + (3, 3))
        y = np.empty(s.shape[:-1] + (3,))
        for k in np.unique(pidx):
            sel = pidx == k
            geom = GeometryJets(surface.patches[int(k)], s[sel], order=0)
            y[sel] = geom.mu.v
            proj[sel] = geom.projection.v
        return {"patch_index": pidx, "s": s, "y": y, "projection": proj}
