"""Surface fields with exact chart jets.

A ``SurfaceField`` is a scalar-, vector- or matrix-valued quantity on a
surface that can report its value *and* chart derivatives (as a jet) at
chart points.  Fields built from ambient callables carry their own
analytic ambient derivatives; fields built from the geometry (normal,
projection, curvatures) pull jets straight from the chart.  Pointwise
algebra on fields composes jets by the Leibniz rule, so every derived
quantity stays exact to rounding.

Evaluation always happens through a ``GeometryJets`` bundle so that the
chart geometry is computed once and shared across subexpressions.
"""

from __future__ import annotations

import numpy as np

from . import jets as J
from .geometry import GeometryJets

__all__ = [
    "SurfaceField",
    "AmbientField",
    "Polynomial",
    "random_polynomial",
    "NormalField",
    "ProjectionField",
    "ShapeOperatorField",
    "MeanCurvatureField",
    "GaussCurvatureField",
    "constant_field",
    "evaluate",
    "evaluate_values",
]

_RANKS = {"scalar": 0, "vector": 1, "matrix": 2}


class SurfaceField:
    """Base class; subclasses implement ``_jet(geom, order)``."""

    kind = "scalar"

    @property
    def rank(self) -> int:
        return _RANKS[self.kind]

    def jet(self, geom: GeometryJets, order: int) -> J.Jet:
        """Jet at the bundle's chart points, memoized per bundle.

        Keys hold the field object itself so short-lived expression trees
        cannot collide through recycled ids.
        """
        key = (self, order)
        hit = geom.field_cache.get(key)
        if hit is None:
            hit = self._jet(geom, order)
            geom.field_cache[key] = hit
        return hit

    def _jet(self, geom: GeometryJets, order: int) -> J.Jet:
        raise NotImplementedError

    # pointwise algebra -------------------------------------------------

    def __add__(self, other):
        return _Binary("add", self, other, self.kind)

    def __sub__(self, other):
        return _Binary("sub", self, other, self.kind)

    def __neg__(self):
        return _Scale(-1.0, self)

    def __rmul__(self, c):
        if np.isscalar(c):
            return _Scale(float(c), self)
        return NotImplemented


class _Binary(SurfaceField):
    def __init__(self, op, a, b, kind):
        self.op, self.a, self.b, self.kind = op, a, b, kind

    def _jet(self, geom, order):
        ja = self.a.jet(geom, order)
        jb = self.b.jet(geom, order)
        return J.add(ja, jb) if self.op == "add" else J.sub(ja, jb)


class _Scale(SurfaceField):
    def __init__(self, c, a):
        self.c, self.a = c, a
        self.kind = a.kind

    def _jet(self, geom, order):
        return J.scale(self.c, self.a.jet(geom, order))


class Lambda(SurfaceField):
    """Field defined by an arbitrary jet builder (used by the operators)."""

    def __init__(self, kind, builder):
        self.kind = kind
        self._builder = builder

    def _jet(self, geom, order):
        return self._builder(geom, order)


def constant_field(value) -> SurfaceField:
    value = np.asarray(value, dtype=float)
    kind = {0: "scalar", 1: "vector", 2: "matrix"}[value.ndim]

    def build(geom, order):
        batch = np.asarray(geom.s).shape[:-1]
        return J.const(value, order, batch_shape=batch)

    return Lambda(kind, build)


# ---------------------------------------------------------------------------
# Ambient fields


class AmbientField(SurfaceField):
    """Field given by ambient callables with analytic derivatives.

    ``value(y)`` maps (..., 3) points to values; ``grad`` adds one trailing
    ambient axis, ``hess`` two, ``third`` three.  Derivatives beyond the
    ones supplied limit the attainable jet order.
    """

    def __init__(self, kind, value, grad=None, hess=None, third=None, name=""):
        self.kind = kind
        self._fns = [value, grad, hess, third]
        self.name = name

    def value_at(self, y):
        return self._fns[0](np.asarray(y, dtype=float))

    def _jet(self, geom, order):
        have = sum(1 for f in self._fns if f is not None) - 1
        if order > have:
            raise ValueError(
                f"ambient field {self.name!r} supplies derivatives to order "
                f"{have}, jet order {order} requested"
            )
        geom.require(order)
        mu = geom.mu
        y = mu.v
        data = [self._fns[0](y)]
        if order >= 1:
            g = self._fns[1](y)
            m1 = mu.d(1)
            data.append(np.einsum("...j,k...j->k...", g, m1) if self.rank == 0
                        else np.einsum("...ij,k...j->k...i", g, m1) if self.rank == 1
                        else np.einsum("...abj,k...j->k...ab", g, m1))
        if order >= 2:
            g = self._fns[1](y)
            h = self._fns[2](y)
            m1, m2 = mu.d(1), mu.d(2)
            if self.rank == 0:
                t = np.einsum("...jm,k...j,l...m->kl...", h, m1, m1)
                t = t + np.einsum("...j,kl...j->kl...", g, m2)
            elif self.rank == 1:
                t = np.einsum("...ijm,k...j,l...m->kl...i", h, m1, m1)
                t = t + np.einsum("...ij,kl...j->kl...i", g, m2)
            else:
                t = np.einsum("...abjm,k...j,l...m->kl...ab", h, m1, m1)
                t = t + np.einsum("...abj,kl...j->kl...ab", g, m2)
            data.append(t)
        if order >= 3:
            if self.rank != 0:
                raise ValueError("order-3 jets only supported for scalar fields")
            g = self._fns[1](y)
            h = self._fns[2](y)
            c = self._fns[3](y)
            m1, m2, m3 = mu.d(1), mu.d(2), mu.d(3)
            t = np.einsum("...jmp,k...j,l...m,q...p->klq...", c, m1, m1, m1)
            t = t + np.einsum("...jm,kl...j,q...m->klq...", h, m2, m1)
            t = t + np.einsum("...jm,kq...j,l...m->klq...", h, m2, m1)
            t = t + np.einsum("...jm,lq...j,k...m->klq...", h, m2, m1)
            t = t + np.einsum("...j,klq...j->klq...", g, m3)
            data.append(t)
        return J.Jet(data)


class Polynomial(AmbientField):
    """Ambient polynomial with exact derivatives of every order.

    ``terms`` maps exponent triples (i, j, k) to coefficients; vector and
    matrix fields hold one term table per component.
    """

    def __init__(self, kind, term_tables, name="poly"):
        self.kind = kind
        self.terms = term_tables
        self.name = name
        super().__init__(kind, self._value, self._grad, self._hess, self._third, name)

    @staticmethod
    def _mono(y, expo):
        out = np.ones(y.shape[:-1])
        for ax, p in enumerate(expo):
            if p:
                out = out * y[..., ax] ** p
        return out

    def _tables(self):
        if self.kind == "scalar":
            return {(): self.terms}
        if self.kind == "vector":
            return {(i,): self.terms[i] for i in range(3)}
        return {(i, j): self.terms[i][j] for i in range(3) for j in range(3)}

    def _shape(self, y, extra):
        base = {"scalar": (), "vector": (3,), "matrix": (3, 3)}[self.kind]
        return y.shape[:-1] + base + extra

    def _eval(self, y, diff):
        """diff = tuple of ambient axes already differentiated."""
        y = np.asarray(y, dtype=float)
        out = np.zeros(self._shape(y, (3,) * len(diff)))
        for comp, table in self._tables().items():
            for expo, coef in table.items():
                expo = np.asarray(expo)
                for axes in np.ndindex(*((3,) * len(diff))):
                    e = expo.copy()
                    c = coef
                    ok = True
                    for ax in axes:
                        if e[ax] == 0:
                            ok = False
                            break
                        c *= e[ax]
                        e[ax] -= 1
                    if not ok or c == 0.0:
                        continue
                    idx = (Ellipsis,) + comp + axes
                    out[idx] += c * self._mono(y, e)
        return out

    def _value(self, y):
        return self._eval(y, ())

    def _grad(self, y):
        return self._eval(y, (0,))

    def _hess(self, y):
        return self._eval(y, (0, 0))

    def _third(self, y):
        return self._eval(y, (0, 0, 0))


def _random_table(rng, degree):
    table = {}
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            for k in range(degree + 1 - i - j):
                table[(i, j, k)] = rng.uniform(-1.0, 1.0)
    return table


def random_polynomial(kind: str, seed: int, degree: int = 3, name=None) -> Polynomial:
    """Seeded ambient polynomial with coefficients uniform in [-1, 1]."""
    rng = np.random.default_rng(seed)
    if kind == "scalar":
        tables = _random_table(rng, degree)
    elif kind == "vector":
        tables = [_random_table(rng, degree) for _ in range(3)]
    else:
        tables = [[_random_table(rng, degree) for _ in range(3)] for _ in range(3)]
    return Polynomial(kind, tables, name=name or f"poly(kind={kind},seed={seed})")


# ---------------------------------------------------------------------------
# Geometry-derived fields


class NormalField(SurfaceField):
    kind = "vector"

    def _jet(self, geom, order):
        geom.require(order)
        return geom.normal.truncated(order)


class ProjectionField(SurfaceField):
    kind = "matrix"

    def _jet(self, geom, order):
        geom.require(order)
        return geom.projection.truncated(order)


class ShapeOperatorField(SurfaceField):
    kind = "matrix"

    def _jet(self, geom, order):
        geom.require(order)
        return geom.shape_operator.truncated(order)


class MeanCurvatureField(SurfaceField):
    kind = "scalar"

    def _jet(self, geom, order):
        geom.require(order)
        return geom.mean_curvature.truncated(order)


class GaussCurvatureField(SurfaceField):
    kind = "scalar"

    def _jet(self, geom, order):
        geom.require(order)
        return geom.gauss_curvature.truncated(order)


class PolynomialOf(SurfaceField):
    """Univariate polynomial of a scalar field, e.g. a function of H."""

    kind = "scalar"

    def __init__(self, coeffs, base: SurfaceField, name=""):
        self.coeffs = list(coeffs)  # ascending powers
        self.base = base
        self.name = name

    def _jet(self, geom, order):
        u = self.base.jet(geom, order)
        batch = np.asarray(geom.s).shape[:-1]
        acc = J.const(np.array(self.coeffs[-1]), order, batch_shape=batch)
        for c in reversed(self.coeffs[:-1]):
            acc = J.add(J.mul(acc, u), J.const(np.array(c), order, batch_shape=batch))
        return acc


# pointwise tensor algebra ----------------------------------------------


def _combine(op, kind, a, b):
    def build(geom, order):
        return op(a.jet(geom, order), b.jet(geom, order))

    return Lambda(kind, build)


def dot(a, b) -> SurfaceField:
    return _combine(J.dot, "scalar", a, b)


def matvec(m, v) -> SurfaceField:
    return _combine(J.matvec, "vector", m, v)


def vecmat(v, m) -> SurfaceField:
    return _combine(J.vecmat, "vector", v, m)


def matmul(a, b) -> SurfaceField:
    return _combine(J.matmul, "matrix", a, b)


def outer(a, b) -> SurfaceField:
    return _combine(J.outer, "matrix", a, b)


def cross(a, b) -> SurfaceField:
    return _combine(J.cross, "vector", a, b)


def scalar_mul(s, t) -> SurfaceField:
    return _combine(lambda x, y: J.smul(x, y, t.rank), t.kind, s, t)


def transpose(a) -> SurfaceField:
    return Lambda("matrix", lambda geom, order: J.transpose(a.jet(geom, order)))


def sym(a) -> SurfaceField:
    return Lambda("matrix", lambda geom, order: J.sym(a.jet(geom, order)))


def trace(a) -> SurfaceField:
    return Lambda("scalar", lambda geom, order: J.trace(a.jet(geom, order)))


def project(v) -> SurfaceField:
    """Tangential part P v of a vector field."""
    return matvec(ProjectionField(), v)


# evaluation helpers ------------------------------------------------------


def evaluate(field: SurfaceField, surface, patch_index, s, order: int = 0):
    """Evaluate a field's jet on one patch at chart points s."""
    geom = GeometryJets(surface.patches[patch_index], s, order=order)
    return field.jet(geom, order)


def evaluate_values(field: SurfaceField, surface, patch_index, s):
    """Batched values at mixed-patch chart points.

    ``patch_index`` and ``s`` are parallel arrays as produced by
    ``ClosedSurface.locate`` / ``sample_points``.
    """
    patch_index = np.asarray(patch_index)
    s = np.asarray(s, dtype=float)
    shape = {"scalar": (), "vector": (3,), "matrix": (3, 3)}[field.kind]
    out = np.empty(s.shape[:-1] + shape)
    for k in np.unique(patch_index):
        sel = patch_index == k
        geom = GeometryJets(surface.patches[int(k)], s[sel], order=0)
        out[sel] = field.jet(geom, 0).v
    return out
