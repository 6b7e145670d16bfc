"""Truncated Taylor arithmetic in two chart variables.

A ``Jet`` bundles the value of a quantity together with its partial
derivatives with respect to the two chart coordinates, up to a chosen
truncation order.  All tangential differential operators in this package
are assembled from jets, so first- and second-order surface derivatives
come out exact to rounding instead of carrying finite-difference error.

Shapes: the value may be a scalar, a 3-vector, or a small matrix, with an
arbitrary batch of leading axes.  Derivative data of order ``n`` is stored
with ``n`` leading axes of length 2 (one per chart direction), ahead of the
batch/value axes.  All operations broadcast over the batch.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np


class Jet:
    """Value plus chart-derivatives up to some order.

    ``data[n]`` holds the order-``n`` derivative tensor, shape
    ``(2,)*n + batch + value_shape``.  ``data[0]`` is the value itself.
    """

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = list(data)

    @property
    def order(self) -> int:
        return len(self.data) - 1

    @property
    def v(self):
        return self.data[0]

    def d(self, n: int):
        return self.data[n]

    def truncated(self, order: int) -> "Jet":
        if order >= self.order:
            return self
        return Jet(self.data[: order + 1])


def const(value, order: int, batch_shape=()) -> Jet:
    """Jet of a chart-independent quantity."""
    value = np.asarray(value, dtype=float)
    value = np.broadcast_to(value, batch_shape + value.shape) if batch_shape else value
    data = [value]
    for n in range(1, order + 1):
        data.append(np.zeros((2,) * n + value.shape))
    return Jet(data)


def _subset_terms(fn, a: Jet, b: Jet, n: int):
    """Order-n derivative of a bilinear fn(a, b) by the Leibniz rule."""
    acc = None
    for k in range(n + 1):
        m = n - k
        ak = a.data[k]
        bm = b.data[m]
        # expand so the k derivative axes of `a` and the m axes of `b`
        # occupy disjoint leading positions
        ak_e = ak.reshape(ak.shape[:k] + (1,) * m + ak.shape[k:])
        bm_e = bm.reshape((1,) * k + bm.shape)
        base = fn(ak_e, bm_e)
        for S in combinations(range(n), k):
            comp = tuple(i for i in range(n) if i not in S)
            perm = list(S) + list(comp)
            term = base
            if perm != list(range(n)):
                term = np.moveaxis(term, range(n), perm)
            acc = term if acc is None else acc + term
    return acc


def bilinear(fn, a: Jet, b: Jet, order: int | None = None) -> Jet:
    """Apply a bilinear numpy operation to two jets.

    ``fn`` must act on the trailing value axes and broadcast over
    everything else (use einsum subscripts with a ``...`` prefix).
    """
    o = min(a.order, b.order)
    if order is not None:
        o = min(o, order)
    data = [fn(a.v, b.v)]
    for n in range(1, o + 1):
        data.append(_subset_terms(fn, a, b, n))
    return Jet(data)


def linear(fn, a: Jet) -> Jet:
    """Apply a linear numpy operation (acting on value axes) to a jet."""
    return Jet([fn(x) for x in a.data])


def add(a: Jet, b: Jet) -> Jet:
    o = min(a.order, b.order)
    return Jet([a.data[n] + b.data[n] for n in range(o + 1)])


def sub(a: Jet, b: Jet) -> Jet:
    o = min(a.order, b.order)
    return Jet([a.data[n] - b.data[n] for n in range(o + 1)])


def scale(c: float, a: Jet) -> Jet:
    return Jet([c * x for x in a.data])


def smul(s: Jet, t: Jet, rank: int) -> Jet:
    """Scalar jet times tensor jet of the given value rank."""
    sub_t = "..." + "ijk"[:rank]
    return bilinear(lambda x, y: np.einsum(f"...,{sub_t}->{sub_t}", x, y), s, t)


def mul(a: Jet, b: Jet) -> Jet:
    """Scalar jet times scalar jet."""
    return bilinear(lambda x, y: np.einsum("...,...->...", x, y), a, b)


def dot(a: Jet, b: Jet) -> Jet:
    return bilinear(lambda x, y: np.einsum("...i,...i->...", x, y), a, b)


def matvec(m: Jet, v: Jet) -> Jet:
    return bilinear(lambda x, y: np.einsum("...ij,...j->...i", x, y), m, v)


def vecmat(v: Jet, m: Jet) -> Jet:
    return bilinear(lambda x, y: np.einsum("...i,...ij->...j", x, y), v, m)


def matmul(a: Jet, b: Jet) -> Jet:
    return bilinear(lambda x, y: np.einsum("...ij,...jk->...ik", x, y), a, b)


def outer(a: Jet, b: Jet) -> Jet:
    return bilinear(lambda x, y: np.einsum("...i,...j->...ij", x, y), a, b)


def cross(a: Jet, b: Jet) -> Jet:
    return bilinear(lambda x, y: np.cross(x, y, axis=-1), a, b)


def transpose(a: Jet) -> Jet:
    return linear(lambda x: np.swapaxes(x, -1, -2), a)


def sym(a: Jet) -> Jet:
    return linear(lambda x: 0.5 * (x + np.swapaxes(x, -1, -2)), a)


def trace(a: Jet) -> Jet:
    return linear(lambda x: np.einsum("...ii->...", x), a)


def component(a: Jet, idx) -> Jet:
    """Extract a value-axis component (e.g. ``(i,)`` of a vector jet)."""
    return linear(lambda x: x[(Ellipsis,) + idx], a)


def pack(jets, axis_len: int) -> Jet:
    """Stack scalar-or-lower jets along a new trailing value axis."""
    o = min(j.order for j in jets)
    data = []
    for n in range(o + 1):
        data.append(np.stack([j.data[n] for j in jets], axis=-1))
    assert data[0].shape[-1] == axis_len
    return Jet(data)


def pack_rows(jets) -> Jet:
    """Stack vector jets as the rows of a matrix jet."""
    o = min(j.order for j in jets)
    return Jet([np.stack([j.data[n] for j in jets], axis=-2) for n in range(o + 1)])


def smooth(f_derivs, u: Jet) -> Jet:
    """Compose a smooth scalar function with a scalar jet (order <= 3).

    ``f_derivs(x)`` must return ``[f(x), f'(x), f''(x), f'''(x)][:order+1]``.
    """
    o = u.order
    fs = f_derivs(u.v)
    data = [fs[0]]
    if o >= 1:
        u1 = u.data[1]
        data.append(np.einsum("...,i...->i...", fs[1], u1))
    if o >= 2:
        u1, u2 = u.data[1], u.data[2]
        t = np.einsum("...,i...,j...->ij...", fs[2], u1, u1)
        t = t + np.einsum("...,ij...->ij...", fs[1], u2)
        data.append(t)
    if o >= 3:
        u1, u2, u3 = u.data[1], u.data[2], u.data[3]
        t = np.einsum("...,i...,j...,k...->ijk...", fs[3], u1, u1, u1)
        t = t + np.einsum("...,ij...,k...->ijk...", fs[2], u2, u1)
        t = t + np.einsum("...,ik...,j...->ijk...", fs[2], u2, u1)
        t = t + np.einsum("...,jk...,i...->ijk...", fs[2], u2, u1)
        t = t + np.einsum("...,ijk...->ijk...", fs[1], u3)
        data.append(t)
    return Jet(data)


def reciprocal(u: Jet) -> Jet:
    def derivs(x):
        inv = 1.0 / x
        return [inv, -inv**2, 2.0 * inv**3, -6.0 * inv**4][: u.order + 1]

    return smooth(derivs, u)


def sqrt(u: Jet) -> Jet:
    def derivs(x):
        r = np.sqrt(x)
        return [r, 0.5 / r, -0.25 / (x * r), 0.375 / (x**2 * r)][: u.order + 1]

    return smooth(derivs, u)


def norm(v: Jet) -> Jet:
    return sqrt(dot(v, v))


def inv2(g: Jet) -> Jet:
    """Inverse of a symmetric 2x2 matrix jet via the adjugate."""
    g00 = component(g, (0, 0))
    g01 = component(g, (0, 1))
    g10 = component(g, (1, 0))
    g11 = component(g, (1, 1))
    det = sub(mul(g00, g11), mul(g01, g10))
    idet = reciprocal(det)
    row0 = pack([mul(g11, idet), scale(-1.0, mul(g01, idet))], 2)
    row1 = pack([scale(-1.0, mul(g10, idet)), mul(g00, idet)], 2)
    return Jet(
        [np.stack([row0.data[n], row1.data[n]], axis=-2) for n in range(min(row0.order, row1.order) + 1)]
    )


def det2(g: Jet) -> Jet:
    g00 = component(g, (0, 0))
    g01 = component(g, (0, 1))
    g10 = component(g, (1, 0))
    g11 = component(g, (1, 1))
    return sub(mul(g00, g11), mul(g01, g10))


def partial(a: Jet, k: int) -> Jet:
    """Chart-derivative of a jet in direction k, dropping one order."""
    if a.order < 1:
        raise ValueError("jet order too low to differentiate")
    data = []
    for n in range(1, a.order + 1):
        # derivative axes are leading; fix the first one to k
        data.append(a.data[n][k])
    return Jet(data)
