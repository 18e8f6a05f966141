"""Masked finite differences on the disk grid.

Spatial derivatives use the widest one-dimensional stencil that fits
inside the node mask along each axis: fourth-order centered where two
neighbours exist on both sides, then second-order centered, one-sided
second order, one-sided first order, and finally zero where a node has
no in-mask neighbour along the axis at all.  The per-node stencil class
is computed once from the mask and reused for every field.

Angular derivatives of fields on the sphere bundle are spectral in the
fiber angle (see smfield).
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

# stencil ids, highest accuracy first
C4, S4F, S4B, F4, B4, C2, F2, B2, F1, B1, Z0 = range(11)

_ORDER = {
    C4: 4,
    S4F: 4,
    S4B: 4,
    F4: 4,
    B4: 4,
    C2: 2,
    F2: 2,
    B2: 2,
    F1: 1,
    B1: 1,
    Z0: 0,
}

# offsets and coefficients per h for each stencil class; the shifted and
# one-sided five-point rows keep fourth order at nodes missing a far
# neighbour on one side, which matters at the rim where second-order
# truncation would otherwise dominate every near-boundary quantity
_STENCILS = {
    C4: ((-2, -1, 1, 2), (1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0)),
    S4F: ((-1, 0, 1, 2, 3), (-1.0 / 4.0, -5.0 / 6.0, 3.0 / 2.0, -1.0 / 2.0, 1.0 / 12.0)),
    S4B: ((-3, -2, -1, 0, 1), (-1.0 / 12.0, 1.0 / 2.0, -3.0 / 2.0, 5.0 / 6.0, 1.0 / 4.0)),
    F4: ((0, 1, 2, 3, 4), (-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -1.0 / 4.0)),
    B4: ((-4, -3, -2, -1, 0), (1.0 / 4.0, -4.0 / 3.0, 3.0, -4.0, 25.0 / 12.0)),
    C2: ((-1, 1), (-0.5, 0.5)),
    F2: ((0, 1, 2), (-1.5, 2.0, -0.5)),
    B2: ((-2, -1, 0), (0.5, -2.0, 1.5)),
    F1: ((0, 1), (-1.0, 1.0)),
    B1: ((-1, 0), (1.0, -1.0)),
    Z0: ((), ()),
}


def _classify_axis(mask: np.ndarray, axis: int):
    """Pick the best stencil class per node for one axis.

    Availability of a neighbour at offset k means the node at that offset
    exists in the array and lies inside the mask.
    """
    m = mask if axis == 0 else mask.T
    nx = m.shape[0]
    avail = {}
    for k in (-4, -3, -2, -1, 1, 2, 3, 4):
        a = np.zeros_like(m)
        if k > 0:
            a[: nx - k] = m[k:]
        else:
            a[-k:] = m[:k]
        avail[k] = a

    cls = np.full(m.shape, Z0, dtype=np.int8)
    cls[avail[1] | avail[-1]] = np.where(
        avail[1][avail[1] | avail[-1]], F1, B1
    )
    # order matters: later assignments overwrite weaker classes
    cls[avail[1] & avail[2]] = F2
    cls[avail[-1] & avail[-2]] = B2
    cls[avail[1] & avail[-1]] = C2
    cls[avail[1] & avail[2] & avail[3] & avail[4]] = F4
    cls[avail[-1] & avail[-2] & avail[-3] & avail[-4]] = B4
    cls[avail[-1] & avail[1] & avail[2] & avail[3]] = S4F
    cls[avail[1] & avail[-1] & avail[-2] & avail[-3]] = S4B
    cls[avail[1] & avail[-1] & avail[2] & avail[-2]] = C4
    cls[~m] = Z0

    order = np.zeros(m.shape, dtype=np.int8)
    for cid, p in _ORDER.items():
        order[cls == cid] = p

    if axis == 1:
        cls = cls.T
        order = order.T
    return cls, order


def classify(mask: np.ndarray):
    """Stencil classes and formal orders for both axes of a mask."""
    cx, ox = _classify_axis(mask, 0)
    cy, oy = _classify_axis(mask, 1)
    return {"x": {"cls": cx, "order": ox}, "y": {"cls": cy, "order": oy}}


def diff(values: np.ndarray, h: float, axis: int, cls: np.ndarray) -> np.ndarray:
    """Apply the classified stencils along one axis.

    values may have trailing axes (e.g. fiber angle or tensor components);
    the stencil class array matches the two leading axes.
    """
    v = values if axis == 0 else np.swapaxes(values, 0, 1)
    c = cls if axis == 0 else cls.T
    nx = v.shape[0]
    out = np.zeros_like(v)
    cc = c.reshape(c.shape + (1,) * (v.ndim - 2))
    for cid, (offs, coefs) in _STENCILS.items():
        if not offs:
            continue
        sel = cc == cid
        if not np.any(sel):
            continue
        acc = np.zeros_like(v)
        for k, a in zip(offs, coefs):
            if k >= 0:
                acc[: nx - k] += a * v[k:] if k else a * v
            else:
                acc[-k:] += a * v[:k]
        out = np.where(sel, acc, out)
    out /= h
    return out if axis == 0 else np.swapaxes(out, 0, 1)


def diff_matrix(h: float, axis: int, cls: np.ndarray) -> sparse.csr_matrix:
    """Sparse matrix of the classified derivative on flattened (nx, nx) fields."""
    nx, ny = cls.shape
    n = nx * ny
    rows, cols, vals = [], [], []
    idx = np.arange(n).reshape(nx, ny)
    stride = ny if axis == 0 else 1
    for cid, (offs, coefs) in _STENCILS.items():
        if not offs:
            continue
        where = np.argwhere(cls == cid)
        if where.size == 0:
            continue
        base = idx[where[:, 0], where[:, 1]]
        for k, a in zip(offs, coefs):
            rows.append(base)
            cols.append(base + k * stride)
            vals.append(np.full(base.size, a / h))
    if not rows:
        return sparse.csr_matrix((n, n))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    ok = (cols >= 0) & (cols < n)
    return sparse.csr_matrix((vals[ok], (rows[ok], cols[ok])), shape=(n, n))


def gradient(values: np.ndarray, h: float, stencils) -> tuple[np.ndarray, np.ndarray]:
    """Both partial derivatives of a nodal field."""
    d1 = diff(values, h, 0, stencils["x"]["cls"])
    d2 = diff(values, h, 1, stencils["y"]["cls"])
    return d1, d2
