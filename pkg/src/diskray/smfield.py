"""Scalar fields on the unit sphere bundle of the disk and their calculus.

A field is stored as samples over the node grid times a uniform fiber
angle grid.  The fiber direction is handled spectrally (FFT along the
theta axis), spatial derivatives use the masked stencils from fd.  The
vertical decomposition, the flow derivative X, the vertical derivative
V, their commutator, and the raising/lowering combinations live here.

The combinations (X + i Xperp)/2 and (X - i Xperp)/2 shift the fiber
degree by exactly +1 and -1.  On a pure degree-m component the flow
derivative therefore splits into a degree-(m+1) and a degree-(m-1)
part, and apply_Xpm extracts either half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fd
from .geometry import TWO_PI, wrap_angle  # noqa: F401  (wrap_angle re-exported for cli)
from .grid import DiskGrid


class DegreeTooHigh(ValueError):
    """Requested fiber degree exceeds the dealiased spectral range."""


@dataclass
class SMField:
    """Samples over (x-grid) x (fiber angles), with accuracy metadata.

    lowacc flags samples whose values carry extra error (one-sided
    stencils near the rim, near-tangential backprojection); norms that
    quote interior accuracy exclude them.
    """

    values: np.ndarray
    grid: DiskGrid
    metric: object
    lowacc: np.ndarray | None = None

    def copy(self):
        return SMField(
            self.values.copy(),
            self.grid,
            self.metric,
            None if self.lowacc is None else self.lowacc.copy(),
        )

    @property
    def ntheta(self):
        return self.grid.ntheta


def field_from_function(grid: DiskGrid, metric, fn) -> SMField:
    """Sample fn(x1, x2, theta) on the full grid (exterior included)."""
    x1 = grid.X1[:, :, None]
    x2 = grid.X2[:, :, None]
    th = grid.theta[None, None, :]
    vals = np.broadcast_to(fn(x1, x2, th), x1.shape[:2] + (grid.ntheta,))
    return SMField(np.array(vals, dtype=float if np.isrealobj(vals) else complex), grid, metric)


def zeros_field(grid: DiskGrid, metric, dtype=float) -> SMField:
    return SMField(np.zeros((grid.nx, grid.nx, grid.ntheta), dtype=dtype), grid, metric)


# ---------------------------------------------------------------------------
# cached per-(metric, grid) tables


_TABLES: dict = {}


def metric_tables(metric, grid: DiskGrid) -> dict:
    """Conformal factor and its gradient sampled on the node grid."""
    key = (metric.key, grid.key)
    tab = _TABLES.get(key)
    if tab is None:
        lam = metric.log_factor(grid.X1, grid.X2)
        g1, g2 = metric.grad_log_factor(grid.X1, grid.X2)
        tab = {
            "lam": lam,
            "g1": g1,
            "g2": g2,
            "inv_factor": np.exp(-lam),
            "vol2": np.exp(2.0 * lam),
        }
        _TABLES[key] = tab
    return tab


# ---------------------------------------------------------------------------
# vertical (fiber) spectral calculus


def _fiber_wavenumbers(n):
    k = np.fft.fftfreq(n, d=1.0 / n)
    return k


def fiber_fourier(f: SMField, kmax: int | None = None) -> dict[int, np.ndarray]:
    """Vertical Fourier coefficients: degree k -> complex field on the grid.

    Coefficients satisfy f(x, theta) = sum_k coeff_k(x) e^{i k theta};
    real fields have coeff_{-k} = conj(coeff_k).
    """
    n = f.ntheta
    if kmax is None:
        kmax = n // 3
    co = np.fft.fft(f.values, axis=-1) / n
    return {k: co[:, :, k % n] for k in range(-kmax, kmax + 1)}


def fiber_degree_energy(f: SMField) -> np.ndarray:
    """L2 weight of each nonnegative fiber degree, summed over the disk."""
    n = f.ntheta
    co = np.fft.fft(f.values, axis=-1) / n
    qw = f.grid.qw[:, :, None]
    e = np.sum(np.abs(co) ** 2 * qw, axis=(0, 1)) * TWO_PI
    out = np.empty(n // 2 + 1)
    out[0] = e[0]
    for k in range(1, n // 2):
        out[k] = e[k] + e[n - k]
    out[n // 2] = e[n // 2]
    return out


@dataclass
class HarmonicComponent:
    """The degree-m vertical part of a field (degrees +m and -m together)."""

    degree: int
    field: SMField


def harmonic_project(f: SMField, m: int) -> HarmonicComponent:
    """Keep only the fiber degrees +-m."""
    n = f.ntheta
    if m < 0 or m > n // 3:
        raise DegreeTooHigh(f"degree {m} outside the dealiased range 0..{n // 3}")
    co = np.fft.fft(f.values, axis=-1)
    keep = np.zeros(n, dtype=bool)
    keep[m] = True
    keep[-m % n] = True
    co[:, :, ~keep] = 0.0
    vals = np.fft.ifft(co, axis=-1)
    if np.isrealobj(f.values):
        vals = vals.real
    return HarmonicComponent(m, SMField(vals, f.grid, f.metric, f.lowacc))


def apply_V(f: SMField) -> SMField:
    """Vertical derivative: d/dtheta, spectral."""
    n = f.ntheta
    co = np.fft.fft(f.values, axis=-1)
    k = _fiber_wavenumbers(n)
    k[n // 2] = 0.0  # odd derivative loses the unpaired Nyquist mode
    vals = np.fft.ifft(co * (1j * k), axis=-1)
    if np.isrealobj(f.values):
        vals = vals.real
    return SMField(vals, f.grid, f.metric, f.lowacc)


# ---------------------------------------------------------------------------
# flow and perpendicular derivatives


def _directional_parts(metric, f: SMField):
    g = f.grid
    d1 = fd.diff(f.values, g.h, 0, g.stencils["x"]["cls"])
    d2 = fd.diff(f.values, g.h, 1, g.stencils["y"]["cls"])
    dth = apply_V(f).values
    return d1, d2, dth


def _edge_flag(f: SMField) -> np.ndarray:
    """Samples relying on one-sided or missing stencils near the rim."""
    flag = ~f.grid.interior4
    out = np.broadcast_to(flag[:, :, None], f.values.shape)
    if f.lowacc is not None:
        out = out | f.lowacc
    return out


def apply_X(metric, f: SMField) -> SMField:
    """Flow derivative: rate of change along the geodesic flow."""
    g = f.grid
    tab = metric_tables(metric, g)
    d1, d2, dth = _directional_parts(metric, f)
    c = np.cos(g.theta)[None, None, :]
    s = np.sin(g.theta)[None, None, :]
    el = tab["inv_factor"][:, :, None]
    g1 = tab["g1"][:, :, None]
    g2 = tab["g2"][:, :, None]
    vals = el * (c * d1 + s * d2 + (g2 * c - g1 * s) * dth)
    return SMField(vals, g, f.metric, _edge_flag(f))


def apply_Xperp(metric, f: SMField) -> SMField:
    """Perpendicular derivative: the commutator of flow and vertical."""
    g = f.grid
    tab = metric_tables(metric, g)
    d1, d2, dth = _directional_parts(metric, f)
    c = np.cos(g.theta)[None, None, :]
    s = np.sin(g.theta)[None, None, :]
    el = tab["inv_factor"][:, :, None]
    g1 = tab["g1"][:, :, None]
    g2 = tab["g2"][:, :, None]
    vals = el * (s * d1 - c * d2 + (g1 * c + g2 * s) * dth)
    return SMField(vals, g, f.metric, _edge_flag(f))


def apply_eta(metric, f: SMField, sign: int) -> SMField:
    """Fiber-degree raising (+1) or lowering (-1) derivative.

    eta_sign = (X + sign * i * Xperp) / 2 maps pure degree k to pure
    degree k + sign, exactly in the fiber and to stencil order in x.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    xf = apply_X(metric, f)
    xp = apply_Xperp(metric, f)
    vals = 0.5 * (xf.values + sign * 1j * xp.values)
    return SMField(vals, f.grid, f.metric, xf.lowacc)


def apply_Xpm(metric, comp: HarmonicComponent, sign: int) -> HarmonicComponent:
    """Degree-shifting halves of the flow derivative on a pure component.

    The flow derivative of a degree-m component splits into degree m+1
    and m-1 parts; this returns the requested half.  Lowering a
    degree-0 component gives the zero field identically.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    m = comp.degree
    if sign == -1 and m == 0:
        g = comp.field.grid
        z = np.zeros_like(comp.field.values)
        return HarmonicComponent(0, SMField(z, g, comp.field.metric))
    target = m + sign
    if target > comp.field.ntheta // 3:
        raise DegreeTooHigh(
            f"degree {target} exceeds the dealiased range of ntheta={comp.field.ntheta}"
        )
    xf = apply_X(metric, comp.field)
    return HarmonicComponent(target, harmonic_project(xf, target).field)


# ---------------------------------------------------------------------------
# inner products and norms


def inner_product_SM(metric, f: SMField, g: SMField) -> complex | float:
    """Phase-volume inner product: disk quadrature times fiber quadrature.

    The volume element carries e^{2 lam}; the disk part uses the exact
    cell-overlap weights of the grid.
    """
    if f.grid.key != g.grid.key:
        raise ValueError("fields live on different grids")
    tab = metric_tables(metric, f.grid)
    w = (tab["vol2"] * f.grid.qw)[:, :, None]
    s = np.sum(f.values * np.conj(g.values) * w) * f.grid.dtheta
    if np.isrealobj(f.values) and np.isrealobj(g.values):
        return float(s.real if np.iscomplexobj(s) else s)
    return complex(s)


def norm_SM(metric, f: SMField) -> float:
    return math.sqrt(max(float(np.real(inner_product_SM(metric, f, f))), 0.0))


def norm_over(f: SMField, keep: np.ndarray) -> float:
    """Plain L2 norm over a selected subset of samples (uniform weights)."""
    v = np.where(keep, f.values, 0.0)
    return math.sqrt(float(np.sum(np.abs(v) ** 2)) * f.grid.h**2 * f.grid.dtheta)


def interior_keep(f: SMField) -> np.ndarray:
    """Samples with full-accuracy stencils and no accuracy flags."""
    keep = np.broadcast_to(f.grid.interior4[:, :, None], f.values.shape)
    if f.lowacc is not None:
        keep = keep & ~f.lowacc
    return keep


# ---------------------------------------------------------------------------
# phase-volume vs boundary-fan consistency


def santalo_check(
    metric,
    f: SMField,
    nbeta: int = 256,
    nalpha: int = 128,
    step: float = 5e-3,
) -> dict:
    """Compare the phase-volume integral of f with the fan quadrature.

    The left side integrates f over the sphere bundle; the right side
    integrates, over inflow boundary coordinates weighted by cos(alpha),
    the along-ray integrals of f.  Both are returned with their
    relative gap.
    """
    from .transform import forward_I  # deferred: transform imports this module

    ones = SMField(np.ones_like(f.values, dtype=float), f.grid, f.metric)
    lhs = float(np.real(inner_product_SM(metric, f, ones)))

    data = forward_I(metric, f, nbeta=nbeta, nalpha=nalpha, step=step)
    rhs = float(np.sum(data.values * data.mu()) * data.dbeta * data.dalpha)

    denom = max(abs(lhs), abs(rhs), 1e-300)
    return {"lhs": lhs, "rhs": rhs, "rel_err": abs(lhs - rhs) / denom}
