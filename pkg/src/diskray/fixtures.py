"""Named analytic fields and seeded random fields shared by the suites.

Everything here is deterministic: analytic fixtures depend only on grid
and metric, random ones only on the seed.  The registry maps the names
accepted by the command line to builders; each builder returns the field
plus a provenance dict that goes into the emitted manifest.
"""

from __future__ import annotations

import numpy as np

from .grid import DiskGrid
from .smfield import SMField, field_from_function
from .tensors import SymTensorField, sym_derivative, tensor_from_functions
from .transform import FanBeamData


def scalar_potential_poly(grid: DiskGrid, metric) -> SymTensorField:
    """p = 1 - r^2, the workhorse vanishing-at-rim scalar potential."""
    return tensor_from_functions(grid, metric, 0, [lambda x, y: 1.0 - x * x - y * y])


def kernel_potentials(grid: DiskGrid, metric, m: int) -> list[SymTensorField]:
    """Three rank-(m-1) potentials vanishing at the rim, for kernel checks."""
    if m == 1:
        fns = [
            [lambda x, y: 1.0 - x * x - y * y],
            [lambda x, y: (1.0 - x * x - y * y) * x],
            # the envelope width stays at the grid's resolving power; a
            # narrower one pushes interpolation error past the kernel budget
            [lambda x, y: (1.0 - x * x - y * y) * np.exp(-(x * x + y * y) / 2.0)],
        ]
        return [tensor_from_functions(grid, metric, 0, f) for f in fns]
    if m == 2:
        fns = [
            [lambda x, y: (1.0 - x * x - y * y) * x, lambda x, y: (1.0 - x * x - y * y) * y],
            [lambda x, y: (1.0 - x * x - y * y), lambda x, y: np.zeros_like(x)],
            [lambda x, y: (1.0 - x * x - y * y) * y, lambda x, y: -(1.0 - x * x - y * y) * x],
        ]
        return [tensor_from_functions(grid, metric, 1, f) for f in fns]
    raise ValueError(f"kernel potentials exist for m = 1, 2, got {m}")


def rotation_field(grid: DiskGrid, metric) -> SymTensorField:
    """(-x2, x1): tangent to every circle, divergence-free, zero rim flux."""
    return tensor_from_functions(grid, metric, 1, [lambda x, y: -y, lambda x, y: x])


def rotation_envelope(grid: DiskGrid, metric, width: float = 0.35) -> SymTensorField:
    """The rotation field under a Gaussian envelope; solenoidal for every
    conformal metric since the divergence only picks up the radial part."""
    s2 = 2.0 * width * width
    return tensor_from_functions(
        grid,
        metric,
        1,
        [
            lambda x, y: -y * np.exp(-(x * x + y * y) / s2),
            lambda x, y: x * np.exp(-(x * x + y * y) / s2),
        ],
    )


def zsquare_pair(grid: DiskGrid, metric) -> SymTensorField:
    """(2 x1 x2, x1^2 - x2^2): divergence-free for every conformal metric."""
    return tensor_from_functions(
        grid, metric, 1, [lambda x, y: 2.0 * x * y, lambda x, y: x * x - y * y]
    )


def tracefree_constant(grid: DiskGrid, metric) -> SymTensorField:
    """The constant trace-free 2-tensor diag(1, -1)."""
    return tensor_from_functions(
        grid,
        metric,
        2,
        [
            lambda x, y: np.ones_like(x),
            lambda x, y: np.zeros_like(x),
            lambda x, y: -np.ones_like(x),
        ],
    )


def tracefree_harmonic(grid: DiskGrid, metric) -> SymTensorField:
    """(x^2-y^2, -2xy, -(x^2-y^2)): trace-free with harmonic entries."""
    return tensor_from_functions(
        grid,
        metric,
        2,
        [
            lambda x, y: x * x - y * y,
            lambda x, y: -2.0 * x * y,
            lambda x, y: -(x * x - y * y),
        ],
    )


def gauss_scalar(grid: DiskGrid, metric, width: float = 0.5) -> SymTensorField:
    s2 = 2.0 * width * width
    return tensor_from_functions(
        grid, metric, 0, [lambda x, y: np.exp(-(x * x + y * y) / s2)]
    )


def extension_compat_field(grid: DiskGrid, metric) -> SymTensorField:
    """(x1 e^{x2}, -e^{x2}): pointwise nonzero rim flux, zero total flux."""
    return tensor_from_functions(
        grid, metric, 1, [lambda x, y: x * np.exp(y), lambda x, y: -np.exp(y)]
    )


def decompose_case(grid: DiskGrid, metric, rank: int):
    """A field with known potential part plus a solenoidal remainder.

    Returns (v, p_true) where v splits as the symmetric derivative of
    p_true plus a divergence-free piece, and p_true vanishes at the rim
    so the split is the unique one the solver looks for.
    """
    if rank == 1:
        v = tensor_from_functions(
            grid,
            metric,
            1,
            [
                lambda x, y: -2.0 * x * (0.7 + 0.3 * x + 0.2 * y * y)
                + 0.3 * (1.0 - x * x - y * y)
                - y * (1.0 + 0.5 * (x * x + y * y)),
                lambda x, y: -2.0 * y * (0.7 + 0.3 * x + 0.2 * y * y)
                + 0.4 * y * (1.0 - x * x - y * y)
                + x * (1.0 + 0.5 * (x * x + y * y)),
            ],
        )
        p_true = tensor_from_functions(
            grid,
            metric,
            0,
            [lambda x, y: (1.0 - x * x - y * y) * (0.7 + 0.3 * x + 0.2 * y * y)],
        )
        return v, p_true
    if rank == 2:
        p_true = tensor_from_functions(
            grid,
            metric,
            1,
            [
                lambda x, y: (1.0 - x * x - y * y) * y,
                lambda x, y: -0.4 * (1.0 - x * x - y * y) * x,
            ],
        )
        v = sym_derivative(p_true)
        v.comps = v.comps + 0.3 * tracefree_harmonic(grid, metric).comps
        return v, p_true
    raise ValueError("decompose_case covers ranks 1 and 2")


def random_smooth_tensor(
    grid: DiskGrid, metric, rank: int, seed: int, width: float = 0.35
) -> SymTensorField:
    """Gaussian-envelope random low-order polynomial components."""
    rng = np.random.default_rng(seed)
    ncomp = (1, 2, 3)[rank]
    c = rng.uniform(-1.0, 1.0, (ncomp, 6))
    s2 = 2.0 * width * width

    def make(row):
        return lambda x, y: np.exp(-(x * x + y * y) / s2) * (
            row[0]
            + row[1] * x
            + row[2] * y
            + row[3] * x * y
            + row[4] * x * x
            + row[5] * y * y
        )

    return tensor_from_functions(grid, metric, rank, [make(c[i]) for i in range(ncomp)])


def random_smooth_sm(grid: DiskGrid, metric, seed: int) -> SMField:
    """Random smooth function on the sphere bundle, band-limited in angle."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1.0, 1.0, 6)
    return field_from_function(
        grid,
        metric,
        lambda x, y, th: np.exp(-(x * x + y * y))
        * (a[0] + a[1] * np.cos(th) + a[2] * np.sin(th) + a[3] * np.cos(2 * th))
        + a[4] * x * np.cos(th)
        + a[5] * y,
    )


def random_fan(metric, nbeta: int, nalpha: int, seed: int) -> FanBeamData:
    """Smooth random inflow data vanishing toward grazing angles."""
    rng = np.random.default_rng(seed)
    b = np.arange(nbeta) * (2.0 * np.pi / nbeta)
    a = -0.5 * np.pi + (np.arange(nalpha) + 0.5) * (np.pi / nalpha)
    B, A = np.meshgrid(b, a, indexing="ij")
    c = rng.uniform(-1.0, 1.0, 6)
    vals = (
        c[0] * np.cos(B) * np.cos(A) ** 2
        + c[1] * np.sin(2.0 * B + c[2]) * np.cos(A) ** 3
        + c[3] * np.cos(3.0 * B + c[4]) * np.cos(2.0 * A) * np.cos(A)
        + c[5] * np.cos(A) ** 2
    )
    return FanBeamData(vals, metric)


def _prov(name: str, **extra) -> dict:
    out = {"fixture": name}
    out.update(extra)
    return out


def build(name: str, grid: DiskGrid, metric, seed: int = 0):
    """Build a registry fixture; returns (field, provenance dict)."""
    key = name.strip().upper()
    if key == "P_POLY":
        return scalar_potential_poly(grid, metric), _prov(key)
    if key == "ROT":
        return rotation_field(grid, metric), _prov(key)
    if key == "TF2":
        return tracefree_constant(grid, metric), _prov(key)
    if key == "GAUSS":
        return gauss_scalar(grid, metric), _prov(key, width=0.5)
    if key == "RANDOM":
        return (
            random_smooth_tensor(grid, metric, 1, seed),
            _prov(key, seed=seed, rank=1),
        )
    raise KeyError(f"unknown fixture {name!r}; known: {', '.join(sorted(REGISTRY))}")


REGISTRY = ("P_POLY", "ROT", "TF2", "GAUSS", "RANDOM")
