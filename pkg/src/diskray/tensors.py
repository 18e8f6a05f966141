"""Symmetric tensor fields on the disk and their differential calculus.

Tensors of rank 0, 1, 2 are stored by their independent covariant
components on the node grid: (u11, u12, u22) for rank 2 with the off
diagonal carrying multiplicity two in every contraction.  The metric
enters through the conformal factor: raising an index multiplies by
e^{-2 lam}, the area element by e^{2 lam}.

The bridge to the sphere bundle: ell_m contracts a tensor with m copies
of the unit direction, producing a field with fiber degrees m, m-2, ...;
L_m integrates a field against those direction monomials, returning the
covariant tensor.  Both use the same trigonometric tables, so the
discrete duality between them is exact.

The solenoidal decomposition is variational: the potential minimizes
the weighted misfit |v - dp|^2 over the disk plus a penalty tying the
linearly extrapolated boundary values of p to zero.  The normal system
is symmetric positive definite and is solved by preconditioned
conjugate gradients; as a consequence the solenoidal part annihilates
every discrete potential whose boundary extrapolation vanishes, which
is the weak form of divergence-freeness away from the rim.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sla

from . import fd
from .geometry import TWO_PI
from .grid import DiskGrid
from .smfield import SMField, metric_tables

MULTIPLICITY = {0: (1.0,), 1: (1.0, 1.0), 2: (1.0, 2.0, 1.0)}
NCOMP = {0: 1, 1: 2, 2: 3}


class SolverDivergence(RuntimeError):
    """An iterative solve failed to reach its tolerance."""


class IncompatibleFlux(ValueError):
    """Neumann data violates the zero-total-flux solvability condition."""


@dataclass
class SymTensorField:
    """Covariant components of a symmetric tensor on the node grid.

    comps has shape (nx, nx, ncomp) with component order (), (1, 2) or
    (11, 12, 22) by rank.
    """

    rank: int
    comps: np.ndarray
    grid: DiskGrid
    metric: object

    def __post_init__(self):
        if self.rank not in (0, 1, 2):
            raise ValueError(f"rank must be 0, 1 or 2, got {self.rank}")
        want = NCOMP[self.rank]
        if self.comps.ndim == 2:
            self.comps = self.comps[:, :, None]
        if self.comps.shape[-1] != want:
            raise ValueError(
                f"rank {self.rank} needs {want} components, got {self.comps.shape[-1]}"
            )

    def copy(self):
        return SymTensorField(self.rank, self.comps.copy(), self.grid, self.metric)


def tensor_from_functions(grid: DiskGrid, metric, rank: int, fns) -> SymTensorField:
    """Sample component functions fn(x1, x2) on the full grid."""
    comps = np.stack([np.broadcast_to(f(grid.X1, grid.X2), grid.X1.shape).astype(float) for f in fns], axis=-1)
    return SymTensorField(rank, comps, grid, metric)


def zeros_tensor(grid: DiskGrid, metric, rank: int) -> SymTensorField:
    return SymTensorField(rank, np.zeros((grid.nx, grid.nx, NCOMP[rank])), grid, metric)


def _trig_basis(rank: int, theta: np.ndarray):
    c, s = np.cos(theta), np.sin(theta)
    if rank == 0:
        return np.ones((1, theta.size))
    if rank == 1:
        return np.stack([c, s])
    return np.stack([c * c, c * s, s * s])


# ---------------------------------------------------------------------------
# the tensor <-> fiber-function bridge


def ell_m(u: SymTensorField) -> SMField:
    """Contract with m copies of the unit direction: a fiber polynomial.

    The result carries e^{-m lam} from the direction normalization and
    has exact fiber band limit m.
    """
    g = u.grid
    tab = metric_tables(u.metric, g)
    trig = _trig_basis(u.rank, g.theta)
    mult = np.asarray(MULTIPLICITY[u.rank])
    vals = np.einsum("xyc,c,ct->xyt", u.comps, mult, trig)
    if u.rank:
        vals = vals * np.exp(-u.rank * tab["lam"])[:, :, None]
    return SMField(vals, g, u.metric)


def L_m(f: SMField, rank: int) -> SymTensorField:
    """Fiber integral against direction monomials; adjoint of ell_m.

    Uses the same angle grid and trig tables as ell_m, so the pairing
    <ell_m u, f> = <u, L_m f> holds to rounding.
    """
    g = f.grid
    tab = metric_tables(f.metric, g)
    trig = _trig_basis(rank, g.theta)
    comps = np.einsum("xyt,ct->xyc", f.values.real if np.isrealobj(f.values) else f.values, trig) * g.dtheta
    if rank:
        comps = comps * np.exp(rank * tab["lam"])[:, :, None]
    return SymTensorField(rank, comps, g, f.metric)


def inner_product_M(u: SymTensorField, v: SymTensorField) -> float:
    """L2 pairing with indices raised by the metric and its area element."""
    if u.rank != v.rank:
        raise ValueError("rank mismatch")
    g = u.grid
    tab = metric_tables(u.metric, g)
    mult = np.asarray(MULTIPLICITY[u.rank])
    w = np.exp(2.0 * (1 - u.rank) * tab["lam"]) * g.qw
    return float(np.einsum("xyc,c,xyc,xy->", u.comps, mult, v.comps, w))


def norm_M(u: SymTensorField) -> float:
    return math.sqrt(max(inner_product_M(u, u), 0.0))


# ---------------------------------------------------------------------------
# covariant derivative, divergence, boundary flux


def sym_derivative(p: SymTensorField) -> SymTensorField:
    """Symmetrized covariant derivative, raising the rank by one."""
    if p.rank > 1:
        raise ValueError("symmetric derivative implemented up to rank-1 input")
    g = p.grid
    tab = metric_tables(p.metric, g)
    g1, g2 = tab["g1"], tab["g2"]
    cx = g.stencils_support["x"]["cls"]
    cy = g.stencils_support["y"]["cls"]
    if p.rank == 0:
        s = p.comps[:, :, 0]
        d1 = fd.diff(s, g.h, 0, cx)
        d2 = fd.diff(s, g.h, 1, cy)
        return SymTensorField(1, np.stack([d1, d2], axis=-1), g, p.metric)

    p1, p2 = p.comps[:, :, 0], p.comps[:, :, 1]
    d11 = fd.diff(p1, g.h, 0, cx)
    d21 = fd.diff(p1, g.h, 1, cy)
    d12 = fd.diff(p2, g.h, 0, cx)
    d22 = fd.diff(p2, g.h, 1, cy)
    # Christoffel terms of the conformal metric
    c11 = d11 - g1 * p1 + g2 * p2
    c12 = 0.5 * (d12 + d21) - g2 * p1 - g1 * p2
    c22 = d22 + g1 * p1 - g2 * p2
    return SymTensorField(2, np.stack([c11, c12, c22], axis=-1), g, p.metric)


def divergence(u: SymTensorField) -> SymTensorField:
    """Metric trace of the covariant derivative, lowering the rank by one."""
    if u.rank == 0:
        raise ValueError("divergence needs rank >= 1")
    g = u.grid
    tab = metric_tables(u.metric, g)
    e2 = np.exp(-2.0 * tab["lam"])
    cx = g.stencils_support["x"]["cls"]
    cy = g.stencils_support["y"]["cls"]
    if u.rank == 1:
        # the Christoffel trace cancels for 1-forms on conformal metrics
        val = e2 * (
            fd.diff(u.comps[:, :, 0], g.h, 0, cx) + fd.diff(u.comps[:, :, 1], g.h, 1, cy)
        )
        return SymTensorField(0, val[:, :, None], g, u.metric)

    u11, u12, u22 = u.comps[:, :, 0], u.comps[:, :, 1], u.comps[:, :, 2]
    tr = u11 + u22
    v1 = e2 * (
        fd.diff(u11, g.h, 0, cx) + fd.diff(u12, g.h, 1, cy) - tab["g1"] * tr
    )
    v2 = e2 * (
        fd.diff(u12, g.h, 0, cx) + fd.diff(u22, g.h, 1, cy) - tab["g2"] * tr
    )
    return SymTensorField(1, np.stack([v1, v2], axis=-1), g, u.metric)


def _interp_comps(field2d: np.ndarray, grid: DiskGrid, x1, x2):
    """Cubic interpolation of one nodal component at physical points.

    Uses the stored values on the whole square: analytic fields sampled
    off the disk stay exact, computed fields carry their nearest-node
    exterior fill.
    """
    return grid.sampler(field2d)(x1, x2)


def boundary_flux(u: SymTensorField, nphi: int = 256):
    """Contraction with the outward unit normal, sampled on the rim.

    Returns shape (nphi,) for rank 1 and (nphi, 2) for rank 2; the
    collar is Euclidean so the normal is the radial direction.
    """
    if u.rank == 0:
        raise ValueError("flux needs rank >= 1")
    phi = np.arange(nphi) * (TWO_PI / nphi)
    cx, sx = np.cos(phi), np.sin(phi)
    vals = [_interp_comps(u.comps[:, :, c], u.grid, cx, sx) for c in range(u.comps.shape[-1])]
    if u.rank == 1:
        return vals[0] * cx + vals[1] * sx
    f1 = vals[0] * cx + vals[1] * sx
    f2 = vals[1] * cx + vals[2] * sx
    return np.stack([f1, f2], axis=-1)


def boundary_phi(nphi: int = 256) -> np.ndarray:
    return np.arange(nphi) * (TWO_PI / nphi)


# ---------------------------------------------------------------------------
# solenoidal decomposition


@dataclass
class PotentialPair:
    """Result of the splitting v = v_s + dp with p pinned to zero on the rim."""

    v_s: SymTensorField
    p: SymTensorField
    residuals: dict = field(default_factory=dict)


class _DecompositionSystem:
    """Assembled normal system for one (metric, grid, rank) triple.

    D maps potential degrees of freedom (mask nodes) to derivative
    components at mask nodes; M holds the tensor quadrature weights;
    B linearly extrapolates the potential to the circle crossings of
    the mask edge.  The normal matrix D' M D + rho B' B is SPD.
    """

    def __init__(self, metric, grid: DiskGrid, rank: int):
        if rank not in (1, 2):
            raise ValueError("decomposition defined for rank 1 and 2")
        self.metric = metric
        self.grid = grid
        self.rank = rank
        tab = metric_tables(metric, grid)
        nxy = grid.nx * grid.nx
        # dofs live on every node with positive quadrature weight, so the
        # projector identity covers the full discrete inner product
        self.midx = np.flatnonzero(grid.support.ravel())
        sten = grid.stencils_support
        nm = self.midx.size

        Dx = fd.diff_matrix(grid.h, 0, sten["x"]["cls"])
        Dy = fd.diff_matrix(grid.h, 1, sten["y"]["cls"])
        R = sparse.csr_matrix(
            (np.ones(nm), (np.arange(nm), self.midx)), shape=(nm, nxy)
        )
        Dx = R @ Dx @ R.T
        Dy = R @ Dy @ R.T
        lam1 = sparse.diags(tab["g1"].ravel()[self.midx])
        lam2 = sparse.diags(tab["g2"].ravel()[self.midx])

        if rank == 1:
            D = sparse.vstack([Dx, Dy], format="csr")
            ndof = nm
        else:
            D = sparse.bmat(
                [
                    [Dx - lam1, lam2],
                    [0.5 * Dy - lam2, 0.5 * Dx - lam1],
                    [lam1, Dy - lam2],
                ],
                format="csr",
            )
            ndof = 2 * nm

        mult = np.asarray(MULTIPLICITY[rank])
        wnode = (np.exp(2.0 * (1 - rank) * tab["lam"]) * grid.qw).ravel()[self.midx]
        mdiag = np.concatenate([m * wnode for m in mult])
        self.D = D
        self.M = sparse.diags(mdiag)

        B, bdofs = self._boundary_rows(nm)
        self.B = B
        self.bdofs = bdofs

        A0 = (D.T @ self.M @ D).tocsr()
        self.rho = 1e6 * float(A0.diagonal().max())
        A = (A0 + self.rho * (B.T @ B)).tocsc()
        self.A = A
        # complete factorization doubles as the CG preconditioner; the
        # penalty block is too stiff for incomplete variants
        self.lu = sla.splu(A)

        # potential-mass weights for quoting divergence residuals
        pw = (np.exp(2.0 * (2 - rank) * tab["lam"]) * grid.qw).ravel()[self.midx]
        pmult = np.asarray(MULTIPLICITY[rank - 1])
        self.pmass = np.concatenate([m * pw for m in pmult])
        interior = np.ones(ndof, dtype=bool)
        interior[self.bdofs] = False
        self.interior_dofs = interior

    def _boundary_rows(self, nm):
        """Rows pinning the potential to zero where edges cross the circle.

        Each grid edge joining an in-disk node to an out-of-disk support
        node crosses the rim once; linear interpolation along the edge
        evaluates p there.  Outside nodes with no in-disk neighbor (and
        nodes sitting on the circle itself) get pinned directly.
        """
        grid = self.grid
        mask = grid.mask
        nx = grid.nx
        h = grid.h
        full_to_m = -np.ones(nx * nx, dtype=np.int64)
        full_to_m[self.midx] = np.arange(nm)
        ii, jj = np.divmod(self.midx, nx)
        inmask = mask.ravel()[self.midx]
        rows, cols, vals = [], [], []
        nrow = 0
        covered_out = np.zeros(nm, dtype=bool)
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            # edges from in-disk dofs to out-of-disk support dofs
            ni, nj = ii + di, jj + dj
            ok = inmask & (ni >= 0) & (ni < nx) & (nj >= 0) & (nj < nx)
            nbr = np.where(ok, full_to_m[np.clip(ni, 0, nx - 1) * nx + np.clip(nj, 0, nx - 1)], -1)
            sel = ok & (nbr >= 0) & ~inmask[np.maximum(nbr, 0)]
            if not np.any(sel):
                continue
            a1 = grid.x[ii[sel]]
            a2 = grid.x[jj[sel]]
            along = a1 * di + a2 * dj
            disc = along * along - (a1 * a1 + a2 * a2 - 1.0)
            s = (-along + np.sqrt(np.maximum(disc, 0.0))) / h
            s = np.clip(s, 0.0, 1.0)
            pq = full_to_m[self.midx[sel]]
            pr = nbr[sel]
            covered_out[pr] = True
            n = pq.size
            r = np.arange(nrow, nrow + n)
            rows.extend([r, r])
            cols.extend([pq, pr])
            vals.extend([1.0 - s, s])
            nrow += n
        # on-circle nodes and stranded outside dofs
        rr = np.hypot(grid.x[ii], grid.x[jj])
        pin = (inmask & (rr >= 1.0 - 1e-9)) | (~inmask & ~covered_out)
        pidx = np.flatnonzero(pin)
        r = np.arange(nrow, nrow + pidx.size)
        rows.append(r)
        cols.append(pidx)
        vals.append(np.ones(pidx.size))
        nrow += pidx.size

        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        ndof = nm if self.rank == 1 else 2 * nm
        ncomp_p = NCOMP[self.rank - 1]
        blocks = []
        bdofs = []
        for c in range(ncomp_p):
            blocks.append(
                sparse.csr_matrix((vals, (rows, cols + c * nm)), shape=(nrow, ndof))
            )
            bdofs.append(np.unique(cols) + c * nm)
        return sparse.vstack(blocks, format="csr"), np.concatenate(bdofs)

    # -- field <-> dof plumbing

    def tensor_to_rows(self, u: SymTensorField) -> np.ndarray:
        return np.concatenate(
            [u.comps[:, :, c].ravel()[self.midx] for c in range(NCOMP[self.rank])]
        )

    def rows_to_tensor(self, rows: np.ndarray, rank: int) -> SymTensorField:
        nm = self.midx.size
        nc = NCOMP[rank]
        comps = np.zeros((self.grid.nx * self.grid.nx, nc))
        for c in range(nc):
            comps[self.midx, c] = rows[c * nm : (c + 1) * nm]
        comps = comps.reshape(self.grid.nx, self.grid.nx, nc)
        # fill past the quadrature support only; collar nodes hold dofs
        filled = self.grid.fill_exterior(comps)
        filled[self.grid.support] = comps[self.grid.support]
        return SymTensorField(rank, filled, self.grid, self.metric)

    def solve_direct(self, rhs: np.ndarray) -> np.ndarray:
        return self.lu.solve(rhs)

    def solve_potential(self, rhs, tol, max_iter, use_direct):
        """Penalized solve with multiplier updates on the boundary rows.

        A single penalty pass leaves the pinned values at the force/rho
        equilibrium; re-solving with the accumulated multiplier shifts
        that violation down geometrically, so two or three passes reach
        machine-level boundary enforcement at moderate rho.
        """
        lam = np.zeros(self.B.shape[0])
        scale = float(np.linalg.norm(rhs))
        iters = 0
        x = np.zeros(self.A.shape[0])
        for _ in range(4):
            b = rhs - self.B.T @ lam
            if use_direct:
                x = self.lu.solve(b)
            else:
                x, it = self.solve_cg(b, tol, max_iter)
                iters += it
            bx = self.B @ x
            if float(np.linalg.norm(self.rho * (self.B.T @ bx))) <= 1e-14 * max(
                scale, 1e-300
            ):
                break
            lam += self.rho * bx
        return x, iters

    def solve_cg(self, rhs: np.ndarray, tol: float, max_iter: int):
        x = np.zeros_like(rhs)
        r = rhs - self.A @ x
        bnorm = float(np.linalg.norm(rhs))
        if bnorm == 0.0:
            return x, 0
        # aim well under the requested tolerance; with the complete
        # factorization as preconditioner the extra digits are free, and
        # repeated decompositions then sit safely below tol
        target = max(1e-2 * tol, 1e-14) * bnorm
        z = self.lu.solve(r)
        p = z.copy()
        rz = float(r @ z)
        for it in range(1, max_iter + 1):
            Ap = self.A @ p
            alpha = rz / float(p @ Ap)
            x += alpha * p
            r -= alpha * Ap
            if np.linalg.norm(r) <= target:
                return x, it
            z = self.lu.solve(r)
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        if np.linalg.norm(r) <= tol * bnorm:
            return x, max_iter
        raise SolverDivergence(
            f"potential solve stalled above tol={tol:g} after {max_iter} iterations"
        )


_DECOMP_CACHE: dict = {}


def decomposition_system(metric, grid: DiskGrid, rank: int) -> _DecompositionSystem:
    key = (metric.key, grid.key, rank)
    sys_ = _DECOMP_CACHE.get(key)
    if sys_ is None:
        sys_ = _DecompositionSystem(metric, grid, rank)
        _DECOMP_CACHE[key] = sys_
    return sys_


def solenoidal_decompose(
    v: SymTensorField,
    tol: float = 1e-8,
    max_iter: int | None = None,
    use_direct: bool = False,
) -> PotentialPair:
    """Split v into a solenoidal part and a derivative with pinned boundary.

    The potential solves the SPD normal system by preconditioned
    conjugate gradients (or the cached factorization when use_direct is
    set, e.g. inside iterative reconstruction loops).
    """
    sys_ = decomposition_system(v.metric, v.grid, v.rank)
    vrows = sys_.tensor_to_rows(v)
    rhs = sys_.D.T @ (sys_.M @ vrows)
    if max_iter is None:
        max_iter = 10 * int(math.isqrt(rhs.size)) + 50
    prows, iters = sys_.solve_potential(rhs, tol, max_iter, use_direct)

    dprows = sys_.D @ prows
    srows = vrows - dprows

    p = sys_.rows_to_tensor(prows, v.rank - 1)
    # exterior fill on p would leak through the FD stencils of dp near the
    # rim; rebuild both parts from the dof vectors instead
    dp = sys_.rows_to_tensor(dprows, v.rank)
    v_s = v.copy()
    v_s.comps = v.comps - dp.comps

    # weak divergence of the solenoidal part against interior test fields
    zfun = sys_.D.T @ (sys_.M @ srows)
    sel = sys_.interior_dofs & (sys_.pmass > 1e-14 * sys_.pmass.max())
    zin = zfun[sel]
    win = sys_.pmass[sel]
    div = math.sqrt(float(np.sum(zin * zin / win)))
    vnorm = norm_M(v)
    bvals = sys_.B @ prows
    pscale = float(np.abs(prows).max()) if prows.size else 0.0
    rec = v.comps - (v_s.comps + dp.comps)
    residuals = {
        "div_norm": div / max(vnorm, 1e-300),
        "boundary_norm": float(np.abs(bvals).max()) / max(pscale, 1e-300),
        "recomposition_norm": float(np.abs(rec).max())
        / max(float(np.abs(v.comps).max()), 1e-300),
        "cg_iterations": iters,
    }
    return PotentialPair(v_s=v_s, p=p, residuals=residuals)


# ---------------------------------------------------------------------------
# solenoidal extension across the rim (rank 1)


@dataclass
class AnnulusExtension:
    """A rank-1 field on the disk glued with a potential gradient outside.

    The annulus carries the scalar potential w on a polar grid; the
    glued field is u inside the disk and dw outside.  By construction
    the normal components match weakly across the rim.
    """

    disk_field: SymTensorField
    outer_radius: float
    r: np.ndarray
    phi: np.ndarray
    w: np.ndarray
    flux: np.ndarray
    flux_removed_mean: float

    def gradient(self):
        """dw on the polar grid, as (radial, angular/r) physical components."""
        dr = self.r[1] - self.r[0]
        wr = np.gradient(self.w, dr, axis=0, edge_order=2)
        nphi = self.phi.size
        k = np.fft.fftfreq(nphi, d=1.0 / nphi)
        wphi = np.fft.ifft(np.fft.fft(self.w, axis=1) * (1j * k), axis=1).real
        return wr, wphi / self.r[:, None]


def solenoidal_extension_m1(
    u: SymTensorField,
    outer_radius: float = 1.3,
    nr: int = 96,
    nphi: int = 256,
    flux_tol: float = 1e-3,
) -> AnnulusExtension:
    """Extend a solenoidal 1-form beyond the disk by a Neumann potential.

    Solves the flat Laplace equation on the annulus with the normal
    derivative matching the outward flux of u at the rim and vanishing
    at the outer circle, normalized to zero mean.  The returned glue is
    weakly divergence free across the rim (see weak_divergence_residual).
    """
    if u.rank != 1:
        raise ValueError("extension implemented for rank-1 fields")
    if not 1.0 < outer_radius <= 1.5:
        raise ValueError("outer_radius must lie in (1, 1.5]")

    flux = boundary_flux(u, nphi)
    dphi = TWO_PI / nphi
    total = float(np.sum(flux) * dphi)
    scale = float(np.sum(np.abs(flux)) * dphi) + 1e-300
    if abs(total) / max(scale, 1e-12) > flux_tol:
        raise IncompatibleFlux(
            f"net boundary flux {total:.3e} exceeds {flux_tol:g} of the absolute flux"
        )
    mean = total / TWO_PI
    flux0 = flux - mean

    r = np.linspace(1.0, outer_radius, nr)
    dr = r[1] - r[0]
    n = nr * nphi

    rows, cols, vals = [], [], []
    rhs = np.zeros(n + 1)

    def idx(i, j):
        return i * nphi + (j % nphi)

    for j in range(nphi):
        # inner rim: one-sided second-order normal derivative = flux
        r0 = idx(0, j)
        rows += [r0, r0, r0]
        cols += [idx(0, j), idx(1, j), idx(2, j)]
        vals += [-3.0 / (2 * dr), 4.0 / (2 * dr), -1.0 / (2 * dr)]
        rhs[r0] = flux0[j]
        # outer rim: vanishing normal derivative
        rN = idx(nr - 1, j)
        rows += [rN, rN, rN]
        cols += [idx(nr - 1, j), idx(nr - 2, j), idx(nr - 3, j)]
        vals += [3.0 / (2 * dr), -4.0 / (2 * dr), 1.0 / (2 * dr)]
        rhs[rN] = 0.0

    for i in range(1, nr - 1):
        ri = r[i]
        arr = 1.0 / dr**2
        ar = 1.0 / (2.0 * dr * ri)
        aphi = 1.0 / (dphi**2 * ri * ri)
        for j in range(nphi):
            k = idx(i, j)
            rows += [k, k, k, k, k]
            cols += [idx(i - 1, j), idx(i + 1, j), idx(i, j - 1), idx(i, j + 1), k]
            vals += [arr - ar, arr + ar, aphi, aphi, -2.0 * arr - 2.0 * aphi]

    # pin the constant null direction: bordered row/column of ones
    rows += list(range(n))
    cols += [n] * n
    vals += [1.0] * n
    rows += [n] * n
    cols += list(range(n))
    vals += [1.0] * n

    A = sparse.csr_matrix((vals, (rows, cols)), shape=(n + 1, n + 1))
    sol = sla.spsolve(A.tocsc(), rhs)
    w = sol[:n].reshape(nr, nphi)
    w -= w.mean()

    return AnnulusExtension(
        disk_field=u,
        outer_radius=outer_radius,
        r=r,
        phi=boundary_phi(nphi),
        w=w,
        flux=flux0,
        flux_removed_mean=mean,
    )


def weak_divergence_residual(ext: AnnulusExtension, kmax: int = 6, band: float = 0.12) -> float:
    """Divergence of the glued field, tested weakly across the rim.

    Pairs the glue with gradients of window(r) * trig(k phi) test
    functions supported in a band straddling the rim, normalized by the
    field and test norms over the band.  The conformal weights cancel
    for rank-1 pairings, so the quadrature is flat polar.
    """
    from .geometry import _cutoff

    u = ext.disk_field
    nphi = ext.phi.size
    dphi = TWO_PI / nphi
    dr = ext.r[1] - ext.r[0]

    # inner leg: sub-grid radii matching the annulus spacing
    nin = max(int(round(band / dr)), 8)
    rin = np.linspace(1.0 - band, 1.0, nin + 1)
    Rin, Pin = np.meshgrid(rin, ext.phi, indexing="ij")
    X1, X2 = Rin * np.cos(Pin), Rin * np.sin(Pin)
    u1 = _interp_comps(u.comps[:, :, 0], u.grid, X1.ravel(), X2.ravel()).reshape(Rin.shape)
    u2 = _interp_comps(u.comps[:, :, 1], u.grid, X1.ravel(), X2.ravel()).reshape(Rin.shape)
    ur_in = u1 * np.cos(Pin) + u2 * np.sin(Pin)
    up_in = -u1 * np.sin(Pin) + u2 * np.cos(Pin)

    # outer leg: annulus rings inside the band
    nout = max(int(round(band / dr)), 4)
    wr, wp_over_r = ext.gradient()
    ur_out = wr[: nout + 1]
    up_out = wp_over_r[: nout + 1]
    rout = ext.r[: nout + 1]

    def window(rvals):
        # C^2 bump in the radial distance from the rim
        chi, dchi, _ = _cutoff(np.abs(rvals - 1.0) / band)
        return chi, dchi * np.sign(rvals - 1.0) / band

    win_in, dwin_in = window(rin)
    win_out, dwin_out = window(rout)

    tr = np.trapezoid if hasattr(np, "trapezoid") else np.trapz

    # trapezoid in r, uniform (spectral) sum in phi
    def leg(rvals, winr, dwinr, ur, up, ktrig, dktrig):
        # test = win(r) trig(k phi); grad = (dwin trig, win dtrig / r)
        integ = ur * dwinr[:, None] * ktrig[None, :] + up * winr[:, None] * dktrig[None, :] / rvals[:, None]
        return float(tr(np.sum(integ, axis=1) * dphi * rvals, rvals))

    worst = 0.0
    for k in range(kmax + 1):
        for phase in (0, 1):
            if k == 0 and phase == 1:
                continue
            if phase == 0:
                ktrig = np.cos(k * ext.phi)
                dktrig = -k * np.sin(k * ext.phi)
            else:
                ktrig = np.sin(k * ext.phi)
                dktrig = k * np.cos(k * ext.phi)
            res = leg(rin, win_in, dwin_in, ur_in, up_in, ktrig, dktrig) + leg(
                rout, win_out, dwin_out, ur_out, up_out, ktrig, dktrig
            )
            vsq = tr(np.sum(ur_in**2 + up_in**2, axis=1) * dphi * rin, rin) + tr(
                np.sum(ur_out**2 + up_out**2, axis=1) * dphi * rout, rout
            )
            gsq_in = (dwin_in[:, None] * ktrig[None, :]) ** 2 + (
                win_in[:, None] * dktrig[None, :] / rin[:, None]
            ) ** 2
            gsq_out = (dwin_out[:, None] * ktrig[None, :]) ** 2 + (
                win_out[:, None] * dktrig[None, :] / rout[:, None]
            ) ** 2
            gsq = tr(np.sum(gsq_in, axis=1) * dphi * rin, rin) + tr(
                np.sum(gsq_out, axis=1) * dphi * rout, rout
            )
            denom = math.sqrt(max(vsq, 1e-300)) * math.sqrt(max(gsq, 1e-300))
            worst = max(worst, abs(res) / max(denom, 1e-300))
    return worst
