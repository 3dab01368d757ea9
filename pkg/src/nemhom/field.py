"""Voxel-grid tensor fields, discrete free energies and their minimisation.

Fields store the five tensor components per voxel center. The outermost
voxel layer is a Dirichlet shell holding the boundary datum; voxels whose
center falls inside the scaffold are excluded from the bulk sums and
never feed the surface term. All reductions run in a fixed order, so
energies and gradients are reproducible bit for bit.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field as dataclass_field
from enum import IntEnum

import numpy as np

from . import homogenize
from .energy import df_b, df_e, df_s, f_b, f_e, f_s, face_quadrature_points, surface_prefactor
from .errors import DivergedError, GridResolutionError, ValidationError
from .qtensor import BASIS, QTensor, to_matrices


class VoxelTag(IntEnum):
    LC = 0
    SCAFFOLD_INTERIOR = 1
    SCAFFOLD_SURFACE = 2
    DIRICHLET = 3


_MAGIC = b"NHFLD001"


class Grid:
    """Uniform voxel grid over a box; centers at lo + (i + 1/2) h."""

    def __init__(self, domain, nx, ny, nz):
        if min(nx, ny, nz) < 4:
            raise ValidationError("need at least 4 voxels per axis")
        self.domain = domain
        self.shape = (int(nx), int(ny), int(nz))
        sizes = domain.size
        spacings = [s / n for s, n in zip(sizes, self.shape)]
        h = spacings[0]
        if any(abs(s - h) > 1e-9 * h for s in spacings):
            raise ValidationError(f"voxel spacing must be uniform, got {spacings}")
        self.h = h

    def axis_centers(self, d):
        lo = self.domain.lo[d]
        return lo + (np.arange(self.shape[d]) + 0.5) * self.h

    def center_points(self):
        gx, gy, gz = np.meshgrid(
            self.axis_centers(0), self.axis_centers(1), self.axis_centers(2), indexing="ij"
        )
        return np.stack([gx, gy, gz], axis=-1)

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.shape == other.shape
            and self.domain.lo == other.domain.lo
            and self.domain.hi == other.domain.hi
        )


@dataclass
class Field:
    """Tensor components (nx, ny, nz, 5) with a voxel material mask."""

    grid: Grid
    values: np.ndarray
    mask: np.ndarray
    scaffold: object = None

    def copy(self):
        return Field(self.grid, self.values.copy(), self.mask.copy(), self.scaffold)

    @property
    def free(self):
        """Voxels the minimiser may update (liquid crystal only)."""
        return self.mask == VoxelTag.LC

    def mean_tensor(self):
        """Average tensor over non-Dirichlet voxels."""
        sel = self.mask != VoxelTag.DIRICHLET
        c = self.values[sel].mean(axis=0)
        return QTensor(*c)


@dataclass(frozen=True)
class MinimizeConfig:
    """Gradient-descent controls; sup-norm gradient tolerance.

    step_rule 'armijo' is plain descent with backtracking; 'bb' seeds the
    backtracking with the Barzilai-Borwein step (still monotone and
    deterministic); 'fixed' takes constant steps.
    """

    max_iters: int = 2000
    grad_tol: float = 1e-6
    step_rule: str = "armijo"  # armijo | bb | fixed
    step0: float = 1.0
    armijo_c: float = 1e-4
    shrink: float = 0.5
    grow: float = 2.0
    min_step: float = 1e-18
    init: str = "boundary"  # zero | boundary | uniaxial

    def __post_init__(self):
        if self.max_iters < 0 or self.grad_tol <= 0 or self.step0 <= 0:
            raise ValidationError("minimise config needs positive tolerances")
        if self.step_rule not in ("armijo", "bb", "fixed"):
            raise ValidationError("step_rule must be 'armijo', 'bb' or 'fixed'")


@dataclass
class MinimizeReport:
    iterations: int
    final_energy: float
    grad_sup: float
    converged: bool
    energy_trace: list = dataclass_field(default_factory=list)
    n_evals: int = 0


@dataclass
class ExtensionReport:
    sweeps: int
    final_delta: float
    converged: bool


def _normalize_g(g):
    if g is None:
        return lambda pts: np.zeros(pts.shape[:-1] + (5,))
    if isinstance(g, QTensor):
        c = g.comps

        def const(pts):
            return np.broadcast_to(c, pts.shape[:-1] + (5,)).copy()

        return const
    return g


def required_resolution(params):
    """Coarsest spacing that still resolves the connector cross sections."""
    return params.eps**params.alpha / (2.0 * max(params.p, params.q, params.r))


def make_field(grid, scaffold=None, g=None, init="zero", init_tensor=None):
    """Build a field with a Dirichlet shell and an optional scaffold mask."""
    nx, ny, nz = grid.shape
    gfun = _normalize_g(g)

    mask = np.zeros(grid.shape, dtype=np.uint8)
    if scaffold is not None:
        hmax = required_resolution(scaffold.params)
        if grid.h > hmax * (1.0 + 1e-12):
            raise GridResolutionError(
                f"grid spacing {grid.h:.6g} cannot resolve the scaffold; "
                f"need h <= eps^alpha / (2 max(p,q,r)) = {hmax:.6g}"
            )
        pts = grid.center_points().reshape(-1, 3)
        tags = scaffold.classify_points(pts).reshape(grid.shape)
        inside = tags != 0
        mask[inside] = VoxelTag.SCAFFOLD_INTERIOR
        # surface shell: scaffold voxels facing a non-scaffold voxel
        shell = np.zeros_like(inside)
        for axis in range(3):
            for shift in (1, -1):
                neigh = np.roll(inside, shift, axis=axis)
                edge = [slice(None)] * 3
                edge[axis] = 0 if shift == 1 else -1
                neigh[tuple(edge)] = False  # rolled-in values are not neighbors
                shell |= inside & ~neigh
        mask[inside & shell] = VoxelTag.SCAFFOLD_SURFACE

    mask[0, :, :] = mask[-1, :, :] = VoxelTag.DIRICHLET
    mask[:, 0, :] = mask[:, -1, :] = VoxelTag.DIRICHLET
    mask[:, :, 0] = mask[:, :, -1] = VoxelTag.DIRICHLET

    values = np.zeros(grid.shape + (5,))
    pts = grid.center_points()
    shell_sel = mask == VoxelTag.DIRICHLET
    shell_vals = gfun(pts[shell_sel])
    if init == "zero":
        pass
    elif init == "boundary":
        values[...] = shell_vals.mean(axis=0)
    elif init == "uniaxial":
        if init_tensor is None:
            raise ValidationError("init='uniaxial' needs init_tensor")
        values[...] = init_tensor.comps
    else:
        raise ValidationError(f"unknown initializer {init!r}")
    values[shell_sel] = shell_vals
    return Field(grid, values, mask, scaffold)


# ---------------------------------------------------------------------------
# sampling on faces


def _trilinear_raw(field, pts):
    grid = field.grid
    h = grid.h
    lo = np.asarray(grid.domain.lo)
    t = (np.asarray(pts, dtype=float) - lo) / h - 0.5
    base = np.floor(t).astype(np.int64)
    frac = t - base
    shape = grid.shape
    if np.any(base < 0) or any(np.any(base[:, d] > shape[d] - 2) for d in range(3)):
        raise ValidationError("sample point outside the voxel-center hull of the grid")

    usable_mask = (field.mask != VoxelTag.SCAFFOLD_INTERIOR) & (
        field.mask != VoxelTag.SCAFFOLD_SURFACE
    )
    m = base.shape[0]
    idx = np.empty((m, 8), dtype=np.int64)
    wts = np.empty((m, 8))
    corner = 0
    for dx in (0, 1):
        wx = frac[:, 0] if dx else 1.0 - frac[:, 0]
        for dy in (0, 1):
            wy = frac[:, 1] if dy else 1.0 - frac[:, 1]
            for dz in (0, 1):
                wz = frac[:, 2] if dz else 1.0 - frac[:, 2]
                ii = (base[:, 0] + dx, base[:, 1] + dy, base[:, 2] + dz)
                idx[:, corner] = np.ravel_multi_index(ii, shape)
                wts[:, corner] = wx * wy * wz * usable_mask.ravel()[idx[:, corner]]
                corner += 1
    return idx, wts, wts.sum(axis=1)


def trilinear_weights(field, pts, normals=None):
    """Trilinear stencil (flat indices (M, 8), weights (M, 8)) at given points.

    Stencil corners tagged as scaffold are dropped and the remaining
    weights renormalised, so the sampled value is the trace seen from the
    liquid-crystal side. On very coarse grids a face point can sit with
    every stencil corner inside the scaffold; when `normals` are given the
    offending points are stepped outward one voxel at a time along them
    until a liquid-crystal corner appears. Raises when no usable corner
    can be found.
    """
    pts = np.asarray(pts, dtype=float)
    idx, wts, total = _trilinear_raw(field, pts)
    if np.any(total <= 0.0):
        if normals is None:
            raise ValidationError("sample point has no liquid-crystal-side stencil corner")
        pts = pts.copy()
        for _ in range(3):
            bad = total <= 0.0
            if not np.any(bad):
                break
            pts[bad] += field.grid.h * np.asarray(normals)[bad]
            idx_b, wts_b, total_b = _trilinear_raw(field, pts[bad])
            idx[bad], wts[bad], total[bad] = idx_b, wts_b, total_b
        if np.any(total <= 0.0):
            raise ValidationError("sample point has no liquid-crystal-side stencil corner")
    wts = wts / total[:, None]
    return idx, wts


def sample_field(field, pts):
    """Mask-aware trilinear interpolation of the components at given points."""
    idx, wts = trilinear_weights(field, pts)
    flat = field.values.reshape(-1, 5)
    return np.einsum("mc,mck->mk", wts, flat[idx])


class _FaceSampler:
    """Precomputed quadrature points, stencils and normals for a face set."""

    def __init__(self, field, faces, quad_order):
        pts, weights = face_quadrature_points(faces, quad_order)
        m, nq, _ = pts.shape
        self.n_faces = m
        self.weights = weights.reshape(-1)
        self.normals = np.repeat(faces.normals[:, None, :], nq, axis=1).reshape(-1, 3)
        self.idx, self.wts = trilinear_weights(field, pts.reshape(-1, 3), normals=self.normals)

    def sample(self, values):
        flat = values.reshape(-1, 5)
        return np.einsum("mc,mck->mk", self.wts, flat[self.idx])

    def energy(self, values, model):
        comps = self.sample(values)
        vals = f_s(comps, self.normals, model)
        per_face = (self.weights * vals).reshape(self.n_faces, -1).sum(axis=1)
        return per_face

    def gradient(self, values, model, out):
        comps = self.sample(values)
        dfs = df_s(comps, self.normals, model)  # (S, 5)
        contrib = self.weights[:, None, None] * self.wts[:, :, None] * dfs[:, None, :]
        np.add.at(out.reshape(-1, 5), self.idx, contrib)


# ---------------------------------------------------------------------------
# finite differences


class _DiffOps:
    """Precomputed central/one-sided difference stencils for a fixed mask.

    The slope of a component along an axis at voxel v combines forward and
    backward differences with weights that depend only on which neighbors
    are usable:

        D[v] = cp[v] (Q[v+e] - Q[v]) + cm[v] (Q[v] - Q[v-e])

    with cp = cm = 1/(2h) where both neighbors are usable, a single 1/h
    weight next to unusable voxels and zero where no neighbor helps. The
    adjoint follows from the same coefficients.
    """

    def __init__(self, usable, h):
        self.h = h
        self.shape = usable.shape
        self.cp = []
        self.cm = []
        self.c0 = []
        for axis in range(3):
            up = np.zeros(self.shape)
            um = np.zeros(self.shape)
            sl_from = [slice(None)] * 3
            sl_to = [slice(None)] * 3
            sl_from[axis] = slice(1, None)
            sl_to[axis] = slice(None, -1)
            up[tuple(sl_to)] = usable[tuple(sl_from)]
            um[tuple(sl_from)] = usable[tuple(sl_to)]
            denom = h * np.maximum(up + um, 1.0)
            cp = up / denom
            cm = um / denom
            self.cp.append(cp[..., None])
            self.cm.append(cm[..., None])
            self.c0.append((cm - cp)[..., None])

    def gradients(self, values):
        """(nx, ny, nz, 5, 3) component slopes."""
        out = np.empty(values.shape + (3,))
        for axis in range(3):
            sl_from = [slice(None)] * 3
            sl_to = [slice(None)] * 3
            sl_from[axis] = slice(1, None)
            sl_to[axis] = slice(None, -1)
            diff = values[tuple(sl_from)] - values[tuple(sl_to)]
            d = np.zeros_like(values)
            d[tuple(sl_to)] += self.cp[axis][tuple(sl_to)] * diff
            d[tuple(sl_from)] += self.cm[axis][tuple(sl_from)] * diff
            out[..., axis] = d
        return out

    def scatter(self, gc, out):
        """Adjoint of `gradients`; gc must vanish at voxels outside the sum."""
        for axis in range(3):
            sl_from = [slice(None)] * 3
            sl_to = [slice(None)] * 3
            sl_from[axis] = slice(1, None)
            sl_to[axis] = slice(None, -1)
            g = gc[..., axis]
            out += self.c0[axis] * g
            gp = self.cp[axis] * g
            out[tuple(sl_from)] += gp[tuple(sl_to)]
            gm = self.cm[axis] * g
            out[tuple(sl_to)] -= gm[tuple(sl_from)]


def _comps_to_matrix_grad(dc):
    """(..., 5, 3) component-space gradients to (..., 3, 3, 3) matrix form."""
    t = np.tensordot(dc, BASIS, axes=([dc.ndim - 2], [0]))  # (..., k, i, j)
    return np.moveaxis(t, -3, -1)


def _matrix_to_comps_grad(dm):
    """Adjoint of `_comps_to_matrix_grad`."""
    t = np.tensordot(dm, BASIS, axes=([dm.ndim - 3, dm.ndim - 2], [1, 2]))  # (..., k, m)
    return np.swapaxes(t, -1, -2)


# ---------------------------------------------------------------------------
# energies


class ScaffoldEnergy:
    """Discrete free energy with an explicit scaffold.

    Bulk and elastic densities are summed over liquid-crystal voxels; the
    scaled anchoring term runs quadrature over the connector faces (and
    optionally the outer node faces) with the trace taken from the
    liquid-crystal side of the interface.
    """

    def __init__(
        self,
        elastic,
        bulk,
        surface,
        scaffold,
        quad_order=3,
        include_s_faces=False,
    ):
        self.elastic = elastic
        self.bulk = bulk
        self.surface = surface
        self.scaffold = scaffold
        self.quad_order = quad_order
        self.include_s_faces = include_s_faces
        self._samplers = None
        self._diff = None

    def _ensure_diff(self, field):
        if self._diff is None:
            self._diff = _DiffOps(self._usable(field), field.grid.h)
        return self._diff

    def _ensure_samplers(self, field):
        if field.scaffold is not self.scaffold:
            raise ValidationError("field mask does not belong to this scaffold")
        if self._samplers is None:
            t = _FaceSampler(field, self.scaffold.t_faces, self.quad_order)
            s = (
                _FaceSampler(field, self.scaffold.s_faces, self.quad_order)
                if self.include_s_faces
                else None
            )
            self._samplers = (t, s)
        return self._samplers

    def _summed(self, field):
        return field.mask == VoxelTag.LC

    def _usable(self, field):
        return (field.mask == VoxelTag.LC) | (field.mask == VoxelTag.DIRICHLET)

    def components(self, field):
        grid = field.grid
        h3 = grid.h**3
        summed = self._summed(field)
        dc = self._ensure_diff(field).gradients(field.values)
        dm = _comps_to_matrix_grad(dc)
        elastic = h3 * float(np.sum(f_e(dm, self.elastic)[summed]))
        bulk = h3 * float(np.sum(f_b(field.values, self.bulk)[summed]))

        pref = surface_prefactor(self.scaffold.params.eps, self.scaffold.params.alpha)
        t_sampler, s_sampler = self._ensure_samplers(field)
        per_face = t_sampler.energy(field.values, self.surface)
        parts = [
            pref * float(np.sum(per_face[s])) for s in self.scaffold.t_face_axis_slices
        ]
        j_t = parts[0] + parts[1] + parts[2]
        j_s = (
            pref * float(np.sum(s_sampler.energy(field.values, self.surface)))
            if s_sampler is not None
            else 0.0
        )
        return {
            "elastic": elastic,
            "bulk": bulk,
            "surface_T": j_t,
            "surface_S": j_s,
            "total": elastic + bulk + j_t + j_s,
        }

    def value(self, field):
        return self.components(field)["total"]

    def gradient(self, field):
        grid = field.grid
        h3 = grid.h**3
        summed = self._summed(field)
        diff = self._ensure_diff(field)
        out = np.zeros_like(field.values)

        out += h3 * np.where(summed[..., None], df_b(field.values, self.bulk), 0.0)

        dc = diff.gradients(field.values)
        dm = _comps_to_matrix_grad(dc)
        ge = df_e(dm, self.elastic)
        gc = _matrix_to_comps_grad(ge) * h3
        gc = np.where(summed[..., None, None], gc, 0.0)
        diff.scatter(gc, out)

        pref = surface_prefactor(self.scaffold.params.eps, self.scaffold.params.alpha)
        t_sampler, s_sampler = self._ensure_samplers(field)
        surf = np.zeros_like(field.values)
        t_sampler.gradient(field.values, self.surface, surf)
        if s_sampler is not None:
            s_sampler.gradient(field.values, self.surface, surf)
        out += pref * surf

        out[~field.free] = 0.0
        return out


class HomogenisedEnergy:
    """Discrete homogenised free energy on the full box (no scaffold mask)."""

    def __init__(self, elastic, bulk, surface, p, q, r, include_rp_constant=False):
        self.elastic = elastic
        self.bulk = bulk
        self.surface = surface
        self.pqr = (p, q, r)
        self.include_rp_constant = include_rp_constant
        self._diff = None

    def _summed(self, field):
        return field.mask != VoxelTag.DIRICHLET

    def _ensure_diff(self, field):
        if self._diff is None:
            self._diff = _DiffOps(np.ones(field.grid.shape, dtype=bool), field.grid.h)
        return self._diff

    def components(self, field):
        grid = field.grid
        h3 = grid.h**3
        summed = self._summed(field)
        dc = self._ensure_diff(field).gradients(field.values)
        dm = _comps_to_matrix_grad(dc)
        elastic = h3 * float(np.sum(f_e(dm, self.elastic)[summed]))
        bulk = h3 * float(np.sum(f_b(field.values, self.bulk)[summed]))
        p, q, r = self.pqr
        hom = h3 * float(
            np.sum(
                homogenize.f_hom_density(
                    field.values, self.surface, p, q, r, self.include_rp_constant
                )[summed]
            )
        )
        return {
            "elastic": elastic,
            "bulk": bulk,
            "f_hom": hom,
            "total": elastic + bulk + hom,
        }

    def value(self, field):
        return self.components(field)["total"]

    def gradient(self, field):
        grid = field.grid
        h3 = grid.h**3
        summed = self._summed(field)
        diff = self._ensure_diff(field)
        out = np.zeros_like(field.values)

        p, q, r = self.pqr
        point_grad = df_b(field.values, self.bulk) + homogenize.df_hom_density(
            field.values, self.surface, p, q, r
        )
        out += h3 * np.where(summed[..., None], point_grad, 0.0)

        dc = diff.gradients(field.values)
        dm = _comps_to_matrix_grad(dc)
        ge = df_e(dm, self.elastic)
        gc = _matrix_to_comps_grad(ge) * h3
        gc = np.where(summed[..., None, None], gc, 0.0)
        diff.scatter(gc, out)

        out[field.mask == VoxelTag.DIRICHLET] = 0.0
        return out


def discrete_f_eps(field, elastic, bulk, surface, scaffold, quad_order=3, include_s_faces=False):
    """Value of the scaffold free energy (see ScaffoldEnergy)."""
    return ScaffoldEnergy(
        elastic, bulk, surface, scaffold, quad_order, include_s_faces
    ).value(field)


def discrete_f_0(field, elastic, bulk, surface, p, q, r, include_rp_constant=False):
    """Value of the homogenised free energy (see HomogenisedEnergy)."""
    return HomogenisedEnergy(elastic, bulk, surface, p, q, r, include_rp_constant).value(field)


# ---------------------------------------------------------------------------
# minimisation


def minimize(field, config, energy):
    """Gradient descent with Armijo backtracking on the free voxels."""
    f = field.copy()
    energy_val = energy.value(f)
    if not np.isfinite(energy_val):
        raise DivergedError("non-finite energy at the initial point")
    trace = [energy_val]
    n_evals = 1
    step = config.step0
    grad = energy.gradient(f)
    gsup = float(np.max(np.abs(grad))) if grad.size else 0.0
    prev_values = None
    prev_grad = None
    iters = 0
    while iters < config.max_iters and gsup > config.grad_tol:
        gsq = float(np.sum(grad * grad))
        if config.step_rule == "fixed":
            f.values = f.values - config.step0 * grad
            new_val = energy.value(f)
            n_evals += 1
            if not np.isfinite(new_val):
                raise DivergedError(
                    "non-finite energy after a fixed step",
                    {"iteration": iters, "step": config.step0, "energy": new_val},
                )
        else:
            if config.step_rule == "bb" and prev_values is not None:
                s = f.values - prev_values
                y = grad - prev_grad
                sy = float(np.sum(s * y))
                step = float(np.sum(s * s)) / sy if sy > 0 else config.step0
            prev_values = f.values
            prev_grad = grad
            while True:
                trial = f.values - step * grad
                cand = Field(f.grid, trial, f.mask, f.scaffold)
                new_val = energy.value(cand)
                n_evals += 1
                if np.isfinite(new_val) and new_val <= energy_val - config.armijo_c * step * gsq:
                    f.values = trial
                    if config.step_rule == "armijo":
                        step = min(step * config.grow, 1e6)
                    break
                step *= config.shrink
                if step < config.min_step:
                    raise DivergedError(
                        "Armijo backtracking underflowed; gradient is inconsistent "
                        "with the energy",
                        {"iteration": iters, "energy": energy_val, "grad_sup": gsup},
                    )
        energy_val = new_val
        trace.append(energy_val)
        grad = energy.gradient(f)
        gsup = float(np.max(np.abs(grad)))
        iters += 1
    report = MinimizeReport(
        iterations=iters,
        final_energy=energy_val,
        grad_sup=gsup,
        converged=gsup <= config.grad_tol,
        energy_trace=trace,
        n_evals=n_evals,
    )
    return f, report


# ---------------------------------------------------------------------------
# harmonic extension


def harmonic_extension(field, tol=1e-10, max_sweeps=20000):
    """Fill scaffold voxels with the discrete componentwise harmonic extension.

    Red-black Gauss-Seidel on the scaffold voxel set with Dirichlet data
    taken from the surrounding voxels; liquid-crystal values are never
    touched. Unknowns start at the mean of the surrounding data, so every
    iterate stays inside the data hull (discrete maximum principle).
    """
    f = field.copy()
    unknown = (f.mask == VoxelTag.SCAFFOLD_INTERIOR) | (f.mask == VoxelTag.SCAFFOLD_SURFACE)
    if not np.any(unknown):
        return f, ExtensionReport(0, 0.0, True)
    shape = f.grid.shape
    ii, jj, kk = np.nonzero(unknown)
    if (
        ii.min() == 0
        or jj.min() == 0
        or kk.min() == 0
        or ii.max() == shape[0] - 1
        or jj.max() == shape[1] - 1
        or kk.max() == shape[2] - 1
    ):
        raise ValidationError("scaffold voxels touch the grid edge; refine the grid")

    flat = f.values.reshape(-1, 5)
    unknown_flat = np.flatnonzero(unknown.ravel())
    strides = (shape[1] * shape[2], shape[2], 1)
    neighbors = np.stack(
        [unknown_flat + s for s in strides] + [unknown_flat - s for s in strides], axis=1
    )

    # boundary data: values at non-scaffold voxels adjacent to the unknown set
    fixed_adjacent = np.unique(neighbors[~unknown.ravel()[neighbors]])
    flat[unknown_flat] = flat[fixed_adjacent].mean(axis=0)

    parity = ((ii + jj + kk) % 2).astype(bool)
    groups = [unknown_flat[~parity], unknown_flat[parity]]
    group_neighbors = [neighbors[~parity], neighbors[parity]]

    delta = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        delta = 0.0
        for sel, nb in zip(groups, group_neighbors):
            new = flat[nb].mean(axis=1)
            delta = max(delta, float(np.max(np.abs(new - flat[sel]))) if sel.size else 0.0)
            flat[sel] = new
        sweeps += 1
        if delta < tol:
            break
    converged = delta < tol
    if not converged:
        warnings.warn(
            f"harmonic extension stopped at max_sweeps={max_sweeps} with delta={delta:.3e}",
            stacklevel=2,
        )
    return f, ExtensionReport(sweeps, delta, converged)


# ---------------------------------------------------------------------------
# norms and serialization


def norms(f1, f2):
    """(L2, H1) distances between two fields on the same grid."""
    if f1.grid != f2.grid:
        raise ValidationError("fields live on different grids")
    h = f1.grid.h
    h3 = h**3
    diff = f1.values - f2.values
    m = to_matrices(diff)
    l2sq = float(np.sum(m * m)) * h3
    grads = np.stack(
        [
            (diff[2:, 1:-1, 1:-1] - diff[:-2, 1:-1, 1:-1]) / (2 * h),
            (diff[1:-1, 2:, 1:-1] - diff[1:-1, :-2, 1:-1]) / (2 * h),
            (diff[1:-1, 1:-1, 2:] - diff[1:-1, 1:-1, :-2]) / (2 * h),
        ],
        axis=-1,
    )
    gm = np.einsum("...mk,mij->...ijk", grads, BASIS)
    gradsq = float(np.sum(gm * gm)) * h3
    return float(np.sqrt(l2sq)), float(np.sqrt(l2sq + gradsq))


def save_field(field, path, extra=None):
    """Flat binary snapshot (header + little-endian float64 body) + JSON sidecar."""
    nx, ny, nz = field.grid.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<3q", nx, ny, nz))
        fh.write(struct.pack("<d", field.grid.h))
        fh.write(struct.pack("<6d", *field.grid.domain.lo, *field.grid.domain.hi))
        fh.write(field.values.astype("<f8").tobytes(order="C"))
    counts = {tag.name: int(np.sum(field.mask == tag)) for tag in VoxelTag}
    sidecar = {
        "shape": [nx, ny, nz],
        "h": field.grid.h,
        "domain": {"lo": list(field.grid.domain.lo), "hi": list(field.grid.domain.hi)},
        "mask_counts": counts,
    }
    sidecar.update(extra or {})
    with open(str(path) + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_field(path, scaffold=None, g=None):
    """Read a snapshot; the mask is rebuilt from the scaffold when given."""
    from .scaffold import Box

    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValidationError(f"not a field snapshot: {path}")
        nx, ny, nz = struct.unpack("<3q", fh.read(24))
        (h,) = struct.unpack("<d", fh.read(8))
        box = struct.unpack("<6d", fh.read(48))
        body = np.frombuffer(fh.read(), dtype="<f8").reshape(nx, ny, nz, 5).copy()
    grid = Grid(Box(box[:3], box[3:]), nx, ny, nz)
    if abs(grid.h - h) > 1e-12 * h:
        raise ValidationError("snapshot header spacing disagrees with the domain")
    f = make_field(grid, scaffold=scaffold, g=g, init="zero")
    free_or_scaffold = f.mask != VoxelTag.DIRICHLET
    f.values[free_or_scaffold] = body[free_or_scaffold]
    if g is None:
        f.values[~free_or_scaffold] = body[~free_or_scaffold]
    return f
