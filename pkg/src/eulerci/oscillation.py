"""Stage oscillation data: cutoff cubes, frames, phases and amplitudes.

One OscillationField holds everything the closed-form kernels need for a
single stage: the flattened cube table, the integer mu-lattice slot map,
the bump-profile tables and the slow amplitude factor g as spline
coefficients.  The stage direction zeta, the frame and the dyadic weight
are per cube; cells (disjoint sigma-cubes glued per Remark-style gluing)
are encoded through the cell-center column and the cell scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _stage_kernels as K
from .errors import DegenerateFrame, PreconditionError
from .geometry import default_profile
from .grid import FieldInterpolant, GridField


@dataclass
class StageCell:
    """One glued tuple (Q_m, U_m, gamma_m, zeta_m) of a stage."""

    center: np.ndarray  # cell center (cube Q of side 3/2 * ell around it)
    zeta: np.ndarray  # unit oscillation direction
    amp_const: float = 1.0  # constant amplitude factor (e.g. |v0(ell m)|)
    ell: float = 0.0  # sigma-profile scale; 0 disables the cell factor


def _slow_factor_coeffs(g_field, order=5):
    # one spline carries both the value and (by exact differentiation of
    # the same spline) the gradient used in every amplitude formula
    interp = FieldInterpolant(g_field, oversample=1, order=order)
    return interp.coeffs[0]


class OscillationField:
    """Flattened per-cube stage data plus kernel drivers."""

    def __init__(self, mu, eta, lam, cube_data, slot, g_coef, ell_cell, amp_scale=1.0):
        self.mu = float(mu)
        self.eta = float(eta)
        self.lam = float(lam)
        self.cube_data = cube_data
        self.slot = slot
        self.g_coef = g_coef
        self.ell_cell = float(ell_cell)
        self.g_order = 5
        prof = default_profile()
        self.chi_tab = prof.chi_table
        self.dchi_tab = prof.dchi_table
        self.amp_scale = float(amp_scale)

    @property
    def ncubes(self):
        return self.cube_data.shape[0]

    def rescale_amplitude(self, c):
        """Multiply every amplitude by c (gamma -> c gamma)."""
        self.cube_data[:, K.C_CC] *= c
        self.cube_data[:, K.C_BC] *= c
        self.amp_scale *= c

    # -- kernel drivers -------------------------------------------------
    def _args(self):
        return (self.cube_data, self.mu, self.eta, self.ell_cell, self.slot,
                self.chi_tab, self.dchi_tab)

    def _gargs(self):
        return (self.g_coef, self.g_order)

    @staticmethod
    def _flat(pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 3)
        return (np.ascontiguousarray(pts[:, 0] % 1.0),
                np.ascontiguousarray(pts[:, 1] % 1.0),
                np.ascontiguousarray(pts[:, 2] % 1.0))

    def psi_displacement(self, pts):
        xs, ys, zs = self._flat(pts)
        out = np.empty((3, len(xs)))
        K.psi_displacement(xs, ys, zs, *self._args(), *self._gargs(), out)
        return out

    def fc(self, pts):
        xs, ys, zs = self._flat(pts)
        out = np.empty(len(xs))
        K.fc_values(xs, ys, zs, *self._args(), *self._gargs(), out)
        return out

    def kappa(self, pts):
        xs, ys, zs = self._flat(pts)
        out = np.empty(len(xs))
        K.kappa_values(xs, ys, zs, *self._args(), *self._gargs(), out)
        return out

    def fixed_point(self, pts, tol=1e-13, maxit=200):
        xs, ys, zs = self._flat(pts)
        out = np.empty((3, len(xs)))
        stats = np.zeros(2)
        K.fixed_point(xs, ys, zs, *self._args(), *self._gargs(), tol, maxit, out, stats)
        return out, float(stats[0]), int(stats[1])

    def dm_displacement(self, pts, nsteps, t0=0.0, t1=1.0):
        xs, ys, zs = self._flat(pts)
        out = np.empty((3, len(xs)))
        K.dm_integrate(xs, ys, zs, *self._args(), *self._gargs(), nsteps, t0, t1, out)
        return out

    def w0(self, pts):
        xs, ys, zs = self._flat(pts)
        out = np.empty((3, len(xs)))
        K.w0_values(xs, ys, zs, self.cube_data, self.mu, self.ell_cell, self.slot,
                    self.chi_tab, self.dchi_tab, self.g_coef, self.g_order, out)
        return out

    def gamma_sq(self, pts):
        xs, ys, zs = self._flat(pts)
        out = np.empty(len(xs))
        K.gamma_sq_values(xs, ys, zs, self.cube_data, self.mu, self.ell_cell, self.slot,
                          self.chi_tab, self.dchi_tab, self.g_coef, self.g_order, out)
        return out

    def gamma_tensor(self, pts):
        xs, ys, zs = self._flat(pts)
        out = np.empty((6, len(xs)))
        K.gamma_tensor_values(xs, ys, zs, self.cube_data, self.mu, self.ell_cell, self.slot,
                              self.chi_tab, self.dchi_tab, self.g_coef, self.g_order, out)
        return out

    def m3(self, pts, v_values):
        xs, ys, zs = self._flat(pts)
        v = np.asarray(v_values, dtype=float).reshape(3, -1)
        out = np.empty((6, len(xs)))
        K.m3_values(xs, ys, zs, np.ascontiguousarray(v[0]), np.ascontiguousarray(v[1]),
                    np.ascontiguousarray(v[2]), self.cube_data, self.mu, self.ell_cell,
                    self.slot, self.chi_tab, self.dchi_tab, self.g_coef, self.g_order, out)
        return out

    def potentials(self, pts):
        xs, ys, zs = self._flat(pts)
        out_a = np.empty((3, len(xs)))
        out_b = np.empty((9, len(xs)))
        K.potentials_ab(xs, ys, zs, *self._args(), *self._gargs(), out_a, out_b)
        return out_a, out_b

    def rho12(self, pts):
        xs, ys, zs = self._flat(pts)
        out1 = np.empty((3, len(xs)))
        out2 = np.empty((3, len(xs)))
        K.rho12_values(xs, ys, zs, *self._args(), *self._gargs(), out1, out2)
        return out1, out2

    def zero_sets(self):
        return self.ncubes == 0


def parity_weight(m):
    """Dyadic interference weight by coordinate parity (overlapping cubes
    always differ in some parity bit, so their weights differ)."""
    return 2.0 ** -(4 * (m[0] % 2) + 2 * (m[1] % 2) + (m[2] % 2))


def build_oscillation_field(cells, params, g_field, anchor_velocity, frame_threshold,
                            amp_scale=1.0):
    """Assemble the cube table for a stage.

    cells: list of StageCell; params: ScheduleParams (mu must be integer);
    g_field: the slow amplitude factor as a GridField (for a plain
    gamma-GridField stage pass gamma itself and cells with ell = 0);
    anchor_velocity: callable points -> (3, npts) giving v_J at the anchors.
    """
    mu = int(round(params.mu))
    if abs(params.mu - mu) > 1e-9:
        raise PreconditionError(f"cutoff scale mu must be an integer, got {params.mu}")
    eta = params.eta
    lam = params.lam

    rows = []
    centers_all = []
    cell_of_row = []
    for ci, cell in enumerate(cells):
        half_q = 0.75 * (cell.ell if cell.ell > 0 else params.ell)
        lo = np.floor((cell.center - half_q) * mu - 0.751).astype(int)
        hi = np.ceil((cell.center + half_q) * mu + 0.751).astype(int)
        for m0 in range(lo[0], hi[0] + 1):
            for m1 in range(lo[1], hi[1] + 1):
                for m2 in range(lo[2], hi[2] + 1):
                    center = np.array([m0, m1, m2], dtype=float) / mu
                    d = center - cell.center
                    d -= np.round(d)
                    # keep cubes whose support can meet supp(gamma) = Q-cell
                    if np.max(np.abs(d)) >= half_q + 0.75 / mu:
                        continue
                    rows.append((m0 % mu, m1 % mu, m2 % mu))
                    centers_all.append(center % 1.0)
                    cell_of_row.append(ci)
    if not rows:
        data = np.zeros((0, K.NCOLS))
        slot = -np.ones((mu, mu, mu), dtype=np.int64)
        return OscillationField(mu, eta, lam, data, slot, _slow_factor_coeffs(g_field),
                                cells[0].ell if cells else 0.0, amp_scale)

    # drop duplicate lattice slots (cells are disjoint so this only guards
    # against degenerate configurations)
    seen = {}
    order = []
    for i, m in enumerate(rows):
        if m not in seen:
            seen[m] = i
            order.append(i)
    rows = [rows[i] for i in order]
    centers_all = [centers_all[i] for i in order]
    cell_of_row = [cell_of_row[i] for i in order]

    anchors = np.array(centers_all)
    u_all = np.asarray(anchor_velocity(anchors), dtype=float).reshape(3, -1)

    nc = len(rows)
    data = np.zeros((nc, K.NCOLS))
    slot = -np.ones((mu, mu, mu), dtype=np.int64)
    ell_cell = cells[cell_of_row[0]].ell
    for i, (m, center, ci) in enumerate(zip(rows, centers_all, cell_of_row)):
        cell = cells[ci]
        u = u_all[:, i]
        zeta = cell.zeta
        cross = np.cross(u, zeta)
        norm = float(np.linalg.norm(cross))
        if norm <= frame_threshold:
            raise DegenerateFrame(
                f"|v_J x zeta| = {norm:.3e} <= {frame_threshold:.3e} at anchor {center}",
                anchor=tuple(center),
                cross_norm=norm,
            )
        kvec = cross / norm
        xivec = np.cross(zeta, kvec)
        xivec /= np.linalg.norm(xivec)
        denom = float(np.dot(u, xivec))
        lw = parity_weight(m)
        pg = lw * (eta * xivec + lam * kvec)
        data[i, K.C_CENTER : K.C_CENTER + 3] = center
        data[i, K.C_CELL : K.C_CELL + 3] = cell.center % 1.0
        data[i, K.C_ZETA : K.C_ZETA + 3] = zeta
        data[i, K.C_PG : K.C_PG + 3] = pg
        data[i, K.C_PG2] = float(np.dot(pg, pg))
        data[i, K.C_LW] = lw
        data[i, K.C_CC] = np.sqrt(2.0) * cell.amp_const * amp_scale / denom
        data[i, K.C_BC] = np.sqrt(2.0) * cell.amp_const * amp_scale
        data[i, K.C_U : K.C_U + 3] = u
        data[i, K.C_DENOM] = denom
        data[i, K.C_LETA] = lw * eta
        slot[m[0], m[1], m[2]] = i
    return OscillationField(mu, eta, lam, data, slot, _slow_factor_coeffs(g_field),
                            ell_cell, amp_scale)
