"""Diffeomorphism algebra: the oscillatory map psi, its fixed-point inverse,
Jacobians, the Dacorogna-Moser volume correction, composition and
pushforward.

Maps are stored as periodic displacement fields (phi(x) - x); oscillatory
maps additionally carry closed-form evaluators driven by the stage
kernels.  Stage maps displace along the cell direction zeta, which makes
them shears: phi = Id + S zeta with zeta.grad S = det-residual, so the
inverse of the composed volume-preserving map is Id - S zeta up to solver
tolerance (verified, with a Picard fallback for generic maps).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractionFailure, FieldError, IntegrationFailure, IterationLimit, PreconditionError
from .grid import (
    FieldInterpolant,
    GridField,
    _derivative_multiplier,
    grid_points,
    leray_project,
)
from .util import rng_for


@dataclass
class DiffeoMap:
    """A volume-preserving-ish map of the torus as displacement data."""

    n: int
    displacement: GridField
    inverse_displacement: GridField | None = None
    closed_form: object = None
    closed_form_inverse: object = None
    jac_det_stats: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    _interp: object = None
    _interp_inv: object = None

    @classmethod
    def identity(cls, n):
        zero = GridField.zeros(n, "vector")
        return cls(n=n, displacement=zero, inverse_displacement=zero.copy(),
                   closed_form=lambda pts: np.asarray(pts, dtype=float),
                   closed_form_inverse=lambda pts: np.asarray(pts, dtype=float))

    # -- evaluation ------------------------------------------------------
    def _displacement_interp(self):
        if self._interp is None:
            self._interp = FieldInterpolant(self.displacement, oversample=1, order=5)
        return self._interp

    def _inverse_interp(self):
        if self._interp_inv is None:
            if self.inverse_displacement is None:
                raise FieldError("map carries no inverse")
            self._interp_inv = FieldInterpolant(self.inverse_displacement, oversample=1, order=5)
        return self._interp_inv

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        if self.closed_form is not None:
            return self.closed_form(pts)
        disp = self._displacement_interp()(pts)
        return pts + np.moveaxis(disp, 0, -1)

    def inverse(self, pts):
        pts = np.asarray(pts, dtype=float)
        if self.closed_form_inverse is not None:
            return self.closed_form_inverse(pts)
        disp = self._inverse_interp()(pts)
        return pts + np.moveaxis(disp, 0, -1)

    def has_inverse(self):
        return self.inverse_displacement is not None or self.closed_form_inverse is not None

    # -- diagnostics -------------------------------------------------------
    def roundtrip_error(self, rng=None, npts=500):
        rng = rng or np.random.default_rng(0)
        pts = rng.uniform(0.0, 1.0, (npts, 3))
        back = self.inverse(self(pts))
        d = back - pts
        d -= np.round(d)
        return float(np.max(np.abs(d)))


def displacement_jacobian(dmap):
    """(3,3) array of spectral derivatives d_j(displacement_i)."""
    n = dmap.n
    spec = dmap.displacement.spectral()
    out = np.empty((3, 3, n, n, n))
    from .grid import _irfftn

    for j in range(3):
        mult = _derivative_multiplier(n, tuple(1 if a == j else 0 for a in range(3)))
        for i in range(3):
            out[i, j] = _irfftn(spec[i] * mult, (n, n, n))
    return out


def jacobian_det(dmap, osc=None):
    """Pointwise det(D phi) from the spectral Jacobian of the displacement.

    For psi-type maps pass the oscillation data to cross-check against the
    closed form 1 + f_c (the check lands in jac_det_stats).
    """
    jac = displacement_jacobian(dmap)
    n = dmap.n
    m = np.moveaxis(jac, (0, 1), (-2, -1))
    m = m + np.eye(3)
    det = np.linalg.det(m)
    out = GridField(det)
    dmap.jac_det_stats = {
        "min": float(det.min()),
        "max": float(det.max()),
        "mean": float(det.mean()),
    }
    if osc is not None:
        pts = grid_points(n).reshape(-1, 3)
        fc = osc.fc(pts).reshape(n, n, n)
        dmap.jac_det_stats["closed_form_gap"] = float(np.max(np.abs(det - (1.0 + fc))))
    return out


def build_psi(osc, n):
    """The auxiliary oscillatory map psi = Id - sum (a_m/(l eta)) zeta sin(theta_m).

    Verifies the phase invariance theta_m(psi(x)) = theta_m(x): the phase
    gradients are orthogonal to the displacement direction by frame
    construction, so the drift is |pg . zeta| |s|, measured exactly.
    """
    pts = grid_points(n).reshape(-1, 3)
    disp = osc.psi_displacement(pts)
    dgrid = GridField(disp.reshape(3, n, n, n), "vector")

    def closed(p):
        shape = np.asarray(p, dtype=float).shape
        d = osc.psi_displacement(p)
        return np.asarray(p, dtype=float) + np.moveaxis(d, 0, -1).reshape(shape)

    cd = osc.cube_data
    if len(cd):
        from . import _stage_kernels as K

        pg = cd[:, K.C_PG : K.C_PG + 3]
        zeta = cd[:, K.C_ZETA : K.C_ZETA + 3]
        drift = np.max(np.abs(np.sum(pg * zeta, axis=1)))
        smax = float(np.max(np.abs(disp)))
        phase_err = drift * smax
    else:
        phase_err = 0.0
    dmap = DiffeoMap(n=n, displacement=dgrid, closed_form=closed)
    dmap.diagnostics["phase_invariance"] = phase_err
    dmap.diagnostics["max_displacement"] = float(np.max(np.abs(disp)))
    return dmap


def measure_kappa(osc, n, stride=1):
    """Measured contraction density sup_x sum_m |grad a_m|/(l_m eta)."""
    if osc.ncubes == 0:
        return 0.0
    pts = grid_points(n)[::stride, ::stride, ::stride].reshape(-1, 3)
    return float(np.max(osc.kappa(pts)))


def invert_by_fixed_point(psi_map, osc, tol=1e-13, maxit=200, kappa=None):
    """phi_0 = psi^{-1} by the Banach iteration with frozen phases.

    kappa is the measured contraction factor (measured here when not
    supplied); >= 1/2 aborts with ContractionFailure.
    """
    n = psi_map.n
    if kappa is None:
        kappa = measure_kappa(osc, n)
    if kappa >= 0.5:
        raise ContractionFailure(
            f"fixed-point map is not a contraction: measured kappa = {kappa:.3f}",
            kappa=kappa,
        )
    pts = grid_points(n).reshape(-1, 3)
    disp, residual, iters = osc.fixed_point(pts, tol=tol, maxit=maxit)
    if iters >= maxit:
        raise IterationLimit(
            f"fixed point did not converge in {maxit} iterations (residual {residual:.2e})",
            residual=residual,
        )
    dgrid = GridField(disp.reshape(3, n, n, n), "vector")

    def closed(p):
        p = np.asarray(p, dtype=float)
        d, _, _ = osc.fixed_point(p, tol=tol, maxit=maxit)
        return p + np.moveaxis(d, 0, -1).reshape(p.shape)

    phi0 = DiffeoMap(
        n=n,
        displacement=dgrid,
        inverse_displacement=psi_map.displacement,
        closed_form=closed,
        closed_form_inverse=psi_map.closed_form,
    )
    phi0.diagnostics["kappa"] = kappa
    phi0.diagnostics["fp_residual"] = residual  # equals ||psi(phi0) - Id||_0
    phi0.diagnostics["fp_iterations"] = iters
    return phi0


def choose_dm_steps(osc, start_pts, tol=1e-11, rng=None):
    """Pick the RK4 step count by Richardson comparison on a subsample."""
    sub = start_pts[:: max(1, len(start_pts) // 20000)]
    s1 = osc.dm_displacement(sub, 1)
    s2 = osc.dm_displacement(sub, 2)
    err = float(np.max(np.abs(s1 - s2))) / 15.0
    if err <= tol:
        return 2, err
    # RK4 global error ~ h^4
    need = int(np.ceil(2.0 * (err / tol) ** 0.25))
    return min(max(need, 2), 64), err


def dacorogna_moser(f, region=None, z=None, osc=None, tol=1e-10, det_tol=1e-6):
    """Volume-correction map phi_c with det(D phi_c) = 1 + f.

    Preconditions: ||f||_0 <= 1/2 and zero mean over the support region.
    The transport field z comes from antidiv_vector unless supplied; when
    the oscillation data of the owning stage is passed, the closed-form
    z = psi - Id (an exact compactly supported anti-divergence of f_c) is
    used and the ODE is integrated by the stage kernels.
    """
    n = f.n
    sup = f.sup_norm()
    if sup > 0.5:
        raise PreconditionError(f"Dacorogna-Moser needs ||f||_0 <= 1/2, measured {sup:.3f}")
    mean = float(np.mean(f.values))
    if abs(mean) > 1e-9 * max(1.0, sup):
        raise PreconditionError(f"Dacorogna-Moser source must have zero mean, measured {mean:.2e}")
    pts = grid_points(n).reshape(-1, 3)
    if osc is not None:
        nsteps, pilot_err = choose_dm_steps(osc, pts, tol=tol)
        disp = osc.dm_displacement(pts, nsteps)
        disp_inv = osc.dm_displacement(pts, nsteps, t0=1.0, t1=0.0)
        diag = {"dm_steps": nsteps, "dm_pilot_error": pilot_err}

        def closed(p):
            p = np.asarray(p, dtype=float)
            d = osc.dm_displacement(p, nsteps)
            return p + np.moveaxis(d, 0, -1).reshape(p.shape)

        def closed_inv(p):
            p = np.asarray(p, dtype=float)
            d = osc.dm_displacement(p, nsteps, t0=1.0, t1=0.0)
            return p + np.moveaxis(d, 0, -1).reshape(p.shape)

    else:
        if z is None:
            from .divsolve import antidiv_vector

            z = antidiv_vector(f, region=region)
        disp, disp_inv, diag = _dm_integrate_generic(f, z.potential, pts, tol=tol)
        closed = closed_inv = None
    dgrid = GridField(disp.reshape(3, n, n, n), "vector")
    igrid = GridField(disp_inv.reshape(3, n, n, n), "vector")
    phi = DiffeoMap(n=n, displacement=dgrid, inverse_displacement=igrid,
                    closed_form=closed, closed_form_inverse=closed_inv)
    phi.diagnostics.update(diag)
    det = jacobian_det(phi)
    gap = float(np.max(np.abs(det.values - (1.0 + f.values))))
    phi.diagnostics["det_gap"] = gap
    if gap > det_tol:
        raise IntegrationFailure(
            f"det(D phi_c) misses 1 + f by {gap:.2e} (tolerance {det_tol:.1e})",
            gap=gap,
        )
    return phi


def _dm_integrate_generic(f, zfield, pts, tol=1e-10, max_steps=256):
    """Grid RK4 for the generic path: velocities by field interpolation."""
    fi = FieldInterpolant(f, oversample=1, order=5)
    zi = FieldInterpolant(zfield, oversample=1, order=5)

    def rate(p, t):
        zv = np.stack([zi(p)[c] for c in range(3)], axis=-1)
        fv = fi(p)
        den = 1.0 + (1.0 - t) * fv
        if np.any(np.abs(den) < 1e-6):
            raise IntegrationFailure("Dacorogna-Moser denominator underflow")
        return zv / den[..., None]

    def integrate(t0, t1, nsteps):
        y = pts.copy()
        h = (t1 - t0) / nsteps
        t = t0
        for _ in range(nsteps):
            k1 = rate(y, t)
            k2 = rate(y + 0.5 * h * k1, t + 0.5 * h)
            k3 = rate(y + 0.5 * h * k2, t + 0.5 * h)
            k4 = rate(y + h * k3, t + h)
            y = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
        return y - pts

    # pilot Richardson pair, then jump to the predicted step count
    s1 = integrate(0.0, 1.0, 1)
    s2 = integrate(0.0, 1.0, 2)
    err = float(np.max(np.abs(s2 - s1))) / 15.0
    if err <= tol:
        nsteps, cur = 2, s2
    else:
        nsteps = min(max(int(np.ceil(2.0 * (err / tol) ** 0.25)), 2), max_steps)
        cur = integrate(0.0, 1.0, nsteps)
        check = integrate(0.0, 1.0, 2 * nsteps)
        err = float(np.max(np.abs(check - cur))) / 15.0
        cur = check
        nsteps *= 2
        if err > tol:
            raise IntegrationFailure(
                f"Dacorogna-Moser did not reach tolerance {tol} at {nsteps} steps", error=err
            )
    fwd = cur
    inv = integrate(1.0, 0.0, nsteps)
    return np.moveaxis(fwd, -1, 0).reshape(3, -1), np.moveaxis(inv, -1, 0).reshape(3, -1), {
        "dm_steps": nsteps,
        "dm_pilot_error": err,
    }


def compose(outer, inner):
    """outer after inner, as a single displacement field."""
    n = inner.n
    pts = grid_points(n)
    mid = pts + np.moveaxis(inner.displacement.values, 0, -1)
    out = outer(mid)
    disp = GridField(np.moveaxis(out - pts, -1, 0).copy(), "vector")
    inv = None
    if inner.has_inverse() and outer.has_inverse():
        mid_inv = outer.inverse(pts)
        back = inner.inverse(mid_inv)
        inv = GridField(np.moveaxis(back - pts, -1, 0).copy(), "vector")
    return DiffeoMap(n=n, displacement=disp, inverse_displacement=inv)


def invert_map(dmap, tol=1e-12, maxit=200):
    """Inverse displacement by per-point Picard iteration y <- x - d(y)."""
    n = dmap.n
    pts = grid_points(n)
    interp = dmap._displacement_interp()
    y = pts.copy()
    for it in range(maxit):
        d = np.moveaxis(interp(y), 0, -1)
        ynew = pts - d
        delta = float(np.max(np.abs(ynew - y)))
        y = ynew
        if delta <= tol:
            break
    else:
        raise IterationLimit(f"map inversion did not converge (last update {delta:.2e})")
    dmap.inverse_displacement = GridField(np.moveaxis(y - pts, -1, 0).copy(), "vector")
    dmap._interp_inv = None
    dmap.diagnostics["inverse_iterations"] = it + 1
    return dmap


def pushforward(v, dmap, project=True, interp_params=(2, 7)):
    """(D phi . v) of phi^{-1}: transport of a vector field by the map.

    The measured divergence of the result (before any projection) is
    returned in the diagnostics; with project=True the result is Leray
    projected, which only moves it by the interpolation error.
    """
    if not dmap.has_inverse():
        raise FieldError("pushforward needs a map with an inverse")
    n = dmap.n
    jac = displacement_jacobian(dmap)
    w = np.empty_like(v.values)
    for i in range(3):
        w[i] = v.values[i] + sum(jac[i, j] * v.values[j] for j in range(3))
    os_, order = interp_params
    wi = FieldInterpolant(GridField(w, "vector"), oversample=os_, order=order)
    pts = grid_points(n)
    y = dmap.inverse(pts)
    vals = wi(y.reshape(-1, 3)).reshape(3, n, n, n)
    out = GridField(vals, "vector")
    from .grid import divergence

    div_raw = divergence(out).sup_norm()
    if project:
        out = leray_project(out)
    out_div = divergence(out).sup_norm()
    return out, {"div_raw": div_raw, "div_final": out_div}


def constant_shear_map(n, zeta, phase_wavevector, amplitude):
    """Exactly volume-preserving single-mode shear x + A zeta sin(2 pi p.x).

    Needs p.zeta = 0 (integer p for periodicity); then det(D phi) = 1 at
    every point, the phase is invariant and the inverse is the same map
    with -A.  Used as the constant-amplitude single-cube control and as
    the small conjugation of the rotation-number invariance check.
    """
    zeta = np.asarray(zeta, dtype=float)
    p = np.asarray(phase_wavevector, dtype=float)
    if abs(np.dot(p, zeta)) > 1e-14:
        raise PreconditionError("phase wavevector must be orthogonal to zeta")

    def fwd(x):
        x = np.asarray(x, dtype=float)
        ph = 2.0 * np.pi * (x @ p)
        return x + amplitude * np.sin(ph)[..., None] * zeta

    def bwd(x):
        x = np.asarray(x, dtype=float)
        ph = 2.0 * np.pi * (x @ p)
        return x - amplitude * np.sin(ph)[..., None] * zeta

    pts = grid_points(n)
    disp = GridField(np.moveaxis(fwd(pts) - pts, -1, 0).copy(), "vector")
    idisp = GridField(np.moveaxis(bwd(pts) - pts, -1, 0).copy(), "vector")
    return DiffeoMap(n=n, displacement=disp, inverse_displacement=idisp,
                     closed_form=fwd, closed_form_inverse=bwd)


def holder_probe_map(dmap, rng=None):
    """Roundtrip and volume probes used by reports."""
    rng = rng or rng_for(0, "diffeo-probe")
    out = {"roundtrip": dmap.roundtrip_error(rng)} if dmap.has_inverse() else {}
    if dmap.jac_det_stats:
        out.update({f"det_{k}": v for k, v in dmap.jac_det_stats.items()})
    return out
