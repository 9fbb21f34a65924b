"""One oscillatory stage end to end: ledger, support, cancellation, potentials."""

from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from eulerci.diffeo import DiffeoMap
from eulerci.geometry import orthonormal_completion
from eulerci.grid import GridField, grid_points, leray_project
from eulerci.norms import lp_chi, max_band
from eulerci.oscillation import StageCell
from eulerci.schedule import ScheduleConfig, StageIndex, stage_params
from eulerci.stage import (
    StageContext,
    StageTolerances,
    Subsolution,
    build_w0,
    gamma_squared_field,
    h_minus1_potentials,
    oscillation_errors,
    pairing_identity_gap,
    run_stage,
    subsolution_residual,
)

TWO_PI = 2.0 * np.pi


def shear_subsolution(n, scale=0.1):
    """Exact-identity initial subsolution from the constant-speed shear."""
    v = GridField.from_callable(
        n,
        lambda x, y, z: np.stack([scale * np.sin(TWO_PI * z), scale * np.cos(TWO_PI * z), 0 * x]),
        rank="vector",
    )
    speed2 = np.sum(v.values**2, axis=0)
    p = GridField(-speed2)
    rvals = np.stack([
        v.values[i] * v.values[j] for (i, j) in ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
    ])
    for k, (i, j) in enumerate(((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))):
        if i == j:
            rvals[k] -= speed2
    r = GridField(rvals, "symmatrix")
    sub = Subsolution(v=v, p=p, R=r)
    sub.recompute_residual()
    return sub


def controlled_params(n=64, lam=2 * np.pi * 12.0, mu=4, eta=None, ell=0.5, q=0):
    """A ScheduleParams clone with overridden frequencies for controlled tests."""
    cfg = ScheduleConfig(a=4.0, alpha=0.01, grid_n=n)
    base = stage_params(StageIndex(q, 0, 0), cfg)
    return replace(base, lam=float(lam), mu=float(mu),
                   eta=eta if eta is not None else 0.6 * float(lam), ell=ell)


def one_cell(center=(0.5, 0.5, 0.5), zeta=(0.0, 0.0, 1.0)):
    return [StageCell(center=np.asarray(center, float), zeta=np.asarray(zeta, float),
                      amp_const=1.0, ell=0.0)]


def gamma_plateau(n, center, width):
    pts = grid_points(n)
    y = pts - np.asarray(center)
    y -= np.round(y)
    r2 = np.sum((y / width) ** 2, axis=-1)
    return GridField(np.where(r2 < 1.0, np.exp(1.0 - 1.0 / np.maximum(1.0 - r2, 1e-12)), 0.0))


class TestRunStage:
    def test_zero_gamma_is_identity(self):
        n = 32
        sub = shear_subsolution(n)
        params = controlled_params(n=n)
        ctx = StageContext(n)
        phi = DiffeoMap.identity(n)
        g = GridField.zeros(n)
        phi2, sub2, rep = run_stage(phi, sub, one_cell(), params, ctx, g_field=g,
                                    hypothesis_checks=False)
        assert (sub2.v - sub.v).sup_norm() <= 1e-14
        assert (sub2.R - sub.R).sup_norm() <= 1e-13
        assert phi2.displacement.sup_norm() <= 1e-14
        assert rep.amp_scale == 1.0 or rep.w0_c0 == 0.0

    def test_generic_stage_ledger(self):
        n = 64
        sub = shear_subsolution(n)
        res0 = sub.residual
        params = controlled_params(n=n)
        ctx = StageContext(n)
        phi = DiffeoMap.identity(n)
        g = gamma_plateau(n, (0.5, 0.5, 0.5), 0.2)
        phi2, sub2, rep = run_stage(phi, sub, one_cell(), params, ctx, g_field=g,
                                    hypothesis_checks=False)
        assert rep.amp_scale < 1.0  # auto budget engaged
        assert rep.kappa < 0.5
        assert rep.fp_residual <= 1e-10
        assert rep.det_gap <= 1e-5
        # the defining relation: new subsolution residual stays at the old level
        assert sub2.residual <= max(2 * res0, 1e-5 * (1.0 + sub2.v.sup_norm() ** 2))
        # something actually happened
        assert (sub2.v - sub.v).sup_norm() > 0
        assert rep.w0_c0 > 0

    def test_outside_region_unchanged(self):
        n = 64
        sub = shear_subsolution(n)
        params = controlled_params(n=n, ell=0.4)
        ctx = StageContext(n)
        phi = DiffeoMap.identity(n)
        g = gamma_plateau(n, (0.5, 0.5, 0.5), 0.12)
        phi2, sub2, rep = run_stage(phi, sub, one_cell(), params, ctx, g_field=g,
                                    hypothesis_checks=False)
        assert rep.support_leak <= 1e-6

    def test_w0_bound_and_identity(self):
        n = 64
        params = controlled_params(n=n)
        sub = shear_subsolution(n)
        ctx = StageContext(n)
        g = gamma_plateau(n, (0.5, 0.5, 0.5), 0.2)
        phi2, sub2, rep = run_stage(DiffeoMap.identity(n), sub, one_cell(), params, ctx,
                                    g_field=g, hypothesis_checks=False)
        # ||w_0||_0 <= 16 sqrt(2) ||gamma||_0 (8-overlap bound), amplitudes scaled
        gmax = g.sup_norm() * rep.amp_scale
        assert rep.w0_c0 <= 16.0 * np.sqrt(2.0) * gmax * (1 + 1e-9)

    def test_pairing_identity_and_hminus1(self):
        # resolved controlled config: carrier 16 cycles, wide gamma, mu=2,
        # so the potentials' fields are genuinely band-limited
        n = 128
        params = controlled_params(n=n, lam=TWO_PI * 16.0, mu=2, eta=TWO_PI * 2.0)
        sub = shear_subsolution(n)
        ctx = StageContext(n)
        g = gamma_plateau(n, (0.25, 0.25, 0.25), 0.3)
        _, _, rep = run_stage(DiffeoMap.identity(n), sub,
                              one_cell(center=(0.25, 0.25, 0.25)), params, ctx,
                              g_field=g, hypothesis_checks=False)
        assert rep.pairing_gap <= 1e-7
        assert rep.hminus1_bounded

    def test_contraction_failure_with_forced_amplitude(self):
        from eulerci.errors import ContractionFailure

        n = 32
        params = controlled_params(n=n, mu=8, lam=2 * np.pi * 8.0, eta=2.0)
        sub = shear_subsolution(n)
        ctx = StageContext(n)
        g = gamma_plateau(n, (0.5, 0.5, 0.5), 0.2)
        with pytest.raises(ContractionFailure):
            run_stage(DiffeoMap.identity(n), sub, one_cell(), params, ctx, g_field=g,
                      hypothesis_checks=False, amplitude_scale=1.0)


class TestCancellation:
    def build(self, n=128, lam_cycles=48.0, width=0.12):
        # single active cube: mu=2 lattice centers sit at multiples of 1/2;
        # gamma inside the plateau of the (0,0,0) cube, whose parity weight
        # is 1, so the oscillation carries the full frequency
        params = controlled_params(n=n, lam=TWO_PI * lam_cycles, mu=2, eta=TWO_PI * 2.0)
        g = gamma_plateau(n, (0.0, 0.0, 0.0), width)
        cells = one_cell(center=(0.0, 0.0, 0.0))
        sub = shear_subsolution(n)
        ctx = StageContext(n)
        ctx.refresh_velocity(sub.v)
        from eulerci.oscillation import build_oscillation_field

        osc = build_oscillation_field(cells, params, g, ctx.velocity_at, frame_threshold=0.0)
        osc.rescale_amplitude(0.5)  # arbitrary; identities are scale-free
        return osc, params, g, sub

    def test_sum_b_squared_is_two_gamma_squared(self):
        osc, params, g, _ = self.build()
        n = 128
        gsq = gamma_squared_field(osc, n)
        target = (g.values * 0.5) ** 2
        assert np.max(np.abs(gsq.values - target)) <= 1e-10

    def test_low_frequency_cancellation(self):
        osc, params, g, _ = self.build()
        n = 128
        w0 = build_w0(osc, n)
        gsq = gamma_squared_field(osc, n)
        w0w0 = np.stack([
            w0.values[i] * w0.values[j]
            for (i, j) in ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
        ])
        zeta = np.array([0.0, 0.0, 1.0])
        zz = np.array([zeta[i] * zeta[j] for (i, j) in ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))])
        target = gsq.values[None] * zz[:, None, None, None]
        # P_low cutting below lam/2: smooth multiplier at |k| < lam_cycles/2
        cut = 48.0 / 2.0
        field = GridField(w0w0 - target, "symmatrix")
        spec = field.spectral()
        from eulerci.grid import wavenumbers

        k1, k2, k3 = wavenumbers(n)
        mod = np.sqrt(k1**2 + k2**2 + k3**2)
        mult = lp_chi(mod / cut * (4.0 / 3.0))  # 1 below ~0.75 cut, 0 above ~4/3 cut
        low = GridField.from_spectral(spec * mult, n, "symmatrix")
        assert low.sup_norm() <= 0.05 * np.max(np.abs(gsq.values))

    def test_oscillation_error_identities(self):
        # the finite-difference closed-form oracle verifies the defining
        # identities pointwise; the spectral version of the same gap is
        # profile-tail limited and only reported
        osc, params, g, sub = self.build()
        n = 128
        w0 = build_w0(osc, n)
        out = oscillation_errors(osc, sub.v, w0.values, n, params)
        assert out["rho1_identity"] <= 1e-6
        assert out["rho2_identity"] <= 1e-6
        assert out["rho1_identity_spectral"] <= 0.05
        assert out["rho2_identity_spectral"] <= 0.05

    def test_m3_vanishes_for_locally_constant_velocity(self):
        osc, params, g, _ = self.build()
        n = 64
        pts = grid_points(n).reshape(-1, 3)
        u = osc.cube_data[0, 16:19]
        vconst = np.tile(u[:, None], (1, len(pts)))
        m3 = osc.m3(pts, vconst)
        assert np.max(np.abs(m3)) <= 1e-14


class TestStandaloneOps:
    def test_residual_of_exact_subsolution(self):
        sub = shear_subsolution(32)
        assert sub.residual <= 1e-12

    def test_potentials_zero_stage(self):
        osc, params, g, _ = TestCancellation().build(n=64)
        osc.rescale_amplitude(0.0)
        n = 64
        w = GridField.zeros(n, "vector")
        a, b_rows, gap = h_minus1_potentials(osc, w, n, wc_vals=np.zeros((3, n, n, n)))
        assert a.sup_norm() == 0.0
        assert all(r.sup_norm() == 0.0 for r in b_rows)
        assert gap == 0.0

    def test_potentials_formula_gap_reported(self):
        osc, params, g, sub = TestCancellation().build(n=128)
        n = 128
        w0 = build_w0(osc, n)
        # take w = w0 (a zero-w_c stage surrogate): the grid-consistent A
        # differs from the closed-form A by the profile sampling tail only
        a, b_rows, gap = h_minus1_potentials(osc, w0, n, wc_vals=np.zeros((3, n, n, n)))
        assert gap is not None
        assert gap <= 1e-3 * max(w0.sup_norm(), 1e-300)
