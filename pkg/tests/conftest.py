"""Shared stage-construction helpers for the test suite."""

from types import SimpleNamespace

import numpy as np
import pytest

from eulerci.grid import GridField, grid_points
from eulerci.oscillation import StageCell, build_oscillation_field


def gamma_bump(n, center=(0.5, 0.5, 0.5), width=0.22, amp=1.0):
    """Smooth compactly supported amplitude field."""
    pts = grid_points(n)
    y = pts - np.asarray(center)
    y -= np.round(y)
    r2 = np.sum((y / width) ** 2, axis=-1)
    vals = np.where(r2 < 1.0, np.exp(1.0 - 1.0 / np.maximum(1.0 - r2, 1e-12)), 0.0)
    return GridField(amp * vals)


def simple_stage(n=64, mu=8, eta=20.0, lam=32.0, amp="auto", gamma=None,
                 zeta=(0.0, 0.0, 1.0), u_const=(1.0, 0.0, 0.0), center=(0.5, 0.5, 0.5),
                 kappa_target=0.01, disp_target=2e-7):
    """A one-cell stage with constant anchor velocity and a bump amplitude.

    amp="auto" budgets the amplitude like production: contraction below
    kappa_target and displacement below disp_target (which keeps the
    spectral det-consistency error of the sampled map ~8x smaller).
    Returns (oscillation field, params namespace, gamma field).
    """
    params = SimpleNamespace(mu=float(mu), eta=float(eta), lam=float(lam), ell=0.5)
    g = gamma_bump(n, center=center) if gamma is None else gamma
    cell = StageCell(center=np.asarray(center, dtype=float), zeta=np.asarray(zeta, dtype=float),
                     amp_const=1.0, ell=0.0)
    u = np.asarray(u_const, dtype=float)

    def anchor_velocity(pts):
        return np.tile(u[:, None], (1, len(np.asarray(pts).reshape(-1, 3))))

    osc = build_oscillation_field([cell], params, g, anchor_velocity,
                                  frame_threshold=1e-8,
                                  amp_scale=1.0 if amp == "auto" else amp)
    if amp == "auto":
        from eulerci.diffeo import measure_kappa
        from eulerci.grid import grid_points

        kap = measure_kappa(osc, n, stride=2)
        disp = np.max(np.abs(osc.psi_displacement(
            grid_points(n)[::2, ::2, ::2].reshape(-1, 3))))
        c = min(1.0, kappa_target / max(kap, 1e-30), disp_target / max(disp, 1e-30))
        osc.rescale_amplitude(c)
    return osc, params, g


@pytest.fixture(scope="session")
def stage64():
    return simple_stage(n=64)
