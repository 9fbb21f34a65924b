"""Spectral calculus and off-grid evaluation on the periodic grid."""

import numpy as np
import pytest

from eulerci.errors import FieldError
from eulerci.grid import (
    FieldInterpolant,
    GridField,
    direct_fourier_eval,
    divergence,
    evaluate_offgrid,
    gradient,
    leray_project,
    outer,
    resample,
    spectral_derivative,
)

TWO_PI = 2.0 * np.pi


def random_bandlimited(n, kmax, rng, rank="scalar"):
    ncomp = {"scalar": 1, "vector": 3}[rank]
    spec = np.zeros((ncomp, n, n, n), dtype=complex)
    k = np.fft.fftfreq(n, 1.0 / n).astype(int)
    mask = (np.abs(k[:, None, None]) <= kmax) & (np.abs(k[None, :, None]) <= kmax) & (np.abs(k[None, None, :]) <= kmax)
    for c in range(ncomp):
        re = rng.standard_normal((n, n, n))
        im = rng.standard_normal((n, n, n))
        spec[c][mask] = (re + 1j * im)[mask]
    vals = np.real(np.fft.ifftn(spec, axes=(1, 2, 3)))
    vals /= max(np.max(np.abs(vals)), 1e-30)
    if rank == "scalar":
        return GridField(vals[0])
    return GridField(vals, "vector")


class TestSpectralDerivative:
    def test_constant_has_zero_derivative(self):
        f = GridField(np.full((32, 32, 32), 3.0))
        df = spectral_derivative(f, (1, 0, 0))
        assert df.sup_norm() <= 1e-12

    def test_single_mode_identity(self):
        f = GridField.from_callable(32, lambda x, y, z: np.sin(TWO_PI * x))
        df = spectral_derivative(f, (1, 0, 0))
        ref = GridField.from_callable(32, lambda x, y, z: TWO_PI * np.cos(TWO_PI * x))
        assert (df - ref).sup_norm() <= 1e-12 * TWO_PI

    def test_mixed_derivative_matches_analytic(self):
        # oracle: differentiate cos(2 pi x) cos(4 pi y) by hand
        f = GridField.from_callable(32, lambda x, y, z: np.cos(TWO_PI * x) * np.cos(2 * TWO_PI * y))
        df = spectral_derivative(f, (1, 1, 0))
        rng = np.random.default_rng(7)
        pts = rng.uniform(0, 1, (10, 3))
        expected = (
            (-TWO_PI * np.sin(TWO_PI * pts[:, 0]))
            * (-2 * TWO_PI * np.sin(2 * TWO_PI * pts[:, 1]))
        )
        got = direct_fourier_eval(df, pts)
        assert np.max(np.abs(got - expected)) <= 1e-10

    def test_linearity(self):
        rng = np.random.default_rng(0)
        f = random_bandlimited(32, 8, rng)
        g = random_bandlimited(32, 8, rng)
        a, b = 1.7, -0.4
        lhs = spectral_derivative(GridField(a * f.values + b * g.values), (0, 2, 1))
        rhs = a * spectral_derivative(f, (0, 2, 1)) + b * spectral_derivative(g, (0, 2, 1))
        scale = max(rhs.sup_norm(), 1.0)
        assert (lhs - rhs).sup_norm() <= 1e-12 * scale

    def test_order_limit(self):
        f = GridField.zeros(32)
        with pytest.raises(FieldError):
            spectral_derivative(f, (5, 4, 0))

    def test_roundtrip_physical_spectral(self):
        rng = np.random.default_rng(3)
        f = random_bandlimited(32, 15, rng)
        back = GridField.from_spectral(f.spectral(), f.n, f.rank)
        assert (back - f).sup_norm() <= 1e-12 * max(1.0, f.sup_norm())


class TestDivergence:
    def test_identity_matrix_field(self):
        vals = np.zeros((6, 32, 32, 32))
        vals[0] = vals[3] = vals[5] = 1.0
        s = GridField(vals, "symmatrix")
        assert divergence(s).sup_norm() <= 1e-13

    def test_single_mode_vector(self):
        v = GridField.from_callable(
            32, lambda x, y, z: np.stack([np.sin(TWO_PI * x), 0 * x, 0 * x]), rank="vector"
        )
        d = divergence(v)
        ref = GridField.from_callable(32, lambda x, y, z: TWO_PI * np.cos(TWO_PI * x))
        assert (d - ref).sup_norm() <= 1e-11

    def test_matrix_divergence_vs_finite_difference(self):
        # 4th-order centered finite differences as the independent oracle
        n = 64
        z = GridField.from_callable(
            n, lambda x, y, z_: np.stack([np.cos(TWO_PI * y), 0 * x, 0 * x]), rank="vector"
        )
        s = outer(z.values, z.values)
        d = divergence(s)
        h = 1.0 / n
        fd = np.zeros((3, n, n, n))
        for i in range(3):
            comp_i = s.component  # noqa: B023 - direct loop use
            for j, ax in enumerate(range(3)):
                c = s.component(i, j)
                fd[i] += (
                    -np.roll(c, -2, axis=ax)
                    + 8 * np.roll(c, -1, axis=ax)
                    - 8 * np.roll(c, 1, axis=ax)
                    + np.roll(c, 2, axis=ax)
                ) / (12 * h)
        assert np.max(np.abs(d.values - fd)) <= 1e-8 * max(1.0, d.sup_norm())

    def test_scalar_rejected(self):
        with pytest.raises(FieldError):
            divergence(GridField.zeros(32))


class TestOffgrid:
    def test_constant(self):
        f = GridField(np.full((32, 32, 32), 5.0))
        vals = evaluate_offgrid(f, np.array([[0.123, 0.77, 0.31]]))
        assert abs(vals[0] - 5.0) <= 1e-12

    def test_single_mode_value(self):
        f = GridField.from_callable(32, lambda x, y, z: np.sin(TWO_PI * z))
        vals = evaluate_offgrid(f, np.array([[0.5, 0.5, 0.25]]))
        assert abs(vals[0] - 1.0) <= 1e-9

    def test_bandlimited_against_direct_sum(self):
        # spec contract: modes <= N/8, 1000 random points, error <= 1e-8
        n = 64
        rng = np.random.default_rng(11)
        f = random_bandlimited(n, n // 8, rng)
        pts = rng.uniform(0, 1, (1000, 3))
        exact = direct_fourier_eval(f, pts)
        approx = evaluate_offgrid(f, pts, oversample=2, order=7)
        assert np.max(np.abs(approx - exact)) <= 1e-8

    def test_wraps_points(self):
        f = GridField.from_callable(32, lambda x, y, z: np.cos(TWO_PI * x))
        a = evaluate_offgrid(f, np.array([[0.25, 0.5, 0.5]]))
        b = evaluate_offgrid(f, np.array([[1.25, 0.5, 0.5]]))
        assert abs(a[0] - b[0]) <= 1e-12

    def test_grid_nodes_reproduced(self):
        rng = np.random.default_rng(5)
        f = random_bandlimited(32, 15, rng)
        interp = FieldInterpolant(f, oversample=1, order=5)
        idx = rng.integers(0, 32, (50, 3))
        pts = idx / 32.0
        vals = interp(pts)
        ref = f.values[idx[:, 0], idx[:, 1], idx[:, 2]]
        assert np.max(np.abs(vals - ref)) <= 1e-11


class TestLerayAndResample:
    def test_leray_kills_gradient_part(self):
        rng = np.random.default_rng(2)
        v = random_bandlimited(32, 6, rng, rank="vector")
        p = leray_project(v)
        assert divergence(p).sup_norm() <= 1e-10 * max(1.0, v.sup_norm())
        assert divergence(leray_project(p)).sup_norm() <= 1e-12 * max(1.0, v.sup_norm())

    def test_resample_roundtrip(self):
        rng = np.random.default_rng(4)
        f = random_bandlimited(32, 10, rng)
        up = resample(f, 64)
        down = resample(up, 32)
        assert (down - f).sup_norm() <= 1e-11

    def test_resample_preserves_samples(self):
        f = GridField.from_callable(32, lambda x, y, z: np.cos(TWO_PI * 3 * x) * np.sin(TWO_PI * y))
        up = resample(f, 64)
        assert np.max(np.abs(up.values[::2, ::2, ::2] - f.values)) <= 1e-11

    def test_gradient_of_product(self):
        f = GridField.from_callable(32, lambda x, y, z: np.sin(TWO_PI * x) * np.cos(TWO_PI * z))
        g = gradient(f)
        ref0 = GridField.from_callable(32, lambda x, y, z: TWO_PI * np.cos(TWO_PI * x) * np.cos(TWO_PI * z))
        assert np.max(np.abs(g.values[0] - ref0.values)) <= 1e-11
