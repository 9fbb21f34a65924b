"""Partitions, frames, the geometric lemma, cutoffs."""

import numpy as np
import pytest

from eulerci.errors import DegenerateFrame, OutsideBall, PreconditionError, UnresolvableScale
from eulerci.geometry import (
    WEIGHT_POOL,
    AdaptedFrame,
    adapted_frame,
    build_squared_partition,
    color_of,
    cutoff_profile,
    default_profile,
    eight_coloring,
    geometric_decomposition,
    orthonormal_completion,
    region_cutoff,
    RoundedCube,
)


class TestSquaredPartition:
    def test_telescoping_1d(self):
        part = build_squared_partition(0.1, list(range(-2, 13)), dim=1)
        ts = np.linspace(0.0, 1.0, 10_000) * 1.0
        total = part.sum_of_squares(ts)
        inner = (ts > 0.05) & (ts < 0.95)  # members cover this window fully
        assert np.max(np.abs(total[inner] - 1.0)) <= 1e-10

    def test_telescoping_3d(self):
        members = [(i, j, k) for i in range(-1, 3) for j in range(-1, 3) for k in range(-1, 3)]
        part = build_squared_partition(0.25, members, dim=3)
        rng = np.random.default_rng(0)
        pts = rng.uniform(0.1, 0.4, (2000, 3))
        total = part.sum_of_squares(pts)
        assert np.max(np.abs(total - 1.0)) <= 1e-10

    def test_overlapping_members_have_distinct_weights(self):
        members = [(i, j, k) for i in range(3) for j in range(3) for k in range(3)]
        part = build_squared_partition(0.1, members, dim=3)
        for m1 in members:
            for m2 in members:
                if m1 != m2 and part.supports_overlap(m1, m2):
                    assert part.weights[m1] != part.weights[m2]

    def test_weights_from_dyadic_pool(self):
        members = [(i, j, k) for i in range(4) for j in range(2) for k in range(2)]
        part = build_squared_partition(0.1, members, dim=3)
        assert set(part.weights.values()) <= set(WEIGHT_POOL)

    def test_at_most_eight_active(self):
        members = [(i, j, k) for i in range(-1, 4) for j in range(-1, 4) for k in range(-1, 4)]
        part = build_squared_partition(0.2, members, dim=3)
        rng = np.random.default_rng(5)
        pts = rng.uniform(0, 0.6, (500, 3))
        for p in pts:
            active = sum(1 for m in members if part.value(m, p) > 0)
            assert active <= 8

    def test_unresolvable_scale_rejected(self):
        with pytest.raises(UnresolvableScale):
            build_squared_partition(1.0 / 64.0, [(0, 0, 0)], dim=3, grid_n=64)


class TestEightColoring:
    def test_parity_classes(self):
        assert color_of((0, 0, 0)) == color_of((2, 0, 0))
        assert color_of((0, 0, 0)) != color_of((1, 0, 0))

    def test_same_class_disjoint_exhaustive(self):
        members = [(i, j, k) for i in range(6) for j in range(6) for k in range(6)]
        classes = eight_coloring(members)
        part = build_squared_partition(0.05, members, dim=3)
        for cls in classes.values():
            for a in cls:
                for b in cls:
                    if a != b:
                        assert not part.supports_overlap(a, b)


class TestAdaptedFrame:
    def test_axis_aligned(self):
        fr = adapted_frame(np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]))
        # k = u x zeta / |.| = (0,-1,0); xi = zeta x k
        assert np.allclose(fr.k, [0.0, -1.0, 0.0], atol=1e-12)
        assert np.allclose(fr.xi, np.cross(fr.zeta, fr.k), atol=1e-12)
        assert abs(abs(fr.denom) - 1.0) <= 1e-12
        for a, b in (("k", "xi"), ("k", "zeta"), ("xi", "zeta")):
            assert abs(np.dot(getattr(fr, a), getattr(fr, b))) <= 1e-12
        assert abs(np.dot(fr.u, fr.k)) <= 1e-12

    def test_denominator_identity(self):
        # |u . xi| = |u x zeta| whenever the frame exists
        rng = np.random.default_rng(3)
        for _ in range(50):
            u = rng.standard_normal(3)
            zeta = rng.standard_normal(3)
            zeta /= np.linalg.norm(zeta)
            if np.linalg.norm(np.cross(u, zeta)) < 1e-3:
                continue
            fr = adapted_frame(u, zeta)
            assert abs(abs(fr.denom) - np.linalg.norm(np.cross(u, zeta))) <= 1e-10

    def test_unit_anchor_diagonal(self):
        u = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
        fr = adapted_frame(u, np.array([0.0, 0.0, 1.0]))
        assert abs(abs(fr.denom) - 1.0) <= 1e-12

    def test_parallel_rejected(self):
        with pytest.raises(DegenerateFrame):
            adapted_frame(np.array([0.0, 0.0, 2.0]), np.array([0.0, 0.0, 1.0]), anchor=(1, 2, 3))

    def test_orthonormal_completion(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            v = rng.standard_normal(3)
            z0, z1 = orthonormal_completion(v)
            vv = v / np.linalg.norm(v)
            g = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
            m = np.stack([vv, z0, z1])
            assert np.max(np.abs(m @ m.T - g)) <= 1e-12


class TestGeometricLemma:
    def _decomp(self):
        v = np.array([0.0, 0.0, 1.0])
        z0, z1 = orthonormal_completion(v)
        return geometric_decomposition(v, z0, z1)

    def test_identity_coefficients_are_half(self):
        dec = self._decomp()
        gammas = dec.gammas(np.eye(3))
        assert np.max(np.abs(gammas**2 - 0.5)) <= 1e-12

    def test_reconstruction_small_perturbation(self):
        dec = self._decomp()
        s = np.eye(3) + 0.01 * np.outer(dec.zetas[0], dec.zetas[0])
        g = dec.gammas(s)
        assert np.max(np.abs(dec.reconstruct(g) - s)) <= 1e-12

    def test_far_matrix_rejected(self):
        dec = self._decomp()
        s = np.eye(3) + 10.0 * np.outer(dec.zetas[0], dec.zetas[0])
        with pytest.raises(OutsideBall):
            dec.gammas(s)

    def test_random_ball_reconstruction(self):
        dec = self._decomp()
        rng = np.random.default_rng(42)
        for _ in range(1000):
            e = rng.standard_normal((3, 3))
            e = 0.5 * (e + e.T)
            e /= np.max(np.abs(np.linalg.eigvalsh(e)))
            s = np.eye(3) + dec.r_geom * 0.999 * e
            g = dec.gammas(s)
            assert np.max(np.abs(dec.reconstruct(g) - s)) <= 1e-10

    def test_angles_between_45_and_90(self):
        dec = self._decomp()
        v = dec.anchor
        for z in dec.zetas:
            c = abs(np.dot(z, v))
            ang = np.degrees(np.arccos(np.clip(c, -1, 1)))
            assert 45.0 - 1e-9 <= ang <= 90.0 + 1e-9

    def test_nonorthonormal_rejected(self):
        with pytest.raises(PreconditionError):
            geometric_decomposition([0, 0, 1], [0, 1e-3, 1], [1, 0, 0])


class TestCutoffs:
    def test_cutoff_profile_range_and_sqrt_smooth(self):
        t = np.linspace(-1, 2, 2001)
        c = cutoff_profile(t)
        assert np.all((0 <= c) & (c <= 1))
        assert np.all(c[t <= 0] == 0) and np.all(c[t >= 1] == 1)
        root = np.sqrt(c)
        root1 = np.sqrt(1 - c)
        # smoothness proxy: bounded second difference of the roots
        h = t[1] - t[0]
        for r in (root, root1):
            d2 = np.abs(np.diff(r, 2)) / h**2
            assert np.max(d2) < 50.0

    def test_derivative_scaling_law(self):
        # Lemma A.1 analogue: ||chi_r||_N <= C_N r^{-N}, measured for N<=4.
        # C_N calibrated once at r=1 and frozen below.
        calib = {}
        tgrid = np.linspace(-0.5, 1.5, 1 << 14)
        h = tgrid[1] - tgrid[0]
        base = cutoff_profile(tgrid)
        d = base.copy()
        for n in range(1, 5):
            d = np.gradient(d, h)
            calib[n] = np.max(np.abs(d))
        for r in (0.5, 0.25, 0.125):
            vals = cutoff_profile(tgrid / r)
            d = vals.copy()
            for n in range(1, 5):
                d = np.gradient(d, h)
                assert np.max(np.abs(d)) <= 1.1 * calib[n] * r**-n

    def test_region_cutoff_levels(self):
        cube = RoundedCube(center=np.array([0.5, 0.5, 0.5]), half=0.1, margin=0.05)
        pts_in = np.array([[0.5, 0.5, 0.5], [0.55, 0.5, 0.5]])
        pts_out = np.array([[0.9, 0.1, 0.1]])
        sd_in = cube.signed_distance(pts_in)
        assert np.all(sd_in < 0)
        assert np.all(cube.signed_distance(pts_out) > 0)
        c = region_cutoff(cube.signed_distance(np.vstack([pts_in, pts_out])), width=0.05)
        assert np.all(c[:2] == 1.0) and c[2] == 0.0

    def test_rounded_cube_periodic_wrap(self):
        cube = RoundedCube(center=np.array([0.02, 0.5, 0.5]), half=0.1, margin=0.0)
        assert cube.contains(np.array([[0.97, 0.5, 0.5]]))[0]
