"""Cutoff partitions, cube lattices, adapted frames and the geometric lemma.

The squared-partition profile is the normalized smooth bump
f(t) = exp(-1/(1-(4t/3)^2)) on (-3/4, 3/4), turned into chi = f/sqrt(sum of
shifted f^2) so that sum_m chi(t-m)^2 = 1 exactly.  chi and chi' are
tabulated densely (the tables are what the stage kernels consume); the
table-interpolation error is ~1e-12, below every tolerance used here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFrame, FieldError, OutsideBall, PreconditionError, UnresolvableScale
from .norms import smoothstep

PROFILE_SUPPORT = 0.75  # half-width of the 1D bump
WEIGHT_POOL = tuple(2.0**-i for i in range(8))  # l_m in {1, 1/2, ..., 2^-7}
TABLE_SIZE = 16384


def _raw_bump(t):
    t = np.asarray(t, dtype=float)
    u = t / PROFILE_SUPPORT
    inside = np.abs(u) < 1.0
    out = np.zeros_like(t)
    uu = np.where(inside, u, 0.0)
    out[inside] = np.exp(-1.0 / (1.0 - uu[inside] ** 2))
    return out


def _raw_bump_derivative(t):
    t = np.asarray(t, dtype=float)
    u = t / PROFILE_SUPPORT
    inside = np.abs(u) < 1.0
    out = np.zeros_like(t)
    ui = np.where(inside, u, 0.0)
    f = np.zeros_like(t)
    f[inside] = np.exp(-1.0 / (1.0 - ui[inside] ** 2))
    out[inside] = f[inside] * (-2.0 * ui[inside] / (1.0 - ui[inside] ** 2) ** 2) / PROFILE_SUPPORT
    return out


class BumpProfile:
    """Tabulated sqrt-partition profile chi with sum_m chi(t-m)^2 = 1."""

    def __init__(self, table_size=TABLE_SIZE):
        ts = np.linspace(-PROFILE_SUPPORT, PROFILE_SUPPORT, table_size + 1)
        r = _raw_bump(ts)
        rm = _raw_bump(ts - 1.0)
        rp = _raw_bump(ts + 1.0)
        d = r**2 + rm**2 + rp**2
        self.chi_table = r / np.sqrt(d)
        dr = _raw_bump_derivative(ts)
        drm = _raw_bump_derivative(ts - 1.0)
        drp = _raw_bump_derivative(ts + 1.0)
        dd = 2.0 * (r * dr + rm * drm + rp * drp)
        self.dchi_table = dr / np.sqrt(d) - 0.5 * r * dd / d**1.5
        self.table_size = table_size
        self.step = 2.0 * PROFILE_SUPPORT / table_size

    def _interp(self, table, t):
        t = np.asarray(t, dtype=float)
        x = (t + PROFILE_SUPPORT) / self.step
        inside = (t > -PROFILE_SUPPORT) & (t < PROFILE_SUPPORT)
        xi = np.clip(x, 1.0, self.table_size - 2.0)
        i0 = np.floor(xi).astype(int)
        f = xi - i0
        # 4-point cubic (Lagrange) through neighbouring table nodes
        fm1 = table[i0 - 1]
        f0 = table[i0]
        f1 = table[i0 + 1]
        f2 = table[i0 + 2]
        w_m1 = -f * (f - 1.0) * (f - 2.0) / 6.0
        w_0 = (f * f - 1.0) * (f - 2.0) / 2.0
        w_1 = -f * (f + 1.0) * (f - 2.0) / 2.0
        w_2 = f * (f * f - 1.0) / 6.0
        vals = w_m1 * fm1 + w_0 * f0 + w_1 * f1 + w_2 * f2
        return np.where(inside, vals, 0.0)

    def chi(self, t):
        return self._interp(self.chi_table, t)

    def dchi(self, t):
        return self._interp(self.dchi_table, t)

    def chi3(self, x, y, z):
        return self.chi(x) * self.chi(y) * self.chi(z)


_PROFILE = None


def default_profile():
    global _PROFILE
    if _PROFILE is None:
        _PROFILE = BumpProfile()
    return _PROFILE


@dataclass
class SquaredPartition:
    """Scaled lattice of squared-bump cutoffs with interference weights."""

    scale: float
    dim: int
    members: list
    weights: dict
    profile: BumpProfile = field(default_factory=default_profile, repr=False)

    def value(self, m, points):
        """chi_m at points: chi(x/scale - m) componentwise product."""
        pts = np.asarray(points, dtype=float)
        if self.dim == 1:
            return self.profile.chi(pts / self.scale - m)
        t = pts / self.scale - np.asarray(m, dtype=float)
        return self.profile.chi(t[..., 0]) * self.profile.chi(t[..., 1]) * self.profile.chi(t[..., 2])

    def sum_of_squares(self, points):
        total = 0.0
        for m in self.members:
            total = total + self.value(m, points) ** 2
        return total

    def supports_overlap(self, m1, m2):
        d = np.max(np.abs(np.asarray(m1, dtype=float) - np.asarray(m2, dtype=float)))
        return d < 2.0 * PROFILE_SUPPORT


def assign_weights(members):
    """Greedy lexicographic assignment from the dyadic pool so neighbours differ."""
    weights = {}
    for m in sorted(members):
        used = set()
        ma = np.asarray(m, dtype=float)
        for m2, w in weights.items():
            if np.max(np.abs(ma - np.asarray(m2, dtype=float))) < 2.0 * PROFILE_SUPPORT:
                used.add(w)
        for w in WEIGHT_POOL:
            if w not in used:
                weights[m] = w
                break
        else:
            raise PreconditionError(f"weight pool exhausted at lattice member {m}")
    return weights


def build_squared_partition(scale, members, dim=3, grid_n=None):
    """Partition members chi_m at the given lattice scale with weights.

    `members` is the lattice index set (ints for dim=1, int triples for
    dim=3).  Rejects scales the grid cannot resolve (support < 4 cells).
    """
    if grid_n is not None and 2.0 * PROFILE_SUPPORT * scale < 4.0 / grid_n:
        raise UnresolvableScale(
            f"cutoff scale {scale} has support below 4 grid cells at N={grid_n}"
        )
    members = [m if dim == 1 else tuple(int(v) for v in m) for m in members]
    weights = assign_weights(members)
    return SquaredPartition(scale=scale, dim=dim, members=members, weights=weights)


def eight_coloring(members):
    """Partition lattice members into the 8 parity classes."""
    classes = {c: [] for c in range(8)}
    for m in members:
        c = (m[0] % 2) + 2 * (m[1] % 2) + 4 * (m[2] % 2)
        classes[c].append(m)
    return classes


def color_of(m):
    return (m[0] % 2) + 2 * (m[1] % 2) + 4 * (m[2] % 2)


# -- adapted frames -----------------------------------------------------


@dataclass
class AdaptedFrame:
    """Orthonormal frame adapted to the anchor velocity and stage direction."""

    u: np.ndarray  # anchor velocity v_J(mu^{-1} m)
    zeta: np.ndarray
    k: np.ndarray  # u x zeta normalized
    xi: np.ndarray  # zeta x k normalized
    denom: float  # u . xi, equals +-|u x zeta|


def adapted_frame(u, zeta, threshold=0.0, anchor=None):
    u = np.asarray(u, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    cross = np.cross(u, zeta)
    norm = float(np.linalg.norm(cross))
    if norm <= threshold or norm == 0.0:
        raise DegenerateFrame(
            f"|v_J x zeta| = {norm:.3e} <= threshold {threshold:.3e} at anchor {anchor}",
            anchor=anchor,
            cross_norm=norm,
        )
    k = cross / norm
    xi = np.cross(zeta, k)
    xi = xi / np.linalg.norm(xi)
    denom = float(np.dot(u, xi))
    return AdaptedFrame(u=u, zeta=zeta, k=k, xi=xi, denom=denom)


def orthonormal_completion(v):
    """Deterministic pair (zeta0, zeta1) orthogonal to v: Gram-Schmidt of the
    axis with the smallest |v| component."""
    v = np.asarray(v, dtype=float)
    vhat = v / np.linalg.norm(v)
    axis = int(np.argmin(np.abs(vhat)))
    e = np.zeros(3)
    e[axis] = 1.0
    z0 = e - np.dot(e, vhat) * vhat
    z0 = z0 / np.linalg.norm(z0)
    z1 = np.cross(vhat, z0)
    return z0, z1 / np.linalg.norm(z1)


# -- geometric decomposition lemma --------------------------------------

_RGEOM_SAMPLES = 2000
_RGEOM_SEED = 1234  # frozen calibration, not a run parameter


def _sym_from_vec(vec):
    xx, yy, zz, xy, xz, yz = vec
    return np.array([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])


def _vec_from_sym(s):
    return np.array([s[0, 0], s[1, 1], s[2, 2], s[0, 1], s[0, 2], s[1, 2]])


@dataclass
class GeomDecomposition:
    """Six rank-one directions spanning symmetric matrices near Id."""

    zetas: np.ndarray  # (6,3) unit vectors
    basis_inv: np.ndarray  # (6,6) inverse of x -> sum x_j zeta_j zeta_j^T
    r_geom: float
    anchor: np.ndarray

    def coordinates(self, s):
        return self.basis_inv @ _vec_from_sym(np.asarray(s, dtype=float))

    def gammas(self, s):
        """Gamma_j(S): positive square roots of the six linear coordinates."""
        s = np.asarray(s, dtype=float)
        dev = s - np.eye(3)
        opnorm = float(np.max(np.abs(np.linalg.eigvalsh(dev))))
        if opnorm > self.r_geom:
            raise OutsideBall(
                f"matrix at operator distance {opnorm:.3e} from Id exceeds r_geom {self.r_geom:.3e}",
                distance=opnorm,
            )
        coords = self.coordinates(s)
        if np.any(coords < 0.25 - 1e-12):
            raise OutsideBall(
                f"coordinate {float(np.min(coords)):.3e} below the positivity floor 1/4",
                coords=coords,
            )
        return np.sqrt(coords)

    def reconstruct(self, gammas):
        s = np.zeros((3, 3))
        for g, z in zip(gammas, self.zetas):
            s += g**2 * np.outer(z, z)
        return s


def geometric_decomposition(anchor_v, zeta1, zeta2):
    v = np.asarray(anchor_v, dtype=float)
    z1 = np.asarray(zeta1, dtype=float)
    z2 = np.asarray(zeta2, dtype=float)
    gram = np.array([[np.dot(a, b) for b in (v, z1, z2)] for a in (v, z1, z2)])
    if np.max(np.abs(gram - np.eye(3))) > 1e-10:
        raise PreconditionError(
            f"(v, zeta1, zeta2) not orthonormal; Gram deviation {np.max(np.abs(gram - np.eye(3))):.2e}"
        )
    half = 0.5 * (z1 + z2)
    half2 = 0.5 * (z1 - z2)
    vs = v / np.sqrt(2.0)
    zetas = np.stack([z1, z2, vs + half, vs - half, vs + half2, vs - half2])
    basis = np.stack([_vec_from_sym(np.outer(z, z)) for z in zetas], axis=1)
    basis_inv = np.linalg.inv(basis)
    r = _calibrate_r_geom(basis_inv)
    return GeomDecomposition(zetas=zetas, basis_inv=basis_inv, r_geom=r, anchor=v)


def _calibrate_r_geom(basis_inv):
    """Largest r keeping all six coordinates of Id + rE >= 1/4 over a seeded
    sphere of unit-operator-norm symmetric E, halved for safety."""
    rng = np.random.default_rng(_RGEOM_SEED)
    id_coords = basis_inv @ _vec_from_sym(np.eye(3))
    r_best = np.inf
    for _ in range(_RGEOM_SAMPLES):
        e = rng.standard_normal((3, 3))
        e = 0.5 * (e + e.T)
        e /= np.max(np.abs(np.linalg.eigvalsh(e)))
        coords = basis_inv @ _vec_from_sym(e)
        neg = coords[coords < 0]
        if neg.size:
            # id_coords are all 1/2; room to the 1/4 floor is 1/4
            r_e = float(np.min((id_coords[coords < 0] - 0.25) / (-neg)))
            r_best = min(r_best, r_e)
    return 0.5 * r_best


# -- regions and scalar cutoffs -----------------------------------------


@dataclass
class RoundedCube:
    """Cube + margin region on the torus: Q = center +- half, U = Q + B(0,margin)."""

    center: np.ndarray
    half: float
    margin: float = 0.0

    def signed_distance(self, points):
        """Positive outside U, negative inside; periodic."""
        d = np.asarray(points, dtype=float) - np.asarray(self.center, dtype=float)
        d -= np.round(d)
        outside = np.maximum(np.abs(d) - self.half, 0.0)
        dist_out = np.sqrt(np.sum(outside**2, axis=-1))
        inside = np.max(np.abs(d), axis=-1) - self.half
        sd = np.where(dist_out > 0, dist_out, inside)
        return sd - self.margin

    def contains(self, points):
        return self.signed_distance(points) < 0


def cutoff_profile(t):
    """sin^2(pi/2 smoothstep): a [0,1] ramp whose sqrt and sqrt(1-.) are smooth."""
    s = smoothstep(t)
    return np.sin(0.5 * np.pi * s) ** 2


def region_cutoff(sdf_values, width):
    """Cutoff equal to 1 where sdf <= 0, vanishing where sdf >= width."""
    return cutoff_profile(1.0 - np.asarray(sdf_values, dtype=float) / width)


# -- the four stage coefficient families (test-facing constructors) -----


def amplitude_b(partition, m, gamma_values, points):
    """b_m = sqrt(2) chi_m gamma."""
    return np.sqrt(2.0) * partition.value(m, points) * gamma_values


def amplitude_a(partition, m, gamma_values, points, frame):
    """a_m = sqrt(2) chi_m gamma / (u . xi)."""
    return amplitude_b(partition, m, gamma_values, points) / frame.denom


def amplitude_gamma_frame(rho_factor, sigma_values, anchor_speed):
    """gamma_m = [rho_q (1 - rho_{q+1})]^{1/2} sigma_m |v_0(ell m)|."""
    return np.sqrt(np.maximum(rho_factor, 0.0)) * sigma_values * anchor_speed


def amplitude_gamma_geometric(shift, one_minus_rho, sigma_values, gamma_j):
    """gamma_{j,m} = [shift (1-rho_{q+1})]^{1/2} sigma_m Gamma_j(.)."""
    return np.sqrt(np.maximum(shift * one_minus_rho, 0.0)) * sigma_values * gamma_j


def check_unit_vector(z, tol=1e-10):
    z = np.asarray(z, dtype=float)
    if abs(np.linalg.norm(z) - 1.0) > tol:
        raise FieldError(f"expected a unit vector, got |z| = {np.linalg.norm(z)}")
    return z
