"""Norm estimators: Hölder, Littlewood-Paley/Besov, and H^-1.

The dyadic decomposition uses smooth radial multipliers chi (supported in
|k| < 4/3) and phi(k) = chi(k/2) - chi(k) (supported in the annulus
3/4 < |k| < 8/3), acting on integer wavenumbers, so the telescoping
identity chi + sum_n phi(2^-n k) = 1 holds exactly by construction.

The fractional Hölder seminorm is a sampled lower-bound estimator: the
difference quotient is maximized over grid offsets up to distance 1/8
plus a dyadic sample of longer offsets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FieldError
from .grid import GridField, spectral_derivative, wavenumbers

_SMOOTH_EPS = 1e-300


def smoothstep(t):
    """C^infinity step: 0 for t<=0, 1 for t>=1, exp-bump ramp between."""
    t = np.asarray(t, dtype=float)
    a = np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-12)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.maximum(1.0 - t, 1e-12)), 0.0)
    out = a / (a + b + _SMOOTH_EPS)
    return np.where(t <= 0, 0.0, np.where(t >= 1, 1.0, out))


def lp_chi(rho):
    """Low-pass radial multiplier: 1 for |k| <= 3/4, 0 for |k| >= 4/3."""
    return smoothstep((4.0 / 3.0 - np.asarray(rho, dtype=float)) / (4.0 / 3.0 - 0.75))


def lp_phi(rho, n):
    """Dyadic band multiplier phi(2^-n k) = chi(k/2^{n+1}) - chi(k/2^n)."""
    rho = np.asarray(rho, dtype=float)
    return lp_chi(rho / 2.0 ** (n + 1)) - lp_chi(rho / 2.0**n)


def max_band(n):
    """Largest dyadic index whose annulus is fully below Nyquist."""
    nb = int(np.floor(np.log2(3.0 * n / 16.0)))
    while 2.0**nb * 8.0 / 3.0 >= n / 2.0:
        nb -= 1
    return nb


def _kmod(n):
    k1, k2, k3 = wavenumbers(n)
    return np.sqrt(k1**2 + k2**2 + k3**2)


def lp_project(f, band):
    """P_< f (band="low") or P_n f (band=n) by smooth spectral multipliers."""
    n = f.n
    rho = _kmod(n)
    if band == "low":
        mult = lp_chi(rho)
    else:
        band = int(band)
        nb = max_band(n)
        if band < 0 or band > nb:
            raise FieldError(
                f"dyadic band {band} beyond Nyquist at N={n}; maximum admissible index is {nb}",
                max_band=nb,
            )
        mult = lp_phi(rho, band)
    spec = f.spectral() * mult
    return GridField.from_spectral(spec, n, f.rank)


def besov_norm(f, s):
    """||P_< f||_0 + max over resolvable n of 2^{ns} ||P_n f||_0."""
    if not -1.0 <= s <= 8.0:
        raise FieldError(f"Besov exponent {s} outside the supported range [-1, 8]")
    total = lp_project(f, "low").sup_norm()
    best = 0.0
    for n in range(max_band(f.n) + 1):
        best = max(best, 2.0 ** (n * s) * lp_project(f, n).sup_norm())
    return total + best


_MULTI_INDICES = {
    0: [(0, 0, 0)],
    1: [(1, 0, 0), (0, 1, 0), (0, 0, 1)],
    2: [(2, 0, 0), (0, 2, 0), (0, 0, 2), (1, 1, 0), (1, 0, 1), (0, 1, 1)],
    3: [
        (3, 0, 0), (0, 3, 0), (0, 0, 3),
        (2, 1, 0), (2, 0, 1), (1, 2, 0), (0, 2, 1), (1, 0, 2), (0, 1, 2),
        (1, 1, 1),
    ],
}


def _holder_offsets(n):
    """Integer grid offsets: all dyadic lengths up to n/8 in 13 directions,
    plus a dyadic sample of longer offsets."""
    dirs = []
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                if (dx, dy, dz) > (0, 0, 0):
                    dirs.append((dx, dy, dz))
    steps = []
    s = 1
    while s <= n // 8:
        steps.append(s)
        s *= 2
    long_steps = [s for s in (n // 4, 3 * n // 8, n // 2) if s > n // 8]
    offs = []
    for d in dirs:
        for s in steps + long_steps:
            offs.append((d[0] * s, d[1] * s, d[2] * s))
    return offs


@dataclass
class HolderEstimate:
    value: float
    seminorm: float
    lower_bound: bool = True
    spread: float = 0.0  # gap between the best and second-best offset class


def holder_seminorm(f, alpha):
    """Sampled lower bound for the alpha-seminorm [f]_alpha."""
    n = f.n
    comps = f.components()
    best = 0.0
    second = 0.0
    for off in _holder_offsets(n):
        dist = np.sqrt(off[0] ** 2 + off[1] ** 2 + off[2] ** 2) / n
        q = 0.0
        for c in comps:
            shifted = np.roll(c, shift=off, axis=(0, 1, 2))
            q = max(q, float(np.max(np.abs(shifted - c))))
        q = q / dist**alpha
        if q > best:
            second = best
            best = q
        elif q > second:
            second = q
    return best, best - second


def holder_norm(f, s, detail=False):
    """||f||_s for s = k + alpha, k <= 2, alpha in [0,1) (s <= 3 supported)."""
    if s < 0 or s > 3.0:
        raise FieldError(f"Holder exponent {s} not supported (need 0 <= s <= 3)")
    k = int(np.floor(s))
    alpha = s - k
    if k == 3:
        k, alpha = 2, 1.0  # s = 3 treated as k=2, alpha=1 via first derivatives of order-2 terms
    total = 0.0
    for j in range(k + 1):
        total += max(spectral_derivative(f, mi).sup_norm() for mi in _MULTI_INDICES[j])
    semi = 0.0
    spread = 0.0
    if alpha > 0:
        semi = 0.0
        for mi in _MULTI_INDICES[k]:
            df = spectral_derivative(f, mi) if k > 0 else f
            v, sp = holder_seminorm(df, alpha)
            if v > semi:
                semi, spread = v, sp
    value = total + semi
    if detail:
        return HolderEstimate(value=value, seminorm=semi, lower_bound=True, spread=spread)
    return value


def hminus1_norm(f, return_mean=False):
    """Spectral H^-1 norm of a mean-zero vector field.

    ||f||^2 = sum_{k != 0} |fhat(k)|^2 / (1 + |2 pi k|^2); the mean is
    subtracted first and reported on request.
    """
    if f.rank == "symmatrix":
        raise FieldError("hminus1_norm expects a scalar or vector field")
    n = f.n
    k1, k2, k3 = wavenumbers(n)
    weight = 1.0 / (1.0 + (2.0 * np.pi) ** 2 * (k1**2 + k2**2 + k3**2))
    # rfft layout stores only k3 >= 0; double the interior planes
    dup = np.full(n // 2 + 1, 2.0)
    dup[0] = 1.0
    if n % 2 == 0:
        dup[-1] = 1.0
    total = 0.0
    mean = []
    for spec in f.spectral():
        p = np.abs(spec) ** 2 * weight * dup[None, None, :]
        mean.append(float(np.real(spec[0, 0, 0])) / n**3)
        total += float(np.sum(p)) - float(np.abs(spec[0, 0, 0]) ** 2 * weight[0, 0, 0])
    norm = float(np.sqrt(total)) / n**3
    if return_mean:
        return norm, np.array(mean)
    return norm


@dataclass
class NormReport:
    """Bundle of norm estimates for one field."""

    c0: float
    holder: dict = field(default_factory=dict)
    besov: dict = field(default_factory=dict)
    hminus1: float | None = None

    def check(self):
        vals = [self.c0] + list(self.holder.values()) + list(self.besov.values())
        if self.hminus1 is not None:
            vals.append(self.hminus1)
        return all(np.isfinite(v) and v >= 0 for v in vals)

    def to_dict(self):
        d = {"c0": self.c0}
        for s, v in sorted(self.holder.items()):
            d[f"holder_{s}"] = v
        for s, v in sorted(self.besov.items()):
            d[f"besov_{s}"] = v
        if self.hminus1 is not None:
            d["hminus1"] = self.hminus1
        return d


def norm_report(f, holder_exps=(1.0,), besov_exps=(), with_hminus1=False):
    rep = NormReport(c0=f.sup_norm())
    for s in holder_exps:
        rep.holder[s] = holder_norm(f, s)
    for s in besov_exps:
        rep.besov[s] = besov_norm(f, s)
    if with_hminus1 and f.rank in ("scalar", "vector"):
        rep.hminus1 = hminus1_norm(f)
    return rep
