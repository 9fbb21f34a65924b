"""Closed-form kernels for the oscillatory stage machinery.

Every stage quantity is a sum over cutoff cubes on the global mu-lattice
(mu an integer, so the lattice is 1-periodic).  Per cube the kernels carry
the frame, the dyadic weight, the phase gradient and the amplitude
constants in one row of `cube_data`; the slowly varying amplitude factor
g (and its gradient) is a spline-coefficient array; the 1D bump profile
and its derivative are dense tables.

Column layout of cube_data (one row per cutoff cube):
  0:3   chi-cube center (mod 1)
  3:6   owning cell center (sigma factor; ignored when ell <= 0)
  6:9   zeta
  9:12  phase gradient l (eta xi + lam k)
  12    |phase gradient|^2
  13    l (dyadic weight)
  14    cconst = sqrt(2) A c / (u.xi)   (a_m = cconst chi sigma g)
  15    bconst = sqrt(2) A c            (b_m = bconst chi sigma g)
  16:19 u (anchor velocity)
  19    denom = u.xi
  20    eta l (phase speed along xi)

All kernels treat points outside every cube as untouched (zero sums).
"""

import numpy as np
from numba import njit

NCOLS = 21

C_CENTER = 0
C_CELL = 3
C_ZETA = 6
C_PG = 9
C_PG2 = 12
C_LW = 13
C_CC = 14
C_BC = 15
C_U = 16
C_DENOM = 19
C_LETA = 20


@njit(cache=True, fastmath=True, inline="always")
def _profile(tab, t):
    # cubic interpolation in the bump table on (-0.75, 0.75)
    if t <= -0.75 or t >= 0.75:
        return 0.0
    size = tab.shape[0] - 1
    x = (t + 0.75) / 1.5 * size
    i0 = int(x)
    if i0 < 1:
        i0 = 1
    if i0 > size - 2:
        i0 = size - 2
    f = x - i0
    fm1 = tab[i0 - 1]
    f0 = tab[i0]
    f1 = tab[i0 + 1]
    f2 = tab[i0 + 2]
    w_m1 = -f * (f - 1.0) * (f - 2.0) / 6.0
    w_0 = (f * f - 1.0) * (f - 2.0) / 2.0
    w_1 = -f * (f + 1.0) * (f - 2.0) / 2.0
    w_2 = f * (f * f - 1.0) / 6.0
    return w_m1 * fm1 + w_0 * f0 + w_1 * f1 + w_2 * f2


@njit(cache=True, fastmath=True, inline="always")
def _delta(a, b):
    d = a - b
    return d - np.round(d)


@njit(cache=True, fastmath=True, inline="always")
def _gval(coef, order, x, y, z):
    # single-point spline evaluation (shares the logic of eval_spline_scalar)
    m0 = coef.shape[0]
    xs = x * m0
    ys = y * m0
    zs = z * m0
    bx = int(np.floor(xs))
    by = int(np.floor(ys))
    bz = int(np.floor(zs))
    tx = xs - bx
    ty = ys - by
    tz = zs - bz
    acc = 0.0
    if order == 3:
        wx = np.empty(4)
        wy = np.empty(4)
        wz = np.empty(4)
        _wc(tx, wx)
        _wc(ty, wy)
        _wc(tz, wz)
        for jx in range(4):
            ix = (bx + jx - 1) % m0
            for jy in range(4):
                iy = (by + jy - 1) % m0
                s = wx[jx] * wy[jy]
                for jz in range(4):
                    iz = (bz + jz - 1) % m0
                    acc += s * wz[jz] * coef[ix, iy, iz]
    else:
        wx = np.empty(6)
        wy = np.empty(6)
        wz = np.empty(6)
        _wq(tx, wx)
        _wq(ty, wy)
        _wq(tz, wz)
        for jx in range(6):
            ix = (bx + jx - 2) % m0
            for jy in range(6):
                iy = (by + jy - 2) % m0
                s = wx[jx] * wy[jy]
                for jz in range(6):
                    iz = (bz + jz - 2) % m0
                    acc += s * wz[jz] * coef[ix, iy, iz]
    return acc


@njit(cache=True, fastmath=True, inline="always")
def _wc(t, w):
    for j in range(4):
        u = abs(t - (j - 1))
        if u < 1.0:
            w[j] = (4.0 - 6.0 * u * u + 3.0 * u * u * u) / 6.0
        elif u < 2.0:
            v = 2.0 - u
            w[j] = v * v * v / 6.0
        else:
            w[j] = 0.0


@njit(cache=True, fastmath=True, inline="always")
def _wc_d(t, w):
    # derivative of the cubic B-spline weights w.r.t. t
    for j in range(4):
        x = t - (j - 1)
        u = abs(x)
        s = 1.0 if x >= 0.0 else -1.0
        if u < 1.0:
            w[j] = s * (-2.0 * u + 1.5 * u * u)
        elif u < 2.0:
            v = 2.0 - u
            w[j] = s * (-0.5 * v * v)
        else:
            w[j] = 0.0


@njit(cache=True, fastmath=True, inline="always")
def _wq_d(t, w):
    # derivative of the quintic B-spline weights w.r.t. t
    for j in range(6):
        x = t - (j - 2)
        u = abs(x)
        s = 1.0 if x >= 0.0 else -1.0
        if u < 1.0:
            w[j] = s * (-u + u**3 - 5.0 * u**4 / 12.0)
        elif u < 2.0:
            w[j] = s * (5.0 / 8.0 + u * (-7.0 / 2.0 + u * (15.0 / 4.0 + u * (-3.0 / 2.0 + u * 5.0 / 24.0))))
        elif u < 3.0:
            v = 3.0 - u
            w[j] = s * (-(v**4) / 24.0)
        else:
            w[j] = 0.0


@njit(cache=True, fastmath=True, inline="always")
def _gval_grad(coef, order, x, y, z, out):
    """Spline value and exact gradient of the same spline: out = (g, gx, gy, gz)."""
    m0 = coef.shape[0]
    xs = x * m0
    ys = y * m0
    zs = z * m0
    bx = int(np.floor(xs))
    by = int(np.floor(ys))
    bz = int(np.floor(zs))
    tx = xs - bx
    ty = ys - by
    tz = zs - bz
    if order == 3:
        ntap, lo = 4, 1
        wx = np.empty(4); wy = np.empty(4); wz = np.empty(4)
        dx = np.empty(4); dy = np.empty(4); dz = np.empty(4)
        _wc(tx, wx); _wc(ty, wy); _wc(tz, wz)
        _wc_d(tx, dx); _wc_d(ty, dy); _wc_d(tz, dz)
    else:
        ntap, lo = 6, 2
        wx = np.empty(6); wy = np.empty(6); wz = np.empty(6)
        dx = np.empty(6); dy = np.empty(6); dz = np.empty(6)
        _wq(tx, wx); _wq(ty, wy); _wq(tz, wz)
        _wq_d(tx, dx); _wq_d(ty, dy); _wq_d(tz, dz)
    g = 0.0
    gx = 0.0
    gy = 0.0
    gz = 0.0
    for jx in range(ntap):
        ix = (bx + jx - lo) % m0
        for jy in range(ntap):
            iy = (by + jy - lo) % m0
            for jz in range(ntap):
                iz = (bz + jz - lo) % m0
                c = coef[ix, iy, iz]
                g += wx[jx] * wy[jy] * wz[jz] * c
                gx += dx[jx] * wy[jy] * wz[jz] * c
                gy += wx[jx] * dy[jy] * wz[jz] * c
                gz += wx[jx] * wy[jy] * dz[jz] * c
    out[0] = g
    out[1] = gx * m0
    out[2] = gy * m0
    out[3] = gz * m0


@njit(cache=True, fastmath=True, inline="always")
def _wq(t, w):
    for j in range(6):
        u = abs(t - (j - 2))
        if u < 1.0:
            u2 = u * u
            w[j] = 0.55 - 0.5 * u2 + 0.25 * u2 * u2 - u2 * u2 * u / 12.0
        elif u < 2.0:
            w[j] = (17.0 / 40.0 + u * (5.0 / 8.0 + u * (-7.0 / 4.0 + u * (
                5.0 / 4.0 + u * (-3.0 / 8.0 + u / 24.0)))))
        elif u < 3.0:
            v = 3.0 - u
            w[j] = v ** 5 / 120.0
        else:
            w[j] = 0.0


@njit(cache=True, fastmath=True, inline="always")
def _gather(x, y, z, mu, slot, hits):
    """Cube slots whose cutoff support contains (x,y,z); returns count."""
    cnt = 0
    mx = int(np.floor(mu * x - 0.75)) + 1
    my = int(np.floor(mu * y - 0.75)) + 1
    mz = int(np.floor(mu * z - 0.75)) + 1
    imu = int(mu)
    for ax in range(2):
        cx = mx + ax
        if mu * x - cx <= -0.75 or mu * x - cx >= 0.75:
            continue
        for ay in range(2):
            cy = my + ay
            if mu * y - cy <= -0.75 or mu * y - cy >= 0.75:
                continue
            for az in range(2):
                cz = mz + az
                if mu * z - cz <= -0.75 or mu * z - cz >= 0.75:
                    continue
                s = slot[cx % imu, cy % imu, cz % imu]
                if s >= 0:
                    hits[cnt] = s
                    cnt += 1
    return cnt


@njit(cache=True, fastmath=True, inline="always")
def _cube_amplitude(cd, row, x, y, z, mu, ell, chi_tab, dchi_tab, g, gx, gy, gz, out):
    """chi sigma g and its gradient for one cube at one point.

    out[0] = chi*sigma*g, out[1:4] = grad(chi*sigma*g).
    g, gx.. are the slow-factor value and gradient at the point (hoisted).
    """
    dx = _delta(x, cd[row, C_CENTER])
    dy = _delta(y, cd[row, C_CENTER + 1])
    dz = _delta(z, cd[row, C_CENTER + 2])
    cx = _profile(chi_tab, mu * dx)
    cy = _profile(chi_tab, mu * dy)
    cz = _profile(chi_tab, mu * dz)
    chi = cx * cy * cz
    dcx = _profile(dchi_tab, mu * dx) * mu
    dcy = _profile(dchi_tab, mu * dy) * mu
    dcz = _profile(dchi_tab, mu * dz) * mu
    gchi0 = dcx * cy * cz
    gchi1 = cx * dcy * cz
    gchi2 = cx * cy * dcz
    if ell > 0.0:
        ex = _delta(x, cd[row, C_CELL]) / ell
        ey = _delta(y, cd[row, C_CELL + 1]) / ell
        ez = _delta(z, cd[row, C_CELL + 2]) / ell
        sx = _profile(chi_tab, ex)
        sy = _profile(chi_tab, ey)
        sz = _profile(chi_tab, ez)
        sig = sx * sy * sz
        dsx = _profile(dchi_tab, ex) / ell
        dsy = _profile(dchi_tab, ey) / ell
        dsz = _profile(dchi_tab, ez) / ell
        gsig0 = dsx * sy * sz
        gsig1 = sx * dsy * sz
        gsig2 = sx * sy * dsz
    else:
        sig = 1.0
        gsig0 = gsig1 = gsig2 = 0.0
    out[0] = chi * sig * g
    out[1] = gchi0 * sig * g + chi * gsig0 * g + chi * sig * gx
    out[2] = gchi1 * sig * g + chi * gsig1 * g + chi * sig * gy
    out[3] = gchi2 * sig * g + chi * gsig2 * g + chi * sig * gz


@njit(cache=True, fastmath=True, inline="always")
def _phase(cd, row, x, y, z):
    """theta_m at the point, unwrapped relative to the cube center."""
    cx = cd[row, C_CENTER]
    cy = cd[row, C_CENTER + 1]
    cz = cd[row, C_CENTER + 2]
    ux = cx + _delta(x, cx)
    uy = cy + _delta(y, cy)
    uz = cz + _delta(z, cz)
    return cd[row, C_PG] * ux + cd[row, C_PG + 1] * uy + cd[row, C_PG + 2] * uz


@njit(cache=True, fastmath=True)
def psi_displacement(xs, ys, zs, cd, mu, eta, ell, slot, chi_tab, dchi_tab,
                     g_coef, g_order, out):
    """psi(x) - x = -sum_m (a_m(x)/(l eta)) zeta sin(theta_m(x)); also the
    Dacorogna-Moser z-field equals minus this."""
    hits = np.empty(8, dtype=np.int64)
    amp = np.empty(4)
    for p in range(xs.shape[0]):
        x = xs[p]
        y = ys[p]
        z = zs[p]
        cnt = _gather(x, y, z, mu, slot, hits)
        ox = 0.0
        oy = 0.0
        oz = 0.0
        if cnt > 0:
            g = _gval(g_coef, g_order, x, y, z)
            for h in range(cnt):
                r = hits[h]
                _cube_amplitude(cd, r, x, y, z, mu, ell, chi_tab, dchi_tab, g, 0.0, 0.0, 0.0, amp)
                if amp[0] != 0.0:
                    a = cd[r, C_CC] * amp[0]
                    th = _phase(cd, r, x, y, z)
                    coef = -a / (cd[r, C_LW] * eta) * np.sin(th)
                    ox += coef * cd[r, C_ZETA]
                    oy += coef * cd[r, C_ZETA + 1]
                    oz += coef * cd[r, C_ZETA + 2]
        out[0, p] = ox
        out[1, p] = oy
        out[2, p] = oz


@njit(cache=True, fastmath=True)
def fc_values(xs, ys, zs, cd, mu, eta, ell, slot, chi_tab, dchi_tab,
              g_coef, g_order, out):
    """f_c = det(D psi) - 1 = -sum (zeta . grad a_m) sin(theta_m) / (l eta)."""
    hits = np.empty(8, dtype=np.int64)
    amp = np.empty(4)
    gbuf = np.empty(4)
    for p in range(xs.shape[0]):
        x = xs[p]
        y = ys[p]
        z = zs[p]
        cnt = _gather(x, y, z, mu, slot, hits)
        acc = 0.0
        if cnt > 0:
            _gval_grad(g_coef, g_order, x, y, z, gbuf)
            for h in range(cnt):
                r = hits[h]
                _cube_amplitude(cd, r, x, y, z, mu, ell, chi_tab, dchi_tab,
                                gbuf[0], gbuf[1], gbuf[2], gbuf[3], amp)
                zg = (cd[r, C_ZETA] * amp[1] + cd[r, C_ZETA + 1] * amp[2] + cd[r, C_ZETA + 2] * amp[3])
                if zg != 0.0:
                    th = _phase(cd, r, x, y, z)
                    acc -= cd[r, C_CC] * zg * np.sin(th) / (cd[r, C_LW] * eta)
        out[p] = acc


@njit(cache=True, fastmath=True)
def kappa_values(xs, ys, zs, cd, mu, eta, ell, slot, chi_tab, dchi_tab,
                 g_coef, g_order, out):
    """Contraction density kappa(x) = sum |grad a_m| / (l eta)."""
    hits = np.empty(8, dtype=np.int64)
    amp = np.empty(4)
    gbuf = np.empty(4)
    for p in range(xs.shape[0]):
        x = xs[p]
        y = ys[p]
        z = zs[p]
        cnt = _gather(x, y, z, mu, slot, hits)
        acc = 0.0
        if cnt > 0:
            _gval_grad(g_coef, g_order, x, y, z, gbuf)
            for h in range(cnt):
                r = hits[h]
                _cube_amplitude(cd, r, x, y, z, mu, ell, chi_tab, dchi_tab,
                                gbuf[0], gbuf[1], gbuf[2], gbuf[3], amp)
                ga = np.sqrt(amp[1] ** 2 + amp[2] ** 2 + amp[3] ** 2) * abs(cd[r, C_CC])
                acc += ga / (cd[r, C_LW] * eta)
        out[p] = acc


@njit(cache=True, fastmath=True)
def fixed_point(xs, ys, zs, cd, mu, eta, ell, slot, chi_tab, dchi_tab,
                g_coef, g_order, tol, maxit, out, stats):
    """Solve phi0(x) = x + sum (a_m(phi0(x))/(l eta)) zeta sin(theta_m(x)).

    The displacement is along the (cell-wise constant) zeta, so the phases
    are frozen at x.  stats[0] = max residual, stats[1] = max iterations.
    """
    hits = np.empty(8, dtype=np.int64)
    amp = np.empty(4)
    worst = 0.0
    most = 0.0
    for p in range(xs.shape[0]):
        x = xs[p]
        y = ys[p]
        z = zs[p]
        dx = 0.0
        dy = 0.0
        dz = 0.0
        res = 0.0
        for it in range(maxit):
            px = x + dx
            py = y + dy
            pz = z + dz
            cnt = _gather(px, py, pz, mu, slot, hits)
            nx = 0.0
            ny = 0.0
            nz = 0.0
            if cnt > 0:
                g = _gval(g_coef, g_order, px, py, pz)
                for h in range(cnt):
                    r = hits[h]
                    _cube_amplitude(cd, r, px, py, pz, mu, ell, chi_tab, dchi_tab, g, 0.0, 0.0, 0.0, amp)
                    if amp[0] != 0.0:
                        a = cd[r, C_CC] * amp[0]
                        th = _phase(cd, r, x, y, z)
                        coef = a / (cd[r, C_LW] * eta) * np.sin(th)
                        nx += coef * cd[r, C_ZETA]
                        ny += coef * cd[r, C_ZETA + 1]
                        nz += coef * cd[r, C_ZETA + 2]
            res = max(abs(nx - dx), max(abs(ny - dy), abs(nz - dz)))
            dx = nx
            dy = ny
            dz = nz
            if res <= tol:
                if it + 1 > most:
                    most = it + 1
                break
        if res > worst:
            worst = res
        out[0, p] = dx
        out[1, p] = dy
        out[2, p] = dz
    stats[0] = worst
    stats[1] = most


@njit(cache=True, fastmath=True, inline="always")
def _dm_rate(px, py, pz, t, cd, mu, eta, ell, slot, chi_tab, dchi_tab,
             g_coef, g_order, hits, amp, gbuf, rate):
    """Dacorogna-Moser velocity z/(1+(1-t) f_c) at one point (vector out)."""
    cnt = _gather(px, py, pz, mu, slot, hits)
    zx = 0.0
    zy = 0.0
    zz = 0.0
    fc = 0.0
    if cnt > 0:
        _gval_grad(g_coef, g_order, px, py, pz, gbuf)
        for h in range(cnt):
            r = hits[h]
            _cube_amplitude(cd, r, px, py, pz, mu, ell, chi_tab, dchi_tab,
                            gbuf[0], gbuf[1], gbuf[2], gbuf[3], amp)
            th = _phase(cd, r, px, py, pz)
            sth = np.sin(th)
            a = cd[r, C_CC] * amp[0]
            coef = a / (cd[r, C_LW] * eta) * sth
            zx += coef * cd[r, C_ZETA]
            zy += coef * cd[r, C_ZETA + 1]
            zz += coef * cd[r, C_ZETA + 2]
            zg = (cd[r, C_ZETA] * amp[1] + cd[r, C_ZETA + 1] * amp[2] + cd[r, C_ZETA + 2] * amp[3])
            fc -= cd[r, C_CC] * zg * sth / (cd[r, C_LW] * eta)
    den = 1.0 + (1.0 - t) * fc
    rate[0] = zx / den
    rate[1] = zy / den
    rate[2] = zz / den


@njit(cache=True, fastmath=True)
def dm_integrate(xs, ys, zs, cd, mu, eta, ell, slot, chi_tab, dchi_tab,
                 g_coef, g_order, nsteps, t0, t1, out):
    """RK4 integration of the volume-correction flow from (xs,ys,zs) at t0 to t1.

    Out holds the final displacement.  With t0=0, t1=1 this is phi_c - Id
    started at the given points; t0=1, t1=0 integrates the inverse flow.
    """
    hits = np.empty(8, dtype=np.int64)
    amp = np.empty(4)
    gbuf = np.empty(4)
    k1 = np.empty(3)
    k2 = np.empty(3)
    k3 = np.empty(3)
    k4 = np.empty(3)
    ht = (t1 - t0) / nsteps
    for p in range(xs.shape[0]):
        px = xs[p]
        py = ys[p]
        pz = zs[p]
        x0 = px
        y0 = py
        z0 = pz
        # quick reject: points not touching any cube never move
        cnt = _gather(px, py, pz, mu, slot, hits)
        if cnt == 0:
            out[0, p] = 0.0
            out[1, p] = 0.0
            out[2, p] = 0.0
            continue
        t = t0
        for _ in range(nsteps):
            _dm_rate(px, py, pz, t, cd, mu, eta, ell, slot, chi_tab, dchi_tab,
                     g_coef, g_order, hits, amp, gbuf, k1)
            _dm_rate(px + 0.5 * ht * k1[0], py + 0.5 * ht * k1[1], pz + 0.5 * ht * k1[2],
                     t + 0.5 * ht, cd, mu, eta, ell, slot, chi_tab, dchi_tab,
                     g_coef, g_order, hits, amp, gbuf, k2)
            _dm_rate(px + 0.5 * ht * k2[0], py + 0.5 * ht * k2[1], pz + 0.5 * ht * k2[2],
                     t + 0.5 * ht, cd, mu, eta, ell, slot, chi_tab, dchi_tab,
                     g_coef, g_order, hits, amp, gbuf, k3)
            _dm_rate(px + ht * k3[0], py + ht * k3[1], pz + ht * k3[2],
                     t + ht, cd, mu, eta, ell, slot, chi_tab, dchi_tab,
                     g_coef, g_order, hits, amp, gbuf, k4)
            px += ht / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            py += ht / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
            pz += ht / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
            t += ht
        out[0, p] = px - x0
        out[1, p] = py - y0
        out[2, p] = pz - z0


@njit(cache=True, fastmath=True)
def w0_values(xs, ys, zs, cd, mu, ell, slot, chi_tab, dchi_tab,
              g_coef, g_order, out):
    """w_0 = sum b_m zeta cos(theta_m)."""
    hits = np.empty(8, dtype=np.int64)
    amp = np.empty(4)
    for p in range(xs.shape[0]):
        x = xs[p]
        y = ys[p]
        z = zs[p]
        cnt = _gather(x, y, z, mu, slot, hits)
        ox = 0.0
        oy = 0.0
        oz = 0.0
        if cnt > 0:
            g = _gval(g_coef, g_order, x, y, z)
            for h in range(cnt):
                r = hits[h]
                _cube_amplitude(cd, r, x, y, z, mu, ell, chi_tab, dchi_tab, g, 0.0, 0.0, 0.0, amp)
                if amp[0] != 0.0:
                    b = cd[r, C_BC] * amp[0]
                    th = _phase(cd, r, x, y, z)
                    coef = b * np.cos(th)
                    ox += coef * cd[r, C_ZETA]
                    oy += coef * cd[r, C_ZETA + 1]
                    oz += coef * cd[r, C_ZETA + 2]
        out[0, p] = ox
        out[1, p] = oy
        out[2, p] = oz


@njit(cache=True, fastmath=True)
def gamma_sq_values(xs, ys, zs, cd, mu, ell, slot, chi_tab, dchi_tab,
                    g_coef, g_order, out):
    """gamma^2 summed cellwise: sum_m b_m^2 / 2 (= gamma^2 where the cubes
    cover the cell, by the squared partition)."""
    hits = np.empty(8, dtype=np.int64)
    amp = np.empty(4)
    for p in range(xs.shape[0]):
        x = xs[p]
        y = ys[p]
        z = zs[p]
        cnt = _gather(x, y, z, mu, slot, hits)
        acc = 0.0
        if cnt > 0:
            g = _gval(g_coef, g_order, x, y, z)
            for h in range(cnt):
                r = hits[h]
                _cube_amplitude(cd, r, x, y, z, mu, ell, chi_tab, dchi_tab, g, 0.0, 0.0, 0.0, amp)
                b = cd[r, C_BC] * amp[0]
                acc += 0.5 * b * b
        out[p] = acc


@njit(cache=True, fastmath=True)
def cell_zeta(xs, ys, zs, cd, mu, slot, out):
    """The stage direction at each point (zeta of any active cube; cells
    are disjoint so all active cubes at a point agree).  Zero when no cube
    is active."""
    hits = np.empty(8, dtype=np.int64)
    for p in range(xs.shape[0]):
        cnt = _gather(xs[p], ys[p], zs[p], mu, slot, hits)
        if cnt > 0:
            r = hits[0]
            out[0, p] = cd[r, C_ZETA]
            out[1, p] = cd[r, C_ZETA + 1]
            out[2, p] = cd[r, C_ZETA + 2]
        else:
            out[0, p] = 0.0
            out[1, p] = 0.0
            out[2, p] = 0.0


@njit(cache=True, fastmath=True)
def gamma_tensor_values(xs, ys, zs, cd, mu, ell, slot, chi_tab, dchi_tab,
                        g_coef, g_order, out):
    """gamma^2 zeta x zeta as the 6 symmetric components, summed cubewise
    as sum_m (b_m^2/2) zeta x zeta (exact where the partition covers)."""
    hits = np.empty(8, dtype=np.int64)
    amp = np.empty(4)
    for p in range(xs.shape[0]):
        x = xs[p]
        y = ys[p]
        z = zs[p]
        cnt = _gather(x, y, z, mu, slot, hits)
        s0 = s1 = s2 = s3 = s4 = s5 = 0.0
        if cnt > 0:
            g = _gval(g_coef, g_order, x, y, z)
            for h in range(cnt):
                r = hits[h]
                _cube_amplitude(cd, r, x, y, z, mu, ell, chi_tab, dchi_tab, g, 0.0, 0.0, 0.0, amp)
                b = cd[r, C_BC] * amp[0]
                c = 0.5 * b * b
                zx = cd[r, C_ZETA]
                zy = cd[r, C_ZETA + 1]
                zz = cd[r, C_ZETA + 2]
                s0 += c * zx * zx
                s1 += c * zx * zy
                s2 += c * zx * zz
                s3 += c * zy * zy
                s4 += c * zy * zz
                s5 += c * zz * zz
        out[0, p] = s0
        out[1, p] = s1
        out[2, p] = s2
        out[3, p] = s3
        out[4, p] = s4
        out[5, p] = s5


@njit(cache=True, fastmath=True)
def m3_values(xs, ys, zs, vx, vy, vz, cd, mu, ell, slot, chi_tab, dchi_tab,
              g_coef, g_order, out):
    """M_3 = sum b_m [zeta ox (v_J - u_m) + (v_J - u_m) ox zeta] cos theta_m,
    as the 6 symmetric components."""
    hits = np.empty(8, dtype=np.int64)
    amp = np.empty(4)
    for p in range(xs.shape[0]):
        x = xs[p]
        y = ys[p]
        z = zs[p]
        cnt = _gather(x, y, z, mu, slot, hits)
        s0 = s1 = s2 = s3 = s4 = s5 = 0.0
        if cnt > 0:
            g = _gval(g_coef, g_order, x, y, z)
            for h in range(cnt):
                r = hits[h]
                _cube_amplitude(cd, r, x, y, z, mu, ell, chi_tab, dchi_tab, g, 0.0, 0.0, 0.0, amp)
                if amp[0] != 0.0:
                    b = cd[r, C_BC] * amp[0] * np.cos(_phase(cd, r, x, y, z))
                    wx = vx[p] - cd[r, C_U]
                    wy = vy[p] - cd[r, C_U + 1]
                    wz = vz[p] - cd[r, C_U + 2]
                    zx = cd[r, C_ZETA]
                    zy = cd[r, C_ZETA + 1]
                    zz = cd[r, C_ZETA + 2]
                    s0 += b * 2.0 * zx * wx
                    s1 += b * (zx * wy + wx * zy)
                    s2 += b * (zx * wz + wx * zz)
                    s3 += b * 2.0 * zy * wy
                    s4 += b * (zy * wz + wy * zz)
                    s5 += b * 2.0 * zz * wz
        out[0, p] = s0
        out[1, p] = s1
        out[2, p] = s2
        out[3, p] = s3
        out[4, p] = s4
        out[5, p] = s5


@njit(cache=True, fastmath=True)
def potentials_ab(xs, ys, zs, cd, mu, eta, ell, slot, chi_tab, dchi_tab,
                  g_coef, g_order, out_a, out_b):
    """The H^-1 potentials' oscillatory parts.

    out_a = sum (grad theta . grad b_m)/|grad theta|^2 zeta sin(theta)
    (subtract from w_c to get A); out_b = sum b_m/|grad theta|^2
    (zeta ox grad theta) sin(theta), rows stacked (B = -out_b).
    """
    hits = np.empty(8, dtype=np.int64)
    amp = np.empty(4)
    gbuf = np.empty(4)
    for p in range(xs.shape[0]):
        x = xs[p]
        y = ys[p]
        z = zs[p]
        cnt = _gather(x, y, z, mu, slot, hits)
        ax = ay = az = 0.0
        b00 = b01 = b02 = b10 = b11 = b12 = b20 = b21 = b22 = 0.0
        if cnt > 0:
            _gval_grad(g_coef, g_order, x, y, z, gbuf)
            for h in range(cnt):
                r = hits[h]
                _cube_amplitude(cd, r, x, y, z, mu, ell, chi_tab, dchi_tab,
                                gbuf[0], gbuf[1], gbuf[2], gbuf[3], amp)
                sth = np.sin(_phase(cd, r, x, y, z))
                bc = cd[r, C_BC]
                pg0 = cd[r, C_PG]
                pg1 = cd[r, C_PG + 1]
                pg2 = cd[r, C_PG + 2]
                pg2n = cd[r, C_PG2]
                gradb_dot = bc * (pg0 * amp[1] + pg1 * amp[2] + pg2 * amp[3])
                coef_a = gradb_dot / pg2n * sth
                ax += coef_a * cd[r, C_ZETA]
                ay += coef_a * cd[r, C_ZETA + 1]
                az += coef_a * cd[r, C_ZETA + 2]
                coef_b = bc * amp[0] / pg2n * sth
                b00 += coef_b * cd[r, C_ZETA] * pg0
                b01 += coef_b * cd[r, C_ZETA] * pg1
                b02 += coef_b * cd[r, C_ZETA] * pg2
                b10 += coef_b * cd[r, C_ZETA + 1] * pg0
                b11 += coef_b * cd[r, C_ZETA + 1] * pg1
                b12 += coef_b * cd[r, C_ZETA + 1] * pg2
                b20 += coef_b * cd[r, C_ZETA + 2] * pg0
                b21 += coef_b * cd[r, C_ZETA + 2] * pg1
                b22 += coef_b * cd[r, C_ZETA + 2] * pg2
        out_a[0, p] = ax
        out_a[1, p] = ay
        out_a[2, p] = az
        out_b[0, p] = b00
        out_b[1, p] = b01
        out_b[2, p] = b02
        out_b[3, p] = b10
        out_b[4, p] = b11
        out_b[5, p] = b12
        out_b[6, p] = b20
        out_b[7, p] = b21
        out_b[8, p] = b22


@njit(cache=True, fastmath=True)
def rho12_values(xs, ys, zs, cd, mu, eta, ell, slot, chi_tab, dchi_tab,
                 g_coef, g_order, out1, out2):
    """The explicit oscillation errors (controlled verification path).

    out1 = rho_1 = sum_{m,m'} b_m' (zeta.grad b_m) zeta [cos(th_m - th_m')
           + cos(th_m + th_m')]/... condensed: zeta (zeta.grad h) with
           h = (sum b_m cos th_m)^2 - 2 gamma^2, computed cube-pairwise.
    out2 = rho_2 = sum [(zeta.grad b_m) u_m + (u_m.grad b_m) zeta] cos th_m
           - sum l eta b_m (u.xi->denom) zeta sin th_m.
    """
    hits = np.empty(8, dtype=np.int64)
    amp = np.empty(4)
    gbuf = np.empty(4)
    bvals = np.empty(8)
    gradb = np.empty((8, 3))
    thetas = np.empty(8)
    for p in range(xs.shape[0]):
        x = xs[p]
        y = ys[p]
        z = zs[p]
        cnt = _gather(x, y, z, mu, slot, hits)
        o1x = o1y = o1z = 0.0
        o2x = o2y = o2z = 0.0
        if cnt > 0:
            _gval_grad(g_coef, g_order, x, y, z, gbuf)
            for h in range(cnt):
                r = hits[h]
                _cube_amplitude(cd, r, x, y, z, mu, ell, chi_tab, dchi_tab,
                                gbuf[0], gbuf[1], gbuf[2], gbuf[3], amp)
                bc = cd[r, C_BC]
                bvals[h] = bc * amp[0]
                gradb[h, 0] = bc * amp[1]
                gradb[h, 1] = bc * amp[2]
                gradb[h, 2] = bc * amp[3]
                thetas[h] = _phase(cd, r, x, y, z)
            for h in range(cnt):
                r = hits[h]
                zx = cd[r, C_ZETA]
                zy = cd[r, C_ZETA + 1]
                zz = cd[r, C_ZETA + 2]
                zgb = zx * gradb[h, 0] + zy * gradb[h, 1] + zz * gradb[h, 2]
                # rho_1: self term + cross terms
                coef = bvals[h] * zgb * np.cos(2.0 * thetas[h])
                for h2 in range(cnt):
                    if h2 != h:
                        coef += bvals[h2] * zgb * (
                            np.cos(thetas[h] - thetas[h2]) + np.cos(thetas[h] + thetas[h2])
                        )
                o1x += coef * zx
                o1y += coef * zy
                o1z += coef * zz
                # rho_2
                cth = np.cos(thetas[h])
                sth = np.sin(thetas[h])
                ux = cd[r, C_U]
                uy = cd[r, C_U + 1]
                uz = cd[r, C_U + 2]
                ugb = ux * gradb[h, 0] + uy * gradb[h, 1] + uz * gradb[h, 2]
                o2x += (zgb * ux + ugb * zx) * cth
                o2y += (zgb * uy + ugb * zy) * cth
                o2z += (zgb * uz + ugb * zz) * cth
                sincoef = cd[r, C_LETA] * bvals[h] * cd[r, C_DENOM] * sth
                o2x -= sincoef * zx
                o2y -= sincoef * zy
                o2z -= sincoef * zz
        out1[0, p] = o1x
        out1[1, p] = o1y
        out1[2, p] = o1z
        out2[0, p] = o2x
        out2[1, p] = o2y
        out2[2, p] = o2z
