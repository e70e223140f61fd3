# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled RK4 advance of the consensus/adaptive channels.

Mirrors numpy_backend.advance_block argument for argument; the test suite
holds the two implementations to numerical agreement. Dense row loops skip
structural zeros, so the Laplacian and incidence products cost what the
graph sparsity allows.
"""
import numpy as np

cimport numpy as cnp


cdef void _rhs(
    double[:, ::1] sx, double[:, ::1] sp, double[:, ::1] sxh, double[:, ::1] sph,
    double[:, ::1] sdh, double[:, ::1] sz, double[:, ::1] szh,
    double[:, ::1] lap, double[:, ::1] bt, double[:, ::1] pbl,
    double[:, ::1] beta,
    double[::1] a, double[::1] k0, double[::1] alpha, double[::1] gamma,
    double[::1] sigma, double[::1] gamma_rate, double[::1] mu,
    double[::1] dmax, double[::1] nu,
    double[::1] adaptive_mask, double[::1] project_mask,
    double[:, :, ::1] k2_stages, double[:, :, ::1] c_stages, double[:, :, ::1] delta_stages,
    Py_ssize_t idx,
    double[:, ::1] dx, double[:, ::1] dp, double[:, ::1] dxh, double[:, ::1] dph,
    double[:, ::1] ddh, double[:, ::1] dz, double[:, ::1] dzh,
    double[:, ::1] xt, double[:, ::1] lxt, double[:, ::1] ld, double[:, ::1] lxh,
    double[:, ::1] k2c, double[::1] k1row, double[:, ::1] w,
) noexcept nogil:
    cdef Py_ssize_t n = sx.shape[0]
    cdef Py_ssize_t nc = sx.shape[1]
    cdef Py_ssize_t me = sz.shape[0]
    cdef Py_ssize_t mi = k2_stages.shape[2]
    cdef Py_ssize_t i, j, c, h_in, e
    cdef double lij, acc, kw, am, y, th, factor, ex_ic, v_ic, u_ic

    for i in range(n):
        acc = 0.0
        for h_in in range(mi):
            acc += k2_stages[idx, i, h_in]
        k1row[i] = acc
        for c in range(nc):
            xt[i, c] = sx[i, c] + delta_stages[idx, i, c]
            acc = 0.0
            for h_in in range(mi):
                acc += k2_stages[idx, i, h_in] * c_stages[idx, h_in, c]
            k2c[i, c] = acc

    for i in range(n):
        for c in range(nc):
            lxt[i, c] = 0.0
            ld[i, c] = 0.0
            lxh[i, c] = 0.0
        for j in range(n):
            lij = lap[i, j]
            if lij != 0.0:
                for c in range(nc):
                    lxt[i, c] += lij * xt[j, c]
                    ld[i, c] += lij * sdh[j, c]
                    lxh[i, c] += lij * sxh[j, c]

    for i in range(n):
        for c in range(nc):
            am = adaptive_mask[c]
            ex_ic = xt[i, c] - sxh[i, c] - sdh[i, c]
            v_ic = (
                k0[c] * sdh[i, c]
                + alpha[c] * (ld[i, c] + beta[i, c] * sdh[i, c])
                + alpha[c] * k1row[i] * sdh[i, c]
            )
            u_ic = (
                -k0[c] * xt[i, c]
                - alpha[c] * (lxt[i, c] + beta[i, c] * xt[i, c])
                + sp[i, c]
                - alpha[c] * (k1row[i] * xt[i, c] - k2c[i, c])
                + am * v_ic
            )
            dx[i, c] = a[c] * sx[i, c] + u_ic
            w[i, c] = am * gamma[c] * ld[i, c]
            dp[i, c] = -gamma[c] * (lxt[i, c] + sigma[c] * sp[i, c]) + w[i, c]

            y = -a[c] * ex_ic
            th = sdh[i, c]
            if th > dmax[c]:
                th = dmax[c]
            elif th < -dmax[c]:
                th = -dmax[c]
            if project_mask[c] > 0.0:
                if th > dmax[c] - nu[c] and y > 0.0:
                    factor = (dmax[c] - th) / nu[c]
                    y = factor * y
                elif th < -dmax[c] + nu[c] and y < 0.0:
                    factor = (th + dmax[c]) / nu[c]
                    y = factor * y
            ddh[i, c] = am * gamma_rate[c] * y

            dxh[i, c] = am * (
                (a[c] - k0[c]) * sxh[i, c]
                - alpha[c] * (lxh[i, c] + beta[i, c] * sxh[i, c])
                + sph[i, c]
                - alpha[c] * (k1row[i] * sxh[i, c] - k2c[i, c])
                + (gamma_rate[c] * a[c] + mu[c]) * ex_ic
            )
            dph[i, c] = am * (
                -gamma[c] * (lxh[i, c] + sigma[c] * sph[i, c])
            )

    for e in range(me):
        for c in range(nc):
            dz[e, c] = 0.0
            dzh[e, c] = 0.0
        for i in range(n):
            lij = bt[e, i]
            if lij != 0.0:
                for c in range(nc):
                    dz[e, c] += lij * xt[i, c]
                    dzh[e, c] += lij * sxh[i, c]
        for c in range(nc):
            am = adaptive_mask[c]
            dz[e, c] = -gamma[c] * (dz[e, c] + sigma[c] * sz[e, c])
            dzh[e, c] = am * (-gamma[c] * (dzh[e, c] + sigma[c] * szh[e, c]))
        for i in range(n):
            lij = pbl[e, i]
            if lij != 0.0:
                for c in range(nc):
                    dz[e, c] += lij * w[i, c]


def advance_block(
    double[:, ::1] x, double[:, ::1] p, double[:, ::1] xh, double[:, ::1] ph,
    double[:, ::1] dh,
    double[:, ::1] z, double[:, ::1] zh,
    double[:, ::1] lap, double[:, ::1] bt, double[:, ::1] pbl,
    double[:, ::1] beta,
    a, k0, alpha, gamma, sigma, gamma_rate, mu, dmax, nu,
    adaptive_mask, project_mask,
    double[:, :, ::1] k2_stages, double[:, :, ::1] c_stages, double[:, :, ::1] delta_stages,
    double h, Py_ssize_t n_steps,
):
    """Advance all channel states n_steps of size h, in place."""
    cdef double[::1] a_v = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[::1] k0_v = np.ascontiguousarray(k0, dtype=np.float64)
    cdef double[::1] alpha_v = np.ascontiguousarray(alpha, dtype=np.float64)
    cdef double[::1] gamma_v = np.ascontiguousarray(gamma, dtype=np.float64)
    cdef double[::1] sigma_v = np.ascontiguousarray(sigma, dtype=np.float64)
    cdef double[::1] rate_v = np.ascontiguousarray(gamma_rate, dtype=np.float64)
    cdef double[::1] mu_v = np.ascontiguousarray(mu, dtype=np.float64)
    cdef double[::1] dmax_v = np.ascontiguousarray(dmax, dtype=np.float64)
    cdef double[::1] nu_v = np.ascontiguousarray(nu, dtype=np.float64)
    cdef double[::1] am_v = np.ascontiguousarray(adaptive_mask, dtype=np.float64)
    cdef double[::1] pm_v = np.ascontiguousarray(project_mask, dtype=np.float64)

    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nc = x.shape[1]
    cdef Py_ssize_t me = z.shape[0]
    cdef Py_ssize_t step, stage, i, c, e, idx
    cdef double coeff, wgt
    cdef double half = 0.5 * h
    cdef double sixth = h / 6.0

    node_shape = (n, nc)
    edge_shape = (me, nc)
    cdef double[:, ::1] bx = np.empty(node_shape)
    cdef double[:, ::1] bp = np.empty(node_shape)
    cdef double[:, ::1] bxh = np.empty(node_shape)
    cdef double[:, ::1] bph = np.empty(node_shape)
    cdef double[:, ::1] bdh = np.empty(node_shape)
    cdef double[:, ::1] bz = np.empty(edge_shape)
    cdef double[:, ::1] bzh = np.empty(edge_shape)

    cdef double[:, ::1] sx = np.empty(node_shape)
    cdef double[:, ::1] sp = np.empty(node_shape)
    cdef double[:, ::1] sxh = np.empty(node_shape)
    cdef double[:, ::1] sph = np.empty(node_shape)
    cdef double[:, ::1] sdh = np.empty(node_shape)
    cdef double[:, ::1] sz = np.empty(edge_shape)
    cdef double[:, ::1] szh = np.empty(edge_shape)

    cdef double[:, ::1] dx = np.empty(node_shape)
    cdef double[:, ::1] dp = np.empty(node_shape)
    cdef double[:, ::1] dxh = np.empty(node_shape)
    cdef double[:, ::1] dph = np.empty(node_shape)
    cdef double[:, ::1] ddh = np.empty(node_shape)
    cdef double[:, ::1] dz = np.empty(edge_shape)
    cdef double[:, ::1] dzh = np.empty(edge_shape)

    cdef double[:, ::1] ax = np.empty(node_shape)
    cdef double[:, ::1] ap = np.empty(node_shape)
    cdef double[:, ::1] axh = np.empty(node_shape)
    cdef double[:, ::1] aph = np.empty(node_shape)
    cdef double[:, ::1] adh = np.empty(node_shape)
    cdef double[:, ::1] az = np.empty(edge_shape)
    cdef double[:, ::1] azh = np.empty(edge_shape)

    cdef double[:, ::1] xt = np.empty(node_shape)
    cdef double[:, ::1] lxt = np.empty(node_shape)
    cdef double[:, ::1] ldh = np.empty(node_shape)
    cdef double[:, ::1] lxh = np.empty(node_shape)
    cdef double[:, ::1] k2c = np.empty(node_shape)
    cdef double[::1] k1row = np.empty(n)
    cdef double[:, ::1] wsig = np.empty(node_shape)

    with nogil:
        for step in range(n_steps):
            for i in range(n):
                for c in range(nc):
                    bx[i, c] = x[i, c]
                    bp[i, c] = p[i, c]
                    bxh[i, c] = xh[i, c]
                    bph[i, c] = ph[i, c]
                    bdh[i, c] = dh[i, c]
                    sx[i, c] = x[i, c]
                    sp[i, c] = p[i, c]
                    sxh[i, c] = xh[i, c]
                    sph[i, c] = ph[i, c]
                    sdh[i, c] = dh[i, c]
                    ax[i, c] = 0.0
                    ap[i, c] = 0.0
                    axh[i, c] = 0.0
                    aph[i, c] = 0.0
                    adh[i, c] = 0.0
            for e in range(me):
                for c in range(nc):
                    bz[e, c] = z[e, c]
                    bzh[e, c] = zh[e, c]
                    sz[e, c] = z[e, c]
                    szh[e, c] = zh[e, c]
                    az[e, c] = 0.0
                    azh[e, c] = 0.0

            for stage in range(4):
                if stage == 0:
                    idx = 2 * step
                elif stage == 3:
                    idx = 2 * step + 2
                else:
                    idx = 2 * step + 1
                _rhs(
                    sx, sp, sxh, sph, sdh, sz, szh,
                    lap, bt, pbl, beta,
                    a_v, k0_v, alpha_v, gamma_v, sigma_v, rate_v, mu_v,
                    dmax_v, nu_v, am_v, pm_v,
                    k2_stages, c_stages, delta_stages, idx,
                    dx, dp, dxh, dph, ddh, dz, dzh,
                    xt, lxt, ldh, lxh, k2c, k1row, wsig,
                )
                wgt = 2.0 if (stage == 1 or stage == 2) else 1.0
                for i in range(n):
                    for c in range(nc):
                        ax[i, c] += wgt * dx[i, c]
                        ap[i, c] += wgt * dp[i, c]
                        axh[i, c] += wgt * dxh[i, c]
                        aph[i, c] += wgt * dph[i, c]
                        adh[i, c] += wgt * ddh[i, c]
                for e in range(me):
                    for c in range(nc):
                        az[e, c] += wgt * dz[e, c]
                        azh[e, c] += wgt * dzh[e, c]
                if stage < 3:
                    coeff = h if stage == 2 else half
                    for i in range(n):
                        for c in range(nc):
                            sx[i, c] = bx[i, c] + coeff * dx[i, c]
                            sp[i, c] = bp[i, c] + coeff * dp[i, c]
                            sxh[i, c] = bxh[i, c] + coeff * dxh[i, c]
                            sph[i, c] = bph[i, c] + coeff * dph[i, c]
                            sdh[i, c] = bdh[i, c] + coeff * ddh[i, c]
                    for e in range(me):
                        for c in range(nc):
                            sz[e, c] = bz[e, c] + coeff * dz[e, c]
                            szh[e, c] = bzh[e, c] + coeff * dzh[e, c]

            for i in range(n):
                for c in range(nc):
                    x[i, c] = bx[i, c] + sixth * ax[i, c]
                    p[i, c] = bp[i, c] + sixth * ap[i, c]
                    xh[i, c] = bxh[i, c] + sixth * axh[i, c]
                    ph[i, c] = bph[i, c] + sixth * aph[i, c]
                    dh[i, c] = bdh[i, c] + sixth * adh[i, c]
                    # projection forward invariance: clamp overshoot
                    if am_v[c] > 0.0 and pm_v[c] > 0.0:
                        if dh[i, c] > dmax_v[c]:
                            dh[i, c] = dmax_v[c]
                        elif dh[i, c] < -dmax_v[c]:
                            dh[i, c] = -dmax_v[c]
            for e in range(me):
                for c in range(nc):
                    z[e, c] = bz[e, c] + sixth * az[e, c]
                    zh[e, c] = bzh[e, c] + sixth * azh[e, c]
