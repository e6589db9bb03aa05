# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the numerical hot kernels.

Mirrors ``timerkit._purepy`` function for function (same algorithms, same
branch switchovers); see that module for the algorithm notes.  The Monte
Carlo steppers perform the same IEEE operation sequences as the numpy
versions, so both backends produce bit-identical paths from identical
draws.
"""

import numpy as np

cimport cython
from libc.math cimport (atan2, exp, fabs, log, sin, sqrt, M_PI,
                        floor as c_floor, ceil as c_ceil, round as c_round)

NAME = "compiled"

cdef extern from "complex.h" nogil:
    double complex cexp(double complex)
    double complex clog(double complex)
    double complex csqrt(double complex)
    double cabs(double complex)
    double creal(double complex)
    double cimag(double complex)


cdef inline double _mag1(double complex z) noexcept nogil:
    # L1 magnitude: cheap convergence test, within sqrt(2) of |z|
    return fabs(creal(z)) + fabs(cimag(z))

DEF LOG_2PI_HALF = 0.9189385332046727417803297364
DEF LANCZOS_G = 4.7421875
DEF SERIES_RADIUS = 120.0
DEF HANKEL_MAX_ORDER = 12.0
DEF SERIES_LOSS = 18.0

cdef double[15] _LC
_LC[0] = 0.99999999999999709182
_LC[1] = 57.156235665862923517
_LC[2] = -59.597960355475491248
_LC[3] = 14.136097974741747174
_LC[4] = -0.49191381609762019978
_LC[5] = 0.33994649984811888699e-4
_LC[6] = 0.46523628927048575665e-4
_LC[7] = -0.98374475304879564677e-4
_LC[8] = 0.15808870322491248884e-3
_LC[9] = -0.21026444172410488319e-3
_LC[10] = 0.21743961811521264320e-3
_LC[11] = -0.16431810653676389022e-3
_LC[12] = 0.84418223983852743293e-4
_LC[13] = -0.26190838401581408670e-4
_LC[14] = 0.36899182659531622704e-5


# ---------------------------------------------------------------------------
# log-gamma

cdef double complex _lanczos_lg(double complex z) noexcept nogil:
    cdef double complex s = _LC[0]
    cdef double complex t
    cdef int k
    for k in range(1, 15):
        s = s + _LC[k] / (z - 1.0 + k)
    t = z + (LANCZOS_G - 0.5)
    return (z - 0.5) * clog(t) - t + LOG_2PI_HALF + clog(s)


cdef double complex _clgamma(double complex z) noexcept nogil:
    cdef double x = creal(z)
    cdef double y = cimag(z)
    cdef double acc_r, s, val
    cdef double complex acc, w
    cdef int k, n
    if y == 0.0:
        if x <= 0.0 and x == c_floor(x):
            return <double> (0.0 / 0.0) + 0j
        if x >= 0.5:
            return _lanczos_lg(z)
        if x > 0.0:
            acc_r = 0.0
            while x < 0.5:
                acc_r += log(x)
                x += 1.0
            return _lanczos_lg(x + 0j) - acc_r
        s = sin(M_PI * x)
        val = log(M_PI / fabs(s)) - creal(_lanczos_lg((1.0 - x) + 0j))
        if s < 0.0:
            return val + 1j * M_PI
        return val + 0j
    if y < 0.0:
        w = _clgamma(x - 1j * y)
        return creal(w) - 1j * cimag(w)
    if x >= 0.5:
        return _lanczos_lg(z)
    n = <int> c_ceil(0.5 - x)
    acc = 0.0
    for k in range(n):
        acc = acc + clog(z + k)
    return _lanczos_lg(z + n) - acc


def loggamma(z):
    """Principal branch of log Gamma(z) (complex scalar)."""
    return complex(_clgamma(complex(z)))


def loggamma_vec(z):
    """Vectorized principal log-gamma."""
    z = np.asarray(z, dtype=np.complex128)
    cdef double complex[::1] zv = np.ascontiguousarray(z).ravel()
    out = np.empty(zv.shape[0], dtype=np.complex128)
    cdef double complex[::1] ov = out
    cdef Py_ssize_t i, n = zv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = _clgamma(zv[i])
    return out.reshape(z.shape)


# ---------------------------------------------------------------------------
# modified Bessel function of the first kind, mantissa/exponent form

cdef double complex _bessel_series(double complex nu, double complex z,
                                   double* ex) noexcept nogil:
    cdef double complex lead = nu * clog(0.5 * z) - _clgamma(nu + 1.0)
    cdef double complex q = 0.25 * z * z
    cdef double complex t = 1.0
    cdef double complex s = 1.0
    cdef int small = 0
    cdef int k
    for k in range(600):
        t = t * q / ((k + 1.0) * (nu + k + 1.0))
        s = s + t
        if cabs(t) <= 1e-17 * (cabs(s) + 1e-300):
            small += 1
            if small >= 2 and k >= 4:
                break
        else:
            small = 0
    ex[0] = creal(lead)
    return s * cexp(1j * cimag(lead))


cdef double complex _bessel_hankel(double complex nu, double complex z,
                                   double* ex) noexcept nogil:
    cdef double complex nu2 = 4.0 * nu * nu
    cdef double complex term = 1.0
    cdef double complex s_minus = 1.0
    cdef double complex s_plus = 1.0
    cdef double prev = 1.0
    cdef double mag, sgn
    cdef double complex root, m
    cdef int k
    for k in range(1, 30):
        term = term * (nu2 - (2.0 * k - 1.0) ** 2) / (8.0 * k * z)
        mag = cabs(term)
        if mag > prev:
            break
        if k % 2 == 0:
            s_minus = s_minus + term
        else:
            s_minus = s_minus - term
        s_plus = s_plus + term
        if mag < 1e-17:
            break
        prev = mag
    sgn = 1.0 if cimag(z) >= 0.0 else -1.0
    root = csqrt(2.0 * M_PI * z)
    m = (cexp(1j * cimag(z)) * s_minus
         + cexp(sgn * 1j * M_PI * (nu + 0.5) - 2.0 * creal(z)
                - 1j * cimag(z)) * s_plus)
    ex[0] = creal(z)
    return m / root


cdef double complex _debye_u(int k, double complex p) noexcept nogil:
    cdef double complex p2 = p * p
    if k == 0:
        return 1.0 + 0.0 * p
    if k == 1:
        return (3.0 * p - 5.0 * p * p2) / 24.0
    if k == 2:
        return (81.0 * p2 - 462.0 * p2 * p2 + 385.0 * p2 * p2 * p2) / 1152.0
    if k == 3:
        return (30375.0 * p * p2 - 369603.0 * p * p2 * p2
                + 765765.0 * p * p2 * p2 * p2
                - 425425.0 * p * p2 * p2 * p2 * p2) / 414720.0
    return (4465125.0 * p2 * p2 - 94121676.0 * p2 * p2 * p2
            + 349922430.0 * p2 * p2 * p2 * p2
            - 446185740.0 * p2 * p2 * p2 * p2 * p2
            + 185910725.0 * p2 * p2 * p2 * p2 * p2 * p2) / 39813120.0


cdef double complex _bessel_debye(double complex nu, double complex z,
                                  double* ex) noexcept nogil:
    cdef double complex w = z / nu
    cdef double complex r = csqrt(1.0 + w * w)
    cdef double complex eta = r + clog(w / (1.0 + r))
    cdef double complex p = 1.0 / r
    cdef double complex s = 0.0
    cdef double complex nupow = 1.0
    cdef double complex lead
    cdef int k
    for k in range(5):
        s = s + _debye_u(k, p) / nupow
        nupow = nupow * nu
    lead = nu * eta
    ex[0] = creal(lead)
    return s / (csqrt(2.0 * M_PI * nu) * csqrt(r)) * cexp(1j * cimag(lead))


cdef double complex _besseli_me(double complex nu, double complex z,
                                double* ex) noexcept nogil:
    cdef double loss
    cdef double sgn
    cdef double complex m
    if cimag(nu) == 0.0 and creal(nu) < 0.0 and creal(nu) == c_floor(creal(nu)):
        nu = -nu
    if z == 0.0:
        ex[0] = 0.0
        if nu == 0.0:
            return 1.0 + 0j
        return 0.0 + 0j
    loss = cabs(z) - fabs(creal(z))
    if cabs(z) <= SERIES_RADIUS and loss <= SERIES_LOSS:
        return _bessel_series(nu, z, ex)
    if creal(z) < 0.0:
        sgn = 1.0 if cimag(z) >= 0.0 else -1.0
        m = _besseli_me(nu, -z, ex)
        return m * cexp(sgn * 1j * M_PI * nu)
    if cabs(nu) <= HANKEL_MAX_ORDER and cabs(z) >= 18.0:
        return _bessel_hankel(nu, z, ex)
    if creal(nu) > 0.0 and cabs(nu) > HANKEL_MAX_ORDER and cabs(z) > SERIES_RADIUS:
        return _bessel_debye(nu, z, ex)
    return _bessel_series(nu, z, ex)


def besseli_me(nu, z):
    """I_nu(z) = m * exp(e): returns (m, e)."""
    cdef double ex = 0.0
    cdef double complex m = _besseli_me(complex(nu), complex(z), &ex)
    return complex(m), float(ex)


DEF KMAX = 600


def besseli_scaled_rr(nu, c):
    """Grid of exp(-c) I_nu(c), complex orders x real positive arguments.

    Series terms use a per-order reciprocal table so the inner loop is pure
    complex multiplication (complex division is the hot cost otherwise).
    """
    nu = np.asarray(nu, dtype=np.complex128)
    c = np.asarray(c, dtype=np.float64)
    cdef double complex[::1] nv = np.ascontiguousarray(nu).ravel()
    cdef double[::1] cv = np.ascontiguousarray(c).ravel()
    cdef Py_ssize_t m = cv.shape[0], n = nv.shape[0]
    out = np.empty((m, n), dtype=np.complex128)
    cdef double complex[:, ::1] ov = out
    lg = np.empty(n, dtype=np.complex128)
    cdef double complex[::1] lgv = lg
    inv = np.empty(KMAX, dtype=np.complex128)
    cdef double complex[::1] invv = inv
    cdef Py_ssize_t i, j
    cdef int k, small
    cdef double ci, ex, re
    cdef double complex lead, q, t, s, val, nj
    with nogil:
        for j in range(n):
            nj = nv[j]
            lgv[j] = _clgamma(nj + 1.0)
            for k in range(KMAX):
                invv[k] = 1.0 / ((k + 1.0) * (nj + k + 1.0))
            for i in range(m):
                ci = cv[i]
                if ci <= SERIES_RADIUS:
                    lead = nj * log(0.5 * ci) - lgv[j] - ci
                    q = 0.25 * ci * ci
                    t = 1.0
                    s = 1.0
                    small = 0
                    for k in range(KMAX):
                        t = t * q * invv[k]
                        s = s + t
                        if _mag1(t) <= 1e-17 * (_mag1(s) + 1e-300):
                            small += 1
                            if small >= 2 and k >= 4:
                                break
                        else:
                            small = 0
                    re = creal(lead)
                    if re > 700.0:
                        re = 700.0
                    ov[i, j] = s * cexp(re + 1j * cimag(lead))
                else:
                    val = _besseli_me(nj, ci + 0j, &ex)
                    ex = ex - ci
                    if ex > -745.0:
                        ov[i, j] = val * exp(ex)
                    else:
                        ov[i, j] = 0.0
    return out


def besseli_me_cc(nu, w):
    """Elementwise I_nu(w) = M * exp(E) for real order, complex arguments.

    The fixed real order admits a real reciprocal table, making the series
    inner loop a complex-by-real multiply.
    """
    w = np.asarray(w, dtype=np.complex128)
    shape = w.shape
    flat = np.ascontiguousarray(w).ravel()
    cdef double complex[::1] wv = flat
    cdef double nu_r = float(nu)
    cdef Py_ssize_t n = wv.shape[0]
    m_out = np.empty(n, dtype=np.complex128)
    e_out = np.empty(n, dtype=np.float64)
    cdef double complex[::1] mv = m_out
    cdef double[::1] ev = e_out
    inv = np.empty(KMAX, dtype=np.float64)
    cdef double[::1] invv = inv
    cdef Py_ssize_t i
    cdef int k, small
    cdef double ex, loss
    cdef double complex z, lead, q, t, s, lg1
    with nogil:
        lg1 = _clgamma(nu_r + 1.0 + 0j)
        for k in range(KMAX):
            invv[k] = 1.0 / ((k + 1.0) * (nu_r + k + 1.0))
        for i in range(n):
            z = wv[i]
            loss = cabs(z) - fabs(creal(z))
            if z != 0.0 and cabs(z) <= SERIES_RADIUS and loss <= SERIES_LOSS:
                lead = nu_r * clog(0.5 * z) - lg1
                q = 0.25 * z * z
                t = 1.0
                s = 1.0
                small = 0
                for k in range(KMAX):
                    t = t * q * invv[k]
                    s = s + t
                    if _mag1(t) <= 1e-17 * (_mag1(s) + 1e-300):
                        small += 1
                        if small >= 2 and k >= 4:
                            break
                    else:
                        small = 0
                mv[i] = s * cexp(1j * cimag(lead))
                ev[i] = creal(lead)
            else:
                mv[i] = _besseli_me(nu_r + 0j, z, &ex)
                ev[i] = ex
    return m_out.reshape(shape), e_out.reshape(shape)


# ---------------------------------------------------------------------------
# Kummer 1F1, mantissa/exponent form

cdef double complex _hyp1f1_tail(double complex p, double complex q,
                                 double complex w, double* relerr) noexcept nogil:
    cdef double complex s = 1.0
    cdef double complex t = 1.0
    cdef double prev = 1.0
    cdef double best = 1.0
    cdef double mag
    cdef int k
    for k in range(60):
        t = t * (p + k) * (q + k) / ((k + 1.0) * w)
        mag = cabs(t)
        if mag > prev:
            break
        s = s + t
        best = mag
        if mag < 1e-17:
            break
        prev = mag
    relerr[0] = best / (cabs(s) + 1e-300)
    return s


cdef int _hyp1f1_me(double complex a, double complex b, double complex z,
                    double complex* mout, double* eout) noexcept nogil:
    """Returns 0 on success, 1 on failure (asymptotic stall / no convergence)."""
    cdef double complex s, t, l1, l2, s1, s2, mz, lgb, m
    cdef double ex, r1, r2, e, tol, mag
    cdef int k, ok
    if creal(z) < 0.0:
        if _hyp1f1_me(b - a, b, -z, mout, eout):
            return 1
        eout[0] += creal(z)
        return 0
    if cabs(z) - creal(z) > 18.0 and cabs(z) > 30.0:
        lgb = _clgamma(b)
        l1 = z + (a - b) * clog(z) + lgb - _clgamma(a)
        s1 = _hyp1f1_tail(b - a, 1.0 - a, z, &r1)
        if cimag(z) != 0.0:
            mz = -z
        else:
            mz = -creal(z) + 0j
        l2 = -a * clog(mz) + lgb - _clgamma(b - a)
        s2 = _hyp1f1_tail(a, a - b + 1.0, -z, &r2)
        e = creal(l1)
        if creal(l2) > e:
            e = creal(l2)
        m = s1 * cexp(l1 - e) + s2 * cexp(l2 - e)
        tol = r1 * exp(min(creal(l1) - e, 0.0)) + r2 * exp(min(creal(l2) - e, 0.0))
        if tol > 1e-9 * (cabs(m) + 1e-300):
            return 1
        mout[0] = m
        eout[0] = e
        return 0
    s = 1.0
    t = 1.0
    ex = 0.0
    ok = 0
    for k in range(20000):
        t = t * ((a + k) * z) / ((b + k) * (k + 1.0))
        s = s + t
        mag = cabs(s)
        if mag > 1e270 or cabs(t) > 1e270:
            s = s * 1e-270
            t = t * 1e-270
            ex += 270.0 * log(10.0)
        if cabs(t) <= 1e-17 * (cabs(s) + 1e-300):
            ok += 1
            if ok >= 2 and k >= 3:
                mout[0] = s
                eout[0] = ex
                return 0
        else:
            ok = 0
    return 1


def hyp1f1_me(a, b, z):
    """1F1(a; b; z) = m * exp(e): returns (m, e)."""
    cdef double complex m = 0.0
    cdef double e = 0.0
    if _hyp1f1_me(complex(a), complex(b), complex(z), &m, &e):
        raise RuntimeError(
            f"1F1 evaluation failed for a={a}, b={b}, z={z}: "
            "argument too oscillatory for the series")
    return complex(m), float(e)


def hyp1f1_vec(a, b, z):
    """Broadcast elementwise 1F1; returns (mantissa, exponent) arrays."""
    a, b, z = np.broadcast_arrays(
        np.asarray(a, dtype=np.complex128),
        np.asarray(b, dtype=np.complex128),
        np.asarray(z, dtype=np.complex128))
    shape = a.shape
    cdef double complex[::1] av = np.ascontiguousarray(a).ravel()
    cdef double complex[::1] bv = np.ascontiguousarray(b).ravel()
    cdef double complex[::1] zv = np.ascontiguousarray(z).ravel()
    cdef Py_ssize_t n = av.shape[0]
    m_out = np.empty(n, dtype=np.complex128)
    e_out = np.empty(n, dtype=np.float64)
    cdef double complex[::1] mv = m_out
    cdef double[::1] ev = e_out
    cdef Py_ssize_t i
    cdef int bad = -1
    with nogil:
        for i in range(n):
            if _hyp1f1_me(av[i], bv[i], zv[i], &mv[i], &ev[i]):
                bad = i
                break
    if bad >= 0:
        raise RuntimeError(
            f"1F1 evaluation failed for a={av[bad]}, b={bv[bad]}, z={zv[bad]}")
    return m_out.reshape(shape), e_out.reshape(shape)


# ---------------------------------------------------------------------------
# Monte Carlo block steppers (bit-compatible with the numpy versions)

def mc_block_heston(double[::1] x, double[::1] v, double[::1] ivar,
                    unsigned char[::1] done, double[::1] tcross,
                    double[::1] xcross, double[:, :, ::1] normals,
                    params, double budget, double dt, long step0):
    cdef double kappa = params[0]
    cdef double theta = params[1]
    cdef double sigma = params[2]
    cdef double r = params[3]
    cdef double rho = params[4]
    cdef double sdt = sqrt(dt)
    cdef double c1 = sqrt(1.0 - rho * rho)
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nsteps = normals.shape[2]
    cdef Py_ssize_t i, j
    cdef double vp, sq, dx, di, f
    with nogil:
        for i in range(n):
            for j in range(nsteps):
                vp = v[i] if v[i] > 0.0 else 0.0
                sq = sqrt(vp)
                dx = (r - 0.5 * vp) * dt + sq * (c1 * normals[0, i, j]
                                                 + rho * normals[1, i, j]) * sdt
                di = vp * dt
                if (not done[i]) and ivar[i] + di >= budget and di > 0.0:
                    f = (budget - ivar[i]) / di
                    tcross[i] = (step0 + j + f) * dt
                    xcross[i] = x[i] + f * dx
                    done[i] = 1
                x[i] += dx
                ivar[i] += di
                v[i] += kappa * (theta - vp) * dt + sigma * sq * normals[1, i, j] * sdt
    return step0 + nsteps


def mc_block_32_recip(double[::1] x, double[::1] u, double[::1] ivar,
                      unsigned char[::1] done, double[::1] tcross,
                      double[::1] xcross, double[:, :, ::1] normals,
                      params, double budget, double dt, long step0):
    cdef double kappa = params[0]
    cdef double theta = params[1]
    cdef double eps = params[2]
    cdef double r = params[3]
    cdef double rho = params[4]
    cdef double sdt = sqrt(dt)
    cdef double c1 = sqrt(1.0 - rho * rho)
    cdef double eps2 = eps * eps
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nsteps = normals.shape[2]
    cdef Py_ssize_t i, j
    cdef double up, vloc, sq, dx, di, f, den
    with nogil:
        for i in range(n):
            for j in range(nsteps):
                up = u[i] if u[i] > 0.0 else 0.0
                den = up if up > 1e-12 else 1e-12
                vloc = 1.0 / den
                sq = sqrt(vloc)
                dx = (r - 0.5 * vloc) * dt + sq * (c1 * normals[0, i, j]
                                                   + rho * normals[1, i, j]) * sdt
                di = vloc * dt
                if (not done[i]) and ivar[i] + di >= budget and di > 0.0:
                    f = (budget - ivar[i]) / di
                    tcross[i] = (step0 + j + f) * dt
                    xcross[i] = x[i] + f * dx
                    done[i] = 1
                x[i] += dx
                ivar[i] += di
                u[i] += (kappa + eps2 - kappa * theta * up) * dt - eps * sqrt(up) * normals[1, i, j] * sdt
    return step0 + nsteps


def mc_block_32_euler(double[::1] x, double[::1] v, double[::1] ivar,
                      unsigned char[::1] done, double[::1] tcross,
                      double[::1] xcross, double[:, :, ::1] normals,
                      params, double budget, double dt, long step0):
    cdef double kappa = params[0]
    cdef double theta = params[1]
    cdef double eps = params[2]
    cdef double r = params[3]
    cdef double rho = params[4]
    cdef double sdt = sqrt(dt)
    cdef double c1 = sqrt(1.0 - rho * rho)
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nsteps = normals.shape[2]
    cdef Py_ssize_t i, j
    cdef double vp, sq, dx, di, f
    with nogil:
        for i in range(n):
            for j in range(nsteps):
                vp = v[i] if v[i] > 0.0 else 0.0
                sq = sqrt(vp)
                dx = (r - 0.5 * vp) * dt + sq * (c1 * normals[0, i, j]
                                                 + rho * normals[1, i, j]) * sdt
                di = vp * dt
                if (not done[i]) and ivar[i] + di >= budget and di > 0.0:
                    f = (budget - ivar[i]) / di
                    tcross[i] = (step0 + j + f) * dt
                    xcross[i] = x[i] + f * dx
                    done[i] = 1
                x[i] += dx
                ivar[i] += di
                v[i] += kappa * vp * (theta - vp) * dt + eps * vp * sq * normals[1, i, j] * sdt
    return step0 + nsteps


# ---------------------------------------------------------------------------
# Heston joint (z_B, T_B) contour integrand, fully in C

def heston_joint_g(phi, double[::1] z, double[::1] shift, double z0,
                   double lam, double t_b, double sigma):
    """Matrix of the Kratzer-kernel contour integrand for a z batch.

    Rows are z values (scaled by exp(shift)), columns the contour nodes.
    Includes the winding-number branch correction of I_(2 lam)(w).
    """
    phi = np.asarray(phi, dtype=np.complex128)
    cdef double complex[::1] pv = np.ascontiguousarray(phi).ravel()
    cdef Py_ssize_t n = pv.shape[0], m = z.shape[0]
    out = np.empty((m, n), dtype=np.complex128)
    cdef double complex[:, ::1] ov = out
    inv = np.empty(KMAX, dtype=np.float64)
    cdef double[::1] invv = inv
    cdef Py_ssize_t i, j
    cdef int k, small
    cdef double nu_r = 2.0 * lam
    cdef double sq_z0 = sqrt(z0)
    cdef double wind, re, ex
    cdef double complex av, uu, qexp, om, coth, inv_sinh, log_sinh, fac
    cdef double complex log_fac, branch, w, lead, q, t, s, expo, lg1, base
    lg1 = _clgamma(nu_r + 1.0 + 0j)
    sqz = np.sqrt(np.asarray(z) * z0)
    lnz = 0.5 * np.log(np.asarray(z) * z0)
    cdef double[::1] sqzv = np.ascontiguousarray(sqz)
    cdef double[::1] lnzv = np.ascontiguousarray(lnz)
    cdef double complex lhalf
    with nogil:
        for k in range(KMAX):
            invv[k] = 1.0 / ((k + 1.0) * (nu_r + k + 1.0))
        for j in range(n):
            av = csqrt(2.0 * pv[j])
            uu = csqrt(0.5 * pv[j]) * (sigma * t_b)
            qexp = cexp(-2.0 * uu)
            om = 1.0 - qexp
            coth = (1.0 + qexp) / om
            inv_sinh = 2.0 * cexp(-uu) / om
            log_sinh = uu + clog(om) - 0.6931471805599453
            fac = 2.0 * av * inv_sinh
            log_fac = 0.6931471805599453 + clog(av) - log_sinh
            wind = c_round((cimag(log_fac) - atan2(cimag(fac), creal(fac)))
                           / (2.0 * M_PI))
            branch = cexp(1j * (4.0 * M_PI * lam) * wind)
            base = fac * branch
            lhalf = clog(0.5 * fac)   # log(w) = lhalf + lnz[i], no clog per cell
            for i in range(m):
                w = fac * sqzv[i]
                # cheap upper bound of the element magnitude (|I| <= e^|w|)
                re = (nu_r * (creal(lhalf) + lnzv[i]) - creal(lg1) + cabs(w)
                      - creal(av * coth) * (z[i] + z0) + shift[i])
                if re < -46.0:
                    ov[i, j] = 0.0
                    continue
                if w != 0.0 and cabs(w) <= SERIES_RADIUS and \
                        cabs(w) - fabs(creal(w)) <= SERIES_LOSS:
                    lead = nu_r * (lhalf + lnzv[i]) - lg1
                    q = 0.25 * w * w
                    t = 1.0
                    s = 1.0
                    small = 0
                    for k in range(KMAX):
                        t = t * q * invv[k]
                        s = s + t
                        if _mag1(t) <= 1e-17 * (_mag1(s) + 1e-300):
                            small += 1
                            if small >= 2 and k >= 4:
                                break
                        else:
                            small = 0
                else:
                    s = _besseli_me(nu_r + 0j, w, &ex)
                    lead = ex + 0j
                expo = (-av * coth * (z[i] + z0)) + lead + shift[i]
                re = creal(expo)
                if re > 700.0:
                    re = 700.0
                ov[i, j] = base * cexp(re + 1j * cimag(expo)) * s
    return out


# ---------------------------------------------------------------------------
# 3/2 joint (z_B, T_B) contour integrand, fully in C

def morse_joint_g(phi, double[::1] c, double[::1] shift, double eps):
    """Matrix of the Morse-kernel contour integrand for a z batch.

    Element (i, j) is exp(shift_i) * exp(-c_i) * I_nu_j(c_i) with
    nu = 2 sqrt(2 phi) / eps; elements provably below exp(-46) of scale are
    skipped via the series lead bound, which is what keeps the spiky
    small-stopping-time kernels affordable.
    """
    phi = np.asarray(phi, dtype=np.complex128)
    cdef double complex[::1] pv = np.ascontiguousarray(phi).ravel()
    cdef Py_ssize_t n = pv.shape[0], m = c.shape[0]
    out = np.empty((m, n), dtype=np.complex128)
    cdef double complex[:, ::1] ov = out
    lnc = np.log(0.5 * np.asarray(c) + 1e-300)
    cdef double[::1] lncv = np.ascontiguousarray(lnc)
    inv = np.empty(KMAX, dtype=np.complex128)
    cdef double complex[::1] invv = inv
    cdef Py_ssize_t i, j
    cdef int k, small
    cdef double ci, re, ex, coef = 2.0 * sqrt(2.0) / eps
    cdef double complex nu, lg, lead, q, t, s, val
    with nogil:
        for j in range(n):
            nu = coef * csqrt(pv[j])
            lg = _clgamma(nu + 1.0)
            for k in range(KMAX):
                invv[k] = 1.0 / ((k + 1.0) * (nu + k + 1.0))
            for i in range(m):
                ci = c[i]
                if ci <= SERIES_RADIUS:
                    # |series sum| <= e^c, so this bounds the element
                    re = creal(nu) * lncv[i] - creal(lg) + shift[i]
                    if re < -46.0:
                        ov[i, j] = 0.0
                        continue
                    lead = nu * lncv[i] - lg - ci + shift[i]
                    q = 0.25 * ci * ci
                    t = 1.0
                    s = 1.0
                    small = 0
                    for k in range(KMAX):
                        t = t * q * invv[k]
                        s = s + t
                        if _mag1(t) <= 1e-17 * (_mag1(s) + 1e-300):
                            small += 1
                            if small >= 2 and k >= 4:
                                break
                        else:
                            small = 0
                    re = creal(lead)
                    if re > 700.0:
                        re = 700.0
                    ov[i, j] = s * cexp(re + 1j * cimag(lead))
                else:
                    val = _besseli_me(nu, ci + 0j, &ex)
                    ex = ex - ci + shift[i]
                    if ex > -745.0:
                        ov[i, j] = val * exp(min(ex, 700.0))
                    else:
                        ov[i, j] = 0.0
    return out
