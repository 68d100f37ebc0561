# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loop of the zeroth-order solver for the built-in costs.

Mirrors ``_pykernel`` operation for operation; see that module for the
argument contract.
"""

from libc.math cimport fabs, sqrt, pow, exp, log1p, isfinite


cdef inline double _cost(int code, const double[::1] th, const double* x, const double* w, int N) nogil:
    cdef int i, j, k
    cdef double acc, r, best
    if code == 0:
        return fabs(x[0] - w[0])
    if code == 1:
        acc = 0.0
        for i in range(N):
            r = x[i] - w[i]
            acc += r * r
        return 0.5 * acc
    if code == 2:
        k = <int>th[0]
        acc = 0.0
        for i in range(k):
            r = th[1 + i] + w[i]
            for j in range(N):
                r -= th[1 + k + i * N + j] * x[j]
            acc += r * r
        return acc
    # code 3: piecewise-linear maximum
    k = <int>th[0]
    best = -1e308
    for i in range(k):
        r = -w[i]
        for j in range(N):
            r += th[1 + i * N + j] * x[j]
        if r > best:
            best = r
    return best


cdef inline double _risk(int prof, double v, double eta, double t) nogil:
    cdef double tv
    if prof == 0:
        return (v if v > 0.0 else 0.0) + eta
    tv = t * v
    if tv > 30.0:
        return v + eta
    if tv < -30.0:
        return eta
    return log1p(exp(tv)) / t + eta


cdef inline double _clip(double v, double lo, double hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def run_block(int code, const double[::1] theta, int N, int M,
              int region_kind, const double[::1] lower, const double[::1] upper,
              const double[::1] center, double radius,
              int prof, double eta, double t, double p, double c, double chain, double mu,
              double ylo, double yhi, double zlo, double zhi, bint bypass_z,
              double[::1] x, double[::1] yz,
              const double[:, ::1] G, const double[:, ::1] W1, const double[:, ::1] W2,
              const double[::1] alpha, const double[::1] beta, const double[::1] gamma,
              double[:, ::1] Xout, double[::1] Yout, double[::1] Zout):
    cdef int B = G.shape[0]
    cdef int it, i
    cdef long evals = 0
    cdef double y = yz[0], z = yz[1]
    cdef double F1, F10, F2, F20, d1, d2, u, a, rp, r0, factor, e, nrm, scale, ynew, znew
    cdef double xp[256]
    cdef double xn[256]
    cdef bint ok = True
    cdef int done = 0
    if N > 256:
        raise ValueError("compiled kernel supports N <= 256")
    with nogil:
        for it in range(B):
            for i in range(N):
                xp[i] = x[i] + mu * G[it, i]
            F1 = _cost(code, theta, xp, &W1[it, 0], N)
            evals += 1
            ynew = _clip((1.0 - beta[it]) * y + beta[it] * F1, ylo, yhi)
            for i in range(N):
                xp[i] = x[i] + mu * G[it, N + i]
            F2 = _cost(code, theta, xp, &W2[it, 0], N)
            evals += 1
            u = G[it, 2 * N]
            rp = pow(_risk(prof, F2 - mu * u - y, eta, t), p)
            if bypass_z:
                znew = 1.0
            else:
                znew = _clip((1.0 - gamma[it]) * z + gamma[it] * rp, zlo, zhi)
            F10 = _cost(code, theta, &x[0], &W1[it, 0], N)
            evals += 1
            F20 = _cost(code, theta, &x[0], &W2[it, 0], N)
            evals += 1
            d1 = (F1 - F10) / mu
            r0 = pow(_risk(prof, F20 - y, eta, t), p)
            d2 = (rp - r0) / mu
            if bypass_z:
                factor = 1.0
            else:
                factor = chain * pow(z, (1.0 - p) / p)
            a = alpha[it]
            ok = isfinite(d1) and isfinite(d2) and isfinite(factor) and isfinite(ynew) and isfinite(znew)
            for i in range(N):
                e = d1 * G[it, i] + c * factor * (G[it, N + i] + d1 * G[it, i] * u) * d2
                xn[i] = x[i] - a * e
                if not isfinite(xn[i]):
                    ok = False
            if not ok:
                break
            if region_kind == 1:
                for i in range(N):
                    xn[i] = _clip(xn[i], lower[i], upper[i])
            elif region_kind == 2:
                nrm = 0.0
                for i in range(N):
                    nrm += (xn[i] - center[i]) * (xn[i] - center[i])
                nrm = sqrt(nrm)
                if nrm > radius:
                    scale = radius / nrm
                    for i in range(N):
                        xn[i] = center[i] + (xn[i] - center[i]) * scale
            for i in range(N):
                x[i] = xn[i]
                Xout[it, i] = xn[i]
            y = ynew
            z = znew
            Yout[it] = y
            Zout[it] = z
            done += 1
    yz[0] = y
    yz[1] = z
    return done, evals
