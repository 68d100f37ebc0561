"""Pure-Python inner loop; the fallback when the compiled kernel is unavailable.

``run_block`` advances the solver through ``B = G.shape[0]`` iterations using
pre-drawn randomness: row ``G[it]`` holds ``[U1, U2, U]`` (length ``2N + 1``)
and ``W1[it]``, ``W2[it]`` the two scenarios. ``x`` and ``yz = [y, z]`` are
updated in place; post-iteration states go to ``Xout``, ``Yout``, ``Zout``.
Returns ``(completed, evals)``; ``completed < B`` flags a non-finite value in
iteration ``completed``, whose effects are not committed.

Region kinds: 0 all-space, 1 box, 2 ball. Profiles: 0 relu-shift, 1 softplus-shift.
Cost codes match ``problems.KERNEL_*``.
"""

from __future__ import annotations

import math


def _cost(code, th, x, w, N):
    if code == 0:
        return abs(x[0] - w[0])
    if code == 1:
        acc = 0.0
        for i in range(N):
            r = x[i] - w[i]
            acc += r * r
        return 0.5 * acc
    if code == 2:
        k = int(th[0])
        acc = 0.0
        for i in range(k):
            r = th[1 + i] + w[i]
            for j in range(N):
                r -= th[1 + k + i * N + j] * x[j]
            acc += r * r
        return acc
    k = int(th[0])
    best = -1e308
    for i in range(k):
        r = -w[i]
        for j in range(N):
            r += th[1 + i * N + j] * x[j]
        if r > best:
            best = r
    return best


def _risk(prof, v, eta, t):
    if prof == 0:
        return (v if v > 0.0 else 0.0) + eta
    tv = t * v
    if tv > 30.0:
        return v + eta
    if tv < -30.0:
        return eta
    return math.log1p(math.exp(tv)) / t + eta


def _clip(v, lo, hi):
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def _finite(v):
    return not (math.isinf(v) or math.isnan(v))


def run_block(code, theta, N, M, region_kind, lower, upper, center, radius,
              prof, eta, t, p, c, chain, mu, ylo, yhi, zlo, zhi, bypass_z,
              x, yz, G, W1, W2, alpha, beta, gamma, Xout, Yout, Zout):
    th = [float(v) for v in theta]
    lo = [float(v) for v in lower]
    hi = [float(v) for v in upper]
    ctr = [float(v) for v in center]
    xs = [float(v) for v in x]
    y, z = float(yz[0]), float(yz[1])
    evals = 0
    done = 0
    for it in range(G.shape[0]):
        g = G[it].tolist()
        w1 = W1[it].tolist()
        w2 = W2[it].tolist()
        F1 = _cost(code, th, [xs[i] + mu * g[i] for i in range(N)], w1, N)
        evals += 1
        b = float(beta[it])
        ynew = _clip((1.0 - b) * y + b * F1, ylo, yhi)
        F2 = _cost(code, th, [xs[i] + mu * g[N + i] for i in range(N)], w2, N)
        evals += 1
        u = g[2 * N]
        try:
            rp = math.pow(_risk(prof, F2 - mu * u - y, eta, t), p)
        except OverflowError:
            break
        if bypass_z:
            znew = 1.0
        else:
            gm = float(gamma[it])
            znew = _clip((1.0 - gm) * z + gm * rp, zlo, zhi)
        F10 = _cost(code, th, xs, w1, N)
        evals += 1
        F20 = _cost(code, th, xs, w2, N)
        evals += 1
        d1 = (F1 - F10) / mu
        try:
            r0 = math.pow(_risk(prof, F20 - y, eta, t), p)
            factor = 1.0 if bypass_z else chain * math.pow(z, (1.0 - p) / p)
        except (OverflowError, ValueError):
            break
        d2 = (rp - r0) / mu
        a = float(alpha[it])
        ok = _finite(d1) and _finite(d2) and _finite(factor) and _finite(ynew) and _finite(znew)
        xn = []
        for i in range(N):
            e = d1 * g[i] + c * factor * (g[N + i] + d1 * g[i] * u) * d2
            v = xs[i] - a * e
            if not _finite(v):
                ok = False
            xn.append(v)
        if not ok:
            break
        if region_kind == 1:
            xn = [_clip(xn[i], lo[i], hi[i]) for i in range(N)]
        elif region_kind == 2:
            nrm = 0.0
            for i in range(N):
                nrm += (xn[i] - ctr[i]) * (xn[i] - ctr[i])
            nrm = math.sqrt(nrm)
            if nrm > radius:
                scale = radius / nrm
                xn = [ctr[i] + (xn[i] - ctr[i]) * scale for i in range(N)]
        xs = xn
        Xout[it, :] = xs
        y = ynew
        z = znew
        Yout[it] = y
        Zout[it] = z
        done += 1
    x[:] = xs
    yz[0] = y
    yz[1] = z
    return done, evals
