"""Compiled inner loops for the reduced and full characteristic systems.

All kernels share one field representation: a table ``G[k, j]`` on a uniform
time grid ``t0 + k*ht`` and a uniform radius grid ``j*dr``, bilinear inside,
``M/r**2`` outside the last node. A table with a single time row is static.
"""

import math

import numba as nb
import numpy as np

RK4 = 0
LEAPFROG = 1

DEPOSIT_CIC = 0
DEPOSIT_STEP = 1

# substep halvings tried before a guarded step is accepted as is
_MAX_HALVINGS = 24


@nb.njit(cache=True)
def field_at(G, t0, ht, dr, M, t, r):
    nt, nr = G.shape
    rmax = dr * (nr - 1)
    if r >= rmax:
        if r <= 0.0:
            return 0.0
        return M / (r * r)
    x = r / dr
    j = int(x)
    if j > nr - 2:
        j = nr - 2
    a = x - j
    if nt == 1:
        return (1.0 - a) * G[0, j] + a * G[0, j + 1]
    y = (t - t0) / ht
    k = int(math.floor(y))
    if k < 0:
        k = 0
    elif k > nt - 2:
        k = nt - 2
    b = y - k
    if b < 0.0:
        b = 0.0
    elif b > 1.0:
        b = 1.0
    g0 = (1.0 - a) * G[k, j] + a * G[k, j + 1]
    g1 = (1.0 - a) * G[k + 1, j] + a * G[k + 1, j + 1]
    return (1.0 - b) * g0 + b * g1


@nb.njit(cache=True)
def field_slope(G, t0, ht, dr, M, t, r):
    """dG/dr of the interpolant (one-sided inside a cell)."""
    nt, nr = G.shape
    rmax = dr * (nr - 1)
    if r >= rmax:
        return -2.0 * M / (r * r * r)
    j = int(r / dr)
    if j > nr - 2:
        j = nr - 2
    if nt == 1:
        return (G[0, j + 1] - G[0, j]) / dr
    y = (t - t0) / ht
    k = int(math.floor(y))
    if k < 0:
        k = 0
    elif k > nt - 2:
        k = nt - 2
    b = min(max(y - k, 0.0), 1.0)
    s0 = (G[k, j + 1] - G[k, j]) / dr
    s1 = (G[k + 1, j + 1] - G[k + 1, j]) / dr
    return (1.0 - b) * s0 + b * s1


@nb.njit(cache=True)
def lorentz(w, L, r, rel):
    if not rel:
        return 1.0
    if L > 0.0:
        q = L / r
        return math.sqrt(1.0 + w * w + q * q)
    return math.sqrt(1.0 + w * w)


@nb.njit(cache=True)
def accel(G, t0, ht, dr, M, sign, rel, t, r, w, L):
    if L > 0.0:
        gam = lorentz(w, L, r, rel)
        return L * L / (gam * r * r * r) - sign * field_at(G, t0, ht, dr, M, t, r)
    # radial orbits run through the centre on the odd extension of G
    if r < 0.0:
        return sign * field_at(G, t0, ht, dr, M, t, -r)
    return -sign * field_at(G, t0, ht, dr, M, t, r)


@nb.njit(cache=True)
def rhs(G, t0, ht, dr, M, sign, rel, t, r, w, L):
    gam = lorentz(w, L, r, rel)
    return w / gam, accel(G, t0, ht, dr, M, sign, rel, t, r, w, L)


@nb.njit(cache=True)
def _rk4_once(G, t0, ht, dr, M, sign, rel, t, h, r, w, L, rfloor):
    guarded = L > 0.0
    k1r, k1w = rhs(G, t0, ht, dr, M, sign, rel, t, r, w, L)
    r2 = r + 0.5 * h * k1r
    if guarded and r2 <= rfloor:
        return r, w, False
    k2r, k2w = rhs(G, t0, ht, dr, M, sign, rel, t + 0.5 * h, r2, w + 0.5 * h * k1w, L)
    r3 = r + 0.5 * h * k2r
    if guarded and r3 <= rfloor:
        return r, w, False
    k3r, k3w = rhs(G, t0, ht, dr, M, sign, rel, t + 0.5 * h, r3, w + 0.5 * h * k2w, L)
    r4 = r + h * k3r
    if guarded and r4 <= rfloor:
        return r, w, False
    k4r, k4w = rhs(G, t0, ht, dr, M, sign, rel, t + h, r4, w + h * k3w, L)
    rn = r + h / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)
    wn = w + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    if guarded and rn <= rfloor:
        return r, w, False
    return rn, wn, True


@nb.njit(cache=True)
def _leapfrog_once(G, t0, ht, dr, M, sign, rel, t, h, r, w, L, rfloor):
    wh = w + 0.5 * h * accel(G, t0, ht, dr, M, sign, rel, t, r, w, L)
    rn = r + h * wh / lorentz(wh, L, r, rel)
    if L > 0.0 and rn <= rfloor:
        return r, w, False
    wn = wh + 0.5 * h * accel(G, t0, ht, dr, M, sign, rel, t + h, rn, wh, L)
    return rn, wn, True


@nb.njit(cache=True)
def _one(G, t0, ht, dr, M, sign, rel, method, t, h, r, w, L, rfloor):
    if method == LEAPFROG:
        return _leapfrog_once(G, t0, ht, dr, M, sign, rel, t, h, r, w, L, rfloor)
    return _rk4_once(G, t0, ht, dr, M, sign, rel, t, h, r, w, L, rfloor)


@nb.njit(cache=True)
def step(G, t0, ht, dr, M, sign, rel, method, t, h, r, w, L, rfloor):
    """Advance one sample by h; returns (r, w, guard_triggered)."""
    rn, wn, ok = _one(G, t0, ht, dr, M, sign, rel, method, t, h, r, w, L, rfloor)
    hit = False
    if not ok:
        hit = True
        sub = 2
        rr = r
        ww = w
        good = False
        for _ in range(_MAX_HALVINGS):
            hs = h / sub
            rr = r
            ww = w
            good = True
            for q in range(sub):
                rr, ww, ok = _one(G, t0, ht, dr, M, sign, rel, method, t + q * hs, hs, rr, ww, L, rfloor)
                if not ok:
                    good = False
                    break
            if good:
                break
            sub *= 2
        if not good:
            # last resort: pin to the floor, keeps L exact
            rr = max(rr, rfloor)
        rn = rr
        wn = ww
    if L == 0.0 and rn < 0.0:
        rn = -rn
        wn = -wn
    return rn, wn, hit


@nb.njit(cache=True)
def deposit_row(r, wt, dr, nr, scheme, out):
    """Cumulative mass on nodes j*dr, j=0..nr-1, written into out."""
    n = r.size
    nc = nr - 1
    acc = np.zeros(nr)
    if scheme == DEPOSIT_STEP:
        for i in range(n):
            j = int(math.ceil(r[i] / dr - 1e-12))
            if j < 0:
                j = 0
            elif j > nr - 1:
                j = nr - 1
            acc[j] += wt[i]
        s = 0.0
        for j in range(nr):
            s += acc[j]
            out[j] = s
        return
    # cloud of width dr centred on the sample, shared between adjacent cells
    for i in range(n):
        x = r[i] / dr - 0.5
        c = int(math.floor(x))
        a = x - c
        c0 = min(max(c, 0), nc - 1)
        c1 = min(max(c + 1, 0), nc - 1)
        acc[c0] += (1.0 - a) * wt[i]
        acc[c1] += a * wt[i]
    s = 0.0
    out[0] = 0.0
    for j in range(1, nr):
        s += acc[j - 1]
        out[j] = s


@nb.njit(cache=True)
def _row_stats(r, w, L, wt, rel, k, pmax, rmax, vmax):
    pm = 0.0
    rm = 0.0
    vm = 0.0
    for i in range(r.size):
        if wt[i] <= 0.0:
            continue
        ri = r[i]
        if L[i] > 0.0:
            q = L[i] / ri
            p2 = w[i] * w[i] + q * q
        else:
            p2 = w[i] * w[i]
        p = math.sqrt(p2)
        if p > pm:
            pm = p
        if ri > rm:
            rm = ri
        v = p / math.sqrt(1.0 + p2) if rel else p
        if v > vm:
            vm = v
    pmax[k] = pm
    rmax[k] = rm
    vmax[k] = vm


@nb.njit(cache=True)
def sweep(r0, w0, L, wt, G, t0, ht, drf, M, sign, rel, method,
          nsteps, h, rfloor, dr, nr, scheme):
    """Flow all samples across a slab, depositing cumulative mass at every node.

    Returns (mass[nsteps+1, nr], pmax, rmax, vmax, r_end, w_end, guard_hits).
    vmax is the largest coordinate speed |dx/dt| over samples at each node.
    """
    n = r0.size
    r = r0.copy()
    w = w0.copy()
    mass = np.zeros((nsteps + 1, nr))
    pmax = np.zeros(nsteps + 1)
    rmax = np.zeros(nsteps + 1)
    vmax = np.zeros(nsteps + 1)
    deposit_row(r, wt, dr, nr, scheme, mass[0])
    _row_stats(r, w, L, wt, rel, 0, pmax, rmax, vmax)
    hits = 0
    for k in range(nsteps):
        t = t0 + k * h
        for i in range(n):
            rn, wn, hit = step(G, t0, ht, drf, M, sign, rel, method, t, h, r[i], w[i], L[i], rfloor)
            r[i] = rn
            w[i] = wn
            if hit:
                hits += 1
        deposit_row(r, wt, dr, nr, scheme, mass[k + 1])
        _row_stats(r, w, L, wt, rel, k + 1, pmax, rmax, vmax)
    return mass, pmax, rmax, vmax, r, w, hits


@nb.njit(cache=True)
def integrate_points(r0, w0, L, G, t0, ht, drf, M, sign, rel, method,
                     t_start, nsteps, h, rfloor):
    """Integrate independent samples nsteps of size h (h may be negative)."""
    n = r0.size
    r = r0.copy()
    w = w0.copy()
    hits = 0
    for i in range(n):
        rr = r[i]
        ww = w[i]
        for k in range(nsteps):
            rr, ww, hit = step(G, t0, ht, drf, M, sign, rel, method,
                               t_start + k * h, h, rr, ww, L[i], rfloor)
            if hit:
                hits += 1
        r[i] = rr
        w[i] = ww
    return r, w, hits


@nb.njit(cache=True)
def max_coordinate_speed(r0, w0, L, G, t0, ht, drf, M, sign, rel, method,
                         t_start, nsteps, h, rfloor):
    """Largest |dr/ds| and |dx/ds| over the step nodes of every trajectory."""
    n = r0.size
    radial = 0.0
    full = 0.0
    for i in range(n):
        rr = r0[i]
        ww = w0[i]
        for k in range(nsteps + 1):
            gam = lorentz(ww, L[i], rr, rel)
            q = L[i] / rr if L[i] > 0.0 else 0.0
            vr = abs(ww) / gam
            vf = math.sqrt(ww * ww + q * q) / gam
            if vr > radial:
                radial = vr
            if vf > full:
                full = vf
            if k < nsteps:
                rr, ww, _ = step(G, t0, ht, drf, M, sign, rel, method,
                                 t_start + k * h, h, rr, ww, L[i], rfloor)
    return radial, full


@nb.njit(cache=True)
def _rhs3(G, t0, ht, dr, M, sign, rel, t, x, v, dx, dv):
    rad = math.sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])
    if rel:
        gam = math.sqrt(1.0 + v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    else:
        gam = 1.0
    if rad > 0.0:
        g = sign * field_at(G, t0, ht, dr, M, t, rad) / rad
    else:
        g = 0.0
    for c in range(3):
        dx[c] = v[c] / gam
        dv[c] = -g * x[c]


@nb.njit(cache=True)
def integrate_points_3d(x0, v0, G, t0, ht, dr, M, sign, rel, t_start, nsteps, h):
    """RK4 on the unreduced system dx/ds = v (or v/gamma), dv/ds = -F(s, x)."""
    n = x0.shape[0]
    x = x0.copy()
    v = v0.copy()
    k1x = np.empty(3)
    k1v = np.empty(3)
    k2x = np.empty(3)
    k2v = np.empty(3)
    k3x = np.empty(3)
    k3v = np.empty(3)
    k4x = np.empty(3)
    k4v = np.empty(3)
    xs = np.empty(3)
    vs = np.empty(3)
    for i in range(n):
        xi = x[i].copy()
        vi = v[i].copy()
        for k in range(nsteps):
            t = t_start + k * h
            _rhs3(G, t0, ht, dr, M, sign, rel, t, xi, vi, k1x, k1v)
            for c in range(3):
                xs[c] = xi[c] + 0.5 * h * k1x[c]
                vs[c] = vi[c] + 0.5 * h * k1v[c]
            _rhs3(G, t0, ht, dr, M, sign, rel, t + 0.5 * h, xs, vs, k2x, k2v)
            for c in range(3):
                xs[c] = xi[c] + 0.5 * h * k2x[c]
                vs[c] = vi[c] + 0.5 * h * k2v[c]
            _rhs3(G, t0, ht, dr, M, sign, rel, t + 0.5 * h, xs, vs, k3x, k3v)
            for c in range(3):
                xs[c] = xi[c] + h * k3x[c]
                vs[c] = vi[c] + h * k3v[c]
            _rhs3(G, t0, ht, dr, M, sign, rel, t + h, xs, vs, k4x, k4v)
            for c in range(3):
                xi[c] += h / 6.0 * (k1x[c] + 2.0 * k2x[c] + 2.0 * k3x[c] + k4x[c])
                vi[c] += h / 6.0 * (k1v[c] + 2.0 * k2v[c] + 2.0 * k3v[c] + k4v[c])
        x[i] = xi
        v[i] = vi
    return x, v
