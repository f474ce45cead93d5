"""Hot numeric kernels, each in a numba and a numpy flavour.

Public functions dispatch on :func:`forestlab._accel.get_backend`.  The two
flavours scan candidates in the same order with the same tie-breaks, and
their floating-point outputs agree to rounding; ``tests/test_kernels.py``
checks this and ``benchmarks/bench_kernels.py``
times them against each other.

Conventions
-----------
Tube kernels work with a lattice basis ``B`` (columns) and offset ``g``:
the lattice point for integer ``z`` is ``B @ z + g``.  The segment is
``{a + t*b : |t| <= l}`` with ``b`` a unit vector.  For a point ``p`` at
axial coordinate ``t0 = (p - a).b`` and perpendicular distance ``h``,
the *entry length* ``max(0, |t0| - sqrt(eps^2 - h^2))`` is the smallest
half-length at which the closed segment reaches the open ball B(p, eps).
"""
import math

import numpy as np

from . import _accel
from ._accel import njit

HIT, NO_HIT, OVER_BUDGET = 0, 1, 2

# relative slack added to analytic s-intervals before the exact test
_INTERVAL_SLACK = 1e-9


# ---------------------------------------------------------------------------
# tube enumeration
# ---------------------------------------------------------------------------

def _box(Binv, g, a, b, eps, l):
    c = Binv @ (a - g)
    half = l * np.abs(Binv @ b) + eps * np.sqrt(np.sum(Binv * Binv, axis=1))
    lo = np.ceil(c - half).astype(np.int64)
    hi = np.floor(c + half).astype(np.int64)
    return lo, hi


@njit
def _quad_interval(qa, qb, qc):
    """Open interval where qa s^2 + qb s + qc < 0 (qa >= 0); empty -> lo > hi."""
    if qa <= 1e-300:
        if abs(qb) <= 1e-300:
            if qc < 0.0:
                return -np.inf, np.inf
            return 1.0, -1.0
        r = -qc / qb
        if qb > 0:
            return -np.inf, r
        return r, np.inf
    disc = qb * qb - 4.0 * qa * qc
    if disc <= 0.0:
        return 1.0, -1.0
    sq = math.sqrt(disc)
    if qb >= 0:
        t = -0.5 * (qb + sq)
    else:
        t = -0.5 * (qb - sq)
    r1 = t / qa
    r2 = qc / t if t != 0.0 else r1
    if r1 > r2:
        r1, r2 = r2, r1
    return r1, r2


@njit
def _s_interval(P, m, b, eps, l):
    """Hull of the s-values with dist(P + s m, segment) < eps."""
    n = P.shape[0]
    pb = 0.0
    mb = 0.0
    for i in range(n):
        pb += P[i] * b[i]
        mb += m[i] * b[i]
    A = 0.0
    Bq = 0.0
    C = 0.0
    mm = 0.0
    for i in range(n):
        pp = P[i] - pb * b[i]
        mp = m[i] - mb * b[i]
        A += mp * mp
        Bq += 2.0 * pp * mp
        C += pp * pp
        mm += m[i] * m[i]
    e2 = eps * eps
    lo = np.inf
    hi = -np.inf
    c1, c2 = _quad_interval(A, Bq, C - e2)
    if c1 <= c2:
        # axial slab |pb + s mb| <= l
        if abs(mb) > 1e-300:
            s1 = (-l - pb) / mb
            s2 = (l - pb) / mb
            if s1 > s2:
                s1, s2 = s2, s1
            c1 = max(c1, s1)
            c2 = min(c2, s2)
        elif abs(pb) > l:
            c2 = c1 - 1.0
        if c1 <= c2:
            lo = min(lo, c1)
            hi = max(hi, c2)
    for sign in (-1.0, 1.0):
        qb = 0.0
        qc = 0.0
        for i in range(n):
            d = P[i] - sign * l * b[i]
            qb += 2.0 * d * m[i]
            qc += d * d
        r1, r2 = _quad_interval(mm, qb, qc - e2)
        if r1 <= r2:
            lo = min(lo, r1)
            hi = max(hi, r2)
    return lo, hi


@njit
def _entry(p, a, b, eps):
    """Entry length of ball B(p, eps) for the line through a along b;
    returns inf when the line misses the ball."""
    n = p.shape[0]
    t0 = 0.0
    for i in range(n):
        t0 += (p[i] - a[i]) * b[i]
    h2 = 0.0
    for i in range(n):
        r = p[i] - a[i] - t0 * b[i]
        h2 += r * r
    e2 = eps * eps
    if h2 >= e2:
        return np.inf
    return abs(t0) - math.sqrt(e2 - h2)


@njit
def _tube_scan_nb(B, g, a, b, eps, l, lo, hi, axis, find_min, out_z, out_e):
    """Scan the integer box [lo, hi] slicing along ``axis``.

    find_min: return (count=1 or 0) with the smallest-entry point in out_z[0].
    Otherwise fill out_z/out_e and return the count (may exceed capacity;
    the caller re-runs with a larger buffer).
    """
    n = B.shape[0]
    others = np.empty(n - 1, dtype=np.int64)
    k = 0
    for i in range(n):
        if i != axis:
            others[k] = i
            k += 1
    cur = np.empty(n, dtype=np.int64)
    for j in range(n - 1):
        cur[others[j]] = lo[others[j]]
    m = B[:, axis].copy()
    base = np.empty(n)
    pt = np.empty(n)
    count = 0
    best = np.inf
    cap = out_z.shape[0]
    done = False
    while not done:
        for i in range(n):
            acc = g[i] - a[i]
            for j in range(n - 1):
                acc += B[i, others[j]] * cur[others[j]]
            base[i] = acc
        s1, s2 = _s_interval(base, m, b, eps, l)
        if s1 <= s2:
            slack = _INTERVAL_SLACK * (1.0 + abs(s1) + abs(s2))
            i1 = max(lo[axis], int(math.ceil(s1 - slack)))
            i2 = min(hi[axis], int(math.floor(s2 + slack)))
            for s in range(i1, i2 + 1):
                for i in range(n):
                    pt[i] = base[i] + a[i] + s * m[i]
                e = _entry(pt, a, b, eps)
                if e < l:
                    e = max(e, 0.0)
                    cur[axis] = s
                    if find_min:
                        if e < best:
                            best = e
                            for i in range(n):
                                out_z[0, i] = cur[i]
                            out_e[0] = e
                            count = 1
                    else:
                        if count < cap:
                            for i in range(n):
                                out_z[count, i] = cur[i]
                            out_e[count] = e
                        count += 1
        # odometer over the non-sliced coordinates, last one fastest
        j = n - 2
        while j >= 0:
            ax = others[j]
            if cur[ax] < hi[ax]:
                cur[ax] += 1
                break
            cur[ax] = lo[ax]
            j -= 1
        if j < 0:
            done = True
    return count


def _slicing(lo, hi):
    widths = np.maximum(hi - lo + 1, 0)
    axis = int(np.argmax(widths))
    prefixes = 1
    for i, w in enumerate(widths):
        if i != axis:
            prefixes *= int(w)
    return axis, prefixes, widths


def _tube_scan_np(B, g, a, b, eps, l, lo, hi, axis):
    n = B.shape[0]
    others = [i for i in range(n) if i != axis]
    if any(hi[i] < lo[i] for i in range(n)):
        return np.empty((0, n), dtype=np.int64), np.empty(0)
    grids = np.meshgrid(*[np.arange(lo[i], hi[i] + 1) for i in others], indexing="ij")
    pref = np.stack([gr.ravel() for gr in grids], axis=1) if others else np.zeros((1, 0), np.int64)
    P = pref @ B[:, others].T + (g - a) if others else np.tile(g - a, (1, 1))
    m = B[:, axis]
    pb = P @ b
    mb = float(m @ b)
    Pp = P - pb[:, None] * b
    mp = m - mb * b
    e2 = eps * eps

    def quad(qa, qb, qc):
        qa = np.broadcast_to(np.asarray(qa, float), qc.shape)
        qb = np.broadcast_to(np.asarray(qb, float), qc.shape)
        lo_ = np.full(qc.shape, 1.0)
        hi_ = np.full(qc.shape, -1.0)
        lin = qa <= 1e-300
        const = lin & (np.abs(qb) <= 1e-300)
        allr = const & (qc < 0)
        lo_[allr], hi_[allr] = -np.inf, np.inf
        l1 = lin & ~const
        with np.errstate(divide="ignore", invalid="ignore"):
            r = -qc / qb
        pos = l1 & (qb > 0)
        neg = l1 & (qb < 0)
        lo_[pos], hi_[pos] = -np.inf, r[pos]
        lo_[neg], hi_[neg] = r[neg], np.inf
        q = ~lin
        disc = qb * qb - 4.0 * qa * qc
        ok = q & (disc > 0)
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t = np.where(qb >= 0, -0.5 * (qb + sq), -0.5 * (qb - sq))
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = t / qa
            r2 = np.where(t != 0, qc / t, r1)
        lo_[ok] = np.minimum(r1, r2)[ok]
        hi_[ok] = np.maximum(r1, r2)[ok]
        return lo_, hi_

    A = float(mp @ mp)
    c1, c2 = quad(A, 2.0 * (Pp @ mp), np.sum(Pp * Pp, axis=1) - e2)
    if abs(mb) > 1e-300:
        s1 = (-l - pb) / mb
        s2 = (l - pb) / mb
        c1 = np.maximum(c1, np.minimum(s1, s2))
        c2 = np.minimum(c2, np.maximum(s1, s2))
    else:
        c2 = np.where(np.abs(pb) > l, c1 - 1.0, c2)
    lo_s = np.where(c1 <= c2, c1, np.inf)
    hi_s = np.where(c1 <= c2, c2, -np.inf)
    mm = float(m @ m)
    for sign in (-1.0, 1.0):
        D = P - sign * l * b
        r1, r2 = quad(mm, 2.0 * (D @ m), np.sum(D * D, axis=1) - e2)
        okr = r1 <= r2
        lo_s = np.where(okr, np.minimum(lo_s, r1), lo_s)
        hi_s = np.where(okr, np.maximum(hi_s, r2), hi_s)
    good = lo_s <= hi_s
    # empty rows carry +-inf bounds; keep their slack finite
    lo_s = np.where(good, lo_s, 0.0)
    hi_s = np.where(good, hi_s, -1.0)
    slack = _INTERVAL_SLACK * (1.0 + np.abs(lo_s) + np.abs(hi_s))
    i1 = np.where(good, np.maximum(lo[axis], np.ceil(lo_s - slack)), 0).astype(np.int64)
    i2 = np.where(good, np.minimum(hi[axis], np.floor(hi_s + slack)), -1).astype(np.int64)
    cnt = np.maximum(i2 - i1 + 1, 0)
    total = int(cnt.sum())
    if total == 0:
        return np.empty((0, n), dtype=np.int64), np.empty(0)
    rows = np.repeat(np.arange(len(cnt)), cnt)
    offs = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    s = i1[rows] + offs
    pts = P[rows] + a + s[:, None] * m
    t0 = (pts - a) @ b
    h2 = np.sum((pts - a - t0[:, None] * b) ** 2, axis=1)
    inside = h2 < e2
    e = np.where(inside, np.abs(t0) - np.sqrt(np.where(inside, e2 - h2, 0.0)), np.inf)
    keep = e < l
    z = np.empty((total, n), dtype=np.int64)
    if others:
        z[:, others] = pref[rows]
    z[:, axis] = s
    return z[keep], np.maximum(e[keep], 0.0)


def tube_points(B, g, a, b, eps, l, cell_budget=10 ** 8):
    """All integer ``z`` with dist(B z + g, segment) < eps and their entry
    lengths.  Returns ``(z, e, status)``; status is OVER_BUDGET when the
    sliced box holds more than ``cell_budget`` cells."""
    B = np.ascontiguousarray(B, dtype=float)
    g = np.ascontiguousarray(g, dtype=float)
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    Binv = np.linalg.inv(B)
    lo, hi = _box(Binv, g, a, b, eps, l)
    axis, prefixes, widths = _slicing(lo, hi)
    n = B.shape[0]
    if np.any(widths <= 0):
        return np.empty((0, n), np.int64), np.empty(0), HIT
    if prefixes + int(widths[axis]) > cell_budget:
        return np.empty((0, n), np.int64), np.empty(0), OVER_BUDGET
    if _accel.get_backend() == "numpy":
        z, e = _tube_scan_np(B, g, a, b, eps, l, lo, hi, axis)
        return z, e, HIT
    cap = 64
    while True:
        out_z = np.empty((cap, n), dtype=np.int64)
        out_e = np.empty(cap)
        cnt = _tube_scan_nb(B, g, a, b, float(eps), float(l), lo, hi, axis, False, out_z, out_e)
        if cnt <= cap:
            return out_z[:cnt], out_e[:cnt], HIT
        cap = cnt


@njit
def _first_hits_nb(B, Binv, g, anchors, dirs, eps, lcaps, l0, cell_budget, out_e, out_z, status):
    n = B.shape[0]
    rownorm = np.empty(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += Binv[i, j] * Binv[i, j]
        rownorm[i] = math.sqrt(acc)
    lo = np.empty(n, dtype=np.int64)
    hi = np.empty(n, dtype=np.int64)
    zbuf = np.empty((1, n), dtype=np.int64)
    ebuf = np.empty(1)
    for q in range(anchors.shape[0]):
        a = anchors[q]
        b = dirs[q]
        cap = lcaps[q]
        l = min(l0, cap)
        status[q] = NO_HIT
        out_e[q] = np.inf
        while True:
            prefixes = 1
            wmax = 0
            axis = 0
            empty = False
            for i in range(n):
                c = 0.0
                bb = 0.0
                for j in range(n):
                    c += Binv[i, j] * (a[j] - g[j])
                    bb += Binv[i, j] * b[j]
                half = l * abs(bb) + eps * rownorm[i]
                lo[i] = int(math.ceil(c - half))
                hi[i] = int(math.floor(c + half))
                w = hi[i] - lo[i] + 1
                if w <= 0:
                    empty = True
                if w > wmax:
                    wmax = w
                    axis = i
            if not empty:
                for i in range(n):
                    if i != axis:
                        prefixes *= hi[i] - lo[i] + 1
                if prefixes + wmax > cell_budget:
                    status[q] = OVER_BUDGET
                    break
                cnt = _tube_scan_nb(B, g, a, b, eps, l, lo, hi, axis, True, zbuf, ebuf)
                if cnt > 0:
                    status[q] = HIT
                    out_e[q] = ebuf[0]
                    for i in range(n):
                        out_z[q, i] = zbuf[0, i]
                    break
            if l >= cap:
                break
            l = min(2.0 * l, cap)


def _first_hits_np(B, g, anchors, dirs, eps, lcaps, l0, cell_budget):
    Q, n = anchors.shape
    out_e = np.full(Q, np.inf)
    out_z = np.zeros((Q, n), dtype=np.int64)
    status = np.full(Q, NO_HIT, dtype=np.int64)
    Binv = np.linalg.inv(B)
    for q in range(Q):
        a, b, cap = anchors[q], dirs[q], lcaps[q]
        l = min(l0, cap)
        while True:
            lo, hi = _box(Binv, g, a, b, eps, l)
            axis, prefixes, widths = _slicing(lo, hi)
            if np.all(widths > 0):
                if prefixes + int(widths[axis]) > cell_budget:
                    status[q] = OVER_BUDGET
                    break
                z, e = _tube_scan_np(B, g, a, b, eps, l, lo, hi, axis)
                if e.size:
                    k = int(np.argmin(e))
                    status[q] = HIT
                    out_e[q] = e[k]
                    out_z[q] = z[k]
                    break
            if l >= cap:
                break
            l = min(2.0 * l, cap)
    return out_e, out_z, status


def first_hits(B, g, anchors, dirs, eps, lcaps, l0=1.0, cell_budget=10 ** 8):
    """Smallest entry length per (anchor, direction) query for one grid.

    The tube half-length starts at ``l0`` and doubles up to the per-query
    cap ``lcaps[q]``.  Any point outside a scanned tube of half-length ``l``
    has entry length >= l, so the minimum over the first non-empty tube is
    the exact minimum.  Returns ``(entry, z, status)``.
    """
    B = np.ascontiguousarray(B, dtype=float)
    g = np.ascontiguousarray(g, dtype=float)
    anchors = np.ascontiguousarray(np.atleast_2d(anchors), dtype=float)
    dirs = np.ascontiguousarray(np.atleast_2d(dirs), dtype=float)
    lcaps = np.ascontiguousarray(np.broadcast_to(lcaps, (anchors.shape[0],)), dtype=float)
    if _accel.get_backend() == "numpy":
        return _first_hits_np(B, g, anchors, dirs, float(eps), lcaps, float(l0), int(cell_budget))
    Q, n = anchors.shape
    out_e = np.empty(Q)
    out_z = np.zeros((Q, n), dtype=np.int64)
    status = np.empty(Q, dtype=np.int64)
    _first_hits_nb(B, np.linalg.inv(B), g, anchors, dirs, float(eps), lcaps, float(l0),
                   int(cell_budget), out_e, out_z, status)
    return out_e, out_z, status


# ---------------------------------------------------------------------------
# sup-norm point/segment distance
# ---------------------------------------------------------------------------

@njit
def _sup_dist_one(c, v):
    """min over lam in [0,1] of max_i |c_i - lam v_i| (exact, piecewise linear)."""
    n = c.shape[0]
    best = 0.0
    for i in range(n):
        best = max(best, abs(c[i]))
    f1 = 0.0
    for i in range(n):
        f1 = max(f1, abs(c[i] - v[i]))
    best = min(best, f1)
    for i in range(n):
        for j in range(i, n):
            for sgn in (-1.0, 1.0):
                if i == j and sgn < 0:
                    continue
                if i == j:
                    den = v[i]
                    num = c[i]
                else:
                    den = v[i] - sgn * v[j]
                    num = c[i] - sgn * c[j]
                if den == 0.0:
                    continue
                lam = num / den
                if lam <= 0.0 or lam >= 1.0:
                    continue
                f = 0.0
                for k in range(n):
                    f = max(f, abs(c[k] - lam * v[k]))
                if f < best:
                    best = f
    return best


@njit
def _pair_sup_dist_nb(points, starts, vecs, pi, si, out):
    n = points.shape[1]
    c = np.empty(n)
    for k in range(pi.shape[0]):
        p = pi[k]
        s = si[k]
        for i in range(n):
            c[i] = points[p, i] - starts[s, i]
        out[k] = _sup_dist_one(c, vecs[s])


def _candidate_lams(C, V):
    n = C.shape[1]
    cols = [np.zeros(len(C)), np.ones(len(C))]
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(n):
            cols.append(C[:, i] / V[:, i])
            for j in range(i + 1, n):
                cols.append((C[:, i] - C[:, j]) / (V[:, i] - V[:, j]))
                cols.append((C[:, i] + C[:, j]) / (V[:, i] + V[:, j]))
    lam = np.stack(cols, axis=1)
    lam = np.where(np.isfinite(lam), np.clip(lam, 0.0, 1.0), 0.0)
    return lam


def _pair_sup_dist_np(points, starts, vecs, pi, si, chunk=200_000):
    out = np.empty(len(pi))
    for lo in range(0, len(pi), chunk):
        sl = slice(lo, lo + chunk)
        C = points[pi[sl]] - starts[si[sl]]
        V = vecs[si[sl]]
        lam = _candidate_lams(C, V)
        vals = np.max(np.abs(C[:, None, :] - lam[:, :, None] * V[:, None, :]), axis=2)
        out[sl] = vals.min(axis=1)
    return out


def pair_sup_dist(points, starts, vecs, pi, si):
    """``out[k] = min_{0<=lam<=1} ||points[pi[k]] - starts[si[k]] - lam*vecs[si[k]]||_inf``."""
    points = np.ascontiguousarray(points, dtype=float)
    starts = np.ascontiguousarray(starts, dtype=float)
    vecs = np.ascontiguousarray(vecs, dtype=float)
    pi = np.ascontiguousarray(pi, dtype=np.int64)
    si = np.ascontiguousarray(si, dtype=np.int64)
    if _accel.get_backend() == "numpy":
        return _pair_sup_dist_np(points, starts, vecs, pi, si)
    out = np.empty(len(pi))
    _pair_sup_dist_nb(points, starts, vecs, pi, si, out)
    return out


# ---------------------------------------------------------------------------
# exhaustive integer relations
# ---------------------------------------------------------------------------

@njit
def _better(q, norm, best, best_norm):
    """Order: smaller sup norm first, then lexicographically smaller."""
    if best_norm < 0 or norm < best_norm:
        return True
    if norm > best_norm:
        return False
    for i in range(q.shape[0]):
        if q[i] < best[i]:
            return True
        if q[i] > best[i]:
            return False
    return False


@njit
def _relation_scan_nb(V, H, tol, out_q, out_res, found):
    m, n = V.shape
    q = np.empty(n, dtype=np.int64)
    cur = np.empty(n, dtype=np.int64)
    best = np.zeros(n, dtype=np.int64)
    for r in range(m):
        v = V[r]
        piv = 0
        vmax = -1.0
        vn = 0.0
        for i in range(n):
            vn += v[i] * v[i]
            if abs(v[i]) >= vmax:
                vmax = abs(v[i])
                piv = i
        vn = math.sqrt(vn)
        found[r] = False
        if vn == 0.0:
            continue
        thr = tol * vn
        best_norm = -1
        for i in range(n):
            cur[i] = -H
        while True:
            S = 0.0
            pnorm = 0
            for i in range(n):
                if i != piv:
                    S += cur[i] * v[i]
                    pnorm = max(pnorm, abs(cur[i]))
            lo_f = (-S - thr) / v[piv]
            hi_f = (-S + thr) / v[piv]
            if lo_f > hi_f:
                lo_f, hi_f = hi_f, lo_f
            k1 = max(-H, int(math.floor(lo_f)))
            k2 = min(H, int(math.ceil(hi_f)))
            for k in range(k1, k2 + 1):
                if k == 0 and pnorm == 0:
                    continue
                res = abs(S + k * v[piv])
                if res >= thr:
                    continue
                for i in range(n):
                    q[i] = cur[i]
                q[piv] = k
                # canonical sign: first nonzero coordinate positive
                for i in range(n):
                    if q[i] != 0:
                        if q[i] < 0:
                            for j in range(n):
                                q[j] = -q[j]
                        break
                norm = max(pnorm, abs(k))
                if _better(q, norm, best, best_norm):
                    best_norm = norm
                    for i in range(n):
                        best[i] = q[i]
                    out_res[r] = res
            j = n - 1
            while j >= 0:
                if j == piv:
                    j -= 1
                    continue
                if cur[j] < H:
                    cur[j] += 1
                    break
                cur[j] = -H
                j -= 1
            if j < 0:
                break
        if best_norm >= 0:
            found[r] = True
            for i in range(n):
                out_q[r, i] = best[i]


def _relation_scan_np_one(v, H, tol):
    n = v.size
    vn = float(np.linalg.norm(v))
    if vn == 0.0:
        return None, np.nan
    piv = int(n - 1 - np.argmax(np.abs(v[::-1])))
    others = [i for i in range(n) if i != piv]
    thr = tol * vn
    rng = np.arange(-H, H + 1)
    if others:
        grids = np.meshgrid(*[rng] * len(others), indexing="ij")
        pref = np.stack([gr.ravel() for gr in grids], axis=1)
    else:
        pref = np.zeros((1, 0), dtype=np.int64)
    S = pref @ v[others] if others else np.zeros(1)
    a_ = (-S - thr) / v[piv]
    b_ = (-S + thr) / v[piv]
    k1 = np.maximum(-H, np.floor(np.minimum(a_, b_))).astype(np.int64)
    k2 = np.minimum(H, np.ceil(np.maximum(a_, b_))).astype(np.int64)
    cnt = np.maximum(k2 - k1 + 1, 0)
    rows = np.repeat(np.arange(len(cnt)), cnt)
    k = k1[rows] + (np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt))
    res = np.abs(S[rows] + k * v[piv])
    Q = np.empty((len(k), n), dtype=np.int64)
    Q[:, others] = pref[rows]
    Q[:, piv] = k
    ok = (res < thr) & np.any(Q != 0, axis=1)
    Q, res = Q[ok], res[ok]
    if len(Q) == 0:
        return None, np.nan
    first = np.argmax(Q != 0, axis=1)
    sgn = np.sign(Q[np.arange(len(Q)), first])
    Q = Q * sgn[:, None]
    norms = np.max(np.abs(Q), axis=1)
    order = np.lexsort(tuple(Q[:, i] for i in range(n - 1, -1, -1)) + (norms,))
    return Q[order[0]], float(res[order[0]])


def relation_scan(V, H, tol):
    """Smallest integer relation per row of ``V``.

    For each row ``v`` find the nonzero ``q`` with ``||q||_inf <= H`` and
    ``|q.v| < tol*||v||_2`` that is smallest in (sup norm, lexicographic)
    order after fixing the sign so the first nonzero entry is positive.
    The pivot coordinate (largest ``|v_i|``) is solved for exactly, so the
    scan is exhaustive over the box.  Returns ``(q, residual, found)``.
    """
    V = np.ascontiguousarray(np.atleast_2d(V), dtype=float)
    m, n = V.shape
    out_q = np.zeros((m, n), dtype=np.int64)
    out_res = np.full(m, np.nan)
    found = np.zeros(m, dtype=np.bool_)
    if _accel.get_backend() == "numpy":
        for r in range(m):
            q, res = _relation_scan_np_one(V[r], int(H), float(tol))
            if q is not None:
                out_q[r], out_res[r], found[r] = q, res, True
        return out_q, out_res, found
    _relation_scan_nb(V, int(H), float(tol), out_q, out_res, found)
    return out_q, out_res, found
