"""Periodic orbits as critical points of the total chord length.

A closed itinerary (scatterer sequence plus the lattice offset of every free
flight) defines L(r_0, ..., r_{p-1}) = sum_j |P_{j+1}(r_{j+1}) + o_j - P_j(r_j)|.
Its critical points are exactly the billiard orbits following that
itinerary, so we solve grad L = 0 by damped Newton with the analytic
(cyclic tridiagonal) Hessian.
"""
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from ._numeric import DOUBLE_BITS, working_precision
from .billiard_map import OrbitRecord
from .errors import NewtonDiverged, NonPhysicalCollision
from .geometry import PhasePoint, lattice_offsets


@dataclass(frozen=True)
class ItinerarySpec:
    """Scatterer indices and per-flight lattice offsets of a periodic itinerary.

    ``offsets[j]`` translates scatterer ``scatterers[j+1]`` (cyclically) as
    seen from the cell of ``scatterers[j]``.
    """

    scatterers: tuple
    offsets: tuple
    tangency: tuple = ()
    periodic: bool = True

    def __post_init__(self):
        object.__setattr__(self, "scatterers", tuple(int(s) for s in self.scatterers))
        offs = self.offsets or tuple((0, 0) for _ in self.scatterers)
        object.__setattr__(self, "offsets", tuple(tuple(int(v) for v in o) for o in offs))
        if len(self.offsets) != len(self.scatterers):
            raise ValueError("one offset per free flight is required")

    def __len__(self):
        return len(self.scatterers)

    def __add__(self, other):
        return ItinerarySpec(self.scatterers + other.scatterers, self.offsets + other.offsets)

    def __mul__(self, k):
        return ItinerarySpec(self.scatterers * k, self.offsets * k)

    def rotate(self, k):
        k %= len(self)
        return ItinerarySpec(self.scatterers[k:] + self.scatterers[:k], self.offsets[k:] + self.offsets[:k])

    def to_json(self):
        return {"scatterers": list(self.scatterers), "offsets": [list(o) for o in self.offsets]}

    @classmethod
    def from_json(cls, d):
        return cls(tuple(d["scatterers"]), tuple(tuple(o) for o in d["offsets"]))


def itinerary_from_orbit(orbit):
    """ItinerarySpec of an orbit record that carries per-flight offsets."""
    return ItinerarySpec(tuple(p.i for p in orbit.points), tuple(orbit.offsets))


@dataclass
class _Geom:
    P: list
    n: list
    t: list
    K: list
    u: list = field(default_factory=list)
    ell: list = field(default_factory=list)


def _geometry(table, itin, rs, ops):
    p = len(itin)
    P, N, T, K = [], [], [], []
    for j, s in enumerate(itin.scatterers):
        pt, nn, tt = table[s].frame(ops, rs[j])
        P.append(pt)
        N.append(nn)
        T.append(tt)
        K.append(table[s].curvature(ops))
    g = _Geom(P, N, T, K)
    for j in range(p):
        k = (j + 1) % p
        a, b = itin.offsets[j]
        dx = P[k][0] + a - P[j][0]
        dy = P[k][1] + b - P[j][1]
        ell = ops.sqrt(dx * dx + dy * dy)
        g.u.append((dx / ell, dy / ell))
        g.ell.append(ell)
    return g


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1]


def _gradient(g):
    p = len(g.P)
    return [_dot(g.t[j], (g.u[j - 1][0] - g.u[j][0], g.u[j - 1][1] - g.u[j][1])) for j in range(p)]


def _hessian(g):
    """Sparse Hessian as list of row dicts."""
    p = len(g.P)
    H = [dict() for _ in range(p)]

    def add(i, j, v):
        H[i][j] = H[i].get(j, 0) + v

    for j in range(p):
        a, b = j, (j + 1) % p
        u, ell = g.u[j], g.ell[j]
        ua, ub = _dot(u, g.t[a]), _dot(u, g.t[b])
        add(a, a, (1 - ua * ua) / ell + g.K[a] * _dot(u, g.n[a]))
        add(b, b, (1 - ub * ub) / ell - g.K[b] * _dot(u, g.n[b]))
        cross = -(_dot(g.t[a], g.t[b]) - ua * ub) / ell
        add(a, b, cross)
        add(b, a, cross)
    return H


def sparse_solve(rows, rhs):
    """Gaussian elimination with partial pivoting on row dicts.

    Works for float and mpf entries; fill-in stays small for the cyclic
    tridiagonal matrices produced here.
    """
    n = len(rows)
    rows = [dict(r) for r in rows]
    rhs = list(rhs)
    perm = list(range(n))
    for k in range(n):
        piv, best = None, -1
        for i in range(k, n):
            v = rows[perm[i]].get(k)
            if v is not None and abs(v) > best:
                piv, best = i, abs(v)
        if piv is None or best == 0:
            raise ZeroDivisionError("singular Hessian")
        perm[k], perm[piv] = perm[piv], perm[k]
        pr = rows[perm[k]]
        pv = pr[k]
        for i in range(k + 1, n):
            r = rows[perm[i]]
            v = r.get(k)
            if v is None:
                continue
            f = v / pv
            del r[k]
            for c, w in pr.items():
                if c > k:
                    r[c] = r.get(c, 0) - f * w
            rhs[perm[i]] = rhs[perm[i]] - f * rhs[perm[k]]
    x = [0] * n
    for k in range(n - 1, -1, -1):
        r = rows[perm[k]]
        s = rhs[perm[k]]
        for c, w in r.items():
            if c > k:
                s = s - w * x[c]
        x[k] = s / r[k]
    return x


def _default_init(table, itin):
    """Arclengths facing the bisector of the directions to both neighbours."""
    p = len(itin)
    rs = []
    for j in range(p):
        c = np.array(table[itin.scatterers[j]].center_f)
        nxt = itin.scatterers[(j + 1) % p]
        prv = itin.scatterers[j - 1]
        to_next = np.array(table[nxt].center_f) + np.array(itin.offsets[j]) - c
        to_prev = np.array(table[prv].center_f) - np.array(itin.offsets[j - 1]) - c
        d = to_next / np.linalg.norm(to_next) + to_prev / np.linalg.norm(to_prev)
        if np.linalg.norm(d) < 1e-12:
            d = to_next
        R = table[itin.scatterers[j]].radius_f
        rs.append((-math.atan2(d[1], d[0]) * R) % (2 * math.pi * R))
    return rs


def _full_steps(table, itin, rs, g, grad, gnorm, ops, tol, steps):
    """Undamped Newton steps keeping the best iterate.

    Near a tangency the residual is not monotone along the Newton path (a
    step along the nearly singular direction first raises it), so no line
    search here.
    """
    best = (rs, gnorm)
    for _ in range(steps):
        try:
            step = sparse_solve(_hessian(g), [-v for v in grad])
        except ZeroDivisionError:
            break
        rs = [r + s for r, s in zip(rs, step)]
        g = _geometry(table, itin, rs, ops)
        grad = _gradient(g)
        gnorm = max(abs(v) for v in grad)
        if gnorm < best[1]:
            prev, best = best[1], (rs, gnorm)
            if gnorm <= tol and gnorm > prev / 4:
                break
    return best


def _newton(table, itin, rs, ops, tol, max_iter):
    rs = [ops.num(r) for r in rs]
    g = _geometry(table, itin, rs, ops)
    grad = _gradient(g)
    gnorm = max(abs(v) for v in grad)
    loose = ops.eps() ** 0.5
    for _ in range(max_iter):
        if gnorm == 0:
            return rs, gnorm
        if gnorm <= loose:
            rs, gnorm = _full_steps(table, itin, rs, g, grad, gnorm, ops, tol, 8)
            return rs, gnorm
        H = _hessian(g)
        try:
            step = sparse_solve(H, [-v for v in grad])
        except ZeroDivisionError as exc:
            raise NewtonDiverged(str(exc)) from exc
        lam = 1
        for _ in range(40):
            trial = [r + lam * s for r, s in zip(rs, step)]
            gt = _geometry(table, itin, trial, ops)
            grad_t = _gradient(gt)
            nt = max(abs(v) for v in grad_t)
            if nt < gnorm:
                break
            lam = lam / 2
        else:
            raise NewtonDiverged(f"line search failed at |grad| = {mpmath.nstr(gnorm, 3)}")
        rs, g, grad, gnorm = trial, gt, grad_t, nt
    if gnorm <= tol:
        return rs, gnorm
    raise NewtonDiverged(f"no convergence after {max_iter} iterations, |grad| = {mpmath.nstr(gnorm, 3)}")


def _segment_blocked(table, p0, p1, skip):
    """Index of a scatterer translate the open chord p0->p1 passes through."""
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    d = p1 - p0
    L = np.linalg.norm(d)
    mid = (p0 + p1) / 2
    offs = np.array(lattice_offsets(L / 2 + table.r_max + 2.0))
    centers, radii = table.centers, table.radii
    oo = np.repeat(offs + np.floor(mid), len(radii), axis=0)
    cs = np.tile(centers, (len(offs), 1)) + oo
    rr = np.tile(radii, len(offs))
    idx = np.tile(np.arange(len(radii)), len(offs))
    w = cs - p0
    s = np.clip(w @ d / (L * L), 0.0, 1.0)
    dist = np.linalg.norm(w - s[:, None] * d, axis=1)
    hit = dist < rr * (1 - 1e-10)
    for k in np.nonzero(hit)[0]:
        key = (int(idx[k]), (int(round(oo[k, 0])), int(round(oo[k, 1]))))
        if key not in skip:
            return key
    return None


def orbit_from_positions(table, itin, rs, ops, residual=None, check=True):
    g = _geometry(table, itin, rs, ops)
    p = len(itin)
    pts, cosines = [], []
    for j in range(p):
        cos_out = _dot(g.u[j], g.n[j])
        cos_in = -_dot(g.u[j - 1], g.n[j])
        sin_out = _dot(g.u[j], g.t[j])
        if check and (cos_out <= 0 or cos_in <= 0):
            raise NonPhysicalCollision(f"collision {j} on scatterer {itin.scatterers[j]} is not a reflection "
                                       f"(cos in {float(cos_in):.3g}, out {float(cos_out):.3g})")
        pts.append(PhasePoint(itin.scatterers[j], rs[j] % table[itin.scatterers[j]].perimeter(ops),
                              ops.atan2(sin_out, cos_out)))
        cosines.append(cos_out)
    if check:
        # chords are checked in the cell of their start point
        for j in range(p):
            k = (j + 1) % p
            a, b = itin.offsets[j]
            p0 = (float(g.P[j][0]), float(g.P[j][1]))
            p1 = (float(g.P[k][0]) + a, float(g.P[k][1]) + b)
            skip = {(itin.scatterers[j], (0, 0)), (itin.scatterers[k], (a, b))}
            blocked = _segment_blocked(table, p0, p1, skip)
            if blocked is not None:
                raise NonPhysicalCollision(f"flight {j} crosses scatterer {blocked[0]} at offset {blocked[1]}")
    return OrbitRecord(pts, list(g.ell), [False] * p, [ops.bits] * p, periodic=True,
                       residual=residual, offsets=list(itin.offsets), cos_phi=cosines)


def solve_periodic(table, itinerary, init=None, bits=None, tol=None, max_iter=60, check=True):
    """Periodic orbit following ``itinerary``.

    ``init`` is an optional list of arclengths (one per collision).  Newton
    runs in double precision first and is then polished at ``bits``
    (default: the table's precision).  Raises NewtonDiverged or
    NonPhysicalCollision.
    """
    itin = itinerary
    if len(itin) < 2:
        raise ValueError("period must be at least 2")
    bits = bits or max(table.precision_bits, DOUBLE_BITS)
    rs = list(init) if init is not None else _default_init(table, itin)
    if bits > DOUBLE_BITS and init is not None and any(not isinstance(r, float) for r in rs):
        stages = [bits]
    else:
        stages = [DOUBLE_BITS] + ([bits] if bits > DOUBLE_BITS else [])
    gnorm = None
    for b in stages:
        with working_precision(b) as ops:
            t = tol if (tol is not None and b == bits) else ops.eps() * 2 ** 12
            try:
                rs, gnorm = _newton(table, itin, rs, ops, t, max_iter)
            except NewtonDiverged:
                if b == DOUBLE_BITS and len(stages) > 1:
                    continue
                raise
    with working_precision(bits) as ops:
        rs = [ops.num(r) for r in rs]
        return orbit_from_positions(table, itin, rs, ops, residual=float(gnorm), check=check)


def reflection_residual(table, orbit, bits=None):
    """max_j |t_j . (u_{j-1} - u_j)| of a periodic orbit record."""
    itin = itinerary_from_orbit(orbit)
    b = bits or max(orbit.bits_used)
    with working_precision(b) as ops:
        g = _geometry(table, itin, [ops.num(p.r) for p in orbit.points], ops)
        return float(max(abs(v) for v in _gradient(g)))
