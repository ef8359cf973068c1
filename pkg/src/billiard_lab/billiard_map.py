"""The billiard map, its inverse, flight times and the exact derivative.

Collision search runs a double-precision prefilter with numpy over all
scatterer translates in a growing window, then re-evaluates the few
surviving candidates at working precision.  Near-tangent rays escalate the
working precision until the discriminant is resolved or the table's bit
budget is exhausted; an unresolved discriminant at the top of the budget is
an exact tangency and the ray continues straight through it.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from ._numeric import DOUBLE_BITS, is_mp, max_bits, working_precision
from .errors import BilliardError, FlightCapExceeded, GrazingDerivative, OrbitStepError, PrecisionExhausted
from .geometry import PhasePoint, lattice_offsets

ESCALATION = (DOUBLE_BITS, 128, 256, 512, 1024, 2048, 4096, 8192, 16384, 32768, 65536)

_offset_cache = {}


def _offsets(radius):
    key = round(radius, 6)
    if key not in _offset_cache:
        _offset_cache[key] = np.array(lattice_offsets(radius), dtype=float)
    return _offset_cache[key]


@dataclass
class CollisionResult:
    next: PhasePoint
    tau: object
    grazing: bool
    bits_used: int
    cos_next: object
    scatterer: int
    offset: tuple

    @property
    def tau_f(self):
        return float(self.tau)


@dataclass
class DerivativeMatrix:
    """2x2 derivative in (dr, dphi) coordinates."""

    m: tuple

    @property
    def det(self):
        (a, b), (c, d) = self.m
        return a * d - b * c

    @property
    def array(self):
        return np.array([[float(v) for v in row] for row in self.m])

    def apply(self, v):
        (a, b), (c, d) = self.m
        return (a * v[0] + b * v[1], c * v[0] + d * v[1])

    def __matmul__(self, other):
        (a, b), (c, d) = self.m
        (e, f), (g, h) = other.m
        return DerivativeMatrix(((a * e + b * g, a * f + b * h), (c * e + d * g, c * f + d * h)))


def bit_budget(table):
    return max(DOUBLE_BITS, min(table.precision_bits, max_bits(table.precision_bits)))


def _start_bits(table, x):
    if is_mp(x.r) or is_mp(x.phi):
        return bit_budget(table)
    return DOUBLE_BITS


def outgoing(table, x, ops):
    """Base point and unit outgoing velocity of phase point ``x``."""
    sc = table[x.i]
    P, n, t = sc.frame(ops, ops.num(x.r))
    phi = ops.num(x.phi)
    if abs(phi) == ops.half_pi:
        c, s = 0, (1 if phi > 0 else -1)
    else:
        c, s = ops.cos(phi), ops.sin(phi)
    v = (c * n[0] + s * t[0], c * n[1] + s * t[1])
    return P, v


def _prefilter(table, p, v, exclude, window):
    """Double-precision candidates (approx_t, j, a, b) in increasing approx_t."""
    offs = _offsets(window + 2.5)
    centers, radii = table.centers, table.radii
    d = len(radii)
    cx = (centers[None, :, 0] + offs[:, 0:1]).ravel()
    cy = (centers[None, :, 1] + offs[:, 1:2]).ravel()
    rr = np.tile(radii, len(offs))
    mx, my = p[0] - cx, p[1] - cy
    b = mx * v[0] + my * v[1]
    cc = mx * mx + my * my - rr * rr
    disc = b * b - cc
    ok = (b < 0) & (disc > -1e-9 * np.maximum(rr * rr, 1e-300) - 1e-12) & (cc > -1e-9)
    idx = np.nonzero(ok)[0]
    jj = idx % d
    oo = idx // d
    keep = ~((jj == exclude) & (offs[oo, 0] == 0) & (offs[oo, 1] == 0))
    idx, jj, oo = idx[keep], jj[keep], oo[keep]
    t_approx = -b[idx] - np.sqrt(np.maximum(disc[idx], 0.0))
    order = np.argsort(t_approx, kind="stable")
    return [(t_approx[k], int(jj[k]), int(offs[oo[k], 0]), int(offs[oo[k], 1])) for k in order]


def _exact_hit(table, ops, p, v, j, a, b):
    """(status, t, disc, m2) at the working precision.

    status is 'hit', 'miss' or 'unresolved' (discriminant within rounding).
    """
    cx, cy, R = table[j].coords(ops)
    mx, my = p[0] - (cx + a), p[1] - (cy + b)
    bb = mx * v[0] + my * v[1]
    m2 = mx * mx + my * my
    cc = (ops.sqrt(m2) - R) * (ops.sqrt(m2) + R)
    disc = bb * bb - cc
    # rounding along a hyperbolic orbit reaches a few hundred ulp before a tangency
    noise = 2 ** 16 * ops.eps() * m2
    if abs(disc) <= noise:
        return "unresolved", -bb, disc, m2
    if disc < 0 or bb >= 0:
        return "miss", None, disc, m2
    # stable root: q = -(b + sign(b) sqrt(disc)) with b < 0; near root cc/q
    q = -bb + ops.sqrt(disc)
    return "hit", cc / q, disc, m2


def _escalate_threshold(ops, m2):
    # disc below this keeps fewer than a quarter of the digits of cos(phi_next)
    return m2 * ops.eps() ** 0.75 if ops.bits > DOUBLE_BITS else m2 * 2.0 ** -40


def _step(table, x, ops, top):
    p, v = outgoing(table, x, ops)
    pf = (float(p[0]), float(p[1]))
    vf = (float(v[0]), float(v[1]))
    cap = table.flight_cap
    window = 2.0
    rmax = table.r_max
    while True:
        cands = _prefilter(table, pf, vf, x.i, window)
        best = None
        needs_more = False
        for t_apx, j, a, b in cands:
            if best is not None and t_apx > float(best[1]) + 1e-6:
                break
            status, t, disc, m2 = _exact_hit(table, ops, p, v, j, a, b)
            if status == "miss":
                continue
            if status == "unresolved":
                if not top:
                    needs_more = True
                    continue
                disc = 0
            elif abs(disc) < _escalate_threshold(ops, m2) and not top:
                needs_more = True
            if t <= 0:
                continue
            key = (t, j)
            if best is None or key < (best[1], best[2]):
                best = (status, t, j, a, b, disc)
        if needs_more:
            return None
        if best is not None and float(best[1]) <= window - rmax:
            break
        if window >= cap + rmax:
            if best is not None and float(best[1]) <= cap:
                break
            raise FlightCapExceeded(f"no collision within flight cap {cap:.3f} from {x}")
        window = min(2 * window, cap + rmax + 1.0)
    status, t, j, a, b, disc = best
    cx, cy, R = table[j].coords(ops)
    hx, hy = p[0] + t * v[0] - (cx + a), p[1] + t * v[1] - (cy + b)
    nx, ny = hx / R, hy / R
    sin_next = v[0] * ny - v[1] * nx
    grazing = disc == 0
    if grazing:
        phi_next = ops.half_pi if sin_next > 0 else -ops.half_pi
        cos_next = 0
    else:
        cos_next = ops.sqrt(disc) / R
        phi_next = ops.atan2(sin_next, cos_next)
    r_next = table[j].arclength(ops, cx + hx, cy + hy)
    return CollisionResult(PhasePoint(j, r_next, phi_next), t, grazing, ops.bits, cos_next, j, (a, b))


def apply_map(table, x, bits=None):
    """One collision of the billiard map T.

    At exact tangency the trajectory continues straight (the tangency is
    still recorded as a collision with phi = +-pi/2).
    """
    top_bits = bit_budget(table)
    start = bits or _start_bits(table, x)
    ladder = [b for b in ESCALATION if start <= b < top_bits] + [max(start, top_bits)]
    for k, b in enumerate(ladder):
        with working_precision(b) as ops:
            res = _step(table, x, ops, top=(k == len(ladder) - 1))
        if res is not None:
            return res
    raise PrecisionExhausted(f"tangency unresolved at {ladder[-1]} bits")


def time_reverse(x):
    return PhasePoint(x.i, x.r, -x.phi)


def apply_inverse(table, x, bits=None):
    """T^-1 as I o T o I with I(r, phi) = (r, -phi)."""
    res = apply_map(table, time_reverse(x), bits)
    res.next = time_reverse(res.next)
    return res


def map_derivative(table, x, result):
    """DT(x) in (dr, dphi) coordinates.

    DT = -(1/cos phi1) [[tau K + cos phi, tau],
                        [tau K K1 + K1 cos phi + K cos phi1, tau K1 + cos phi1]]
    """
    bits = result.bits_used
    with working_precision(bits) as ops:
        c1 = ops.num(result.cos_next)
        if result.grazing or c1 <= 4 * ops.eps():
            raise GrazingDerivative(f"next collision is tangent (cos phi1 = {float(c1):.3g})")
        phi = ops.num(x.phi)
        c0 = 0 if abs(phi) == ops.half_pi else ops.cos(phi)
        K = table[x.i].curvature(ops)
        K1 = table[result.next.i].curvature(ops)
        tau = ops.num(result.tau)
        f = -1 / c1
        m = ((f * (tau * K + c0), f * tau),
             (f * (tau * K * K1 + K1 * c0 + K * c1), f * (tau * K1 + c1)))
    return DerivativeMatrix(m)


def inverse_derivative(table, x, result):
    """D(T^-1)(x) for ``result = apply_inverse(table, x)``.

    Obtained by conjugating the forward derivative with diag(1, -1).
    """
    y = time_reverse(x)
    fwd = map_derivative(table, y, result)
    (a, b), (c, d) = fwd.m
    return DerivativeMatrix(((a, -b), (-c, d)))


@dataclass
class OrbitRecord:
    """Finite or periodic orbit with per-collision data.

    For a segment, ``points`` holds x_0..x_n and ``taus[k]`` is the flight
    x_k -> x_{k+1}.  For a periodic orbit ``points`` holds one cycle and
    ``taus`` closes it.
    """

    points: list
    taus: list
    grazing: list
    bits_used: list
    periodic: bool = False
    direction: str = "forward"
    residual: float | None = None
    offsets: list | None = None
    cos_phi: list | None = None
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    @property
    def period(self):
        return len(self.points) if self.periodic else None

    def dist_S0(self, bits=None):
        b = bits or max(self.bits_used or [DOUBLE_BITS])
        with working_precision(b) as ops:
            return [p.dist_S0(ops) for p in self.points]

    def log_cos_phi(self, bits=None):
        """log cos(phi) per point; stays finite where cos underflows doubles."""
        b = bits or max(self.bits_used or [DOUBLE_BITS])
        with working_precision(max(b, 64)) as ops:
            out = []
            for p in self.points:
                d = p.dist_S0(ops)
                out.append(float(ops.log(ops.sin(d))) if d > 0 else -math.inf)
            return out

    def min_dist_S0(self, bits=None):
        return min(self.dist_S0(bits))


def orbit_segment(table, x, n_steps, direction="forward", bits=None):
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    step = apply_map if direction == "forward" else apply_inverse
    pts, taus, graz, used, cosines = [x], [], [], [], []
    cur = x
    for k in range(n_steps):
        try:
            res = step(table, cur, bits)
        except (FlightCapExceeded, PrecisionExhausted) as exc:
            raise OrbitStepError(k, exc) from exc
        pts.append(res.next)
        taus.append(res.tau)
        graz.append(res.grazing)
        used.append(res.bits_used)
        cosines.append(res.cos_next)
        cur = res.next
    return OrbitRecord(pts, taus, graz, used, periodic=False, direction=direction, cos_phi=cosines)


@dataclass
class DerivativeCheck:
    samples: int
    tested: int
    skipped: int
    max_rel_error: float
    max_det_error: float
    bits: int
    step: float

    def to_dict(self):
        return dict(self.__dict__)


def _fd_derivative(table, x, res, ops, h):
    """Central differences of T at x in (r, phi), or None if a neighbour changes collision."""
    cols = []
    for k in range(2):
        d = (h, 0) if k == 0 else (0, h)
        imgs = []
        for sgn in (1, -1):
            y = PhasePoint(x.i, ops.num(x.r) + sgn * d[0], ops.num(x.phi) + sgn * d[1])
            r = apply_map(table, y, ops.bits)
            if r.next.i != res.next.i or tuple(r.offset) != tuple(res.offset) or r.grazing:
                return None
            imgs.append(r.next)
        per = table[res.next.i].perimeter(ops)
        dr = imgs[0].r - imgs[1].r
        # arclength wraps around the scatterer
        dr = dr - per * ops.floor(dr / per + ops.num(0.5))
        cols.append((dr / (2 * h), (imgs[0].phi - imgs[1].phi) / (2 * h)))
    return ((cols[0][0], cols[1][0]), (cols[0][1], cols[1][1]))


def derivative_check(table, samples, seed=0, bits=128, h=1e-10):
    """Compare map_derivative with central differences of T on random interior points.

    The differences run at ``bits`` of precision; points whose stencil
    crosses a singularity (different next scatterer or a tangency) are
    skipped.  Also reports |det(DT) cos(phi_1)/cos(phi) - 1|.
    """
    rng = np.random.default_rng(seed)
    tested = skipped = 0
    worst = worst_det = 0.0
    for _ in range(samples):
        i = int(rng.integers(len(table)))
        x = PhasePoint(i, float(rng.uniform(0, table[i].perimeter_f)),
                       float(rng.uniform(-math.pi / 2, math.pi / 2)))
        try:
            res = apply_map(table, x)
            if res.grazing:
                raise GrazingDerivative("tangent image")
            D = map_derivative(table, x, res)
            with working_precision(bits) as ops:
                fd = _fd_derivative(table, x, apply_map(table, x, bits), ops, ops.num(h))
        except BilliardError:
            skipped += 1
            continue
        if fd is None:
            skipped += 1
            continue
        A = D.array
        F = np.array([[float(v) for v in row] for row in fd])
        tested += 1
        worst = max(worst, float(np.max(np.abs(A - F)) / np.max(np.abs(F))))
        det = float(D.det) * float(res.cos_next) / math.cos(x.phi)
        worst_det = max(worst_det, abs(det - 1))
    return DerivativeCheck(samples, tested, skipped, worst, worst_det, bits, h)
