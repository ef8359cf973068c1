"""Local invariant manifolds of the grazing fixed point x0 of G = T^p.

The seed segment I lies in the grazing set next to x0, on the side whose
points return close to x0 under G.  Every sample of the generation-n curve
G^n(I) is an exact image G^n(r0 + side*s, phi0) of a seed; the seed is found
by a secant solve in log s so that the image sits on a fixed grid of
distances u = |r - r0|.  Interpolating between samples is never needed, so
the curves of successive generations can be compared far below double
precision.  Because G roughly squares distances to x0 on the way back, a
seed for generation n sits at distance about u^(2^n); working precision is
chosen per generation to resolve it.
"""
import math
from dataclasses import dataclass, field

import mpmath

from ._numeric import working_precision
from .billiard_map import apply_inverse, apply_map, inverse_derivative, map_derivative
from .errors import (BilliardError, InsufficientSpan, NewtonDiverged, NonPhysicalCollision,
                     NotFoundWithinBudget, PrecisionExhausted, SeedCutBySingularity)
from .geometry import PhasePoint
from .hyperbolicity import ConeSpec, cone_contains

MAX_MANIFOLD_BITS = 16384


def _signed_offset(ops, table, x0, x):
    """r - r0 wrapped to the shortest arc."""
    per = table[x0.i].perimeter(ops)
    d = (ops.num(x.r) - ops.num(x0.r)) % per
    return d - per if d > per / 2 else d


def iterate_G(table, x, period, inverse=False, bits=None):
    """G(x) = T^period(x) (or its inverse) with the visited scatterers."""
    step = apply_inverse if inverse else apply_map
    seq, cur, taus = [], x, []
    for _ in range(period):
        res = step(table, cur, bits)
        cur = res.next
        seq.append(cur.i)
        taus.append(res.tau)
    return cur, tuple(seq), taus


def reference_itinerary(system, inverse=False):
    """Scatterers visited by x0 itself over one G-step."""
    _, seq, _ = iterate_G(system.table, system.x0, system.period, inverse)
    return seq


def _seed_point(ops, x0, side, s):
    return PhasePoint(x0.i, ops.num(x0.r) + side * s, ops.num(x0.phi))


def detect_sides(system, inverse=False, probe_bits=512):
    """(seed side, image side) of the manifold of x0 under G (or G^-1).

    The seed side is the one whose grazing points follow x0's own itinerary
    back to the tangent scatterer.
    """
    g = system.rebuild(probe_bits)
    ref = reference_itinerary(g, inverse)
    out = None
    with working_precision(probe_bits) as ops:
        s = mpmath.ldexp(1, -probe_bits // 4)
        for side in (1, -1):
            try:
                y, seq, _ = iterate_G(g.table, _seed_point(ops, g.x0, side, s), g.period, inverse)
            except BilliardError:
                continue
            if seq == ref:
                u = _signed_offset(ops, g.table, g.x0, y)
                if out is not None:
                    raise SeedCutBySingularity("both sides of x0 return; x0 is not a one-sided grazing point")
                out = (side, 1 if u > 0 else -1)
    if out is None:
        raise SeedCutBySingularity("neither side of x0 returns to the tangent scatterer")
    return out


@dataclass
class ManifoldCurve:
    """Generation-n graph over distances u = |r - r0| on the tangent scatterer.

    ``us`` is increasing; ``rs``/``phis`` are the sample coordinates at
    working precision (the first sample is x0 itself).  ``history`` holds the
    phis of every generation on the same grid, ``sup_diffs[k]`` is
    sup|phi_{k+2} - phi_{k+1}|.
    """

    kind: str
    x0: PhasePoint
    generation: int
    us: list
    rs: list
    phis: list
    seeds: list
    side: int
    image_side: int
    bits: int
    history: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    sup_diffs: list = field(default_factory=list)
    bits_log: list = field(default_factory=list)
    seed_halfwidth: float = 0.0
    tangents: list = field(default_factory=list)

    def __len__(self):
        return len(self.us)

    def offsets(self):
        """(u, phi - phi0) as floats."""
        with working_precision(self.bits):
            p0 = self.phis[0]
            return [(float(u), float(p - p0)) for u, p in zip(self.us, self.phis)]

    def end_slope(self, k=1):
        """Signed slope dphi/dr between x0 and the k-th sample."""
        with working_precision(self.bits):
            return float((self.phis[k] - self.phis[0]) / (self.rs[k] - self.rs[0]))

    def slopes(self):
        with working_precision(self.bits):
            return [float((self.phis[k + 1] - self.phis[k]) / (self.rs[k + 1] - self.rs[k]))
                    for k in range(len(self.us) - 1)]

    def log10_sup_diffs(self):
        with working_precision(self.bits):
            return [float(mpmath.log10(d)) if d > 0 else -math.inf for d in self.sup_diffs]

    def monotone_in_generation(self):
        """Whether phi_{n+1} - phi_n keeps one sign over all grid points and generations.

        Differences within the combined sample error bounds are unresolved
        and ignored.
        """
        return len(self._difference_signs()) <= 1

    def _difference_signs(self):
        signs = set()
        with working_precision(self.bits):
            for k in range(len(self.history) - 1):
                a, b = self.history[k], self.history[k + 1]
                ea, eb = self.errors[k], self.errors[k + 1]
                for j in range(1, len(a)):
                    if abs(b[j] - a[j]) > 4 * (ea[j] + eb[j]):
                        signs.add(b[j] > a[j])
        return signs

    def unresolved_comparisons(self):
        n = 0
        with working_precision(self.bits):
            for k in range(len(self.history) - 1):
                a, b = self.history[k], self.history[k + 1]
                ea, eb = self.errors[k], self.errors[k + 1]
                n += sum(1 for j in range(1, len(a)) if abs(b[j] - a[j]) <= 4 * (ea[j] + eb[j]))
        return n

    def cone_report(self, K):
        """Per sample (u, slope, lo, hi, inside): tangent slope against the cone at the sample.

        The unstable cone uses the flight arriving at the sample, the stable
        cone the flight leaving it; the slope is exact (derivative chain along
        the seed orbit), not a chord.
        """
        out = []
        with working_precision(self.bits) as ops:
            for u, phi, tg in zip(self.us[1:], self.phis[1:], self.tangents[1:]):
                slope, tau = tg
                cone = ConeSpec(self.kind, ops.num(K), ops.cos(phi) / tau)
                lo, hi = cone.interval
                out.append((float(u), float(slope), float(lo), float(hi), cone_contains(cone, (1, slope), rtol=0)))
        return out

    def points(self, x_index):
        return [PhasePoint(x_index, r, p) for r, p in zip(self.rs, self.phis)]


def _grid(u_min, length, per_decade):
    n = max(2, int(math.ceil(math.log10(length / u_min) * per_decade)) + 1)
    return [u_min * (length / u_min) ** (k / (n - 1)) for k in range(n)]


def _bits_for(log2_s):
    """Working precision resolving a seed 2^log2_s away from x0."""
    need = int(1.25 * -log2_s) + 384
    return max(256, 64 * ((need + 63) // 64))


class _Evaluator:
    """Exact images G^n(seed) at a fixed working precision."""

    def __init__(self, system, inverse, side, image_side, bits):
        self.g = system.rebuild(bits)
        self.inverse, self.side, self.image_side, self.bits = inverse, side, image_side, bits
        self.ref = reference_itinerary(self.g, inverse)

    def __call__(self, ops, log_s, n):
        g = self.g
        x = _seed_point(ops, g.x0, self.side, ops.exp(log_s))
        for k in range(n):
            x, seq, self.last_taus = iterate_G(g.table, x, g.period, self.inverse)
            if seq != self.ref:
                raise SeedCutBySingularity(f"seed exp({float(log_s):.6g}) leaves the continuity domain "
                                           f"at G-step {k + 1} (itinerary {seq})")
        u = self.image_side * _signed_offset(ops, g.table, g.x0, x)
        if u <= 0:
            raise SeedCutBySingularity("image landed on the wrong side of x0")
        return x, u


def tangent_at(ev, ops, log_s, n):
    """Image point, tangent vector of G^n(seed segment) and the flight adjacent to it."""
    g = ev.g
    x = _seed_point(ops, g.x0, ev.side, ops.exp(log_s))
    v = (ops.num(ev.side), ops.num(0))
    step = apply_inverse if ev.inverse else apply_map
    deriv = inverse_derivative if ev.inverse else map_derivative
    tau = None
    for _ in range(n * g.period):
        res = step(g.table, x, ops.bits)
        v = deriv(g.table, x, res).apply(v)
        # keep the vector at unit size; only its direction matters
        norm = abs(v[0]) + abs(v[1])
        v = (v[0] / norm, v[1] / norm)
        x, tau = res.next, res.tau
    return x, v, tau


def _solve_seed(ev, ops, n, u_target, guess, tol):
    """log s placing G^n(seed) at distance u_target (secant in log-log).

    Stops at |log u - log u_target| <= tol, or once the residual is below
    2^-(bits/8) and no longer improving (rounding floor of the seed).
    """
    lt = ops.log(ops.num(u_target))
    loose = mpmath.ldexp(1, -(ops.bits // 8))
    a = ops.num(guess)
    _, ua = ev(ops, a, n)
    fa = ops.log(ua) - lt
    b = a - fa * 2 ** n
    for _ in range(200):
        xb, ub = ev(ops, b, n)
        fb = ops.log(ub) - lt
        if abs(fb) <= tol or (abs(fb) <= loose and (fb == fa or abs(fb) > abs(fa) / 4)):
            return b, xb, ub
        if fb == fa:
            break
        a, b, fa = b, b - fb * (b - a) / (fb - fa), fb
    raise PrecisionExhausted(f"seed solve stalled at generation {n}, u = {float(u_target):.3g}")


def grow_manifold(system, generations, kind="unstable", seed_halfwidth=1e-5, length=0.02,
                  u_min=1e-6, per_decade=4, max_bits=MAX_MANIFOLD_BITS):
    """Generation-n local manifold of x0 sampled on a geometric grid in |r - r0|.

    ``system`` is a GrazingTable.  The unstable curve grows G^n of the seed
    segment of the returning side; the stable curve is the same construction
    for G^-1 (time reversal).  Raises SeedCutBySingularity when the seed
    segment of half-width ``seed_halfwidth`` is not mapped continuously, and
    PrecisionExhausted when a generation needs more than ``max_bits``.
    """
    if generations < 1:
        raise ValueError("generations must be >= 1")
    inverse = kind == "stable"
    side, image_side = detect_sides(system, inverse)
    grid = _grid(u_min, length, per_decade)

    # continuity of G on the seed segment, checked on a geometric sample
    ev = _Evaluator(system, inverse, side, image_side, 256)
    with working_precision(256) as ops:
        top = ops.log(ops.num(seed_halfwidth))
        for k in range(13):
            ev(ops, top - k * 3, 1)
        _, u_top = ev(ops, top, 1)
        if u_top < grid[-1]:
            raise SeedCutBySingularity(f"seed half-width {seed_halfwidth} only reaches u = {float(u_top):.3g} "
                                       f"< curve length {length}")
        # u ~ c sqrt(s) near x0: first guesses for generation 1
        _, u_probe = ev(ops, top - 20, 1)
        c = float(u_probe) / math.exp((float(top) - 20) / 2)

    # one precision for every generation, so that differences between
    # generations are resolved; log s roughly doubles per generation
    prev_log_s = [2 * math.log(u / c) for u in grid]
    estimate = 2 ** (generations - 1) * (min(prev_log_s) - 6.0)
    bits = _bits_for(1.1 * estimate / math.log(2))
    if bits > max_bits:
        raise PrecisionExhausted(f"{generations} generations need about {bits} bits (cap {max_bits})")
    ev = _Evaluator(system, inverse, side, image_side, bits)
    history, err_log = [], []
    older_log_s = None
    curve = None
    with working_precision(bits) as ops:
        tol = ops.eps() * 2 ** 32
        floor = (1 - 0.8 * bits + 307) * math.log(2)
        x0 = ev.g.x0
        for n in range(1, generations + 1):
            if n > 2:
                guess = [2 * a + (a - 2 * b) for a, b in zip(prev_log_s, older_log_s)]
            elif n == 2:
                # G^-1 of the grid point u sits near u' ~ (u/c)^2 on the previous generation
                guess = [_interp_log(grid, prev_log_s, 2 * math.log(u / c)) for u in grid]
            else:
                guess = prev_log_s
            seeds, found = [None], []
            for u, ls in zip(grid, guess):
                log_s, x, uu = _solve_seed(ev, ops, n, u, ls, tol)
                if log_s < floor:
                    raise PrecisionExhausted(f"generation {n} seed exp({float(log_s):.6g}) is below the "
                                             f"resolution of {bits} bits")
                seeds.append(log_s)
                found.append((uu, ops.num(x.phi)))
            us, phis, errs = _snap_to_grid(ops, x0, grid, found)
            rs = [ops.num(x0.r) + image_side * u for u in us]
            history.append(phis)
            err_log.append(errs)
            older_log_s, prev_log_s = prev_log_s, [float(v) for v in seeds[1:]]
        tangents = [None]
        for log_s in seeds[1:]:
            _, v, tau = tangent_at(ev, ops, log_s, generations)
            tangents.append((v[1] / v[0], tau))
        curve = ManifoldCurve(kind, x0, generations, us, rs, phis, seeds, side, image_side, bits,
                              history=history, errors=err_log, bits_log=[bits] * generations,
                              seed_halfwidth=seed_halfwidth, tangents=tangents)
    with working_precision(bits):
        for a, b in zip(history, history[1:]):
            curve.sup_diffs.append(max(abs(pb - pa) for pa, pb in zip(a, b)))
    return curve


def _snap_to_grid(ops, x0, grid, found):
    """Move solved samples (u, phi) onto the exact grid values along the chord slope.

    Returns (us, phis, errs) with x0 prepended; errs bounds the shift error by
    the slope mismatch of the two neighbouring chords.
    """
    pts = [(ops.num(0), ops.num(x0.phi))] + found
    us, phis, errs = [pts[0][0]], [pts[0][1]], [ops.num(0)]
    for k in range(1, len(pts)):
        u, phi = pts[k]
        left = (phi - pts[k - 1][1]) / (u - pts[k - 1][0])
        right = (pts[k + 1][1] - phi) / (pts[k + 1][0] - u) if k + 1 < len(pts) else left
        du = ops.num(grid[k - 1]) - u
        us.append(ops.num(grid[k - 1]))
        phis.append(phi + (left + right) / 2 * du)
        errs.append(abs(right - left) * abs(du) + 2 ** 16 * ops.eps())
    return us, phis, errs


def _interp_log(grid, vals, log_u):
    """Piecewise-linear interpolation of vals over log(grid), extrapolating linearly."""
    lg = [math.log(u) for u in grid]
    if log_u <= lg[0]:
        k = 0
    elif log_u >= lg[-1]:
        k = len(lg) - 2
    else:
        k = max(j for j in range(len(lg) - 1) if lg[j] <= log_u)
    w = (log_u - lg[k]) / (lg[k + 1] - lg[k])
    return vals[k] + w * (vals[k + 1] - vals[k])


def grow_unstable_manifold(system, generations, seed_halfwidth=1e-5, **kw):
    return grow_manifold(system, generations, "unstable", seed_halfwidth, **kw)


def grow_stable_manifold(system, generations, seed_halfwidth=1e-5, **kw):
    return grow_manifold(system, generations, "stable", seed_halfwidth, **kw)


@dataclass
class FitReport:
    exponent_a: float
    exponent_b_rate: float
    decades: float
    samples: int
    bits: int
    pairs: list = field(default_factory=list)
    chains: list = field(default_factory=list)
    rates: list = field(default_factory=list)
    rate_including_start: float | None = None

    def to_dict(self):
        return {"exponent_a": self.exponent_a, "exponent_b_rate": self.exponent_b_rate,
                "decades": self.decades, "samples": self.samples, "bits": self.bits,
                "per_sample_rates": self.rates, "rate_including_start": self.rate_including_start,
                "log10_pairs": self.pairs}


def phase_distance(ops, table, x0, x):
    """Euclidean distance in (r, phi) on the scatterer of x0."""
    du = _signed_offset(ops, table, x0, x)
    dphi = ops.num(x.phi) - ops.num(x0.phi)
    return ops.sqrt(du * du + dphi * dphi)


def _lsq_slope(xs, ys):
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    return sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sxx


def verify_growth_lemma(system, curve, decades=4):
    """Fit the contraction laws of G^-1 along a local unstable curve.

    (a) slope of log d(G^-1 z, x0) against log d(z, x0) over the samples;
    (b) for each sample, slope of log log(1/d(G^-k z, x0)) against k for
    k >= 1 (the backward orbit once it is inside the local regime), and the
    median over samples.  Backward orbits stop when they leave the local
    itinerary or reach the precision floor 2^-(bits/2).  For a stable curve
    the roles of G and G^-1 are swapped.
    """
    inverse = curve.kind == "unstable"
    g = system.rebuild(curve.bits)
    ref = reference_itinerary(g, inverse)
    chains = []
    with working_precision(curve.bits) as ops:
        floor = mpmath.ldexp(1, -(curve.bits // 2))
        for r, phi in zip(curve.rs[1:], curve.phis[1:]):
            z = PhasePoint(g.x0.i, r, phi)
            ds = [phase_distance(ops, g.table, g.x0, z)]
            for _ in range(curve.generation):
                try:
                    z, seq, _ = iterate_G(g.table, z, g.period, inverse)
                except BilliardError:
                    break
                if seq != ref:
                    break
                d = phase_distance(ops, g.table, g.x0, z)
                if d < floor or d >= ds[-1]:
                    break
                ds.append(d)
            chains.append(ds)
        pairs = [(float(mpmath.log10(c[0])), float(mpmath.log10(c[1]))) for c in chains if len(c) > 1]
        span = (max(p[0] for p in pairs) - min(p[0] for p in pairs)) if pairs else 0.0
        if len(pairs) < 3 or span < decades:
            raise InsufficientSpan(f"samples span {span:.2f} decades of d(z, x0); {decades} required")
        exponent_a = _lsq_slope([p[0] for p in pairs], [p[1] for p in pairs])
        rates, rates0 = [], []
        for c in chains:
            ll = [float(mpmath.log(-mpmath.log(d))) for d in c if d < 1]
            if len(ll) == len(c) and len(c) >= 4:
                rates.append(_lsq_slope(list(range(1, len(c))), ll[1:]))
                rates0.append(_lsq_slope(list(range(len(c))), ll))
    if not rates:
        raise InsufficientSpan("no backward orbit stays local for three G-steps")
    rates_sorted = sorted(rates)
    median = rates_sorted[len(rates) // 2]
    return FitReport(exponent_a, median, span, len(pairs), curve.bits, pairs,
                     [[float(mpmath.log10(d)) for d in c] for c in chains], rates,
                     sorted(rates0)[len(rates0) // 2])


@dataclass
class HomoclinicWitness:
    """Transverse intersection of the forward image of W^u with the backward image of W^s.

    ``z_u`` lies on the local unstable curve, ``z_s = T^(a+b) z_u`` on the
    local stable curve, and both images meet at ``meet`` (a T-steps after
    z_u).  ``m`` = (a + b)/4 is the length of the excursion in G-steps.
    """

    z_u: PhasePoint
    z_s: PhasePoint
    meet: PhasePoint
    a: int
    b: int
    m: int
    n_u: int
    crossing_angle: float
    itinerary: object
    bits: int
    params: tuple
    segments: dict = field(default_factory=dict)
    validation: list = field(default_factory=list)

    @property
    def x1(self):
        return self.z_s

    @property
    def ell0(self):
        return self.m

    def to_dict(self):
        with working_precision(self.bits):
            def pt(x):
                return {"i": x.i, "r": mpmath.nstr(x.r, 30), "phi": mpmath.nstr(x.phi, 30)}
            return {"z_u": pt(self.z_u), "z_s": pt(self.z_s), "meet": pt(self.meet), "a": self.a, "b": self.b,
                    "m": self.m, "n_u": self.n_u, "ell0": self.ell0, "crossing_angle": self.crossing_angle,
                    "itinerary": self.itinerary.to_json(), "bits": self.bits,
                    "log10_dist_forward": self.validation}


class _LocalCurve:
    """Exact points of a local manifold parametrized by generation-n seeds."""

    def __init__(self, system, kind, n, bits):
        inverse = kind == "stable"
        side, image_side = detect_sides(system, inverse)
        self.ev = _Evaluator(system, inverse, side, image_side, bits)
        self.kind, self.n, self.bits = kind, n, bits

    def point(self, ops, log_s):
        return self.ev(ops, log_s, self.n)

    def seed_for(self, ops, u):
        """Seed placing the generation-n point at distance u, solved generation by generation."""
        c = self._scale(ops)
        tol = ops.eps() * 2 ** 32
        ls = _solve_seed(self.ev, ops, 1, u, 2 * math.log(float(u) / c), tol)[0]
        for k in range(2, self.n + 1):
            # s_k(u) = s_{k-1}(u') with u' ~ (u/c)^2, and d log s_{k-1}/d log u ~ 2^(k-1)
            guess = float(ls) + 2 ** (k - 1) * (math.log(float(u)) - 2 * math.log(c))
            ls = _solve_seed(self.ev, ops, k, u, guess, tol)[0]
        return ls

    def domain(self, ops, length):
        """Seed interval of one fundamental domain [u_a, length] of the curve."""
        ls_b = self.seed_for(ops, length)
        x, _ = self.point(ops, ls_b)
        y, _, _ = iterate_G(self.ev.g.table, x, self.ev.g.period, inverse=self.kind == "unstable")
        u_a = self.ev.image_side * _signed_offset(ops, self.ev.g.table, self.ev.g.x0, y)
        return self.seed_for(ops, u_a), ls_b

    def _scale(self, ops):
        """c in u ~ c sqrt(s) for one G-step."""
        _, u = self.ev(ops, ops.num(-40), 1)
        return float(u) / math.exp(-20)


def _itinerary_steps(table, x, steps, inverse):
    """Points after each T (or T^-1) step with the (scatterer, offset) history."""
    step = apply_inverse if inverse else apply_map
    pts, hist = [], []
    cur = x
    for _ in range(steps):
        try:
            res = step(table, cur)
        except BilliardError:
            break
        cur = res.next
        hist.append((cur.i, res.offset))
        pts.append((cur.i, float(cur.r), float(cur.phi), tuple(hist)))
    return pts


def _segments(samples, k, perimeters):
    """Polyline pieces at step k: (scatterer, r0, phi0, r1, phi1, j) between samples j, j+1."""
    out = []
    for j in range(len(samples) - 1):
        A, B = samples[j], samples[j + 1]
        if len(A) <= k or len(B) <= k:
            continue
        (i, r0, p0, h0), (i1, r1, p1, h1) = A[k], B[k]
        if h0 != h1 or abs(r1 - r0) > perimeters[i] / 4:
            continue
        out.append((i, r0, p0, r1, p1, j))
    return out


def _crossings(fw, bw):
    """Index pairs of crossing segments (same scatterer) via vectorized orientation tests."""
    import numpy as np

    if not fw or not bw:
        return []
    F, B = np.array(fw, float), np.array(bw, float)
    hits = []
    for i in np.unique(F[:, 0]):
        fi, bi = F[F[:, 0] == i], B[B[:, 0] == i]
        if len(bi) == 0:
            continue
        p, r = fi[:, None, 1:3], fi[:, None, 3:5] - fi[:, None, 1:3]
        q, s = bi[None, :, 1:3], bi[None, :, 3:5] - bi[None, :, 1:3]

        def cross(u, v):
            return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]

        den = cross(r, s)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = cross(q - p, s) / den
            w = cross(q - p, r) / den
        ok = (den != 0) & (t >= 0) & (t <= 1) & (w >= 0) & (w <= 1)
        for a, b in zip(*np.nonzero(ok)):
            hits.append((int(fi[a, 5]), int(bi[b, 5]), float(t[a, b]), float(w[a, b])))
    return hits


def _phase_diff(ops, table, x, y):
    per = table[x.i].perimeter(ops)
    dr = (ops.num(x.r) - ops.num(y.r)) % per
    if dr > per / 2:
        dr -= per
    return dr, ops.num(x.phi) - ops.num(y.phi)


def find_homoclinic(system, max_iters=8, samples=600, length=0.02, n_u=3, bits=512, tol=None):
    """Transverse homoclinic point of x0 with an excursion of whole G-steps.

    One fundamental domain of each local manifold (generation ``n_u``) is
    sampled; the unstable samples are pushed forward and the stable samples
    backward up to ``max_iters`` T-steps each.  Crossing polyline pieces on a
    common scatterer with a + b divisible by the period are refined by Newton
    in the two seed parameters at ``bits``.  Pieces whose samples disagree in
    itinerary (cut by a singularity) are never joined.  Candidates are tried
    in order of increasing a + b.
    """
    from .periodic import ItinerarySpec

    if max_iters < 1:
        raise NotFoundWithinBudget("no iterations allowed")
    g = system.rebuild(bits)
    table, p = g.table, g.period
    per = [table[i].perimeter_f for i in range(len(table))]
    cu = _LocalCurve(system, "unstable", n_u, bits)
    cs = _LocalCurve(system, "stable", n_u, bits)
    with working_precision(bits) as ops:
        dom_u, dom_s = cu.domain(ops, length), cs.domain(ops, length)
        grids, orbits = {}, {}
        for name, curve, dom, inverse in (("u", cu, dom_u, False), ("s", cs, dom_s, True)):
            lo, hi = dom
            ls = [lo + (hi - lo) * k / (samples - 1) for k in range(samples)]
            pts = [curve.point(ops, v)[0] for v in ls]
            grids[name] = ls
            orbits[name] = [_itinerary_steps(table, x.as_float(), max_iters, inverse) for x in pts]
        candidates = []
        for a in range(1, max_iters + 1):
            fw = _segments(orbits["u"], a - 1, per)
            for b in range(0, max_iters + 1):
                if (a + b) % p:
                    continue
                if b == 0:
                    continue
                bw = _segments(orbits["s"], b - 1, per)
                for ju, js, t, w in _crossings(fw, bw):
                    candidates.append((a + b, a, b, ju, js, t, w))
        candidates.sort()
        tol = tol or float(mpmath.ldexp(1, -(bits // 2)))
        for _, a, b, ju, js, t, w in candidates:
            lu = grids["u"][ju] + t * (grids["u"][ju + 1] - grids["u"][ju])
            lsd = grids["s"][js] + w * (grids["s"][js + 1] - grids["s"][js])
            hist_u = orbits["u"][ju][a - 1][3]
            hist_s = orbits["s"][js][b - 1][3]
            try:
                res = _refine_meeting(ops, table, cu, cs, lu, lsd, a, b, hist_u, hist_s, tol)
            except (BilliardError, ZeroDivisionError):
                continue
            if res is None:
                continue
            lu, lsd, z_u, z_s, meet, tu, ts = res
            angle = _angle(tu, ts)
            if angle <= 1e-3:
                continue
            itin = _excursion_itinerary(table, z_u, a + b)
            if itin is None or itin.scatterers[0] != g.x0.i:
                continue
            wit = HomoclinicWitness(z_u, z_s, meet, a, b, (a + b) // p, n_u, angle, itin, bits, (lu, lsd),
                                    segments={"unstable": orbits["u"][ju][a - 1][:3],
                                              "stable": orbits["s"][js][b - 1][:3]})
            wit.validation = _forward_validation(ops, g, z_s, n_u)
            return wit
    raise NotFoundWithinBudget(f"no transverse crossing within {max_iters} T-steps per side")


def _refine_meeting(ops, table, cu, cs, lu, ls_, a, b, hist_u, hist_s, tol):
    """Newton in (seed_u, seed_s) for T^a w_u = T^-b w_s, keeping the itineraries."""

    def images(x, y):
        zu, _ = cu.point(ops, x)
        zs, _ = cs.point(ops, y)
        fu = _follow(table, zu, a, False, hist_u)
        fs = _follow(table, zs, b, True, hist_s)
        if fu is None or fs is None or fu.i != fs.i:
            return None
        return zu, zs, fu, fs

    x, y = ops.num(lu), ops.num(ls_)
    h = mpmath.ldexp(1, -(ops.bits // 3))
    for _ in range(60):
        base = images(x, y)
        if base is None:
            return None
        zu, zs, fu, fs = base
        F = _phase_diff(ops, table, fu, fs)
        if max(abs(F[0]), abs(F[1])) <= tol:
            bu, bs = images(x + h, y), images(x, y + h)
            if bu is None or bs is None:
                return None
            tu = [(v1 - v0) for v1, v0 in zip(_phase_diff(ops, table, bu[2], fu), (0, 0))]
            ts = [(v1 - v0) for v1, v0 in zip(_phase_diff(ops, table, bs[3], fs), (0, 0))]
            return x, y, zu, zs, fu, tu, ts
        px, py = images(x + h, y), images(x, y + h)
        if px is None or py is None:
            return None
        Fx = _phase_diff(ops, table, px[2], px[3])
        Fy = _phase_diff(ops, table, py[2], py[3])
        J = [[(Fx[0] - F[0]) / h, (Fy[0] - F[0]) / h], [(Fx[1] - F[1]) / h, (Fy[1] - F[1]) / h]]
        det = J[0][0] * J[1][1] - J[0][1] * J[1][0]
        dx = -(J[1][1] * F[0] - J[0][1] * F[1]) / det
        dy = -(-J[1][0] * F[0] + J[0][0] * F[1]) / det
        x, y = x + dx, y + dy
    return None


def _follow(table, x, steps, inverse, hist):
    step = apply_inverse if inverse else apply_map
    cur = x
    for k in range(steps):
        res = step(table, cur)
        cur = res.next
        if (cur.i, res.offset) != hist[k]:
            return None
    return cur


def _angle(tu, ts):
    a1 = math.atan2(float(tu[1]), float(tu[0]))
    a2 = math.atan2(float(ts[1]), float(ts[0]))
    d = abs(a1 - a2) % math.pi
    return min(d, math.pi - d)


def _excursion_itinerary(table, z_u, steps):
    """Scatterers and offsets of the T-orbit of z_u for ``steps`` flights (ending on the start scatterer)."""
    from .periodic import ItinerarySpec

    scs, offs = [z_u.i], []
    cur = z_u
    for _ in range(steps):
        res = apply_map(table, cur)
        offs.append(tuple(res.offset))
        cur = res.next
        scs.append(cur.i)
    if scs[-1] != scs[0]:
        return None
    return ItinerarySpec(tuple(scs[:-1]), tuple(offs))


def _forward_validation(ops, g, z_s, steps=4):
    """log10 d(G^k z_s, x0) for k = 0..steps (roughly squaring while the local law holds).

    z_s is a generation-``steps`` stable point, so G^steps z_s is its seed on
    the grazing set next to x0; beyond that the orbit leaves.
    """
    out = [float(mpmath.log10(phase_distance(ops, g.table, g.x0, z_s)))]
    z = z_s
    for _ in range(steps):
        try:
            z, _, _ = iterate_G(g.table, z, g.period)
        except BilliardError:
            break
        out.append(float(mpmath.log10(phase_distance(ops, g.table, g.x0, z))))
    return out


def cycle_itinerary(system):
    """Itinerary of one grazing cycle starting at x0."""
    itin = _excursion_itinerary(system.table, system.x0, system.period)
    if itin is None:
        raise SeedCutBySingularity("grazing cycle does not return to its scatterer")
    return itin


def word_itinerary(system, witness, word, ell):
    """Concrete itinerary of a 0/1 word: '1' is the excursion padded to ell G-steps, '0' is ell cycles."""
    from .periodic import ItinerarySpec

    if ell < witness.m:
        raise ValueError("ell must be at least the excursion length in G-steps")
    cyc = cycle_itinerary(system)
    one = witness.itinerary + cyc * (ell - witness.m) if ell > witness.m else witness.itinerary
    zero = cyc * ell
    out = ItinerarySpec((), ())
    for ch in word:
        out = out + (one if ch == "1" else zero)
    return out


@dataclass
class ShadowingOrbit:
    """Periodic orbit with word 1 0^(n-1): one excursion, then n-1 blocks of ell grazing cycles."""

    n: int
    ell: int
    orbit: object
    bits: int
    min_dist: object
    closest: int
    lyapunov: object
    residual: float

    @property
    def log_inv_dist(self):
        """log(1/d(y_n, S0)) in nats."""
        with working_precision(self.bits):
            return float(-mpmath.log(self.min_dist))

    def to_dict(self):
        with working_precision(self.bits):
            d = mpmath.nstr(self.min_dist, 20)
        return {"n": self.n, "ell": self.ell, "period": len(self.orbit.points), "bits": self.bits,
                "min_dist": d, "log_inv_dist": self.log_inv_dist, "closest_index": self.closest,
                "gradient_residual": self.residual, "lyapunov": self.lyapunov.exponent,
                "lyapunov_per_f_step": self.lyapunov.per_f_step}


def empirical_delta(system, witness):
    """Phase-space diameter of {x0, z_u, z_s}, the size of the excursion rectangle."""
    with working_precision(witness.bits) as ops:
        g = system.rebuild(witness.bits)
        pts = (g.x0, witness.z_u, witness.z_s)
        return float(max(phase_distance(ops, g.table, a, b) for a in pts for b in pts))


def distance_prefactor(family, delta):
    """sup_n d(y_n, S0) / delta^((3/2)^floor(n/2)): the constant in the double-exponential approach."""
    logs = [-y.log_inv_dist - 1.5 ** (y.n // 2) * math.log(delta) for y in family]
    return math.exp(max(logs))


def lyapunov_floor(n, ell, delta):
    """(3/2)^floor(n/2) |log delta| / (4 ell n), the predicted order of lambda(y_n) per T-step."""
    return 1.5 ** (n // 2) * abs(math.log(delta)) / (4 * ell * n)


def _positions(system, x, steps, bits):
    out, cur = [], x
    for _ in range(steps):
        out.append(cur.r)
        cur = apply_map(system.table, cur, bits).next
    return out


def _deepest_block(system, ds, period):
    """Start index of the block after the closest visit to x0 (the later one on a tie)."""
    starts = list(range(0, len(ds), period))
    d = min(ds[j] for j in starts)
    k = max(j for j in starts if ds[j] <= d * 20)
    return k + period


# working bits per bit of depth log2(1/d): the fold at the deepest collision
# costs as many digits again as resolving d itself
SHADOW_PRECISION_FACTOR = 2.0


def _predict_log(logs):
    """Predicted log(1/d) of the next orbit from the depths seen so far."""
    if len(logs) < 3:
        return 2.2 * (logs[-1] if logs else 16.0)
    # depth growth repeats with the block pattern, so reuse the ratio from two steps back
    ratio = max(logs[-2] / logs[-3], 1.05)
    return 1.1 * ratio * logs[-1]


def _shadow_bits(depth, floor, factor=None):
    factor = factor or SHADOW_PRECISION_FACTOR
    need = factor * depth / math.log(2) + 512
    return max(floor, int(math.ceil(need / 64)) * 64)


def _solve_word(g, witness, n, ell, bits, init):
    from .periodic import solve_periodic

    itin = word_itinerary(g, witness, "1" + "0" * (n - 1), ell)
    with working_precision(bits) as ops:
        orbit = solve_periodic(g.table, itin, init=[ops.num(r) for r in init], bits=bits, max_iter=200)
        ds = [p.dist_S0(ops) for p in orbit.points]
    return g, orbit, ds


def choose_ell(system, witness, max_ell=4, bits=512):
    """Smallest ell >= m for which the padded excursion closes into a physical periodic orbit."""
    for ell in range(witness.m, max_ell + 1):
        g = system.rebuild(bits)
        init = _positions(g, witness.z_u, 4 * witness.m, bits) + _positions(g, g.x0, g.period, bits) * (ell - witness.m)
        try:
            _solve_word(g, witness, 1, ell, bits, init)
        except BilliardError:
            continue
        return ell
    raise NotFoundWithinBudget(f"no admissible ell up to {max_ell}")


def shadowing_family(system, witness, n_max, ell=None, bits=512, max_bits=None, on_orbit=None, stop=None):
    """y_1, ..., y_{n_max} by continuation in n.

    y_{n+1} starts from y_n with ell exact grazing cycles inserted right
    after its closest visit to x0; the working precision grows with the
    predicted depth of the next approach.  Stops early (returning what was
    computed) when the precision cap is reached, or as soon as ``stop(y)``
    is true for a new orbit.
    """
    from .hyperbolicity import lyapunov_periodic
    from ._numeric import max_bits as cap_bits

    cap = max_bits or cap_bits(default=1 << 17)
    ell = ell or choose_ell(system, witness)
    period = system.period
    out, rs, ds, logs = [], None, None, []
    for n in range(1, n_max + 1):
        b = _shadow_bits(_predict_log(logs), bits) if n > 1 else bits
        while True:
            if b > cap:
                return out
            g = system.rebuild(b)
            if rs is None:
                init = (_positions(g, witness.z_u, 4 * witness.m, b)
                        + _positions(g, g.x0, period, b) * (ell - witness.m))
            else:
                k = _deepest_block(g, ds, period)
                init = rs[:k] + _positions(g, g.x0, period, b) * ell + rs[k:]
            try:
                g, orbit, new_ds = _solve_word(g, witness, n, ell, b, init)
            except (NewtonDiverged, NonPhysicalCollision):
                b *= 2
                continue
            with working_precision(b):
                d = min(new_ds)
                depth = float(-mpmath.log(d))
            need = _shadow_bits(depth, bits)
            if need <= b:
                break
            # the approach came out deeper than predicted: redo at the precision it needs
            b = need
        ds, rs = new_ds, [p.r for p in orbit.points]
        logs.append(depth)
        lam = lyapunov_periodic(g.table, orbit, ell=ell, bits=b)
        orbit.label = f"y_{n}"
        y = ShadowingOrbit(n, ell, orbit, b, d, ds.index(d), lam, float(orbit.residual))
        out.append(y)
        if on_orbit:
            on_orbit(y)
        if stop and stop(y):
            break
    return out


def build_shadowing_orbit(system, witness, n, ell=None, bits=512, max_bits=None):
    """The shadowing orbit y_n (built through y_1..y_{n-1})."""
    fam = shadowing_family(system, witness, n, ell, bits, max_bits)
    if len(fam) < n:
        raise PrecisionExhausted(f"y_{n} needs more than the precision cap allows")
    return fam[-1]
