"""Cone fields, homogeneity strips, expansion checks and Lyapunov exponents.

Slopes are dphi/dr.  The unstable cone at x is [K, K + cos(phi)/tau] with tau
the flight that arrived at x; the stable cone is [-K - cos(phi)/tau, -K] with
tau the flight leaving x.  Expansion is measured in the adapted norm
cos(phi)|dr|, in which one step stretches unstable vectors by
1 + tau (K + s)/cos(phi) >= 1 + 2 K_min tau_min.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from ._numeric import DOUBLE_BITS, working_precision
from .billiard_map import (DerivativeMatrix, apply_inverse, apply_map, inverse_derivative,
                           map_derivative)
from .errors import BilliardError, GrazingDerivative
from .geometry import PhasePoint

ON_S0 = math.inf


@dataclass
class ConeSpec:
    kind: str
    K: float
    width: float
    point: PhasePoint | None = None

    def __post_init__(self):
        if self.kind not in ("stable", "unstable"):
            raise ValueError("kind must be 'stable' or 'unstable'")
        if self.width < 0:
            raise ValueError("cone width must be nonnegative")

    @property
    def interval(self):
        if self.kind == "unstable":
            return (self.K, self.K + self.width)
        return (-self.K - self.width, -self.K)


def cone_contains(cone, v, rtol=1e-12):
    """True iff the slope of v = (dr, dphi) lies in the cone (endpoints included)."""
    dr, dphi = v
    if dr == 0 and dphi == 0:
        raise ValueError("zero vector")
    if dr == 0:
        return False
    s = dphi / dr
    lo, hi = cone.interval
    slack = rtol * max(abs(lo), abs(hi), 1)
    return lo - slack <= s <= hi + slack


def cone_at(table, x, kind, tau=None, bits=None):
    """Cone at x; the relevant flight time is simulated unless given."""
    b = bits or DOUBLE_BITS
    if tau is None:
        res = apply_inverse(table, x, b) if kind == "unstable" else apply_map(table, x, b)
        tau = res.tau
    with working_precision(b) as ops:
        phi = ops.num(x.phi)
        c = 0 if abs(phi) == ops.half_pi else ops.cos(phi)
        return ConeSpec(kind, table[x.i].curvature(ops), c / ops.num(tau), x)


def strip_index(phi):
    """Homogeneity strip of an angle; 0 is the bulk and ON_S0 marks |phi| = pi/2."""
    gap = math.pi / 2 - abs(phi)
    if gap < 0:
        raise ValueError("|phi| exceeds pi/2")
    if gap == 0:
        return ON_S0
    if gap > 1:
        return 0
    k = max(1, int(math.floor(1 / math.sqrt(gap))))
    # H_k holds gaps in ((k+1)^-2, k^-2]
    while gap <= 1 / (k + 1) ** 2 or math.isclose(gap, 1 / (k + 1) ** 2, rel_tol=1e-13):
        k += 1
    # an edge k^-2 computed as pi/2 - phi in floating point lands a few ulps off
    while gap > 1 / k ** 2 and not math.isclose(gap, 1 / k ** 2, rel_tol=1e-13):
        k -= 1
    return k


@dataclass
class InvarianceReport:
    kind: str
    samples: int
    tested: int = 0
    skipped: int = 0
    passed: int = 0
    worst_margin: float = math.inf
    min_expansion: float = math.inf
    Lambda: float = 1.0
    failures: list = field(default_factory=list)

    @property
    def pass_fraction(self):
        return self.passed / self.tested if self.tested else 1.0

    @property
    def ok(self):
        return self.passed == self.tested

    def to_dict(self):
        return {"kind": self.kind, "samples": self.samples, "tested": self.tested, "skipped": self.skipped,
                "passed": self.passed, "pass_fraction": self.pass_fraction,
                "worst_margin": None if math.isinf(self.worst_margin) else self.worst_margin,
                "min_expansion": None if math.isinf(self.min_expansion) else self.min_expansion,
                "Lambda": self.Lambda, "failures": self.failures[:20]}


def _image_slope(D, s):
    dr, dphi = D.apply((1.0, s))
    return dr, dphi / dr


def _check_one(table, x, kind):
    """(margin, expansion) worst over both edges of the cone at x."""
    if kind == "unstable":
        back = apply_inverse(table, x)
        res = apply_map(table, x)
        D = map_derivative(table, x, res)
        tau_here, tau_there = back.tau, res.tau
    else:
        fwd = apply_map(table, x)
        res = apply_inverse(table, x)
        D = inverse_derivative(table, x, res)
        tau_here, tau_there = fwd.tau, res.tau
    if _tangent(res):
        raise GrazingDerivative("image is tangent")
    y = res.next
    c0, c1 = math.cos(x.phi), float(res.cos_next)
    here = ConeSpec(kind, 1 / table[x.i].radius_f, c0 / tau_here)
    there = ConeSpec(kind, 1 / table[y.i].radius_f, c1 / tau_there)
    lo, hi = there.interval
    margin, expansion = math.inf, math.inf
    for s in here.interval:
        dr1, s1 = _image_slope(D, s)
        margin = min(margin, s1 - lo, hi - s1)
        expansion = min(expansion, c1 * abs(dr1) / c0)
    return margin, expansion


def _tangent(res):
    return res.grazing or float(res.cos_next) <= 0


def check_cone_invariance(table, samples, kind="unstable", seed=0, tol=1e-9):
    """Sample interior phase points and test strict cone invariance and expansion.

    Points whose neighbouring collisions are tangent (or that fail to
    simulate) are skipped and counted.
    """
    Lam = table.hyperbolicity_constant
    rep = InvarianceReport(kind, samples, Lambda=Lam)
    rng = np.random.default_rng(seed)
    for _ in range(samples):
        i = int(rng.integers(len(table)))
        r = float(rng.uniform(0, table[i].perimeter_f))
        phi = float(rng.uniform(-math.pi / 2, math.pi / 2))
        x = PhasePoint(i, r, phi)
        try:
            margin, expansion = _check_one(table, x, kind)
        except (BilliardError, ZeroDivisionError):
            rep.skipped += 1
            continue
        rep.tested += 1
        rep.worst_margin = min(rep.worst_margin, margin)
        rep.min_expansion = min(rep.min_expansion, expansion)
        if margin > 0 and expansion >= Lam - tol:
            rep.passed += 1
        else:
            rep.failures.append({"i": i, "r": r, "phi": phi, "margin": margin, "expansion": expansion})
    return rep


def euclidean_expansion(table, x, slope=None):
    """|DT(x) v| / |v| for v in the unstable cone at x (lower edge by default)."""
    res = apply_map(table, x)
    D = map_derivative(table, x, res)
    K = 1 / table[x.i].radius_f
    s = K if slope is None else slope
    w = D.apply((1.0, s))
    return math.hypot(float(w[0]), float(w[1])) / math.hypot(1.0, s)


def expansion_prefactor(table, samples, steps=8, seed=0):
    """Smallest observed |DT^k v| / (Lambda^k |v|) in the Euclidean norm, k <= steps.

    v starts on the lower edge of the unstable cone.  The uniform bound only
    holds up to this constant, which is measured here rather than assumed.
    """
    Lam = table.hyperbolicity_constant
    rng = np.random.default_rng(seed)
    worst, used = math.inf, 0
    for _ in range(samples):
        i = int(rng.integers(len(table)))
        x = PhasePoint(i, float(rng.uniform(0, table[i].perimeter_f)), float(rng.uniform(-1.5, 1.5)))
        v = (1.0, 1 / table[i].radius_f)
        n0 = math.hypot(*v)
        try:
            for k in range(1, steps + 1):
                res = apply_map(table, x)
                v = map_derivative(table, x, res).apply(v)
                v = (float(v[0]), float(v[1]))
                worst = min(worst, math.hypot(*v) / (n0 * Lam ** k))
                x = res.next
        except BilliardError:
            continue
        used += 1
    return {"C_e": worst if used else None, "Lambda": Lam, "samples": used, "steps": steps}


@dataclass
class LyapunovReport:
    orbit_id: str
    period: int
    log_stretch: list
    exponent: float
    Lambda: float
    per_f_step: float | None = None
    bits: int = DOUBLE_BITS
    log_spectral_radius: object = None

    def to_dict(self):
        return {"orbit_id": self.orbit_id, "period": self.period, "exponent_per_T_step": self.exponent,
                "exponent_per_f_step": self.per_f_step, "Lambda": self.Lambda,
                "log_Lambda": math.log(self.Lambda), "bits": self.bits}


def _cycle_data(table, orbit, ops):
    """Per-step (K, cos phi, tau, K_next, cos phi_next) along a periodic orbit."""
    p = len(orbit.points)
    out = []
    for k in range(p):
        x, y = orbit.points[k], orbit.points[(k + 1) % p]
        cx, cy = ops.num(x.phi), ops.num(y.phi)
        c0 = 0 if abs(cx) >= ops.half_pi else ops.cos(cx)
        c1 = 0 if abs(cy) >= ops.half_pi else ops.cos(cy)
        if c0 <= 0 or c1 <= 0:
            raise GrazingDerivative(f"step {k} touches the grazing set")
        out.append((table[x.i].curvature(ops), c0, ops.num(orbit.taus[k]), table[y.i].curvature(ops), c1))
    return out


def cycle_product(table, orbit, bits=None):
    """Ordered product DT(x_{p-1}) ... DT(x_0) over one period."""
    b = bits or max(orbit.bits_used or [DOUBLE_BITS])
    with working_precision(b) as ops:
        M = DerivativeMatrix(((1, 0), (0, 1)))
        for K, c0, tau, K1, c1 in _cycle_data(table, orbit, ops):
            f = -1 / c1
            D = DerivativeMatrix(((f * (tau * K + c0), f * tau),
                                  (f * (tau * K * K1 + K1 * c0 + K * c1), f * (tau * K1 + c1))))
            M = D @ M
        return M


def lyapunov_periodic(table, orbit, ell=None, bits=None, max_sweeps=None):
    """Lyapunov exponent of a periodic orbit by cone-attracted power iteration.

    The unstable slope is propagated around the cycle until it repeats to
    working precision; per-step stretches are adapted-norm factors
    1 + tau (K + s)/cos(phi), whose cycle sum is the log spectral radius.
    """
    b = bits or max(orbit.bits_used or [DOUBLE_BITS])
    p = len(orbit.points)
    with working_precision(b) as ops:
        data = _cycle_data(table, orbit, ops)
        s = data[0][0]
        sweeps = max_sweeps or (8 + b)
        tol = ops.eps() * 64
        for _ in range(sweeps):
            s_prev = s
            logs = []
            for K, c0, tau, K1, c1 in data:
                B = (K + s) / c0
                logs.append(ops.log(1 + tau * B))
                s = K1 + c1 * B / (1 + tau * B)
            if abs(s - s_prev) <= tol * abs(s):
                break
        total = sum(logs)
        lam = total / p
        Lam = table.hyperbolicity_constant
        return LyapunovReport(orbit.label or "orbit", p, [float(v) for v in logs], float(lam), Lam,
                              per_f_step=float(lam * 4 * ell) if ell else None, bits=b,
                              log_spectral_radius=total)
