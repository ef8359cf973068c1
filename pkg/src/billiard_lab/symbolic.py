"""Bernoulli cylinder weights, Abramov entropy, divergence and pressure reports.

With x = 1/rho the weights w_n = rho^-floor(n/2) pair up (n = 2k, 2k+1 share
x^k), so every series below is a geometric series with a closed form:

    sum w_n             = 1 + 2x/(1 - x)
    sum n w_n           = 1 + 4x/(1 - x)^2 + x/(1 - x)
    sum floor(n/2) w_n  = 2x/(1 - x)^2

and -sum p_n log p_n = log b + log(rho) sum floor(n/2) p_n.
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath

from ._numeric import to_str, working_precision
from .errors import GrazingOrbit, NotExceeded

DPS = 60


@dataclass(frozen=True)
class BernoulliSpec:
    rho: Fraction = Fraction(3, 2)
    N: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "rho", Fraction(self.rho))
        if self.rho <= 1:
            raise ValueError("rate must exceed 1")
        if self.N < 1:
            raise ValueError("truncation level must be positive")

    @property
    def x(self):
        return 1 / self.rho

    @property
    def b(self):
        """Normalizer sum_n rho^-floor(n/2), exact."""
        x = self.x
        return 1 + 2 * x / (1 - x)

    @property
    def mean_return_exact(self):
        x = self.x
        return (1 + 4 * x / (1 - x) ** 2 + x / (1 - x)) / self.b

    @property
    def mean_floor_exact(self):
        x = self.x
        return (2 * x / (1 - x) ** 2) / self.b

    def p(self, n):
        """p_n as an exact fraction."""
        return 1 / (self.b * self.rho ** (n // 2))

    def tail_mass_bound(self, N=None):
        """Bound 2 x^floor(N/2) on sum_{n > N} p_n."""
        N = self.N if N is None else N
        with mpmath.workdps(DPS):
            return 2 * mpmath.mpf(self.x.numerator) ** (N // 2) / mpmath.mpf(self.x.denominator) ** (N // 2)


def _geom_tails(x, K):
    """(sum_{k>=K} x^k, sum_{k>=K} k x^k) in closed form."""
    a = x ** K / (1 - x)
    b = x ** K * (K * (1 - x) + x) / (1 - x) ** 2
    return a, b


def abramov_entropy(spec):
    """Truncated and limiting h = (-sum p_n log p_n) / (sum n p_n) in nats.

    Partial sums run to n = N; the tails beyond N are summed in closed form
    and reported as the truncation error of each quantity.
    """
    if spec.N < 2:
        raise ValueError("truncation level must be at least 2")
    with mpmath.workdps(DPS):
        rho = mpmath.mpf(spec.rho.numerator) / spec.rho.denominator
        x = 1 / rho
        b = mpmath.mpf(spec.b.numerator) / spec.b.denominator
        logb, logr = mpmath.log(b), mpmath.log(rho)
        # partial sums grouped by k = floor(n/2)
        mass = num = den = mpmath.mpf(0)
        xk = mpmath.mpf(1)
        for k in range(spec.N // 2 + 1):
            ns = [n for n in (2 * k, 2 * k + 1) if 1 <= n <= spec.N]
            pk = xk / b
            mass += len(ns) * pk
            num += len(ns) * pk * (logb + k * logr)
            den += sum(ns) * pk
            xk *= x
        # closed-form limits
        mean_floor = mpmath.mpf(spec.mean_floor_exact.numerator) / spec.mean_floor_exact.denominator
        den_lim = mpmath.mpf(spec.mean_return_exact.numerator) / spec.mean_return_exact.denominator
        num_lim = logb + logr * mean_floor
        h_lim = num_lim / den_lim
        h_N = num / den
        K = spec.N // 2 + 1
        t0, t1 = _geom_tails(x, K)
        # one term at n = N+1 may be missing from the last pair when N is even
        extra = x ** (spec.N // 2) / b if spec.N % 2 == 0 else 0
        mass_tail = 2 * t0 / b + extra
        num_tail = (2 * t0 * logb + 2 * t1 * logr) / b + extra * (logb + (spec.N // 2) * logr)
        den_tail = (4 * t1 + t0) / b + extra * (spec.N + 1)
        trunc = (num_tail + h_lim * den_tail) / den
        return {
            "h_f": float(h_lim),
            "h_f_truncated": float(h_N),
            "numerator": float(num_lim),
            "denominator": float(den_lim),
            "numerator_truncated": float(num),
            "denominator_truncated": float(den),
            "b": float(b),
            "b_exact": str(spec.b),
            "denominator_exact": str(spec.mean_return_exact),
            "mass_truncated": float(mass),
            "tail_mass": mpmath.nstr(mass_tail, 17),
            "tail_mass_bound": mpmath.nstr(spec.tail_mass_bound(), 17),
            "truncation_error": mpmath.nstr(trunc, 17),
            "N": spec.N,
            "rho": str(spec.rho),
        }


def entropy_T(spec, ell):
    """h_mu(T) = h_f / (4 ell) with the floor log(rho)/(32 ell^2) it must exceed."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    h_f = abramov_entropy(spec)["h_f"]
    h_T = h_f / (4 * ell)
    floor = math.log(float(spec.rho)) / (32 * ell * ell)
    return {"ell": ell, "h_T": h_T, "h_f": h_f, "floor": floor, "exceeds_floor": h_T > floor}


def nonadapted_terms(spec, N):
    """p_n rho^floor(n/2) for n = 1..N (each equals 1/b)."""
    with mpmath.workdps(DPS):
        rho = mpmath.mpf(spec.rho.numerator) / spec.rho.denominator
        b = mpmath.mpf(spec.b.numerator) / spec.b.denominator
        out = []
        for n in range(1, N + 1):
            p_n = 1 / (b * rho ** (n // 2))
            out.append(p_n * rho ** (n // 2))
        return out


def nonadapted_partial_sums(spec, delta, N):
    """S_M = |log delta| sum_{n <= M} p_n rho^floor(n/2) for M = 1..N.

    Each term is |log delta| / b, so S_M grows linearly and the series that
    would make the measure adapted diverges.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    with mpmath.workdps(DPS):
        L = abs(mpmath.log(delta))
        sums, acc = [], mpmath.mpf(0)
        for t in nonadapted_terms(spec, N):
            acc += L * t
            sums.append(float(acc))
    return sums


def srb_density(table, x):
    """cos(phi) / (2 |boundary|), the invariant density in (r, phi)."""
    return math.cos(float(x.phi)) / (2 * table.total_perimeter)


def adaptedness_witness(orbit, bits=None):
    """Distance epsilon_star of a periodic orbit from the grazing set.

    The orbit measure gives zero mass to the epsilon-neighbourhood of the
    grazing set for every epsilon < epsilon_star, so the polynomial
    neighbourhood bound holds with any constants.
    """
    b = bits or max(orbit.bits_used or [53])
    with working_precision(b) as ops:
        eps = min(p.dist_S0(ops) for p in orbit.points)
        if eps <= 0:
            raise GrazingOrbit("orbit touches the grazing set")
        log10 = float(mpmath.log10(eps)) if b > 53 else math.log10(eps)
        return {"epsilon_star": to_str(eps, b) if b > 53 else repr(eps), "log10_epsilon_star": log10,
                "condition_a": True}


@dataclass
class CatalogEntry:
    n: int
    orbit: object
    lyapunov: float
    min_dist: str
    log10_min_dist: float


@dataclass
class PressureQuery:
    t: float
    catalog: list
    target: float

    def __post_init__(self):
        if not self.catalog:
            raise ValueError("orbit catalog is empty")


@dataclass
class PressureReport:
    t: float
    target: float
    rows: list = field(default_factory=list)
    first_exceeding: int | None = None

    def to_dict(self):
        return {"t": self.t, "target": self.target, "first_exceeding_n": self.first_exceeding, "rows": self.rows}


def pressure_divergence_report(query):
    """Functional h - t*lambda over the periodic-orbit catalog.

    Orbit measures have zero entropy, so the value is -t * lambda(y_n).  Each
    row carries the orbit's adaptedness witness.  For t < 0 the first n with
    value above the target is reported, NotExceeded if there is none.
    """
    rep = PressureReport(query.t, query.target)
    for e in sorted(query.catalog, key=lambda e: e.n):
        witness = adaptedness_witness(e.orbit)
        value = 0.0 - query.t * e.lyapunov if query.t != 0 else 0.0
        rep.rows.append({"n": e.n, "lyapunov": e.lyapunov, "entropy": 0.0, "value": value,
                         "epsilon_star": witness["epsilon_star"],
                         "log10_epsilon_star": witness["log10_epsilon_star"],
                         "condition_a": witness["condition_a"]})
        if rep.first_exceeding is None and value > query.target:
            rep.first_exceeding = e.n
    if query.t < 0 and rep.first_exceeding is None:
        best = max(r["value"] for r in rep.rows)
        raise NotExceeded(f"largest value {best:.4g} stays below {query.target}; extend the catalog in n")
    return rep
