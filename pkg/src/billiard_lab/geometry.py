"""Scatterers, tables on the unit torus, phase points and table validation."""
import functools
import itertools
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._numeric import DOUBLE_BITS, to_str, working_precision
from .errors import HorizonUnbounded, OverlappingScatterers

TORUS_DIAMETER = math.sqrt(2.0)
DEFAULT_FLIGHT_CAP = 20 * TORUS_DIAMETER


@dataclass(frozen=True)
class Scatterer:
    """A circular obstacle, parametrized clockwise by arclength.

    ``center`` and ``radius`` keep their raw values (float, decimal string or
    mpf) so that high-precision tables are not rounded through doubles.
    """

    center: tuple
    radius: object
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if float(self.radius) <= 0:
            raise ValueError("scatterer radius must be positive")

    @property
    def center_f(self):
        return float(self.center[0]), float(self.center[1])

    @property
    def radius_f(self):
        return float(self.radius)

    @property
    def perimeter_f(self):
        return 2 * math.pi * self.radius_f

    def coords(self, ops):
        """(cx, cy, R) converted to the precision of ``ops``."""
        key = ops.bits
        if key not in self._cache:
            self._cache[key] = tuple(ops.num(v) for v in (*self.center, self.radius))
        return self._cache[key]

    def perimeter(self, ops):
        return 2 * ops.pi * self.coords(ops)[2]

    def curvature(self, ops, r=None):
        return 1 / self.coords(ops)[2]

    def frame(self, ops, r):
        """Boundary point, outward normal and unit tangent (direction of increasing r)."""
        cx, cy, R = self.coords(ops)
        theta = -r / R
        c, s = ops.cos_sin(theta)
        return (cx + R * c, cy + R * s), (c, s), (s, -c)

    def point(self, ops, r):
        return self.frame(ops, r)[0]

    def arclength(self, ops, px, py):
        """Arclength of the boundary point closest to (px, py)."""
        cx, cy, R = self.coords(ops)
        r = -ops.atan2(py - cy, px - cx) * R
        per = self.perimeter(ops)
        return r % per

    def to_json(self, bits=None):
        def enc(v):
            if isinstance(v, (float, int, str)):
                return v
            return to_str(v, bits)
        return {"type": "circle", "center": [enc(self.center[0]), enc(self.center[1])],
                "radius": enc(self.radius)}


@dataclass(frozen=True)
class PhasePoint:
    """Collision coordinates: scatterer index, arclength, reflection angle."""

    i: int
    r: object
    phi: object

    def dist_S0(self, ops):
        """pi/2 - |phi|; zero exactly on the grazing set."""
        return ops.half_pi - abs(ops.num(self.phi))

    def reversed(self):
        return PhasePoint(self.i, self.r, -self.phi)

    def as_float(self):
        return PhasePoint(self.i, float(self.r), float(self.phi))


@dataclass(frozen=True)
class Table:
    scatterers: tuple
    precision_bits: int = DOUBLE_BITS
    flight_cap: float = DEFAULT_FLIGHT_CAP
    tau_max_bound: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "scatterers", tuple(self.scatterers))
        if len(self.scatterers) < 1:
            raise ValueError("table needs at least one scatterer")

    def __len__(self):
        return len(self.scatterers)

    def __getitem__(self, i):
        return self.scatterers[i]

    @property
    def K_min(self):
        return 1.0 / max(s.radius_f for s in self.scatterers)

    @property
    def K_max(self):
        return 1.0 / min(s.radius_f for s in self.scatterers)

    @property
    def r_max(self):
        return max(s.radius_f for s in self.scatterers)

    @property
    def total_perimeter(self):
        return sum(s.perimeter_f for s in self.scatterers)

    @property
    def tau_min(self):
        return min_gap(self)[0]

    @property
    def hyperbolicity_constant(self):
        """1 + 2 K_min tau_min."""
        return 1.0 + 2.0 * self.K_min * self.tau_min

    @property
    def centers(self):
        return np.array([s.center_f for s in self.scatterers])

    @property
    def radii(self):
        return np.array([s.radius_f for s in self.scatterers])

    def with_precision(self, bits):
        return replace(self, precision_bits=int(bits))

    def to_json(self):
        return {"scatterers": [s.to_json(self.precision_bits) for s in self.scatterers],
                "precision_bits": self.precision_bits, "flight_cap": self.flight_cap}


def circle(x, y, radius):
    return Scatterer((x, y), radius)


def two_disk_table(radius=0.15, precision_bits=DOUBLE_BITS):
    """Disks centred at (1/4, 1/2) and (3/4, 1/2); the head-on gap is 1/2 - 2 radius."""
    return Table((circle(0.25, 0.5, radius), circle(0.75, 0.5, radius)), precision_bits)


def table_from_dict(cfg):
    """Build a table from the JSON config schema.

    Lengths may be numbers or decimal strings; strings keep full precision.
    """
    scs = []
    for entry in cfg["scatterers"]:
        if entry.get("type", "circle") != "circle":
            raise ValueError(f"unsupported scatterer type {entry.get('type')!r}")
        cx, cy = entry["center"]
        scs.append(Scatterer((_raw(cx), _raw(cy)), _raw(entry["radius"])))
    return Table(tuple(scs), int(cfg.get("precision_bits", DOUBLE_BITS)),
                 float(cfg.get("flight_cap", DEFAULT_FLIGHT_CAP)))


def _raw(v):
    # JSON is parsed with parse_float=str so decimals arrive untouched
    if isinstance(v, str):
        return v
    return float(v)


def load_table(path):
    with open(path) as fh:
        return table_from_dict(json.load(fh, parse_float=str))


def load_system(path, bits=None):
    """A table file; files carrying a "grazing" record come back as a GrazingTable."""
    with open(path) as fh:
        text = fh.read()
    cfg = json.loads(text, parse_float=str)
    if "grazing" not in cfg:
        table = table_from_dict(cfg)
        return table.with_precision(bits) if bits else table
    rec = json.loads(text)["grazing"]
    return grazing_table_from_dict(rec, bits or int(cfg.get("precision_bits", 256)))


def save_table(table, path):
    with open(path, "w") as fh:
        json.dump(table.to_json(), fh, indent=2)


def lattice_offsets(radius):
    """Integer vectors (a, b) with |(a, b)| <= radius, nearest first."""
    n = int(math.ceil(radius))
    offs = [(a, b) for a in range(-n, n + 1) for b in range(-n, n + 1) if a * a + b * b <= radius * radius]
    offs.sort(key=lambda ab: (ab[0] ** 2 + ab[1] ** 2, ab))
    return offs


def min_gap(table):
    """Smallest boundary-to-boundary distance over scatterers and translates.

    Returns (gap, (i, j, offset)).
    """
    best = (math.inf, None)
    scs = table.scatterers
    offs = list(itertools.product(range(-2, 3), repeat=2))
    for i, j in itertools.combinations_with_replacement(range(len(scs)), 2):
        (xi, yi), (xj, yj) = scs[i].center_f, scs[j].center_f
        for a, b in offs:
            if i == j and a == 0 and b == 0:
                continue
            d = math.hypot(xj + a - xi, yj + b - yi) - scs[i].radius_f - scs[j].radius_f
            if d < best[0]:
                best = (d, (i, j, (a, b)))
    return best


@dataclass
class ValidationReport:
    disjoint: bool
    gap: float
    tau_min: float
    tau_max_estimate: float
    K_min: float
    K_max: float
    finite_horizon: bool
    directions: int
    offsets: int
    flight_cap: float
    worst_direction: float | None = None

    @property
    def hyperbolicity_constant(self):
        return 1.0 + 2.0 * self.K_min * self.tau_min

    def to_dict(self):
        d = dict(self.__dict__)
        d["hyperbolicity_constant"] = self.hyperbolicity_constant
        return d


def max_free_flight(table, directions=4096, offsets=4096, cap=None):
    """Sampled supremum of free flights.

    For each of ``directions`` angles in [0, pi) a family of ``offsets``
    parallel lines is cast through the unfolded table; the longest gap
    between consecutive scatterer chords along any line is recorded.  A line
    that sees a gap of at least ``cap`` counts as an open corridor.

    Returns (max_flight, angle_of_max).  ``max_flight`` is ``inf`` when a
    corridor was detected.
    """
    cap = table.flight_cap if cap is None else cap
    centers, radii = table.centers, table.radii
    rmax = radii.max()
    reach = cap + rmax + 2.0
    offs = np.array(lattice_offsets(reach + 1.5), dtype=float)
    # all translates near the origin cell
    tc = (centers[None, :, :] + offs[:, None, :]).reshape(-1, 2)
    tr = np.broadcast_to(radii, (len(offs), len(radii))).reshape(-1)
    s_grid = (np.arange(offsets) + 0.5) / offsets
    best, best_angle = 0.0, None
    for k in range(directions):
        ang = math.pi * k / directions
        u = np.array([math.cos(ang), math.sin(ang)])
        w = np.array([-u[1], u[0]])
        along, perp = tc @ u, tc @ w
        keep = (np.abs(along) <= cap + tr) & (perp >= -tr) & (perp <= 1.0 + tr)
        a, p, rr = along[keep], perp[keep], tr[keep]
        lo = np.searchsorted(s_grid, p - rr, side="right")
        hi = np.searchsorted(s_grid, p + rr, side="left")
        counts = np.maximum(hi - lo, 0)
        if counts.sum() == 0:
            return math.inf, ang
        owner = np.repeat(np.arange(len(a)), counts)
        line = np.concatenate([np.arange(l, h) for l, h in zip(lo, hi) if h > l])
        dy = s_grid[line] - p[owner]
        half = np.sqrt(np.maximum(rr[owner] ** 2 - dy ** 2, 0.0))
        entry, exit_ = a[owner] - half, a[owner] + half
        order = np.lexsort((entry, line))
        line, entry, exit_ = line[order], entry[order], exit_[order]
        same = line[1:] == line[:-1]
        gaps = entry[1:][same] - exit_[:-1][same]
        per_line = np.bincount(line, minlength=offsets)
        if np.any(per_line == 0):
            return math.inf, ang
        first = np.ones(len(line), dtype=bool)
        first[1:] = ~same
        last = np.ones(len(line), dtype=bool)
        last[:-1] = ~same
        lead = entry[first] + cap
        trail = cap - exit_[last]
        if lead.max() >= cap or trail.max() >= cap:
            return math.inf, ang
        g = gaps.max() if gaps.size else 0.0
        if g >= cap:
            return math.inf, ang
        if g > best:
            best, best_angle = g, ang
    return best, best_angle


def validate_table(table, directions=4096, offsets=4096, require_finite_horizon=True):
    """Check disjointness and sample the horizon.

    Raises OverlappingScatterers for intersecting obstacles and, when
    ``require_finite_horizon`` is set, HorizonUnbounded if some sampled line
    runs longer than ``table.flight_cap`` without a collision.
    """
    if len(table) < 1:
        raise ValueError("empty table")
    gap, where = min_gap(table)
    if gap <= 0:
        raise OverlappingScatterers(f"scatterers {where[0]} and {where[1]} (offset {where[2]}) overlap, gap={gap:.3g}")
    flight, ang = max_free_flight(table, directions, offsets)
    finite = math.isfinite(flight)
    report = ValidationReport(
        disjoint=True, gap=gap, tau_min=gap, tau_max_estimate=float(flight),
        K_min=table.K_min, K_max=table.K_max, finite_horizon=finite,
        directions=directions, offsets=offsets, flight_cap=table.flight_cap,
        worst_direction=ang)
    if not finite and require_finite_horizon:
        raise HorizonUnbounded(f"open corridor near direction {ang:.6f} rad (flight cap {table.flight_cap:.3f})")
    return report


def validated(table, report):
    """Copy of ``table`` carrying the certified horizon bound from ``report``."""
    bound = report.tau_max_estimate if report.finite_horizon else table.flight_cap
    return replace(table, tau_max_bound=float(bound))


def with_ops(table, bits=None):
    """Context manager yielding ops at ``bits`` (default: the table's precision)."""
    return working_precision(bits or table.precision_bits)


@dataclass
class GrazingTable:
    table: Table
    x0: PhasePoint
    period: int
    orbit: object
    core_orbit: object
    tangent_index: int
    construction: dict = field(default_factory=dict)

    def rebuild(self, bits):
        """The same construction carried out at ``bits`` of precision."""
        if not self.construction:
            raise ValueError("grazing table carries no construction record")
        if bits == self.table.precision_bits:
            return self
        return _rebuilt(json.dumps(self.construction, sort_keys=True), int(bits))

    def to_json(self):
        d = self.table.to_json()
        d["grazing"] = dict(self.construction)
        d["x0"] = {"i": self.x0.i, "r": to_str(self.x0.r, self.table.precision_bits),
                   "phi": to_str(self.x0.phi, self.table.precision_bits)}
        d["period"] = self.period
        return d


def build_grazing_table(core, tangent_radius, segment=0, side="left", position=0.5,
                        blockers=(), precision_bits=256, itinerary=None):
    """Add a scatterer tangent to one flight of a periodic orbit of ``core``.

    ``core`` is a Table (or scatterer list) whose scatterers, visited in
    order, carry a nondegenerate periodic orbit.  A disk of radius
    ``tangent_radius`` is placed on ``side`` ('left'/'right' of the directed
    flight ``segment``) touching it at fraction ``position`` of its length.
    ``blockers`` are extra scatterers (e.g. to close corridors) that must
    not touch the orbit.

    Returns a GrazingTable whose ``x0`` is the grazing phase point on the
    new scatterer, a fixed point of T^period.
    """
    from .billiard_map import orbit_segment
    from .errors import NonPhysicalCollision, TangencyPlacementFailed
    from .periodic import ItinerarySpec, orbit_from_positions, solve_periodic

    scs = tuple(core.scatterers if isinstance(core, Table) else core)
    guard = precision_bits + 32
    core_table = Table(scs, guard)
    itin = itinerary or ItinerarySpec(tuple(range(len(scs))), None)
    core_orbit = solve_periodic(core_table, itin, bits=guard)
    if not 0 < position < 1:
        raise TangencyPlacementFailed("tangency must lie in the interior of the flight")
    p = len(itin)
    j, k = segment % p, (segment + 1) % p
    with working_precision(guard) as ops:
        P0 = core_table[itin.scatterers[j]].point(ops, ops.num(core_orbit.points[j].r))
        P1 = core_table[itin.scatterers[k]].point(ops, ops.num(core_orbit.points[k].r))
        a, b = itin.offsets[j]
        dx, dy = P1[0] + a - P0[0], P1[1] + b - P0[1]
        length = ops.sqrt(dx * dx + dy * dy)
        ux, uy = dx / length, dy / length
        nx, ny = (-uy, ux) if side == "left" else (uy, -ux)
        R = ops.num(tangent_radius)
        pos = ops.num(position)
        tx, ty = P0[0] + pos * dx, P0[1] + pos * dy
        cx, cy = tx + nx * R, ty + ny * R
        # keep the new center in the unit cell; shift the tangency point with it
        sx, sy = ops.floor(cx), ops.floor(cy)
        cx, cy, tx, ty = cx - sx, cy - sy, tx - sx, ty - sy
        new = Scatterer((cx, cy), R)
        table = Table(scs + (new,) + tuple(blockers), precision_bits)
        gap, where = min_gap(table)
        if gap <= 0:
            raise TangencyPlacementFailed(f"tangent disk overlaps scatterer pair {where}")
        m = len(scs)
    with working_precision(precision_bits) as ops:
        sc = table[m]
        r0 = sc.arclength(ops, tx, ty)
        _, _, tan = sc.frame(ops, r0)
        phi0 = ops.half_pi if ux * tan[0] + uy * tan[1] > 0 else -ops.half_pi
        x0 = PhasePoint(m, r0, phi0)
        # the rest of the orbit must stay unobstructed
        try:
            orbit_from_positions(table, itin, [ops.num(q.r) for q in core_orbit.points], ops)
        except NonPhysicalCollision as exc:
            # only the designed tangency is allowed to touch the flight
            if f"crosses scatterer {m} " in str(exc) or "crosses" in str(exc):
                raise TangencyPlacementFailed(f"construction blocks the orbit: {exc}") from exc
            raise
    orbit = orbit_segment(table, x0, p + 1)
    with working_precision(precision_bits) as ops:
        end = orbit.points[-1]
        err = abs(ops.num(end.r) - ops.num(r0)) + abs(ops.num(end.phi) - phi0)
        if end.i != m or err > 1e-10:
            raise TangencyPlacementFailed(f"grazing orbit does not close (error {float(err):.3g})")
    cycle = orbit_segment(table, x0, p + 1)
    cycle.points = cycle.points[:-1]
    cycle.periodic = True
    record = {"core": [c.to_json() for c in scs], "tangent_radius": tangent_radius,
              "segment": segment, "side": side, "position": position,
              "blockers": [c.to_json() for c in blockers],
              "itinerary": itinerary.to_json() if itinerary is not None else None}
    return GrazingTable(table, x0, p + 1, cycle, core_orbit, m, record)


def grazing_table_from_dict(rec, bits=256):
    from .periodic import ItinerarySpec

    def sc(d):
        return Scatterer(tuple(d["center"]), d["radius"])

    itin = ItinerarySpec.from_json(rec["itinerary"]) if rec.get("itinerary") else None
    return build_grazing_table(tuple(sc(d) for d in rec["core"]), rec["tangent_radius"],
                               segment=rec["segment"], side=rec["side"], position=rec["position"],
                               blockers=tuple(sc(d) for d in rec["blockers"]), precision_bits=bits,
                               itinerary=itin)


@functools.lru_cache(maxsize=32)
def _rebuilt(key, bits):
    return grazing_table_from_dict(json.loads(key), bits)


def default_grazing_table(precision_bits=256):
    """Equilateral-style core, tangent disk on the bottom flight, corridor blockers."""
    core = (circle(0.25, 0.25, 0.12), circle(0.75, 0.25, 0.12), circle(0.5, 0.68, 0.12))
    blockers = (circle(0.0, 0.0, 0.2), circle(0.0, 0.5, 0.2), circle(0.5, 0.0, 0.18))
    return build_grazing_table(core, 0.08, segment=0, side="left", position=0.5,
                               blockers=blockers, precision_bits=precision_bits)


@dataclass
class GrazingCheck:
    one_sided: bool
    side: str | None
    sides: list


def check_grazing_assumption(table, orbit, tol=0.0):
    """Whether every grazing collision of ``orbit`` lies on the same side.

    A collision is grazing when d(x, S0) <= tol (exact tangency by default).
    phi = +pi/2 puts the scatterer on the traveller's right.
    """
    from .errors import NoGrazingCollision

    sides = []
    bits = max(orbit.bits_used or [DOUBLE_BITS])
    with working_precision(bits) as ops:
        for x in orbit.points:
            if x.dist_S0(ops) <= tol:
                sides.append("right" if ops.num(x.phi) > 0 else "left")
    if not sides:
        raise NoGrazingCollision("orbit has no grazing collision")
    one = len(set(sides)) == 1
    return GrazingCheck(one, sides[0] if one else None, sides)
