"""billiard-lab: one subcommand per computation, each writing a report bundle.

A bundle is a directory ``<dir>/<name>/`` holding ``summary.json``, CSV data
files and ``manifest.json`` (package version, config and its hash, the
precision log and a sha256 per file).  Nothing time-dependent is written, so
equal configs give byte-identical bundles.
"""
import argparse
import csv
import glob
import hashlib
import io
import json
import os
import sys
from fractions import Fraction

import mpmath
import numpy as np

from . import __version__
from ._numeric import DOUBLE_BITS, max_bits, to_str, working_precision
from .errors import BilliardError, GeometryError, NoGrazingCollision

EXIT_OK, EXIT_USAGE, EXIT_GEOMETRY, EXIT_NUMERICAL = 0, 2, 3, 4
DEFAULT_DIR = "billiard-lab-out"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class Bundle:
    def __init__(self, root, name, config):
        self.dir = os.path.join(root, name)
        self.name = name
        self.config = config
        self.files = {}
        self.precision_log = []

    def note_bits(self, context, bits):
        self.precision_log.append({"context": context, "bits": int(bits)})

    def _write(self, fname, text):
        os.makedirs(self.dir, exist_ok=True)
        data = text.encode()
        with open(os.path.join(self.dir, fname), "wb") as fh:
            fh.write(data)
        self.files[fname] = hashlib.sha256(data).hexdigest()

    def add_json(self, fname, obj):
        self._write(fname, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def add_csv(self, fname, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        self._write(fname, buf.getvalue())

    def finish(self, summary):
        self.add_json("summary.json", summary)
        manifest = {"version": __version__, "command": self.name, "config": self.config,
                    "config_hash": hashlib.sha256(_canonical(self.config).encode()).hexdigest(),
                    "precision_log": self.precision_log, "files": dict(sorted(self.files.items()))}
        os.makedirs(self.dir, exist_ok=True)
        with open(os.path.join(self.dir, "manifest.json"), "w") as fh:
            fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return summary


def _copy_out(path, bundle, fname):
    if path:
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        with open(os.path.join(bundle.dir, fname), "rb") as src, open(path, "wb") as dst:
            dst.write(src.read())


# table and orbit files

def _load(spec, bits=None):
    from .geometry import default_grazing_table, load_system, two_disk_table

    if spec == "builtin:two-disk":
        t = two_disk_table()
        return t.with_precision(bits) if bits else t
    if spec == "builtin:grazing":
        return default_grazing_table(bits or 256)
    if not os.path.isfile(spec):
        raise UsageError(f"table file not found: {spec}")
    try:
        return load_system(spec, bits)
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise UsageError(f"malformed table file {spec}: {exc}") from exc


def _plain(system):
    return getattr(system, "table", system)


def _need_grazing(system):
    if not hasattr(system, "x0"):
        raise NoGrazingCollision("this subcommand needs a table with a grazing record")
    return system


def _point_json(x, bits):
    return {"i": x.i, "r": to_str(x.r, bits), "phi": to_str(x.phi, bits)}


def orbit_to_json(orbit, bits, extra=None):
    from .periodic import itinerary_from_orbit

    with working_precision(bits):
        d = {"kind": "periodic_orbit", "label": orbit.label, "bits": bits,
             "points": [_point_json(x, bits) for x in orbit.points],
             "taus": [to_str(t, bits) for t in orbit.taus],
             "residual": None if orbit.residual is None else repr(float(orbit.residual))}
        if orbit.offsets is not None:
            d["itinerary"] = itinerary_from_orbit(orbit).to_json()
    d.update(extra or {})
    return d


def orbit_from_json(d):
    from .billiard_map import OrbitRecord
    from .geometry import PhasePoint

    bits = int(d["bits"])
    with working_precision(bits) as ops:
        pts = [PhasePoint(int(p["i"]), ops.num(p["r"]), ops.num(p["phi"])) for p in d["points"]]
        taus = [ops.num(t) for t in d["taus"]]
    return OrbitRecord(pts, taus, [False] * len(pts), [bits] * len(pts), periodic=True,
                       label=d.get("label", ""), meta=d)


def _read_orbit(path):
    if not os.path.isfile(path):
        raise UsageError(f"orbit file not found: {path}")
    with open(path) as fh:
        d = json.load(fh)
    if d.get("kind") != "periodic_orbit":
        raise UsageError(f"{path} is not a periodic orbit file")
    return d


# subcommands

def cmd_validate(a, b):
    from .geometry import validate_table

    system = _load(a.table)
    rep = validate_table(_plain(system), a.directions, a.offsets,
                         require_finite_horizon=not a.allow_infinite_horizon)
    return rep.to_dict()


def _parse_start(text):
    try:
        i, r, phi = text.split(",")
        return int(i), r.strip(), phi.strip()
    except ValueError as exc:
        raise UsageError("--start must be i,r,phi") from exc


def cmd_simulate(a, b):
    from .billiard_map import orbit_segment
    from .geometry import PhasePoint

    if a.steps < 1:
        raise UsageError("--steps must be positive")
    table = _plain(_load(a.table))
    i, r, phi = _parse_start(a.start)
    if not 0 <= i < len(table):
        raise UsageError(f"scatterer index {i} out of range")
    bits = a.bits or max(table.precision_bits, DOUBLE_BITS)
    with working_precision(bits) as ops:
        x = PhasePoint(i, ops.num(r), ops.num(phi))
    orb = orbit_segment(table, x, a.steps, "backward" if a.backward else "forward", bits)
    for k, used in enumerate(orb.bits_used):
        if used > bits:
            b.note_bits(f"step {k}", used)
    top = max([bits] + orb.bits_used)
    rows = []
    with working_precision(top) as ops:
        for k, p in enumerate(orb.points):
            tau = to_str(orb.taus[k], top) if k < len(orb.taus) else ""
            graz = orb.grazing[k - 1] if k > 0 else ""
            used = orb.bits_used[k - 1] if k > 0 else bits
            rows.append([k, p.i, to_str(p.r, top), to_str(p.phi, top), tau,
                         to_str(p.dist_S0(ops), top), graz, used])
    b.add_csv("orbit.csv", ["step", "i", "r", "phi", "tau", "dist_S0", "grazing", "bits_used"], rows)
    _copy_out(a.out, b, "orbit.csv")
    return {"steps": a.steps, "direction": orb.direction, "grazing_steps": [k for k, g in enumerate(orb.grazing, 1) if g],
            "max_bits": max(orb.bits_used)}


def cmd_cones(a, b):
    from .billiard_map import derivative_check
    from .hyperbolicity import check_cone_invariance, expansion_prefactor

    if a.samples < 1:
        raise UsageError("--samples must be positive")
    table = _plain(_load(a.table))
    kinds = ["unstable", "stable"] if a.kind == "both" else [a.kind]
    out = {k: check_cone_invariance(table, a.samples, k, seed=a.seed).to_dict() for k in kinds}
    if a.derivative_samples:
        out["derivative"] = derivative_check(table, a.derivative_samples, seed=a.seed).to_dict()
        b.note_bits("finite differences", out["derivative"]["bits"])
    if a.prefactor_samples:
        out["expansion_prefactor"] = expansion_prefactor(table, a.prefactor_samples, seed=a.seed)
    return out


def cmd_lyapunov(a, b):
    from .hyperbolicity import cycle_product, lyapunov_periodic

    system = _load(a.table)
    d = _read_orbit(a.orbit)
    orbit = orbit_from_json(d)
    bits = int(d["bits"])
    table = _plain(system.rebuild(bits) if hasattr(system, "rebuild") and bits > 256 else system)
    b.note_bits("orbit", bits)
    rep = lyapunov_periodic(table, orbit, ell=a.ell or d.get("ell"), bits=bits)
    b.add_csv("log_stretch.csv", ["step", "log_stretch"],
              [[k, repr(v)] for k, v in enumerate(rep.log_stretch)])
    out = rep.to_dict()
    with working_precision(bits):
        out["log_spectral_radius"] = mpmath.nstr(rep.log_spectral_radius, 30)
        if len(orbit.points) <= 64:
            M = cycle_product(table, orbit, bits)
            (p, q), (r, s) = M.m
            tr, det = p + s, p * s - q * r
            ev = abs(tr) / 2 + mpmath.sqrt(tr * tr / 4 - det)
            oracle = mpmath.log(ev) / len(orbit.points)
            out["oracle_exponent"] = float(oracle)
            out["oracle_relative_error"] = float(abs(oracle - rep.exponent) / oracle)
    return out


def _parse_itinerary(text):
    from .periodic import ItinerarySpec

    scs, offs = [], []
    try:
        for tok in text.split(","):
            parts = [int(v) for v in tok.split(":")]
            scs.append(parts[0])
            offs.append(tuple(parts[1:3]) if len(parts) == 3 else (0, 0))
    except ValueError as exc:
        raise UsageError("--itinerary must look like 0,1 or 0:1:0,1:0:0") from exc
    return ItinerarySpec(tuple(scs), tuple(offs))


def _word_length(word):
    if not word or word[0] != "1" or set(word[1:]) - {"0"}:
        raise UsageError("--word must be 1 followed by zeros")
    return len(word)


def cmd_orbit(a, b):
    from .manifolds import distance_prefactor, empirical_delta, find_homoclinic, lyapunov_floor, shadowing_family
    from .periodic import solve_periodic

    if (a.word is None) == (a.itinerary is None):
        raise UsageError("give exactly one of --word and --itinerary")
    system = _load(a.table)
    if a.itinerary is not None:
        table = _plain(system)
        bits = a.bits or max(table.precision_bits, DOUBLE_BITS)
        orbit = solve_periodic(table, _parse_itinerary(a.itinerary), bits=bits)
        b.note_bits("newton", bits)
        d = orbit_to_json(orbit, bits)
        b.add_json("orbit.json", d)
        _copy_out(a.out, b, "orbit.json")
        return {"period": len(orbit.points), "bits": bits, "residual": d["residual"]}
    n = _word_length(a.word)
    system = _need_grazing(system)
    witness = find_homoclinic(system, bits=a.bits or 512)
    b.note_bits("homoclinic", witness.bits)
    fam = shadowing_family(system, witness, n, ell=a.ell, bits=a.bits or 512, max_bits=max_bits(1 << 17))
    rows = []
    for y in fam:
        b.note_bits(f"y_{y.n}", y.bits)
        d = orbit_to_json(y.orbit, y.bits, dict(y.to_dict(), word="1" + "0" * (y.n - 1)))
        b.add_json(f"y_{y.n:03d}.json", d)
        rows.append([y.n, y.bits, len(y.orbit.points), repr(y.log_inv_dist), repr(y.lyapunov.exponent),
                     repr(y.residual)])
        if a.catalog:
            os.makedirs(a.catalog, exist_ok=True)
            with open(os.path.join(a.catalog, f"y_{y.n:03d}.json"), "w") as fh:
                fh.write(json.dumps(d, indent=2, sort_keys=True) + "\n")
    b.add_csv("family.csv", ["n", "bits", "period", "log_inv_dist", "lyapunov", "gradient_residual"], rows)
    if len(fam) < n:
        raise BilliardError(f"precision cap reached after y_{len(fam)}")
    _copy_out(a.out, b, f"y_{n:03d}.json")
    delta = empirical_delta(system, witness)
    family = [dict(y.to_dict(), lyapunov_floor=lyapunov_floor(y.n, y.ell, delta)) for y in fam]
    return {"word": a.word, "witness": witness.to_dict(), "delta": delta,
            "distance_prefactor": distance_prefactor(fam, delta), "family": family}


def cmd_manifold(a, b):
    from .manifolds import grow_manifold

    if a.generations < 1:
        raise UsageError("--generations must be positive")
    system = _need_grazing(_load(a.table))
    curve = grow_manifold(system, a.generations, a.kind, length=a.length, u_min=a.u_min,
                          per_decade=a.per_decade)
    b.note_bits("manifold", curve.bits)
    rows = []
    with working_precision(curve.bits):
        for g, phis in enumerate(curve.history, 1):
            for j, (u, r, phi) in enumerate(zip(curve.us, curve.rs, phis)):
                rows.append([g, j, to_str(u, curve.bits), to_str(r, curve.bits), to_str(phi, curve.bits)])
    b.add_csv("curve.csv", ["generation", "sample", "u", "r", "phi"], rows)
    _copy_out(a.out, b, "curve.csv")
    K = 1 / _plain(system)[system.x0.i].radius_f
    cones = curve.cone_report(K)
    b.add_csv("cones.csv", ["u", "slope", "lo", "hi", "inside"], [[repr(v) for v in c[:4]] + [c[4]] for c in cones])
    diffs = curve.log10_sup_diffs()
    return {"kind": a.kind, "generations": a.generations, "bits": curve.bits, "K": K,
            "end_slope": curve.end_slope(), "log10_sup_diffs": diffs,
            "sup_diffs_decreasing": all(y < x for x, y in zip(diffs, diffs[1:])),
            "monotone_in_generation": curve.monotone_in_generation(),
            "all_in_cone": all(c[4] for c in cones), "samples": len(curve)}


def cmd_growth(a, b):
    from .manifolds import grow_unstable_manifold, verify_growth_lemma

    system = _need_grazing(_load(a.table))
    curve = grow_unstable_manifold(system, a.generations)
    b.note_bits("manifold", curve.bits)
    rep = verify_growth_lemma(system, curve, decades=a.decades)
    b.add_csv("pairs.csv", ["log10_d0", "log10_d1"], [[repr(x), repr(y)] for x, y in rep.pairs])
    return rep.to_dict()


def cmd_entropy(a, b):
    from .symbolic import BernoulliSpec, abramov_entropy, entropy_T, nonadapted_terms

    if a.ell < 1 or a.trunc < 2:
        raise UsageError("--ell must be >= 1 and --trunc >= 2")
    try:
        rho = Fraction(a.rho)
    except ValueError as exc:
        raise UsageError("--rho must be a fraction such as 3/2") from exc
    spec = BernoulliSpec(rho, a.trunc)
    ab = abramov_entropy(spec)
    terms = nonadapted_terms(spec, min(a.trunc, a.terms))
    rows, acc, means = [], mpmath.mpf(0), []
    with mpmath.workdps(40):
        inv_b = 1 / (mpmath.mpf(spec.b.numerator) / spec.b.denominator)
        dev = max(abs(t / inv_b - 1) for t in terms)
        for n, t in enumerate(terms, 1):
            acc += t
            means.append(acc / n)
            rows.append([n, str(spec.p(n)), mpmath.nstr(t, 25), mpmath.nstr(acc / n, 25)])
        spread = (max(means) - min(means)) / inv_b
    b.add_csv("nonadapted.csv", ["n", "p_n", "p_n_times_rho_pow", "partial_sum_over_n"], rows)
    return {"abramov": ab, "entropy_T": entropy_T(spec, a.ell),
            "floors": [entropy_T(spec, ell) for ell in range(1, 11)],
            "nonadapted": {"terms": len(terms), "expected": mpmath.nstr(inv_b, 20),
                           "max_rel_deviation": float(dev), "partial_sum_over_n_spread": float(spread)}}


def cmd_pressure(a, b):
    from .symbolic import CatalogEntry, PressureQuery, pressure_divergence_report

    _load(a.table)
    if not os.path.isdir(a.catalog):
        raise UsageError(f"catalog directory not found: {a.catalog}")
    entries = []
    for path in sorted(glob.glob(os.path.join(a.catalog, "*.json"))):
        d = _read_orbit(path)
        if "lyapunov" not in d or "n" not in d:
            continue
        entries.append(CatalogEntry(int(d["n"]), orbit_from_json(d), float(d["lyapunov"]), d["min_dist"],
                                    -float(d["log_inv_dist"]) / 2.302585092994046))
        b.note_bits(f"y_{d['n']}", d["bits"])
    if not entries:
        raise UsageError(f"no orbit files in {a.catalog}")
    rep = pressure_divergence_report(PressureQuery(a.t, entries, a.target))
    cols = ["n", "lyapunov", "entropy", "value", "epsilon_star", "log10_epsilon_star", "condition_a"]
    b.add_csv("pressure.csv", cols, [[r[c] for c in cols] for r in rep.rows])
    _copy_out(a.out, b, "pressure.csv")
    return rep.to_dict()


CRITERIA = {
    1: ("derivative correctness", "cones"),
    2: ("cone invariance and expansion", "cones"),
    3: ("period-2 Lyapunov oracle", "lyapunov"),
    4: ("growth exponents", "growth"),
    5: ("manifold convergence", "manifold"),
    6: ("shadowing family", "orbit"),
    7: ("entropy closed forms", "entropy"),
    8: ("nonadaptedness terms", "entropy"),
    9: ("pressure divergence", "pressure"),
    10: ("determinism", None),
}


def _judge(k, s):
    if k == 1:
        d = s.get("derivative") or {}
        return d.get("max_rel_error", 1) <= 1e-6 and d.get("max_det_error", 1) <= 1e-8
    if k == 2:
        u = s.get("unstable") or {}
        return u.get("pass_fraction") == 1.0 and u.get("min_expansion", 0) >= u.get("Lambda", 1) - 1e-9
    if k == 3:
        return s.get("oracle_relative_error", 1) <= 1e-8
    if k == 4:
        return 1.7 <= s["exponent_a"] <= 2.3 and 0.35 <= s["exponent_b_rate"] <= 0.80 and s["decades"] >= 4
    if k == 5:
        return s["sup_diffs_decreasing"] and abs(s["end_slope"] - s["K"]) <= 1e-3 and s["all_in_cone"]
    if k == 6:
        fam = s["family"]
        lam = [y["lyapunov"] for y in fam]
        n = np.array([y["n"] for y in fam], float)
        ll = np.log([y["log_inv_dist"] for y in fam])
        slope = float(np.polyfit(n, ll, 1)[0]) if len(fam) > 1 else 0.0
        return (len(fam) >= 6 and all(lam[i + 2] > lam[i] for i in range(len(lam) - 2))
                and 0.35 <= slope <= 0.80)
    if k == 7:
        ab = s["abramov"]
        return abs(ab["h_f"] - 0.47825077) < 1e-7 and all(f["exceeds_floor"] for f in s["floors"])
    if k == 8:
        na = s["nonadapted"]
        return na["max_rel_deviation"] <= 1e-12 and na["partial_sum_over_n_spread"] <= 1e-12
    if k == 9:
        return s.get("first_exceeding_n") is not None
    return False


def cmd_report(a, b):
    if not os.path.isdir(a.dir):
        raise UsageError(f"bundle directory not found: {a.dir}")
    bundles = {}
    for man in sorted(glob.glob(os.path.join(a.dir, "*", "manifest.json"))):
        name = os.path.basename(os.path.dirname(man))
        if name == "report":
            continue
        with open(man) as fh:
            m = json.load(fh)
        with open(os.path.join(os.path.dirname(man), "summary.json")) as fh:
            bundles[name] = (m, json.load(fh))
    rows, out = [], {}
    for k, (title, cmd) in CRITERIA.items():
        hits = [n for n, (m, _) in bundles.items() if m["command"] == cmd]
        if k == 10:
            status = _compare_dirs(a.dir, a.compare) if a.compare else "not run"
            src = a.compare or ""
        elif not hits:
            status, src = "missing", ""
        else:
            ok = False
            for n in hits:
                try:
                    ok = ok or bool(_judge(k, bundles[n][1]))
                except (KeyError, TypeError, ValueError):
                    pass
            status, src = ("pass" if ok else "fail"), ",".join(hits)
        out[str(k)] = {"criterion": title, "status": status, "bundles": src}
        rows.append([k, title, status, src])
    b.add_csv("acceptance.csv", ["criterion", "title", "status", "bundles"], rows)
    for k, row in out.items():
        print(f"[{row['status'].upper():>7}] {k:>2} {row['criterion']}", file=sys.stderr)
    return {"criteria": out, "bundles": sorted(bundles)}


def _compare_dirs(d1, d2):
    def hashes(root):
        out = {}
        for man in glob.glob(os.path.join(root, "*", "manifest.json")):
            name = os.path.basename(os.path.dirname(man))
            if name == "report":
                continue
            with open(man) as fh:
                out[name] = json.load(fh)["files"]
        return out
    h1, h2 = hashes(d1), hashes(d2)
    common = set(h1) & set(h2)
    if not common:
        return "missing"
    return "pass" if all(h1[n] == h2[n] for n in common) else "fail"


def build_parser():
    p = _Parser(prog="billiard-lab", description="Dispersing billiards near a grazing periodic orbit.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--dir", default=DEFAULT_DIR, help="bundle root directory")
    p.add_argument("--name", help="bundle name (default: the subcommand)")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("validate", help="disjointness, horizon and hyperbolicity constants")
    s.add_argument("table")
    s.add_argument("--directions", type=int, default=4096)
    s.add_argument("--offsets", type=int, default=4096)
    s.add_argument("--allow-infinite-horizon", action="store_true")

    s = sub.add_parser("simulate", help="iterate the billiard map")
    s.add_argument("table")
    s.add_argument("--start", required=True, help="i,r,phi")
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--backward", action="store_true")
    s.add_argument("--bits", type=int)
    s.add_argument("--out")

    s = sub.add_parser("cones", help="cone invariance, expansion and derivative checks")
    s.add_argument("table")
    s.add_argument("--samples", type=int, default=10_000)
    s.add_argument("--kind", choices=["unstable", "stable", "both"], default="unstable")
    s.add_argument("--derivative-samples", type=int, default=1000)
    s.add_argument("--prefactor-samples", type=int, default=200, help="orbits used to measure C_e")
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("lyapunov", help="Lyapunov exponent of a periodic orbit file")
    s.add_argument("table")
    s.add_argument("--orbit", required=True)
    s.add_argument("--ell", type=int)

    s = sub.add_parser("orbit", help="periodic orbit from an itinerary or a shadowing word")
    s.add_argument("table")
    s.add_argument("--word")
    s.add_argument("--itinerary")
    s.add_argument("--ell", type=int)
    s.add_argument("--bits", type=int)
    s.add_argument("--catalog", help="also write every y_k into this directory")
    s.add_argument("--out")

    s = sub.add_parser("manifold", help="grow a local unstable or stable curve")
    s.add_argument("table")
    s.add_argument("--generations", type=int, required=True)
    s.add_argument("--kind", choices=["unstable", "stable"], default="unstable")
    s.add_argument("--length", type=float, default=0.02)
    s.add_argument("--u-min", type=float, default=1e-6)
    s.add_argument("--per-decade", type=int, default=4)
    s.add_argument("--out")

    s = sub.add_parser("growth", help="fit the local growth exponents")
    s.add_argument("table")
    s.add_argument("--decades", type=float, default=4)
    s.add_argument("--generations", type=int, default=5)

    s = sub.add_parser("entropy", help="Bernoulli weights and Abramov entropy")
    s.add_argument("--ell", type=int, default=1)
    s.add_argument("--trunc", type=int, default=10_000)
    s.add_argument("--rho", default="3/2")
    s.add_argument("--terms", type=int, default=200, help="rows written to nonadapted.csv")

    s = sub.add_parser("pressure", help="h - t lambda over a periodic-orbit catalog")
    s.add_argument("table")
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--target", type=float, required=True)
    s.add_argument("--catalog", required=True)
    s.add_argument("--out")

    s = sub.add_parser("report", help="aggregate bundles into an acceptance summary")
    s.add_argument("--compare", help="second bundle root to compare byte for byte")
    return p


COMMANDS = {"validate": cmd_validate, "simulate": cmd_simulate, "cones": cmd_cones, "lyapunov": cmd_lyapunov,
            "orbit": cmd_orbit, "manifold": cmd_manifold, "growth": cmd_growth, "entropy": cmd_entropy,
            "pressure": cmd_pressure, "report": cmd_report}


def _error(kind, message, command, code):
    print(json.dumps({"error": kind, "message": message, "subcommand": command}), file=sys.stderr)
    return code


def run(argv=None):
    """Parse argv, run the subcommand, write its bundle; returns the exit status."""
    argv = list(sys.argv[1:] if argv is None else argv)
    command = None
    try:
        a = build_parser().parse_args(argv)
        command = a.command
        if command is None:
            raise UsageError("missing subcommand")
        config = {k: v for k, v in sorted(vars(a).items()) if k not in ("dir", "name")}
        b = Bundle(a.dir, a.name or command, config)
        summary = COMMANDS[command](a, b)
        b.finish(summary)
        print(json.dumps(summary, indent=2, sort_keys=True))
        return EXIT_OK
    except (UsageError, ValueError) as exc:
        return _error("UsageError", str(exc), command, EXIT_USAGE)
    except GeometryError as exc:
        return _error(type(exc).__name__, str(exc), command, EXIT_GEOMETRY)
    except BilliardError as exc:
        return _error(type(exc).__name__, str(exc), command, EXIT_NUMERICAL)


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
