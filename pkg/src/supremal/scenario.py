"""Declarative scenarios: TOML config -> domain, supremands, fields, operations -> report."""

import json
import math
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import gridfunc as gf
from .distance import distance_matrix, pseudo_distance_fast, pseudo_distance_oracle, sandwich_check
from .domain import DomainError, build_domain, estimate_domain_constant
from .expr import ExprError
from .relaxation import (
    check_max_constant,
    check_max_identity,
    level_convexity_test,
    meet_locality,
    monotone_gamma_limit,
    relax_value,
    relaxed_functional,
)
from .representation import localized_relaxed_supremand, representation_table
from .supremand import Supremand, SupremandError

__all__ = ["ConfigError", "Scenario", "Report", "load_scenario", "run_scenario", "list_builtins", "builtin_path"]

VERSION = 1


class ConfigError(ValueError):
    """Malformed or inconsistent scenario description."""


CONFIG_ERRORS = (ConfigError, DomainError, ExprError, SupremandError, tomllib.TOMLDecodeError, OSError)


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""


@dataclass
class OpResult:
    op: str
    label: str
    results: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    def check(self, name, ok, detail=""):
        self.checks.append(Check(name, bool(ok), detail))


@dataclass
class Report:
    name: str
    seed: int
    config: dict
    operations: list = field(default_factory=list)

    @property
    def ok(self):
        return all(c.ok for op in self.operations for c in op.checks)

    @property
    def n_checks(self):
        return sum(len(op.checks) for op in self.operations)

    def to_dict(self):
        return {
            "scenario": self.name,
            "seed": self.seed,
            "ok": self.ok,
            "config": self.config,
            "operations": [
                {
                    "op": o.op,
                    "label": o.label,
                    "results": o.results,
                    "checks": [{"name": c.name, "ok": c.ok, "detail": c.detail} for c in o.checks],
                }
                for o in self.operations
            ],
        }

    def summary(self):
        lines = ["scenario %s (seed %d)" % (self.name, self.seed)]
        for o in self.operations:
            for c in o.checks:
                lines.append("  [%s] %s: %s %s" % ("PASS" if c.ok else "FAIL", o.label, c.name, c.detail))
            if not o.checks:
                lines.append("  [----] %s: %s" % (o.label, _brief(o.results)))
        lines.append("%s: %d/%d checks passed" % (
            "OK" if self.ok else "FAILED", sum(c.ok for o in self.operations for c in o.checks), self.n_checks))
        return "\n".join(lines)


def _brief(results):
    items = [(k, v) for k, v in results.items() if isinstance(v, (int, float, str))]
    return ", ".join("%s=%s" % (k, _num(v)) for k, v in items[:6])


def _num(v):
    return "%.6g" % v if isinstance(v, float) else str(v)


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


# -- loading ---------------------------------------------------------------


def builtin_path(name):
    res = resources.files("supremal").joinpath("builtins", name + ".toml")
    if not res.is_file():
        raise ConfigError("no built-in scenario %r (see 'list')" % name)
    return res


def list_builtins():
    folder = resources.files("supremal").joinpath("builtins")
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".toml"))


def _read(source):
    if isinstance(source, dict):
        return source, "inline"
    text = None
    if isinstance(source, str) and not os.path.exists(source) and not source.endswith(".toml"):
        res = builtin_path(source)
        return tomllib.loads(res.read_text(encoding="utf-8")), source
    with open(source, "rb") as fh:
        text = fh.read().decode("utf-8")
    return tomllib.loads(text), os.path.splitext(os.path.basename(str(source)))[0]


class Scenario:
    """Resolved scenario: named domains, supremands and fields plus the operation list."""

    def __init__(self, cfg, name="scenario", seed=None):
        self.cfg = cfg
        self.name = name
        version = cfg.get("version")
        if version != VERSION:
            raise ConfigError("unsupported or missing version %r (expected %d)" % (version, VERSION))
        self.seed = int(cfg.get("seed", 0) if seed is None else seed)
        self.domains = {}
        if "domain" in cfg:
            self.domains["main"] = self._domain(cfg["domain"], "main")
        for key, entry in cfg.get("domains", {}).items():
            self.domains[key] = self._domain(entry, key)
        if not self.domains:
            raise ConfigError("scenario defines no domain")
        self.default_domain = "main" if "main" in self.domains else sorted(self.domains)[0]
        self.supremand_cfg = cfg.get("supremands", {})
        self._supremands = {}
        self.field_cfg = cfg.get("fields", {})
        self.operations = cfg.get("operations", [])
        if not isinstance(self.operations, list):
            raise ConfigError("'operations' must be an array of tables")
        for k, op in enumerate(self.operations):
            if "op" not in op:
                raise ConfigError("operation #%d has no 'op' key" % (k + 1))
            if op["op"] not in OPERATIONS:
                raise ConfigError("operation #%d: unknown op %r (known: %s)" % (
                    k + 1, op["op"], ", ".join(sorted(OPERATIONS))))
        for name in self.supremand_cfg:
            self.supremand(name)

    @staticmethod
    def _domain(entry, name):
        try:
            extent = entry["extent"]
            h = entry["h"]
        except KeyError as exc:
            raise ConfigError("domain %r is missing %s" % (name, exc)) from None
        dom = build_domain(extent, h, entry.get("obstacles", ()), entry.get("stencil"))
        if "dim" in entry and int(entry["dim"]) != dom.dim:
            raise ConfigError("domain %r: dim=%s but extent is %d-D" % (name, entry["dim"], dom.dim))
        return dom

    def domain(self, name=None):
        name = name or self.default_domain
        if name not in self.domains:
            raise ConfigError("unknown domain %r" % name)
        return self.domains[name]

    def supremand(self, name):
        if name not in self._supremands:
            if name not in self.supremand_cfg:
                raise ConfigError("unknown supremand %r" % name)
            entry = self.supremand_cfg[name]
            dom = self.domain(entry.get("domain"))
            try:
                self._supremands[name] = Supremand.from_config(entry, dom.dim, name=name)
            except (ExprError, SupremandError, DomainError) as exc:
                raise ConfigError("supremand %r: %s" % (name, exc)) from None
        return self._supremands[name]

    def fields(self, name, dom, rng):
        """Named field entry -> list of grid functions on ``dom``."""
        if name not in self.field_cfg:
            raise ConfigError("unknown field %r" % name)
        entry = self.field_cfg[name]
        count = int(entry.get("count", 1))
        if "sawtooth" in entry:
            saw = entry["sawtooth"]
            base = {k: v for k, v in entry.items() if k != "sawtooth"}
            bases = self._base_fields(name, base, dom) if base else [gf.GridFunction.constant(dom)]
            psi = gf.sawtooth(dom, int(saw["n"]), float(saw["slope"]), float(saw.get("center", 0.0)))
            return [u + psi for u in bases]
        return self._base_fields(name, entry, dom)

    def _base_fields(self, name, entry, dom):
        count = int(entry.get("count", 1))
        if "expr" in entry:
            return [gf.GridFunction.from_expression(dom, entry["expr"])]
        if "affine" in entry:
            return [gf.GridFunction.affine(dom, entry["affine"], entry.get("offset", 0.0))]
        if "csv" in entry:
            return [gf.GridFunction.from_csv(dom, entry["csv"])]
        if "random" in entry:
            kind = entry["random"]
            sub = np.random.default_rng([self.seed, _stable_hash(name)])
            if kind == "zigzag":
                return [gf.zigzag_field(dom, sub, tuple(entry.get("tilt", (-0.5, 0.5))),
                                        tuple(entry.get("swing", (0.5, 2.5)))) for _ in range(count)]
            if kind == "wells":
                lo, hi = entry.get("magnitude", (0.5, 1.5))
                return [gf.well_field(dom, sub, lo, hi) for _ in range(count)]
            if kind == "smooth":
                return [gf.smooth_field(dom, sub, entry.get("slope", 1.0), entry.get("wiggle", 0.05))
                        for _ in range(count)]
            raise ConfigError("field %r: unknown random kind %r" % (name, kind))
        raise ConfigError("field %r needs one of expr, affine, csv, random" % name)


def _stable_hash(text):
    return sum((k + 1) * ord(c) for k, c in enumerate(text))


def load_scenario(source, seed=None):
    cfg, name = _read(source)
    return Scenario(cfg, name=name, seed=seed)


def run_scenario(source, out=None, seed=None, tol=None):
    """Run every operation of a scenario and return its :class:`Report`.

    With ``out`` the JSON report and any CSV tables are written there.
    """
    sc = load_scenario(source, seed)
    report = Report(sc.name, sc.seed, _clean(sc.cfg))
    if out:
        os.makedirs(out, exist_ok=True)
    rng = np.random.default_rng(sc.seed)
    for k, op in enumerate(sc.operations):
        label = op.get("label", "%02d-%s" % (k + 1, op["op"]))
        res = OpResult(op["op"], label)
        ctx = _Context(sc, op, out, label, rng, tol)
        try:
            OPERATIONS[op["op"]](ctx, res)
        except KeyError as exc:
            raise ConfigError("operation %s is missing parameter %s" % (label, exc)) from None
        res.results = _clean(res.results)
        report.operations.append(res)
    if out:
        with open(os.path.join(out, "report.json"), "w") as fh:
            json.dump(_clean(report.to_dict()), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return report


class _Context:
    def __init__(self, sc, op, out, label, rng, tol):
        self.sc, self.op, self.out, self.label, self.rng = sc, op, out, label, rng
        self.tol_override = tol
        self.dom = sc.domain(op.get("domain"))

    def get(self, key, default=None):
        return self.op.get(key, default)

    def tol(self, default):
        if self.tol_override is not None:
            return float(self.tol_override)
        return float(self.op.get("tol", default))

    def supremand(self, key="supremand"):
        f = self.sc.supremand(self.op[key])
        if f.dim != self.dom.dim:
            raise ConfigError("%s: supremand %r is %d-D but the domain is %d-D" % (
                self.label, f.name, f.dim, self.dom.dim))
        f.check_cover(self.dom)
        return f

    def fields(self, key="fields"):
        names = self.op[key]
        names = [names] if isinstance(names, str) else names
        out = []
        for n in names:
            out.extend(self.sc.fields(n, self.dom, self.rng))
        return out

    def csv_path(self, suffix):
        if not self.out:
            return None
        return os.path.join(self.out, "%s-%s.csv" % (self.label, suffix))


def _region(entry):
    if entry is None or entry == "all":
        return None
    return entry


# -- operations ---------------------------------------------------------------

OPERATIONS = {}


def operation(name):
    def register(fn):
        OPERATIONS[name] = fn
        return fn

    return register


@operation("supremal_value")
def _op_supremal(ctx, res):
    f = ctx.supremand()
    vals = [gf.supremal_value(f, u, _region(ctx.get("region"))) for u in ctx.fields()]
    res.results["values"] = vals
    if "expect" in ctx.op:
        tol = ctx.tol(1e-9)
        worst = max(abs(v - ctx.op["expect"]) for v in vals)
        res.check("value", worst <= tol, "expected %g, worst error %.3g" % (ctx.op["expect"], worst))


@operation("meet_locality")
def _op_meet(ctx, res):
    f, g = ctx.supremand("f"), ctx.supremand("g")
    parts = [_region(p) for p in ctx.op["parts"]]
    pairs = [meet_locality(f, g, u, parts) for u in ctx.fields()]
    res.results["union"] = [p[0] for p in pairs]
    res.results["max_of_parts"] = [p[1] for p in pairs]
    res.check("strict gap", all(a > b for a, b in pairs), "union %s vs parts %s" % (
        sorted({_num(a) for a, _ in pairs}), sorted({_num(b) for _, b in pairs})))
    exp = ctx.get("expect", {})
    if "union" in exp:
        res.check("union value", all(a == exp["union"] for a, _ in pairs), "expected %g" % exp["union"])
    if "parts" in exp:
        res.check("max of parts", all(b == exp["parts"] for _, b in pairs), "expected %g" % exp["parts"])


@operation("max_identity")
def _op_max_identity(ctx, res):
    f, g = ctx.supremand("f"), ctx.supremand("g")
    worst = check_max_identity(f, g, ctx.fields(), _region(ctx.get("region")))
    res.results["worst"] = worst
    res.check("F v G supremand", worst == 0.0, "worst difference %.3g" % worst)


def _source_index(dom, entry):
    if entry is None:
        return 0
    return dom.nearest_node(np.asarray(entry, dtype=float).reshape(dom.dim))


@operation("distance")
def _op_distance(ctx, res):
    f, dom = ctx.supremand(), ctx.dom
    lam = float(ctx.op["lambda"])
    src = _source_index(dom, ctx.get("source"))
    method = ctx.get("method", "both")
    fields = {}
    if method in ("fast", "both"):
        fields["fast"] = pseudo_distance_fast(f, dom, lam, src, _region(ctx.get("region")))
    if method in ("oracle", "both"):
        fields["oracle"] = pseudo_distance_oracle(f, dom, lam, src, _region(ctx.get("region")))
    for name, fld in fields.items():
        res.results[name + "_empty"] = fld.empty
        finite = fld.dist[np.isfinite(fld.dist)]
        res.results[name + "_max"] = float(finite.max()) if len(finite) else math.nan
        path = ctx.csv_path(name)
        if path:
            fld.to_csv(path, dom)
    if len(fields) == 2:
        a, b = fields["oracle"].dist, fields["fast"].dist
        both = np.isfinite(a) & np.isfinite(b)
        same_inf = np.array_equal(np.isinf(a), np.isinf(b))
        gap = float(np.max(np.abs(a[both] - b[both]))) if both.any() else 0.0
        res.results["max_gap"] = gap
        res.check("oracle <= fast", bool(np.all(a[both] <= b[both] + 1e-9)) and same_inf, "max gap %.3g" % gap)
        if ctx.get("level_convex", False):
            res.check("oracle = fast", gap <= ctx.tol(1e-6) and same_inf, "max gap %.3g" % gap)
    if "expect" in ctx.op:
        tgt = _source_index(dom, ctx.op["expect"]["at"])
        val = fields.get("fast", fields.get("oracle")).dist[tgt]
        want = float(ctx.op["expect"]["d"])
        res.check("d at %s" % ctx.op["expect"]["at"], abs(val - want) <= ctx.tol(1e-6),
                  "got %.9g, expected %.9g" % (val, want))


@operation("sandwich")
def _op_sandwich(ctx, res):
    f, dom = ctx.supremand(), ctx.dom
    coer = ctx.get("coercivity", f.coercivity)
    lin = ctx.get("linear_bound", f.linear_bound)
    if coer is None or lin is None:
        raise ConfigError("%s: sandwich needs coercivity and linear_bound" % ctx.label)
    n_src = int(ctx.get("sources", 8))
    src = np.unique(np.linspace(0, dom.n_nodes - 1, min(n_src, dom.n_nodes)).astype(int))
    rows = []
    for lam in ctx.op["lambdas"]:
        dmat = distance_matrix(f, dom, lam, sources=src)
        rep = sandwich_check(dmat, dom, lam / lin, lam / coer)
        rows.append({"lambda": lam, "ok": rep.ok, "lower": rep.worst_lower, "upper": rep.worst_upper})
        res.check("lambda=%g" % lam, rep.ok, str(rep))
    res.results["levels"] = rows


def _bracket(entry):
    if entry is None:
        return None
    if isinstance(entry, str):
        entry = [float(t) for t in entry.split(",")]
    return tuple(map(float, entry))


@operation("relax")
def _op_relax(ctx, res):
    f = ctx.supremand()
    tol = ctx.tol(1e-4)
    region = _region(ctx.get("region"))
    rows, probes = [], []
    for i, u in enumerate(ctx.fields()):
        r = relax_value(f, u, eps=ctx.get("eps"), bracket=_bracket(ctx.get("bracket")), tol=tol,
                        region=region, seed=ctx.sc.seed)
        F = gf.supremal_value(f, u, region)
        rows.append({"value": r.value, "lo": r.bracket[0], "hi": r.bracket[1], "F": F,
                     "probes": len(r.probes), "diagnostics": r.diagnostics})
        probes.extend((i, mu, R, ok) for mu, R, ok in r.probes)
        res.check("relax <= F", r.value <= F + tol, "%.6g <= %.6g" % (r.value, F))
        if "expect" in ctx.op:
            want = float(ctx.op["expect"])
            bound = float(ctx.get("expect_tol", 10 * tol))
            res.check("value", abs(r.value - want) <= bound, "got %.6g, expected %.6g" % (r.value, want))
    res.results["fields"] = rows
    path = ctx.csv_path("probes")
    if path:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["field", "mu", "R", "accepted"])
            for i, mu, R, ok in probes:
                w.writerow([i, repr(float(mu)), repr(float(R)), int(ok)])


@operation("envelope")
def _op_envelope(ctx, res):
    f = ctx.supremand()
    x = np.asarray(ctx.get("x", [0.0] * f.dim), dtype=float)
    env = f.level_convex_envelope(x, ctx.get("window"), ctx.get("dxi"))
    path = ctx.csv_path("envelope")
    if path:
        env.to_csv(path)
    res.results["min"] = float(env.flc.min())
    res.check("below f", bool(np.all(env.flc <= env.f)), "")
    if f.dim == 1:
        from .supremand import envelope_1d

        res.check("idempotent", bool(np.array_equal(envelope_1d(env.flc), env.flc)), "")
    if "expect" in ctx.op:
        ref = ctx.sc.supremand(ctx.op["expect"])
        want = ref.eval(np.broadcast_to(x, env.xi.shape), env.xi)
        err = float(np.max(np.abs(want - env.flc)))
        tol = ctx.tol(0.0)
        res.results["max_error"] = err
        res.check("matches %s" % ctx.op["expect"], err <= tol, "max error %.3g (tol %.3g)" % (err, tol))


@operation("represent")
def _op_represent(ctx, res):
    f, dom = ctx.supremand(), ctx.dom
    xs = [np.atleast_1d(np.asarray(x, dtype=float)) for x in ctx.op["xs"]]
    xis = [np.atleast_1d(np.asarray(x, dtype=float)) for x in ctx.op["xis"]]
    table = representation_table(f, dom, xs, xis, budget=int(ctx.get("budget", 200)), seed=ctx.sc.seed)
    path = ctx.csv_path("phi")
    if path:
        table.to_csv(path)
    res.results["rows"] = len(table.phi)
    tol = ctx.tol(1e-6)
    for key, column in (("expect_phi", table.phi), ("expect_g", table.g)):
        if key in ctx.op:
            ref = ctx.sc.supremand(ctx.op[key])
            want = ref.eval(table.x, table.xi)
            err = float(np.max(np.abs(want - column)))
            res.results[key[7:] + "_error"] = err
            res.check("%s table" % key[7:], err <= tol, "max error %.3g" % err)
    res.check("phi >= f", bool(np.all(table.phi >= table.f - 1e-9)),
              "%d flagged" % int(np.sum(table.phi < table.f - 1e-9)))


@operation("localized")
def _op_localized(ctx, res):
    f, dom = ctx.supremand(), ctx.dom
    tol = ctx.tol(1e-3)
    regions = [_region(r) for r in ctx.op["regions"]]
    rows = localized_relaxed_supremand(f, dom, regions, ctx.fields(), tol=min(tol, 1e-4))
    worst = max(r.residual for r in rows)
    res.results["rows"] = [{"region": r.region, "probe": r.probe, "G": r.relaxed, "g": r.predicted,
                            "phi": r.phi_bound} for r in rows]
    res.check("G = ess sup g", worst <= tol, "worst residual %.3g" % worst)
    zero = [r for r in rows if r.predicted == 0.0]
    if zero:
        res.check("phi over-estimates G", all(r.phi_bound > r.relaxed + tol for r in zero),
                  "min phi %.3g on regions with G = 0" % min(r.phi_bound for r in zero))


@operation("level_convexity")
def _op_level_convexity(ctx, res):
    f = ctx.supremand()
    fields = ctx.fields()
    if len(fields) < 2:
        raise ConfigError("%s: need at least two fields" % ctx.label)
    pairs = list(zip(fields[0::2], fields[1::2]))
    functional = ctx.get("functional", "relax")
    tol = ctx.tol(1e-3)
    if functional == "relax":
        value = relaxed_functional(f, tol=min(1e-4, tol / 4))
    elif functional == "supremal":
        value = lambda u: gf.supremal_value(f, u)  # noqa: E731
    else:
        raise ConfigError("%s: functional must be 'relax' or 'supremal'" % ctx.label)
    rep = level_convexity_test(value, pairs, ctx.get("thetas", (0.1, 0.3, 0.5, 0.7, 0.9)), tol)
    res.results.update({"checked": rep.checked, "violations": rep.violations, "worst": rep.worst})
    expect = ctx.get("expect", "pass")
    res.check("expect %s" % expect, rep.ok == (expect == "pass"), str(rep))


@operation("lattice_constant")
def _op_lattice_constant(ctx, res):
    f = ctx.supremand()
    tol = ctx.tol(1e-4)
    fields = ctx.fields()
    for c in ctx.op["constants"]:
        rows = check_max_constant(f, float(c), fields, tol=tol)
        worst = max(abs(a - b) for a, b in rows)
        res.results["c=%g" % c] = worst
        res.check("relax(F v %g) = relax(F) v %g" % (c, c), worst <= 2 * tol, "worst %.3g" % worst)


@operation("coercive_limit")
def _op_coercive(ctx, res):
    f = ctx.supremand()
    tol = ctx.tol(1e-4)
    out = monotone_gamma_limit(f, ctx.op["ns"], ctx.fields(), tol=tol, limit_tol=ctx.get("limit_tol", 2 * tol))
    res.results.update({"gap": out["gap"], "decreasing": out["decreasing"]})
    res.check("decreasing in n", out["decreasing"], "")
    res.check("limit", out["gap"] <= ctx.get("limit_tol", 2 * tol), "largest gap %.3g at n=%d" % (
        out["gap"], out["ns"][-1]))


@operation("lipschitz")
def _op_lipschitz(ctx, res):
    dom = ctx.dom
    factor = float(ctx.get("factor", 0.09 if dom.stencil_size == 8 else 0.45))
    c_est = estimate_domain_constant(dom, seed=ctx.sc.seed)
    worst, order = 0.0, True
    for u in ctx.fields():
        s = gf.lipschitz_seminorms(u, seed=ctx.sc.seed)
        if s["grad_sup"] > 0:
            worst = max(worst, abs(s["grad_sup"] - s["lip_geodesic"]) / s["grad_sup"])
        order &= s["lip_euclid"] <= c_est * s["grad_sup"] + 1e-12
    res.results.update({"worst_relative": worst, "domain_constant": c_est})
    res.check("grad_sup ~ lip_geodesic", worst <= factor, "worst relative gap %.4f (bound %g)" % (worst, factor))
    res.check("lip_euclid <= C * grad_sup", order, "C = %.4f" % c_est)


@operation("domain_constant")
def _op_domain_constant(ctx, res):
    c = estimate_domain_constant(ctx.dom, ctx.get("sample"), seed=ctx.sc.seed)
    res.results["estimate"] = c
    if "at_least" in ctx.op:
        res.check(">= %g" % ctx.op["at_least"], c >= ctx.op["at_least"], "%.6g" % c)
    if "at_most" in ctx.op:
        res.check("<= %g" % ctx.op["at_most"], c <= ctx.op["at_most"], "%.6g" % c)
