"""Command-line entry point: ``supremal <verb> ...``.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for
configuration errors.
"""

import argparse
import os
import sys

import numpy as np

from . import gridfunc as gf
from .distance import pseudo_distance_fast, pseudo_distance_oracle
from .relaxation import relax_value
from .scenario import CONFIG_ERRORS, ConfigError, list_builtins, load_scenario, run_scenario


def _point(text):
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers, got %r" % text) from None


def _pick(sc, name, kind):
    names = sorted(sc.supremand_cfg) if kind == "supremand" else sorted(sc.field_cfg)
    if name:
        return name
    if len(names) == 1:
        return names[0]
    raise ConfigError("scenario has %d %ss (%s); choose one with --%s" % (len(names), kind, ", ".join(names), kind))


def cmd_run(args):
    report = run_scenario(args.scenario, out=args.out, seed=args.seed, tol=args.tol)
    print(report.summary())
    return 0 if report.ok else 1


def cmd_list(args):
    for name in list_builtins():
        print(name)
    return 0


def cmd_distance(args):
    sc = load_scenario(args.scenario, args.seed)
    f = sc.supremand(_pick(sc, args.supremand, "supremand"))
    dom = sc.domain(args.domain)
    src = dom.nearest_node(np.asarray(args.source, dtype=float))
    solver = pseudo_distance_oracle if args.method == "oracle" else pseudo_distance_fast
    fld = solver(f, dom, args.lam, src)
    if fld.empty:
        print("level %g is empty: %s" % (args.lam, fld.diagnostic))
    else:
        finite = fld.dist[np.isfinite(fld.dist)]
        print("d(., %s) at level %g: min %.6g, max %.6g, %d infinite" % (
            dom.coords[src].tolist(), args.lam, finite.min(), finite.max(), int(np.sum(np.isinf(fld.dist)))))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "distance.csv")
        fld.to_csv(path, dom)
        print("wrote", path)
    return 0


def cmd_relax(args):
    sc = load_scenario(args.scenario, args.seed)
    f = sc.supremand(_pick(sc, args.supremand, "supremand"))
    dom = sc.domain(args.domain)
    if args.field and os.path.exists(args.field):
        fields = [gf.GridFunction.from_csv(dom, args.field)]
    else:
        fields = sc.fields(_pick(sc, args.field, "field"), dom, np.random.default_rng(sc.seed))
    bracket = tuple(_point(args.bracket)) if args.bracket else None
    tol = args.tol if args.tol is not None else 1e-4
    rows = []
    for i, u in enumerate(fields):
        r = relax_value(f, u, eps=args.eps, bracket=bracket, tol=tol, seed=sc.seed)
        F = gf.supremal_value(f, u)
        print("field %d: relax %.8g  bracket [%.8g, %.8g]  F %.8g  probes %d%s" % (
            i, r.value, r.bracket[0], r.bracket[1], F, len(r.probes),
            "  (%s)" % "; ".join(r.diagnostics) if r.diagnostics else ""))
        rows.extend((i, mu, R, ok) for mu, R, ok in r.probes)
    if args.out:
        import csv

        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "relax-probes.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["field", "mu", "R", "accepted"])
            for i, mu, R, ok in rows:
                w.writerow([i, repr(float(mu)), repr(float(R)), int(ok)])
        print("wrote", path)
    return 0


def cmd_envelope(args):
    sc = load_scenario(args.scenario, args.seed)
    f = sc.supremand(_pick(sc, args.supremand, "supremand"))
    x = np.asarray(args.x if args.x else [0.0] * f.dim, dtype=float)
    env = f.level_convex_envelope(x)
    drop = int(np.sum(env.flc < env.f))
    print("envelope of %s at x=%s: %d samples, %d lowered, min %.6g" % (
        f.name, x.tolist(), len(env.flc), drop, env.flc.min()))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "envelope.csv")
        env.to_csv(path)
        print("wrote", path)
    return 0


def cmd_represent(args):
    source = args.scenario or {"boh": "example-boh"}.get(args.example)
    if source is None:
        raise ConfigError("give a scenario file or --example boh")
    sc = load_scenario(source, args.seed)
    ops = [op for op in sc.operations if op["op"] in ("represent", "localized")]
    if not ops:
        raise ConfigError("scenario has no represent/localized operations")
    sc.cfg = dict(sc.cfg, operations=ops)
    report = run_scenario(sc.cfg, out=args.out, seed=args.seed, tol=args.tol)
    print(report.summary())
    return 0 if report.ok else 1


def build_parser():
    p = argparse.ArgumentParser(prog="supremal", description="Supremal functionals on grids.")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out", default=None, help="output directory for reports and CSV tables")
    p.add_argument("--tol", type=float, default=None, help="override tolerances")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run a scenario file or built-in")
    r.add_argument("scenario")
    r.set_defaults(fn=cmd_run)

    sub.add_parser("list", help="list built-in scenarios").set_defaults(fn=cmd_list)

    d = sub.add_parser("distance", help="pseudo-distance from one source")
    d.add_argument("scenario")
    d.add_argument("--supremand")
    d.add_argument("--domain")
    d.add_argument("--lambda", dest="lam", type=float, required=True)
    d.add_argument("--source", type=_point, required=True)
    d.add_argument("--method", choices=("fast", "oracle"), default="fast")
    d.set_defaults(fn=cmd_distance)

    x = sub.add_parser("relax", help="relaxed value of fields")
    x.add_argument("scenario")
    x.add_argument("--supremand")
    x.add_argument("--domain")
    x.add_argument("--field", help="CSV file or field name in the scenario")
    x.add_argument("--eps", type=float)
    x.add_argument("--bracket", help="lo,hi")
    x.set_defaults(fn=cmd_relax)

    e = sub.add_parser("envelope", help="level-convex envelope at a point")
    e.add_argument("scenario")
    e.add_argument("--supremand")
    e.add_argument("--x", type=_point)
    e.set_defaults(fn=cmd_envelope)

    rp = sub.add_parser("represent", help="representation supremand tables")
    rp.add_argument("scenario", nargs="?")
    rp.add_argument("--example", choices=("boh",))
    rp.set_defaults(fn=cmd_represent)
    return p


def main(argv=None):
    parser = build_parser()
    # accept global flags after the verb as well
    argv = list(sys.argv[1:] if argv is None else argv)
    glob = []
    rest = []
    i = 0
    while i < len(argv):
        if argv[i] in ("--seed", "--out", "--tol") and i + 1 < len(argv):
            glob += argv[i:i + 2]
            i += 2
            continue
        rest.append(argv[i])
        i += 1
    args = parser.parse_args(glob + rest)
    try:
        return args.fn(args)
    except CONFIG_ERRORS as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
