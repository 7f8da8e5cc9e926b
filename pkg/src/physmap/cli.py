"""Command-line front end: ``physmap {exact,simulate,verify,scan} --config FILE``.

The config is a YAML mapping whose keys are flat dotted names (nested
mappings are flattened on load).  Unknown keys are rejected.  Example::

    model.clones.kind: constant
    model.clones.rate: 1.0
    model.anchors.rate: 1.0
    model.lengths.kind: deterministic
    model.lengths.param1: 1.0
    run.G: 50
    run.quantities: [rho, variance_constants]

Records are written as CSV (``quantity,params,value,stderr``) or JSON.
Exit codes: 0 success, 1 a test failed, 2 configuration error, 3 numeric error.
"""

import argparse
import csv
import io
import json
import sys

import yaml

from . import formulas as fm
from . import mc
from .errors import ArgumentError, NumericError
from .model import (Constant, Deterministic, DiscreteAtoms, Exponential, ModelSpec,
                    PiecewiseConstant, QuadConfig, UniformInterval)
from .sampler import RngStream, export_realization, realize

EXIT_OK, EXIT_TEST_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


_NUM, _INT, _STR, _LIST, _STRLIST = "number", "integer", "string", "list", "strlist"

SCHEMA = {
    "model.clones.kind": _STR,
    "model.clones.rate": _NUM,
    "model.clones.breakpoints": _LIST,
    "model.clones.rates": _LIST,
    "model.anchors.kind": _STR,
    "model.anchors.rate": _NUM,
    "model.anchors.breakpoints": _LIST,
    "model.anchors.rates": _LIST,
    "model.lengths.kind": _STR,
    "model.lengths.param1": _NUM,
    "model.lengths.param2": _NUM,
    "model.lengths.values": _LIST,
    "model.lengths.probs": _LIST,
    "run.G": _NUM,
    "run.reps": _INT,
    "run.seed": _INT,
    "run.z": _LIST,
    "run.zprime": _LIST,
    "run.n": _NUM,
    "run.x": _NUM,
    "run.quantities": _STRLIST,
    "run.tests": _STRLIST,
    "run.scan.param": _STR,
    "run.scan.values": _LIST,
    "run.bounds.kappa_minus": _NUM,
    "run.bounds.kappa_plus": _NUM,
    "run.bounds.alpha_minus": _NUM,
    "run.bounds.alpha_plus": _NUM,
    "quad.abs_tol": _NUM,
    "quad.rel_tol": _NUM,
    "quad.tail_mass": _NUM,
    "quad.max_subdiv": _INT,
    "output.format": _STR,
    "output.path": _STR,
}

DEFAULTS = {
    "model.clones.kind": "constant",
    "model.anchors.kind": "constant",
    "model.lengths.kind": "deterministic",
    "run.seed": 0,
    "run.reps": 1000,
    "output.format": "csv",
}

EXACT_QUANTITIES = ("n_clones", "n_anchored", "r", "rho", "r2", "variance_constants",
                    "variance_exact", "tau_bound", "phi", "asymptotics", "mixing",
                    "inhomogeneous_bounds", "third_moment")
TESTS = ("fkg", "clt", "wiener", "clone_dispersion", "anchored_dispersion", "left_end", "sandwich")
SCAN_PARAMS = ("model.clones.rate", "model.anchors.rate", "model.lengths.param1",
               "model.lengths.param2", "run.G")


# --------------------------------------------------------------------------
# Config parsing
# --------------------------------------------------------------------------

def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = "%s.%s" % (prefix, k) if prefix else str(k)
        if isinstance(v, dict):
            out.update(_flatten(v, key))
        else:
            out[key] = v
    return out


def _coerce(key, kind, v):
    try:
        if kind == _NUM:
            if isinstance(v, bool):
                raise TypeError
            return float(v)
        if kind == _INT:
            if isinstance(v, bool) or float(v) != int(v):
                raise TypeError
            return int(v)
        if kind == _STR:
            if not isinstance(v, str):
                raise TypeError
            return v
        if kind == _STRLIST:
            v = [v] if isinstance(v, str) else list(v or [])
            if not all(isinstance(e, str) for e in v):
                raise TypeError
            return v
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            return [float(v)]
        return [float(e) for e in (v or [])]
    except (TypeError, ValueError):
        raise ConfigError("%s: expected %s, got %r" % (key, kind, v))


def parse_config(text):
    """Parse YAML text into a validated flat config dict."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("invalid YAML: %s" % exc)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    flat = _flatten(raw)
    unknown = sorted(set(flat) - set(SCHEMA))
    if unknown:
        raise ConfigError("unknown config keys: %s" % ", ".join(unknown))
    cfg = dict(DEFAULTS)
    for k, v in flat.items():
        cfg[k] = _coerce(k, SCHEMA[k], v)
    if cfg["output.format"] not in ("csv", "json"):
        raise ConfigError("output.format must be csv or json")
    for q in cfg.get("run.quantities", []):
        if q not in EXACT_QUANTITIES:
            raise ConfigError("unknown quantity %r" % q)
    for t in cfg.get("run.tests", []):
        if t not in TESTS:
            raise ConfigError("unknown test %r" % t)
    if "run.scan.param" in cfg and cfg["run.scan.param"] not in SCAN_PARAMS:
        raise ConfigError("run.scan.param must be one of %s" % ", ".join(SCAN_PARAMS))
    build_spec(cfg)
    build_quad(cfg)
    return cfg


def serialize_config(cfg):
    """Flat YAML with sorted keys; ``parse_config(serialize_config(c)) == c``."""
    return yaml.safe_dump({k: cfg[k] for k in sorted(cfg)}, default_flow_style=None, sort_keys=True)


def load_config(path):
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError("cannot read config: %s" % exc)


def _intensity(cfg, which):
    kind = cfg.get("model.%s.kind" % which)
    if kind == "constant":
        if "model.%s.rate" % which not in cfg:
            raise ConfigError("model.%s.rate is required" % which)
        return Constant(cfg["model.%s.rate" % which])
    if kind == "piecewise":
        return PiecewiseConstant(cfg.get("model.%s.breakpoints" % which, []),
                                 cfg.get("model.%s.rates" % which, []))
    raise ConfigError("model.%s.kind must be constant or piecewise" % which)


def _lengths(cfg):
    kind = cfg["model.lengths.kind"]
    p1, p2 = cfg.get("model.lengths.param1"), cfg.get("model.lengths.param2")
    if kind in ("deterministic", "exponential", "uniform") and p1 is None:
        raise ConfigError("model.lengths.param1 is required for %s lengths" % kind)
    if kind == "deterministic":
        return Deterministic(p1)
    if kind == "exponential":
        return Exponential(p1)
    if kind == "uniform":
        if p2 is None:
            raise ConfigError("model.lengths.param2 is required for uniform lengths")
        return UniformInterval(p1, p2)
    if kind == "atoms":
        return DiscreteAtoms(cfg.get("model.lengths.values", []), cfg.get("model.lengths.probs", []))
    raise ConfigError("model.lengths.kind must be deterministic, exponential, uniform or atoms")


def build_spec(cfg):
    try:
        return ModelSpec(_intensity(cfg, "clones"), _intensity(cfg, "anchors"), _lengths(cfg))
    except ArgumentError as exc:
        raise ConfigError(str(exc))


def build_quad(cfg):
    kw = {k.split(".", 1)[1]: cfg[k] for k in cfg if k.startswith("quad.")}
    try:
        return QuadConfig(**kw)
    except ArgumentError as exc:
        raise ConfigError(str(exc))


def _require(cfg, key):
    if key not in cfg:
        raise ConfigError("%s is required for this command" % key)
    return cfg[key]


# --------------------------------------------------------------------------
# Records
# --------------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def record(quantity, value, stderr=None, **params):
    return {"quantity": quantity, "params": ";".join("%s=%s" % (k, _fmt(v)) for k, v in params.items()),
            "value": value, "stderr": stderr}


def render(records, fmt):
    if fmt == "json":
        return json.dumps(records, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantity", "params", "value", "stderr"])
    for r in records:
        w.writerow([r["quantity"], r["params"], _fmt(r["value"]), _fmt(r["stderr"])])
    return buf.getvalue()


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def _hom(spec):
    try:
        return fm.HomogeneousParams.from_spec(spec)
    except ArgumentError:
        raise ConfigError("this quantity needs a homogeneous model (constant rates)")


def _exact_records(cfg, quantities):
    spec, quad = build_spec(cfg), build_quad(cfg)
    out = []
    zs = cfg.get("run.z", [0.0])
    for q in quantities:
        if q == "n_clones":
            for z in zs:
                out.append(record(q, fm.mean_clone_count(spec, z, quad), x=z))
        elif q == "n_anchored":
            for z in zs:
                out.append(record(q, fm.mean_anchored_count(spec, z, quad), x=z))
        elif q == "r":
            for z in zs:
                out.append(record(q, fm.r_one_point(spec, z, quad), z=z))
        elif q == "rho":
            out.append(record(q, fm.rho_hom(_hom(spec), quad)))
        elif q == "r2":
            zps = _require(cfg, "run.zprime")
            for z in zs:
                for zp in zps:
                    res = fm.r_two_point(spec, z, zp, quad)
                    for part in ("total", "r0", "r1", "r2", "r3"):
                        out.append(record("r2." + part, res[part], z=z, zprime=zp))
        elif q == "variance_constants":
            vc = fm.variance_constants(_hom(spec), quad)
            for name in ("nu", "lam", "nu0", "nu1", "nu3", "lambda0", "lambda1", "lambda3"):
                out.append(record(name, getattr(vc, name)))
        elif q == "variance_exact":
            G = _require(cfg, "run.G")
            out.append(record(q, fm.variance_exact(_hom(spec), G, quad), G=G))
        elif q == "tau_bound":
            G = _require(cfg, "run.G")
            out.append(record(q, fm.tau_bound(_hom(spec), G), G=G))
        elif q == "phi":
            for z in zs:
                out.append(record(q, fm.phi(z), x=z))
        elif q == "asymptotics":
            p = _hom(spec)
            out.append(record("nu_vanishing", fm.nu_vanishing(p, quad)))
            for k, v in fm.limit_asymptotics(p, quad).items():
                out.append(record(k, v))
        elif q == "mixing":
            n = _require(cfg, "run.n")
            res = fm.mixing_bound(_hom(spec), n, quad)
            for k in ("bound", "one_minus_J", "tail_integral"):
                out.append(record("mixing." + k, res[k], n=n))
        elif q == "inhomogeneous_bounds":
            L = spec.lengths
            b = fm.InhomogeneousBounds(*(_require(cfg, "run.bounds." + k) for k in
                                         ("kappa_minus", "kappa_plus", "alpha_minus", "alpha_plus")),
                                       L, L)
            for k, v in fm.inhomogeneous_bounds(b, quad).items():
                out.append(record(k, v))
        elif q == "third_moment":
            G = _require(cfg, "run.G")
            tm = fm.third_moment(_hom(spec), G, seed=cfg["run.seed"])
            out.append(record(q, tm.value, tm.stderr, G=G))
    return out


def cmd_exact(cfg):
    return _exact_records(cfg, cfg.get("run.quantities", ["rho"])), EXIT_OK


def cmd_simulate(cfg, threads=None, dump=None):
    spec = build_spec(cfg)
    G, reps, seed = _require(cfg, "run.G"), cfg["run.reps"], cfg["run.seed"]
    st = mc.estimate_ocean(spec, G, reps, seed, threads=threads)
    params = dict(G=G, reps=reps, seed=seed)
    recs = [record("mean", st.mean, st.mean_se, **params),
            record("variance", st.variance, st.variance_se, **params),
            record("third_central_moment", st.third_central_moment, st.third_se, **params)]
    if dump:
        export_realization(realize(spec, (0.0, G), RngStream(seed, 0)), dump)
    return recs, EXIT_OK


def _run_test(name, cfg, spec, threads):
    seed, reps = cfg["run.seed"], cfg["run.reps"]
    G = cfg.get("run.G", 500.0)
    if name == "fkg":
        z = cfg.get("run.z", [0.0])[0]
        zp = cfg.get("run.zprime", [z + 0.3])[0]
        return [mc.fkg_test(spec, z, zp, max(reps, 1000), seed, threads)]
    if name == "clt":
        return [mc.clt_test(spec, G, reps, seed, threads=threads)]
    if name == "wiener":
        return [mc.wiener_covariance_test(spec, G, [(0.5, 1.0), (1.0, 1.0)], reps, seed, threads=threads)]
    if name in ("clone_dispersion", "anchored_dispersion"):
        return [mc.count_dispersion_test(spec, cfg.get("run.x", 0.0), max(reps, 10_000), seed,
                                         variant=name.split("_")[0], threads=threads)]
    if name == "left_end":
        lo = cfg.get("run.z", [0.0])[0]
        width = cfg.get("run.G", 10.0)
        return [mc.left_end_equivalence_test(spec, (lo, lo + width), reps=reps, seed=seed)]
    if name == "sandwich":
        p = _hom(spec)
        quad = build_quad(cfg)
        vc = fm.variance_constants(p, quad)
        Gs = [float(g) for g in range(1, int(max(cfg.get("run.G", 20.0), 1.0)) + 1)]
        v = fm.variance_exact(p, Gs, quad)
        tol = 10 * quad.abs_tol
        worst = min(min(vi - (vc.nu * g - vc.lam), vc.nu * g - vi) for g, vi in zip(Gs, v))
        return [mc._report("sandwich", worst, worst >= -tol, seed, 0, G_max=Gs[-1])]
    raise ConfigError("unknown test %r" % name)


def cmd_verify(cfg, threads=None):
    spec = build_spec(cfg)
    reports = []
    for name in cfg.get("run.tests", list(TESTS)):
        reports.extend(_run_test(name, cfg, spec, threads))
    recs = []
    for r in reports:
        print("%-22s %s  statistic=%.6g%s" % (r.name, r.status.upper(), r.statistic,
                                              "" if r.p_value is None else "  p=%.4g" % r.p_value),
              file=sys.stderr)
        recs.append(record(r.name, r.statistic, None, passed=r.passed, status=r.status,
                           p_value=r.p_value, z_score=r.z_score, seed=r.seed, reps=r.reps))
    code = EXIT_OK if all(r.passed for r in reports) else EXIT_TEST_FAILED
    return recs, code


def cmd_scan(cfg):
    param = cfg.get("run.scan.param")
    values = cfg.get("run.scan.values", [])
    quantities = cfg.get("run.quantities", ["rho"])
    out = []
    if not values:
        return out, EXIT_OK
    if param is None:
        raise ConfigError("run.scan.param is required when run.scan.values is given")
    for v in values:
        point = dict(cfg)
        point[param] = v
        build_spec(point)
        for rec in _exact_records(point, quantities):
            rec["params"] = ";".join(s for s in ("%s=%s" % (param, _fmt(v)), rec["params"]) if s)
            out.append(rec)
    return out, EXIT_OK


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="physmap", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("exact", "simulate", "verify", "scan"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out")
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--seed", type=int)
        sp.add_argument("--reps", type=int)
        sp.add_argument("--threads", type=int)
        if name == "simulate":
            sp.add_argument("--dump", metavar="DIR", help="write one realization as CSV files")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["run.seed"] = args.seed
        if args.reps is not None:
            cfg["run.reps"] = args.reps
        if args.format:
            cfg["output.format"] = args.format
        if args.out:
            cfg["output.path"] = args.out
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.command == "exact":
            recs, code = cmd_exact(cfg)
        elif args.command == "simulate":
            recs, code = cmd_simulate(cfg, args.threads, args.dump)
        elif args.command == "verify":
            recs, code = cmd_verify(cfg, args.threads)
        else:
            recs, code = cmd_scan(cfg)
    except (ConfigError, ArgumentError) as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, FloatingPointError, OverflowError) as exc:
        print("numeric error: %s" % exc, file=sys.stderr)
        return EXIT_NUMERIC
    text = render(recs, cfg["output.format"])
    path = cfg.get("output.path")
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
