"""Command-line front end.

    critgwi model check      --nu 0.3 --delta 0.7 --c1 0.5 --c2 1
    critgwi simulate sn      --n 16 --reps 1000 --seed 7 ...
    critgwi exact sn         --n 1 --N 1024 ...
    critgwi predict ld       --n 128 --grid 1e4,1e8,12 ...
    critgwi validate theorem1 --n 128 --k1 0.1 --k2 0.5 --reps 1e6 --seed 7 ...

Every command accepts ``--config file.json`` holding a flat object whose keys
mirror the long flags (``pop_cap`` for ``--pop-cap``); flags given on the
command line win.  Failures print a JSON error object on stderr and exit
nonzero.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CapExceeded, CritGWIError, InvalidModel

EXIT_USAGE = 2
EXIT_MODEL = 3
EXIT_NUMERIC = 4
EXIT_CAP = 5


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# argument plumbing
# --------------------------------------------------------------------------

_DEFAULTS = {
    "seed": 0,
    "reps": 1000,
    "n": 1,
    "N": 4096,
    "z0": 1,
    "M": 200,
    "pop_cap": 10**7,
    "gen_cap": 10**5,
    "step_cap": 10**7,
    "grid_size": 12,
    "tol": 1e-10,
    "format": "csv",
    "header": True,
    "exact": True,
    "level": 0.95,
}


def _count(text) -> int:
    value = float(text)
    if value != int(value):
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    return int(value)


def _floats(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _ints(text) -> list:
    if isinstance(text, (list, tuple)):
        return [_count(v) for v in text]
    return [_count(v) for v in str(text).split(",") if v.strip()]


def _model_args(p):
    g = p.add_argument_group("model")
    g.add_argument("--family", choices=["heavy", "very_heavy"])
    g.add_argument("--nu", type=float)
    g.add_argument("--delta", type=float)
    g.add_argument("--c1", type=float)
    g.add_argument("--c2", type=float)
    g.add_argument("--a", type=float)
    g.add_argument("--kappa", type=float)
    g.add_argument("--cc", type=float)
    g.add_argument("--model", help="model as a JSON object or a path to one")


def _common_args(p):
    p.add_argument("--config", help="flat JSON file with option values")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--no-header", dest="header", action="store_false", help="omit the timestamp header line")


def _budget_args(p):
    p.add_argument("--pop-cap", dest="pop_cap", type=_count)
    p.add_argument("--gen-cap", dest="gen_cap", type=_count)
    p.add_argument("--step-cap", dest="step_cap", type=_count)


def _run_args(p):
    p.add_argument("--seed", type=_count)
    p.add_argument("--workers", type=_count, help="worker processes (default: $CRITGWI_WORKERS or 1)")
    p.add_argument("--reps", type=_count)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="critgwi", description=__doc__.splitlines()[0],
                                     argument_default=argparse.SUPPRESS)
    parser.add_argument("--version", action="version", version=f"critgwi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def leaf(parent, name, help_text):
        p = parent.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
        _model_args(p)
        _common_args(p)
        return p

    model = sub.add_parser("model", help="model utilities").add_subparsers(dest="action", required=True)
    leaf(model, "check", "validate a model specification")

    simulate = sub.add_parser("simulate", help="Monte Carlo replicas as JSON lines").add_subparsers(
        dest="kind", required=True)
    for kind, text in (("sn", "S_n = X_1 + ... + X_n"), ("progeny", "total progeny T"),
                       ("coupled", "coupled path with family decomposition"),
                       ("stationary", "truncated stationary sampler")):
        p = leaf(simulate, kind, text)
        _run_args(p)
        _budget_args(p)
        p.add_argument("--n", type=_count)
        p.add_argument("--z0", type=_count)
        p.add_argument("--M", type=_count)

    exact = sub.add_parser("exact", help="exact laws from generating functions").add_subparsers(
        dest="kind", required=True)
    for kind, text in (("sn", "law of S_n"), ("yinf", "one immigrant batch, all generations"),
                       ("sinf", "future descendants of the stationary population"),
                       ("stationary", "stationary law"), ("progeny", "total progeny of one ancestor")):
        p = leaf(exact, kind, text)
        p.add_argument("--n", type=_count)
        p.add_argument("--N", type=_count, help="series length (power of two)")
        p.add_argument("--x", type=_ints, help="comma-separated x values; far values use Laplace inversion")

    predict = sub.add_parser("predict", help="asymptotic predictions").add_subparsers(dest="kind", required=True)
    for kind, text in (("x", "stationary tail"), ("t", "total progeny tail"), ("y", "immigrant-family tail"),
                       ("ld", "large deviations of S_n")):
        p = leaf(predict, kind, text)
        p.add_argument("--n", type=_count)
        p.add_argument("--x", type=_floats)
        p.add_argument("--grid", type=_floats, help="lo,hi,num geometric grid")

    validate = sub.add_parser("validate", help="ratio sweeps against predictions").add_subparsers(
        dest="kind", required=True)
    for kind in ("theorem1", "theorem2"):
        p = leaf(validate, kind, "large-deviation sweep over the window")
        _run_args(p)
        _budget_args(p)
        p.add_argument("--n", type=_count)
        p.add_argument("--k1", type=float)
        p.add_argument("--k2", type=float)
        p.add_argument("--grid-size", dest="grid_size", type=_count)
        p.add_argument("--no-exact", dest="exact", action="store_false")
    p = leaf(validate, "stationary", "stationary tail ratios")
    _run_args(p)
    _budget_args(p)
    p.add_argument("--x", type=_floats)
    p.add_argument("--M", type=_count)
    p.add_argument("--no-exact", dest="exact", action="store_false")
    p = leaf(validate, "lemma1", "ratio (P_n/P - 1) / (p/delta (1-f_n)^delta)")
    p.add_argument("--n", type=_ints)
    p.add_argument("--x", type=float)
    p.add_argument("--tol", type=float)
    return parser


_STRUCTURAL = {"command", "action", "kind"}


def resolve(args: argparse.Namespace, parser: argparse.ArgumentParser, argv) -> dict:
    """Merge flags, config file and defaults; reject unknown config keys."""
    given = vars(args).copy()
    allowed = _allowed_keys(parser, given)
    cfg = {}
    if "config" in given:
        try:
            cfg = json.loads(Path(given["config"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {given['config']!r}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a flat JSON object")
        unknown = sorted(set(cfg) - allowed)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}; allowed: {sorted(allowed)}")
        for key, value in cfg.items():
            if isinstance(value, (dict, list)) and key not in ("model", "x", "n", "grid"):
                raise ConfigError(f"config key {key!r} must be a scalar")
    merged = {k: v for k, v in _DEFAULTS.items() if k in allowed or k in ("format", "header")}
    merged.update(_coerce(cfg))
    merged.update({k: v for k, v in given.items() if k != "config"})
    return merged


def _coerce(cfg: dict) -> dict:
    out = dict(cfg)
    for key in ("reps", "seed", "N", "z0", "M", "pop_cap", "gen_cap", "step_cap", "grid_size", "workers"):
        if key in out:
            out[key] = _count(out[key])
    if "x" in out and not isinstance(out["x"], (int, float)):
        out["x"] = _floats(out["x"])
    if "grid" in out:
        out["grid"] = _floats(out["grid"])
    return out


def _allowed_keys(parser, given) -> set:
    node = parser
    for key in ("command", "action", "kind"):
        if key not in given:
            continue
        sub = next(a for a in node._actions if isinstance(a, argparse._SubParsersAction))
        node = sub.choices[given[key]]
        if not any(isinstance(a, argparse._SubParsersAction) for a in node._actions):
            break
    return {a.dest for a in node._actions if a.dest not in ("help", "config") and a.dest not in _STRUCTURAL}


def model_from_options(opts: dict):
    from .models import model_from_dict, validate_spec

    if "model" in opts:
        text = opts["model"]
        data = text if isinstance(text, dict) else _load_json_arg(text)
        return model_from_dict(data), data
    data = _model_dict(opts)
    report = validate_spec(data)
    return model_from_dict(data), {"report": report, **data}


def _model_dict(opts: dict) -> dict:
    family = opts.get("family")
    if family is None:
        family = "very_heavy" if any(k in opts for k in ("a", "kappa", "cc")) else "heavy"
    names = ("nu", "delta", "c1", "c2") if family == "heavy" else ("a", "delta", "kappa", "cc")
    missing = [k for k in names if k not in opts]
    if missing:
        raise ConfigError(f"{family} model needs --{' --'.join(missing)}")
    return {"family": family, **{k: opts[k] for k in names}}


def _load_json_arg(text: str) -> dict:
    text = text.strip()
    if text.startswith("{"):
        return json.loads(text)
    return json.loads(Path(text).read_text())


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------


def fmt_prob(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return f"{float(v):.9e}"


class Output:
    def __init__(self, opts: dict, stream=None):
        self.opts = opts
        self.stream = stream or sys.stdout

    def header(self) -> str:
        stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        return f"# critgwi {__version__} generated {stamp}\n"

    def emit(self, text: str, path: str | None = None, header: bool = True) -> None:
        if header and self.opts.get("header", True):
            text = self.header() + text
        target = path if path is not None else self.opts.get("out")
        if target:
            Path(target).write_text(text)
        else:
            self.stream.write(text)

    def table(self, columns, rows, meta: dict | None = None) -> None:
        if self.opts.get("format") == "json":
            payload = {"columns": list(columns), "rows": [[_json_val(v) for v in r] for r in rows]}
            if meta:
                payload["meta"] = meta
            if self.opts.get("header", True):
                payload["generated"] = self.header()[2:].strip()
            self.emit(json.dumps(payload, sort_keys=True) + "\n", header=False)
            return
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt_prob(v) for v in r])
        self.emit(buf.getvalue())


def _json_val(v):
    if v is None:
        return None
    if isinstance(v, (int, np.integer)):
        return int(v)
    return float(f"{float(v):.9e}")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_model_check(opts: dict, out: Output) -> int:
    from .models import model_from_dict, validate_spec

    if "model" in opts:
        data = opts["model"] if isinstance(opts["model"], dict) else _load_json_arg(opts["model"])
    else:
        data = _model_dict(opts)
    report = validate_spec(data)
    payload = report.to_dict()
    model = model_from_dict(data)
    if getattr(model, "family", "") == "very_heavy":
        payload["derived"] = {"q0": model.q0, "p": model.p}
    out.emit(json.dumps(payload, sort_keys=True, default=float) + "\n", header=False)
    return 0


def _budget(opts):
    from .simulate import SimBudget

    return SimBudget(pop_cap=opts["pop_cap"], gen_cap=opts["gen_cap"], step_cap=opts["step_cap"])


def cmd_simulate(opts: dict, out: Output) -> int:
    from .estimate import mc_values
    from .simulate import (ProgenySampler, SnSampler, StationarySampler, coupled_batch, coupled_record,
                           jsonl_records, stationary_truncation_bound)

    model, _ = model_from_options(opts)
    budget = _budget(opts)
    kind = opts["kind"]
    reps, seed = opts["reps"], opts["seed"]
    lines = []
    if kind == "coupled":
        for rep, sample, exc in coupled_batch(seed, 0, reps, model, opts["n"], budget):
            lines.append(coupled_record(rep, sample, exc))
    else:
        if kind == "sn":
            sampler = SnSampler(model, opts["n"], budget)
        elif kind == "progeny":
            sampler = ProgenySampler(model, opts["z0"], budget)
        else:
            sampler = StationarySampler(model, opts["M"], budget)
            bound = stationary_truncation_bound(model, opts["M"])
            lines.append(json.dumps({"truncation_bound": float(f"{bound:.9e}"), "M": opts["M"]}))
        values, aborted = mc_values(sampler, reps, seed, opts.get("workers"))
        lines.extend(jsonl_records(kind, values, aborted))
    out.emit("\n".join(lines) + "\n", header=False)
    return 0


def cmd_exact(opts: dict, out: Output) -> int:
    from . import series as S

    model, _ = model_from_options(opts)
    kind = opts["kind"]
    N = opts["N"]
    builders = {
        "sn": lambda: S.sn_pgf_series(model, opts["n"], N),
        "yinf": lambda: S.y_inf_series(model, N),
        "sinf": lambda: S.s_inf_series(model, N),
        "stationary": lambda: S.stationary_series(model, N),
        "progeny": lambda: S.progeny_series(model, N),
    }
    gaps = {
        "sn": lambda r: S.sn_gap(model, opts["n"], r),
        "yinf": lambda r: S.y_inf_gap(model, r),
        "sinf": lambda r: S.s_inf_gap(model, r),
        "stationary": lambda r: S.stationary_gap(model, r),
        "progeny": lambda r: S.progeny_gap(model, r),
    }
    xs = opts.get("x")
    series = builders[kind]()
    rows = []
    if xs is None:
        for k in range(N):
            lo, hi = S.exact_tail(series, k)
            rows.append((k, series.coeffs[k], lo, hi))
        out.table(["k", "mass", "tail_lo", "tail_hi"], rows, series.metadata())
        return 0
    # the series bracket leaves all mass beyond N unresolved; inversion is usually tighter
    inv = S.invert_tail(gaps[kind], [max(x, 0) for x in xs])
    for j, x in enumerate(xs):
        lo, hi, mass = float(inv.lo[j]), float(inv.hi[j]), None
        if x < N:
            slo, shi = S.exact_tail(series, x)
            mass = series.coeffs[x] if x >= 0 else 0.0
            if shi - slo < hi - lo:
                lo, hi = slo, shi
        rows.append((x, mass, lo, hi))
    out.table(["k", "mass", "tail_lo", "tail_hi"], rows, series.metadata())
    return 0


def _grid(opts):
    if "x" in opts:
        return np.asarray(opts["x"], dtype=float)
    if "grid" in opts:
        lo, hi, num = opts["grid"]
        return np.geomspace(lo, hi, int(num))
    raise ConfigError("give --x or --grid")


def cmd_predict(opts: dict, out: Output) -> int:
    from .predict import prediction_curve

    model, _ = model_from_options(opts)
    curve = prediction_curve(model, opts["kind"], _grid(opts), opts.get("n") if opts["kind"] == "ld" else None)
    rows = [(x, p, curve.provenance) for x, p in zip(curve.x, curve.prediction)]
    if out.opts.get("format") == "json":
        out.table(["x", "prediction", "constant_provenance"], rows, {"constants": curve.constants.to_dict()})
    else:
        out.emit(curve.to_csv())
    return 0


def cmd_validate(opts: dict, out: Output) -> int:
    from . import estimate as E
    from .series import lemma1_ratio

    model, _ = model_from_options(opts)
    kind = opts["kind"]
    if kind == "lemma1":
        ns = opts.get("n", [16, 32, 64, 128, 256, 512, 1024])
        ns = ns if isinstance(ns, list) else [ns]
        x = opts.get("x", 0.5)
        rows = []
        for n in ns:
            r = lemma1_ratio(model, n, x, tol=opts.get("tol", 1e-7), detail=True)
            rows.append((n, x, r.ratio, r.gap_n, r.factors, r.bound))
        out.table(["n", "x", "ratio", "gap_n", "factors", "bound"], rows)
        return 0
    reps = opts["reps"] if "reps" in opts else 0
    if kind in ("theorem1", "theorem2"):
        report = E.sweep_theorem(model, opts["n"], opts["k1"], opts["k2"], reps=reps,
                                 grid_size=opts["grid_size"], seed=opts["seed"], workers=opts.get("workers"),
                                 exact=opts["exact"], budget=_budget(opts))
    else:
        report = E.sweep_stationary(model, _grid(opts), reps=reps, seed=opts["seed"], workers=opts.get("workers"),
                                    M=opts["M"], exact=opts["exact"], budget=_budget(opts))
    if out.opts.get("format") == "json":
        payload = {"summary": report.summary(),
                   "rows": [{c: _json_val(getattr(r, c)) for c in E.COLUMNS} for r in report.rows]}
        out.emit(json.dumps(payload, sort_keys=True) + "\n", header=False)
        return 0
    out.emit(report.to_csv())
    if out.opts.get("out"):
        Path(out.opts["out"]).with_suffix(".json").write_text(report.to_json() + "\n")
    else:
        sys.stderr.write(report.to_json() + "\n")
    return 0


COMMANDS = {"model": cmd_model_check, "simulate": cmd_simulate, "exact": cmd_exact, "predict": cmd_predict,
            "validate": cmd_validate}


def _error(exc: BaseException, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    report = getattr(exc, "report", None)
    if report is not None:
        payload["report"] = report.to_dict()
    if isinstance(exc, CapExceeded):
        payload["lower_bound"] = exc.lower_bound
    sys.stderr.write(json.dumps(payload, sort_keys=True, default=float) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        opts = resolve(args, parser, argv)
        return COMMANDS[opts["command"]](opts, Output(opts))
    except ConfigError as exc:
        return _error(exc, EXIT_USAGE)
    except InvalidModel as exc:
        return _error(exc, EXIT_MODEL)
    except CapExceeded as exc:
        return _error(exc, EXIT_CAP)
    except (CritGWIError, ArithmeticError) as exc:
        return _error(exc, EXIT_NUMERIC)
    except (ValueError, KeyError) as exc:
        return _error(exc, EXIT_USAGE)


if __name__ == "__main__":
    sys.exit(main())
