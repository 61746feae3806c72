"""``geodev`` command-line driver.

Every command reads its parameters from flags, optionally layered over a
JSON config file (``--config``): built-in defaults < file < flags.  Outputs
go to ``--out`` (or ``$GEODEV_OUT``, default ``geodev_out``): trajectories as
CSV with 17 significant digits, reports as key-sorted JSON.  The summary is
also printed to stdout.  Exit status is 0 iff every verdict of the run
passed; configuration and geometry errors exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import chartmap as cm
from . import deviation as dv
from . import experiments as ex
from . import fermi as fm
from .connection import chart_from_spec
from .errors import ConfigError, GeodevError
from .geodesic import geodesic_residual, integrate_geodesic
from .integrate import IntegratorOptions

DEFAULT_OUT = "geodev_out"

_INTEGRATOR = {"method": "adaptive", "rtol": 1e-10, "atol": 1e-12, "steps": 1000, "min_nodes": 100}
_PATH = {"chart": "sphere2", "x0": [np.pi / 2, 0.0], "v0": [0.0, 1.0], "span": [0.0, np.pi],
         "s_init": None}
_DEVIATION = {"xi0": [0.0, 0.0], "xidot0": [0.5, 0.0]}

DEFAULTS = {
    "geodesic": {**_PATH, **_INTEGRATOR, "samples": None},
    "deviate": {**_PATH, **_INTEGRATOR, **_DEVIATION, "kind": "gje", "samples": None},
    "push": {**_PATH, **_INTEGRATOR, **_DEVIATION, "kind": "gje", "rule": "tensorial",
             "map": {"kind": "affine", "Lambda": [[2.0, 1.0], [0.0, 1.0]], "C": [0.5, -0.5]},
             "samples": None},
    "fermi": {**_PATH, **_INTEGRATOR, "frame": [[1.0, 0.0]], "rho": 0.5, "s0": None,
              "samples": 50},
    "identities": {**_PATH, **_INTEGRATOR, "chart": "flat_cartesian(3)", "x0": [0.0, 0.0, 0.0],
                   "v0": [1.0, 0.0, 0.0], "span": [-0.2, 0.2], "s_init": 0.0, "at": 0.0,
                   "xi": [0.0, 1.0, 0.0], "xidot": [0.0, 0.0, 1.0],
                   "map": {"kind": "cubic_counterexample", "n": 3}},
    "prop3": {**_INTEGRATOR, "charts": ["sphere2", "euclidean_polar"], "maps": 20, "samples": None},
    "prop4": {"n": 3, "trials": 0, "u": None, "v": None, "w": None},
    "polar": {"s_values": list(ex.POLAR_S_VALUES)},
}
COMMON = {"seed": 0, "jobs": 1, "out": None}


@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return int(self.params["seed"])

    def integrator(self) -> IntegratorOptions:
        p = self.params
        return IntegratorOptions(method=p["method"], steps=int(p["steps"]), rtol=float(p["rtol"]),
                                 atol=float(p["atol"]), min_nodes=p["min_nodes"])


# ------------------------------------------------------------------ parsing

def _vector(text):
    try:
        return [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _matrix(text):
    return [_vector(row) for row in text.split(";") if row.strip()]


def _json_or_name(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _names(text):
    return [t for t in text.split(",") if t]


_FLAG_TYPES = {
    "chart": _json_or_name, "x0": _vector, "v0": _vector, "span": _vector, "s_init": float,
    "method": str, "rtol": float, "atol": float, "steps": int, "min_nodes": int, "samples": int,
    "xi0": _vector, "xidot0": _vector, "kind": str, "rule": str, "map": _json_or_name,
    "frame": _matrix, "rho": float, "s0": float, "at": float, "xi": _vector, "xidot": _vector,
    "charts": _names, "maps": int, "n": int, "trials": int, "u": _vector, "v": _vector, "w": _vector,
    "s_values": _vector, "seed": int, "jobs": int, "out": str,
}
_CHOICES = {"kind": ["jacobi", "gje", "exact"], "rule": ["tensorial", "exact"],
            "method": ["adaptive", "rk4"]}


def _add_flags(p: argparse.ArgumentParser, keys):
    for key in keys:
        flags = ["--" + key.replace("_", "-")] + (["--integrator"] if key == "method" else [])
        p.add_argument(*flags, dest=key, type=_FLAG_TYPES[key],
                       choices=_CHOICES.get(key), default=argparse.SUPPRESS)
    p.add_argument("--config", dest="config", default=argparse.SUPPRESS,
                   help="JSON file with parameter values (flags take precedence)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geodev", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"geodesic": "integrate a geodesic", "deviate": "integrate a deviation equation",
             "push": "transform a deviation field through a chart map",
             "fermi": "build a Fermi chart and report the axis coefficients",
             "identities": "check the Appendix A transformation rules"}
    for name, text in helps.items():
        _add_flags(sub.add_parser(name, help=text), list(DEFAULTS[name]) + list(COMMON))
    prove = sub.add_parser("prove", help="run a proposition experiment")
    psub = prove.add_subparsers(dest="proposition", required=True)
    for name in ("prop3", "prop4", "polar"):
        _add_flags(psub.add_parser(name), list(DEFAULTS[name]) + list(COMMON))
    return parser


def _load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def parse_config(argv, config=None) -> RunConfig:
    """Parse ``argv`` into a validated :class:`RunConfig`.

    ``config`` (a dict or a JSON file path) and ``--config`` supply values
    that flags override; ``--config`` wins over ``config``.
    """
    try:
        ns = vars(build_parser().parse_args(argv))
    except SystemExit as exc:
        if exc.code in (0, None):
            raise
        raise ConfigError("invalid command line") from exc
    command = ns.pop("command")
    if command == "prove":
        command = ns.pop("proposition")
    file_values = dict(_load_config(config) if isinstance(config, (str, Path)) else (config or {}))
    path = ns.pop("config", None)
    if path is not None:
        file_values.update(_load_config(path))
    allowed = {**DEFAULTS[command], **COMMON}
    for key in file_values:
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r} for command {command!r}")
    params = {**allowed, **file_values, **ns}
    _validate(command, params)
    return RunConfig(command, params)


def _validate(command, p):
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    if "method" in p:
        need(p["method"] in ("adaptive", "rk4"), f"field 'method': unknown integrator {p['method']!r}")
        need(float(p["rtol"]) > 0 and float(p["atol"]) > 0, "fields 'rtol'/'atol' must be positive")
        need(int(p["steps"]) >= 1, "field 'steps' must be >= 1")
    if "span" in p:
        need(len(p["span"]) == 2 and p["span"][0] != p["span"][1], "field 'span' must be two distinct numbers")
    if "kind" in p:
        need(p["kind"] in _CHOICES["kind"], f"field 'kind': unknown deviation kind {p['kind']!r}")
    if "rule" in p:
        need(p["rule"] in _CHOICES["rule"], f"field 'rule': unknown push rule {p['rule']!r}")
    need(int(p["jobs"]) >= 1, "field 'jobs' must be >= 1")
    if command == "prop4":
        need(int(p["n"]) >= 3, "field 'n' must be >= 3")


# ----------------------------------------------------------------- emission

def _outdir(cfg: RunConfig) -> Path:
    out = cfg.params.get("out") or os.environ.get("GEODEV_OUT") or DEFAULT_OUT
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_csv(path: Path, header, rows) -> Path:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def write_json(path: Path, obj) -> Path:
    path.write_text(dumps(obj))
    return path


def emit_report(result: dict, outdir: Path) -> list:
    """Write ``result['csv']`` (name -> (header, rows)) and ``result['json']`` (name -> obj)."""
    paths = []
    for name, (header, rows) in sorted(result.get("csv", {}).items()):
        paths.append(str(write_csv(outdir / name, header, rows)))
    for name, obj in sorted(result.get("json", {}).items()):
        paths.append(str(write_json(outdir / name, obj)))
    return paths


# ----------------------------------------------------------------- commands

def _geodesic(cfg):
    p = cfg.params
    chart = chart_from_spec(p["chart"])
    return chart, integrate_geodesic(chart, p["x0"], p["v0"], p["span"], cfg.integrator(), p["s_init"])


def _columns(prefix, n):
    return [f"{prefix}{i}" for i in range(n)]


def run_geodesic(cfg):
    _, path = _geodesic(cfg)
    n = path.n
    rep = geodesic_residual(path, cfg.params["samples"])
    rows = np.column_stack([path.s, path.trajectory.y])
    return {"csv": {"geodesic.csv": (["s"] + _columns("X", n) + _columns("Xdot", n), rows)},
            "json": {"geodesic_residual.json": rep.to_dict()}, "summary": rep.to_dict(), "passed": True}


def _deviation(cfg, chart, base):
    p = cfg.params
    fn = {"jacobi": dv.integrate_jacobi, "gje": dv.integrate_gje, "exact": dv.integrate_exact_ode}[p["kind"]]
    return fn(chart, base, p["xi0"], p["xidot0"], cfg.integrator())


def _dev_rows(dev):
    return np.column_stack([dev.s, dev.trajectory.y])


def run_deviate(cfg):
    chart, base = _geodesic(cfg)
    dev = _deviation(cfg, chart, base)
    rep = dv.deviation_residual(dev, cfg.params["samples"])
    n = chart.dim
    kind = cfg.params["kind"]
    return {"csv": {f"deviate_{kind}.csv": (["s"] + _columns("xi", n) + _columns("xidot", n), _dev_rows(dev))},
            "json": {f"deviate_{kind}_residual.json": rep.to_dict()}, "summary": rep.to_dict(), "passed": True}


def run_push(cfg):
    p = cfg.params
    chart, base = _geodesic(cfg)
    dev = _deviation(cfg, chart, base)
    m = cm.map_from_spec(p["map"], chart.dim) if isinstance(p["map"], dict) else \
        cm.map_from_spec({"kind": p["map"]}, chart.dim)
    target = cm.pull_connection(chart, m)
    if p["rule"] == "tensorial":
        pushed = cm.push_tensorial(dev, m, target=target)
    else:
        pushed = cm.push_exact(dev, m, target=target)
    op = {"jacobi": "jacobi", "gje": "gje", "exact": "exact"}[p["kind"]]
    rep = dv.deviation_residual(pushed, p["samples"], operator=op)
    src = dv.deviation_residual(dev, p["samples"])
    n = chart.dim
    summary = {"target_residual": rep.to_dict(), "source_residual": src.to_dict(),
               "map": m.name, "rule": p["rule"], "kind": p["kind"]}
    return {"csv": {f"push_{p['rule']}.csv": (["s"] + _columns("xi", n) + _columns("xidot", n),
                                              _dev_rows(pushed))},
            "json": {f"push_{p['rule']}_residual.json": summary}, "summary": summary, "passed": True}


def run_fermi(cfg):
    p = cfg.params
    chart, base = _geodesic(cfg)
    fc = fm.build_fermi(chart, base, p["frame"], None, p["rho"], cfg.integrator(), p["s0"],
                        seed=cfg.seed)
    rep = fm.gamma_on_axis(fc, int(p["samples"]))
    per_s = np.max(np.abs(rep.values.reshape(len(rep.s), -1)), axis=1)
    summary = {"chart": fc.descriptor(), "axis_gamma": rep.to_dict()}
    return {"csv": {"fermi_axis_gamma.csv": (["s", "max_abs_gamma"], np.column_stack([rep.s, per_s]))},
            "json": {"fermi_chart.json": summary}, "summary": summary, "passed": True}


def run_identities(cfg):
    p = cfg.params
    chart, base = _geodesic(cfg)
    m = cm.map_from_spec(p["map"], chart.dim) if isinstance(p["map"], dict) else \
        cm.map_from_spec({"kind": p["map"]}, chart.dim)
    rep = cm.appendix_identities(chart, m, base, p["at"], p["xi"], p["xidot"])
    return {"json": {"identities.json": rep.to_dict()}, "summary": rep.to_dict(), "passed": True}


def _pool_map(fn, items, jobs):
    if jobs <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def run_prop3(cfg):
    p = cfg.params
    opts = cfg.integrator()
    sweeps = _pool_map(lambda c: ex.prop3_sweep(c, int(p["maps"]), cfg.seed, opts, p["samples"]),
                       list(p["charts"]), int(p["jobs"]))
    verdicts = [v for sweep in sweeps for v in sweep]
    worst = max(verdicts, key=lambda v: v.residual_achieved)
    summary = {"seed": cfg.seed, "passed": all(v.passed for v in verdicts),
               "worst_residual": worst.residual_achieved, "threshold": ex.PROP3_THRESHOLD,
               "runs": [v.to_dict() for v in verdicts]}
    return {"json": {"prop3_verdict.json": summary}, "summary": summary, "passed": summary["passed"]}


def run_prop4(cfg):
    p = cfg.params
    n = int(p["n"])
    main = ex.verify_prop4(n, p["u"], p["v"], p["w"])
    summary = {"seed": cfg.seed, **main.to_dict()}
    passed = main.verdict.passed
    trials = int(p["trials"])
    if trials:
        seeds = [cfg.seed + i for i in range(trials)]
        runs = _pool_map(lambda s: ex.verify_prop4(n, seed=s), seeds, int(p["jobs"]))
        summary["random_trials"] = [{"seed": s, "passed": r.verdict.passed,
                                     "G_at_s0": r.G_at_s0.tolist(), "v": r.verdict.details["v"],
                                     "error": r.verdict.residual_achieved} for s, r in zip(seeds, runs)]
        passed = passed and all(r.verdict.passed for r in runs)
    summary["all_passed"] = passed
    return {"json": {"prop4_verdict.json": summary}, "summary": summary, "passed": passed}


def run_polar(cfg):
    v = ex.run_polar_example(cfg.params["s_values"])
    summary = v.to_dict()
    d = summary["details"]
    summary["per_s"] = [{"s": s, "closed_form": c, "push_exact_delta": a, "direct_delta": b}
                        for s, c, a, b in zip(d["s"], d["closed_form"], d["push_exact_delta"],
                                              d["direct_delta"])]
    return {"json": {"polar_check.json": summary}, "summary": summary, "passed": v.passed}


COMMANDS = {"geodesic": run_geodesic, "deviate": run_deviate, "push": run_push, "fermi": run_fermi,
            "identities": run_identities, "prop3": run_prop3, "prop4": run_prop4, "polar": run_polar}


def run(cfg: RunConfig):
    """Execute ``cfg``; returns ``(result, written_paths)``."""
    result = COMMANDS[cfg.command](cfg)
    names = sorted(result.get("csv", {})) + sorted(result.get("json", {}))
    for obj in result.get("json", {}).values():
        if isinstance(obj, dict) and "artifacts" in obj:
            obj["artifacts"] = names
    paths = emit_report(result, _outdir(cfg))
    return result, paths


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
        result, _ = run(cfg)
    except ConfigError as exc:
        print(f"geodev: config error: {exc}", file=sys.stderr)
        return 2
    except GeodevError as exc:
        print(f"geodev: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(dumps(result["summary"]))
    return 0 if result["passed"] else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
