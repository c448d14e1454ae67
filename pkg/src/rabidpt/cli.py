"""Command-line front end.

    rabidpt <command> [--config PATH] [--out DIR] [--seed N] [--threads N] [--backend B]

Commands: phase-diagram | mf | steady | wigner | langevin | scaling | collapse.
A JSON config holds "params" (ModelParams fields) plus command options;
command-line flags override the config.  Every output embeds the resolved
configuration: JSON results under the "config" key, CSV files as a first
comment line "# config: {...}".  Outputs are written atomically.

Exit codes: 0 success (individual samples may be flagged "Failed"),
1 solver failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from . import langevin, lindblad, meanfield, scaling
from .core import Branch, ModelParams
from .errors import ConfigError, RabiError

log = logging.getLogger("rabidpt")

COMMANDS = ("phase-diagram", "mf", "steady", "wigner", "langevin", "scaling", "collapse")

DEFAULTS = {
    "phase-diagram": {"mu": {"start": 0.0, "stop": 3.0, "num": 31}, "g": {"start": 0.05, "stop": 3.0, "num": 60}},
    "mf": {"g": {"start": 0.05, "stop": 3.0, "num": 60}, "branches": ["minus", "plus"]},
    "steady": {"model": "full", "n_c": "auto", "tol": 1e-10, "use_parity": True, "keep_rho": False},
    "wigner": {"model": "minus", "n_c": "auto", "sources": ["numeric", "boltzmann"],
               "x": {"start": -8.0, "stop": 8.0, "num": 81}, "p": {"start": -4.0, "stop": 4.0, "num": 41}},
    "langevin": {"branch": "minus", "n_traj": 32, "dt": None, "t_burn": 200.0, "t_max": 2000.0},
    "scaling": {"mode": "zeta", "regime": "second_order", "eta": [1e3, 1e4, 1e5], "g": None,
                "min_decades": None},
    "collapse": {"Lambda": [0.0, 0.2, 0.5], "eta": {"start": 1e4, "stop": 1e5, "num": 4, "log": True},
                 "dg": {"start": 1e-5, "stop": 1e-1, "num": 25, "log": True}, "n_bins": 20},
}


@dataclass
class RunConfig:
    command: str
    params: ModelParams
    options: dict = field(default_factory=dict)
    seed: int = 0
    threads: int = 1
    backend: str = "quadrature"
    version: str = __version__

    def to_dict(self) -> dict:
        return dict(command=self.command, params=self.params.to_dict(), options=self.options, seed=self.seed,
                    threads=self.threads, backend=self.backend, version=self.version)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(command=d["command"], params=ModelParams.from_dict(d["params"]), options=dict(d["options"]),
                   seed=int(d["seed"]), threads=int(d["threads"]), backend=d["backend"],
                   version=d.get("version", __version__))


# ---------------------------------------------------------------------------
# config handling


def grid(spec, name: str) -> list[float]:
    """A list of numbers or {"start", "stop", "num", "log"}."""
    if isinstance(spec, (list, tuple)):
        try:
            vals = [float(v) for v in spec]
        except (TypeError, ValueError):
            raise ConfigError(f"{name}: list entries must be numbers")
    elif isinstance(spec, dict):
        try:
            a, b, n = float(spec["start"]), float(spec["stop"]), int(spec["num"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"{name}: grid needs numeric start, stop, num")
        if n < 1:
            raise ConfigError(f"{name}: num must be >= 1")
        if spec.get("log", False):
            if a <= 0 or b <= 0:
                raise ConfigError(f"{name}: log grid needs positive bounds")
            vals = np.geomspace(a, b, n).tolist()
        else:
            vals = np.linspace(a, b, n).tolist()
    elif isinstance(spec, (int, float)) and not isinstance(spec, bool):
        vals = [float(spec)]
    else:
        raise ConfigError(f"{name}: expected a list or a grid spec")
    if not vals or not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"{name}: values must be finite and non-empty")
    return vals


def resolve_config(args: argparse.Namespace) -> RunConfig:
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}")
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        if isinstance(raw.get("config"), dict):  # a previous JSON output
            raw = raw["config"]
    params = ModelParams.from_dict(raw.get("params", {}))
    if "command" in raw and raw["command"] != args.command:
        raise ConfigError(f"config was written for command {raw['command']!r}, not {args.command!r}")
    # options may be given flat or under "options" (the form echoed in outputs)
    given = dict(raw.get("options") or {})
    if not isinstance(given, dict):
        raise ConfigError("options must be a JSON object")
    for k, v in raw.items():
        if k not in ("params", "options", "seed", "threads", "backend", "command", "version"):
            given[k] = v
    opts = dict(DEFAULTS[args.command])
    for k, v in given.items():
        if k not in opts:
            raise ConfigError(f"unknown option {k!r} for command {args.command}")
        opts[k] = v
    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    threads = args.threads if args.threads is not None else raw.get("threads", os.cpu_count() or 1)
    backend = args.backend if args.backend is not None else raw.get("backend", "quadrature")
    try:
        seed, threads = int(seed), int(threads)
    except (TypeError, ValueError):
        raise ConfigError("seed and threads must be integers")
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    backend = scaling.normalize_backend(backend)
    return RunConfig(command=args.command, params=params, options=opts, seed=seed, threads=threads,
                     backend=backend)


# ---------------------------------------------------------------------------
# output


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Branch):
        return obj.name.lower()
    if hasattr(obj, "value") and hasattr(obj, "name"):  # enums
        return obj.value
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def json_text(cfg: RunConfig, result: dict) -> str:
    return json.dumps(_jsonable({"config": cfg.to_dict(), "result": result}), indent=2, sort_keys=False) + "\n"


def csv_text(cfg: RunConfig, rows: Sequence[dict], fields: Sequence[str]) -> str:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(_jsonable(cfg.to_dict()), sort_keys=True) + "\n")
    w = csv.DictWriter(buf, fieldnames=list(fields), extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _csv_value(r.get(k)) for k in fields})
    return buf.getvalue()


def _csv_value(v):
    v = _jsonable(v)
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


def pmap(fn: Callable, items: Sequence, threads: int) -> list:
    """Map preserving input order (results are independent of the thread count)."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# commands; each returns {filename: text}


def cmd_phase_diagram(cfg: RunConfig) -> dict:
    mus = grid(cfg.options["mu"], "mu")
    gs = grid(cfg.options["g"], "g")
    # the transition-order annotation looks at grid neighbours, so the grid is one task
    pts = meanfield.phase_diagram(mus, gs, cfg.params)
    rows = []
    for pt in pts:
        r = asdict(pt)
        r["region"] = f"{pt.phase_minus.value}/{pt.phase_plus.value}"
        rows.append(r)
    fields = ["mu", "g", "phase_minus", "phase_plus", "region", "n_mf_minus", "n_mf_plus",
              "transition_order_nearby", "status"]
    return {"phase_diagram.csv": csv_text(cfg, rows, fields)}


def cmd_mf_sweep(cfg: RunConfig) -> dict:
    gs = grid(cfg.options["g"], "g")
    branches = [Branch.parse(b) for b in cfg.options["branches"]]
    rows = []
    for b in branches:
        parts = pmap(lambda g: meanfield.mf_sweep(cfg.params, [g], b), gs, cfg.threads)
        rows.extend(r for part in parts for r in part)
    return {"mf_sweep.csv": csv_text(cfg, rows, ["g", "branch", "phase", "n_mf", "sz", "status"])}


def _parse_nc(v):
    if v == "auto":
        return "auto"
    try:
        n = int(v)
    except (TypeError, ValueError):
        raise ConfigError("n_c must be an integer or 'auto'")
    if n < 2:
        raise ConfigError("n_c must be >= 2")
    return n


def _solve(cfg: RunConfig, model: str):
    o = cfg.options
    n_c = _parse_nc(o.get("n_c", "auto"))
    if model == "full":
        return lindblad.steady_state_full(cfg.params, n_c, tol=o.get("tol", 1e-10),
                                          use_parity=bool(o.get("use_parity", True)))
    try:
        b = Branch.parse(model)
    except ValueError:
        raise ConfigError(f"model must be 'full', 'plus' or 'minus', got {model!r}")
    return lindblad.steady_state_branch(cfg.params, b, n_c, tol=o.get("tol", 1e-10),
                                        use_parity=bool(o.get("use_parity", True)))


def cmd_steady(cfg: RunConfig) -> dict:
    res = _solve(cfg, cfg.options["model"])
    out = res.to_dict()
    if cfg.options.get("keep_rho"):
        out["rho_real"] = res.rho.real
        out["rho_imag"] = res.rho.imag
    return {"steady.json": json_text(cfg, out)}


def cmd_wigner(cfg: RunConfig) -> dict:
    xs = grid(cfg.options["x"], "x")
    ps = grid(cfg.options["p"], "p")
    sources = list(cfg.options["sources"])
    unknown = set(sources) - {"numeric", "boltzmann"}
    if unknown:
        raise ConfigError(f"unknown wigner sources {sorted(unknown)}")
    model = cfg.options["model"]
    cols = {}
    if "numeric" in sources:
        res = _solve(cfg, model)
        rho = lindblad.partial_trace_spin(res.rho) if model == "full" else res.rho
        cols["W_numeric"] = lindblad.wigner_numeric(rho, xs, ps, check_edges=False).W
    if "boltzmann" in sources:
        b = Branch.MINUS if model == "full" else Branch.parse(model)
        X, P = np.meshgrid(xs, ps)
        cols["W_boltzmann"] = langevin.boltzmann_wigner(X, P, cfg.params, b)
    rows = []
    for j, pv in enumerate(ps):
        for i, xv in enumerate(xs):
            r = {"x": xv, "p": pv}
            for k, W in cols.items():
                r[k] = float(W[j, i])
            rows.append(r)
    return {"wigner.csv": csv_text(cfg, rows, ["x", "p"] + list(cols))}


def cmd_langevin(cfg: RunConfig) -> dict:
    o = cfg.options
    b = Branch.parse(o["branch"])
    quad = langevin.quadrature_observables(cfg.params, b)
    st = langevin.simulate_ensemble(cfg.params, b, n_traj=int(o["n_traj"]), dt=o["dt"], t_burn=float(o["t_burn"]),
                                    t_max=float(o["t_max"]), seed=cfg.seed)
    z = {k: (st.moments[k]["mean"] - quad[k]) / st.moments[k]["se"] if st.moments[k]["se"] > 0 else None
         for k in ("dx2", "dp2")}
    C = langevin.landau_C(cfg.params)
    return {"langevin.json": json_text(cfg, {"ensemble": st.to_dict(), "quadrature": quad, "z_scores": z,
                                             "landau_C": asdict(C), "mass_ratio_rf": langevin.mass_ratio(cfg.params),
                                             "fp_residual": langevin.fp_residual(cfg.params, b)})}


def _sample_rows(samples) -> list[dict]:
    return [s.row() for s in samples]


def cmd_scaling(cfg: RunConfig) -> dict:
    o = cfg.options
    mode = o["mode"]
    regime = o["regime"]
    if regime not in scaling.TABLE1:
        raise ConfigError(f"regime must be one of {sorted(scaling.TABLE1)}")
    p = cfg.params
    if mode == "zeta":
        etas = grid(o["eta"], "eta")
        if any(e <= 0 for e in etas):
            raise ConfigError("eta values must be positive")
        dec = o["min_decades"] if o["min_decades"] is not None else 1.0
        scaling._check_span(etas, dec, "eta list")
        gc = meanfield.critical_coupling_gc(p)
        samples = pmap(lambda e: scaling._sample(p.with_(eta=e, g=gc), cfg.backend), etas, cfg.threads)
        report = scaling.zeta_report(samples, regime)
    elif mode == "nu":
        if o["g"] is None:
            raise ConfigError("mode 'nu' needs a g list")
        gs = grid(o["g"], "g")
        dec = o["min_decades"] if o["min_decades"] is not None else 2.0
        gc = meanfield.critical_coupling_gc(p)
        dg = np.array(gs) - gc
        if np.any(dg <= 0):
            raise ConfigError("all couplings must exceed g_c")
        scaling._check_span(dg, dec, "g - g_c")
        samples = pmap(lambda g: scaling._sample(p.with_(g=g), cfg.backend), gs, cfg.threads)
        rows = [dict(dg=s.g - gc, dx2=s.dx2, status=s.status) for s in samples]
        report = scaling.fit_exponent(rows, "dg", "dx2", documented_constants=scaling.TABLE1[regime])
        report.exponent = -report.exponent
    else:
        raise ConfigError("scaling mode must be 'zeta' or 'nu'")
    return {"scaling.csv": csv_text(cfg, _sample_rows(samples), scaling.CSV_FIELDS),
            "scaling.json": json_text(cfg, {"report": report.to_dict(),
                                            "failed": sum(s.status != "ok" for s in samples)})}


def cmd_collapse(cfg: RunConfig) -> dict:
    o = cfg.options
    lams = grid(o["Lambda"], "Lambda")
    etas = grid(o["eta"], "eta")
    dgs = grid(o["dg"], "dg")
    if any(e <= 0 for e in etas) or any(d <= 0 for d in dgs):
        raise ConfigError("eta and dg values must be positive")
    tasks = [(lam, eta) for lam in lams for eta in etas]
    parts = pmap(lambda t: scaling.collapse_dataset(cfg.params, [t[0]], [t[1]], dgs, cfg.backend), tasks, cfg.threads)
    samples = [s for part in parts for s in part]
    summary = [asdict(c) for c in scaling.collapse_summary(samples, n_bins=int(o["n_bins"]))]
    return {"collapse.csv": csv_text(cfg, _sample_rows(samples), scaling.CSV_FIELDS),
            "collapse.json": json_text(cfg, {"summary": summary,
                                             "failed": sum(s.status != "ok" for s in samples)})}


HANDLERS = {
    "phase-diagram": cmd_phase_diagram,
    "mf": cmd_mf_sweep,
    "steady": cmd_steady,
    "wigner": cmd_wigner,
    "langevin": cmd_langevin,
    "scaling": cmd_scaling,
    "collapse": cmd_collapse,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rabidpt", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"rabidpt {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--backend", choices=["master", "quadrature", "ensemble", "closed"], default=None)
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        outputs = HANDLERS[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except RabiError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, TypeError, KeyError) as exc:
        # malformed option values surface here (e.g. a string where a number is expected)
        print(f"configuration error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    for name, text in outputs.items():
        atomic_write(out / name, text)
        log.info("wrote %s", out / name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
