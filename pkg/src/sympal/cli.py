"""``sympal`` command line.

Exit status: 0 success, 1 precondition or invariant failure, 2 configuration
error, 3 numerical failure.

Examples
--------
::

    sympal verify --system sys_b
    sympal orbits --system sys_c --periods 1,2,3 --output orbits.json
    sympal spectrum --config run.json --format csv --output table.csv
    sympal plot --input table.json --reference 0 --output spectrum.svg
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .action import LoopConfiguration, find_critical_points, make_record
from .config import BLOCK_DEFAULTS, ExperimentConfig, load_config
from .errors import ConfigError, InvariantMismatch, NotCritical, NotPeriodic, NumericalFailure, PreconditionFailed
from .maslov import check_iteration_bounds, index_theorem_check, maslov_details
from .output import atomic_write, canonical_json, emit_plots
from .sdm import (accumulation_scan, admissible_parameters, modulus_function, sdm_criteria,
                  vanishing_homotopy_verify)
from .spectrum import SpectrumTable, conley_single_gf_experiment, conley_zehnder_experiment, scan_periods
from .symmap import apply_factor, canonical_path, closure_defect, differential_factor, orbit
from .linalg import symplectic_defect
from .verification import ordered_map, run_suite, symplecticity_check

log = logging.getLogger("sympal")

COMMANDS = ("map", "orbits", "maslov", "sdm", "vanish", "spectrum", "conley", "verify", "plot")

__all__ = ["main", "run", "COMMANDS"]


class CommandFailed(Exception):
    """The command ran but its checks did not pass (exit 1)."""

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload


def _z0(block, d):
    z0 = block.get("z0")
    return np.zeros(2 * d) if z0 is None else np.asarray(z0, dtype=float)


# ---------------------------------------------------------------------------
# commands; each returns a JSON-ready payload (or a SpectrumTable)


def cmd_map(cfg: ExperimentConfig) -> dict:
    fmap, block = cfg.system, cfg.block("map")
    out = {"system": fmap.to_dict(), "smallness_certificate": fmap.smallness_certificate}
    if block["points"] is not None:
        z = np.atleast_2d(np.asarray(block["points"], dtype=float))
        rows = []
        for zi in z:
            w, mats = zi, []
            for f in fmap.factors:
                mats.append(differential_factor(f, w))
                w = apply_factor(f, w)
            total = np.eye(2 * fmap.d)
            for m in mats:
                total = m @ total
            rows.append({"point": zi, "image": w, "differential": total,
                         "symplectic_defect": symplectic_defect(total)})
        out["points"] = rows
    out["symplecticity"] = symplecticity_check(fmap, int(block["samples"]), cfg.seed)
    return out


def _search(cfg, periods=None):
    periods = sorted(set(periods or cfg.periods))
    return periods, ordered_map(lambda p: find_critical_points(cfg.system, p, cfg.search_config), periods)


def cmd_orbits(cfg: ExperimentConfig) -> dict:
    periods, found = _search(cfg)
    return {"system": cfg.system_ref, "search_config": cfg.search_config.to_dict(),
            "periods": {str(p): {"degenerate_family": res.degenerate_family, "n_starts": res.n_starts,
                                 "orbits": [rec.to_dict() for rec in res]}
                        for p, res in zip(periods, found)}}


def _orbit_records(cfg, spec, period):
    fmap = cfg.system
    data = _read_json(spec) if isinstance(spec, str) else spec
    if isinstance(data, dict) and "loop" in data:
        data = data["loop"]
    if isinstance(data, dict) and "points" in data:
        loop = LoopConfiguration.from_dict(data)
    elif isinstance(data, dict) and "point" in data:
        p = int(data.get("period", period))
        pts = orbit(fmap, np.asarray(data["point"], dtype=float), p)
        if closure_defect(pts) > 1e-10 or np.max(np.abs(pts[-1] - pts[0])) > 1e-10:
            raise NotPeriodic(f"the point is not a contractible {p}-periodic point")
        loop = LoopConfiguration(fmap.d, fmap.k, p, pts[:-1])
    else:
        raise ConfigError("orbit must contain 'loop', 'points' or 'point'")
    if (loop.d, loop.k) != (fmap.d, fmap.k):
        raise ConfigError("orbit dimensions do not match the system")
    return [make_record(fmap, loop, cfg.search_config.tol_null)]


def cmd_maslov(cfg: ExperimentConfig) -> dict:
    fmap, block = cfg.system, cfg.block("maslov")
    n_max = int(block["n_max"])
    if block["orbit"] is not None:
        records = _orbit_records(cfg, block["orbit"], int(block["period"]))
        periods = [records[0].loop.p]
    else:
        periods, found = _search(cfg)
        records = [r for res in found for r in res]
    rows = []
    for rec in records:
        pts = rec.loop.points
        path = canonical_path(fmap, pts[0], rec.loop.p, points=pts)
        det = maslov_details(path, rec.tol_null, panel_seed=cfg.seed)
        bounds = [check_iteration_bounds(path, n, tol_null=rec.tol_null, mas_1=det["mas"])
                  for n in range(1, n_max + 1)]
        rows.append({"orbit_key": rec.orbit_key, "period": rec.loop.p, "avmas": det["avmas"],
                     "mas": det["mas"], "details": det, "index_theorem": index_theorem_check(rec),
                     "bounds_report": bounds})
    ok = all(r["index_theorem"]["ok"] and all(b["ok"] for b in r["bounds_report"]) for r in rows)
    payload = {"system": cfg.system_ref, "periods": periods, "orbits": rows, "ok": ok}
    if not ok:
        raise CommandFailed("index theorem or iteration bounds violated", payload)
    return payload


def cmd_sdm(cfg: ExperimentConfig) -> dict:
    fmap, block = cfg.system, cfg.block("sdm")
    if block["z0"] is not None:
        points = [np.asarray(block["z0"], dtype=float)]
    else:
        points = [rec.loop.points[0] for rec in find_critical_points(fmap, 1, cfg.search_config)]
    reports = [sdm_criteria(fmap, z, block["n_list"], block["mode"], cfg.search_config.tol_null).to_dict()
               for z in points]
    return {"system": cfg.system_ref, "mode": block["mode"], "reports": reports}


def cmd_vanish(cfg: ExperimentConfig) -> dict:
    fmap, block = cfg.system, cfg.block("vanish")
    z0 = _z0(block, fmap.d)
    table = modulus_function(fmap, z0, block["R"])
    params = {"R": block["R"], "epsilon": block["epsilon"], "r": block["r"],
              "n_prime": block["n_prime"], "n": block["n"]}
    if params["r"] is None or params["n_prime"] is None or params["n"] is None:
        auto = admissible_parameters(fmap, z0, block["R"], block["epsilon"], block["safety"], table)
        for key in ("r", "n_prime", "n"):
            if params[key] is None:
                params[key] = auto[key]
    report = vanishing_homotopy_verify(
        fmap, z0, params["n"], params["n_prime"], params["r"], params["R"], params["epsilon"],
        sample_count=block["sample_count"], boundary_count=block["boundary_count"],
        t_steps=block["t_steps"], seed=cfg.seed, table=table)
    payload = {"system": cfg.system_ref, "z0": z0, "report": report}
    if not report["ok"]:
        raise CommandFailed(f"{report['violations']} sampled homotopy bounds violated", payload)
    return payload


def cmd_spectrum(cfg: ExperimentConfig):
    block = cfg.block("spectrum")
    table = scan_periods(cfg.system, cfg.periods, cfg.search_config, block["window"])
    if block["accumulation"] is None:
        return table
    acc = dict(block["accumulation"])
    unknown = set(acc) - {"z0", "n_list", "eps_window"}
    if unknown:
        raise ConfigError(f"unknown key spectrum.accumulation.{sorted(unknown)[0]}")
    scan = accumulation_scan(cfg.system, _z0(acc, cfg.system.d), acc.get("n_list", [2, 3, 5, 7]),
                             float(acc.get("eps_window", 0.05)), cfg.search_config)
    for w in scan["warnings"]:
        log.warning("%s", w)
    return {"table": table.to_dict(), "accumulation": scan}


def cmd_conley(cfg: ExperimentConfig) -> dict:
    block, fmap = cfg.block("conley"), cfg.system
    kind = block["experiment"]
    if kind in ("auto", "pair"):
        try:
            res = conley_zehnder_experiment(fmap, cfg.primes, cfg.search_config, block["dichotomy_primes"])
            return {"experiment": "pair", "system": cfg.system_ref, **res}
        except PreconditionFailed:
            if kind == "pair" or fmap.k != 1:
                raise
            log.warning("degenerate fixed point; running the single generating function experiment")
    res = conley_single_gf_experiment(fmap, cfg.primes, cfg.search_config)
    return {"experiment": "single", "system": cfg.system_ref, **res}


def cmd_verify(cfg: ExperimentConfig) -> dict:
    block = cfg.block("verify")
    report = run_suite(cfg.system, block["periods"], int(block["n_max"]), int(block["samples"]),
                       cfg.search_config, cfg.seed)
    report["system_ref"] = cfg.system_ref
    if not report["ok"]:
        failed = sorted(k for k, v in report["checks"].items() if not v["ok"])
        raise CommandFailed(f"invariant checks failed: {failed}", report)
    return report


def cmd_plot(cfg: ExperimentConfig, plot_path):
    block = cfg.block("plot")
    if block["input"] is not None:
        entries = _in_window(_read_entries(block["input"]), cfg.block("spectrum")["window"])
    else:
        entries = cmd_spectrum_table(cfg).filtered()
    written = emit_plots(entries, plot_path, block["reference"], block["title"])
    return {"plot": str(written) if written else None, "entries": len(entries)}


def cmd_spectrum_table(cfg) -> SpectrumTable:
    return scan_periods(cfg.system, cfg.periods, cfg.search_config, cfg.block("spectrum")["window"])


HANDLERS = {"map": cmd_map, "orbits": cmd_orbits, "maslov": cmd_maslov, "sdm": cmd_sdm,
            "vanish": cmd_vanish, "spectrum": cmd_spectrum, "conley": cmd_conley, "verify": cmd_verify}


def run(command: str, cfg: ExperimentConfig, output=None, fmt: str | None = None, plot=None) -> int:
    """Execute ``command`` and write its artifacts; returns the exit status."""
    out_block = cfg.block("output")
    output = output if output is not None else out_block["path"]
    fmt = fmt or out_block["format"]
    plot = plot if plot is not None else out_block["plot"]
    status = 0
    try:
        if command == "plot":
            target = plot or output or "spectrum.svg"
            payload = cmd_plot(cfg, target)
            output = None if output == target else output
        else:
            payload = HANDLERS[command](cfg)
    except CommandFailed as exc:
        log.error("%s", exc)
        payload, status = exc.payload, 1
    if isinstance(payload, SpectrumTable):
        if plot:
            emit_plots(payload, plot, cfg.block("spectrum")["reference"])
        text = payload.to_csv() if fmt == "csv" else canonical_json(payload.to_dict())
    else:
        if fmt == "csv":
            raise ConfigError("csv output is only available for the spectrum command")
        text = canonical_json(payload)
    if output:
        atomic_write(output, text)
    elif command != "plot" or payload is not None:
        sys.stdout.write(text)
    return status


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _read_entries(path) -> list:
    data = _read_json(path)
    if "table" in data:
        data = data["table"]
    return data.get("entries", [])


def _in_window(entries, window):
    if window is None:
        return list(entries)
    c, r = window
    return [e for e in entries if abs(e["average_action"] - c) <= r]


def _plot_file(args) -> int:
    target = args.plot or args.output or "spectrum.svg"
    emit_plots(_in_window(_read_entries(args.input), args.window), target, args.reference)
    return 0


def _int_list(text: str) -> list[int]:
    """``"1,2,5"`` or ``"1..12"`` or a mix such as ``"1..4,8"``."""
    out = []
    try:
        for part in (v.strip() for v in text.split(",")):
            if not part:
                continue
            if ".." in part:
                lo, hi = (int(v) for v in part.split(".."))
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(part))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected integers or ranges a..b, got {text!r}") from exc
    return out


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sympal", description="Periodic orbits and degenerate "
                                     "extrema of torus maps given by generating functions.")
    parser.add_argument("--version", action="version", version=f"sympal {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"{name} experiment")
        p.add_argument("--config", "-c", help="experiment configuration (JSON)")
        p.add_argument("--system", "-s", help="system file or bundled name (sys_a .. sys_d)")
        p.add_argument("--seed", type=int, help="override the configuration seed")
        p.add_argument("--periods", type=_int_list, help="periods, e.g. 1,2,3 or 1..12")
        p.add_argument("--output", "--out", "-o", dest="output", help="output file (default: stdout)")
        p.add_argument("--format", choices=("json", "csv"))
        p.add_argument("--plot", help="SVG path for the spectrum plot")
        p.add_argument("--verbose", "-v", action="store_true")
        if name == "sdm":
            p.add_argument("--point", type=_floats, help="fixed point, e.g. 0,0")
            p.add_argument("--mode", choices=("max", "min"))
        if name == "vanish":
            p.add_argument("--point", type=_floats, help="fixed point, e.g. 0,0")
            p.add_argument("--params", help="JSON file with vanish parameters (R, epsilon, r, n_prime, n, ...)")
        if name == "maslov":
            p.add_argument("--orbit", help="orbit JSON: a loop, an orbit record or {\"point\": [...]}")
            p.add_argument("--period", type=int, help="period of the orbit given by a point")
        if name in ("spectrum", "plot"):
            p.add_argument("--window", type=_floats, help="average-action filter c,r")
        if name == "conley":
            p.add_argument("--primes", type=_int_list, help="primes, e.g. 2,3,5,7,11")
            p.add_argument("--mode", choices=("single-gf", "nondegenerate", "auto"))
        if name == "plot":
            p.add_argument("--input", help="spectrum JSON produced by `sympal spectrum`")
            p.add_argument("--reference", type=float, help="reference level c")
    return parser


def _overrides(args) -> tuple[dict, dict]:
    kw, blocks = {}, {}

    def put(block, key, value):
        if value is not None:
            blocks.setdefault(block, {})[key] = value

    if args.seed is not None:
        kw["seed"] = args.seed
    if args.periods:
        kw["periods"] = tuple(args.periods)
    if getattr(args, "primes", None):
        kw["primes"] = tuple(args.primes)
    cmd = args.command
    if cmd == "sdm":
        put("sdm", "z0", args.point)
        put("sdm", "mode", args.mode)
        if args.periods:
            put("sdm", "n_list", list(args.periods))
    elif cmd == "vanish":
        put("vanish", "z0", args.point)
        if args.params:
            data = _read_json(args.params)
            if not isinstance(data, dict):
                raise ConfigError(f"{args.params}: expected a JSON object")
            unknown = sorted(set(data) - set(BLOCK_DEFAULTS["vanish"]))
            if unknown:
                raise ConfigError(f"{args.params}: unknown key {unknown[0]!r}")
            blocks.setdefault("vanish", {}).update(data)
    elif cmd == "maslov":
        put("maslov", "orbit", args.orbit)
        put("maslov", "period", args.period)
    elif cmd == "conley" and args.mode:
        put("conley", "experiment", {"single-gf": "single", "nondegenerate": "pair"}.get(args.mode, "auto"))
    elif cmd == "plot":
        put("plot", "input", args.input)
        put("plot", "reference", args.reference)
    if cmd in ("spectrum", "plot") and args.window:
        if len(args.window) != 2 or not args.window[1] > 0:
            raise ConfigError("--window expects c,r with r > 0")
        put("spectrum", "window", list(args.window))
    return kw, blocks


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="sympal: %(levelname)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "plot" and args.input and args.config is None and args.system is None:
            return _plot_file(args)
        if args.config is None and args.system is None:
            raise ConfigError("give --config or --system")
        cfg = load_config(args.config, args.system)
        kw, blocks = _overrides(args)
        if kw or blocks:
            cfg = cfg.with_overrides(blocks=blocks, **kw)
        return run(args.command, cfg, args.output, args.format, args.plot)
    except ConfigError as exc:
        print(f"sympal: config error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"sympal: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except (PreconditionFailed, InvariantMismatch, NotPeriodic, NotCritical) as exc:
        print(f"sympal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
