"""Command-line interface.

Subcommands: ``estimate``, ``bootstrap``, ``curve`` and ``simulate``.
Exit codes: 0 success, 1 numerical failure, 2 invalid input.

Flags may also come from ``--config file.json`` whose keys are the long flag
names with dashes or underscores (``{"n_mc": 200, "design": "dqb"}``).
Precedence is command-line flags, then the config file, then defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import BootstrapConfig, Design, confidence_interval, replicate_quantiles, run_bootstrap
from .errors import HetQuantError, IoError, NumericalError, ValidationError
from .ols import OlsFitOptions, fit_all
from .panel import PanelData, PanelSchema, load_panel_csv, write_estimates_csv
from .quantile import QuantileTarget, aggregate, quantile_curve
from .rng import fresh_seed

log = logging.getLogger("hetquant")

EXIT_OK, EXIT_NUMERICAL, EXIT_INPUT = 0, 1, 2

DEFAULTS = {
    "tau": None,
    "coef": None,
    "design": "sqb",
    "b": 299,
    "alpha": 0.05,
    "seed": None,
    "threads": 1,
    "null": None,
    "preset": None,
    "spec": None,
    "n_mc": None,
    "output": None,
    "summary": None,
    "input": None,
    "schema": None,
    "bands": True,
    "cells": None,
    "layout": "long",
    "max_redraws": 10,
    "condition_limit": 1e12,
    "min_dof": 1,
    "tie": None,
}

DEFAULT_CURVE_TAUS = "0.01:0.99:0.01"


# -- argument helpers -------------------------------------------------------------


def parse_taus(values) -> list[float]:
    """Flatten repeated/comma-separated tau values; ``a:b:step`` expands to a grid."""
    if values is None:
        return []
    if isinstance(values, (int, float)):
        values = [str(values)]
    elif isinstance(values, str):
        values = [values]
    out: list[float] = []
    for chunk in values:
        for piece in str(chunk).split(","):
            piece = piece.strip()
            if not piece:
                continue
            if ":" in piece:
                try:
                    start, stop, step = (float(x) for x in piece.split(":"))
                except ValueError:
                    raise ValidationError(f"bad tau range {piece!r}; use start:stop:step") from None
                if step <= 0:
                    raise ValidationError("tau range step must be positive")
                n = int(math.floor((stop - start) / step + 1e-9)) + 1
                out.extend(round(start + j * step, 10) for j in range(n))
            else:
                try:
                    out.append(float(piece))
                except ValueError:
                    raise ValidationError(f"bad tau value {piece!r}") from None
    return out


def resolve_coefs(panel: PanelData, values) -> list[int]:
    """Map coefficient names (CSV headers, ``intercept``) or zero-based indices to indices."""
    k = panel.n_regressors
    if values is None:
        return list(range(k))
    if isinstance(values, (str, int)):
        values = [values]
    names = list(panel.coef_names or ())
    out = []
    for chunk in values:
        for piece in str(chunk).split(","):
            piece = piece.strip()
            if not piece:
                continue
            if piece in names:
                out.append(names.index(piece))
                continue
            try:
                j = int(piece)
            except ValueError:
                raise ValidationError(
                    f"unknown coefficient {piece!r}; available: {', '.join(names) or 'indices 0..' + str(k - 1)}"
                ) from None
            if not 0 <= j < k:
                raise ValidationError(f"coefficient index {j} outside [0, {k})")
            out.append(j)
    return list(dict.fromkeys(out))


def _coef_name(panel: PanelData, j: int) -> str:
    return panel.coef_names[j] if panel.coef_names else str(j)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ValidationError("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in raw.items()}


def _settings(args: argparse.Namespace) -> dict:
    cfg = _load_config(args.config)
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
    merged, explicit = {}, set()
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
        elif key in cfg:
            merged[key] = cfg[key]
        else:
            merged[key] = default
            continue
        explicit.add(key)
    merged["explicit"] = explicit
    return merged


def _opts(s: dict) -> OlsFitOptions:
    return OlsFitOptions(condition_limit=float(s["condition_limit"]), min_dof=int(s["min_dof"]))


def _load(s: dict) -> PanelData:
    if not s["input"]:
        raise ValidationError("--input is required")
    schema = s["schema"]
    if isinstance(schema, str):
        schema = json.loads(schema)
    return load_panel_csv(s["input"], PanelSchema.from_mapping(schema))


def _tie(s: dict) -> str:
    return s["tie"] or "lower"


def _seed(s: dict) -> int:
    if s["seed"] is None:
        seed = fresh_seed()
        log.warning("no --seed given; using generated seed %d", seed)
        return seed
    seed = int(s["seed"])
    if not 0 <= seed < 2**64:
        raise ValidationError("seed must be an unsigned 64-bit integer")
    return seed


def _write_text(path: str, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# -- subcommands ------------------------------------------------------------------


def cmd_estimate(s: dict, out=None) -> int:
    out = out or sys.stdout
    panel = _load(s)
    taus = parse_taus(s["tau"]) or [0.5]
    coefs = resolve_coefs(panel, s["coef"])
    targets = [QuantileTarget(t, j, _tie(s)) for j in coefs for t in taus]
    est = fit_all(panel, _opts(s))
    if s["output"]:
        write_estimates_csv(est, s["output"])
    summary = {
        "n_units": panel.n_units,
        "n_periods": panel.n_periods,
        "coef_names": list(panel.coef_names or ()),
        "tie": _tie(s),
        "estimates": [
            {
                "tau": q.target.tau,
                "coef": _coef_name(panel, q.target.coef_index),
                "coef_index": q.target.coef_index,
                "theta_hat": q.value,
            }
            for q in (aggregate(est, t) for t in targets)
        ],
    }
    text = json.dumps(summary, indent=2) + "\n"
    if s["summary"]:
        _write_text(s["summary"], text)
    out.write(text)
    return EXIT_OK


def cmd_bootstrap(s: dict, out=None) -> int:
    out = out or sys.stdout
    panel = _load(s)
    taus = parse_taus(s["tau"]) or [0.5]
    coefs = resolve_coefs(panel, s["coef"] if s["coef"] is not None else panel.n_regressors - 1)
    if len(taus) != 1 or len(coefs) != 1:
        raise ValidationError("bootstrap takes exactly one --tau and one --coef")
    cfg = BootstrapConfig(
        design=Design.parse(s["design"]),
        n_replicates=int(s["b"]),
        alpha=float(s["alpha"]),
        seed=_seed(s),
        max_redraws=int(s["max_redraws"]),
    )
    run = run_bootstrap(panel, _opts(s), cfg, QuantileTarget(taus[0], coefs[0], _tie(s)), threads=int(s["threads"]))
    doc = run.to_dict()
    if s["null"] is not None:
        doc["null"] = float(s["null"])
        doc["p_value"] = run.p_value(float(s["null"]))
    if s["output"]:
        _write_text(s["output"], json.dumps(doc, indent=2) + "\n")
    level = round(100 * (1 - cfg.alpha), 6)
    out.write(
        f"{cfg.design.value.upper()} tau={run.target.tau:g} coef={doc.get('coef_name', coefs[0])} "
        f"B={cfg.n_replicates} seed={cfg.seed}\n"
        f"estimate  {run.point_estimate:.10g}\n"
        f"{level:g}% CI  [{run.ci_lower:.10g}, {run.ci_upper:.10g}]\n"
    )
    if "p_value" in doc:
        out.write(f"p-value (null={doc['null']:g})  {doc['p_value']:.6g}\n")
    return EXIT_OK


CURVE_COLUMNS = ["tau", "estimate", "sqb_lo", "sqb_hi", "dqb_lo", "dqb_hi"]


def curve_rows(panel: PanelData, opts: OlsFitOptions, coef: int, taus: list[float], bands: bool,
               seed: int, n_replicates: int, alpha: float, max_redraws: int = 10, threads: int = 1,
               tie: str = "lower") -> list[dict]:
    """Quantile curve of one coefficient with optional SQB and DQB bands per tau."""
    est = fit_all(panel, opts)
    curve = quantile_curve(est, coef, taus, tie)
    rows = [{"tau": q.target.tau, "estimate": q.value} for q in curve]
    if bands:
        reps = replicate_quantiles(panel, opts, seed, n_replicates, coef, taus,
                                   (Design.SQB, Design.DQB), max_redraws, threads, tie)
        for j, row in enumerate(rows):
            for d in (Design.SQB, Design.DQB):
                lo, hi = confidence_interval(reps[d][j], row["estimate"], alpha)
                row[f"{d.value}_lo"], row[f"{d.value}_hi"] = lo, hi
    return rows


def _write_curve(path, rows: list[dict]) -> None:
    lines = [",".join(CURVE_COLUMNS)]
    for row in rows:
        lines.append(",".join(format(row[c], ".17g") if c in row else "" for c in CURVE_COLUMNS))
    _write_text(path, "\n".join(lines) + "\n")


def cmd_curve(s: dict, out=None) -> int:
    out = out or sys.stdout
    panel = _load(s)
    taus = parse_taus(s["tau"] if s["tau"] is not None else DEFAULT_CURVE_TAUS)
    coefs = resolve_coefs(panel, s["coef"])
    bands = bool(s["bands"])
    seed = _seed(s) if bands else None
    if not s["output"]:
        raise ValidationError("--output is required for curve")
    base = Path(s["output"])
    opts = _opts(s)
    written = []
    for j in coefs:
        rows = curve_rows(panel, opts, j, taus, bands, seed, int(s["b"]), float(s["alpha"]),
                          int(s["max_redraws"]), int(s["threads"]), _tie(s))
        path = base if len(coefs) == 1 else base.with_name(f"{base.stem}_{_coef_name(panel, j)}{base.suffix or '.csv'}")
        _write_curve(path, rows)
        written.append(str(path))
    meta = {"files": written, "coefs": [_coef_name(panel, j) for j in coefs], "taus": taus,
            "bands": bands, "seed": seed, "B": int(s["b"]), "alpha": float(s["alpha"]), "tie": _tie(s)}
    _write_text(str(base) + ".meta.json", json.dumps(meta, indent=2) + "\n")
    out.write("".join(f"wrote {p}\n" for p in written))
    if bands:
        out.write(f"seed={seed}\n")
    return EXIT_OK


def _parse_cells(value) -> list[tuple[int, int]] | None:
    if value is None:
        return None
    pairs = []
    for piece in str(value).replace(";", ",").split(","):
        piece = piece.strip().lower()
        if not piece:
            continue
        try:
            n, t = piece.split("x")
            pairs.append((int(n), int(t)))
        except ValueError:
            raise ValidationError(f"bad cell {piece!r}; use NxT, e.g. 80x80") from None
    return pairs


def cmd_simulate(s: dict, out=None, list_only: bool = False) -> int:
    out = out or sys.stdout
    from .simulation import list_presets, load_preset, load_simulation_spec

    if list_only:
        for name in list_presets():
            out.write(f"{name}\t{load_preset(name).description}\n")
        return EXIT_OK
    if bool(s["preset"]) == bool(s["spec"]):
        raise ValidationError("simulate needs exactly one of --preset or --spec")
    spec = load_preset(s["preset"]) if s["preset"] else load_simulation_spec(s["spec"])
    explicit = s.get("explicit", set())
    overrides = {}
    if s["n_mc"] is not None:
        overrides["n_mc"] = int(s["n_mc"])
    if "b" in explicit:
        overrides["n_replicates"] = int(s["b"])
    overrides["alpha"] = float(s["alpha"]) if "alpha" in explicit else spec.alpha
    overrides["seed"] = _seed(s)
    if "tie" in explicit:
        overrides["tie"] = s["tie"]
    cells = spec.grid(_parse_cells(s["cells"]), parse_taus(s["tau"]) or None)
    report = spec.run(cells=cells, threads=int(s["threads"]), **overrides)
    if s["output"]:
        if s["layout"] == "table":
            report.write_table_csv(s["output"])
        else:
            report.write_csv(s["output"])
        meta = {"name": spec.name, "seed": overrides["seed"], "n_mc": report.cells[0].n_mc,
                "B": report.cells[0].n_replicates, "alpha": overrides["alpha"],
                "tie": overrides.get("tie", spec.tie)}
        _write_text(str(s["output"]) + ".meta.json", json.dumps(meta, indent=2) + "\n")
    out.write(f"{spec.name}  seed={overrides['seed']}\n")
    out.write(f"{'N':>5} {'T':>5} {'tau':>5} {'method':>6} {'bias':>9} {'coverage':>9} {'se':>7} {'ref':>7}\n")
    for cell in report.cells:
        ref = spec.reference_for(cell.cell.n_units, cell.cell.n_periods, cell.cell.tau) or {}
        for m in cell.cell.methods:
            r = ref.get(m.value)
            out.write(
                f"{cell.cell.n_units:>5} {cell.cell.n_periods:>5} {cell.cell.tau:>5g} {m.value.upper():>6} "
                f"{cell.bias:>9.4f} {cell.coverage(m):>9.4f} {cell.mc_stderr(m):>7.4f} "
                f"{'' if r is None else format(r, '.4f'):>7}\n"
            )
    return EXIT_OK


# -- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of flag values (flags take precedence)")
    common.add_argument("--output", "-o")
    common.add_argument("--tau", action="append", help="quantile level(s); repeat, comma-separate, or a:b:step")
    common.add_argument("--threads", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--b", "-B", dest="b", type=int, help="bootstrap replicates (default 299)")
    common.add_argument("--alpha", type=float)
    common.add_argument("--tie", choices=["lower", "midpoint"],
                        help="reported minimizer when N*tau is an integer (default lower; presets use midpoint)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--input", "-i", help="long-format panel CSV")
    data.add_argument("--schema", help='JSON column mapping, e.g. {"unit": "fund", "time": "month", "y": "ret"}')
    data.add_argument("--coef", action="append", help="coefficient name or zero-based index")
    data.add_argument("--condition-limit", dest="condition_limit", type=float)
    data.add_argument("--min-dof", dest="min_dof", type=int)
    data.add_argument("--max-redraws", dest="max_redraws", type=int)

    parser = argparse.ArgumentParser(prog="hetquant", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("estimate", parents=[common, data], help="unit fits and cross-sectional quantiles")
    p.add_argument("--summary", help="also write the JSON summary here")

    p = sub.add_parser("bootstrap", parents=[common, data], help="SQB/DQB interval for one quantile")
    p.add_argument("--design", choices=["sqb", "dqb"])
    p.add_argument("--null", type=float, help="report the symmetric p-value for this null value")

    p = sub.add_parser("curve", parents=[common, data], help="quantile curve with SQB and DQB bands")
    p.add_argument("--no-bands", dest="bands", action="store_false", default=None)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo bias and coverage")
    p.add_argument("--preset")
    p.add_argument("--spec", help="simulation spec JSON file")
    p.add_argument("--n-mc", dest="n_mc", type=int)
    p.add_argument("--cells", help="restrict to NxT cells, e.g. 80x80,40x40")
    p.add_argument("--layout", choices=["long", "table"])
    p.add_argument("--list", dest="list_presets", action="store_true", help="list shipped presets")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        s = _settings(args)
        if args.subcommand == "estimate":
            return cmd_estimate(s)
        if args.subcommand == "bootstrap":
            return cmd_bootstrap(s)
        if args.subcommand == "curve":
            return cmd_curve(s)
        return cmd_simulate(s, list_only=args.list_presets)
    except (ValidationError, IoError) as exc:
        print(f"hetquant: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"hetquant: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except HetQuantError as exc:
        print(f"hetquant: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
