"""Command-line front end: ``spatialdct {run,sweep,allocate,validate}``.

Configs are JSON with angles in degrees. A config holds a ``mode`` and the
section that mode needs::

    {"mode": "sweep", "scenario": {...}, "sweep": {"axis": "M", "values": [4, 8]}}

Modes: ``sweep``, ``profile``, ``modified_profile``, ``power_curve`` and
``allocate``. Presets ``fig1`` ... ``fig9`` ship with the package.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import io
import json
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError, SpatialDctError
from .estimators import Kind

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
PRESETS = tuple(f"fig{i}" for i in range(1, 10))


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config handling

def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise UsageError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("spatialdct.presets").joinpath(f"{name}.json").read_text("utf-8")
    return json.loads(text)


def load_config(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    text = p.read_text("utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def resolve(args) -> tuple[dict, str]:
    if args.config and args.preset:
        raise UsageError("give either --config or --preset, not both")
    if args.config:
        return load_config(args.config), args.config
    if args.preset:
        return load_preset(args.preset), f"preset:{args.preset}"
    raise UsageError("one of --config or --preset is required")


def apply_overrides(doc: dict, args) -> dict:
    doc = json.loads(json.dumps(doc))
    section = "allocation" if doc.get("mode") == "allocate" else "scenario"
    # profile-style modes have no seed, trials or estimators
    target = doc.setdefault(section, {}) if doc.get("mode", "sweep") in ("sweep", "allocate") else None
    if target is not None:
        if args.seed is not None:
            target["seed"] = args.seed
        if args.trials is not None:
            target["trials"] = args.trials
        if getattr(args, "eta", None) is not None and section == "scenario":
            target["eta"] = args.eta
        if getattr(args, "estimators", None):
            names = [s.strip() for s in args.estimators.split(",") if s.strip()]
            for n in names:
                try:
                    Kind(n)
                except ValueError:
                    raise UsageError(f"unknown estimator {n!r}") from None
            target["estimators"] = names
    if getattr(args, "axis", None):
        doc.setdefault("sweep", {})["axis"] = args.axis
    if getattr(args, "values", None):
        try:
            doc.setdefault("sweep", {})["values"] = [float(v) for v in args.values.split(",")]
        except ValueError:
            raise UsageError(f"--values must be a comma list of numbers, got {args.values!r}") from None
    return doc


# ---------------------------------------------------------------- output

def manifest_hash(doc: dict, command: str) -> str:
    body = json.dumps({"command": command, "config": doc, "version": __version__},
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(body.encode()).hexdigest()[:16]


def fmt(x, places=4) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.{places}f}"


def write_outputs(header: list, rows: list, doc: dict, source: str, command: str, out,
                  elapsed: float):
    digest = manifest_hash(doc, command)
    buf = io.StringIO()
    buf.write(f"# spatialdct {__version__}\n# manifest {digest}\n# source {source}\n")
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(r) + "\n")
    text = buf.getvalue()
    if out is None:
        sys.stdout.write(text)
        return
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8", newline="\n")
    manifest = {
        "manifest": digest,
        "command": command,
        "source": source,
        "config": doc,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "elapsed_seconds": round(elapsed, 3),
        "outputs": [str(out)],
    }
    out.with_suffix(out.suffix + ".manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- modes

def _sweep_table(doc, workers):
    from .sim import ScenarioConfig, sweep

    cfg = ScenarioConfig.from_dict(doc.get("scenario", {}))
    section = doc.get("sweep")
    if not section or "axis" not in section or "values" not in section:
        raise ConfigurationError("needs 'axis' and 'values'", "sweep")
    res = sweep(cfg, section["axis"], section["values"], workers)
    header = [res.axis]
    for k in res.kinds:
        header += [f"{k}_nmse_db", f"{k}_se_db"] + ([f"{k}_eta"] if k.uses_mask else [])
    rows = []
    for v, cols in res.rows():
        row = [fmt(v)]
        for k in res.kinds:
            db, se, eta = cols[k]
            row += [fmt(db), fmt(se)] + ([fmt(eta)] if k.uses_mask else [])
        rows.append(row)
    return header, rows


def _profile_table(doc, workers):
    from .dct import dct_basis, energy_profile
    from .model import exponential_correlation

    section = doc.get("profile", {})
    M, rho = int(section.get("M", 32)), float(section.get("rho", 0.9))
    p = energy_profile(exponential_correlation(M, rho), dct_basis(M))
    frac = p / p.sum()
    cum = np.cumsum(frac)
    return ["k", "power", "fraction", "cumulative"], [
        [str(k), fmt(p[k], 6), fmt(frac[k], 6), fmt(cum[k], 6)] for k in range(M)]


def _modified_profile_table(doc, workers):
    from .sim import modified_profiles, station_covariances

    section = doc.get("profile", {})
    covs = station_covariances(int(section.get("M", 32)), section.get("theta_start", [0, 15, 35]),
                               float(section.get("span", 20)), section.get("correlation", "uniform"))
    prof = modified_profiles(covs, int(section.get("power_index", 1)))
    names = list(prof)
    M = len(prof[names[0]])
    return ["k"] + names, [[str(k)] + [fmt(prof[n][k], 6) for n in names] for k in range(M)]


def _power_curve_table(doc, workers):
    from .sim import power_index_curve, station_covariances

    section = doc.get("power", {})
    noise = float(section.get("sigma2", 1.0)) / 10 ** (float(section.get("P_dB", 0.0)) / 10)
    indices = [int(i) for i in section.get("indices", [0, 1, 2])]
    scenarios = section.get("scenarios", [])
    if not scenarios:
        raise ConfigurationError("needs at least one scenario", "power.scenarios")
    curves = [power_index_curve(station_covariances(int(section.get("M", 16)), s,
                                                    float(section.get("span", 20))), indices, noise)
              for s in scenarios]
    header = ["power_index"] + [f"scenario{j + 1}_nmse_db" for j in range(len(scenarios))]
    rows = [[str(i)] + [fmt(10 * np.log10(c[n])) for c in curves] for n, i in enumerate(indices)]
    return header, rows


def _allocate_table(doc, workers):
    from .sim import AllocationConfig, allocation_study

    cfg = AllocationConfig.from_dict(doc.get("allocation", {}))
    st = allocation_study(cfg)
    header = ["scheme", "sequence", "users", "roles", "metric"]
    rows = []
    for name, state in (("A5", st.greedy_be), ("A6", st.greedy_dls)):
        for i, g in enumerate(state.groups):
            roles = "|".join(str(state.estimator_choice.get(u, Kind.LS)) for u in g)
            rows.append([name, str(i), "|".join(map(str, g)), roles,
                         fmt(st.group_metrics[name][i], 6)])
    for k in st.greedy:
        rows.append([f"nmse:{k}", "", "", "greedy_db|random_db",
                     f"{fmt(10 * np.log10(st.greedy[k]))}|{fmt(10 * np.log10(st.random_mean(k)))}"])
    return header, rows


MODES = {
    "sweep": _sweep_table,
    "profile": _profile_table,
    "modified_profile": _modified_profile_table,
    "power_curve": _power_curve_table,
    "allocate": _allocate_table,
}


def execute(doc: dict, workers: int = 1):
    mode = doc.get("mode", "sweep")
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}; expected one of {sorted(MODES)}", "mode")
    return MODES[mode](doc, workers)


# ---------------------------------------------------------------- commands

def cmd_run(args, command="run") -> int:
    doc, source = resolve(args)
    doc = apply_overrides(doc, args)
    if command == "sweep" and doc.get("mode", "sweep") != "sweep":
        raise UsageError("the sweep command needs a config in 'sweep' mode")
    if command == "allocate" and doc.get("mode") != "allocate":
        raise UsageError("the allocate command needs a config in 'allocate' mode")
    t0 = time.perf_counter()
    header, rows = execute(doc, args.workers)
    write_outputs(header, rows, doc, source, command, args.out, time.perf_counter() - t0)
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import run_checks

    results = run_checks(force_fail=args.force_fail)
    width = max(len(n) for n, _, _ in results)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    failed = [n for n, ok, _ in results if not ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        print("failed: " + ", ".join(failed))
        return EXIT_FAIL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spatialdct", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, eta=True):
        p.add_argument("--config", help="JSON scenario file")
        p.add_argument("--preset", help=f"built-in preset ({', '.join(PRESETS)})")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--out", help="CSV path (stdout if omitted); a manifest is written beside it")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--estimators", help="comma list, e.g. LS,BE,DLS")
        if eta:
            p.add_argument("--eta", type=float, help="fixed compression ratio instead of grid search")

    common(sub.add_parser("run", help="execute a config or preset"))
    p = sub.add_parser("sweep", help="run a parameter sweep")
    common(p)
    p.add_argument("--axis", help="M, eta, K, overlap, uncertainty or power_index")
    p.add_argument("--values", help="comma list of axis values")
    common(sub.add_parser("allocate", help="greedy pilot allocation study"), eta=False)
    p = sub.add_parser("validate", help="run the built-in oracle checks")
    p.add_argument("--force-fail", metavar="CHECK", help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        if getattr(args, "workers", 1) < 1:
            raise UsageError("--workers must be >= 1")
        return cmd_run(args, args.command)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigurationError, SpatialDctError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
