"""Command-line interface: ``generate``, ``cluster`` and ``sweep``.

Exit status is 0 on success, 1 when a run fails and 2 for usage or
configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import InvalidInputError, check_mode, check_positive_int
from .cluster import DEFAULT_ITERATIONS, kmeans, kmeans_plusplus_init, random_init, softrbf_fit
from .evalharness import (
    PROTOCOLS,
    ExperimentConfig,
    SigmaSchedule,
    bound_report,
    rate_fits,
    run_grid,
    sigma_schedule,
    write_curves_csv,
    write_runs_csv,
)
from .seeding import BIT_GENERATOR, SEED_MIXER, make_rng
from .synthdata import KINDS, GenSpec, generate, load_csv, save_csv

log = logging.getLogger("softvoronoi")

SEED_ENV = "SOFTVORONOI_SEED"
MODES = ("softmax", "entmax15")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad flags or configuration; maps to exit status 2."""


# -- manifests and small writers ---------------------------------------------

def _manifest(command: str, config: dict, started: float, diagnostics: dict | None = None,
              outputs: list[str] | None = None) -> dict:
    return {
        "command": command,
        "config": config,
        "version": __version__,
        "rng": {"bit_generator": BIT_GENERATOR, "seed_mixer": SEED_MIXER},
        "duration_seconds": time.perf_counter() - started,
        "diagnostics": diagnostics or {},
        "outputs": outputs or [],
    }


def _finite_or_none(obj):
    # strict JSON has no NaN or Infinity; they are written as null
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite_or_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite_or_none(v) for v in obj]
    return obj


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_finite_or_none(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _write_table(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


# -- generate ---------------------------------------------------------------

def cmd_generate(args) -> int:
    started = time.perf_counter()
    params = dict(_parse_param(p) for p in args.param)
    try:
        spec = GenSpec(args.kind, n=args.n, seed=args.seed, params=params)
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None
    data = generate(spec)
    out = Path(args.out)
    save_csv(data, out)
    manifest_path = out.with_name(out.name + ".manifest.json")
    _write_json(manifest_path, _manifest("generate", spec.to_dict(), started, outputs=[out.name]))
    log.info("wrote %d points to %s", data.n, out)
    return EXIT_OK


def _parse_param(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise UsageError(f"--param expects key=value, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        raise UsageError(f"--param {key}: value {value!r} is not a number") from None


# -- cluster ----------------------------------------------------------------

def cmd_cluster(args) -> int:
    started = time.perf_counter()
    if args.algo == "softrbf" and args.sigma is None:
        raise UsageError("--algo softrbf requires --sigma")
    if args.sigma is not None and not args.sigma > 0:
        raise UsageError(f"--sigma must be positive, got {args.sigma}")
    data = load_csv(args.data)
    X = data.points
    seed = args.init_seed if args.init_seed is not None else _env_seed()
    seed = 0 if seed is None else seed
    rng = make_rng(seed)
    init = random_init if args.init == "random" else kmeans_plusplus_init
    mu0 = init(X, args.k, rng)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {"data": str(args.data), "algo": args.algo, "k": args.k, "T": args.T,
              "init": args.init, "init_seed": seed}
    coords = [f"x{j}" for j in range(X.shape[1])]
    if args.algo == "kmeans":
        res = kmeans(X, mu0, args.T)
        _write_table(out / "centroids.csv", coords, res.centroids)
        _write_table(out / "labels.csv", ["label"], ([int(v)] for v in res.labels))
        _write_table(out / "loss_history.csv", ["iteration", "loss"], enumerate(res.distortion_history))
        outputs = ["centroids.csv", "labels.csv", "loss_history.csv"]
        diagnostics = {"iterations_run": res.iterations_run, "converged": res.converged}
    else:
        config.update(sigma=args.sigma, mode=args.mode)
        res = softrbf_fit(X, mu0, args.sigma, args.T, args.mode)
        _write_table(out / "centroids.csv", coords, res.centroids)
        _write_table(out / "responsibilities.csv", [f"r{j}" for j in range(args.k)], res.responsibilities)
        _write_table(out / "loss_history.csv", ["iteration", "loss"], enumerate(res.loss_history))
        outputs = ["centroids.csv", "responsibilities.csv", "loss_history.csv"]
        diagnostics = {"zero_mass_events": res.zero_mass_events, "renormalized_rows": res.renormalized_rows,
                       "loss_increases": res.loss_increases}
    _write_json(out / "manifest.json", _manifest("cluster", config, started, diagnostics, outputs))
    log.info("wrote %s results to %s", args.algo, out)
    return EXIT_OK


# -- sweep ------------------------------------------------------------------

SWEEP_FIELDS = ("dataset", "datasets", "n", "data_seed", "k", "T", "M", "schedule",
                "mode", "modes", "protocol", "protocols", "master_seed")

DEFAULT_SWEEP = {
    "datasets": list(KINDS),
    "n": 300,
    "data_seed": 0,
    "k": 3,
    "T": DEFAULT_ITERATIONS,
    "M": 200,
    "schedule": {"sigma_min": 1e-3, "sigma_max": 1e-1, "L": 50},
    "modes": list(MODES),
    "protocols": list(PROTOCOLS),
}


def read_config_file(path) -> dict:
    """Parse a JSON or YAML sweep configuration into a plain dict."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            import yaml

            raw = yaml.safe_load(text)
        else:
            raw = json.loads(text)
    except Exception as exc:
        raise UsageError(f"cannot parse config {path}: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise UsageError(f"config {path} must be a mapping at the top level")
    return raw


def _field_error(name: str, exc: Exception) -> UsageError:
    return UsageError(f"invalid config field '{name}': {exc}")


def _as_list(raw: dict, single: str, plural: str, default):
    if single in raw and plural in raw:
        raise UsageError(f"config sets both '{single}' and '{plural}'")
    if plural in raw:
        value = raw[plural]
        if not isinstance(value, list) or not value:
            raise UsageError(f"invalid config field '{plural}': expected a non-empty list")
        return plural, value
    if single in raw:
        return single, [raw[single]]
    return plural, default


def _dataset_spec(entry, n, data_seed, field_name) -> GenSpec:
    try:
        if isinstance(entry, str):
            return GenSpec(entry, n=n, seed=data_seed)
        if isinstance(entry, dict):
            entry = {"n": n, "seed": data_seed, **entry}
            unknown = set(entry) - {"kind", "n", "seed", "params"}
            if unknown:
                raise InvalidInputError(f"unknown keys {sorted(unknown)}")
            return GenSpec(**entry)
    except (InvalidInputError, TypeError) as exc:
        raise _field_error(field_name, exc) from None
    raise UsageError(f"invalid config field '{field_name}': expected a kind name or a mapping")


def _schedule(value) -> SigmaSchedule:
    try:
        if isinstance(value, dict):
            unknown = set(value) - {"sigma_min", "sigma_max", "L"}
            if unknown:
                raise InvalidInputError(f"unknown keys {sorted(unknown)}")
            return sigma_schedule(**value)
        if isinstance(value, list):
            return SigmaSchedule(tuple(value))
    except (InvalidInputError, TypeError, ValueError) as exc:
        raise _field_error("schedule", exc) from None
    raise UsageError("invalid config field 'schedule': expected a list of sigmas or {sigma_min, sigma_max, L}")


_MINIMUMS = {"data_seed": 0, "master_seed": 0, "k": 2}


def build_sweep(raw: dict, env_seed: int | None = None) -> tuple[list[ExperimentConfig], dict]:
    """Expand a sweep configuration into experiment configs plus its normalized form.

    Every (dataset, mode, protocol) combination becomes one config; the
    normalized dict lists all fields explicitly and rebuilds the same sweep.
    """
    unknown = [key for key in raw if key not in SWEEP_FIELDS]
    if unknown:
        raise UsageError(f"unknown config field '{unknown[0]}'")
    merged = {**{k: v for k, v in DEFAULT_SWEEP.items() if k not in ("datasets", "modes", "protocols")}, **raw}
    ds_field, datasets = _as_list(raw, "dataset", "datasets", DEFAULT_SWEEP["datasets"])
    mode_field, modes = _as_list(raw, "mode", "modes", DEFAULT_SWEEP["modes"])
    proto_field, protocols = _as_list(raw, "protocol", "protocols", DEFAULT_SWEEP["protocols"])
    master_seed = merged.get("master_seed", env_seed if env_seed is not None else 0)
    ints = {}
    for name in ("n", "data_seed", "k", "T", "M", "master_seed"):
        value = master_seed if name == "master_seed" else merged[name]
        try:
            ints[name] = check_positive_int(value, name, minimum=_MINIMUMS.get(name, 1))
        except (InvalidInputError, TypeError, ValueError) as exc:
            raise _field_error(name, exc) from None
    for mode in modes:
        try:
            check_mode(mode)
        except InvalidInputError as exc:
            raise _field_error(mode_field, exc) from None
    for protocol in protocols:
        if protocol not in PROTOCOLS:
            raise UsageError(f"invalid config field '{proto_field}': protocol must be one of {PROTOCOLS}, "
                             f"got {protocol!r}")
    specs = [_dataset_spec(entry, ints["n"], ints["data_seed"], ds_field) for entry in datasets]
    schedule = _schedule(merged["schedule"])
    configs = []
    for spec in specs:
        for mode in modes:
            for protocol in protocols:
                try:
                    configs.append(ExperimentConfig(spec, k=ints["k"], T=ints["T"], M=ints["M"],
                                                    schedule=schedule, mode=mode, protocol=protocol,
                                                    master_seed=ints["master_seed"]))
                except InvalidInputError as exc:
                    raise UsageError(f"invalid config: {exc}") from None
    normalized = {
        "datasets": [{"kind": s.kind, "n": s.n, "seed": s.seed, "params": dict(s.params)} for s in specs],
        "k": ints["k"],
        "T": ints["T"],
        "M": ints["M"],
        "schedule": list(schedule.values),
        "modes": list(modes),
        "protocols": list(protocols),
        "master_seed": ints["master_seed"],
    }
    return configs, normalized


def _sweep_overrides(args) -> dict:
    out = {}
    for name in ("k", "T", "M", "n", "master_seed", "data_seed"):
        value = getattr(args, name)
        if value is not None:
            out[name] = value
    for name in ("datasets", "modes", "protocols"):
        value = getattr(args, name)
        if value is not None:
            out[name] = value
    return out


def _apply_overrides(raw: dict, overrides: dict) -> dict:
    raw = dict(raw)
    for plural, single in (("datasets", "dataset"), ("modes", "mode"), ("protocols", "protocol")):
        if plural in overrides:
            raw.pop(single, None)
    raw.update(overrides)
    return raw


def cmd_sweep(args) -> int:
    started = time.perf_counter()
    raw = read_config_file(args.config) if args.config else {}
    raw = _apply_overrides(raw, _sweep_overrides(args))
    configs, normalized = build_sweep(raw, _env_seed())
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    curves = run_grid(configs, workers=args.workers)
    outputs = []
    groups: dict[tuple[str, str], list] = {}
    for curve in curves:
        groups.setdefault((curve.dataset, curve.mode), []).append(curve)
    for (dataset, mode), group in groups.items():
        name = f"curve_{dataset}_{mode}.csv"
        write_curves_csv(group, out / name)
        outputs.append(name)
    write_runs_csv(curves, out / "runs.csv")
    fits = []
    for curve in curves:
        for fit in rate_fits(curve):
            fits.append({"dataset": curve.dataset, "mode": curve.mode, **fit, "spearman": curve.spearman()})
    _write_json(out / "fits.json", fits)
    bounds = []
    seen = set()
    for cfg in configs:
        key = (json.dumps(cfg.dataset.to_dict(), sort_keys=True), cfg.mode)
        if key not in seen:
            seen.add(key)
            bounds.append(bound_report(cfg))
    _write_json(out / "bounds.json", bounds)
    outputs += ["runs.csv", "fits.json", "bounds.json"]

    diagnostics = {f"{c.protocol}/{c.dataset}/{c.mode}": c.diagnostics for c in curves}
    _write_json(out / "manifest.json", _manifest("sweep", normalized, started, diagnostics, outputs))
    log.info("wrote %d curves to %s", len(curves), out)
    return EXIT_OK


# -- entry point ------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="softvoronoi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a benchmark dataset as CSV")
    g.add_argument("--kind", required=True, choices=KINDS)
    g.add_argument("--n", type=int, default=300)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="generator parameter, e.g. noise=0.1 (repeatable)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("cluster", help="run K-Means or SoftRBF on a CSV dataset")
    c.add_argument("--data", required=True)
    c.add_argument("--algo", required=True, choices=("kmeans", "softrbf"))
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--sigma", type=float)
    c.add_argument("--mode", choices=MODES, default="entmax15")
    c.add_argument("--T", type=int, default=DEFAULT_ITERATIONS)
    c.add_argument("--init", choices=("random", "k-means++"), default="random")
    c.add_argument("--init-seed", "--seed", dest="init_seed", type=int,
                   help=f"initialization seed (default: ${SEED_ENV}, else 0)")
    c.add_argument("--out", required=True, help="output directory")
    c.set_defaults(func=cmd_cluster)

    s = sub.add_parser("sweep", help="run convergence curves over a temperature schedule")
    s.add_argument("config", nargs="?", help="JSON or YAML config; flags override its values")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--datasets", nargs="+", choices=KINDS)
    s.add_argument("--modes", nargs="+", choices=MODES)
    s.add_argument("--protocols", nargs="+", choices=PROTOCOLS)
    s.add_argument("--n", type=int)
    s.add_argument("--data-seed", type=int)
    s.add_argument("--k", type=int)
    s.add_argument("--T", type=int)
    s.add_argument("--M", type=int)
    s.add_argument("--master-seed", type=int, help=f"default: config, then ${SEED_ENV}, then 0")
    s.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "cluster" and args.k < 1:
            raise UsageError(f"--k must be >= 1, got {args.k}")
        return args.func(args)
    except UsageError as exc:
        print(f"softvoronoi {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvalidInputError, OSError) as exc:
        print(f"softvoronoi {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
