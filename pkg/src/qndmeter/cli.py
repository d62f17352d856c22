"""Command-line entry point.

Settings resolve as command-line flags over ``--config`` JSON file values
over built-in defaults. Exit codes: 0 success, 2 usage, 3 bad input,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import channels, dispersive, estimator, metrics
from .errors import InputError, NumericalError, ParseError, UsageError

log = logging.getLogger("qndmeter")

COMMANDS = ("metrics", "simulate", "sweep", "validate", "fixtures", "estimate")
SIM_FLOAT_FIELDS = ("g", "delta_over_g", "kappa", "gamma", "gamma_phi", "omega_drive", "t_meas", "t_reset", "dt_over_invg", "dt")
SIM_INT_FIELDS = ("n_fock", "n_traj")
RUN_KEYS = {"kraus", "counts", "out", "format", "seed", "grid", "repeats", "threads", "bootstrap"}
ALLOWED_KEYS = RUN_KEYS | set(SIM_FLOAT_FIELDS) | set(SIM_INT_FIELDS)
OPTIONAL_SIM_FIELDS = ("kappa", "gamma", "gamma_phi", "omega_drive", "t_meas", "dt")


@dataclass
class RunConfig:
    command: str
    kraus: str | None = None
    counts: str | None = None
    out: str | None = None
    format: str = "json"
    seed: int = 0
    sim: dict = field(default_factory=dict)
    grid: tuple = dispersive.DEFAULT_GRID
    repeats: int = 5
    threads: int | None = None
    bootstrap: int = 0

    def sim_config(self) -> dispersive.SimConfig:
        return dispersive.SimConfig(**self.sim, seed=self.seed)

    def to_dict(self) -> dict:
        """Settings that determine the result; the output location is left out."""
        d = dataclasses.asdict(self)
        del d["out"]
        d["grid"] = list(self.grid)
        if self.command in ("simulate", "sweep"):
            d["sim"] = self.sim_config().to_dict()
        else:
            del d["sim"], d["grid"], d["repeats"], d["threads"]
        return d


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file of settings (flag values take precedence)")
    common.add_argument("--out", help="output path (directory for 'fixtures'); stdout if omitted")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    sim = _Parser(add_help=False)
    for name in SIM_FLOAT_FIELDS:
        if name == "dt":
            continue
        flags = ["--" + name.replace("_", "-")]
        if name == "dt_over_invg":
            flags.append("--dt")
        sim.add_argument(*flags, dest=name, type=float)
    for name in SIM_INT_FIELDS:
        sim.add_argument("--" + name.replace("_", "-"), dest=name, type=int)

    parser = _Parser(prog="qndmeter", description="Measurement-quality metrics and dispersive readout simulation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("metrics", parents=[common], help="full metric report for a Kraus file")
    p.add_argument("--kraus")
    p = sub.add_parser("validate", parents=[common], help="completeness check of a Kraus file")
    p.add_argument("--kraus")
    sub.add_parser("fixtures", parents=[common], help="write the named fixture Kraus files")
    p = sub.add_parser("estimate", parents=[common], help="plug-in metrics from a counts file")
    p.add_argument("--counts")
    p.add_argument("--bootstrap", type=int, help="number of bootstrap resamples (0 disables)")
    sub.add_parser("simulate", parents=[common, sim], help="two-measurement experiment for both basis states")
    p = sub.add_parser("sweep", parents=[common, sim], help="detuning sweep written as CSV")
    p.add_argument("--grid", type=_float_list, help="comma-separated delta/g values")
    p.add_argument("--repeats", type=int)
    p.add_argument("--threads", type=int, help="worker threads (overrides QNDMETER_THREADS)")
    return parser


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from exc


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _check_value(key: str, value):
    """Type-check one config-file value against its field domain."""
    if key in SIM_FLOAT_FIELDS:
        if value is None and key in OPTIONAL_SIM_FIELDS:
            return None
        if not _is_number(value):
            raise ParseError(key, f"expected a number, got {value!r}")
        return float(value)
    if key in SIM_INT_FIELDS or key in ("seed", "repeats", "threads", "bootstrap"):
        if key == "threads" and value is None:
            return None
        if not _is_int(value):
            raise ParseError(key, f"expected an integer, got {value!r}")
        return value
    if key == "grid":
        if not isinstance(value, list) or not all(_is_number(x) for x in value):
            raise ParseError(key, "expected a list of numbers")
        return tuple(float(x) for x in value)
    if key == "format":
        if value not in ("csv", "json"):
            raise ParseError(key, f"expected 'csv' or 'json', got {value!r}")
        return value
    if not isinstance(value, str):
        raise ParseError(key, f"expected a string, got {value!r}")
    return value


def _read_config_file(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise InputError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(path, f"invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ParseError(path, "config file must hold a JSON object")
    for key in sorted(doc):
        if key not in ALLOWED_KEYS:
            raise ParseError(key, "unknown configuration key")
    return {k: _check_value(k, v) for k, v in doc.items()}


def parse_config(argv=None) -> RunConfig:
    """Parse ``argv`` (and the optional ``--config`` file) into a :class:`RunConfig`."""
    args = _build_parser().parse_args(argv)
    values = _read_config_file(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key in ALLOWED_KEYS and value is not None:
            values[key] = value
    sim = {k: values.pop(k) for k in list(values) if k in SIM_FLOAT_FIELDS or k in SIM_INT_FIELDS}
    if sim and args.command not in ("simulate", "sweep"):
        raise ParseError(sorted(sim)[0], f"not a setting of '{args.command}'")
    cfg = RunConfig(command=args.command, sim=sim, **values)
    if args.format is None and "format" not in values:
        cfg.format = "csv" if cfg.command == "sweep" else "json"
    if cfg.format == "csv" and cfg.command != "sweep":
        raise UsageError(f"'{cfg.command}' only emits JSON")
    if cfg.command in ("metrics", "validate") and not cfg.kraus:
        raise UsageError(f"'{cfg.command}' needs --kraus")
    if cfg.command == "estimate" and not cfg.counts:
        raise UsageError("'estimate' needs --counts")
    for path in (cfg.kraus, cfg.counts):
        if path and not Path(path).is_file():
            raise InputError(f"file not found: {path}")
    if cfg.repeats < 1:
        raise UsageError("--repeats must be at least 1")
    if cfg.command in ("simulate", "sweep"):
        cfg.sim_config()  # startup validation, including the step bound
    return cfg


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.out:
        Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
        with open(cfg.out, "w", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _envelope(cfg: RunConfig, result: dict) -> dict:
    return {"command": cfg.command, "config": cfg.to_dict(), "seed": cfg.seed, "result": result}


def _finite(obj):
    """Replace NaN with None so the output stays strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _cmd_metrics(cfg: RunConfig) -> int:
    k = channels.read_kraus_json(cfg.kraus)
    report = metrics.full_report(k)
    checks = [dataclasses.asdict(c) for c in metrics.relationship_check(report)]
    _emit(cfg, _dumps(_envelope(cfg, {"report": report.to_dict(), "relationships": checks})))
    return 0


def _cmd_validate(cfg: RunConfig) -> int:
    try:
        doc = json.loads(Path(cfg.kraus).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{cfg.kraus}: invalid JSON ({exc})") from exc
    ops, _, _ = channels.kraus_operators_from_dict(doc)
    report = channels.validate_kraus(ops)
    _emit(cfg, _dumps(_envelope(cfg, report.to_dict())))
    return 0 if report.passed else 3


def fixture_catalogue(seed: int) -> dict:
    """File stem -> (KrausSet, parameters) for every written fixture."""
    pi = math.pi
    out = {
        "projective_2": (channels.projective(2), {"n": 2}),
        "projective_3": (channels.projective(3), {"n": 3}),
        "swap": (channels.swap(), {}),
        "decay_pi4": (channels.decay(pi / 4), {"theta": pi / 4}),
        "decay_pi2": (channels.decay(pi / 2), {"theta": pi / 2}),
    }
    for name, theta in (("pi6", pi / 6), ("pi4", pi / 4), ("pi3", pi / 3)):
        out[f"cos_sin_pair_{name}"] = (channels.cos_sin_pair(theta), {"theta": theta})
    out["random_kraus_3x4"] = (channels.random_kraus(3, 4, seed), {"n": 3, "count": 4, "seed": seed})
    out["random_diagonal_kraus_3x3"] = (channels.random_diagonal_kraus(3, 3, seed), {"n": 3, "count": 3, "seed": seed})
    het = channels.heterodyne_kraus_family(2.0, -2.0)
    out["heterodyne_binned_2"] = (het.binned, {"alpha0": 2.0, "alpha1": -2.0, "raw_residual": het.raw_residual})
    return out


def _cmd_fixtures(cfg: RunConfig) -> int:
    outdir = Path(cfg.out or "fixtures")
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for stem, (k, params) in fixture_catalogue(cfg.seed).items():
        path = outdir / f"{stem}.json"
        channels.write_kraus_json(k, path, {"fixture": stem, "params": params, "seed": cfg.seed})
        written.append(str(path))
    sys.stdout.write(_dumps(_envelope(cfg, {"written": written})))
    return 0


def _cmd_estimate(cfg: RunConfig) -> int:
    counts = estimator.read_counts_json(cfg.counts)
    result = {"metrics": estimator.empirical_metrics(counts).to_dict(), "shots": {str(k): counts.shots(k) for k in counts.counts}}
    if cfg.bootstrap:
        ci = estimator.bootstrap_ci(counts, resamples=cfg.bootstrap, seed=cfg.seed)
        result["bootstrap"] = {k: list(v) for k, v in ci.items()}
    _emit(cfg, _dumps(_envelope(cfg, result)))
    return 0


def _cmd_simulate(cfg: RunConfig) -> int:
    sim = cfg.sim_config()
    side = dispersive.calibrate_zero_side(sim)
    runs = [dispersive.run_two_measurement_experiment(sim, b, zero_side=side, sample_every=0) for b in (0, 1)]
    counts = dispersive.counts_from_experiments(runs)
    m = estimator.empirical_metrics(counts)
    diagnostics = {
        "zero_side": side,
        "photons_after_reset": {str(r.basis): r.photons_after_reset for r in runs},
        "mean_iq": {str(r.basis): r.iq.mean(axis=0).tolist() for r in runs},
        "windows": [list(w) for w in runs[0].windows],
        "metrics": m.to_dict(),
    }
    doc = counts.to_dict()
    doc.update(_envelope(cfg, {"diagnostics": diagnostics}))
    _emit(cfg, _dumps(_finite(doc)))
    return 0


def _cmd_sweep(cfg: RunConfig) -> int:
    sim = cfg.sim_config()
    progress = (lambda task: log.info("done grid=%s repeat=%s basis=%s", *task)) if log.isEnabledFor(logging.INFO) else None
    result = dispersive.run_detuning_sweep(sim, cfg.grid, cfg.repeats, threads=cfg.threads, progress=progress)
    if cfg.format == "csv":
        provenance = {"config": json.dumps(cfg.to_dict(), sort_keys=True), "seed": cfg.seed}
        _emit(cfg, dispersive.sweep_csv(result, provenance))
    else:
        rows = [dataclasses.asdict(r) for r in result.rows]
        _emit(cfg, _dumps(_envelope(cfg, {"rows": rows, "per_repeat": result.per_repeat.tolist()})))
    return 0


HANDLERS = {
    "metrics": _cmd_metrics,
    "validate": _cmd_validate,
    "fixtures": _cmd_fixtures,
    "estimate": _cmd_estimate,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
}


def execute(cfg: RunConfig) -> int:
    return HANDLERS[cfg.command](cfg)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    logging.basicConfig(level=logging.INFO if ("-v" in argv or "--verbose" in argv) else logging.WARNING, format="%(message)s")
    try:
        return execute(parse_config(argv))
    except UsageError as exc:
        print(f"qndmeter: usage error: {exc}", file=sys.stderr)
        return 2
    except InputError as exc:
        print(f"qndmeter: input error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"qndmeter: numerical error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
