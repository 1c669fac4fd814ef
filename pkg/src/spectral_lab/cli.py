"""Command-line front end: ``spectral-lab <subcommand>``.

Exit codes: 0 success, 1 usage or bad input, 2 violated mathematical
precondition (or a numerical method that gave up), 3 too many failed trials.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import uuid
import warnings
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, diagnostics, ensemble, experiments
from .errors import (
    MathPreconditionError,
    NoConvergence,
    ParseError,
    SchemaError,
    SpectralLabError,
    TrialFailureBudgetExceeded,
    ValidationError,
)
from .experiments import ExperimentConfig, dumps17
from .freeconv import density_fc, edge_constants
from .measure import build_measure, sample_sorted

EXIT_OK, EXIT_USAGE, EXIT_MATH, EXIT_BUDGET = 0, 1, 2, 3

DEFAULTS = {"epsilon": 0.05, "n0": 5, "symmetry": "real", "d": [1.0]}
REQUIRED = ("a", "b", "lambda", "n", "trials", "mode", "master_seed")
MEASURE_KEYS = ("a", "b", "d")
KNOWN = set(REQUIRED) | set(DEFAULTS) | {"measure"}
INT_KEYS = ("n", "trials", "master_seed", "n0")
FLOAT_KEYS = ("a", "b", "lambda", "epsilon")


# --------------------------------------------------------------------------- config


def _key_line(text: str, key: str) -> int | None:
    needle = json.dumps(key)
    for lineno, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return lineno
    return None


def _where(path, text, key) -> str:
    line = _key_line(text, key)
    return f"{path}:{line}" if line else str(path)


def config_from_mapping(data: dict, source: str = "<config>", text: str = "") -> ExperimentConfig:
    """Validated ExperimentConfig from a flat (or measure-nested) JSON object."""
    if not isinstance(data, dict):
        raise ParseError(f"{source}: top level must be a JSON object")
    flat = dict(data)
    nested = flat.pop("measure", None)
    if nested is not None:
        if not isinstance(nested, dict):
            raise ParseError(f"{_where(source, text, 'measure')}: 'measure' must be an object")
        for key, val in nested.items():
            if key not in MEASURE_KEYS:
                raise ParseError(f"{_where(source, text, key)}: unknown key {key!r} in 'measure'")
            if key in flat:
                raise ParseError(f"{_where(source, text, key)}: {key!r} given twice")
            flat[key] = val
    for key in flat:
        if key not in KNOWN:
            raise ParseError(f"{_where(source, text, key)}: unknown key {key!r}")
    missing = [k for k in REQUIRED if k not in flat]
    if missing:
        raise ParseError(f"{source}: missing required keys {missing}")
    for key, val in DEFAULTS.items():
        flat.setdefault(key, val)
    for key in INT_KEYS:
        val = flat[key]
        if isinstance(val, bool) or not isinstance(val, int):
            raise ParseError(f"{_where(source, text, key)}: {key!r} must be an integer, got {val!r}")
    for key in FLOAT_KEYS:
        val = flat[key]
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ParseError(f"{_where(source, text, key)}: {key!r} must be a number, got {val!r}")
    if not isinstance(flat["d"], list) or not all(
        isinstance(c, (int, float)) and not isinstance(c, bool) for c in flat["d"]
    ):
        raise ParseError(f"{_where(source, text, 'd')}: 'd' must be a list of numbers")
    for key in ("mode", "symmetry"):
        if not isinstance(flat[key], str):
            raise ParseError(f"{_where(source, text, key)}: {key!r} must be a string")
    cfg = ExperimentConfig(
        a=float(flat["a"]),
        b=float(flat["b"]),
        lam=float(flat["lambda"]),
        n=flat["n"],
        trials=flat["trials"],
        mode=flat["mode"],
        master_seed=flat["master_seed"],
        d=tuple(float(c) for c in flat["d"]),
        n0=flat["n0"],
        symmetry=flat["symmetry"],
        epsilon=float(flat["epsilon"]),
    )
    return cfg.validate()


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return config_from_mapping(data, str(path), text)


def serialize_config(cfg: ExperimentConfig) -> str:
    return dumps17({
        "a": cfg.a, "b": cfg.b, "d": list(cfg.d), "lambda": cfg.lam, "n": cfg.n,
        "trials": cfg.trials, "mode": cfg.mode, "master_seed": cfg.master_seed,
        "n0": cfg.n0, "symmetry": cfg.symmetry, "epsilon": cfg.epsilon,
    })


# --------------------------------------------------------------------------- manifest


@dataclass
class RunManifest:
    run_id: str
    config: dict
    version: str
    started: str
    finished: str | None = None
    outputs: dict = field(default_factory=dict)
    status: str = "running"

    def write(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(asdict(self), indent=2) + "\n")

    @classmethod
    def read(cls, path: Path) -> "RunManifest":
        return cls(**json.loads(path.read_text()))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# --------------------------------------------------------------------------- commands


def _require_config(args) -> ExperimentConfig:
    if not args.config:
        raise ParseError("this subcommand needs --config")
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = ExperimentConfig(**{**asdict(cfg), "master_seed": args.seed}).validate()
    return cfg


def _measure_params(args):
    if args.config:
        path = Path(args.config)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot load {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ParseError(f"{path}: top level must be a JSON object")
        merged = {**data, **data.get("measure", {})}
        a, b, lam = merged.get("a"), merged.get("b"), merged.get("lambda")
        d = merged.get("d", [1.0])
    else:
        a, b, lam, d = args.a, args.b, args.lam, args.d or [1.0]
    for name, val in (("a", a), ("b", b), ("lambda", lam)):
        if val is None:
            raise ParseError(f"missing {name!r}: give --config or --{'lambda' if name == 'lambda' else name}")
    return float(a), float(b), [float(c) for c in d], float(lam)


EDGE_KEYS = {
    "lam": "lambda", "lambda_plus": "lambda_plus", "lambda_minus": "lambda_minus",
    "tau_plus": "tau_plus", "tau_minus": "tau_minus", "l_plus": "L_plus", "l_minus": "L_minus",
    "regime": "regime", "regime_lower": "regime_lower", "w_plus": "w_plus", "w_minus": "w_minus",
    "m_plus": "m_fc_at_L_plus", "c_lambda": "C_lambda", "c_mu": "C_mu", "beta_exp": "beta",
    "frak_b": "frak_b",
}


def cmd_edge(args, out) -> int:
    a, b, d, lam = _measure_params(args)
    ec = edge_constants(build_measure(a, b, d), lam)
    flat = {EDGE_KEYS[k]: v for k, v in ec.to_dict().items()}
    for key, val in flat.items():
        text = dumps17(val) if not isinstance(val, str) else val
        out.write(f"{key}={text}\n")
    blob = dumps17(flat)
    out.write(blob + "\n")
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        (Path(args.out_dir) / "edge.json").write_text(blob + "\n")
    return EXIT_OK


def cmd_density(args, out) -> int:
    a, b, d, lam = _measure_params(args)
    if args.points < 1:
        raise ParseError("--points must be positive")
    m = build_measure(a, b, d)
    es = np.linspace(args.lo, args.hi, args.points)
    try:
        vals = list(density_fc(m, lam, es))
    except (NoConvergence, ArithmeticError):
        vals = []
        for e in es:
            try:
                vals.append(density_fc(m, lam, e))
            except (NoConvergence, ArithmeticError) as exc:
                print(f"warning: E={e:.17g}: {exc}", file=sys.stderr)
                vals.append(None)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["E", "mu_fc"])
    for e, val in zip(es, vals):
        writer.writerow([format(e, ".17g"), "" if val is None else format(val, ".17g")])
    text = buf.getvalue()
    if args.out_dir:
        Path(args.out_dir).mkdir(parents=True, exist_ok=True)
        (Path(args.out_dir) / "density.csv").write_text(text)
    else:
        out.write(text)
    return EXIT_OK


def _out_dir(args) -> Path:
    path = Path(args.out_dir or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_simulate(args, out) -> int:
    cfg = _require_config(args)
    root = _out_dir(args)
    records = root / "records.jsonl"
    manifest_path = root / "manifest.json"
    manifest = None
    if args.resume and manifest_path.exists():
        manifest = RunManifest.read(manifest_path)
        if manifest.config != json.loads(serialize_config(cfg)):
            raise ValidationError("--resume: config differs from the manifest of the existing run")
        manifest.status, manifest.finished = "running", None
    if manifest is None:
        manifest = RunManifest(uuid.uuid4().hex, json.loads(serialize_config(cfg)), __version__, _now())
    manifest.outputs = {"records": records.name, "manifest": manifest_path.name}
    manifest.write(manifest_path)
    try:
        _, summary = experiments.run_experiment(cfg, args.workers, records, resume=args.resume)
    except TrialFailureBudgetExceeded:
        manifest.status, manifest.finished = "failed", _now()
        manifest.write(manifest_path)
        raise
    manifest.status, manifest.finished = "complete", _now()
    manifest.write(manifest_path)
    out.write(f"wrote {summary.trials} records to {records} ({summary.failed} failed)\n")
    return EXIT_OK


def cmd_analyze(args, out) -> int:
    cfg = _require_config(args)
    root = _out_dir(args)
    path = Path(args.records) if args.records else root / "records.jsonl"
    if not path.exists():
        raise SchemaError(f"no record file at {path}")
    recs = experiments.load_records(path)
    if not recs:
        raise SchemaError(f"{path} holds no records")
    modes = {"gaussian-edge" if r.l_hat is not None else "spectral" for r in recs}
    expected = "gaussian-edge" if cfg.mode == "gaussian-edge" else "spectral"
    if modes != {expected}:
        raise SchemaError(f"records in {path} do not match mode {cfg.mode!r}")
    summary = experiments.summarize(recs, cfg)
    (root / "summary.json").write_text(dumps17(summary.to_dict()) + "\n")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["key", "value"])
    for key, val in summary.flat_rows():
        writer.writerow([key, format(val, ".17g") if isinstance(val, float) else val])
    (root / "summary.csv").write_text(buf.getvalue())
    out.write(dumps17(summary.to_dict()) + "\n")
    return EXIT_OK


def _seed_list(spec: str) -> list[int]:
    try:
        if ":" in spec:
            lo, hi = spec.split(":")
            return list(range(int(lo), int(hi)))
        return [int(s) for s in spec.split(",") if s.strip()]
    except ValueError as exc:
        raise ParseError(f"bad --seeds value {spec!r}; use '0,1,5' or '0:20'") from exc


def _scan_setup(args):
    cfg = _require_config(args)
    m = cfg.measure()
    ec = edge_constants(m, cfg.lam)
    p = diagnostics.ScaleParams.for_size(cfg.n, ec.beta_exp, cfg.epsilon, cfg.n0)
    return cfg, m, ec, p


def _emit_lines(args, out, name, lines):
    text = "".join(dumps17(line) + "\n" for line in lines)
    if args.out_dir:
        (_out_dir(args) / name).write_text(text)
    out.write(text)


def cmd_locallaw(args, out) -> int:
    cfg, m, ec, p = _scan_setup(args)
    lines = []
    for idx in _seed_list(args.seeds):
        seed = experiments.derive_seed(cfg.master_seed, idx)
        rng = np.random.default_rng(seed)
        v = sample_sorted(m, cfg.n, rng)
        h = ensemble.assemble(v, cfg.lam, ensemble.sample_wigner(cfg.n, cfg.symmetry, rng))
        line = {"seed": idx, "derived_seed": seed}
        try:
            line.update(diagnostics.local_law_scan(h, v, cfg.lam, p, m, ec).to_dict())
        except MathPreconditionError as exc:
            line["error"] = f"{type(exc).__name__}: {exc}"
        line["omega_v"] = diagnostics.check_omega_v(v, cfg.lam, m, p, ec).to_dict()
        lines.append(line)
    _emit_lines(args, out, "locallaw.jsonl", lines)
    return EXIT_OK


def cmd_omegav(args, out) -> int:
    cfg, m, ec, p = _scan_setup(args)
    lines = []
    for idx in _seed_list(args.seeds):
        seed = experiments.derive_seed(cfg.master_seed, idx)
        v = sample_sorted(m, cfg.n, np.random.default_rng(seed))
        rep = diagnostics.check_omega_v(v, cfg.lam, m, p, ec)
        line = {
            "seed": idx,
            "derived_seed": seed,
            "sup_deviation": rep.clt_sup,
            "bound": rep.clt_bound,
            "pass": rep.passed,
            "grid_points_used": rep.grid_points_used,
        }
        line.update({k: v for k, v in rep.to_dict().items() if k not in line})
        lines.append(line)
    _emit_lines(args, out, "omegav.jsonl", lines)
    return EXIT_OK


# --------------------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags(parser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="JSON experiment config")
    parser.add_argument("--out-dir", default=default, help="directory for output files")
    parser.add_argument("--workers", type=int, default=default,
                        help="worker processes (default: $SPECTRAL_LAB_WORKERS or 1)")
    parser.add_argument("--seed", type=int, default=default, help="override master_seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spectral-lab", description="Deformed Wigner matrix lab.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def measure_flags(p):
        p.add_argument("--a", type=float, help="lower-edge exponent")
        p.add_argument("--b", type=float, help="upper-edge exponent")
        p.add_argument("--d", type=float, nargs="+", help="coefficients of d(v), lowest degree first")
        p.add_argument("--lambda", dest="lam", type=float, help="coupling")

    p = sub.add_parser("edge", help="print edge constants")
    _global_flags(p, suppress=True)
    measure_flags(p)
    p.set_defaults(func=cmd_edge)

    p = sub.add_parser("density", help="CSV table of the deformed semicircle density")
    _global_flags(p, suppress=True)
    measure_flags(p)
    p.add_argument("--from", dest="lo", type=float, required=True)
    p.add_argument("--to", dest="hi", type=float, required=True)
    p.add_argument("--points", type=int, required=True)
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("simulate", help="run the Monte Carlo experiment")
    _global_flags(p, suppress=True)
    p.add_argument("--resume", action="store_true", help="keep records already on disk")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="summarize a record file")
    _global_flags(p, suppress=True)
    p.add_argument("--records", help="record file (default: <out-dir>/records.jsonl)")
    p.set_defaults(func=cmd_analyze)

    for name, func, helptext in (
        ("locallaw", cmd_locallaw, "local law scan per seed"),
        ("omegav", cmd_omegav, "typical-potential check per seed"),
    ):
        p = sub.add_parser(name, help=helptext)
        _global_flags(p, suppress=True)
        p.add_argument("--seeds", default="0", help="trial indices, e.g. '0,1,2' or '0:10'")
        p.set_defaults(func=func)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    if args.workers is None:
        env = os.environ.get("SPECTRAL_LAB_WORKERS")
        try:
            args.workers = int(env) if env else 1
        except ValueError:
            print(f"error: SPECTRAL_LAB_WORKERS={env!r} is not an integer", file=sys.stderr)
            return EXIT_USAGE
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args, out)
    except TrialFailureBudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ParseError, ValidationError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MathPreconditionError, NoConvergence) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MATH
    except SpectralLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
