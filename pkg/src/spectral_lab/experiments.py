"""Monte Carlo harness and the estimators applied to its records.

Every trial draws from its own generator seeded by ``derive_seed(master, index)``,
so a record depends only on the config and the trial index.  Trials run with
BLAS pinned to one thread, which keeps the output byte-identical for any worker
count.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.stats import ks_2samp
from threadpoolctl import threadpool_limits

from . import ensemble
from .errors import SchemaError, TrialFailureBudgetExceeded, ValidationError
from .freeconv import CRITICAL_GUARD, EdgeConstants, edge_constants, empirical_edge
from .measure import JacobiMeasure, build_measure, edge_integrals, sample_sorted

__all__ = [
    "MODES",
    "ExperimentConfig",
    "TrialRecord",
    "Summary",
    "derive_seed",
    "run_trial",
    "run_experiment",
    "weibull_cdf",
    "ks_statistic",
    "ks_two_sample",
    "coupling_summary",
    "eigenvector_summary",
    "gaussian_edge_summary",
    "summarize",
    "dumps17",
    "record_to_json",
    "record_from_json",
    "load_records",
]

MODES = ("weibull", "eigenvector", "gaussian-edge", "local-law")
MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
FAILURE_BUDGET = 0.01
MASS_BAND = 0.05
DELTA_PRIME = 0.2
DELOCALIZATION_LEVEL = 0.02


# --------------------------------------------------------------------------- config


@dataclass(frozen=True)
class ExperimentConfig:
    a: float
    b: float
    lam: float
    n: int
    trials: int
    mode: str
    master_seed: int
    d: tuple = (1.0,)
    n0: int = 5
    symmetry: str = "real"
    epsilon: float = 0.05

    def measure(self) -> JacobiMeasure:
        return build_measure(self.a, self.b, self.d)

    def validate(self) -> "ExperimentConfig":
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.symmetry not in ensemble.SYMMETRIES:
            raise ValidationError(f"symmetry must be one of {ensemble.SYMMETRIES}, got {self.symmetry!r}")
        if self.trials < 1:
            raise ValidationError("trials must be at least 1")
        if self.n0 < 1:
            raise ValidationError("n0 must be at least 1")
        if self.n < 2 * self.n0:
            raise ValidationError(f"n={self.n} must be at least 2*n0={2 * self.n0}")
        if not 0 <= self.master_seed <= MASK64:
            raise ValidationError("master_seed must be an unsigned 64-bit integer")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        try:
            m = self.measure()
        except ValueError as exc:
            raise ValidationError(f"invalid measure: {exc}") from exc
        if self.b <= 1:
            raise ValidationError(f"mode {self.mode!r} needs b > 1 so that lambda_+ is finite")
        lam_plus, _ = edge_integrals(m, "upper")
        if self.mode == "gaussian-edge" and not self.lam < lam_plus:
            raise ValidationError(
                f"gaussian-edge mode needs lambda < lambda_+ = {lam_plus:.17g}, got {self.lam}"
            )
        if self.mode in ("weibull", "local-law") and not self.lam > lam_plus:
            raise ValidationError(
                f"{self.mode} mode needs lambda > lambda_+ = {lam_plus:.17g}, got {self.lam}"
            )
        # eigenvector mode also runs below lambda_+, where it measures delocalization
        if self.mode == "eigenvector" and abs(self.lam - lam_plus) <= CRITICAL_GUARD * lam_plus:
            raise ValidationError("eigenvector mode is undefined at the critical coupling")
        return self

    def to_dict(self) -> dict:
        out = asdict(self)
        out["d"] = list(self.d)
        return out

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


# --------------------------------------------------------------------------- seeding


def derive_seed(master: int, index: int) -> int:
    """SplitMix64 finalizer applied to (master XOR golden * index) + golden."""
    x = (int(master) ^ (GOLDEN_GAMMA * int(index))) & MASK64
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


# --------------------------------------------------------------------------- records


@dataclass(frozen=True)
class TrialRecord:
    trial_index: int
    derived_seed: int
    top_v: list
    top_mu: list
    vector_masses: list
    max_off_mass: list
    off_mass_block: list
    l_hat: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


RECORD_FIELDS = [f.name for f in fields(TrialRecord)]


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def dumps17(obj) -> str:
    """Compact JSON with every float written to 17 significant digits."""
    if obj is None or isinstance(obj, (bool, str)):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps17(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(dumps17(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def record_to_json(rec: TrialRecord) -> str:
    return dumps17(rec.to_dict())


def record_from_json(line: str) -> TrialRecord:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed record line: {exc}") from exc
    if not isinstance(data, dict) or sorted(data) != sorted(RECORD_FIELDS):
        got = sorted(data) if isinstance(data, dict) else type(data).__name__
        raise SchemaError(f"record fields {got} do not match {RECORD_FIELDS}")
    return TrialRecord(**data)


def load_records(path, tolerate_partial_tail: bool = False) -> list[TrialRecord]:
    lines = Path(path).read_text().splitlines()
    out = []
    for pos, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            out.append(record_from_json(line))
        except SchemaError:
            if tolerate_partial_tail and pos == len(lines) - 1:
                break
            raise
    return out


# --------------------------------------------------------------------------- trials


def _trial(cfg: ExperimentConfig, index: int, m: JacobiMeasure) -> TrialRecord:
    seed = derive_seed(cfg.master_seed, index)
    rng = np.random.default_rng(seed)
    v = sample_sorted(m, cfg.n, rng)
    top_v = v[: cfg.n0].tolist()
    if cfg.mode == "gaussian-edge":
        l_hat, _ = empirical_edge(v, cfg.lam)
        return TrialRecord(index, seed, top_v, [], [], [], [], l_hat)
    w = ensemble.sample_wigner(cfg.n, cfg.symmetry, rng)
    h = ensemble.assemble(v, cfg.lam, w)
    sd = ensemble.spectral_decompose(h, cfg.n0)
    mass = np.abs(sd.top_vectors) ** 2
    k = np.arange(cfg.n0)
    own = mass[k, k]
    off = mass.copy()
    off[k, k] = -np.inf
    return TrialRecord(
        index,
        seed,
        top_v,
        sd.eigenvalues[: cfg.n0].tolist(),
        own.tolist(),
        off.max(axis=1).tolist(),
        mass[:, : cfg.n0].tolist(),
        None,
    )


def run_trial(cfg: ExperimentConfig, index: int, m: JacobiMeasure | None = None) -> TrialRecord:
    """One Monte Carlo trial; errors propagate with the trial index prepended to the message."""
    m = m or cfg.measure()
    try:
        with threadpool_limits(1):
            return _trial(cfg, index, m)
    except Exception as exc:
        head = exc.args[0] if exc.args else ""
        exc.args = (f"trial {index}: {head}",) + tuple(exc.args[1:])
        raise


def _worker(args):
    cfg, index = args
    try:
        return index, run_trial(cfg, index), None
    except Exception as exc:  # reported back to the parent, counted against the budget
        return index, None, f"{type(exc).__name__}: {exc}"


def _default_workers() -> int:
    env = os.environ.get("SPECTRAL_LAB_WORKERS")
    return int(env) if env else 1


def _iter_results(cfg, indices, workers):
    if workers <= 1 or len(indices) <= 1:
        m = cfg.measure()
        for i in indices:
            try:
                yield i, run_trial(cfg, i, m), None
            except Exception as exc:
                yield i, None, f"{type(exc).__name__}: {exc}"
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(_worker, [(cfg, i) for i in indices], chunksize=1)


def _write_atomic(path: Path, lines):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        for line in lines:
            fh.write(line + "\n")
    os.replace(tmp, path)


def _resume_records(cfg, path: Path) -> dict[int, TrialRecord]:
    if not path.exists():
        return {}
    kept = {}
    for rec in load_records(path, tolerate_partial_tail=True):
        if rec.trial_index >= cfg.trials:
            continue
        if rec.derived_seed != derive_seed(cfg.master_seed, rec.trial_index):
            raise SchemaError(
                f"record {rec.trial_index} has seed {rec.derived_seed}, which this config does not produce"
            )
        kept[rec.trial_index] = rec
    return kept


def run_experiment(cfg: ExperimentConfig, workers: int | None = None, records_path=None,
                   resume: bool = False, progress=None):
    """Run all trials; returns (records ordered by index, Summary).

    With ``records_path`` every finished record is appended as a JSONL line and
    the file is rewritten in index order at the end.  ``resume`` keeps records
    already on disk (after checking their seeds) and only runs missing indices.
    """
    cfg.validate()
    workers = _default_workers() if workers is None else max(1, int(workers))
    path = Path(records_path) if records_path is not None else None
    done: dict[int, TrialRecord] = {}
    if path is not None and resume:
        done = _resume_records(cfg, path)
    if path is not None:
        _write_atomic(path, [record_to_json(done[i]) for i in sorted(done)])
    todo = [i for i in range(cfg.trials) if i not in done]
    failures = {}
    sink = open(path, "a") if path is not None else None
    try:
        for index, rec, err in _iter_results(cfg, todo, workers):
            if err is not None:
                failures[index] = err
                if len(failures) > FAILURE_BUDGET * cfg.trials:
                    raise TrialFailureBudgetExceeded(
                        f"{len(failures)} of {cfg.trials} trials failed; first: {next(iter(failures.values()))}"
                    )
                continue
            done[index] = rec
            if sink is not None:
                sink.write(record_to_json(rec) + "\n")
                sink.flush()
            if progress is not None:
                progress(index)
    finally:
        if sink is not None:
            sink.close()
    records = [done[i] for i in sorted(done)]
    if path is not None:
        _write_atomic(path, [record_to_json(r) for r in records])
    summary = summarize(records, cfg)
    summary.failed = len(failures)
    return records, summary


# --------------------------------------------------------------------------- statistics


def weibull_cdf(s, beta: float, c_mu: float):
    """G_{beta+1}(s) = 1 - exp(-C_mu s^{beta+1} / (beta+1)), zero for s < 0."""
    s = np.asarray(s, dtype=float)
    pos = np.maximum(s, 0.0)
    out = np.where(s < 0, 0.0, -np.expm1(-c_mu * pos ** (beta + 1.0) / (beta + 1.0)))
    return float(out) if out.ndim == 0 else out


def ks_statistic(samples, cdf) -> float:
    """One-sample Kolmogorov-Smirnov distance sup |F_n - F|."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("need at least one sample")
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n), 0.0))


def ks_two_sample(x, y) -> float:
    return float(ks_2samp(np.asarray(x, float), np.asarray(y, float)).statistic)


def _scaled(n: int, ec: EdgeConstants) -> float:
    return n ** (1.0 / (ec.beta_exp + 1.0))


def edge_samples(records, ec: EdgeConstants, n: int, rank: int = 1):
    """(mu side N^{1/(b+1)}(L_+ - mu_k), v side C_lam N^{1/(b+1)}(1 - v_k)) per trial."""
    k = rank - 1
    s = _scaled(n, ec)
    mu = np.array([r.top_mu[k] for r in records], dtype=float)
    v = np.array([r.top_v[k] for r in records], dtype=float)
    return s * (ec.l_plus - mu), ec.c_lambda * s * (1.0 - v)


def coupling_summary(records, ec: EdgeConstants, n: int, rank: int = 1) -> dict:
    """Per-trial deviation |N^{1/(b+1)}(L_+ - mu_k) - C_lam N^{1/(b+1)}(1 - v_k)|."""
    if not ec.supercritical:
        raise ValueError("coupling statistics need the supercritical regime")
    mu_side, v_side = edge_samples(records, ec, n, rank)
    dev = np.abs(mu_side - v_side)
    std_v = float(np.std(v_side, ddof=1)) if len(v_side) > 1 else 0.0
    median = float(np.median(dev))
    return {
        "rank": rank,
        "median": median,
        "p90": float(np.quantile(dev, 0.9)),
        "v_std": std_v,
        "median_ratio": median / std_v if std_v > 0 else float("inf"),
    }


def eigenvector_summary(records, ec: EdgeConstants, n: int, band: float = MASS_BAND,
                        delta_prime: float = DELTA_PRIME, lam: float | None = None) -> dict:
    """Edge eigenvector mass statistics against the partial-localization predictions.

    Per rank k: mean/std of |u_k(k)|^2 and the fraction inside ``band`` of
    (lam^2 - lam_+^2)/lam^2 (supercritical only), the mean residual mass
    1 - |u_k(k)|^2 and the mean mass on the other top sites, the latter next to
    the per-site prediction 1/(N lam^2 (v_k - v_j)^2) summed over the same sites.
    """
    lam = ec.lam if lam is None else lam
    own = np.array([r.vector_masses for r in records], dtype=float)
    block = np.array([r.off_mass_block for r in records], dtype=float)
    top_v = np.array([r.top_v for r in records], dtype=float)
    max_off = np.array([r.max_off_mass for r in records], dtype=float)
    n0 = own.shape[1]
    target = (lam ** 2 - ec.lambda_plus ** 2) / lam ** 2
    residual_target = ec.lambda_plus ** 2 / lam ** 2
    per_k = []
    for k in range(n0):
        others = [j for j in range(n0) if j != k]
        block_mass = block[:, k, others].sum(axis=1)
        gaps = top_v[:, [k]] - top_v[:, others]
        with np.errstate(divide="ignore"):
            site_pred = 1.0 / (n * lam ** 2 * gaps ** 2)
        bound_ok = block[:, k, others] <= n ** delta_prime * site_pred
        entry = {
            "rank": k + 1,
            "mass_mean": float(own[:, k].mean()),
            "mass_std": float(own[:, k].std(ddof=1)) if len(own) > 1 else 0.0,
            "residual_mass_mean": float((1.0 - own[:, k]).mean()),
            "block_mass_mean": float(block_mass.mean()),
            "block_prediction_median": float(np.median(site_pred.sum(axis=1))),
            "site_bound_fraction": float(bound_ok.mean()),
            "max_mass_mean": float(np.maximum(own[:, k], max_off[:, k]).mean()),
        }
        if ec.supercritical:
            entry["band_fraction"] = float((np.abs(own[:, k] - target) <= band).mean())
        per_k.append(entry)
    max_mass_1 = np.maximum(own[:, 0], max_off[:, 0])
    return {
        "target_mass": target if ec.supercritical else 0.0,
        "residual_target": residual_target if ec.supercritical else 1.0,
        "band": band,
        "delta_prime": delta_prime,
        "per_rank": per_k,
        "delocalized_fraction": float((max_mass_1 <= DELOCALIZATION_LEVEL).mean()),
        "mean_max_off_mass": float(max_off[:, 0].mean()),
    }


def gaussian_edge_summary(records, m: JacobiMeasure, lam: float, n: int,
                          ec: EdgeConstants | None = None) -> tuple[float, float]:
    """(empirical variance of sqrt(N)(L_hat - L_+), 1 - m_fc(L_+)^2)."""
    ec = ec or edge_constants(m, lam)
    if ec.supercritical:
        raise ValueError("Gaussian edge statistics need lambda < lambda_+")
    l_hat = np.array([r.l_hat for r in records], dtype=float)
    x = math.sqrt(n) * (l_hat - ec.l_plus)
    emp = float(np.var(x, ddof=1)) if x.size > 1 else 0.0
    return emp, 1.0 - ec.m_plus ** 2


# --------------------------------------------------------------------------- summaries


@dataclass
class Summary:
    mode: str
    trials: int
    failed: int = 0
    ks_weibull: float | None = None
    ks_weibull_v: float | None = None
    ks_coupling: float | None = None
    coupling: dict | None = None
    eigenvectors: dict | None = None
    gaussian_edge: dict | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None and v != {}}

    def flat_rows(self):
        """(key, value) pairs with nested keys joined by dots, for CSV output."""

        def walk(prefix, obj):
            if isinstance(obj, dict):
                for k, v in obj.items():
                    yield from walk(f"{prefix}.{k}" if prefix else str(k), v)
            elif isinstance(obj, list):
                for i, v in enumerate(obj):
                    yield from walk(f"{prefix}.{i}", v)
            else:
                yield prefix, obj

        return list(walk("", self.to_dict()))


def summarize(records, cfg: ExperimentConfig) -> Summary:
    """Mode-appropriate summary of an ordered record list."""
    out = Summary(cfg.mode, len(records))
    if not records:
        return out
    m = cfg.measure()
    ec = edge_constants(m, cfg.lam)
    if cfg.mode == "gaussian-edge":
        emp, target = gaussian_edge_summary(records, m, cfg.lam, cfg.n, ec)
        out.gaussian_edge = {
            "emp_var": emp,
            "target_var": target,
            "relative_error": abs(emp - target) / target,
            "mean": float(np.mean(math.sqrt(cfg.n) * (np.array([r.l_hat for r in records]) - ec.l_plus))),
        }
        return out
    if cfg.mode == "eigenvector":
        out.eigenvectors = eigenvector_summary(records, ec, cfg.n)
    if not ec.supercritical:
        return out
    mu_side, v_side = edge_samples(records, ec, cfg.n)
    cdf = lambda s: weibull_cdf(s, ec.beta_exp, ec.c_mu)  # noqa: E731
    out.ks_weibull = ks_statistic(mu_side, cdf)
    out.ks_weibull_v = ks_statistic(v_side, cdf)
    out.ks_coupling = ks_two_sample(mu_side, v_side)
    out.coupling = {"per_rank": [coupling_summary(records, ec, cfg.n, k) for k in range(1, cfg.n0)]}
    return out
