"""Sweep orchestration: config parsing, train/evaluate grid, CSV and plots.

Four experiment kinds share one grid.  Predictors are trained at
``(loss, gamma_th, D, retrain)`` under the nominal SNR and gate threshold and
are then evaluated at every ``(snr_db, q_th)`` of the sweep on one shared test
set.  Losses that ignore D (the pointwise baselines) are trained once per
``(gamma_th, retrain)`` and reused for every D.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import losses
from .channel_sim import SimConfig, derive_stream, generate_realizations
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .gtba import GtbaConfig
from .model import TrainingError
from .reliability import ReliabilityReport, decomposition_audit, evaluate, evaluate_scores, score
from .training import TEST_STREAM_ID, TrainConfig, sim_from_checkpoint, train

log = logging.getLogger(__name__)

KINDS = ("d_sweep", "stress_sweep", "snr_sweep", "qth_sweep")
WORKERS_ENV = "BULKALLOC_WORKERS"
FULL_RETRAINS = 10

_QTH_GRID = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
_KIND_DEFAULTS = {
    "d_sweep": {"gamma_th": [1.2], "snr_db": [0.0], "q_th": [0.4]},
    "stress_sweep": {"gamma_th": [1.0, 1.2, 1.4], "snr_db": [0.0], "q_th": [0.4]},
    "snr_sweep": {"gamma_th": [1.2], "snr_db": [-6.0, -3.0, 0.0, 3.0, 6.0], "q_th": [0.4]},
    "qth_sweep": {"gamma_th": [1.2], "snr_db": [0.0], "q_th": _QTH_GRID},
}
_SIM_KEYS = {"R", "v", "k", "l", "fft_size", "delta", "rate_agg"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    losses: list[str] = field(default_factory=lambda: ["RBOL", "BCE", "MSE", "MAE"])
    D: list[int] = field(default_factory=lambda: [2, 4, 6, 8, 10])
    gamma_th: list[float] | None = None
    snr_db: list[float] | None = None
    q_th: list[float] | None = None
    retrains: int = 3
    n_test: int = 3000
    master_seed: int = 0
    output_dir: str = "results"
    epochs: int = 65
    batches_per_epoch: int = 60
    nominal_snr_db: float = 0.0
    nominal_q_th: float = 0.4
    sim: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in KINDS:
            raise ConfigError(f"experiment: must be one of {KINDS}, got {self.experiment!r}")
        defaults = _KIND_DEFAULTS[self.experiment]
        for key in ("gamma_th", "snr_db", "q_th"):
            if getattr(self, key) is None:
                setattr(self, key, list(defaults[key]))
        self.validate()

    def validate(self) -> None:
        for key in ("losses", "D", "gamma_th", "snr_db", "q_th"):
            if not getattr(self, key):
                raise ConfigError(f"{key}: sweep axis must not be empty")
        known = losses.loss_kinds()
        for i, name in enumerate(self.losses):
            if name not in known:
                raise ConfigError(f"losses[{i}]: unknown loss {name!r}; known {known}")
        for i, gam in enumerate(self.gamma_th):
            if not gam >= 0:
                raise ConfigError(f"gamma_th[{i}]: must be >= 0, got {gam}")
        R = self.sim_config().R
        for i, d in enumerate(self.D):
            if isinstance(d, bool) or not isinstance(d, int) or not 1 <= d <= R:
                raise ConfigError(f"D[{i}]: must be an integer in [1, {R}], got {d!r}")
        for i, t in enumerate(self.q_th):
            if not 0.0 < t < 1.0:
                raise ConfigError(f"q_th[{i}]: must lie in (0, 1), got {t}")
        if not 0.0 < self.nominal_q_th < 1.0:
            raise ConfigError(f"nominal_q_th: must lie in (0, 1), got {self.nominal_q_th}")
        for key in ("retrains", "n_test", "epochs", "batches_per_epoch"):
            val = getattr(self, key)
            low = 0 if key == "epochs" else 1
            if isinstance(val, bool) or not isinstance(val, int) or val < low:
                raise ConfigError(f"{key}: must be an integer >= {low}, got {val!r}")
        if not isinstance(self.master_seed, int) or not 0 <= self.master_seed < 2**64:
            raise ConfigError(f"master_seed: must be a 64-bit unsigned integer, got {self.master_seed!r}")

    def sim_config(self, gamma_th: float | None = None, snr_db: float | None = None) -> SimConfig:
        unknown = set(self.sim) - _SIM_KEYS
        if unknown:
            raise ConfigError(f"sim.{sorted(unknown)[0]}: unknown key")
        try:
            return SimConfig(
                **self.sim,
                gamma_th=self.gamma_th[0] if gamma_th is None else gamma_th,
                snr_db=self.nominal_snr_db if snr_db is None else snr_db,
                master_seed=self.master_seed,
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"sim: {exc}") from exc


def _dedupe(key: str, values: list) -> list:
    out = []
    for v in values:
        if v in out:
            log.warning("config %s: duplicate entry %r dropped", key, v)
        else:
            out.append(v)
    return out


_FLOAT_LISTS = ("gamma_th", "snr_db", "q_th")


def config_from_mapping(raw) -> ExperimentConfig:
    """Validate a parsed mapping; unknown keys are rejected."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>: config must be a mapping")
    allowed = {f.name for f in fields(ExperimentConfig)}
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"{key}: unknown key")
    if "experiment" not in raw:
        raise ConfigError("experiment: required key missing")
    data = dict(raw)
    for key in ("losses", "D") + _FLOAT_LISTS:
        if key not in data:
            continue
        val = data[key]
        if not isinstance(val, list):
            val = [val]
        if key in _FLOAT_LISTS:
            for i, x in enumerate(val):
                if isinstance(x, bool) or not isinstance(x, (int, float)):
                    raise ConfigError(f"{key}[{i}]: expected a number, got {x!r}")
            val = [float(x) for x in val]
        data[key] = _dedupe(key, val)
    for key in ("nominal_snr_db", "nominal_q_th"):
        if key in data:
            if isinstance(data[key], bool) or not isinstance(data[key], (int, float)):
                raise ConfigError(f"{key}: expected a number, got {data[key]!r}")
            data[key] = float(data[key])
    if "sim" in data and not isinstance(data["sim"], dict):
        raise ConfigError("sim: expected a mapping")
    if "output_dir" in data:
        data["output_dir"] = str(data["output_dir"])
    return ExperimentConfig(**data)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"<root>: invalid YAML: {exc}") from exc
    return config_from_mapping(raw)


@dataclass
class ResultRow:
    experiment: str
    loss: str
    D: int
    gamma_th: float
    snr_db: float
    q_th: float
    retrain_index: object  # int or "mean"
    gfp: float
    gfp_se: float
    bop: float
    bop_se: float
    obop: float
    anar: float
    sel_fail_rate: float
    n_test: int
    master_seed: int


CSV_COLUMNS = [f.name for f in fields(ResultRow)]


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def rows_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(getattr(row, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def read_results_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _row(cfg, loss, D, gamma, snr, q_th, idx, report: ReliabilityReport | None, obop) -> ResultRow:
    nan = float("nan")
    r = report
    return ResultRow(
        experiment=cfg.experiment,
        loss=loss,
        D=D,
        gamma_th=float(gamma),
        snr_db=float(snr),
        q_th=float(q_th),
        retrain_index=idx,
        gfp=r.gfp if r else nan,
        gfp_se=r.gfp_se if r else nan,
        bop=r.bop if r else nan,
        bop_se=r.bop_se if r else nan,
        obop=float(obop),
        anar=r.anar if r else nan,
        sel_fail_rate=r.sel_fail_rate if r else nan,
        n_test=cfg.n_test,
        master_seed=cfg.master_seed,
    )


def mean_row(rows: list[ResultRow]) -> ResultRow:
    """Arithmetic mean of per-retrain estimates; diverged retrains (NaN) are skipped."""
    ok = [r for r in rows if np.isfinite(r.bop)]
    base = rows[0]
    if not ok:
        return replace(base, retrain_index="mean")

    def avg(name):
        return float(np.mean([getattr(r, name) for r in ok]))

    def se(name):
        return float(np.sqrt(np.sum([getattr(r, name) ** 2 for r in ok])) / len(ok))

    return replace(
        base,
        retrain_index="mean",
        gfp=avg("gfp"),
        gfp_se=se("gfp_se"),
        bop=avg("bop"),
        bop_se=se("bop_se"),
        anar=avg("anar"),
        sel_fail_rate=avg("sel_fail_rate"),
    )


@dataclass(frozen=True)
class _Job:
    loss: str
    gamma_th: float
    D: int
    retrain: int


def _train_job(args):
    sim, tcfg = args
    try:
        ckpt, history = train(sim, tcfg)
    except TrainingError as exc:
        return None, str(exc)
    return ckpt, history


def _workers(requested: int | None) -> int:
    if requested is not None:
        return max(1, requested)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV}: expected an integer, got {env!r}") from None
    return 1


@dataclass
class RunResult:
    rows: list[ResultRow]
    csv_path: Path
    pooled_path: Path
    plots: list[Path]
    failures: dict = field(default_factory=dict)
    audited: int = 0  # evaluations that passed the outage decomposition audit


def training_jobs(cfg: ExperimentConfig) -> list[_Job]:
    jobs = []
    for r in range(cfg.retrains):
        for gamma in cfg.gamma_th:
            for loss in cfg.losses:
                ds = cfg.D if loss in losses.SET_LEVEL else [cfg.D[0]]
                for D in ds:
                    jobs.append(_Job(loss, gamma, D, r))
    return jobs


def _model_key(cfg, loss, gamma, D, r) -> _Job:
    return _Job(loss, gamma, D if loss in losses.SET_LEVEL else cfg.D[0], r)


def train_all(cfg: ExperimentConfig, workers: int | None = None, ckpt_dir: Path | None = None):
    """Train every model of the grid; returns ``({job: Checkpoint | None}, {job: error})``."""
    jobs = training_jobs(cfg)
    args = [
        (
            cfg.sim_config(gamma_th=job.gamma_th),
            TrainConfig(
                loss=job.loss,
                D=job.D,
                q_th=cfg.nominal_q_th,
                epochs=cfg.epochs,
                batches_per_epoch=cfg.batches_per_epoch,
                retrain=job.retrain,
            ),
        )
        for job in jobs
    ]
    n_workers = _workers(workers)
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_train_job, args))
    else:
        results = []
        for job, a in zip(jobs, args):
            log.info("training %s D=%d gamma=%g retrain %d", job.loss, job.D, job.gamma_th, job.retrain)
            results.append(_train_job(a))

    models, failures, prints = {}, {}, {}
    for job, (ckpt, info) in zip(jobs, results):
        if ckpt is None:
            log.error("%s: %s", job, info)
            failures[job] = info
            models[job] = None
            continue
        models[job] = ckpt
        prints.setdefault((job.retrain, job.gamma_th), set()).add(info.data_fingerprint)
        if ckpt_dir is not None:
            ckpt_dir.mkdir(parents=True, exist_ok=True)
            save_checkpoint(ckpt, ckpt_dir / f"{job.loss}_g{job.gamma_th:g}_D{job.D}_r{job.retrain}.ckpt")
    for key, fps in prints.items():
        if len(fps) != 1:
            raise RuntimeError(f"losses saw different training data for retrain/gamma {key}")
        log.info("retrain %d gamma %g data fingerprint %s", key[0], key[1], next(iter(fps))[:16])
    return models, failures


def shared_test_set(cfg: ExperimentConfig):
    sim = cfg.sim_config()
    return generate_realizations(sim, derive_stream(cfg.master_seed, TEST_STREAM_ID), cfg.n_test)


def run_experiment(cfg: ExperimentConfig, workers: int | None = None, plots: bool = True) -> RunResult:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    models, failures = train_all(cfg, workers, out / "checkpoints")
    test = shared_test_set(cfg)

    rows: list[ResultRow] = []
    pooled: list[dict] = []
    scores_cache: dict = {}
    audited = 0
    for loss in cfg.losses:
        for gamma in cfg.gamma_th:
            for D in cfg.D:
                for snr in cfg.snr_db:
                    labelled = test.relabel(gamma_th=gamma, snr_db=snr)
                    for q_th in cfg.q_th:
                        gtba = GtbaConfig(q_th=q_th, D=D)
                        obop = float(np.mean(labelled.g.sum(axis=1) < D))
                        point_rows, reports = [], []
                        for r in range(cfg.retrains):
                            key = _model_key(cfg, loss, gamma, D, r)
                            ckpt = models.get(key)
                            report = None
                            if ckpt is not None:
                                skey = (key, snr)
                                if skey not in scores_cache:
                                    scores_cache[skey] = score(ckpt, labelled)
                                report = evaluate_scores(scores_cache[skey], labelled.g, gtba)
                                _audit(report, key, snr, q_th)
                                audited += 1
                                reports.append(report)
                            point_rows.append(_row(cfg, loss, D, gamma, snr, q_th, r, report, obop))
                        rows.extend(point_rows)
                        rows.append(mean_row(point_rows))
                        pooled.append(_pooled(loss, D, gamma, snr, q_th, reports))

    csv_path = out / f"{cfg.experiment}.csv"
    csv_path.write_bytes(rows_to_csv(rows).encode("utf-8"))
    pooled_path = out / f"{cfg.experiment}_pooled.csv"
    _write_dicts(pooled_path, pooled)
    plot_paths = []
    if plots:
        from .plots import plot_results

        plot_paths = plot_results(cfg.experiment, [asdict(r) for r in rows], out)
    return RunResult(rows, csv_path, pooled_path, plot_paths, failures, audited)


def _audit(report: ReliabilityReport, *where) -> None:
    verdict = decomposition_audit(report)
    if not verdict:
        raise RuntimeError(f"outage accounting broken at {where}: {verdict.detail}")


def _pooled(loss, D, gamma, snr, q_th, reports: list[ReliabilityReport]) -> dict:
    keys = ("n", "gate_failures", "selection_failures", "bulk_outages", "oracle_outages", "nar_sum")
    totals = {k: sum(getattr(r, k) for r in reports) for k in keys}
    return {"loss": loss, "D": D, "gamma_th": gamma, "snr_db": snr, "q_th": q_th, "retrains_ok": len(reports), **totals}


def _write_dicts(path: Path, items: list[dict]) -> None:
    buf = io.StringIO()
    if items:
        writer = csv.DictWriter(buf, fieldnames=list(items[0]), lineterminator="\n")
        writer.writeheader()
        for item in items:
            writer.writerow({k: _fmt(v) for k, v in item.items()})
    path.write_bytes(buf.getvalue().encode("utf-8"))


def evaluate_only(
    model,
    q_th: float | None = None,
    D: int | None = None,
    snr_db: float | None = None,
    gamma_th: float | None = None,
    n_test: int = 3000,
    seed: int | None = None,
    sim: SimConfig | None = None,
) -> ResultRow:
    """Re-evaluate a stored model under new gate/bulk/SNR settings without retraining.

    ``model`` is a checkpoint path, a :class:`Checkpoint`, or a scorer callable
    (the latter needs ``sim``).
    """
    if isinstance(model, (str, Path)):
        model = load_checkpoint(model)
    if isinstance(model, Checkpoint):
        meta = model.metadata
        base = sim_from_checkpoint(model) if sim is None else sim
        q_th = meta.get("q_th", 0.4) if q_th is None else q_th
        D = meta.get("D", 4) if D is None else D
        loss, retrain = meta.get("loss", "?"), meta.get("retrain", 0)
    else:
        if sim is None:
            raise ValueError("a scorer callable needs an explicit SimConfig")
        base = sim
        q_th = 0.4 if q_th is None else q_th
        D = 4 if D is None else D
        loss, retrain = getattr(model, "__name__", "scorer"), 0
    seed = base.master_seed if seed is None else seed
    base = replace(base, master_seed=seed)
    test = generate_realizations(base, derive_stream(seed, TEST_STREAM_ID), n_test)
    test = test.relabel(gamma_th=gamma_th, snr_db=snr_db)
    report = evaluate(model, test, GtbaConfig(q_th=q_th, D=D))
    _audit(report, loss, D, q_th)
    cfg = _EvalInfo(n_test, seed)
    return _row(cfg, loss, D, test.gamma_th, test.snr_db, q_th, retrain, report, report.obop)


@dataclass
class _EvalInfo:
    n_test: int
    master_seed: int
    experiment: str = "eval"
