"""Experiment drivers behind the command-line interface.

Each ``run_*`` function returns plain result records; the ``write_*``
helpers turn them into CSV. Independent cells run on a thread pool and
are assembled in task order, so output does not depend on scheduling.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from grrmf.config import ExperimentConfig, Method
from grrmf.core import ObservationSet, OrdinalMatrix, apply_mask, read_matrix
from grrmf.datasets import RatingDataset, load_movielens, load_movielens_pair, split
from grrmf.errors import DivergenceError, ValidationError
from grrmf.generators import Family, Generated, SyntheticSpec, figure_one_matrices, generate
from grrmf.analysis.witness import verify_witness
from grrmf.linalg import approx_rank_curve
from grrmf.optim import TrainConfig, TrainReport, accuracy_half, metric_link, rmse, train

log = logging.getLogger(__name__)


def run_pool(fn, tasks, threads: int = 1) -> list:
    """``[fn(t) for t in tasks]``, optionally on a bounded thread pool."""
    tasks = list(tasks)
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def write_csv(path, header, rows, timestamp: bool = True, comments=()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if timestamp:
            fh.write(f"# generated {datetime.now(timezone.utc).isoformat(timespec='seconds')}\n")
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return v


# -- matrices and training ---------------------------------------------------


def load_matrix(cfg: ExperimentConfig, index: int, seed: int) -> Generated:
    """Matrix for family ``index`` (or the configured file) at trial ``seed``."""
    if cfg.source == "file":
        return Generated(read_matrix(cfg.matrix_path), None, Path(cfg.matrix_path).stem)
    if cfg.source != "synthetic":
        raise ValidationError("source: recover and complete need a synthetic or file matrix")
    spec = SyntheticSpec(Family(cfg.families[index]), cfg.n, seed=seed, bandwidth=cfg.bandwidth,
                         rank=cfg.true_rank, n_levels=cfg.n_levels)
    g = generate(spec)
    return Generated(g.matrix, g.witness, spec.family.value)


def matrix_names(cfg: ExperimentConfig) -> list[str]:
    if cfg.source == "file":
        return [Path(cfg.matrix_path).stem]
    return list(cfg.families)


def train_config(cfg: ExperimentConfig, method: Method, rank: int, learning_rate: float, l2_reg: float,
                 seed: int) -> TrainConfig:
    return TrainConfig(
        loss=method.loss,
        rank=rank,
        learning_rate=learning_rate,
        lr_decay=cfg.lr_decay,
        l2_reg=l2_reg,
        max_epochs=cfg.max_epochs,
        patience=cfg.patience,
        seed=seed,
        thresholds_fixed=method.policy == "fixed",
        initial_thresholds=cfg.thresholds if cfg.thresholds is not None else "auto",
        hinge_smoothing=cfg.hinge_smoothing,
        sharpness=cfg.sharpness,
    )


@dataclass
class Tuned:
    report: TrainReport | None
    learning_rate: float
    l2_reg: float
    val_rmse: float
    diverged: int


def tune(data, cfg: ExperimentConfig, method: Method, rank: int, seed: int, n_levels: int) -> Tuned:
    """Grid search over learning rate and l2, selected on validation RMSE.

    Diverging settings are skipped; if every setting diverges the result
    carries ``report=None``.
    """
    best = Tuned(None, math.nan, math.nan, math.inf, 0)
    diverged = 0
    for lr in cfg.learning_rates:
        for l2 in cfg.l2_regs:
            try:
                rep = train(data, train_config(cfg, method, rank, lr, l2, seed), n_levels=n_levels)
            except DivergenceError as exc:
                log.info("skipping %s lr=%g l2=%g: %s", method.label, lr, l2, exc)
                diverged += 1
                continue
            score = min(rep.rmse_curve)
            if score < best.val_rmse:
                best = Tuned(rep, lr, l2, score, 0)
    best.diverged = diverged
    return best


# -- recover -----------------------------------------------------------------


@dataclass
class RecoverRun:
    matrix: str
    method: Method
    seed: int
    rank: int
    report: TrainReport | None
    error: str = ""

    @property
    def final_rmse(self) -> float:
        return min(self.report.rmse_curve) if self.report else math.nan

    @property
    def last_rmse(self) -> float:
        return self.report.rmse_curve[-1] if self.report else math.nan


def run_recover(cfg: ExperimentConfig) -> list[RecoverRun]:
    """Fit every fully observed matrix with every method; one run per trial seed.

    Uses the first configured learning rate and l2 value.
    """
    names = matrix_names(cfg)
    tasks = [(i, m, s) for i in range(len(names)) for m in cfg.parsed_methods() for s in cfg.seeds()]

    def one(task):
        i, method, seed = task
        g = load_matrix(cfg, i, seed)
        rank = cfg.rank_for(i)
        tc = train_config(cfg, method, rank, cfg.learning_rates[0], cfg.l2_regs[0], seed)
        try:
            rep = train(g.matrix, tc)
        except DivergenceError as exc:
            return RecoverRun(names[i], method, seed, rank, None, str(exc))
        return RecoverRun(names[i], method, seed, rank, rep)

    return run_pool(one, tasks, cfg.threads)


def write_recover(runs: list[RecoverRun], out, timestamp: bool = True) -> list[Path]:
    out = Path(out)
    paths = []
    groups: dict[tuple[str, str], list[RecoverRun]] = {}
    for r in runs:
        groups.setdefault((r.matrix, r.method.label), []).append(r)
    for (matrix, label), group in groups.items():
        rows = []
        for r in group:
            if r.report is None:
                continue
            for epoch, (loss, score) in enumerate(zip(r.report.loss_curve, r.report.rmse_curve), start=1):
                rows.append([r.seed, epoch, loss, score])
        name = f"recover_{matrix}_{label.replace(':', '_')}.csv"
        paths.append(write_csv(out / name, ["seed", "epoch", "train_loss", "rmse"], rows, timestamp))
    summary = [[r.matrix, r.method.loss.value, r.method.policy, r.rank, r.seed,
                r.report.epochs_run if r.report else 0, r.final_rmse, r.last_rmse, r.error] for r in runs]
    paths.append(write_csv(out / "recover_summary.csv",
                           ["matrix", "loss", "thresholds", "rank", "seed", "epochs", "final_rmse", "last_rmse",
                            "error"], summary, timestamp))
    return paths


# -- complete ----------------------------------------------------------------


def completion_split(y: OrdinalMatrix, fraction: float, seed: int, test_fraction: float = 0.2,
                     val_fraction: float = 0.1) -> tuple[ObservationSet, ObservationSet]:
    """Held-out test entries plus an observed set with a validation tag.

    The test set is ``test_fraction`` of all entries and depends on the
    seed only, so it is shared across observation fractions. Observations
    cover ``fraction`` of the matrix drawn from the remaining entries, and
    ``val_fraction`` of them are tagged for tuning.
    """
    n, m = y.shape
    rng = np.random.default_rng(1000 + seed)
    test = np.zeros(n * m, dtype=bool)
    test[rng.choice(n * m, size=max(1, int(round(test_fraction * n * m))), replace=False)] = True
    test = test.reshape(n, m)
    obs = apply_mask(y, fraction, seed, exclude=test)
    n_val = max(1, int(round(val_fraction * len(obs))))
    flags = np.zeros(len(obs), dtype=bool)
    flags[np.random.default_rng(2000 + seed).choice(len(obs), size=n_val, replace=False)] = True
    rows, cols = np.nonzero(test)
    test_obs = ObservationSet((n, m), rows, cols, y.data[rows, cols], np.ones(rows.size, dtype=bool), y.n_levels)
    return obs.with_split(flags), test_obs


@dataclass
class CompletionCell:
    matrix: str
    method: Method
    fraction: float
    seed: int
    rank: int
    test_rmse: float
    val_rmse: float
    learning_rate: float
    l2_reg: float
    epochs: int
    diverged: int


def run_complete(cfg: ExperimentConfig) -> list[CompletionCell]:
    names = matrix_names(cfg)
    tasks = [(i, m, f, s) for i in range(len(names)) for m in cfg.parsed_methods()
             for f in cfg.fractions for s in cfg.seeds()]

    def one(task):
        i, method, fraction, seed = task
        g = load_matrix(cfg, i, seed)
        rank = cfg.rank_for(i)
        obs, test = completion_split(g.matrix, fraction, seed, cfg.test_fraction, cfg.val_fraction)
        best = tune(obs, cfg, method, rank, seed, g.matrix.n_levels)
        if best.report is None:
            return CompletionCell(names[i], method, fraction, seed, rank, math.nan, math.nan, math.nan, math.nan,
                                  0, best.diverged)
        score = rmse(best.report.final_model, test, metric_link(method.loss), cfg.sharpness)
        return CompletionCell(names[i], method, fraction, seed, rank, score, best.val_rmse, best.learning_rate,
                              best.l2_reg, best.report.epochs_run, best.diverged)

    return run_pool(one, tasks, cfg.threads)


@dataclass
class TableCell:
    mean: float
    std: float
    trials: int


def completion_table(cells: list[CompletionCell]) -> dict[str, dict[str, dict[float, TableCell]]]:
    """``table[matrix][method label][fraction]`` aggregated over trial seeds."""
    grouped: dict = {}
    for c in cells:
        grouped.setdefault(c.matrix, {}).setdefault(c.method.label, {}).setdefault(c.fraction, []).append(c.test_rmse)
    table: dict = {}
    for matrix, by_method in grouped.items():
        for label, by_fraction in by_method.items():
            for fraction, scores in by_fraction.items():
                ok = np.array([s for s in scores if not math.isnan(s)])
                mean = float(ok.mean()) if ok.size else math.nan
                std = float(ok.std()) if ok.size else math.nan
                table.setdefault(matrix, {}).setdefault(label, {})[fraction] = TableCell(mean, std, int(ok.size))
    return table


def write_complete(cells: list[CompletionCell], out, timestamp: bool = True) -> list[Path]:
    out = Path(out)
    paths = []
    table = completion_table(cells)
    for matrix, by_method in table.items():
        fractions = sorted({f for row in by_method.values() for f in row})
        header = ["method", "thresholds"]
        for f in fractions:
            header += [f"mean_{f:g}", f"std_{f:g}", f"trials_{f:g}"]
        rows = []
        for label, row in by_method.items():
            method = Method.parse(label)
            line = [method.loss.value, method.policy]
            for f in fractions:
                cell = row.get(f, TableCell(math.nan, math.nan, 0))
                line += [cell.mean, cell.std, cell.trials]
            rows.append(line)
        paths.append(write_csv(out / f"complete_{matrix}.csv", header, rows, timestamp,
                               comments=["cells: mean and std of held-out RMSE over trials"]))
    detail = [[c.matrix, c.method.loss.value, c.method.policy, c.fraction, c.seed, c.rank, c.test_rmse, c.val_rmse,
               c.learning_rate, c.l2_reg, c.epochs, c.diverged] for c in cells]
    paths.append(write_csv(out / "complete_cells.csv",
                           ["matrix", "loss", "thresholds", "fraction", "seed", "rank", "test_rmse", "val_rmse",
                            "learning_rate", "l2_reg", "epochs", "diverged_settings"], detail, timestamp))
    return paths


# -- figure 1 ----------------------------------------------------------------


@dataclass
class Figure1Row:
    family: str
    curve: list[tuple[int, float]]
    witness_rank: int
    witness_verified: bool


def run_figure1(n: int, k_max: int | None = None) -> list[Figure1Row]:
    if n < 8:
        raise ValidationError(f"n: figure-one matrices need n >= 8, got {n}")
    k_max = n if k_max is None else min(k_max, n)
    rows = []
    for g in figure_one_matrices(n):
        curve = approx_rank_curve(g.matrix.data.astype(float), k_max)
        rows.append(Figure1Row(g.name, curve, g.witness.rank, verify_witness(g.matrix, g.witness)))
    return rows


def write_figure1(rows: list[Figure1Row], out, timestamp: bool = True) -> Path:
    flat = [[r.family, k, res, r.witness_rank, int(r.witness_verified)] for r in rows for k, res in r.curve]
    return write_csv(Path(out) / "figure1.csv", ["family", "k", "residual", "witness_rank", "witness_verified"],
                     flat, timestamp, comments=["residual: squared Frobenius error of the best rank-k approximation"])


# -- recommend ---------------------------------------------------------------


@dataclass
class RecommendRow:
    k: int
    method: Method
    val_rmse: float
    accuracy: float
    learning_rate: float
    l2_reg: float
    epochs: int
    protocol: str


def load_dataset(cfg: ExperimentConfig) -> RatingDataset:
    if cfg.dataset_path is None:
        raise ValidationError("dataset_path: required for recommend")
    if cfg.validation_path is not None:
        return load_movielens_pair(cfg.dataset_path, cfg.validation_path, cfg.rating_shift, cfg.dataset_levels)
    ds = load_movielens(cfg.dataset_path, cfg.rating_shift, cfg.dataset_levels)
    return split(ds, cfg.holdout_fraction, cfg.seed)


def run_recommend(cfg: ExperimentConfig, dataset: RatingDataset | None = None) -> list[RecommendRow]:
    """Validation RMSE and +-0.5 accuracy per rank and method, tuned on the validation entries."""
    ds = dataset if dataset is not None else load_dataset(cfg)
    tasks = [(k, m) for k in cfg.ranks for m in cfg.parsed_methods()]

    def one(task):
        k, method = task
        best = tune(ds.observations, cfg, method, k, cfg.seed, ds.n_levels)
        if best.report is None:
            return RecommendRow(k, method, math.nan, math.nan, math.nan, math.nan, 0, ds.protocol)
        model = best.report.final_model
        link = metric_link(method.loss)
        return RecommendRow(k, method, rmse(model, ds.observations, link, cfg.sharpness),
                            accuracy_half(model, ds.observations, link, cfg.sharpness),
                            best.learning_rate, best.l2_reg, best.report.epochs_run, ds.protocol)

    return run_pool(one, tasks, cfg.threads)


def write_recommend(rows: list[RecommendRow], out, timestamp: bool = True) -> Path:
    body = [[r.k, r.method.loss.value, r.method.policy, r.val_rmse, r.accuracy, r.learning_rate, r.l2_reg, r.epochs]
            for r in rows]
    protocols = sorted({r.protocol for r in rows})
    return write_csv(Path(out) / "recommend.csv",
                     ["k", "loss", "thresholds", "val_rmse", "accuracy", "learning_rate", "l2_reg", "epochs"],
                     body, timestamp, comments=[f"protocol: {p}" for p in protocols])
