"""Command-line entry point: ``grrmf <command> [options]``.

Exit status is 0 on success, 1 for invalid input or configuration and 2
for runtime failures such as divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from grrmf import experiments
from grrmf.analysis import (
    GrrWitness,
    check_lemma_suite,
    rank1_grf_representable,
    structure_report,
    threshold_bound_demo,
    uniqueness_check,
    verify_witness,
)
from grrmf.analysis.rank1 import MAX_SIDE
from grrmf.config import ExperimentConfig, load_config
from grrmf.core import FactorModel, read_matrix, read_real_matrix, read_triplets
from grrmf.errors import GrrError, StructuralError, ValidationError
from grrmf.generators import Family, SyntheticSpec, generate
from grrmf.optim import auto_thresholds

log = logging.getLogger("grrmf")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--out", type=Path, help="output directory (default from config, else ./results)")
    p.add_argument("--seed", type=int, help="base seed; trials use seed, seed+1, ...")
    p.add_argument("--threads", type=int, help="worker threads for independent cells")
    p.add_argument("--no-timestamp", action="store_true", help="omit the generated-at header line")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="grrmf", description="Ordinal matrix factorization under generalized round links.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, text in [
        ("recover", "fit fully observed synthetic matrices; epoch vs RMSE curves"),
        ("complete", "held-out completion tables over observation fractions"),
        ("recommend", "validation RMSE and accuracy on a rating dataset"),
    ]:
        _common(sub.add_parser(name, help=text))

    fig = sub.add_parser("figure1", help="SVD residual curves and GRR witnesses for binary families")
    _common(fig)
    fig.add_argument("--n", type=int, help="matrix size (>= 8)")
    fig.add_argument("--k-max", type=int)

    an = sub.add_parser("analyze", help="structure bounds, witness checks, rank-1 decision, uniqueness")
    _common(an)
    src = an.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix", type=Path, help="ordinal matrix file")
    src.add_argument("--family", choices=[f.value for f in Family])
    an.add_argument("--n", type=int, default=10)
    an.add_argument("--bandwidth", type=int, default=3)
    an.add_argument("--rank", type=int, default=2, help="rank of a random_low_grr matrix")
    an.add_argument("--levels", type=int, default=5, help="levels of a random_low_grr matrix")
    an.add_argument("--thresholds", help="comma-separated thresholds")
    an.add_argument("--witness-u", type=Path)
    an.add_argument("--witness-v", type=Path)
    an.add_argument("--tau-alt", help="comma-separated thresholds for the threshold-change construction")
    an.add_argument("--lemma-trials", type=int, default=100)
    an.add_argument("--model-u", type=Path)
    an.add_argument("--model-v", type=Path)
    an.add_argument("--observed", type=Path, help="triplet file of observed entries")
    an.add_argument("--epsilon", type=float, default=0.5)
    an.add_argument("--boundary-pad", type=float)

    lem = sub.add_parser("lemmas", help="randomized lemma property suite")
    _common(lem)
    lem.add_argument("--trials", type=int, default=500)
    return parser


def _config(args) -> ExperimentConfig:
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value
    if args.config is not None:
        cfg = load_config(args.config, overrides)
    else:
        cfg = ExperimentConfig.from_mapping(overrides)
    return cfg.with_overrides(seed=args.seed, threads=args.threads,
                              out=str(args.out) if args.out is not None else None)


def _floats(text: str | None):
    if text is None:
        return None
    try:
        return np.array([float(t) for t in text.split(",") if t.strip()])
    except ValueError:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}") from None


def _jsonl(path: Path, records, timestamp: bool) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    if timestamp:
        lines.append(json.dumps({"generated": datetime.now(timezone.utc).isoformat(timespec="seconds")}))
    lines += [json.dumps(r) for r in records]
    path.write_text("\n".join(lines) + "\n")
    return path


def cmd_recover(args) -> int:
    cfg = _config(args)
    runs = experiments.run_recover(cfg)
    for p in experiments.write_recover(runs, cfg.out, not args.no_timestamp):
        print(p)
    for r in runs:
        print(f"{r.matrix:16s} {r.method.label:24s} seed={r.seed} final_rmse={r.final_rmse:.4f}")
    return EXIT_RUNTIME if any(r.report is None for r in runs) else EXIT_OK


def cmd_complete(args) -> int:
    cfg = _config(args)
    cells = experiments.run_complete(cfg)
    for p in experiments.write_complete(cells, cfg.out, not args.no_timestamp):
        print(p)
    for matrix, rows in experiments.completion_table(cells).items():
        for label, row in rows.items():
            scores = "  ".join(f"{f:g}:{c.mean:.3f}" for f, c in sorted(row.items()))
            print(f"{matrix:16s} {label:24s} {scores}")
    return EXIT_OK


def cmd_recommend(args) -> int:
    cfg = _config(args)
    rows = experiments.run_recommend(cfg)
    print(experiments.write_recommend(rows, cfg.out, not args.no_timestamp))
    for r in rows:
        print(f"k={r.k:3d} {r.method.label:24s} rmse={r.val_rmse:.4f} acc={r.accuracy:.4f}")
    return EXIT_OK


def cmd_figure1(args) -> int:
    cfg = _config(args)
    n = args.n if args.n is not None else cfg.n
    k_max = args.k_max if args.k_max is not None else cfg.k_max
    rows = experiments.run_figure1(n, k_max)
    print(experiments.write_figure1(rows, cfg.out, not args.no_timestamp))
    for r in rows:
        print(f"{r.family:28s} witness_rank={r.witness_rank} verified={r.witness_verified}")
    return EXIT_OK


def _analysis_input(args):
    if args.matrix is not None:
        return read_matrix(args.matrix), None, args.matrix.stem
    spec = SyntheticSpec(Family(args.family), args.n, seed=args.seed or 0, bandwidth=args.bandwidth, rank=args.rank,
                         n_levels=args.levels)
    g = generate(spec)
    return g.matrix, g.witness, g.name


def cmd_analyze(args) -> int:
    cfg = _config(args)
    y, witness, name = _analysis_input(args)
    records = []
    rep = structure_report(y)
    records.append({"check": "structures", "matrix": name, **rep.as_dict()})

    if args.witness_u is not None or args.witness_v is not None:
        if args.witness_u is None or args.witness_v is None:
            raise ValidationError("--witness-u and --witness-v go together")
        tau = _floats(args.thresholds)
        if tau is None:
            raise ValidationError("--thresholds is required with an explicit witness")
        witness = GrrWitness(read_real_matrix(args.witness_u), read_real_matrix(args.witness_v), tau)
    if witness is not None:
        ok = verify_witness(y, witness)
        records.append({"check": "witness", "rank": witness.rank, "verified": ok, "min_margin": witness.min_margin})
        tau_alt = _floats(args.tau_alt)
        if tau_alt is not None and ok:
            demo = threshold_bound_demo(y, witness, tau_alt)
            records.append({"check": "threshold_change", **json.loads(demo.to_json())})

    if args.lemma_trials > 0:
        lem = check_lemma_suite(args.lemma_trials, args.seed or 0)
        records.append({"check": "lemmas", "trials": lem.trials, "passed": lem.passed,
                        "violations": lem.violations})

    if max(y.shape) <= MAX_SIDE:
        tau = _floats(args.thresholds)
        if tau is None:
            tau = witness.thresholds if witness is not None else auto_thresholds(y.n_levels)
        r1 = rank1_grf_representable(y, tau)
        rec = {"check": "rank1", "thresholds": tau.tolist(), "representable": r1.representable,
               "patterns_checked": r1.patterns_checked, "note": r1.note}
        if r1.witness is not None:
            rec["u"] = r1.witness.u.ravel().tolist()
            rec["v"] = r1.witness.v.ravel().tolist()
        records.append(rec)

    if args.model_u is not None or args.model_v is not None or args.observed is not None:
        if None in (args.model_u, args.model_v, args.observed):
            raise ValidationError("uniqueness needs --model-u, --model-v and --observed")
        tau = _floats(args.thresholds)
        if tau is None:
            raise ValidationError("--thresholds is required for the uniqueness check")
        model = FactorModel(read_real_matrix(args.model_u), read_real_matrix(args.model_v), tau)
        obs = read_triplets(args.observed, shape=model.shape, n_levels=tau.size)
        uq = uniqueness_check(obs, model, args.epsilon, args.boundary_pad, threads=cfg.threads)
        records += [{"check": "uniqueness", **json.loads(line)} for line in uq.to_jsonl().splitlines()]

    path = _jsonl(Path(cfg.out) / "analyze.jsonl", records, not args.no_timestamp)
    for r in records:
        print(json.dumps(r))
    log.info("wrote %s", path)
    return EXIT_OK


def cmd_lemmas(args) -> int:
    cfg = _config(args)
    if args.trials < 1:
        raise ValidationError("--trials must be >= 1")
    rep = check_lemma_suite(args.trials, cfg.seed)
    path = Path(cfg.out) / "lemmas.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    header = "" if args.no_timestamp else json.dumps(
        {"generated": datetime.now(timezone.utc).isoformat(timespec="seconds")}) + "\n"
    path.write_text(header + rep.to_jsonl())
    sys.stdout.write(rep.to_jsonl())
    return EXIT_OK if rep.ok else EXIT_RUNTIME


COMMANDS = {
    "recover": cmd_recover,
    "complete": cmd_complete,
    "recommend": cmd_recommend,
    "figure1": cmd_figure1,
    "analyze": cmd_analyze,
    "lemmas": cmd_lemmas,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, StructuralError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (GrrError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
