"""Command-line driver: generate, train, sweep, resolve.

Every command accepts `--config FILE` with `key=value` lines (keys are the
long flag names, dashes or underscores); explicit flags override the file.
Each run writes its effective configuration next to its outputs so results
can be reproduced.

Exit codes: 0 success, 2 usage error, 3 data/configuration error,
4 quality-gate failure.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import bounds, dataset, matching, metrics, pipeline, resolver
from .errors import ErboundError

EXIT_OK = 0
EXIT_DATA = 3
EXIT_GATE = 4

STATS_FORMAT_VERSION = 1

SWEEP_COLUMNS = [
    "threshold", "r_pairs", "tm_pairs", "c_t_est",
    "prec_lb", "prec_lb_lo", "prec_lb_hi",
    "rec_lb", "rec_lb_lo", "rec_lb_hi",
    "f1_lb", "f1_lb_lo", "f1_lb_hi",
    "true_prec", "true_rec", "true_f1",
]

# options that must be present after merging the config file
_REQUIRED = {
    "generate": ("out",),
    "train": ("out", "records", "gold", "schema"),
    "sweep": ("out", "model", "records", "validation_stats"),
    "resolve": ("out", "model", "records", "validation_stats"),
}


def _read_config_file(path: str) -> dict[str, str]:
    values = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ErboundError(f"{path}:{line_no}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _explicit_dests(argv: list[str], sub: argparse.ArgumentParser) -> set[str]:
    tokens = set()
    for tok in argv:
        tokens.add(tok.split("=", 1)[0] if tok.startswith("--") else tok)
    explicit = set()
    for action in sub._actions:
        if any(opt in tokens for opt in action.option_strings):
            explicit.add(action.dest)
    return explicit


def _merge_config(args: argparse.Namespace, argv: list[str],
                  sub: argparse.ArgumentParser) -> None:
    """Fill namespace values from the config file wherever the flag was not
    given on the command line."""
    if not args.config:
        return
    raw = _read_config_file(args.config)
    actions = {a.dest: a for a in sub._actions}
    explicit = _explicit_dests(argv, sub)
    for key, value in raw.items():
        dest = key.replace("-", "_")
        if dest not in actions or dest in ("help", "config"):
            raise ErboundError(f"unknown config key {key!r}")
        if dest in explicit:
            continue
        action = actions[dest]
        if isinstance(action, argparse._StoreTrueAction):
            parsed = value.lower() in ("1", "true", "yes")
        elif action.type is not None:
            try:
                parsed = action.type(value)
            except ValueError as exc:
                raise ErboundError(f"config key {key!r}: {exc}") from exc
        else:
            parsed = value
        if action.choices is not None and parsed not in action.choices:
            raise ErboundError(
                f"config key {key!r}: {parsed!r} not in {sorted(action.choices)}")
        setattr(args, dest, parsed)


def _write_effective_config(out_dir: Path, command: str, args: argparse.Namespace) -> None:
    lines = []
    for key in sorted(vars(args)):
        if key in ("func", "config", "command"):
            continue
        lines.append(f"{key}={getattr(args, key)}")
    (out_dir / f"{command}.effective.cfg").write_text("\n".join(lines) + "\n")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "%.10g" % value
    return str(value)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    records, gold = dataset.generate_synthetic(
        n_entities=args.n_entities,
        records_per_entity=args.records_per_entity,
        dims=args.dims,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    schema = dataset.synthetic_schema(args.dims)
    out = _out_dir(args)
    dataset.write_records_csv(out / "records.csv", records, schema)
    dataset.write_gold_csv(out / "gold.csv", gold)
    dataset.save_schema_json(out / "schema.json", schema)
    _write_effective_config(out, "generate", args)
    print(f"wrote {len(records)} records, {len(gold.truth_pairs())} truth pairs to {out}")
    return EXIT_OK


def _stats_payload(outcome: pipeline.TrainOutcome, threshold: float,
                   confidence: float) -> dict:
    stats = outcome.stats_at(threshold)
    summary = {
        **stats.to_dict(),
        "c_v": stats.c_v,
        "recall_v": stats.recall_v,
        "wilson_recall": list(bounds.wilson_interval(
            stats.n_true_match, stats.n_positive, confidence)),
        "precision_v": None,
        "wilson_precision": None,
    }
    if stats.n_predicted_match > 0:
        summary["precision_v"] = stats.precision_v
        summary["wilson_precision"] = list(bounds.wilson_interval(
            stats.n_true_match, stats.n_predicted_match, confidence))
    return {
        "format_version": STATS_FORMAT_VERSION,
        "threshold": threshold,
        "confidence": confidence,
        "pairs": [
            {"id_a": p.id_a, "id_b": p.id_b, "label": p.label, "score": p.score}
            for p in outcome.validation
        ],
        "stats": summary,
    }


def load_validation_stats(path) -> tuple[np.ndarray, np.ndarray, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != STATS_FORMAT_VERSION:
        raise ErboundError(f"unsupported stats format_version {doc.get('format_version')!r}")
    scores = np.array([p["score"] for p in doc["pairs"]], dtype=float)
    labels = np.array([p["label"] for p in doc["pairs"]], dtype=int)
    return scores, labels, doc


def cmd_train(args) -> int:
    schema = dataset.load_schema_json(args.schema)
    records = dataset.load_records_csv(args.records, schema)
    gold = dataset.load_gold(args.gold, mode=args.gold_mode,
                             valid_ids=[r.record_id for r in records])
    spec = dataset.SplitSpec(
        n_train_pairs=args.n_train_pairs,
        n_validation_pairs=args.n_validation_pairs,
        positive_fraction_train=args.positive_fraction_train,
        positive_fraction_validation=args.positive_fraction_validation,
        seed=args.seed,
    )
    config = matching.TrainConfig(learning_rate=args.learning_rate,
                                  epochs=args.epochs, l2=args.l2, seed=args.seed)
    outcome = pipeline.train_pipeline(records, gold, schema, spec, config,
                                      threshold=args.threshold)
    out = _out_dir(args)
    matching.save_model(out / "model.json", outcome.model)
    payload = _stats_payload(outcome, args.threshold, args.confidence)
    (out / "validation_stats.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")
    dataset.write_records_csv(out / "test_records.csv", outcome.split.test_records, schema)
    dataset.write_gold_csv(out / "test_gold.csv", outcome.split.test_gold)
    _write_effective_config(out, "train", args)

    s = payload["stats"]
    prec = "undefined" if s["precision_v"] is None else "%.4f" % s["precision_v"]
    print(f"trained on {len(outcome.split.train_pairs)} pairs; "
          f"validation n={s['n_pairs']} c_v={s['c_v']:.3f} "
          f"precision_v={prec} recall_v={s['recall_v']:.4f}")
    print(f"test set: {len(outcome.split.test_records)} records")
    return EXIT_OK


def _sweep_row_cells(row: pipeline.SweepRow) -> list[str]:
    return [_fmt(v) for v in (
        row.threshold, row.r_pairs, row.tm_pairs, row.c_t,
        row.precision_lb, row.precision_lb_lo, row.precision_lb_hi,
        row.recall_lb, row.recall_lb_lo, row.recall_lb_hi,
        row.f1_lb, row.f1_lb_lo, row.f1_lb_hi,
        row.true_precision, row.true_recall, row.true_f1,
    )]


def cmd_sweep(args) -> int:
    if not (0.0 < args.grid_start <= args.grid_stop < 1.0) or args.grid_steps < 1:
        raise ErboundError("threshold grid must lie inside (0, 1) with steps >= 1")
    model = matching.load_model(args.model)
    records = dataset.load_records_csv(args.records, model.schema)
    val_scores, val_labels, _ = load_validation_stats(args.validation_stats)
    gold = None
    if args.gold:
        gold = dataset.load_gold(args.gold, mode=args.gold_mode,
                                 valid_ids=[r.record_id for r in records])
    grid = np.linspace(args.grid_start, args.grid_stop, args.grid_steps)
    result = pipeline.sweep_thresholds(
        model, records, val_scores, val_labels, grid,
        gold=gold, c_t_override=args.ct, confidence=args.confidence,
        select_metric=args.select_metric, recall_floor=args.recall_floor,
    )
    out = _out_dir(args)
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for row in result.rows:
            writer.writerow(_sweep_row_cells(row))
        fh.write(f"# select_metric={result.select_metric}\n")
        if result.recall_floor is not None:
            fh.write(f"# recall_floor={_fmt(result.recall_floor)}\n")
        if result.best is not None:
            fh.write(f"# best_threshold={_fmt(result.best.threshold)}\n")
            fh.write(f"# best_{result.select_metric}="
                     f"{_fmt(getattr(result.best, result.select_metric))}\n")
    best_doc = None
    if result.best is not None:
        best_doc = {
            "threshold": result.best.threshold,
            "select_metric": result.select_metric,
            "value": getattr(result.best, result.select_metric),
            "recall_floor": result.recall_floor,
        }
    (out / "best.json").write_text(json.dumps(best_doc, indent=2, sort_keys=True) + "\n")
    if args.write_clusterings:
        for row in result.rows:
            clustering = pipeline.resolve_at(model, records, row.threshold)
            resolver.write_clustering_csv(
                out / f"clustering_{row.threshold:.6f}.csv", clustering)
    _write_effective_config(out, "sweep", args)
    if result.best is None:
        print("sweep finished; no threshold produced a defined bound")
    else:
        print(f"sweep finished; best {result.select_metric}="
              f"{_fmt(getattr(result.best, result.select_metric))} "
              f"at threshold {_fmt(result.best.threshold)}")
    return EXIT_OK


def cmd_resolve(args) -> int:
    model = matching.load_model(args.model)
    records = dataset.load_records_csv(args.records, model.schema)
    val_scores, val_labels, _ = load_validation_stats(args.validation_stats)
    threshold = model.threshold if args.threshold is None else args.threshold
    clustering = pipeline.resolve_at(model, records, threshold)
    out = _out_dir(args)
    resolver.write_clustering_csv(out / "clustering.csv", clustering)

    stats = bounds.ValidationStats.from_scores(val_scores, val_labels, threshold)
    n = len(records)
    total_pairs = n * (n - 1) // 2
    tm_pairs = int((matching.condensed_pairwise_scores(model, records) >= threshold).sum())
    r_pairs = metrics.intra_cluster_pair_count(clustering)
    report = bounds.compute_bound_report(stats, tm_pairs, r_pairs, total_pairs,
                                         c_t=args.ct, confidence=args.confidence)
    (out / "bound_report.json").write_text(report.to_json() + "\n")
    _write_effective_config(out, "resolve", args)
    print(f"resolved {n} records into {len(clustering.clusters)} clusters "
          f"at threshold {_fmt(threshold)}")
    print(f"precision_lb={report.precision_lb:.4f} "
          f"recall_lb={report.recall_lb:.4f} f1_lb={report.f1_lb:.4f}")

    gates = [
        ("precision_lb", args.min_precision_lb, report.precision_lb),
        ("recall_lb", args.min_recall_lb, report.recall_lb),
        ("f1_lb", args.min_f1_lb, report.f1_lb),
    ]
    failed = [(name, floor, value) for name, floor, value in gates
              if floor is not None and value < floor]
    if failed:
        for name, floor, value in failed:
            print(f"quality gate failed: {name}={value:.4f} < required {floor}",
                  file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="erbound",
        description="Pairwise entity resolution with estimated performance lower bounds.",
        allow_abbrev=False,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub_map = {}

    def add_common(p):
        p.add_argument("--config", help="key=value file; flags override it")
        p.add_argument("--out", help="output directory")

    g = sub.add_parser("generate", help="write a synthetic dataset", allow_abbrev=False)
    add_common(g)
    g.add_argument("--n-entities", type=int, default=100)
    g.add_argument("--records-per-entity", type=int, default=10)
    g.add_argument("--dims", type=int, default=10)
    g.add_argument("--noise-sigma", type=float, default=0.02)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_generate)
    sub_map["generate"] = g

    t = sub.add_parser("train", help="split, train the match model, score validation",
                       allow_abbrev=False)
    add_common(t)
    t.add_argument("--records")
    t.add_argument("--gold")
    t.add_argument("--schema")
    t.add_argument("--gold-mode", choices=dataset.GOLD_MODES, default="cluster-labels")
    t.add_argument("--n-train-pairs", type=int, default=100)
    t.add_argument("--n-validation-pairs", type=int, default=100)
    t.add_argument("--positive-fraction-train", type=float, default=0.5)
    t.add_argument("--positive-fraction-validation", type=float, default=0.5)
    t.add_argument("--learning-rate", type=float, default=0.1)
    t.add_argument("--epochs", type=int, default=500)
    t.add_argument("--l2", type=float, default=0.01)
    t.add_argument("--threshold", type=float, default=0.5)
    t.add_argument("--confidence", type=float, default=0.95)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_train)
    sub_map["train"] = t

    s = sub.add_parser("sweep", help="bound curves across a threshold grid",
                       allow_abbrev=False)
    add_common(s)
    s.add_argument("--model")
    s.add_argument("--records")
    s.add_argument("--validation-stats")
    s.add_argument("--gold", help="optional gold CSV to add true metrics")
    s.add_argument("--gold-mode", choices=dataset.GOLD_MODES, default="cluster-labels")
    s.add_argument("--grid-start", type=float, default=0.05)
    s.add_argument("--grid-stop", type=float, default=0.95)
    s.add_argument("--grid-steps", type=int, default=19)
    s.add_argument("--confidence", type=float, default=0.95)
    s.add_argument("--ct", type=float, default=None,
                   help="fixed test class balance; default: estimate it")
    s.add_argument("--select-metric", choices=pipeline.SELECT_METRICS, default="f1_lb")
    s.add_argument("--recall-floor", type=float, default=None)
    s.add_argument("--write-clusterings", action="store_true")
    s.set_defaults(func=cmd_sweep)
    sub_map["sweep"] = s

    r = sub.add_parser("resolve", help="resolve at one threshold and gate on bounds",
                       allow_abbrev=False)
    add_common(r)
    r.add_argument("--model")
    r.add_argument("--records")
    r.add_argument("--validation-stats")
    r.add_argument("--threshold", type=float, default=None,
                   help="default: the model's stored threshold")
    r.add_argument("--confidence", type=float, default=0.95)
    r.add_argument("--ct", type=float, default=None)
    r.add_argument("--min-precision-lb", type=float, default=None)
    r.add_argument("--min-recall-lb", type=float, default=None)
    r.add_argument("--min-f1-lb", type=float, default=None)
    r.set_defaults(func=cmd_resolve)
    sub_map["resolve"] = r
    return parser, sub_map


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, sub_map = build_parser()
    args = parser.parse_args(argv)
    sub = sub_map[args.command]
    try:
        _merge_config(args, argv, sub)
        for dest in _REQUIRED[args.command]:
            if getattr(args, dest) is None:
                sub.error(f"the following argument is required: --{dest.replace('_', '-')}")
        return args.func(args)
    except ErboundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
