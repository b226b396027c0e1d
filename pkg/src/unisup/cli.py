"""Command-line front end: synth, score, sample, evaluate, compare.

Machine-readable output goes to stdout or files; logs go to stderr.
Exit codes: 0 success, 1 usage error, 2 invalid data or config,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from unisup import curriculum, evalkit, fusion, synthgen
from unisup.cascade import arbitrate
from unisup.datamodel import (
    PipelineConfig,
    load_config,
    load_default_config,
    read_corpus,
    validate_record,
    write_corpus,
)

logger = logging.getLogger("unisup")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="unisup", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic corpus")
    p_synth.add_argument("--spec", help="synth spec file (key=value); defaults used if omitted")
    p_synth.add_argument("--out", required=True, help="output directory")

    p_score = sub.add_parser("score", help="fuse signals into supervision targets")
    p_score.add_argument("--in", dest="corpus", required=True, help="corpus JSONL")
    p_score.add_argument("--config", help="pipeline config file; defaults used if omitted")
    p_score.add_argument("--out", required=True, help="targets JSONL to write")
    p_score.add_argument(
        "--ablation",
        choices=["rel-only"],
        help="rel-only: drop the engagement term from the fused target",
    )
    p_score.add_argument("--threads", type=int, default=1)

    p_sample = sub.add_parser("sample", help="draw a difficulty-weighted training set")
    p_sample.add_argument("--targets", required=True, help="targets JSONL from `score`")
    p_sample.add_argument("--temperature", type=float, default=1.0)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--negatives-per-positive", type=int, default=4)
    p_sample.add_argument("--out", required=True, help="training records JSONL to write")
    p_sample.add_argument("--threads", type=int, default=1)

    p_eval = sub.add_parser("evaluate", help="retrieve top-K and compute graded metrics")
    p_eval.add_argument("--corpus", required=True, help="corpus JSONL with ratings")
    p_eval.add_argument(
        "--embeddings", required=True,
        help="directory holding items.emb and queries.emb",
    )
    p_eval.add_argument("--config", help="pipeline config file; defaults used if omitted")
    p_eval.add_argument("--k", type=int, help="retrieval depth (default from config)")
    p_eval.add_argument(
        "--cutoffs", default=",".join(f"{c:g}" for c in evalkit.DEFAULT_DENSITY_CUTOFFS),
        help="comma-separated engagement percentile cutoffs",
    )
    p_eval.add_argument("--out", required=True, help="output directory")
    p_eval.add_argument("--threads", type=int, default=1)

    p_cmp = sub.add_parser("compare", help="lift report between two evaluate runs")
    p_cmp.add_argument("--run-a", required=True, help="per_query.tsv of the baseline run")
    p_cmp.add_argument("--run-b", required=True, help="per_query.tsv of the contrast run")
    p_cmp.add_argument("--out", help="write the report JSON here instead of stdout")
    return parser


def _load_pipeline_config(path: str | None) -> PipelineConfig:
    return load_config(path) if path else load_default_config()


# --------------------------------------------------------------------------
# subcommand bodies


def _cmd_synth(args: argparse.Namespace) -> int:
    spec = synthgen.load_spec(args.spec) if args.spec else synthgen.SynthSpec()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records, items, query_vectors = synthgen.generate(spec)
    write_corpus(out_dir / "corpus.jsonl", records)
    evalkit.write_embeddings(out_dir / "items.emb", items)
    evalkit.write_embeddings(out_dir / "queries.emb", query_vectors)
    summary = {
        "queries": spec.n_queries,
        "records": len(records),
        "dimension": spec.dimension,
        "out": str(out_dir),
    }
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _cmd_score(args: argparse.Namespace) -> int:
    config = _load_pipeline_config(args.config)
    if args.ablation == "rel-only":
        config = replace(config, mu_rel=1.0, lambda_eng=0.0)
    records = read_corpus(args.corpus)
    issues: list[str] = []
    for i, record in enumerate(records):
        for issue in validate_record(record, config):
            issues.append(f"record {i} ({record.query_id}/{record.item_id}): {issue}")
    if issues:
        raise ValueError("; ".join(issues[:20]))
    pairs = fusion.score_corpus(records, config, threads=args.threads)
    fusion.write_scored_rows(pairs, args.out)
    positives = sum(1 for p in pairs if p.target.polarity == fusion.POSITIVE)
    summary = {
        "records": len(pairs),
        "positives": positives,
        "negatives": len(pairs) - positives,
        "out": args.out,
    }
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _cmd_sample(args: argparse.Namespace) -> int:
    pairs = fusion.read_scored_rows(args.targets)
    plan = curriculum.build_plan(
        pairs, args.temperature, negatives_per_positive=args.negatives_per_positive
    )
    drawn = curriculum.sample(plan, args.seed, threads=args.threads)
    summary = curriculum.emit_dataset(pairs, drawn, args.out)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _parse_cutoffs(text: str) -> tuple[float, ...]:
    try:
        cutoffs = tuple(float(part) for part in text.split(","))
    except ValueError as exc:
        raise ValueError(f"bad cutoff list {text!r}") from exc
    if not cutoffs:
        raise ValueError("cutoff list must not be empty")
    return cutoffs


def _format_cell(value: float | str) -> str:
    if isinstance(value, str):
        return value
    return f"{value:.10g}"


def _cmd_evaluate(args: argparse.Namespace) -> int:
    config = _load_pipeline_config(args.config)
    k = args.k if args.k is not None else config.k_eval
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    cutoffs = _parse_cutoffs(args.cutoffs)
    records = read_corpus(args.corpus)
    emb_dir = Path(args.embeddings)
    items = evalkit.read_embeddings(emb_dir / "items.emb")
    queries = evalkit.read_embeddings(emb_dir / "queries.emb")

    by_query: dict[str, list] = {}
    for record in records:
        by_query.setdefault(record.query_id, []).append(record)

    missing = sorted(set(by_query) - set(queries.ids))
    if missing:
        raise ValueError(f"no query vector for {missing[:3]} (+{max(0, len(missing) - 3)} more)")

    rows = []
    for query_id in sorted(by_query):
        group = by_query[query_id]
        ratings = {r.item_id: arbitrate(r, config).rating for r in group}
        raws = [
            (r.item_id, fusion.raw_engagement_of(r, config)) for r in group
        ]
        percentile_by_id = dict(
            zip(
                [item_id for item_id, _ in raws],
                evalkit.engagement_percentiles([value for _, value in raws]),
            )
        )
        hits = evalkit.topk(queries.vector(query_id), items, k)
        # items retrieved from outside this query's annotated candidate set
        # count as rating 0 at percentile 0
        ranked = evalkit.RankedList(
            query_id=query_id,
            items=tuple(
                evalkit.RankedItem(
                    item_id=item_id,
                    similarity=score,
                    rating=ratings.get(item_id, 0),
                    engagement_percentile=float(percentile_by_id.get(item_id, 0.0)),
                )
                for item_id, score in hits
            ),
        )
        pool = list(ratings.values())
        if len(pool) < len(ranked.items):
            pool = pool + [0] * (len(ranked.items) - len(pool))
        rows.append(evalkit.query_metrics(ranked, pool, config, cutoffs))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    columns = list(rows[0].keys())
    with open(out_dir / "per_query.tsv", "w", encoding="utf-8") as fh:
        fh.write("\t".join(columns) + "\n")
        for row in rows:
            fh.write("\t".join(_format_cell(row[c]) for c in columns) + "\n")
    macro = evalkit.aggregate_metrics(rows)
    # plot-data export: aggregate engagement-density curve, one row per cutoff
    with open(out_dir / "density.tsv", "w", encoding="utf-8") as fh:
        fh.write("cutoff\tshare\n")
        for cutoff in cutoffs:
            share = macro[evalkit.density_column(cutoff)]
            fh.write(f"{cutoff:g}\t{_format_cell(share)}\n")
    report = {
        "queries": len(rows),
        "k": k,
        "macro": macro,
    }
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(json.dumps({"queries": len(rows), "k": k, "out": str(out_dir)}, sort_keys=True))
    return EXIT_OK


def _read_metric_tsv(path: str | Path) -> list[dict[str, float | str]]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty metrics table")
    header = lines[0].split("\t")
    if "query_id" not in header:
        raise ValueError(f"{path}: missing query_id column")
    rows: list[dict[str, float | str]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != len(header):
            raise ValueError(f"{path}: line {lineno} has {len(cells)} cells, expected {len(header)}")
        row: dict[str, float | str] = {}
        for column, cell in zip(header, cells):
            row[column] = cell if column == "query_id" else float(cell)
        rows.append(row)
    return rows


def _cmd_compare(args: argparse.Namespace) -> int:
    rows_a = _read_metric_tsv(args.run_a)
    rows_b = _read_metric_tsv(args.run_b)
    ids_a = {r["query_id"] for r in rows_a}
    ids_b = {r["query_id"] for r in rows_b}
    if ids_a != ids_b:
        diff = sorted(ids_a ^ ids_b)
        raise ValueError(f"query sets differ between runs (e.g. {diff[:3]})")
    report = {
        "queries": len(ids_a),
        "metrics": evalkit.lift_report(
            evalkit.aggregate_metrics(rows_a), evalkit.aggregate_metrics(rows_b)
        ),
    }
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(json.dumps({"queries": len(ids_a), "out": args.out}, sort_keys=True))
    else:
        sys.stdout.write(text)
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "score": _cmd_score,
    "sample": _cmd_sample,
    "evaluate": _cmd_evaluate,
    "compare": _cmd_compare,
}


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ValueError as exc:
        logger.error("invalid input: %s", exc)
        return EXIT_DATA
    except OSError as exc:
        logger.error("i/o failure: %s", exc)
        return EXIT_IO


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
