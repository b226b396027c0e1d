#!/usr/bin/env python3
"""Run the full pipeline over one synthetic corpus.

Chains synth -> score -> sample -> evaluate through the command-line
entry point, so every artifact lands exactly as the CLI writes it:

    workdir/
      data/          corpus.jsonl, items.emb, queries.emb
      targets.jsonl  fused supervision targets
      train.jsonl    difficulty-sampled training records
      eval/          per_query.tsv, density.tsv, report.json
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from unisup.cli import main as cli


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", required=True, help="output root, created if missing")
    parser.add_argument("--spec", help="synth spec file; generator defaults if omitted")
    parser.add_argument("--config", help="pipeline config file; defaults if omitted")
    parser.add_argument("--temperature", type=float, default=1.0, help="sampling temperature")
    parser.add_argument("--seed", type=int, default=0, help="sampling seed")
    parser.add_argument("--k", type=int, help="retrieval depth; config default if omitted")
    parser.add_argument("--threads", type=int, default=4)
    args = parser.parse_args()

    work = Path(args.workdir)
    data = work / "data"
    targets = work / "targets.jsonl"
    train = work / "train.jsonl"
    eval_dir = work / "eval"

    synth_cmd = ["synth", "--out", str(data)]
    if args.spec:
        synth_cmd += ["--spec", args.spec]

    score_cmd = [
        "score", "--in", str(data / "corpus.jsonl"), "--out", str(targets),
        "--threads", str(args.threads),
    ]
    if args.config:
        score_cmd += ["--config", args.config]

    sample_cmd = [
        "sample", "--targets", str(targets), "--temperature", str(args.temperature),
        "--seed", str(args.seed), "--out", str(train), "--threads", str(args.threads),
    ]

    evaluate_cmd = [
        "evaluate", "--corpus", str(data / "corpus.jsonl"),
        "--embeddings", str(data), "--out", str(eval_dir),
        "--threads", str(args.threads),
    ]
    if args.config:
        evaluate_cmd += ["--config", args.config]
    if args.k is not None:
        evaluate_cmd += ["--k", str(args.k)]

    for command in (synth_cmd, score_cmd, sample_cmd, evaluate_cmd):
        rc = cli(command)
        if rc != 0:
            return rc
    return 0


if __name__ == "__main__":
    sys.exit(main())
