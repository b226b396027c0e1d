from __future__ import annotations

import hashlib
import json
import math

import pytest

from unisup.cli import EXIT_DATA, EXIT_IO, EXIT_OK, EXIT_USAGE, main
from unisup.datamodel import (
    EngagementCounts,
    QipRecord,
    load_default_config,
    save_config,
    write_corpus,
)
from unisup.synthgen import SynthSpec, save_spec


def file_hash(path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_synth(tmp_path, name="data", **spec_overrides):
    fields = {"n_queries": 8, "items_per_query": 12, "dimension": 10, "seed": 13}
    fields.update(spec_overrides)
    spec = SynthSpec(**fields)
    spec_path = tmp_path / f"{name}.spec"
    save_spec(spec, spec_path)
    out_dir = tmp_path / name
    assert main(["synth", "--spec", str(spec_path), "--out", str(out_dir)]) == EXIT_OK
    return out_dir


class TestSynthCommand:
    def test_valid_spec_writes_files(self, tmp_path, capsys):
        out_dir = run_synth(tmp_path)
        assert (out_dir / "corpus.jsonl").exists()
        assert (out_dir / "items.emb").exists()
        assert (out_dir / "queries.emb").exists()
        summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert summary["queries"] == 8

    def test_missing_spec_file_is_io_error(self, tmp_path, caplog):
        rc = main(
            ["synth", "--spec", str(tmp_path / "absent.spec"), "--out", str(tmp_path / "o")]
        )
        assert rc == EXIT_IO
        assert "absent.spec" in caplog.text

    def test_same_spec_identical_hashes(self, tmp_path):
        dir_a = run_synth(tmp_path, "a")
        dir_b = run_synth(tmp_path, "b")
        for name in ("corpus.jsonl", "items.emb", "queries.emb"):
            assert file_hash(dir_a / name) == file_hash(dir_b / name)


class TestScoreCommand:
    def test_hand_fixture_targets(self, tmp_path, capsys):
        # three records engineered so the fused values are hand-checkable
        records = [
            QipRecord(
                query_id="q1",
                query_text="red shoes",
                item_id="best",
                item_text="red shoes",
                human_rating=4,
                channel_ranks={"ch_a": 1, "ch_b": 1, "ch_c": 1},
                engagement=EngagementCounts(orders=1),
            ),
            QipRecord(
                query_id="q1",
                query_text="red shoes",
                item_id="good",
                item_text="red running shoes",
                human_rating=3,
                channel_ranks={"ch_a": 1},
            ),
            QipRecord(
                query_id="q1",
                query_text="red shoes",
                item_id="bad",
                item_text="blue hat",
                human_rating=0,
            ),
        ]
        corpus = tmp_path / "corpus.jsonl"
        write_corpus(corpus, records)
        out = tmp_path / "targets.jsonl"
        assert main(["score", "--in", str(corpus), "--out", str(out)]) == EXIT_OK

        rows = {row["item_id"]: row for row in map(json.loads, out.open())}
        sig = lambda x: 1.0 / (1.0 + math.exp(-x))

        best = rows["best"]
        # rel_rank = 0.6*1 + 0.3*1 + 0.1*1 = 1; engagement peaks at ~1
        e_best = sig(8 * (1.0 / (1.0 + 1e-8 / math.log(2.5)) - 0.5))
        assert best["rel_rank"] == pytest.approx(1.0, abs=1e-9)
        assert best["target"] == pytest.approx(
            min(1.0, 0.85 * 1.0 + 0.15 * e_best), abs=1e-9
        )

        good = rows["good"]
        # rel_rank = 0.6*0.5 + 0.3*1 + 0.1*(1/3); zero engagement smooths
        # to sigmoid(-4)
        assert good["rel_rank"] == pytest.approx(0.3 + 0.3 + 0.1 / 3, abs=1e-12)
        assert good["target"] == pytest.approx(
            0.85 * (0.6 + 0.1 / 3) + 0.15 * sig(-4.0), abs=1e-9
        )

        bad = rows["bad"]
        assert bad["polarity"] == "negative"
        assert bad["target"] == -1.0
        assert bad["difficulty"] == 0.0

        summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert summary == {
            "records": 3,
            "positives": 2,
            "negatives": 1,
            "out": str(out),
        }

    def test_ablation_flag_drops_engagement_term(self, tmp_path):
        out_dir = run_synth(tmp_path)
        default_out = tmp_path / "targets.jsonl"
        ablated_out = tmp_path / "targets_rel.jsonl"
        corpus = str(out_dir / "corpus.jsonl")
        assert main(["score", "--in", corpus, "--out", str(default_out)]) == EXIT_OK
        assert (
            main(
                ["score", "--in", corpus, "--out", str(ablated_out), "--ablation", "rel-only"]
            )
            == EXIT_OK
        )
        for default_line, ablated_line in zip(default_out.open(), ablated_out.open()):
            default_row, ablated_row = json.loads(default_line), json.loads(ablated_line)
            if ablated_row["polarity"] == "positive":
                clipped = min(1.0, max(0.0, ablated_row["rel_rank"]))
                assert ablated_row["target"] == clipped
                assert default_row["rel_rank"] == ablated_row["rel_rank"]
            else:
                assert default_row["target"] == ablated_row["target"]

    def test_empty_corpus_gives_zero_summary(self, tmp_path, capsys):
        corpus = tmp_path / "empty.jsonl"
        corpus.write_text("", encoding="utf-8")
        out = tmp_path / "targets.jsonl"
        assert main(["score", "--in", str(corpus), "--out", str(out)]) == EXIT_OK
        assert out.read_text(encoding="utf-8") == ""
        summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert summary["records"] == 0
        assert summary["positives"] == 0
        assert summary["negatives"] == 0

    def test_invalid_record_is_data_error(self, tmp_path, caplog):
        record = QipRecord(
            query_id="q1", query_text="t", item_id="i1", item_text="t",
            human_rating=None, stage_distributions=None,
        )
        corpus = tmp_path / "corpus.jsonl"
        write_corpus(corpus, [record])
        rc = main(["score", "--in", str(corpus), "--out", str(tmp_path / "t.jsonl")])
        assert rc == EXIT_DATA
        assert "rating evidence" in caplog.text

    def test_config_flag_respected(self, tmp_path):
        from dataclasses import replace

        out_dir = run_synth(tmp_path)
        config = replace(load_default_config(), mu_rel=1.0, lambda_eng=0.0)
        cfg_path = tmp_path / "rel_only.cfg"
        save_config(config, cfg_path)
        by_cfg = tmp_path / "by_cfg.jsonl"
        by_flag = tmp_path / "by_flag.jsonl"
        corpus = str(out_dir / "corpus.jsonl")
        assert (
            main(["score", "--in", corpus, "--config", str(cfg_path), "--out", str(by_cfg)])
            == EXIT_OK
        )
        assert (
            main(["score", "--in", corpus, "--out", str(by_flag), "--ablation", "rel-only"])
            == EXIT_OK
        )
        assert by_cfg.read_bytes() == by_flag.read_bytes()


class TestSampleCommand:
    def test_summary_and_determinism(self, tmp_path, capsys):
        out_dir = run_synth(tmp_path)
        targets = tmp_path / "targets.jsonl"
        main(["score", "--in", str(out_dir / "corpus.jsonl"), "--out", str(targets)])
        capsys.readouterr()
        train_a = tmp_path / "train_a.jsonl"
        train_b = tmp_path / "train_b.jsonl"
        for out in (train_a, train_b):
            rc = main(
                [
                    "sample", "--targets", str(targets), "--temperature", "0.8",
                    "--seed", "5", "--out", str(out), "--threads", "4",
                ]
            )
            assert rc == EXIT_OK
        assert train_a.read_bytes() == train_b.read_bytes()
        summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert summary["total"] == summary["positives"] + summary["negatives"]
        assert sum(summary["rating_histogram"].values()) == summary["total"]


class TestEvaluateCommand:
    def test_outputs_and_totals(self, tmp_path, capsys):
        out_dir = run_synth(tmp_path)
        eval_dir = tmp_path / "eval"
        rc = main(
            [
                "evaluate", "--corpus", str(out_dir / "corpus.jsonl"),
                "--embeddings", str(out_dir), "--k", "5", "--out", str(eval_dir),
            ]
        )
        assert rc == EXIT_OK
        report = json.loads((eval_dir / "report.json").read_text(encoding="utf-8"))
        assert report["queries"] == 8
        assert report["k"] == 5

        lines = (eval_dir / "per_query.tsv").read_text(encoding="utf-8").splitlines()
        header = lines[0].split("\t")
        rows = [dict(zip(header, line.split("\t"))) for line in lines[1:]]
        assert len(rows) == 8
        for column in ("avg_rel", "p_at_k", "ndcg"):
            recomputed = sum(float(r[column]) for r in rows) / len(rows)
            assert report["macro"][column] == pytest.approx(recomputed, abs=1e-9)

        density_lines = (eval_dir / "density.tsv").read_text(encoding="utf-8").splitlines()
        assert density_lines[0] == "cutoff\tshare"
        assert len(density_lines) == 1 + 5

    def test_k_defaults_to_25(self, tmp_path, capsys):
        out_dir = run_synth(tmp_path, "deep", items_per_query=30)
        eval_dir = tmp_path / "eval25"
        rc = main(
            [
                "evaluate", "--corpus", str(out_dir / "corpus.jsonl"),
                "--embeddings", str(out_dir), "--out", str(eval_dir),
            ]
        )
        assert rc == EXIT_OK
        report = json.loads((eval_dir / "report.json").read_text(encoding="utf-8"))
        assert report["k"] == 25

    def test_unknown_flag_is_usage_error(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["evaluate", "--corpsu", "x"])
        assert exc.value.code == EXIT_USAGE
        assert "usage" in capsys.readouterr().err


class TestCompareCommand:
    def test_identical_runs_zero_lifts(self, tmp_path, capsys):
        out_dir = run_synth(tmp_path)
        eval_dir = tmp_path / "eval"
        main(
            [
                "evaluate", "--corpus", str(out_dir / "corpus.jsonl"),
                "--embeddings", str(out_dir), "--k", "5", "--out", str(eval_dir),
            ]
        )
        capsys.readouterr()
        per_query = str(eval_dir / "per_query.tsv")
        assert main(["compare", "--run-a", per_query, "--run-b", per_query]) == EXIT_OK
        report = json.loads(capsys.readouterr().out)
        for metric in report["metrics"].values():
            assert metric["delta"] == 0.0
            assert metric["lift"] in (0.0, None)

    def test_lifts_match_spreadsheet_recomputation(self, tmp_path, capsys):
        out_dir = run_synth(tmp_path)
        eval_a = tmp_path / "eval_a"
        eval_b = tmp_path / "eval_b"
        corpus = str(out_dir / "corpus.jsonl")
        main(["evaluate", "--corpus", corpus, "--embeddings", str(out_dir),
              "--k", "5", "--out", str(eval_a)])
        main(["evaluate", "--corpus", corpus, "--embeddings", str(out_dir),
              "--k", "10", "--out", str(eval_b)])
        capsys.readouterr()
        out = tmp_path / "cmp.json"
        rc = main(
            [
                "compare", "--run-a", str(eval_a / "per_query.tsv"),
                "--run-b", str(eval_b / "per_query.tsv"), "--out", str(out),
            ]
        )
        assert rc == EXIT_OK
        report = json.loads(out.read_text(encoding="utf-8"))

        def mean_of(path, column):
            lines = path.read_text(encoding="utf-8").splitlines()
            header = lines[0].split("\t")
            idx = header.index(column)
            values = [float(line.split("\t")[idx]) for line in lines[1:]]
            return sum(values) / len(values)

        for column in ("avg_rel", "p_at_k", "ndcg"):
            a = mean_of(eval_a / "per_query.tsv", column)
            b = mean_of(eval_b / "per_query.tsv", column)
            entry = report["metrics"][column]
            assert entry["a"] == pytest.approx(a, abs=1e-9)
            assert entry["b"] == pytest.approx(b, abs=1e-9)
            assert entry["delta"] == pytest.approx(b - a, abs=1e-9)
            if a != 0:
                assert entry["lift"] == pytest.approx((b - a) / a, abs=1e-9)

    def test_swapped_arguments_negate_deltas(self, tmp_path, capsys):
        out_dir = run_synth(tmp_path)
        eval_a = tmp_path / "eval_a"
        eval_b = tmp_path / "eval_b"
        corpus = str(out_dir / "corpus.jsonl")
        main(["evaluate", "--corpus", corpus, "--embeddings", str(out_dir),
              "--k", "5", "--out", str(eval_a)])
        main(["evaluate", "--corpus", corpus, "--embeddings", str(out_dir),
              "--k", "10", "--out", str(eval_b)])
        capsys.readouterr()
        main(["compare", "--run-a", str(eval_a / "per_query.tsv"),
              "--run-b", str(eval_b / "per_query.tsv")])
        forward = json.loads(capsys.readouterr().out)
        main(["compare", "--run-a", str(eval_b / "per_query.tsv"),
              "--run-b", str(eval_a / "per_query.tsv")])
        backward = json.loads(capsys.readouterr().out)
        for column in ("avg_rel", "ndcg"):
            assert forward["metrics"][column]["delta"] == pytest.approx(
                -backward["metrics"][column]["delta"], abs=1e-12
            )

    def test_query_set_mismatch_is_data_error(self, tmp_path, caplog):
        a = tmp_path / "a.tsv"
        b = tmp_path / "b.tsv"
        a.write_text("query_id\tavg_rel\nq1\t2.0\n", encoding="utf-8")
        b.write_text("query_id\tavg_rel\nq2\t2.0\n", encoding="utf-8")
        rc = main(["compare", "--run-a", str(a), "--run-b", str(b)])
        assert rc == EXIT_DATA
        assert "query sets differ" in caplog.text


class TestExitCodes:
    def test_missing_subcommand_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == EXIT_USAGE

    def test_unreadable_corpus_is_io_error(self, tmp_path):
        rc = main(
            ["score", "--in", str(tmp_path / "absent.jsonl"), "--out", str(tmp_path / "t")]
        )
        assert rc == EXIT_IO

    def test_bad_config_is_data_error(self, tmp_path):
        out_dir = run_synth(tmp_path)
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("sigmoid_k = -1\n", encoding="utf-8")
        rc = main(
            [
                "score", "--in", str(out_dir / "corpus.jsonl"),
                "--config", str(cfg), "--out", str(tmp_path / "t.jsonl"),
            ]
        )
        assert rc == EXIT_DATA
