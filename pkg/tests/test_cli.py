"""CLI behavior: exit codes, artifact wiring, report contents, reproducibility."""

from __future__ import annotations

import fcntl
import json

import pytest

from temporal_memory import cli


def run(*argv: str) -> int:
    return cli.main(list(argv))


class TestExitCodes:
    def test_bad_flags_exit_64(self):
        with pytest.raises(SystemExit) as exc:
            run("definitely-not-a-command")
        assert exc.value.code == 64

    def test_bad_option_value_exit_64(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run("--workspace", str(tmp_path), "trends", "--k", "zero")
        assert exc.value.code == 64

    def test_k_accepts_fixed_keyword(self):
        from temporal_memory.cli import _parse_k

        assert _parse_k("fixed") == 6
        assert _parse_k("auto") is None
        assert _parse_k("4") == 4

    def test_trends_without_embed_exits_2_naming_the_file(self, tmp_path, capsys):
        ws = tmp_path / "ws"
        ws.mkdir()
        (ws / "data").mkdir()
        code = run("--workspace", str(ws), "trends")
        assert code == 2
        err = capsys.readouterr().err
        assert "events.jsonl" in err and "ingest" in err

    def test_eval_without_config_exits_2(self, tmp_path, capsys, pipeline_ws):
        ws = tmp_path / "ws"
        ws.mkdir()
        (ws / "data").mkdir()
        for name in ("events.jsonl", "vectors.tmv"):
            (ws / "data" / name).write_bytes((pipeline_ws / "data" / name).read_bytes())
        code = run("--workspace", str(ws), "eval")
        assert code == 2
        assert "eval.json" in capsys.readouterr().err

    def test_missing_config_file_exits_2(self, tmp_path):
        assert run("--workspace", str(tmp_path), "--config", "nope.json", "gen") == 2

    def test_lock_contention_exits_1(self, pipeline_ws, capsys):
        lock = (pipeline_ws / ".tmem.lock").open("w")
        try:
            fcntl.flock(lock, fcntl.LOCK_EX | fcntl.LOCK_NB)
            assert run("--workspace", str(pipeline_ws), "gen", "--seed", "1") == 1
            assert "lock" in capsys.readouterr().err
        finally:
            lock.close()


class TestPipelineArtifacts:
    def test_expected_files_exist(self, pipeline_ws):
        for rel in (
            "data/events.jsonl",
            "data/manifest.json",
            "data/vectors.tmv",
            "results/clusters_weekly.csv",
            "results/trends_summary.csv",
            "results/eval_report.json",
            "results/eval_report.md",
        ):
            assert (pipeline_ws / rel).exists(), rel

    def test_eval_markdown_has_the_four_metric_rows(self, pipeline_ws):
        text = (pipeline_ws / "results" / "eval_report.md").read_text()
        for row in ("Trend F1", "As-of Correctness", "Latest@10 Accuracy", "Latest-Set@10"):
            assert row in text

    def test_run_manifests_record_digests(self, pipeline_ws):
        for cmd in ("gen", "ingest", "embed", "trends", "eval"):
            manifest = json.loads((pipeline_ws / "results" / f"run_{cmd}.json").read_text())
            assert manifest["command"] == cmd
            assert manifest["artifacts"], cmd
            for digest in manifest["artifacts"].values():
                assert len(digest) == 64

    def test_ingest_manifest_covers_the_stream(self, pipeline_ws):
        manifest = json.loads((pipeline_ws / "data" / "manifest.json").read_text())
        assert manifest["week_range"] == ["2025-W14", "2025-W26"]
        assert manifest["events"] > 0
        assert manifest["duplicates_dropped"] == 0


class TestQueryCommand:
    def test_query_emits_json_lines(self, pipeline_ws, capsys):
        code = run(
            "--workspace", str(pipeline_ws),
            "query", "--text", "okta auth_fail mfa denied",
            "--now", "2025-06-30T00:00:00Z", "--k", "5",
        )
        assert code == 0
        lines = [l for l in capsys.readouterr().out.splitlines() if l.strip()]
        assert len(lines) == 5
        hit = json.loads(lines[0])
        assert {"event_id", "ts", "cosine_sim", "age_days", "recency_weight", "fused"} <= set(hit)

    def test_as_of_date_is_inclusive_of_that_day(self, pipeline_ws, capsys):
        code = run(
            "--workspace", str(pipeline_ws),
            "query", "--text", "okta auth_fail", "--as-of", "2025-04-06",
            "--now", "2025-06-30T00:00:00Z",
        )
        assert code == 0
        out = capsys.readouterr().out
        stamps = [json.loads(l)["ts"] for l in out.splitlines() if l.strip()]
        assert stamps
        assert all(ts <= "2025-04-06T23:59:59.999999+00:00" for ts in stamps)
        assert any(ts.startswith("2025-04-06") for ts in stamps)

    def test_cosine_mode_ignores_time(self, pipeline_ws, capsys):
        code = run(
            "--workspace", str(pipeline_ws),
            "query", "--text", "gateway certificate expiring soon renewal required",
            "--mode", "cosine", "--now", "2025-06-30T00:00:00Z",
        )
        assert code == 0
        out = capsys.readouterr().out
        hits = [json.loads(l) for l in out.splitlines() if l.strip()]
        cosines = [h["cosine_sim"] for h in hits]
        assert cosines == sorted(cosines, reverse=True)

    def test_no_evidence_before_early_cutoff(self, pipeline_ws, capsys):
        code = run(
            "--workspace", str(pipeline_ws),
            "query", "--text", "anything", "--as-of", "2020-01-01",
        )
        assert code == 0
        assert "no evidence" in capsys.readouterr().err


class TestEmbedOptions:
    def test_external_vectors_accepted(self, pipeline_ws, tmp_path, capsys):
        ws = tmp_path / "ws"
        (ws / "data").mkdir(parents=True)
        (ws / "data" / "events.jsonl").write_bytes((pipeline_ws / "data" / "events.jsonl").read_bytes())
        external = tmp_path / "external.tmv"
        external.write_bytes((pipeline_ws / "data" / "vectors.tmv").read_bytes())
        code = run("--workspace", str(ws), "embed", "--embedder", f"external:{external}")
        assert code == 0
        assert (ws / "data" / "vectors.tmv").read_bytes() == external.read_bytes()

    def test_unknown_embedder_is_an_error(self, pipeline_ws, tmp_path):
        ws = tmp_path / "ws"
        (ws / "data").mkdir(parents=True)
        (ws / "data" / "events.jsonl").write_bytes((pipeline_ws / "data" / "events.jsonl").read_bytes())
        assert run("--workspace", str(ws), "embed", "--embedder", "bert") == 1


class TestConfigPrecedence:
    def test_config_supplies_defaults_but_flags_win(self, tmp_path, pipeline_ws):
        ws = tmp_path / "ws"
        (ws / "data").mkdir(parents=True)
        for name in ("events.jsonl", "vectors.tmv"):
            (ws / "data" / name).write_bytes((pipeline_ws / "data" / name).read_bytes())
        config = tmp_path / "conf.json"
        config.write_text(json.dumps({"k": 2, "cluster_seed": 42}))
        assert run("--workspace", str(ws), "--config", str(config), "trends") == 0
        rows = (ws / "results" / "clusters_weekly.csv").read_text().splitlines()[1:]
        per_week = {}
        for row in rows:
            week, cid = row.split(",")[:2]
            per_week[week] = max(per_week.get(week, 0), int(cid) + 1)
        assert set(per_week.values()) == {2}  # config value applied
        assert run("--workspace", str(ws), "--config", str(config), "trends", "--k", "3") == 0
        rows = (ws / "results" / "clusters_weekly.csv").read_text().splitlines()[1:]
        per_week = {}
        for row in rows:
            week, cid = row.split(",")[:2]
            per_week[week] = max(per_week.get(week, 0), int(cid) + 1)
        assert set(per_week.values()) == {3}  # explicit flag beat the config
