"""Command line interface: subcommands, artifacts, exit codes."""

import json
import subprocess
import sys

import numpy as np
import pytest

from segauction import analytic
from segauction.cli import main
from segauction.metrics import CSV_HEADER
from segauction.sim import builtin_scenario

RUN_ARGS = ["run", "--scenario", "scenario1", "--trials", "20", "--seed", "3"]


def run_cli(capsys, argv):
    rc = main(argv)
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


class TestRun:
    def test_prints_csv_with_header(self, capsys):
        rc, out, _ = run_cli(capsys, RUN_ARGS)
        lines = out.strip().splitlines()
        assert rc == 0
        assert lines[0] == ",".join(CSV_HEADER)
        metrics = {line.split(",")[1] for line in lines[1:]}
        assert metrics == {"revenue", "social_welfare", "relevance",
                           "min_social_welfare"}

    def test_table_runs_four_mechanisms(self, capsys):
        rc, out, _ = run_cli(capsys, RUN_ARGS + ["--mechanism", "table"])
        lines = out.strip().splitlines()[1:]
        mechanisms = {line.split(",")[0] for line in lines}
        assert rc == 0
        assert len(mechanisms) == 4
        assert len(lines) == 16  # 4 mechanisms x 4 metrics

    def test_mechanism_comma_list(self, capsys):
        rc, out, _ = run_cli(
            capsys, RUN_ARGS + ["--mechanism",
                                "single_with_replacement,naive_ii"],
        )
        mechanisms = [line.split(",")[0] for line in out.strip().splitlines()[1:]]
        assert rc == 0
        assert mechanisms[0] == mechanisms[3]  # first four rows: mechanism 1
        assert mechanisms[4] != mechanisms[0]

    def test_rerun_is_byte_identical(self, capsys):
        _, first, _ = run_cli(capsys, RUN_ARGS)
        _, second, _ = run_cli(capsys, RUN_ARGS)
        assert first == second

    def test_out_writes_artifacts(self, tmp_path, capsys):
        out_dir = tmp_path / "artifacts"
        rc, out, _ = run_cli(capsys, RUN_ARGS + ["--out", str(out_dir)])
        assert rc == 0
        assert (out_dir / "report.csv").read_text() == out
        payload = json.loads((out_dir / "report.json").read_text())
        assert "scenario" in payload
        rep = payload["reports"][0]
        assert rep["trials"] == 20
        assert set(rep["metrics"]) == {"revenue", "social_welfare",
                                       "relevance", "min_social_welfare"}
        assert rep["counters"]["generator_calls"] > 0
        transcript = (out_dir / "transcript.txt").read_text()
        assert transcript.startswith("== ")
        # one text line per segment after the mechanism header
        body = transcript.split("==\n", 1)[1].strip().splitlines()
        assert len(body) == builtin_scenario("scenario1").segments

    def test_report_round_trips_csv(self, tmp_path, capsys):
        out_dir = tmp_path / "artifacts"
        run_cli(capsys, RUN_ARGS + ["--out", str(out_dir)])
        rc, out, _ = run_cli(
            capsys, ["report", "--in", str(out_dir / "report.json")],
        )
        assert rc == 0
        assert sorted(out.strip().splitlines()) == sorted(
            (out_dir / "report.csv").read_text().strip().splitlines()
        )

    def test_scenario_from_file(self, tmp_path, capsys):
        from segauction.core import scenario_to_dict

        path = tmp_path / "copy.json"
        path.write_text(json.dumps(scenario_to_dict(builtin_scenario("scenario1"))))
        rc, out, _ = run_cli(capsys, ["run", "--scenario", str(path),
                                      "--trials", "5"])
        assert rc == 0
        assert len(out.strip().splitlines()) == 5


class TestProbe:
    def test_softmax_matches_closed_form(self, capsys):
        rc, out, _ = run_cli(
            capsys, ["probe", "softmax", "--scenario", "scenario2"],
        )
        assert rc == 0
        sc = builtin_scenario("scenario2")
        q = np.asarray(sc.relevance.q)
        expected = analytic.softmax_allocation(q, sc.bids())
        for line, want in zip(out.strip().splitlines(), expected):
            ad_id, val = line.split(",")
            assert float(val) == pytest.approx(want, abs=5e-7)

    def test_myerson_matches_closed_form(self, capsys):
        rc, out, _ = run_cli(
            capsys, ["probe", "myerson", "--scenario", "scenario1"],
        )
        assert rc == 0
        sc = builtin_scenario("scenario1")
        q = np.asarray(sc.relevance.q)
        for i, line in enumerate(out.strip().splitlines()):
            want = analytic.myerson_expected_payment(q, sc.bids(), i)
            assert float(line.split(",")[1]) == pytest.approx(want, abs=5e-7)

    def test_setwin(self, capsys):
        rc, out, _ = run_cli(
            capsys, ["probe", "setwin", "--scenario", "scenario1",
                     "--members", "0,1", "--k", "2"],
        )
        assert rc == 0
        sc = builtin_scenario("scenario1")
        want = analytic.set_win_probability(
            np.asarray(sc.relevance.q), sc.bids(), (0, 1), 2,
        )
        assert float(out.strip()) == pytest.approx(want, abs=5e-7)

    def test_lsw_prints_point_and_objective(self, capsys):
        rc, out, _ = run_cli(
            capsys, ["probe", "lsw", "--scenario", "scenario1"],
        )
        lines = out.strip().splitlines()
        assert rc == 0
        assert lines[-1].startswith("objective,")
        xs = [float(line.split(",")[1]) for line in lines[:-1]]
        assert sum(xs) == pytest.approx(1.0, abs=1e-5)

    def test_dsic_exit_zero_on_truthful_mechanism(self, capsys):
        rc, out, _ = run_cli(
            capsys, ["probe", "dsic", "--scenario", "scenario1",
                     "--ad-index", "1", "--draws", "2000"],
        )
        assert rc == 0
        assert out.startswith("[PASS]")


class TestVerify:
    def test_counters_suite_passes(self, capsys):
        rc, out, _ = run_cli(capsys, ["verify", "--suite", "counters"])
        assert rc == 0
        lines = out.strip().splitlines()
        assert all(line.startswith("[PASS]") for line in lines[:-1])
        n = len(lines) - 1
        assert lines[-1] == f"{n}/{n} checks passed"

    def test_json_payload_schema(self, capsys):
        rc, out, _ = run_cli(
            capsys, ["verify", "--suite", "counters", "--json"],
        )
        assert rc == 0
        payload = json.loads(out)
        assert payload["passed"] is True
        assert payload["seed"] == 1729
        report = payload["reports"][0]
        assert set(report) == {"name", "analytic", "empirical", "stderr",
                               "passed", "detail"}

    def test_failed_check_exits_one(self, capsys, monkeypatch):
        import segauction.sim as sim_mod

        def stub_suite(seed):
            return [sim_mod.OracleReport("stub", 1.0, 0.0, 0.0, False, "")]

        monkeypatch.setitem(sim_mod.SUITES, "stub", stub_suite)
        rc, out, _ = run_cli(capsys, ["verify", "--suite", "stub"])
        assert rc == 1
        assert "0/1 checks passed" in out

    def test_allocation_suite_small_draws(self, capsys):
        rc, out, _ = run_cli(
            capsys, ["verify", "--suite", "allocation", "--draws", "20000"],
        )
        assert rc == 0


class TestExitCodes:
    def test_invalid_scenario_file(self, tmp_path, capsys):
        from segauction.core import scenario_to_dict

        d = scenario_to_dict(builtin_scenario("scenario1"))
        d["ads"][0]["bid"] = -2.0
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(d))
        rc, _, err = run_cli(capsys, ["run", "--scenario", str(path)])
        assert rc == 2
        assert "invalid scenario:" in err

    def test_unknown_scenario_name(self, capsys):
        rc, _, err = run_cli(capsys, ["run", "--scenario", "nope"])
        assert rc == 2
        assert "error:" in err

    def test_provider_failure(self, tmp_path, capsys, monkeypatch):
        from segauction.core import scenario_to_dict

        monkeypatch.delenv("SEGAUCTION_EMBED_TOKEN", raising=False)
        d = scenario_to_dict(builtin_scenario("scenario1"))
        d["relevance"] = {"mode": "embedding", "endpoint": "https://e.test",
                          "model": "m"}
        path = tmp_path / "embed.json"
        path.write_text(json.dumps(d))
        rc, _, err = run_cli(capsys, ["run", "--scenario", str(path),
                                      "--trials", "2"])
        assert rc == 3
        assert "provider failure:" in err


class TestEntryPoint:
    def test_module_invocation(self):
        proc = subprocess.run(
            [sys.executable, "-m", "segauction.cli", "probe", "setwin",
             "--scenario", "scenario1", "--members", "0", "--k", "1"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        float(proc.stdout.strip())
