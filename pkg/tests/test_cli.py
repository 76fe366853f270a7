"""End-to-end checks of the command-line surface and its exit-code contract."""

import json

import pytest
from click.testing import CliRunner

from berytus.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def _invoke(runner, *args):
    return runner.invoke(main, [str(a) for a in args])


class TestRun:
    def test_bundled_scenario_passes(self, runner):
        result = _invoke(runner, "run", "register-then-auth-password")
        assert result.exit_code == 0
        assert "scenario register-then-auth-password: ok" in result.output
        assert "+ save_account" in result.output

    def test_unknown_scenario_is_a_parse_error(self, runner):
        result = _invoke(runner, "run", "no-such-scenario")
        assert result.exit_code == 3
        assert "parse error" in result.stderr

    def test_invalid_scenario_file_is_a_parse_error(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"name": "bad"}')  # webApp missing
        result = _invoke(runner, "run", bad)
        assert result.exit_code == 3

    def test_expectation_miss_exits_2(self, runner, tmp_path):
        scenario = tmp_path / "wrong.json"
        scenario.write_text(
            json.dumps(
                {
                    "name": "wrong",
                    "webApp": {"uri": "https://app.example.com"},
                    "fields": [{"id": "u", "kind": "Identity"}],
                    "expect": {"outcome": "failure", "errorCode": "NoManagerAvailable"},
                }
            )
        )
        result = _invoke(runner, "run", scenario)
        assert result.exit_code == 2
        assert "expectation diff" in result.output

    def test_parallel_run_of_all_bundled(self, runner):
        result = _invoke(
            runner, "run",
            "register-then-auth-password", "srp-vault", "multi-factor",
            "--parallel", 3,
        )
        assert result.exit_code == 0
        assert result.output.count(": ok") == 3

    def test_transcripts_shadow_log_and_journal(self, runner, tmp_path):
        out = tmp_path / "tx"
        result = _invoke(
            runner,
            "--transcript-dir", out, "--insecure-transcript",
            "run", "register-then-auth-password",
        )
        assert result.exit_code == 0
        base = "register-then-auth-password"
        assert (out / f"{base}.wire.jsonl").exists()
        assert (out / f"{base}.steps.jsonl").exists()
        assert (out / f"{base}.plain.jsonl").exists()
        journal = out / f"{base}.manager-1.journal"
        assert journal.exists()

    def test_seed_override_is_deterministic(self, runner, tmp_path):
        def wire_bytes(subdir, seed):
            result = _invoke(
                runner,
                "--seed", seed, "--transcript-dir", tmp_path / subdir,
                "run", "register-then-auth-password",
            )
            assert result.exit_code == 0
            return (tmp_path / subdir / "register-then-auth-password.wire.jsonl").read_bytes()

        first = wire_bytes("a", "ab" * 32)
        second = wire_bytes("b", "ab" * 32)
        third = wire_bytes("c", "cd" * 32)
        assert first == second
        assert first != third

    @pytest.mark.parametrize("seed", ["not-hex", ""])
    def test_bad_seed_exits_3(self, runner, seed):
        result = _invoke(runner, "--seed", seed, "run", "register-then-auth-password")
        assert result.exit_code == 3


class TestAttackMatrix:
    def test_writes_table_jsonl_and_png(self, runner, tmp_path):
        out = tmp_path / "reports"
        result = _invoke(runner, "attack-matrix", "--runs", 2, "--out", out, "--parallel", 2)
        assert result.exit_code == 0
        assert "Application-level E2EE" in result.output
        assert "yes" in result.output and "no" in result.output

        lines = [json.loads(l) for l in (out / "matrix.jsonl").read_text().splitlines()]
        assert sum(1 for l in lines if l["type"] == "run") == 16
        assert sum(1 for l in lines if l["type"] == "matrixRow") == 4

        png = (out / "matrix.png").read_bytes()
        assert png.startswith(b"\x89PNG\r\n")

    def test_zero_runs_is_a_config_error(self, runner, tmp_path):
        result = _invoke(runner, "attack-matrix", "--runs", 0, "--out", tmp_path)
        assert result.exit_code == 3


class TestPhishing:
    def test_all_strategies(self, runner):
        result = _invoke(runner, "phishing")
        assert result.exit_code == 0
        for line in (
            "phishing-domain-cross-origin: nothing transferred",
            "phishing-appkey-shared-key: credential transferred",
            "phishing-appkey-different-key: nothing transferred",
            "phishing-strategy-mismatch: nothing transferred",
        ):
            assert line in result.output

    def test_single_strategy(self, runner):
        result = _invoke(runner, "phishing", "--strategy", "domain")
        assert result.exit_code == 0
        assert "phishing-domain-cross-origin" in result.output
        assert "appkey" not in result.output


class TestVectors:
    def test_all_pass(self, runner):
        result = _invoke(runner, "vectors")
        assert result.exit_code == 0
        assert "FAIL" not in result.output
        summary = result.output.strip().splitlines()[-1]
        passed, _, total = summary.split()[0].partition("/")
        assert passed == total and int(total) >= 10


class TestDumpJournal:
    def test_round_trip_via_run(self, runner, tmp_path):
        out = tmp_path / "tx"
        assert (
            _invoke(runner, "--transcript-dir", out, "run", "srp-vault").exit_code == 0
        )
        journal = out / "srp-vault.manager-1.journal"
        result = _invoke(runner, "dump-journal", journal)
        assert result.exit_code == 0
        assert "1 account(s)" in result.output
        assert "appkey:" in result.output
        assert "strategy=AppKey" in result.output

    def test_malformed_journal_exits_3(self, runner, tmp_path):
        bogus = tmp_path / "bogus.journal"
        bogus.write_bytes(b"\xff\xfenot a journal\n")
        result = _invoke(runner, "dump-journal", bogus)
        assert result.exit_code == 3
        assert "cannot replay journal" in result.stderr
