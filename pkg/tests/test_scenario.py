"""Scenario parsing, the sequential runner, expectation judging, transcripts."""

import json
from importlib import resources

import pytest

from berytus import errors
from berytus.encoding import canonical_decode, canonical_encode
from berytus.manager import CredentialStore
from berytus.scenario import ScenarioConfig, ScenarioRunner, write_transcript


def _minimal(**overrides):
    record = {"name": "t", "webApp": {"uri": "https://app.example.com"}}
    record.update(overrides)
    return record


BUNDLED = [
    "all-field-kinds",
    "multi-factor",
    "register-then-auth-password",
    "srp-vault",
]


def _bundled_config(name: str) -> ScenarioConfig:
    path = resources.files("berytus.scenarios") / f"{name}.json"
    return ScenarioConfig.parse(json.loads(path.read_text()))


class TestParsing:
    def test_minimal_defaults(self):
        config = ScenarioConfig.parse(_minimal())
        assert config.e2ee is True
        assert config.seed == b"\x00" * 32
        assert config.intent == "Any"
        assert config.expect == {"outcome": "success"}
        assert config.manager_count == 1

    @pytest.mark.parametrize(
        "record",
        [
            "not a map",
            _minimal(bogusKey=1),
            {"webApp": {"uri": "https://a.example"}},  # no name
            {"name": "t"},  # no webApp
            _minimal(webApp="https://a.example"),
            _minimal(webApp={"type": "crypto"}),  # uri missing
            _minimal(webApp={"uri": "https://a.example", "extra": 1}),
            _minimal(webApp={"uri": "https://a.example", "type": "quantum"}),
            _minimal(e2ee="sometimes"),
            _minimal(webApp={"uri": "https://a.example", "type": "origin"}, e2ee="on"),
            _minimal(seed="zz"),
            _minimal(seed=1234),
            _minimal(intent="Sideways"),
            _minimal(fields=[{"kind": "Identity"}]),  # id missing
            _minimal(fields=[{"id": "a", "kind": "Hologram"}]),
            _minimal(fields=[{"id": "a", "kind": "Identity"}, {"id": "a", "kind": "Password"}]),
            _minimal(rejections=[{"fieldId": "ghost", "reason": "Taken"}]),
            _minimal(
                fields=[{"id": "a", "kind": "Identity"}],
                rejections=[{"fieldId": "a"}],  # reason missing
            ),
            _minimal(attributes=["shoe_size"]),
            _minimal(challenges=[{"kind": "Riddle"}]),
            _minimal(challenges=[{"kind": "Password"}]),  # fieldIds missing
            _minimal(
                fields=[{"id": "a", "kind": "Identity"}],
                challenges=[{"kind": "Password", "fieldIds": ["ghost"]}],
            ),
            _minimal(expect={"outcome": "success", "extra": 1}),
            _minimal(expect={"outcome": "maybe"}),
            _minimal(managerCount=0),
            _minimal(managerCount="many"),
        ],
    )
    def test_invalid_documents_raise_parse_error(self, record):
        with pytest.raises(errors.ParseError):
            ScenarioConfig.parse(record)

    def test_from_path_errors(self, tmp_path):
        with pytest.raises(errors.ParseError):
            ScenarioConfig.from_path(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(errors.ParseError):
            ScenarioConfig.from_path(bad)

    @pytest.mark.parametrize("name", BUNDLED)
    def test_bundled_scenarios_parse(self, name):
        config = _bundled_config(name)
        assert config.name == name


class TestRunner:
    @pytest.mark.parametrize("name", BUNDLED)
    def test_bundled_scenarios_pass(self, name):
        result = ScenarioRunner(_bundled_config(name)).run()
        assert result.ok, result.expectation_diff
        assert result.error_code is None
        assert all(step.ok for step in result.steps)

    def test_wire_log_is_canonical_throughout(self):
        result = ScenarioRunner(_bundled_config("register-then-auth-password")).run()
        assert result.wire_log
        for _direction, data in result.wire_log:
            canonical_decode(data)

    def test_planted_secrets_cover_generated_material(self):
        result = ScenarioRunner(_bundled_config("all-field-kinds")).run()
        labels = {label.split(":", 1)[0] for label, _ in result.planted_secrets}
        assert {"password", "srpInternalPassword", "keySeed", "privateKey"} <= labels

    def test_expected_error_code_matches(self):
        config = ScenarioConfig.parse(
            _minimal(
                managerAllowlist=[],
                expect={"outcome": "failure", "errorCode": "NoManagerAvailable"},
            )
        )
        result = ScenarioRunner(config).run()
        assert result.ok and result.error_code == "NoManagerAvailable"

    def test_unexpected_success_is_flagged(self):
        config = ScenarioConfig.parse(
            _minimal(
                fields=[{"id": "u", "kind": "Identity"}],
                expect={"outcome": "failure", "errorCode": "NoManagerAvailable"},
            )
        )
        result = ScenarioRunner(config).run()
        assert not result.ok
        assert "expected error NoManagerAvailable" in result.expectation_diff

    def test_unexpected_failure_is_flagged(self):
        config = ScenarioConfig.parse(
            _minimal(managerAllowlist=[])  # expects success by default
        )
        result = ScenarioRunner(config).run()
        assert not result.ok
        assert result.expectation_diff.startswith("expected success")

    def test_designed_challenge_failure_judged_clean(self):
        config = ScenarioConfig.parse(
            _minimal(
                fields=[{"id": "u", "kind": "Identity"}],
                challenges=[{"kind": "OffChannelOtp", "deliver": False}],
                expect={"outcome": "success", "failedChallenges": ["OffChannelOtp"]},
            )
        )
        result = ScenarioRunner(config).run()
        assert result.ok
        assert [o.kind for o in result.outcomes if not o.ok] == ["OffChannelOtp"]

    def test_surprise_challenge_failure_flagged(self):
        config = ScenarioConfig.parse(
            _minimal(
                fields=[{"id": "u", "kind": "Identity"}],
                challenges=[{"kind": "OffChannelOtp", "deliver": False}],
            )
        )
        result = ScenarioRunner(config).run()
        assert not result.ok
        assert "OffChannelOtp" in result.expectation_diff


class TestTranscripts:
    def test_transcript_files_and_journals(self, tmp_path):
        config = _bundled_config("register-then-auth-password")
        runner = ScenarioRunner(config, shadow_log=True, journal_dir=tmp_path / "journals")
        result = runner.run()
        assert result.ok

        paths = write_transcript(result, tmp_path, insecure_plain=runner.plain_entries)
        names = {p.name for p in paths}
        assert names == {
            "register-then-auth-password.wire.jsonl",
            "register-then-auth-password.steps.jsonl",
            "register-then-auth-password.plain.jsonl",
        }
        for path in paths:
            assert path.exists() and path.stat().st_size > 0

        with open(tmp_path / "register-then-auth-password.wire.jsonl") as fh:
            for line in fh:
                entry = json.loads(line)
                assert entry["dir"] in ("app->sm", "sm->app")
                bytes.fromhex(entry["data"])

        with open(tmp_path / "register-then-auth-password.plain.jsonl", "rb") as fh:
            plain_lines = [canonical_decode(line.strip()) for line in fh]
        assert plain_lines  # the shadow log saw the post-handshake plaintext

        journal = tmp_path / "journals" / "register-then-auth-password.manager-1.journal"
        assert journal.exists()
        replayed = CredentialStore.replay(journal)
        assert sum(len(v) for v in replayed.records.values()) == 1

    def test_sealed_wire_hides_what_shadow_log_shows(self, tmp_path):
        config = _bundled_config("register-then-auth-password")
        runner = ScenarioRunner(config, shadow_log=True)
        result = runner.run()
        wire_blob = b"".join(data for _d, data in result.wire_log)
        for label, secret in result.planted_secrets:
            assert secret not in wire_blob, f"{label} leaked onto the sealed wire"
        shadow_blob = b"\n".join(canonical_encode(e) for e in runner.plain_entries)
        planted_passwords = [s for l, s in result.planted_secrets if l.startswith("password:")]
        assert planted_passwords
        assert any(p in shadow_blob for p in planted_passwords)
