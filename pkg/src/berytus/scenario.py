"""Scenario configuration and the sequential scenario runner.

A scenario file is a JSON document describing one web app, one registration plan,
and an optional authentication plan. Running it produces a step log, a wire
transcript, the set of planted secrets, and a verdict against the scenario's
stated expectations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

from . import challenges, errors, fields, operations, webapp
from .encoding import canonical_encode
from .errors import BerytusError
from .manager import CredentialStore, ManagerConfig

_WEB_APP_KEYS = {"type", "uri", "allowlistUris"}
_TOP_KEYS = {
    "name",
    "webApp",
    "e2ee",
    "seed",
    "intent",
    "fields",
    "rejections",
    "attributes",
    "category",
    "challenges",
    "managerCount",
    "managerAllowlist",
    "expect",
    "userProfile",
}
_EXPECT_KEYS = {"outcome", "errorCode", "failedChallenges"}

_CHALLENGE_REQUIRED = {
    "Identification": {"fieldIds"},
    "Password": {"fieldIds"},
    "DigitalSignature": {"fieldId"},
    "SecureRemotePassword": {"fieldId"},
    "OffChannelOtp": set(),
    "Custom": {"schema", "payload"},
}


@dataclass
class ScenarioConfig:
    name: str
    web_app: dict
    e2ee: bool
    seed: bytes
    intent: str = "Any"
    field_plan: list = dc_field(default_factory=list)
    rejections: list = dc_field(default_factory=list)
    attributes: list = dc_field(default_factory=list)
    category: str | None = None
    challenge_plan: list = dc_field(default_factory=list)
    manager_count: int = 1
    manager_allowlist: list | None = None
    expect: dict = dc_field(default_factory=lambda: {"outcome": "success"})
    user_profile: dict | None = None

    @classmethod
    def parse(cls, record: dict) -> "ScenarioConfig":
        if not isinstance(record, dict):
            raise errors.ParseError("scenario document must be a map")
        unknown = set(record) - _TOP_KEYS
        if unknown:
            raise errors.ParseError(f"unknown scenario keys: {sorted(unknown)}")
        for key in ("name", "webApp"):
            if key not in record:
                raise errors.ParseError(f"scenario is missing {key!r}")
        web_app = record["webApp"]
        if not isinstance(web_app, dict) or "uri" not in web_app:
            raise errors.ParseError("webApp must be a map with a uri")
        if set(web_app) - _WEB_APP_KEYS:
            raise errors.ParseError(f"unknown webApp keys: {sorted(set(web_app) - _WEB_APP_KEYS)}")
        if web_app.get("type", "crypto") not in ("origin", "crypto"):
            raise errors.ParseError(f"unknown webApp type {web_app.get('type')!r}")

        e2ee_raw = record.get("e2ee", "on")
        if e2ee_raw not in ("on", "off", True, False):
            raise errors.ParseError("e2ee must be on or off")
        e2ee = e2ee_raw in ("on", True)
        if e2ee and web_app.get("type", "crypto") != "crypto":
            raise errors.ParseError("e2ee needs a crypto web app actor")

        seed_hex = record.get("seed", "00" * 32)
        try:
            seed = bytes.fromhex(seed_hex)
        except (TypeError, ValueError) as exc:
            raise errors.ParseError(f"seed is not hex: {exc}") from exc

        intent = record.get("intent", "Any")
        if intent not in operations.REQUESTED_INTENTS:
            raise errors.ParseError(f"unknown intent {intent!r}")

        field_plan = record.get("fields", [])
        field_ids = set()
        for spec in field_plan:
            if not isinstance(spec, dict) or "id" not in spec or "kind" not in spec:
                raise errors.ParseError("each field needs an id and a kind")
            if spec["kind"] not in fields.ALL_KINDS:
                raise errors.ParseError(f"unknown field kind {spec['kind']!r}")
            if spec["id"] in field_ids:
                raise errors.ParseError(f"duplicate field id {spec['id']!r}")
            field_ids.add(spec["id"])

        for rejection in record.get("rejections", []):
            if rejection.get("fieldId") not in field_ids:
                raise errors.ParseError(
                    f"rejection references unknown field {rejection.get('fieldId')!r}"
                )
            if "reason" not in rejection:
                raise errors.ParseError("rejection needs a reason")

        for claim in record.get("attributes", []):
            if claim not in operations.OPENID_CLAIMS:
                raise errors.ParseError(f"unknown claim {claim!r}")

        challenge_plan = record.get("challenges", [])
        for spec in challenge_plan:
            kind = spec.get("kind")
            if kind not in _CHALLENGE_REQUIRED:
                raise errors.ParseError(f"unknown challenge kind {kind!r}")
            missing = _CHALLENGE_REQUIRED[kind] - set(spec)
            if missing:
                raise errors.ParseError(f"{kind} challenge missing {sorted(missing)}")
            referenced = list(spec.get("fieldIds", []))
            if "fieldId" in spec:
                referenced.append(spec["fieldId"])
            for field_id in referenced:
                if field_id not in field_ids:
                    raise errors.ParseError(
                        f"{kind} challenge references unknown field {field_id!r}"
                    )

        expect = record.get("expect", {"outcome": "success"})
        if set(expect) - _EXPECT_KEYS:
            raise errors.ParseError(f"unknown expect keys: {sorted(set(expect) - _EXPECT_KEYS)}")
        if expect.get("outcome", "success") not in ("success", "failure"):
            raise errors.ParseError("expect.outcome must be success or failure")

        manager_count = record.get("managerCount", 1)
        if not isinstance(manager_count, int) or manager_count < 1:
            raise errors.ParseError("managerCount must be a positive integer")

        return cls(
            name=record["name"],
            web_app=web_app,
            e2ee=e2ee,
            seed=seed,
            intent=intent,
            field_plan=field_plan,
            rejections=record.get("rejections", []),
            attributes=record.get("attributes", []),
            category=record.get("category"),
            challenge_plan=challenge_plan,
            manager_count=manager_count,
            manager_allowlist=record.get("managerAllowlist"),
            expect=expect,
            user_profile=record.get("userProfile"),
        )

    @classmethod
    def from_path(cls, path: str | Path) -> "ScenarioConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise errors.ParseError(f"cannot read scenario file: {exc}") from exc
        try:
            record = json.loads(text)
        except json.JSONDecodeError as exc:
            raise errors.ParseError(f"scenario file is not valid JSON: {exc}") from exc
        return cls.parse(record)


@dataclass
class StepLogEntry:
    step: str
    ok: bool
    detail: str = ""

    def to_record(self) -> dict:
        return {"step": self.step, "ok": self.ok, "detail": self.detail}


@dataclass
class ScenarioResult:
    name: str
    ok: bool
    steps: list
    error_code: str | None
    planted_secrets: list  # (label, bytes)
    account: dict | None
    identity: str | None
    outcomes: list
    wire_log: list
    expectation_diff: str | None = None


class ScenarioRunner:
    """Executes one scenario sequentially over a private world."""

    def __init__(
        self,
        config: ScenarioConfig,
        taps: list | None = None,
        *,
        shadow_log: bool = False,
        journal_dir: str | Path | None = None,
    ):
        self.config = config
        self.taps = list(taps or [])
        self.shadow_log = shadow_log
        self.journal_dir = Path(journal_dir) if journal_dir is not None else None
        self.steps: list[StepLogEntry] = []
        self.planted: list[tuple[str, bytes]] = []
        self.error_code: str | None = None
        self.account: dict | None = None
        self.identity: str | None = None
        self.outcomes: list[webapp.AuthOutcome] = []
        self.world: webapp.World | None = None
        self.channel = None
        self.operation = None

    # -- helpers -------------------------------------------------------------------

    def _step(self, name: str, fn):
        try:
            value = fn()
        except BerytusError as exc:
            self.steps.append(StepLogEntry(name, False, f"{exc.code}: {exc}"))
            self.error_code = exc.code
            raise
        self.steps.append(StepLogEntry(name, True))
        return value

    def _plant(self, label: str, data) -> None:
        if isinstance(data, str):
            data = data.encode()
        self.planted.append((label, data))

    def _collect_planted(self) -> None:
        """Secrets the scanner must never find on a protected wire."""
        manager = self._manager_for_channel()
        for descriptor in self.operation.fields.values():
            value = descriptor.value
            if isinstance(value, fields.TextValue) and descriptor.kind == fields.KIND_PASSWORD:
                self._plant(f"password:{descriptor.id}", value.text)
            if isinstance(value, fields.WrappedPrivateKeyValue):
                self._plant(f"privateKey:{descriptor.id}", value.blob)
                self._plant(f"privateKeyHex:{descriptor.id}", value.blob.hex())
        if manager is not None:
            ctx = manager._channels.get(self.channel.channel_id.hex())
            if ctx is not None and ctx.operation is not None:
                for field_id, secret in ctx.operation.secrets.items():
                    if secret.get("kind") == "srpPassword":
                        self._plant(f"srpInternalPassword:{field_id}", secret["password"])
                    elif "seed" in secret:
                        seed = secret["seed"]
                        if isinstance(seed, str):
                            seed = bytes.fromhex(seed)
                        self._plant(f"keySeed:{field_id}", seed)
                        self._plant(f"keySeedHex:{field_id}", seed.hex())

    def _manager_for_channel(self):
        if self.world is None or self.channel is None:
            return None
        return self.world.managers.get(self.channel.manager_id)

    @property
    def plain_entries(self) -> list:
        if self.channel is None or self.channel.plain_log is None:
            return []
        return list(self.channel.plain_log)

    # -- the two phases ---------------------------------------------------------------

    def run_registration(self) -> dict:
        config = self.config
        self.world = webapp.build_world(
            config.seed,
            web_app_kind=config.web_app.get("type", "crypto"),
            web_app_uri=config.web_app["uri"],
            allowlist_uris=config.web_app.get("allowlistUris"),
            manager_count=config.manager_count,
            taps=self.taps,
            user_profile=config.user_profile,
        )
        if self.journal_dir is not None:
            self.journal_dir.mkdir(parents=True, exist_ok=True)
            for manager_id, manager in self.world.managers.items():
                manager.store = CredentialStore(
                    self.journal_dir / f"{config.name}.{manager_id}.journal"
                )
        allowlist = (
            set(config.manager_allowlist) if config.manager_allowlist is not None else None
        )
        self.channel = self._step(
            "create_channel",
            lambda: webapp.open_channel(self.world, e2ee=config.e2ee, allowlist=allowlist),
        )
        if self.shadow_log:
            self.channel.plain_log = []
        self.operation = self._step(
            "approve_operation",
            lambda: operations.approve_operation(
                self.channel, config.intent, category=config.category
            ),
        )
        if self.operation.intent != "Register":
            return {"accountRecord": None, "backendState": self.world.backend.dump_bytes()}

        descriptors = [fields.FieldDescriptor.from_record(spec) for spec in config.field_plan]
        for descriptor in descriptors:
            if descriptor.value is not None and isinstance(descriptor.value, fields.TextValue):
                self._plant(f"supplied:{descriptor.id}", descriptor.value.text)
        self._step("add_fields", lambda: operations.add_fields(self.operation, *descriptors))

        for rejection in config.rejections:
            revision = rejection.get("revision")
            proposed = fields.value_from_record(revision) if revision is not None else None
            if proposed is not None and isinstance(proposed, fields.TextValue):
                self._plant(f"revision:{rejection['fieldId']}", proposed.text)
            self._step(
                f"reject_field:{rejection['fieldId']}",
                lambda r=rejection, p=proposed: operations.reject_field(
                    self.operation, r["fieldId"], r["reason"], p
                ),
            )

        if config.attributes:
            self._step(
                "get_user_attributes",
                lambda: operations.get_user_attributes(self.operation, config.attributes),
            )

        self.account = self._step(
            "save_account", lambda: operations.save_account(self.operation, config.category)
        )
        self.identity = self._step(
            "backend_ingest", lambda: self.world.backend.ingest_account(self.account)
        )
        self._collect_planted()
        return {
            "accountRecord": self.account,
            "backendState": self.world.backend.dump_bytes(),
            "transcript": list(self.world.relay.wire_log),
        }

    def run_authentication(self) -> dict:
        config = self.config
        if self.operation is None:
            raise errors.ProtocolViolation("run registration first")
        if self.operation.state != "Authenticating":
            self._step(
                "transition_to_authentication",
                lambda: operations.transition_to_authentication(self.operation),
            )
        identity = self.identity
        for spec in config.challenge_plan:
            kind = spec["kind"]
            if kind == "Identification":
                outcome = webapp.run_identification(self.operation, spec["fieldIds"])
                values = outcome.data.get("values", {})
                if outcome.ok and values:
                    identity = next(iter(values.values()))
            elif kind == "Password":
                outcome = webapp.run_password_auth(
                    self.operation, self.world.backend, identity, spec["fieldIds"]
                )
            elif kind == "DigitalSignature":
                outcome = webapp.run_signature_auth(
                    self.operation, self.world.backend, identity, spec["fieldId"], self.world.rng
                )
            elif kind == "SecureRemotePassword":
                outcome = webapp.run_srp_auth(self.operation, self.world.backend, spec["fieldId"])
            elif kind == "OffChannelOtp":
                outcome = webapp.run_otp_auth(
                    self.operation,
                    self.world.side_channel,
                    identity,
                    self.world.rng,
                    deliver=spec.get("deliver", True),
                )
            elif kind == "Custom":
                manager = self._manager_for_channel()
                responder = spec.get("responder", "default")
                if responder not in manager.config.custom_responders:
                    manager.config.custom_responders[responder] = lambda name, body: dict(body)
                outcome = webapp.run_custom_auth(
                    self.operation, spec["schema"], spec["payload"], responder=responder
                )
            else:  # unreachable after parse-time validation
                raise errors.ParseError(f"unknown challenge kind {kind!r}")
            self.outcomes.append(outcome)
            self.steps.append(
                StepLogEntry(f"challenge:{kind}", outcome.ok, outcome.detail)
            )
        success = all(outcome.ok for outcome in self.outcomes)
        return {"success": success, "transcript": list(self.world.relay.wire_log)}

    # -- verdict ---------------------------------------------------------------------------

    def run(self) -> ScenarioResult:
        auth_success = True
        try:
            self.run_registration()
            if self.config.challenge_plan and self.operation.intent == "Register":
                auth_success = self.run_authentication()["success"]
            elif self.operation.intent == "Authenticate" and self.config.challenge_plan:
                auth_success = self.run_authentication()["success"]
        except BerytusError:
            pass  # recorded in the step log; judged against expectations below
        finally:
            if self.channel is not None and self.world is not None:
                self.world.orchestrator.close_channel(self.channel, "Done")
        return self._judge(auth_success)

    def _judge(self, auth_success: bool) -> ScenarioResult:
        expect = self.config.expect
        wanted = expect.get("outcome", "success")
        expected_failures = set(expect.get("failedChallenges", []))
        diff = None

        actually_failed = {o.kind for o in self.outcomes if not o.ok}
        clean = (
            self.error_code is None
            and all(s.ok for s in self.steps if not s.step.startswith("challenge:"))
            and actually_failed == expected_failures
            and (auth_success or expected_failures)
        )
        if wanted == "success":
            ok = clean
            if not ok:
                diff = (
                    f"expected success; error={self.error_code}, "
                    f"failed challenges={sorted(actually_failed) or 'none'}, "
                    f"expected failed={sorted(expected_failures) or 'none'}"
                )
        else:
            expected_code = expect.get("errorCode")
            if expected_code is not None:
                ok = self.error_code == expected_code
                if not ok:
                    diff = f"expected error {expected_code}, got {self.error_code}"
            else:
                ok = self.error_code is not None or bool(actually_failed)
                if not ok:
                    diff = "expected a failure but everything succeeded"
        return ScenarioResult(
            name=self.config.name,
            ok=ok,
            steps=self.steps,
            error_code=self.error_code,
            planted_secrets=self.planted,
            account=self.account,
            identity=self.identity,
            outcomes=self.outcomes,
            wire_log=list(self.world.relay.wire_log) if self.world else [],
            expectation_diff=diff,
        )


def run_registration(config: ScenarioConfig, taps: list | None = None):
    """One-shot registration phase; returns (report dict, runner for follow-ups)."""
    runner = ScenarioRunner(config, taps)
    return runner.run_registration(), runner


def run_authentication(runner: ScenarioRunner) -> dict:
    return runner.run_authentication()


def write_transcript(
    result: ScenarioResult, directory: str | Path, *, insecure_plain: list | None = None
) -> list[Path]:
    """JSON-lines wire transcript plus step log; optional plaintext shadow log."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    base = directory / result.name
    paths = []

    wire_path = base.with_suffix(".wire.jsonl")
    with open(wire_path, "w") as fh:
        for direction, data in result.wire_log:
            fh.write(json.dumps({"dir": direction, "data": data.hex()}) + "\n")
    paths.append(wire_path)

    steps_path = base.with_suffix(".steps.jsonl")
    with open(steps_path, "w") as fh:
        for step in result.steps:
            fh.write(json.dumps(step.to_record()) + "\n")
    paths.append(steps_path)

    if insecure_plain is not None:
        plain_path = base.with_suffix(".plain.jsonl")
        with open(plain_path, "w") as fh:
            for entry in insecure_plain:
                fh.write(canonical_encode(entry).decode() + "\n")
        paths.append(plain_path)
    return paths
