"""Channel lifecycle, manager selection, request discipline, and the key exchange."""

import pytest

from berytus import channel as ch
from berytus import errors, webapp
from berytus.encoding import canonical_decode, canonical_encode
from berytus.kernel import SigningKeyPair, rng_from_seed
from berytus.manager import ManagerConfig


def _registration(manager_id="m", count=0, handler=None, label="Vault"):
    def default_handler(request):
        return ch.ResponseEnvelope(request_id=request.request_id, resolved={})

    actor = webapp.make_manager_actor(SigningKeyPair.from_seed(b"\x09" * 32), 1_700_000_000)
    return ch.ManagerRegistration(
        manager_id=manager_id,
        handler=handler or default_handler,
        label=label,
        manager_actor=actor,
        account_count=lambda mapping_id: count,
    )


class TestRegistry:
    def test_duplicate_id_rejected(self):
        orch = ch.Orchestrator()
        orch.register_manager(_registration("a"))
        with pytest.raises(errors.DuplicateManagerId):
            orch.register_manager(_registration("a"))

    def test_unknown_unregister(self):
        with pytest.raises(errors.UnknownManager):
            ch.Orchestrator().unregister_manager("ghost")

    def test_registered_ids_sorted(self):
        orch = ch.Orchestrator()
        for mid in ("zeta", "alpha"):
            orch.register_manager(_registration(mid))
        assert orch.registered_ids() == ["alpha", "zeta"]


class TestSelection:
    def test_no_managers(self, world):
        empty = ch.Orchestrator()
        with pytest.raises(errors.NoManagerAvailable):
            empty.create_channel(
                world.web_app_actor, ch.SelectionPolicy(), world.trust_store, world.now
            )

    def test_allowlist_excludes_everything(self, make_world):
        world = make_world(manager_count=2)
        with pytest.raises(errors.NoManagerAvailable):
            webapp.open_channel(world, e2ee=False, allowlist={"not-registered"})

    def test_allowlist_pins_single_candidate(self, make_world):
        world = make_world(manager_count=3)
        channel = webapp.open_channel(world, e2ee=False, allowlist={"manager-2"})
        assert channel.manager_id == "manager-2"

    def test_default_chooser_prefers_account_count_then_id(self, world):
        orch = ch.Orchestrator()
        orch.register_manager(_registration("busy", count=3))
        orch.register_manager(_registration("idle", count=0))
        orch.register_manager(_registration("also-busy", count=3))
        channel = orch.create_channel(
            world.web_app_actor, ch.SelectionPolicy(), world.trust_store, world.now
        )
        assert channel.manager_id == "also-busy"  # ties break toward the smaller id

    def test_chooser_cannot_pick_outside_candidates(self, world):
        orch = ch.Orchestrator()
        orch.register_manager(_registration("only"))
        policy = ch.SelectionPolicy(chooser=lambda candidates: "rogue")
        with pytest.raises(errors.NoManagerAvailable):
            orch.create_channel(world.web_app_actor, policy, world.trust_store, world.now)

    def test_invalid_crypto_actor_refused(self, make_world):
        world = make_world()
        lookalike_tree = webapp.build_world(b"\x77" * 32)  # different root of trust
        with pytest.raises(errors.ActorValidationFailed):
            world.orchestrator.create_channel(
                lookalike_tree.web_app_actor,
                ch.SelectionPolicy(),
                world.trust_store,
                world.now,
            )

    def test_manager_refusal_surfaces_and_closes(self, make_world):
        config = ManagerConfig(seed=b"\x01" * 32, auto_approve=False)
        world = make_world(manager_configs=[config])
        with pytest.raises(errors.ManagerRejectedChannel):
            webapp.open_channel(world, e2ee=False)


class TestDispatchDiscipline:
    def test_dispatch_after_close(self, world):
        channel = webapp.open_channel(world, e2ee=False)
        world.orchestrator.close_channel(channel, "Done")
        assert channel.state == ch.STATE_CLOSED
        with pytest.raises(errors.ChannelClosed):
            channel.dispatch("login.approveOperation", {"operationId": "x"})

    def test_close_is_idempotent(self, world):
        channel = webapp.open_channel(world, e2ee=False)
        world.orchestrator.close_channel(channel)
        world.orchestrator.close_channel(channel)
        assert channel.close_reason == "Done"

    def test_request_ids_strictly_increase(self, world):
        seen = []
        orch = ch.Orchestrator()

        def spy(request):
            seen.append(request.request_id)
            return ch.ResponseEnvelope(request_id=request.request_id, resolved={})

        orch.register_manager(_registration("spy", handler=spy))
        channel = orch.create_channel(
            world.web_app_actor, ch.SelectionPolicy(), world.trust_store, world.now
        )
        for _ in range(4):
            channel.dispatch("challenge.close", {})
        assert seen == sorted(seen) and len(set(seen)) == len(seen)

    def test_single_outstanding_request(self, world):
        orch = ch.Orchestrator()
        holder = {}

        def reentrant(request):
            if request.kind != "channel.approveCreation":
                # the manager turning around and issuing a second request on the
                # same channel must trip the one-outstanding-request rule
                with pytest.raises(errors.ChannelBusy):
                    holder["channel"].dispatch("challenge.close", {})
            return ch.ResponseEnvelope(request_id=request.request_id, resolved={})

        orch.register_manager(_registration("reentrant", handler=reentrant))
        holder["channel"] = orch.create_channel(
            world.web_app_actor, ch.SelectionPolicy(), world.trust_store, world.now
        )
        holder["channel"].dispatch("challenge.close", {})

    def test_mismatched_response_id_rejected(self, world):
        orch = ch.Orchestrator()

        def confused(request):
            if request.kind == "channel.approveCreation":
                return ch.ResponseEnvelope(request_id=request.request_id, resolved={})
            return ch.ResponseEnvelope(request_id=999, resolved={})

        orch.register_manager(_registration("confused", handler=confused))
        channel = orch.create_channel(
            world.web_app_actor, ch.SelectionPolicy(), world.trust_store, world.now
        )
        with pytest.raises(errors.ProtocolViolation):
            channel.dispatch("challenge.close", {})

    def test_unregister_closes_channels(self, make_world):
        world = make_world()
        channel = webapp.open_channel(world, e2ee=False)
        world.orchestrator.unregister_manager(channel.manager_id)
        assert channel.state == ch.STATE_CLOSED
        assert channel.close_reason == "ManagerGone"


class TestKeyExchange:
    def test_success_secures_channel(self, secured):
        world, channel = secured
        assert channel.state == ch.STATE_SECURED
        assert channel.session_keys is not None
        assert channel.transcript.manager_share is not None
        assert (ch.STATE_KEY_EXCHANGE, ch.STATE_SECURED) in channel.transitions

    def test_transitions_all_legal(self, secured):
        world, channel = secured
        world.orchestrator.close_channel(channel)
        for hop in channel.transitions:
            assert hop in ch.LEGAL_TRANSITIONS

    def test_payloads_sealed_after_secured(self, secured):
        world, channel = secured
        webapp_mark = b"very-recognizable-claim-list"
        channel.dispatch(
            "login.approveOperation",
            {"operationId": "op-seal", "requestedIntent": "RegisterOnly"},
        )
        for _direction, data in world.relay.wire_log:
            record = canonical_decode(data)
            payload = record.get("payload")
            if isinstance(payload, dict) and record.get("kind", "").startswith("login."):
                assert set(payload) == {"sealed"}
            assert b"op-seal" not in data or b"sealed" in data

    def test_requires_crypto_identities(self, make_world):
        world = make_world(web_app_kind="origin", web_app_uri="https://plain.example.com/")
        channel = webapp.open_channel(world, e2ee=False)
        with pytest.raises(errors.E2EEUnavailable):
            channel.run_key_exchange(SigningKeyPair.from_seed(b"\x01" * 32))

    def test_wrong_signing_key_refused(self, world):
        channel = webapp.open_channel(world, e2ee=False)
        with pytest.raises(errors.SignatureInvalid):
            channel.run_key_exchange(SigningKeyPair.from_seed(b"\x99" * 32))
        assert channel.state != ch.STATE_SECURED

    def test_cannot_rerun_once_secured(self, secured):
        world, channel = secured
        with pytest.raises(errors.ProtocolViolation):
            channel.run_key_exchange(world.web_app_signing_key)

    def test_mutated_manager_share_fails_handshake(self):
        class ShareFlipper(webapp.Tap):
            name = "share-flipper"

            def observe(self, direction, data):
                if direction != "sm->app" or b"managerShare" not in data:
                    return data
                record = canonical_decode(data)
                share = record["outcome"]["resolved"]["managerShare"]
                flipped = ("0" if share[0] != "0" else "1") + share[1:]
                record["outcome"]["resolved"]["managerShare"] = flipped
                return canonical_encode(record)

        world = webapp.build_world(b"\x44" * 32, taps=[ShareFlipper()])
        with pytest.raises(errors.SignatureInvalid):
            webapp.open_channel(world, e2ee=True)

    def test_mutated_confirmation_hash_detected_by_manager(self):
        class HashFlipper(webapp.Tap):
            name = "hash-flipper"

            def observe(self, direction, data):
                if direction != "app->sm" or b"transcriptHash" not in data:
                    return data
                record = canonical_decode(data)
                digest = record["payload"]["transcriptHash"]
                record["payload"]["transcriptHash"] = digest[:-2] + (
                    "00" if digest[-2:] != "00" else "11"
                )
                return canonical_encode(record)

        world = webapp.build_world(b"\x45" * 32, taps=[HashFlipper()])
        with pytest.raises(errors.KeyConfirmationFailed):
            webapp.open_channel(world, e2ee=True)

    def test_failed_exchange_closes_channel(self):
        class Dropper(webapp.Tap):
            def observe(self, direction, data):
                if b"keyExchange.offer" in data and direction == "app->sm":
                    record = canonical_decode(data)
                    record["payload"]["webAppSignature"] = "00" * 64
                    return canonical_encode(record)
                return data

        world = webapp.build_world(b"\x46" * 32, taps=[Dropper()])
        with pytest.raises(errors.BerytusError):
            webapp.open_channel(world, e2ee=True)
        # exactly one channel was opened and it must now be closed
        channels = world.orchestrator._channels["manager-1"]
        assert len(channels) == 1
        assert channels[0].state == ch.STATE_CLOSED
        assert channels[0].close_reason == "KeyExchangeFailed"

    def test_keys_zeroized_on_close(self, secured):
        world, channel = secured
        keys = channel.session_keys
        world.orchestrator.close_channel(channel)
        assert channel.session_keys is None
        assert keys.key_app_to_manager == b""


def test_relay_decode_failure_is_parse_error(world):
    class Corruptor(webapp.Tap):
        def observe(self, direction, data):
            return data[:-1]  # truncate: no longer canonical

    relay = webapp.FrontEndRelay([Corruptor()])
    with pytest.raises(errors.ParseError):
        relay.send("app->sm", {"k": 1})


def test_wire_records_use_hex_for_bytes(world):
    channel = webapp.open_channel(world, e2ee=False)
    channel.dispatch("login.approveOperation", {"operationId": "op-1", "requestedIntent": "RegisterOnly"})
    direction, data = world.relay.wire_log[-2]
    record = canonical_decode(data)
    assert isinstance(record["channelId"], str)
    bytes.fromhex(record["channelId"])  # decodes as hex
