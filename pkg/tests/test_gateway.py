import json

import pytest

from synthsearch.errors import BudgetError, FormatError, GatewayError, ScriptedMissError
from synthsearch.gateway import (
    ChatExchange,
    FlakyProvider,
    GatewayBudget,
    LlmGateway,
    ScriptedProvider,
)

SCHEMA = {"type": "object", "required": ["x"], "properties": {"x": {"type": "integer"}}}


def exchange(text="metric-proposal please", role="evaluator"):
    return ChatExchange(role=role, messages=[{"speaker": "user", "text": text}])


def make(rules, **kwargs):
    provider = ScriptedProvider(rules)
    return provider, LlmGateway({"optimizer": provider, "evaluator": provider}, sleep=lambda s: None, **kwargs)


class TestScriptedProvider:
    def test_queue_order(self):
        _, gw = make([{"contains": "metric-proposal", "responses": ["a", "b", "c"]}])
        assert [gw.complete(exchange()) for _ in range(3)] == ["a", "b", "c"]

    def test_exhausted_queue_repeats_last(self):
        _, gw = make([{"contains": "metric-proposal", "responses": ["a", "b"]}])
        assert [gw.complete(exchange()) for _ in range(4)] == ["a", "b", "b", "b"]

    def test_unmatched_prompt_names_digest(self):
        _, gw = make([{"contains": "nope", "responses": ["a"]}])
        with pytest.raises(ScriptedMissError) as err:
            gw.complete(exchange())
        assert err.value.digest == exchange().digest()

    def test_digest_matcher(self):
        ex = exchange("exact prompt")
        _, gw = make([{"digest": ex.digest(), "responses": ["hit"]}])
        assert gw.complete(ex) == "hit"

    def test_first_match_wins(self):
        _, gw = make(
            [
                {"contains": "metric", "responses": ["first"]},
                {"contains": "proposal", "responses": ["second"]},
            ]
        )
        assert gw.complete(exchange()) == "first"

    def test_replay_identical(self):
        rules = [{"contains": "metric-proposal", "responses": ["a", "b"]}]
        transcript1 = [make(rules)[1].complete(exchange()) for _ in range(1)]
        transcript2 = [make(rules)[1].complete(exchange()) for _ in range(1)]
        assert transcript1 == transcript2


class TestRetries:
    def test_fails_twice_then_succeeds(self):
        events = []
        inner = ScriptedProvider([{"contains": "metric", "responses": ["ok"]}])
        provider = FlakyProvider(inner, failures=2)
        gw = LlmGateway(
            {"evaluator": provider, "optimizer": provider},
            event_sink=lambda kind, p: events.append(p),
            sleep=lambda s: None,
        )
        assert gw.complete(exchange()) == "ok"
        assert [e["ok"] for e in events] == [False, False, True]
        assert [e["attempt"] for e in events] == [0, 1, 2]

    def test_exhausted_retries_raise(self):
        inner = ScriptedProvider([{"contains": "metric", "responses": ["ok"]}])
        provider = FlakyProvider(inner, failures=10)
        gw = LlmGateway({"evaluator": provider, "optimizer": provider}, sleep=lambda s: None)
        with pytest.raises(GatewayError):
            gw.complete(exchange())

    def test_budget_exhaustion(self):
        _, gw = make(
            [{"contains": "metric-proposal", "responses": ["a"]}],
            budget=GatewayBudget(max_calls_per_run=10),
        )
        for _ in range(10):
            gw.complete(exchange())
        with pytest.raises(BudgetError):
            gw.complete(exchange())


class TestStructured:
    def test_valid_json(self):
        _, gw = make([{"contains": "metric", "responses": ['{"x": 1}']}])
        assert gw.complete_structured(exchange(), SCHEMA) == {"x": 1}

    def test_fenced_json_accepted(self):
        _, gw = make([{"contains": "metric", "responses": ['```json\n{"x": 1}\n```']}])
        assert gw.complete_structured(exchange(), SCHEMA) == {"x": 1}

    def test_invalid_then_valid_on_re_ask(self):
        events = []
        provider = ScriptedProvider([{"contains": "metric", "responses": ["garbage", '{"x": 2}']}])
        gw = LlmGateway(
            {"evaluator": provider, "optimizer": provider},
            event_sink=lambda kind, p: events.append(p),
            sleep=lambda s: None,
        )
        assert gw.complete_structured(exchange(), SCHEMA) == {"x": 2}
        assert [e["re_ask"] for e in events] == [False, True]

    def test_invalid_twice_raises_with_payloads(self):
        _, gw = make([{"contains": "metric", "responses": ["garbage", '{"x": "nope"}']}])
        with pytest.raises(FormatError) as err:
            gw.complete_structured(exchange(), SCHEMA)
        assert err.value.raw_payloads == ["garbage", '{"x": "nope"}']


class TestTranscript:
    def test_every_call_logged_once_with_increasing_seq(self):
        events = []
        provider = ScriptedProvider([{"contains": "metric", "responses": ["bad", '{"x": 1}']}])
        seq = [0]

        def sink(kind, payload):
            seq[0] += 1
            events.append({"seq": seq[0], **payload})

        gw = LlmGateway({"evaluator": provider, "optimizer": provider}, event_sink=sink, sleep=lambda s: None)
        gw.complete_structured(exchange(), SCHEMA)
        assert [e["seq"] for e in events] == [1, 2]
        assert gw.calls_made == 2

    def test_role_isolation(self):
        opt = ScriptedProvider([{"contains": "", "responses": ["from-optimizer"]}])
        ev = ScriptedProvider([{"contains": "", "responses": ["from-evaluator"]}])
        gw = LlmGateway({"optimizer": opt, "evaluator": ev}, sleep=lambda s: None)
        assert gw.complete(exchange(role="evaluator")) == "from-evaluator"
        assert gw.complete(exchange(role="optimizer")) == "from-optimizer"


def test_scripted_file_round_trip(tmp_path):
    path = tmp_path / "script.json"
    path.write_text(json.dumps({"matchers": [{"contains": "metric", "responses": ['{"x": 1}']}]}))
    provider = ScriptedProvider.from_file(path)
    gw = LlmGateway({"evaluator": provider, "optimizer": provider}, sleep=lambda s: None)
    assert gw.complete(exchange()) == '{"x": 1}'
