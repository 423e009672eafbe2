import json

import httpx
import numpy as np
import pytest

from chainforge.agent.backend import (
    BackendConfig,
    ChatCompletionClient,
    HttpBackend,
    MockPolicy,
    malformed_variant,
    mock_next,
)
from chainforge.agent.command_lang import FunctionCall, SyntaxFault, parse_call
from chainforge.agent.transcript import ChatMessage
from chainforge.errors import BackendStatusError, ConfigError, MalformedResponseError, TransportError

PROMPT = ChatMessage("user", "Verify if Sean Connery is an actor.")


def completion_body(content="Stop()", choices=None):
    if choices is None:
        choices = [{"index": 0, "finish_reason": "stop", "message": {"role": "assistant", "content": content}}]
    return {"id": "cmpl-1", "object": "chat.completion", "created": 0, "model": "test", "choices": choices}


def client_for(handler, **overrides):
    settings = {"endpoint": "http://backend.test", "model": "test-model", "max_retries": 0, **overrides}
    cfg = BackendConfig(**settings)
    return ChatCompletionClient(cfg, http_client=httpx.Client(transport=httpx.MockTransport(handler)))


class TestChatCompletionClient:

    def test_sends_the_whole_conversation(self):
        seen = {}

        def handler(request):
            seen["path"] = request.url.path
            seen["body"] = json.loads(request.content)
            return httpx.Response(200, json=completion_body('Actor(name="Sean Connery")'))

        messages = [PROMPT, ChatMessage("assistant", 'Reasoning(reasoning="go")'),
                    ChatMessage("user", "The reasoning has been recorded")]
        content = client_for(handler).complete(messages)
        assert content == 'Actor(name="Sean Connery")'
        assert seen["path"] == "/v1/chat/completions"
        assert seen["body"]["model"] == "test-model"
        assert seen["body"]["temperature"] == 0.7
        assert seen["body"]["messages"] == [m.to_dict() for m in messages]

    @pytest.mark.parametrize("status", [400, 404, 500, 503])
    def test_error_status(self, status):
        client = client_for(lambda request: httpx.Response(status, json={"error": {"message": "boom"}}))
        with pytest.raises(BackendStatusError) as info:
            client.complete([PROMPT])
        assert info.value.status_code == status

    def test_unreachable_server(self):
        def handler(request):
            raise httpx.ConnectError("connection refused", request=request)

        with pytest.raises(TransportError, match="unreachable"):
            client_for(handler).complete([PROMPT])

    def test_rate_limit_is_retried(self):
        statuses = iter([429, 200])
        seen = []

        def handler(request):
            seen.append(request.url.path)
            status = next(statuses)
            if status == 429:
                return httpx.Response(429, headers={"retry-after-ms": "1"}, json={"error": {"message": "slow down"}})
            return httpx.Response(200, json=completion_body("Stop()"))

        assert client_for(handler, max_retries=1).complete([PROMPT]) == "Stop()"
        assert seen == ["/v1/chat/completions"] * 2

    def test_rate_limit_past_the_retry_budget(self):
        seen = []

        def handler(request):
            seen.append(request)
            return httpx.Response(429, headers={"retry-after-ms": "1"}, json={"error": {"message": "slow down"}})

        with pytest.raises(BackendStatusError) as info:
            client_for(handler, max_retries=2).complete([PROMPT])
        assert info.value.status_code == 429
        assert len(seen) == 3

    def test_connect_errors_count_every_attempt(self):
        seen = []

        def handler(request):
            seen.append(request)
            raise httpx.ConnectError("connection refused", request=request)

        with pytest.raises(TransportError, match="after 1 retries"):
            client_for(handler, max_retries=1).complete([PROMPT])
        assert len(seen) == 2

    @pytest.mark.parametrize("body", [completion_body(choices=[]), completion_body(content=None)])
    def test_malformed_response(self, body):
        client = client_for(lambda request: httpx.Response(200, json=body))
        with pytest.raises(MalformedResponseError):
            client.complete([PROMPT])

    def test_needs_a_prompt(self):
        with pytest.raises(ValueError):
            client_for(lambda request: httpx.Response(200, json=completion_body())).complete([])

    def test_http_backend_ignores_the_rng(self, cast_away):
        backend = HttpBackend(client_for(lambda request: httpx.Response(200, json=completion_body("Stop()"))))
        assert backend.next_turn([PROMPT], cast_away, np.random.default_rng(0)) == "Stop()"

    @pytest.mark.parametrize("kwargs", [{"max_retries": -1}, {"timeout": 0}, {"max_concurrency": 0}])
    def test_config_validation(self, kwargs):
        with pytest.raises(ConfigError):
            BackendConfig(**kwargs)


class TestMockPolicy:

    SCRIPT = ('Reasoning(reasoning="check the actor")', 'Actor(name="Sean Connery")', "CheckCorrectChain()", "Stop()")

    def policy(self, error_rate=0.0, premature_stop_rate=0.0):
        return MockPolicy(seed=0, error_rate=error_rate, premature_stop_rate=premature_stop_rate,
                          script={"fol/1": self.SCRIPT})

    def test_follows_accepted_turns(self):
        policy, rng = self.policy(), np.random.default_rng(0)
        messages = [PROMPT]
        assert mock_next(messages, policy, rng, "fol/1") == self.SCRIPT[0]
        messages += [ChatMessage("assistant", self.SCRIPT[0]), ChatMessage("user", "The reasoning has been recorded")]
        assert mock_next(messages, policy, rng, "fol/1") == self.SCRIPT[1]
        messages += [ChatMessage("assistant", "Actr()"), ChatMessage("user", "Error: unknown command Actr. Please try again.")]
        assert mock_next(messages, policy, rng, "fol/1") == self.SCRIPT[1]

    def test_stop_follows_any_verifier_answer(self):
        messages = [PROMPT, ChatMessage("assistant", "CheckCorrectChain()"), ChatMessage("user", "False")]
        assert mock_next(messages, self.policy(error_rate=1.0), np.random.default_rng(0), "fol/1") == "Stop()"

    def test_every_turn_faulty(self):
        rng = np.random.default_rng(0)
        outcome = parse_call(mock_next([PROMPT], self.policy(error_rate=1.0), rng, "fol/1"))
        assert isinstance(outcome, SyntaxFault)

    def test_premature_check(self):
        assert mock_next([PROMPT], self.policy(premature_stop_rate=1.0), np.random.default_rng(0), "fol/1") == (
            "CheckCorrectChain()"
        )

    def test_two_draws_per_turn(self):
        rng = np.random.default_rng(42)
        mock_next([PROMPT], self.policy(), rng, "fol/1")
        reference = np.random.default_rng(42)
        reference.random(2)
        assert rng.random() == reference.random()

    @pytest.mark.parametrize("kwargs", [{"error_rate": 1.5}, {"premature_stop_rate": -0.1}])
    def test_rates_are_probabilities(self, kwargs):
        with pytest.raises(ConfigError):
            MockPolicy(seed=0, **kwargs)

    def test_script_must_parse(self):
        with pytest.raises(ConfigError, match="invalid command"):
            MockPolicy(seed=0, script={"fol/1": ("Actor(name=Sean)",)})

    def test_built_from_the_problem_pack(self, problems):
        policy = MockPolicy.from_problems(problems, seed=1)
        assert len(policy.script) == 15
        assert policy.script["fol/0"][-2:] == ("CheckCorrectChain()", "Stop()")


@pytest.mark.parametrize("command", [
    'Reasoning(reasoning="First, I\'ll check if Tom Hanks is an actor")',
    'Actor(name="Sean")',
    'Divide(a="48", b="2")',
    "Multiply(a=3, b=2)",
    "CheckCorrectChain()",
    "Stop()",
])
def test_malformed_variant_never_parses(command):
    assert isinstance(parse_call(command), FunctionCall)
    assert isinstance(parse_call(malformed_variant(command)), SyntaxFault)
