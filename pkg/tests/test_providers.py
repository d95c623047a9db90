import json

import httpx
import pytest

from svi_audit.ingest import parse_response
from svi_audit.lpn import lpn
from svi_audit.providers import (
    HTTPChatProvider,
    MockModelConfig,
    MockProvider,
    ModelSpec,
    ProviderConfigError,
    ProviderFatalError,
    SampleFailedError,
    SamplingPolicy,
    TokenBucket,
    build_negation_fragile_mock,
    load_provider_registry,
    make_provider,
    mock_from_lpn_rates,
    mock_generate,
)
from svi_audit.scenarios import FRAMES, Frame, render_prompt


def _rate(config, scenario, frame, n):
    hits = valid = 0
    for d in range(n):
        out = parse_response(mock_generate(config, scenario, frame, d))
        if out.valid:
            valid += 1
            hits += lpn(frame, out.record.decision)
    return hits / valid, valid / n


def test_mock_deterministic():
    cfg = MockModelConfig({("*", f): 0.5 for f in FRAMES}, compliance=0.9, seed=3)
    a = [mock_generate(cfg, "war_1", Frame.F2, d) for d in range(50)]
    assert a == [mock_generate(cfg, "war_1", Frame.F2, d) for d in range(50)]
    other = MockModelConfig({("*", f): 0.5 for f in FRAMES}, compliance=0.9, seed=4)
    assert a != [mock_generate(other, "war_1", Frame.F2, d) for d in range(50)]


def test_mock_law_of_large_numbers():
    cfg = MockModelConfig({("*", f): 0.5 for f in FRAMES}, seed=1)
    rate, _ = _rate(cfg, "s", Frame.F0, 10_000)
    assert abs(rate - 0.5) < 0.015


def test_mock_compliance():
    cfg = MockModelConfig({("*", f): 0.5 for f in FRAMES}, compliance=0.9, seed=2)
    _, comp = _rate(cfg, "s", Frame.F1, 10_000)
    assert abs(comp - 0.9) < 0.01


def test_mock_malformed_outputs_are_invalid():
    cfg = MockModelConfig({("*", f): 0.5 for f in FRAMES}, compliance=0.0)
    reasons = {parse_response(mock_generate(cfg, "s", Frame.F0, d)).failure_reason for d in range(200)}
    assert reasons == {"no JSON object found", "schema field missing"}


@pytest.mark.parametrize("target", [0.0, 1.0])
def test_fragile_mock_extremes(target):
    cfg = build_negation_fragile_mock(target, seed=0)
    rates = {f: _rate(cfg, "s", f, 300)[0] for f in FRAMES}
    if target == 0.0:
        assert all(abs(r - 0.5) < 0.1 for r in rates.values())
    else:
        assert rates == {Frame.F0: 0.0, Frame.F1: 0.0, Frame.F2: 0.0, Frame.F3: 1.0}


def test_lpn_rate_mock():
    cfg = mock_from_lpn_rates({"F0": 0.2, "F1": 0.8, "F2": 0.4, "F3": 0.9}, seed=9)
    assert abs(_rate(cfg, "s", Frame.F1, 4000)[0] - 0.8) < 0.03
    assert cfg.lookup("anything", Frame.F1) == (pytest.approx(0.2), 1.0)


def test_mock_config_validation():
    with pytest.raises(ProviderConfigError):
        MockModelConfig({("*", Frame.F0): 1.5})
    with pytest.raises(ProviderConfigError, match="does not cover"):
        MockModelConfig({("a", Frame.F0): 0.5}).lookup("b", Frame.F0)
    with pytest.raises(ProviderConfigError):
        build_negation_fragile_mock(1.1)


# --------------------------------------------------------------------- HTTP


@pytest.fixture
def prompt(suite):
    return render_prompt(suite[0], Frame.F1)


def _spec(**kw):
    base = dict(model_id="m", origin="US_commercial", tier="LARGE", endpoint="https://api.test/v1/chat",
                auth_env="TEST_KEY")
    base.update(kw)
    return ModelSpec(**base)


def _reply(text):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}]})


def _provider(handler, spec=None, sleeps=None):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return HTTPChatProvider(spec or _spec(), client=client,
                            sleep=(sleeps.append if sleeps is not None else lambda s: None),
                            env={"TEST_KEY": "k"})


FAST = SamplingPolicy(rate_per_second=0, backoff_base=0.5)


def test_request_is_single_user_turn(prompt):
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        assert request.headers["authorization"] == "Bearer k"
        return _reply("ok")

    assert _provider(handler).sample(prompt, FAST, 0) == "ok"
    body = seen[0]
    assert body["messages"] == [{"role": "user", "content": prompt.full_text}]
    assert body["temperature"] == 0.7
    assert not any(m["role"] == "system" for m in body["messages"])


def test_temperature_omitted_when_unsupported(prompt):
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        return _reply("ok")

    _provider(handler, _spec(supports_temperature=False)).sample(prompt, FAST, 0)
    assert "temperature" not in seen[0]


def test_anthropic_style(prompt):
    def handler(request):
        assert request.headers["x-api-key"] == "k"
        return httpx.Response(200, json={"content": [{"type": "text", "text": "a"}, {"type": "text", "text": "b"}]})

    assert _provider(handler, _spec(request_style="anthropic")).sample(prompt, FAST, 0) == "ab"


def test_retry_with_backoff(prompt):
    statuses = iter([503, 429, 200])
    sleeps = []

    def handler(request):
        code = next(statuses)
        return _reply("fine") if code == 200 else httpx.Response(code)

    assert _provider(handler, sleeps=sleeps).sample(prompt, FAST, 0) == "fine"
    assert sleeps == [0.5, 1.0]


def test_transport_errors_exhaust_retries(prompt):
    calls = []

    def handler(request):
        calls.append(1)
        raise httpx.ConnectError("refused")

    with pytest.raises(SampleFailedError, match="4 attempts"):
        _provider(handler).sample(prompt, FAST, 0)
    assert len(calls) == 4


@pytest.mark.parametrize("status", [401, 403, 404, 400])
def test_fatal_statuses(prompt, status):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(status, text="no")

    with pytest.raises(ProviderFatalError):
        _provider(handler).sample(prompt, FAST, 0)
    assert len(calls) == 1


def test_missing_credentials(prompt):
    p = HTTPChatProvider(_spec(), env={})
    with pytest.raises(ProviderFatalError, match="TEST_KEY"):
        p.build_request(prompt, FAST)


def test_token_bucket_waits():
    now = [0.0]
    waits = []

    def sleep(s):
        waits.append(s)
        now[0] += s

    bucket = TokenBucket(rate=2.0, capacity=1.0, clock=lambda: now[0], sleep=sleep)
    for _ in range(3):
        bucket.acquire()
    assert waits == [pytest.approx(0.5), pytest.approx(0.5)]


def test_make_provider_dispatch():
    mock_spec = _spec(endpoint="mock", mock=build_negation_fragile_mock(0.3))
    assert isinstance(make_provider(mock_spec), MockProvider)
    assert isinstance(make_provider(_spec()), HTTPChatProvider)
    with pytest.raises(ProviderConfigError):
        MockProvider(_spec(endpoint="mock"))


def test_policy_validation():
    with pytest.raises(ProviderConfigError):
        SamplingPolicy(n_samples=0)
    with pytest.raises(ProviderConfigError):
        SamplingPolicy(temperature=3.0)


def test_registry(tmp_path):
    path = tmp_path / "providers.yaml"
    path.write_text(
        "models:\n"
        "  - {model_id: a, origin: OSS, tier: TINY, endpoint: mock, mock: {svi_target: 0.4, seed: 2}}\n"
        "  - {model_id: b, origin: CN_commercial, tier: LARGE, endpoint: 'https://x', auth_env: K,\n"
        "     supports_temperature: false, reasoning_mode: enabled, family: fam}\n"
    )
    a, b = load_provider_registry(path)
    assert a.is_mock and a.mock.seed == 2
    assert not b.supports_temperature and b.family == "fam"
    path.write_text("models:\n  - {model_id: a, origin: EU, tier: TINY, endpoint: mock, mock: {svi_target: 0.1}}\n")
    with pytest.raises(ProviderConfigError, match="origin"):
        load_provider_registry(path)
