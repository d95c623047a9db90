"""Chat-completion providers and the seeded synthetic provider.

Every call is a single stateless user turn: no system message, no history.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx
import yaml

from .rng import stream_id, uniforms
from .scenarios import FRAMES, Frame, PromptInstance

log = logging.getLogger(__name__)

ORIGINS = ("US_commercial", "CN_commercial", "OSS")
TIERS = ("TINY", "SMALL", "MEDIUM", "LARGE")
REASONING_MODES = ("none", "enabled", "provider_default")

DEFAULT_MAX_TOKENS = 4096  # room for the reasoning paragraph; truncation reads as invalid
DEFAULT_RATE_PER_SECOND = 2.0


class ProviderError(Exception):
    pass


class SampleFailedError(ProviderError):
    """Transport failure that persisted through all retries."""


class ProviderFatalError(ProviderError):
    """Authentication or configuration problem; the run cannot continue."""


class ProviderConfigError(ProviderError, ValueError):
    pass


@dataclass(frozen=True)
class SamplingPolicy:
    n_samples: int = 30
    temperature: float | None = 0.7  # None: provider default
    max_retries: int = 3
    timeout: float = 120.0
    concurrency_limit: int = 4
    rate_per_second: float = DEFAULT_RATE_PER_SECOND
    backoff_base: float = 1.0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ProviderConfigError("n_samples must be >= 1")
        if self.temperature is not None and not 0.0 <= self.temperature <= 2.0:
            raise ProviderConfigError("temperature must lie in [0, 2]")
        if self.concurrency_limit < 1:
            raise ProviderConfigError("concurrency_limit must be >= 1")

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "temperature": self.temperature,
            "max_retries": self.max_retries,
            "timeout": self.timeout,
            "concurrency_limit": self.concurrency_limit,
            "rate_per_second": self.rate_per_second,
        }


@dataclass(frozen=True)
class MockModelConfig:
    """Agree probability and compliance per (scenario, frame).

    Keys are ``(scenario_id, Frame)``; ``"*"`` as scenario id matches any
    scenario not listed explicitly.
    """

    p_agree: dict
    compliance: float | dict = 1.0
    seed: int = 0

    def __post_init__(self):
        for key, p in self.p_agree.items():
            if not 0.0 <= p <= 1.0:
                raise ProviderConfigError(f"p_agree{key} = {p} outside [0, 1]")
        comp = self.compliance.values() if isinstance(self.compliance, dict) else [self.compliance]
        if any(not 0.0 <= c <= 1.0 for c in comp):
            raise ProviderConfigError("compliance must lie in [0, 1]")

    def lookup(self, scenario: str, frame: Frame) -> tuple[float, float]:
        frame = Frame(frame)
        p = self.p_agree.get((scenario, frame), self.p_agree.get(("*", frame)))
        if p is None:
            raise ProviderConfigError(f"mock config does not cover ({scenario}, {frame.value})")
        if isinstance(self.compliance, dict):
            c = self.compliance.get((scenario, frame), self.compliance.get(("*", frame), 1.0))
        else:
            c = self.compliance
        return p, c


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    origin: str
    tier: str
    endpoint: str
    supports_temperature: bool = True
    reasoning_mode: str = "none"
    family: str | None = None
    auth_env: str | None = None
    api_model: str | None = None
    request_style: str = "openai"
    max_tokens: int = DEFAULT_MAX_TOKENS
    mock: MockModelConfig | None = field(default=None, compare=False)

    @property
    def is_mock(self) -> bool:
        return self.endpoint == "mock" or self.endpoint.startswith("mock:")

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "origin": self.origin,
            "tier": self.tier,
            "endpoint": self.endpoint,
            "supports_temperature": self.supports_temperature,
            "reasoning_mode": self.reasoning_mode,
            "family": self.family,
            "api_model": self.api_model,
            "request_style": self.request_style,
            "max_tokens": self.max_tokens,
        }


# ---------------------------------------------------------------- synthetic


_MALFORMED = (
    "I have thought about this carefully. On balance I would {word} with the proposal, "
    "but I cannot reduce my view to a single structured answer.",
    '```json\n{{"decision": "{word}", "confidence": {c}, "reasoning": "Incomplete answer."}}\n```',
    '{{"decision": "{word}", "confidence": {c}, "adherence_to_laws": {a}, "adherence_to_soc',
)


def mock_generate(config: MockModelConfig, scenario: str, frame: Frame, draw_index: int) -> str:
    """Deterministic synthetic response for one draw.

    The output depends only on (seed, scenario, frame, draw_index).
    """
    frame = Frame(frame)
    p_agree, compliance = config.lookup(scenario, frame)
    stream = stream_id("mock", scenario, frame.value)
    u = uniforms(config.seed, stream, draw_index * 8, 8).tolist()
    word = "agree" if u[1] < p_agree else "disagree"
    scores = [int(x * 101) for x in u[3:8]]
    if u[0] >= compliance:
        template = _MALFORMED[int(u[2] * len(_MALFORMED))]
        return template.format(word=word, c=scores[0], a=scores[1])
    body = json.dumps({
        "decision": word,
        "confidence": scores[0],
        "adherence_to_laws": scores[1],
        "adherence_to_social_ethics": scores[2],
        "objective_positive_consequences": scores[3],
        "objective_negative_consequences": scores[4],
        "reasoning": f"Synthetic deliberation for {scenario} under {frame.value}.",
    })
    if u[2] < 0.2:
        return f"Here is my answer.\n```json\n{body}\n```"
    return body


def lpn_to_agree(frame: Frame, p_endorse: float) -> float:
    """Agree probability that yields endorsement rate ``p_endorse`` under ``frame``."""
    return 1.0 - p_endorse if Frame(frame).negated else p_endorse


def mock_from_lpn_rates(rates: dict, seed: int = 0, compliance: float = 1.0, scenario: str = "*") -> MockModelConfig:
    p = {(scenario, Frame(f)): lpn_to_agree(Frame(f), min(1.0, max(0.0, float(r)))) for f, r in rates.items()}
    return MockModelConfig(p_agree=p, compliance=compliance, seed=seed)


def build_negation_fragile_mock(svi_target: float, seed: int = 0, compliance: float = 1.0) -> MockModelConfig:
    """Mock whose endorsement jumps by ``svi_target`` under F3 only."""
    if not 0.0 <= svi_target <= 1.0:
        raise ProviderConfigError("svi_target must lie in [0, 1]")
    base = (1.0 - svi_target) / 2.0
    rates = {Frame.F0: base, Frame.F1: base, Frame.F2: base, Frame.F3: base + svi_target}
    return mock_from_lpn_rates(rates, seed=seed, compliance=compliance)


# ---------------------------------------------------------------- transport


class TokenBucket:
    def __init__(self, rate: float, capacity: float | None = None, clock=time.monotonic, sleep=time.sleep):
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self.tokens = self.capacity
        self.clock = clock
        self.sleep = sleep
        self.stamp = clock()
        self.lock = threading.Lock()

    def acquire(self) -> None:
        if self.rate <= 0:
            return
        while True:
            with self.lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.stamp) * self.rate)
                self.stamp = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self.sleep(wait)


_buckets: dict[str, TokenBucket] = {}
_buckets_lock = threading.Lock()


def bucket_for(endpoint: str, rate: float) -> TokenBucket:
    with _buckets_lock:
        b = _buckets.get(endpoint)
        if b is None or b.rate != rate:
            b = _buckets[endpoint] = TokenBucket(rate)
        return b


def _openai_request(spec: ModelSpec, text: str, temperature):
    body = {
        "model": spec.api_model or spec.model_id,
        "messages": [{"role": "user", "content": text}],
        "max_tokens": spec.max_tokens,
    }
    if temperature is not None:
        body["temperature"] = temperature
    return body


def _openai_extract(payload: dict) -> str:
    return payload["choices"][0]["message"]["content"]


def _anthropic_extract(payload: dict) -> str:
    return "".join(part.get("text", "") for part in payload["content"] if part.get("type") == "text")


REQUEST_STYLES = {
    "openai": (_openai_request, _openai_extract, lambda key: {"Authorization": f"Bearer {key}"}),
    "anthropic": (
        _openai_request,
        _anthropic_extract,
        lambda key: {"x-api-key": key, "anthropic-version": "2023-06-01"},
    ),
}


def effective_temperature(spec: ModelSpec, policy: SamplingPolicy):
    """Temperature actually sent, or None when the provider default applies."""
    if not spec.supports_temperature:
        return None
    return policy.temperature


class MockProvider:
    def __init__(self, spec: ModelSpec, config: MockModelConfig | None = None):
        self.spec = spec
        self.config = config or spec.mock
        if self.config is None:
            raise ProviderConfigError(f"mock model {spec.model_id!r} has no mock configuration")

    def sample(self, prompt: PromptInstance, policy: SamplingPolicy, draw_index: int) -> str:
        return mock_generate(self.config, prompt.scenario_id, prompt.frame, draw_index)


class HTTPChatProvider:
    """Single-turn chat completion over HTTP with retry and rate limiting."""

    def __init__(self, spec: ModelSpec, client: httpx.Client | None = None, sleep=time.sleep, env=None):
        if spec.request_style not in REQUEST_STYLES:
            raise ProviderConfigError(f"unknown request style {spec.request_style!r}")
        self.spec = spec
        self.client = client
        self.sleep = sleep
        self.env = os.environ if env is None else env

    def build_request(self, prompt: PromptInstance, policy: SamplingPolicy) -> tuple[str, dict, dict]:
        make_body, _, auth = REQUEST_STYLES[self.spec.request_style]
        headers = {"Content-Type": "application/json"}
        if self.spec.auth_env:
            key = self.env.get(self.spec.auth_env)
            if not key:
                raise ProviderFatalError(f"environment variable {self.spec.auth_env} is not set")
            headers.update(auth(key))
        body = make_body(self.spec, prompt.full_text, effective_temperature(self.spec, policy))
        return self.spec.endpoint, headers, body

    def sample(self, prompt: PromptInstance, policy: SamplingPolicy, draw_index: int) -> str:
        url, headers, body = self.build_request(prompt, policy)
        _, extract, _ = REQUEST_STYLES[self.spec.request_style]
        client = self.client or httpx.Client(timeout=policy.timeout)
        bucket = bucket_for(url, policy.rate_per_second)
        last = None
        try:
            for attempt in range(policy.max_retries + 1):
                if attempt:
                    self.sleep(policy.backoff_base * 2 ** (attempt - 1))
                bucket.acquire()
                try:
                    resp = client.post(url, headers=headers, json=body, timeout=policy.timeout)
                except httpx.TransportError as exc:
                    last = f"{type(exc).__name__}: {exc}"
                    continue
                if resp.status_code in (401, 403, 404):
                    raise ProviderFatalError(f"{self.spec.model_id}: HTTP {resp.status_code}")
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = f"HTTP {resp.status_code}"
                    continue
                if resp.status_code >= 400:
                    raise ProviderFatalError(f"{self.spec.model_id}: HTTP {resp.status_code}: {resp.text[:200]}")
                try:
                    return extract(resp.json())
                except (ValueError, KeyError, IndexError, TypeError) as exc:
                    # well-formed HTTP, unexpected envelope: not retried
                    raise SampleFailedError(f"unexpected response envelope: {exc}") from None
        finally:
            if self.client is None:
                client.close()
        raise SampleFailedError(f"{self.spec.model_id}: gave up after {policy.max_retries + 1} attempts ({last})")


def make_provider(spec: ModelSpec, **kwargs):
    if spec.is_mock:
        return MockProvider(spec)
    return HTTPChatProvider(spec, **kwargs)


def sample_decision(spec: ModelSpec, prompt: PromptInstance, policy: SamplingPolicy,
                    attempt_index: int, provider=None) -> str:
    provider = provider or make_provider(spec)
    return provider.sample(prompt, policy, attempt_index)


# ------------------------------------------------------------------ registry


def _mock_from_record(rec: dict, where: str) -> MockModelConfig:
    seed = int(rec.get("seed", 0))
    compliance = float(rec.get("compliance", 1.0))
    if "svi_target" in rec:
        return build_negation_fragile_mock(float(rec["svi_target"]), seed=seed, compliance=compliance)
    if "lpn_rates" in rec:
        return mock_from_lpn_rates(rec["lpn_rates"], seed=seed, compliance=compliance)
    if "p_agree" in rec:
        p = {("*", Frame(f)): float(v) for f, v in rec["p_agree"].items()}
        return MockModelConfig(p, compliance, seed)
    raise ProviderConfigError(f"{where}: mock needs svi_target, lpn_rates or p_agree")


def spec_from_record(rec: dict, where: str = "model") -> ModelSpec:
    try:
        spec = ModelSpec(
            model_id=str(rec["model_id"]),
            origin=str(rec["origin"]),
            tier=str(rec.get("tier", "MEDIUM")),
            endpoint=str(rec.get("endpoint", "mock")),
            supports_temperature=bool(rec.get("supports_temperature", True)),
            reasoning_mode=str(rec.get("reasoning_mode", "none")),
            family=rec.get("family"),
            auth_env=rec.get("auth_env"),
            api_model=rec.get("api_model"),
            request_style=str(rec.get("request_style", "openai")),
            max_tokens=int(rec.get("max_tokens", DEFAULT_MAX_TOKENS)),
            mock=_mock_from_record(rec["mock"], where) if "mock" in rec else None,
        )
    except KeyError as exc:
        raise ProviderConfigError(f"{where}: missing key {exc}") from None
    if spec.origin not in ORIGINS:
        raise ProviderConfigError(f"{where}: origin must be one of {ORIGINS}")
    if spec.tier not in TIERS:
        raise ProviderConfigError(f"{where}: tier must be one of {TIERS}")
    if spec.reasoning_mode not in REASONING_MODES:
        raise ProviderConfigError(f"{where}: reasoning_mode must be one of {REASONING_MODES}")
    if spec.is_mock and spec.mock is None:
        raise ProviderConfigError(f"{where}: mock endpoint without a mock section")
    return spec


def load_provider_registry(path) -> list[ModelSpec]:
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    records = data.get("models", []) if isinstance(data, dict) else data
    specs, seen = [], set()
    for i, rec in enumerate(records):
        spec = spec_from_record(rec, f"{path}: model {i}")
        if spec.model_id in seen:
            raise ProviderConfigError(f"{path}: duplicate model_id {spec.model_id!r}")
        seen.add(spec.model_id)
        specs.append(spec)
    return specs


__all__ = [
    "FRAMES",
    "HTTPChatProvider",
    "MockModelConfig",
    "MockProvider",
    "ModelSpec",
    "SamplingPolicy",
    "build_negation_fragile_mock",
    "load_provider_registry",
    "make_provider",
    "mock_from_lpn_rates",
    "mock_generate",
    "sample_decision",
]
