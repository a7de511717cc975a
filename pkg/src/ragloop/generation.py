"""Prompt assembly and response generation via a pluggable backend: an
OpenAI-style chat-completion HTTP adapter or a deterministic local mock.
"""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass
from typing import Sequence

import requests

from .conversation import (
    Conversation,
    ContextPassage,
    GeneratorConfig,
    Message,
    RetrieverConfig,
    messages_of,
)
from .corpus import CorpusStore
from .errors import (
    GeneratorTimeout,
    GeneratorUnavailable,
    MalformedGeneratorResponse,
    NotAwaitingResponse,
    TemplateError,
)
from .retrieval import retrieve

PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


@dataclass(frozen=True)
class GenerationResult:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: int = 0


@dataclass(frozen=True)
class TurnResult:
    response: GenerationResult
    contexts: tuple[ContextPassage, ...]
    prompt: str


def _substitute(template: str, values: dict[str, str], where: str) -> str:
    def repl(match: re.Match) -> str:
        name = match.group(1)
        if name not in values:
            raise TemplateError(f"unknown placeholder {{{name}}} in {where}")
        return values[name]

    return PLACEHOLDER_RE.sub(repl, template)


def render_passages(config: GeneratorConfig,
                    passages: Sequence[ContextPassage]) -> str:
    parts = []
    for n, passage in enumerate(passages, start=1):
        parts.append(_substitute(config.passage_template,
                                 {"n": str(n), "title": passage.title,
                                  "text": passage.text},
                                 "passage_template"))
    return "".join(parts)


def render_prompt(config: GeneratorConfig, conv: Conversation | Sequence[Message],
                  passages: Sequence[ContextPassage]) -> str:
    """Fill the prompt template for the pending user turn.

    {history} covers every turn before the final user message, one
    "speaker: text" line each; {question} is the final user text.
    """
    messages = messages_of(conv)
    if not messages or not messages[-1].is_user:
        raise NotAwaitingResponse("prompt rendering needs a pending user turn")
    history = "\n".join(f"{m.speaker}: {m.text}" for m in messages[:-1])
    values = {
        "system": config.system_prompt,
        "passages": render_passages(config, passages),
        "history": history,
        "question": messages[-1].text,
    }
    return _substitute(config.prompt_template, values, "prompt_template")


def _mock_generate(prompt: str) -> GenerationResult:
    last_line = prompt.rsplit("\n", 1)[-1]
    return GenerationResult(text=f"MOCK: {last_line}",
                            prompt_tokens=len(prompt.split()),
                            completion_tokens=len(last_line.split()) + 1,
                            latency_ms=0)


def _remote_generate(config: GeneratorConfig, prompt: str) -> GenerationResult:
    endpoint = config.endpoint
    if endpoint is None:
        raise GeneratorUnavailable("remote_chat requires an endpoint")
    headers = {}
    if endpoint.auth_token_env:
        token = os.environ.get(endpoint.auth_token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
    payload = {
        "model": config.model_id,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.decoding.temperature,
        "top_p": config.decoding.top_p,
        "max_tokens": config.decoding.max_tokens,
    }
    started = time.monotonic()
    try:
        response = requests.post(endpoint.url, json=payload, headers=headers,
                                 timeout=config.timeout_s)
    except requests.Timeout:
        raise GeneratorTimeout(
            f"generator did not answer within {config.timeout_s}s") from None
    except requests.RequestException as exc:
        raise GeneratorUnavailable(f"generator request failed: {exc}") from None
    latency_ms = int((time.monotonic() - started) * 1000)
    if response.status_code != 200:
        raise GeneratorUnavailable(
            f"generator returned HTTP {response.status_code}",
            status=response.status_code)
    try:
        body = response.json()
    except ValueError:
        raise MalformedGeneratorResponse("generator response is not JSON") from None
    try:
        text = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise MalformedGeneratorResponse(
            "generator response lacks choices[0].message.content") from None
    if not isinstance(text, str):
        raise MalformedGeneratorResponse("generator choice content is not a string")
    usage = body.get("usage", {}) if isinstance(body.get("usage"), dict) else {}

    def usage_int(key: str) -> int:
        value = usage.get(key, 0)
        return value if isinstance(value, int) and not isinstance(value, bool) else 0

    return GenerationResult(text=text,
                            prompt_tokens=usage_int("prompt_tokens"),
                            completion_tokens=usage_int("completion_tokens"),
                            latency_ms=latency_ms)


def generate(config: GeneratorConfig, prompt: str) -> GenerationResult:
    if config.engine == "mock_echo":
        return _mock_generate(prompt)
    return _remote_generate(config, prompt)


def agent_turn(retriever_config: RetrieverConfig, generator_config: GeneratorConfig,
               conv: Conversation | Sequence[Message],
               store: CorpusStore | None = None,
               manual_query: str | None = None) -> TurnResult:
    """Retrieve passages for the pending user turn, then generate a response
    grounded in exactly those passages. Retrieval failures abort before the
    generator is contacted."""
    messages = messages_of(conv)
    if not messages or not messages[-1].is_user:
        raise NotAwaitingResponse("agent turn needs a pending user turn")
    contexts = tuple(retrieve(retriever_config, messages, store=store,
                              manual_text=manual_query))
    prompt = render_prompt(generator_config, messages, contexts)
    result = generate(generator_config, prompt)
    return TurnResult(response=result, contexts=contexts, prompt=prompt)
