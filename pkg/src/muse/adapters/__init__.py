"""Pluggable generation backends behind five fixed roles.

Roles: image_gen, video_gen, voice_synth, embedder, judge. A provider is any
object exposing the method its role needs (generate / embed / judge); the
registry binds one provider per role plus its transport config. Engine code
never talks to a provider directly, only through generate(), embed(), and
judge_structured() below.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any

import jsonschema
import numpy as np

from ..errors import BackendUnavailable, InvalidBackendResponse, JudgeOutputUnparseable
from ..model import GenerationParams, Modality, ShotArtifact, to_jsonable
from ..store import RunStore, stable_hash
from .schemas import SCHEMAS

log = logging.getLogger(__name__)

ROLES = ("image_gen", "video_gen", "voice_synth", "embedder", "judge")

_ROLE_MEDIA = {
    "image_gen": (Modality.IMAGE, "png"),
    "video_gen": (Modality.VIDEO, "gif"),
    "voice_synth": (Modality.AUDIO, "wav"),
}


@dataclass
class ProviderConfig:
    endpoint: str | None = None
    timeout: float = 30.0
    retries: int = 2
    params: dict[str, Any] = field(default_factory=dict)


@dataclass
class GenerationRequest:
    role: str
    prompt_parts: list[str] = field(default_factory=list)
    negative_parts: list[str] = field(default_factory=list)
    params: GenerationParams = field(default_factory=GenerationParams)
    conditioning: dict[str, Any] = field(default_factory=dict)
    segment_index: int = 0
    purpose: str = ""

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role: {self.role!r}")


def request_hash(request: GenerationRequest) -> str:
    return stable_hash(to_jsonable(request))


class ProviderRegistry:
    def __init__(self):
        self._providers: dict[str, Any] = {}
        self._configs: dict[str, ProviderConfig] = {}

    def bind(self, role: str, provider: Any, config: ProviderConfig | None = None) -> None:
        if role not in ROLES:
            raise ValueError(f"unknown role: {role!r}")
        self._providers[role] = provider
        self._configs[role] = config or ProviderConfig()

    def bound(self, role: str) -> bool:
        return role in self._providers

    def missing(self) -> list[str]:
        return [role for role in ROLES if role not in self._providers]

    def require(self, role: str) -> Any:
        if role not in self._providers:
            raise BackendUnavailable(f"no provider bound for role {role!r}")
        return self._providers[role]

    def config(self, role: str) -> ProviderConfig:
        return self._configs.get(role, ProviderConfig())


def _provider_name(provider: Any) -> str:
    return getattr(provider, "name", type(provider).__name__)


def generate(request: GenerationRequest, registry: ProviderRegistry,
             store: RunStore) -> ShotArtifact:
    """Run a media request with bounded retries; content-address the result."""
    if request.role not in _ROLE_MEDIA:
        raise ValueError(f"generate() only serves media roles, not {request.role!r}")
    provider = registry.require(request.role)
    cfg = registry.config(request.role)
    attempts = cfg.retries + 1
    last_exc: Exception | None = None
    data = None
    for _ in range(attempts):
        try:
            data = provider.generate(request)
            break
        except Exception as exc:  # transient transport/provider failure
            last_exc = exc
    else:
        raise BackendUnavailable(
            f"{request.role} failed after {attempts} attempts: {last_exc}"
        ) from last_exc
    if not isinstance(data, (bytes, bytearray)) or len(data) == 0:
        raise InvalidBackendResponse(
            f"{request.role} returned {type(data).__name__} instead of media bytes")
    modality, ext = _ROLE_MEDIA[request.role]
    ref = store.put(bytes(data), ext)
    return ShotArtifact(
        segment_index=request.segment_index,
        modality=modality,
        ref=ref,
        metadata={
            "backend": _provider_name(provider),
            "purpose": request.purpose,
            "seed": request.params.seed,
            "guidance_scale": request.params.guidance_scale,
            "steps": request.params.steps,
            "request_hash": request_hash(request)[:16],
        },
    )


def _coerce_json(raw: Any) -> dict | None:
    if isinstance(raw, dict):
        return raw
    if not isinstance(raw, str):
        return None
    try:
        parsed = json.loads(raw)
        return parsed if isinstance(parsed, dict) else None
    except json.JSONDecodeError:
        pass
    # salvage the first balanced {...} block out of surrounding prose
    start = raw.find("{")
    while start != -1:
        depth = 0
        for end in range(start, len(raw)):
            if raw[end] == "{":
                depth += 1
            elif raw[end] == "}":
                depth -= 1
                if depth == 0:
                    try:
                        parsed = json.loads(raw[start:end + 1])
                        return parsed if isinstance(parsed, dict) else None
                    except json.JSONDecodeError:
                        break
        start = raw.find("{", start + 1)
    return None


def judge_structured(rubric_id: str, payload: dict, registry: ProviderRegistry,
                     schema: dict | None = None) -> dict:
    """Structured judge call: schema-validated, one strict reprompt on failure."""
    if schema is None:
        schema = SCHEMAS.get(rubric_id)
    if schema is None:
        raise ValueError(f"no schema registered for rubric {rubric_id!r}")
    provider = registry.require("judge")
    cfg = registry.config("judge")

    def call(strict: bool) -> Any:
        attempts = cfg.retries + 1
        last_exc: Exception | None = None
        for _ in range(attempts):
            try:
                return provider.judge(rubric_id, payload, strict=strict)
            except Exception as exc:
                last_exc = exc
        raise BackendUnavailable(
            f"judge failed after {attempts} attempts: {last_exc}") from last_exc

    failure = ""
    for strict in (False, True):
        parsed = _coerce_json(call(strict))
        if parsed is None:
            failure = "response is not a JSON object"
            continue
        try:
            jsonschema.validate(parsed, schema)
            return parsed
        except jsonschema.ValidationError as exc:
            failure = exc.message
    raise JudgeOutputUnparseable(f"rubric {rubric_id!r}: {failure}")


def embed(data: bytes, registry: ProviderRegistry) -> np.ndarray:
    """Embed media bytes; the result is always unit-norm float64."""
    provider = registry.require("embedder")
    cfg = registry.config("embedder")
    attempts = cfg.retries + 1
    last_exc: Exception | None = None
    for _ in range(attempts):
        try:
            raw = provider.embed(data)
            break
        except Exception as exc:
            last_exc = exc
    else:
        raise BackendUnavailable(
            f"embedder failed after {attempts} attempts: {last_exc}") from last_exc
    vec = np.asarray(raw, dtype=np.float64).reshape(-1)
    norm = float(np.linalg.norm(vec))
    if vec.size == 0 or not np.isfinite(norm) or norm == 0.0:
        raise InvalidBackendResponse("embedder returned a degenerate vector")
    return vec / norm
