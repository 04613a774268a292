"""Configuration loading: TOML file plus environment overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .adapters import ROLES, ProviderConfig
from .loop import LoopConfig

ENV_CONFIG = "MUSE_CONFIG"


@dataclass
class MockConfig:
    seed: int = 0
    n_segments: int = 3
    stubborn: tuple[int, ...] = ()
    silent: bool = False


@dataclass
class MuseConfig:
    loop: LoopConfig = field(default_factory=LoopConfig)
    providers: dict[str, ProviderConfig] = field(default_factory=dict)
    mock: MockConfig = field(default_factory=MockConfig)


def _parse_loop(raw: Mapping) -> LoopConfig:
    config = LoopConfig()
    thresholds = dict(config.acceptance_thresholds)
    thresholds.update({str(k): float(v)
                       for k, v in raw.get("acceptance_thresholds", {}).items()})
    return LoopConfig(
        iteration_budget=int(raw.get("iteration_budget", config.iteration_budget)),
        planner_temperature=float(raw.get("planner_temperature",
                                          config.planner_temperature)),
        critic_temperature=float(raw.get("critic_temperature",
                                         config.critic_temperature)),
        acceptance_thresholds=thresholds,
        validation=bool(raw.get("validation", config.validation)),
    )


def _parse_providers(raw: Mapping) -> dict[str, ProviderConfig]:
    providers = {}
    for role, entry in raw.items():
        if role not in ROLES:
            raise ValueError(f"unknown provider role {role!r}; known: {ROLES}")
        providers[role] = ProviderConfig(
            endpoint=entry.get("endpoint"),
            timeout=float(entry.get("timeout", 30.0)),
            retries=int(entry.get("retries", 2)),
            params=dict(entry.get("params", {})),
        )
    return providers


def load_config(path: str | Path | None = None,
                env: Mapping[str, str] = os.environ) -> MuseConfig:
    """Load config from `path` (or $MUSE_CONFIG), then apply env overrides.

    MUSE_PROVIDER_<ROLE>_ENDPOINT overrides or creates that role's endpoint,
    so a deployment can point at live backends without editing the file.
    """
    path = path or env.get(ENV_CONFIG)
    data: dict = {}
    if path:
        data = tomllib.loads(Path(path).read_text(encoding="utf-8"))

    providers = _parse_providers(data.get("providers", {}))
    for role in ROLES:
        key = f"MUSE_PROVIDER_{role.upper()}_ENDPOINT"
        if key in env:
            entry = providers.setdefault(role, ProviderConfig())
            entry.endpoint = env[key]

    mock_raw = data.get("mock", {})
    mock = MockConfig(
        seed=int(mock_raw.get("seed", 0)),
        n_segments=int(mock_raw.get("n_segments", 3)),
        stubborn=tuple(int(x) for x in mock_raw.get("stubborn", [])),
        silent=bool(mock_raw.get("silent", False)),
    )
    return MuseConfig(loop=_parse_loop(data.get("loop", {})),
                      providers=providers, mock=mock)
