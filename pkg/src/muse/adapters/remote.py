"""HTTP provider adapters.

Each provider POSTs one JSON document to its configured endpoint and maps
the response onto the in-process provider protocol. Transport errors are
raised as-is; the retry and classification policy lives in the operations
layer, not here.
"""

from __future__ import annotations

import base64

import numpy as np
import requests

from ..errors import InvalidBackendResponse
from ..model import to_jsonable
from . import ProviderConfig, ProviderRegistry, ROLES


class RemoteProvider:
    def __init__(self, role: str, config: ProviderConfig):
        if not config.endpoint:
            raise ValueError(f"remote provider for {role!r} needs an endpoint")
        self.role = role
        self.config = config
        self.name = f"remote-{role}"

    def _post(self, body: dict) -> dict:
        response = requests.post(self.config.endpoint, json=body,
                                 timeout=self.config.timeout)
        response.raise_for_status()
        return response.json()

    def generate(self, request) -> bytes:
        body = {"role": self.role, "request": to_jsonable(request),
                "params": self.config.params}
        data = self._post(body)
        try:
            return base64.b64decode(data["data"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidBackendResponse(
                f"{self.name}: response lacks decodable 'data' field") from exc

    def embed(self, data: bytes) -> np.ndarray:
        body = {"role": self.role,
                "data": base64.b64encode(data).decode("ascii"),
                "params": self.config.params}
        payload = self._post(body)
        try:
            return np.asarray(payload["vector"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidBackendResponse(
                f"{self.name}: response lacks a numeric 'vector' field") from exc

    def judge(self, rubric_id: str, payload: dict, strict: bool = False):
        body = {"role": self.role, "rubric": rubric_id, "payload": payload,
                "strict": strict, "params": self.config.params}
        data = self._post(body)
        return data.get("response", data)


def build_remote_registry(configs: dict[str, ProviderConfig]) -> ProviderRegistry:
    """Bind a RemoteProvider for every role that has an endpoint configured."""
    registry = ProviderRegistry()
    for role in ROLES:
        config = configs.get(role)
        if config is not None and config.endpoint:
            registry.bind(role, RemoteProvider(role, config), config)
    return registry
