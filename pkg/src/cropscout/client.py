"""Client for the HTTP service.

The default client runs the service in-process over an ASGI transport, so
batch tools work with no server running and stay fully deterministic; the
same client can point at a remote instance instead. Service errors are
surfaced as :class:`ServiceError` with the category the service assigned
(``config``, ``data``, or ``backend``).
"""

from __future__ import annotations

import asyncio
from typing import Any

import httpx

__all__ = ["ServiceError", "ServiceClient"]

ERROR_CATEGORIES = ("config", "data", "backend")


class ServiceError(Exception):
    """A categorized failure reported by the service."""

    def __init__(self, category: str, message: str) -> None:
        super().__init__(message)
        self.category = category if category in ERROR_CATEGORIES else "config"


def _raise_for_response(response: httpx.Response) -> None:
    if response.status_code < 400:
        return
    try:
        detail = response.json().get("detail")
    except ValueError:
        detail = response.text
    if isinstance(detail, dict) and "category" in detail:
        raise ServiceError(str(detail["category"]), str(detail.get("message", "")))
    # Request-model validation failures arrive as a pydantic error list.
    raise ServiceError("config", f"invalid request: {detail}")


class ServiceClient:
    """Sync facade over the service, in-process or remote."""

    def __init__(self, base_url: str | None = None) -> None:
        self._base_url = base_url

    @classmethod
    def in_process(cls) -> "ServiceClient":
        return cls(base_url=None)

    @classmethod
    def remote(cls, base_url: str) -> "ServiceClient":
        return cls(base_url=base_url)

    async def _request_asgi(self, method: str, path: str, payload: Any) -> httpx.Response:
        from .service import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://cropscout.local", timeout=None
        ) as client:
            return await client.request(method, path, json=payload)

    def request(self, method: str, path: str, payload: Any = None) -> dict[str, Any]:
        if self._base_url is None:
            response = asyncio.run(self._request_asgi(method, path, payload))
        else:
            try:
                with httpx.Client(base_url=self._base_url, timeout=None) as client:
                    response = client.request(method, path, json=payload)
            except httpx.HTTPError as exc:
                raise ServiceError("config", f"cannot reach service: {exc}") from exc
        _raise_for_response(response)
        return response.json()

    def get(self, path: str) -> dict[str, Any]:
        return self.request("GET", path)

    def post(self, path: str, payload: dict[str, Any]) -> dict[str, Any]:
        return self.request("POST", path, payload)
