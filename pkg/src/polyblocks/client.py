"""Client for the service: in-process by default, remote when given a URL.

The in-process path mounts the ASGI app directly, so the command-line tool
works with no server running while exercising the exact same request and
response surface as a remote deployment.
"""

from __future__ import annotations

import asyncio

import httpx


class ServiceClient:
    def __init__(self, server: str | None = None, timeout: float = 600.0):
        self.server = server.rstrip("/") if server else None
        self.timeout = timeout
        self._transport = None
        if self.server is None:
            from .service.app import create_app

            self._transport = httpx.ASGITransport(app=create_app())

    def _request(self, method: str, path: str, payload: dict | None = None) -> tuple:
        if self.server is not None:
            with httpx.Client(base_url=self.server, timeout=self.timeout) as c:
                resp = c.request(method, path, json=payload)
                return resp.status_code, _json_of(resp)

        async def go():
            async with httpx.AsyncClient(
                transport=self._transport, base_url="http://polyblocks", timeout=self.timeout
            ) as c:
                resp = await c.request(method, path, json=payload)
                return resp.status_code, _json_of(resp)

        return asyncio.run(go())

    def get(self, path: str) -> tuple:
        return self._request("GET", path)

    def post(self, path: str, payload: dict) -> tuple:
        return self._request("POST", path, payload)


def _json_of(resp: httpx.Response) -> dict:
    try:
        return resp.json()
    except ValueError:
        return {"detail": resp.text}


def detail_of(body: dict) -> str:
    detail = body.get("detail", body)
    if isinstance(detail, list):  # request-validation errors arrive as a list
        parts = []
        for item in detail:
            loc = ".".join(str(p) for p in item.get("loc", []) if p != "body")
            parts.append(f"{loc}: {item.get('msg', item)}")
        return "; ".join(parts)
    return str(detail)
