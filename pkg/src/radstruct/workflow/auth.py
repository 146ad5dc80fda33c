"""Static bearer-token authentication: token -> {id, role}."""

from __future__ import annotations

import json
from pathlib import Path

from radstruct.errors import Forbidden, Unauthorized
from radstruct.model.types import ActorRole
from radstruct.workflow.session import Actor


class TokenAuth:
    def __init__(self, tokens: dict[str, Actor]):
        self._tokens = tokens

    @classmethod
    def from_file(cls, path: Path | str) -> "TokenAuth":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            {
                token: Actor(entry["id"], ActorRole(entry["role"]))
                for token, entry in doc["tokens"].items()
            }
        )

    @classmethod
    def single_user(cls) -> "TokenAuth":
        """Development fallback: one radiologist token."""
        return cls({"dev-radiologist": Actor("dev", ActorRole.RADIOLOGIST)})

    def authenticate(self, token: str | None) -> Actor:
        if not token or token not in self._tokens:
            raise Unauthorized("unknown or missing bearer token")
        return self._tokens[token]


def require_role(actor: Actor, *roles: ActorRole) -> None:
    if actor.role not in roles:
        allowed = ", ".join(r.value for r in roles)
        raise Forbidden(f"actor role {actor.role.value!r} not permitted; requires {allowed}")
