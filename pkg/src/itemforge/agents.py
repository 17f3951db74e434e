"""Agent records: names, roles, salted credentials.

Agents are plain records (not items), persisted as agents.json in the
store directory. Every event's agent id must resolve here; agents are
therefore never deleted, only stripped of roles.
"""

from __future__ import annotations

import hashlib
import json
import os
import secrets
import uuid as _uuid
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ErrAccessDenied, ErrNotFound

SYSTEM_AGENT_ID = str(_uuid.uuid5(_uuid.NAMESPACE_URL, "itemforge:system"))

_PBKDF2_ITERATIONS = 60_000


def _hash_password(password: str, salt: bytes) -> str:
    return hashlib.pbkdf2_hmac("sha256", password.encode(), salt,
                               _PBKDF2_ITERATIONS).hex()


@dataclass
class Agent:
    agent_id: str
    name: str
    roles: list[str] = field(default_factory=list)
    salt: str = ""
    credential: str = ""  # pbkdf2 hex; empty = login disabled

    def holds(self, role: str) -> bool:
        return role in self.roles


class AgentRegistry:
    def __init__(self, path: Path):
        self.path = Path(path)
        self._agents: dict[str, Agent] = {}
        if self.path.is_file():
            for record in json.loads(self.path.read_text()):
                agent = Agent(**record)
                self._agents[agent.agent_id] = agent
        if SYSTEM_AGENT_ID not in self._agents:
            self._agents[SYSTEM_AGENT_ID] = Agent(
                agent_id=SYSTEM_AGENT_ID, name="system",
                roles=["admin", "designer"])
            self._save()

    def _save(self):
        records = [vars(a) for a in sorted(self._agents.values(), key=lambda a: a.name)]
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(records, indent=2))
        os.replace(tmp, self.path)

    def add(self, name: str, password: str, roles: list[str]) -> Agent:
        if any(a.name == name for a in self._agents.values()):
            raise ErrAccessDenied(f"agent name '{name}' already exists")
        salt = secrets.token_bytes(16)
        agent = Agent(agent_id=str(_uuid.uuid4()), name=name, roles=list(roles),
                      salt=salt.hex(), credential=_hash_password(password, salt))
        self._agents[agent.agent_id] = agent
        self._save()
        return agent

    def set_roles(self, name: str, roles: list[str]) -> Agent:
        agent = self.get_by_name(name)
        agent.roles = list(roles)
        self._save()
        return agent

    def get(self, agent_id: str) -> Agent | None:
        return self._agents.get(agent_id)

    def require(self, agent_id: str) -> Agent:
        agent = self._agents.get(agent_id)
        if agent is None:
            raise ErrAccessDenied(f"unknown agent {agent_id}")
        return agent

    def get_by_name(self, name: str) -> Agent:
        for agent in self._agents.values():
            if agent.name == name:
                return agent
        raise ErrNotFound(f"no agent named '{name}'")

    def verify(self, name: str, password: str) -> Agent:
        """Check credentials; unknown-user and bad-password are indistinguishable."""
        agent = next((a for a in self._agents.values() if a.name == name), None)
        if agent is None or not agent.credential:
            # burn the same work as a real check
            _hash_password(password, b"itemforge-pepper")
            raise ErrAccessDenied("invalid credentials")
        expected = _hash_password(password, bytes.fromhex(agent.salt))
        if not secrets.compare_digest(expected, agent.credential):
            raise ErrAccessDenied("invalid credentials")
        return agent

    def all(self) -> list[Agent]:
        return sorted(self._agents.values(), key=lambda a: a.name)
