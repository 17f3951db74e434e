"""User-code agents: external executors that receive jobs and reply via execute.

A subscription runs a daemon thread that long-polls the jobs board for one
role and hands each batch to the handler. The handler performs its work
and replies by calling execute (directly or over HTTP); when two handlers
race for one job, the single writer per item guarantees exactly one wins
and the loser sees ErrInvalidTransition.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from .errors import ErrAccessDenied
from .kernel import Kernel


@dataclass
class Subscription:
    agent_id: str
    role: str
    _stop: threading.Event = field(default_factory=threading.Event)
    _thread: threading.Thread | None = None

    def cancel(self, timeout: float = 5.0):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout)

    @property
    def active(self) -> bool:
        return self._thread is not None and self._thread.is_alive()


def register_usercode_agent(kernel: Kernel, agent_id: str, role: str,
                            handler, poll_interval: float = 0.5) -> Subscription:
    """Subscribe a handler to all jobs of one role.

    handler(job: Job) is invoked once per offered job per poll round; it is
    expected to reply by calling execute itself. Requires the agent to hold
    the role.
    """
    agent = kernel.agents.require(agent_id)
    if not agent.holds(role):
        raise ErrAccessDenied(f"agent '{agent.name}' does not hold role '{role}'")
    sub = Subscription(agent_id=agent_id, role=role)

    def loop():
        while not sub._stop.is_set():
            jobs = kernel.jobs.wait_for_role(role, timeout=poll_interval)
            for job in jobs:
                if sub._stop.is_set():
                    return
                try:
                    handler(job)
                except Exception:
                    # a failed handler must not kill the subscription
                    continue

    sub._thread = threading.Thread(target=loop, daemon=True,
                                   name=f"usercode-{role}")
    sub._thread.start()
    return sub
