"""Assembly bookkeeping: task readiness, dispatch, completion, reassignment.

Statuses move pending -> ready -> active -> completed only; a task becomes
ready exactly when all predecessors are completed.  Dispatch is the
lowest-BoP-order ready task per agent, which keeps runs reproducible.
"""

from __future__ import annotations

import json

from . import bus as topics
from .model import Task, canonical_json


class PrecedenceError(RuntimeError):
    pass


class CycleError(ValueError):
    def __init__(self, cycle):
        super().__init__(f"task precedence cycle: {' -> '.join(cycle)}")
        self.cycle = list(cycle)


class UnknownAgentError(KeyError):
    pass


class UnknownTaskError(KeyError):
    pass


class ImmutableTaskError(RuntimeError):
    pass


def detect_cycle(tasks):
    """Return one precedence cycle as a list of ids, or None."""
    state = {}
    trace = []

    def visit(tid):
        mark = state.get(tid)
        if mark == 1:
            return None
        if mark == 0:
            start = trace.index(tid)
            return trace[start:] + [tid]
        state[tid] = 0
        trace.append(tid)
        for pred in tasks[tid].predecessors:
            if pred in tasks:
                cycle = visit(pred)
                if cycle is not None:
                    return cycle
        trace.pop()
        state[tid] = 1
        return None

    for tid in sorted(tasks):
        cycle = visit(tid)
        if cycle is not None:
            return cycle
    return None


class AssemblyService:
    SERVICE_NAME = "assembly"
    HEARTBEAT_PERIOD_S = 2.0

    def __init__(self, bus, ws_id, clock=None, store_path=None, auto_activate_operator=True):
        self.bus = bus
        self.ws_id = ws_id
        self.clock = clock or (lambda: 0.0)
        self.store_path = store_path
        self.auto_activate_operator = auto_activate_operator
        self.tasks = {}
        self.agents = {}
        self._last_heartbeat = None
        self._subs = [
            bus.subscribe(topics.action_events_topic(ws_id), self._on_action_event),
            bus.subscribe(topics.rpc_topic("assembly", "+", "request"), self._on_rpc),
        ]

    def close(self):
        for sub in self._subs:
            sub.unsubscribe()

    # -- sequence loading ---------------------------------------------------------

    def load_sequence(self, workstation):
        tasks = {tid: Task.from_json(t.to_json()) for tid, t in workstation.tasks.items()}
        cycle = detect_cycle(tasks)
        if cycle is not None:
            raise CycleError(cycle)
        for task in tasks.values():
            for ref in task.part_ids:
                if ref not in workstation.parts:
                    raise UnknownTaskError(f"task {task.id!r}: dangling part {ref!r}")
            for ref in task.tool_ids:
                if ref not in workstation.tools:
                    raise UnknownTaskError(f"task {task.id!r}: dangling tool {ref!r}")
            for pred in task.predecessors:
                if pred not in tasks:
                    raise UnknownTaskError(f"task {task.id!r}: dangling predecessor {pred!r}")
        self.tasks = tasks
        self.agents = dict(workstation.agents)
        for task in self.tasks.values():
            if task.status not in ("completed", "active"):
                task.status = "pending"
        self._refresh_readiness()
        self._publish_all()
        return self.tasks

    def _refresh_readiness(self):
        changed = True
        while changed:
            changed = False
            for task in self.tasks.values():
                if task.status == "pending" and all(
                    self.tasks[p].status == "completed" for p in task.predecessors
                ):
                    task.status = "ready"
                    changed = True
        if self.auto_activate_operator:
            # operator tasks activate on readiness so task feedback tracks them
            for task in sorted(self.tasks.values(), key=lambda t: (t.order, t.id)):
                agent = self.agents.get(task.agent_id)
                if (
                    task.status == "ready"
                    and agent is not None
                    and agent.role == "operator"
                    and not any(
                        t.status == "active" and t.agent_id == task.agent_id
                        for t in self.tasks.values()
                    )
                ):
                    task.status = "active"

    # -- operations ------------------------------------------------------------------

    def next_task(self, agent_id):
        if agent_id not in self.agents:
            raise UnknownAgentError(agent_id)
        active = [
            t for t in self.tasks.values()
            if t.status == "active" and t.agent_id == agent_id
        ]
        if active:
            return min(active, key=lambda t: (t.order, t.id))
        ready = [
            t for t in self.tasks.values()
            if t.status == "ready" and t.agent_id == agent_id
        ]
        if not ready:
            return None
        task = min(ready, key=lambda t: (t.order, t.id))
        task.status = "active"
        self._publish_task(task)
        return task

    def complete_task(self, task_id, by=""):
        task = self.tasks.get(task_id)
        if task is None:
            raise UnknownTaskError(task_id)
        if task.status not in ("active", "ready"):
            raise PrecedenceError(
                f"cannot complete task {task_id!r} in status {task.status!r}"
            )
        task.status = "completed"
        self._publish_task(task)
        self._refresh_readiness()
        self._publish_all()
        return {t.id: t.status for t in self.tasks.values()}

    def reassign_task(self, task_id, agent_id):
        task = self.tasks.get(task_id)
        if task is None:
            raise UnknownTaskError(task_id)
        if task.status == "completed":
            raise ImmutableTaskError(f"task {task_id!r} is completed")
        if agent_id not in self.agents:
            raise UnknownAgentError(agent_id)
        revoked_from = ""
        if task.status == "active":
            revoked_from = task.agent_id
            task.status = "ready"
        task.agent_id = agent_id
        if revoked_from and revoked_from != agent_id:
            self.bus.publish(
                topics.rpc_topic("assembly", revoked_from, "revoke"),
                {"task_id": task_id, "reassigned_to": agent_id},
                publisher=self.SERVICE_NAME,
            )
        self._refresh_readiness()
        self._publish_all()
        return task

    def progress(self):
        total = len(self.tasks)
        done = sum(1 for t in self.tasks.values() if t.status == "completed")
        return done / total if total else 1.0

    def active_task(self, agent_id):
        active = [
            t for t in self.tasks.values()
            if t.status == "active" and t.agent_id == agent_id
        ]
        return min(active, key=lambda t: (t.order, t.id)) if active else None

    # -- persistence -------------------------------------------------------------------

    def save(self, path=None):
        path = path or self.store_path
        doc = {"tasks": [self.tasks[t].to_json() for t in sorted(self.tasks)]}
        with open(path, "w") as fh:
            fh.write(canonical_json(doc))
        return path

    def load(self, path=None):
        path = path or self.store_path
        with open(path) as fh:
            doc = json.load(fh)
        self.tasks = {t["id"]: Task.from_json(t) for t in doc["tasks"]}
        self._publish_all()
        return self.tasks

    # -- bus integration ------------------------------------------------------------------

    def _on_action_event(self, env):
        doc = env.payload
        if not isinstance(doc, dict):
            return
        kind = doc.get("kind", "")
        props = doc.get("properties", {})
        try:
            if kind == "complete-task":
                task_id = props.get("task", "")
                if not task_id and props.get("agent"):
                    task = self.active_task(props["agent"])
                    task_id = task.id if task else ""
                if task_id:
                    self.complete_task(task_id, by=props.get("agent", ""))
            elif kind == "reassign-task":
                self.reassign_task(props["task"], props["agent"])
        except (PrecedenceError, UnknownTaskError, UnknownAgentError, ImmutableTaskError):
            pass  # invalid user action; state unchanged

    def _on_rpc(self, env):
        agent_id = env.topic.split("/")[2]
        doc = env.payload or {}
        op = doc.get("op", "")
        response = {"request_id": doc.get("request_id", 0), "op": op}
        if op == "next_task":
            try:
                task = self.next_task(agent_id)
            except UnknownAgentError:
                task = None
                response["error"] = f"unknown agent {agent_id!r}"
            response["task"] = task.to_json() if task else None
        elif op == "progress":
            task_id = doc.get("task_id", "")
            if doc.get("done"):
                try:
                    self.complete_task(task_id, by=agent_id)
                    response["ok"] = True
                except (PrecedenceError, UnknownTaskError) as exc:
                    response["error"] = str(exc)
            else:
                fraction = float(doc.get("fraction", 0.0))
                self.bus.publish(
                    f"arthur/{self.ws_id}/task/{task_id}/progress",
                    {"task_id": task_id, "agent_id": agent_id, "fraction": fraction},
                    publisher=self.SERVICE_NAME,
                )
                response["ok"] = True
        else:
            response["error"] = f"unknown op {op!r}"
        self.bus.publish(
            topics.rpc_topic("assembly", agent_id, "response"),
            response,
            publisher=self.SERVICE_NAME,
        )

    def _publish_task(self, task):
        self.bus.publish(
            topics.task_status_topic(self.ws_id, task.id),
            {"task_id": task.id, "status": task.status, "agent_id": task.agent_id},
            retained=True,
            publisher=self.SERVICE_NAME,
        )

    def _publish_all(self):
        for tid in sorted(self.tasks):
            self._publish_task(self.tasks[tid])
        self.bus.publish(
            f"arthur/{self.ws_id}/progress",
            {"fraction": self.progress()},
            retained=True,
            publisher=self.SERVICE_NAME,
        )

    def tick(self, now):
        if self._last_heartbeat is None or now - self._last_heartbeat >= self.HEARTBEAT_PERIOD_S:
            self._last_heartbeat = now
            self.bus.publish(
                topics.service_status_topic(self.ws_id, self.SERVICE_NAME),
                {"state": "ok", "timestamp": now},
                retained=True,
                publisher=self.SERVICE_NAME,
            )
