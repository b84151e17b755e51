"""Records (agent, task) trajectories from the robot state stream and
replays them on request for path/silhouette feedback."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from . import bus as topics
from .model import canonical_json


@dataclass
class TrajectoryRecording:
    agent_id: str
    task_id: str
    revision: int = 1
    samples: list = field(default_factory=list)  # {timestamp_ms, joints, tcp}

    def to_json(self):
        return {
            "agent_id": self.agent_id,
            "task_id": self.task_id,
            "revision": self.revision,
            "samples": list(self.samples),
        }

    @staticmethod
    def from_json(doc):
        return TrajectoryRecording(
            agent_id=doc["agent_id"],
            task_id=doc["task_id"],
            revision=doc.get("revision", 1),
            samples=list(doc.get("samples", [])),
        )


class PreviewService:
    SERVICE_NAME = "preview"
    HEARTBEAT_PERIOD_S = 2.0

    def __init__(self, bus, ws_id, clock=None, recordings_dir=None):
        self.bus = bus
        self.ws_id = ws_id
        self.clock = clock or (lambda: 0.0)
        self.recordings_dir = recordings_dir
        self.recordings = {}       # (agent, task) -> TrajectoryRecording
        self._in_progress = {}     # (agent, task) -> TrajectoryRecording
        self._task_agents = {}     # task id -> agent id while active
        self._last_heartbeat = None
        self._subs = [
            bus.subscribe(f"arthur/{ws_id}/robot/+/state", self._on_robot_state),
            bus.subscribe(f"arthur/{ws_id}/task/+/status", self._on_task_status),
            bus.subscribe(topics.rpc_topic("preview", "+", "request"), self._on_rpc),
        ]

    def close(self):
        for sub in self._subs:
            sub.unsubscribe()

    # -- recording ---------------------------------------------------------------

    def _on_task_status(self, env):
        task_id = env.topic.split("/")[3]
        doc = env.payload or {}
        status = doc.get("status", "")
        agent_id = doc.get("agent_id", "")
        key = (agent_id, task_id)
        if status == "active":
            self._task_agents[task_id] = agent_id
            self._in_progress[key] = TrajectoryRecording(
                agent_id=agent_id,
                task_id=task_id,
                revision=self.recordings.get(key, TrajectoryRecording("", "", 0)).revision + 1,
            )
        elif status == "completed":
            agent_id = self._task_agents.pop(task_id, agent_id)
            rec = self._in_progress.pop((agent_id, task_id), None)
            if rec is None:
                return
            if not rec.samples:
                return  # discarded: completed with zero samples
            self.recordings[(agent_id, task_id)] = rec
            self._persist(rec)
            self._publish(rec)

    def _on_robot_state(self, env):
        agent_id = env.topic.split("/")[3]
        doc = env.payload
        if not isinstance(doc, dict):
            return
        task_id = doc.get("task_id", "")
        rec = self._in_progress.get((agent_id, task_id))
        if rec is None:
            return
        rec.samples.append(
            {
                "timestamp_ms": doc.get("timestamp_ms", 0),
                "joints": list(doc.get("joints", [])),
                "tcp": doc.get("tcp"),
            }
        )

    # -- fetch ----------------------------------------------------------------------

    def get_preview(self, agent_id, task_id):
        return self.recordings.get((agent_id, task_id))

    def _on_rpc(self, env):
        agent_id = env.topic.split("/")[2]
        doc = env.payload or {}
        rec = self.get_preview(agent_id, doc.get("task_id", ""))
        self.bus.publish(
            topics.rpc_topic("preview", agent_id, "response"),
            {
                "request_id": doc.get("request_id", 0),
                "recording": rec.to_json() if rec else None,
            },
            publisher=self.SERVICE_NAME,
        )

    def _publish(self, rec):
        # latest TCP polyline, retained, for path/waypoints feedback
        points = [
            s["tcp"]["position"] for s in rec.samples if s.get("tcp") is not None
        ]
        self.bus.publish(
            f"arthur/{self.ws_id}/preview/{rec.agent_id}",
            {
                "agent_id": rec.agent_id,
                "task_id": rec.task_id,
                "revision": rec.revision,
                "points": points,
                "timestamps": [s["timestamp_ms"] for s in rec.samples],
            },
            retained=True,
            publisher=self.SERVICE_NAME,
        )

    def _persist(self, rec):
        if not self.recordings_dir:
            return
        os.makedirs(self.recordings_dir, exist_ok=True)
        path = os.path.join(self.recordings_dir, f"{rec.agent_id}__{rec.task_id}.json")
        with open(path, "w") as fh:
            fh.write(canonical_json(rec.to_json()))

    def load_recordings(self, directory=None):
        directory = directory or self.recordings_dir
        if not directory or not os.path.isdir(directory):
            return
        for name in sorted(os.listdir(directory)):
            if not name.endswith(".json"):
                continue
            with open(os.path.join(directory, name)) as fh:
                rec = TrajectoryRecording.from_json(json.load(fh))
            self.recordings[(rec.agent_id, rec.task_id)] = rec

    def tick(self, now):
        if self._last_heartbeat is None or now - self._last_heartbeat >= self.HEARTBEAT_PERIOD_S:
            self._last_heartbeat = now
            self.bus.publish(
                topics.service_status_topic(self.ws_id, self.SERVICE_NAME),
                {"state": "ok", "timestamp": now},
                retained=True,
                publisher=self.SERVICE_NAME,
            )
