"""Accumulates bus traffic into WorldState snapshots.

Used by the condition engine and the scene client so both observe the
world through the same projection.
"""

from __future__ import annotations

from .geometry import Pose
from .model import InputEvent, RobotView, WorldState

# events older than this are dropped; must exceed any condition window
EVENT_RETENTION_S = 5.0


class WorldStore:
    def __init__(self, bus, ws_id, clock):
        self.ws_id = ws_id
        self.clock = clock
        self.robots = {}
        self.user_poses = {}
        self.task_status = {}
        self.task_assignee = {}
        self.events = []
        self.zones = {}
        self._subs = [
            bus.subscribe(f"arthur/{ws_id}/robot/+/state", self._on_robot_state),
            bus.subscribe(f"arthur/{ws_id}/user/pose", self._on_user_pose),
            bus.subscribe(f"arthur/{ws_id}/task/+/status", self._on_task_status),
            bus.subscribe(f"arthur/{ws_id}/events/input", self._on_input),
            bus.subscribe(f"arthur/{ws_id}/zone/+", self._on_zone),
        ]

    def close(self):
        for sub in self._subs:
            sub.unsubscribe()

    # -- topic handlers ------------------------------------------------------

    def _on_robot_state(self, env):
        agent = env.topic.split("/")[3]
        doc = env.payload
        if not isinstance(doc, dict):
            return
        self.robots[agent] = RobotView(
            joints=tuple(doc.get("joints", (0.0,) * 6)),
            tcp=Pose.from_json(doc["tcp"]) if "tcp" in doc else Pose(),
            run_state=doc.get("run_state", "stopped"),
            moving=bool(doc.get("moving", False)),
            sensors=dict(doc.get("sensors", {})),
            assistance=bool(doc.get("assistance", False)),
        )

    def _on_user_pose(self, env):
        doc = env.payload or {}
        for key, pose_doc in doc.items():
            self.user_poses[key] = Pose.from_json(pose_doc)

    def _on_task_status(self, env):
        task_id = env.topic.split("/")[3]
        doc = env.payload
        if not isinstance(doc, dict):
            return
        self.task_status[task_id] = doc.get("status", "pending")
        self.task_assignee[task_id] = doc.get("agent_id", "")

    def _on_input(self, env):
        doc = env.payload
        if not isinstance(doc, dict):
            return
        self.events.append(InputEvent.from_json(doc))

    def _on_zone(self, env):
        zone_id = env.topic.split("/")[3]
        doc = env.payload or {}
        points = doc.get("points", [])
        self.zones[zone_id] = [tuple(p) for p in points]

    # -- snapshot -------------------------------------------------------------

    def snapshot(self) -> WorldState:
        now = self.clock()
        self.events = [e for e in self.events if now - e.timestamp <= EVENT_RETENTION_S]
        return WorldState(
            timestamp=now,
            robots=dict(self.robots),
            user_poses=dict(self.user_poses),
            task_status=dict(self.task_status),
            task_assignee=dict(self.task_assignee),
            events=list(self.events),
            zones={k: list(v) for k, v in self.zones.items()},
        )
