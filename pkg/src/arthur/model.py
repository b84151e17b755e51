"""Domain entities shared by every service.

Everything here is a plain value object with a canonical JSON form.  The
canonical serialization of any entity is `to_json()` rendered through
`canonical_json()` (sorted keys, compact separators), which is what the
persistence layer and all golden tests rely on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .geometry import Pose, compose

USER_ANCHOR_IDS = ("user-head", "user-hand-left", "user-hand-right")

RUN_STATES = ("playing", "paused", "stopped")
TASK_STATUSES = ("pending", "ready", "active", "completed")


class UnresolvedAnchorError(KeyError):
    """Anchor chain references a missing parent or root pose."""


class AnchorCycleError(ValueError):
    """Anchor parent chain loops back on itself."""


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


@dataclass
class Tracker:
    id: str
    label: str = ""
    world_pose: Pose = field(default_factory=Pose)
    root_anchor_id: str = ""

    def to_json(self):
        return {
            "id": self.id,
            "label": self.label,
            "world_pose": self.world_pose.to_json(),
            "root_anchor_id": self.root_anchor_id,
        }

    @staticmethod
    def from_json(doc):
        return Tracker(
            id=doc["id"],
            label=doc.get("label", ""),
            world_pose=Pose.from_json(doc["world_pose"]),
            root_anchor_id=doc["root_anchor_id"],
        )


@dataclass
class Anchor:
    id: str
    label: str = ""
    # parent_type: "tracker" (the tracker's world frame), "anchor", or "user"
    parent_type: str = "user"
    parent_id: str = ""
    local_pose: Pose = field(default_factory=Pose)

    def to_json(self):
        return {
            "id": self.id,
            "label": self.label,
            "parent_type": self.parent_type,
            "parent_id": self.parent_id,
            "local_pose": self.local_pose.to_json(),
        }

    @staticmethod
    def from_json(doc):
        return Anchor(
            id=doc["id"],
            label=doc.get("label", ""),
            parent_type=doc["parent_type"],
            parent_id=doc["parent_id"],
            local_pose=Pose.from_json(doc["local_pose"]),
        )


@dataclass
class Agent:
    id: str
    role: str  # "operator" | "robot"
    name: str = ""
    skill_level: int = 0           # operators
    robot_type: str = ""           # robots
    tool: str = ""
    tracker_id: str = ""
    mount_pose: Pose = field(default_factory=Pose)

    def to_json(self):
        doc = {"id": self.id, "role": self.role, "name": self.name}
        if self.role == "operator":
            doc["skill_level"] = self.skill_level
        else:
            doc["robot_type"] = self.robot_type
            doc["tool"] = self.tool
            doc["tracker_id"] = self.tracker_id
            doc["mount_pose"] = self.mount_pose.to_json()
        return doc

    @staticmethod
    def from_json(doc):
        agent = Agent(id=doc["id"], role=doc["role"], name=doc.get("name", ""))
        if agent.role == "operator":
            agent.skill_level = doc.get("skill_level", 0)
        else:
            agent.robot_type = doc.get("robot_type", "")
            agent.tool = doc.get("tool", "")
            agent.tracker_id = doc.get("tracker_id", "")
            agent.mount_pose = Pose.from_json(doc["mount_pose"]) if "mount_pose" in doc else Pose()
        return agent


@dataclass
class Tool:
    id: str
    name: str = ""
    anchor_id: str = ""

    def to_json(self):
        return {"id": self.id, "name": self.name, "anchor_id": self.anchor_id}

    @staticmethod
    def from_json(doc):
        return Tool(id=doc["id"], name=doc.get("name", ""), anchor_id=doc.get("anchor_id", ""))


@dataclass
class Part:
    id: str
    name: str = ""
    anchor_id: str = ""

    def to_json(self):
        return {"id": self.id, "name": self.name, "anchor_id": self.anchor_id}

    @staticmethod
    def from_json(doc):
        return Part(id=doc["id"], name=doc.get("name", ""), anchor_id=doc.get("anchor_id", ""))


@dataclass
class Task:
    id: str
    name: str = ""
    description: str = ""
    predecessors: list = field(default_factory=list)
    agent_id: str = ""
    status: str = "pending"
    step_anchor_id: str = ""
    step_pose: Pose = field(default_factory=Pose)
    part_ids: list = field(default_factory=list)
    tool_ids: list = field(default_factory=list)
    image_ref: str = ""
    order: int = 0

    def to_json(self):
        return {
            "id": self.id,
            "name": self.name,
            "description": self.description,
            "predecessors": list(self.predecessors),
            "agent_id": self.agent_id,
            "status": self.status,
            "step_anchor_id": self.step_anchor_id,
            "step_pose": self.step_pose.to_json(),
            "part_ids": list(self.part_ids),
            "tool_ids": list(self.tool_ids),
            "image_ref": self.image_ref,
            "order": self.order,
        }

    @staticmethod
    def from_json(doc):
        return Task(
            id=doc["id"],
            name=doc.get("name", ""),
            description=doc.get("description", ""),
            predecessors=list(doc.get("predecessors", [])),
            agent_id=doc.get("agent_id", ""),
            status=doc.get("status", "pending"),
            step_anchor_id=doc.get("step_anchor_id", ""),
            step_pose=Pose.from_json(doc["step_pose"]) if "step_pose" in doc else Pose(),
            part_ids=list(doc.get("part_ids", [])),
            tool_ids=list(doc.get("tool_ids", [])),
            image_ref=doc.get("image_ref", ""),
            order=doc.get("order", 0),
        )


@dataclass
class ComponentDescriptor:
    id: str
    kind: str
    category: str  # feedback | action | condition
    properties: dict = field(default_factory=dict)
    implicit: bool = False
    created_by: str = ""   # feedback id that auto-created this condition
    enabled: bool = True   # flipped by the toggle-feedback action
    invalid: bool = False  # flagged when a reference dangles after a delete

    def to_json(self):
        return {
            "id": self.id,
            "kind": self.kind,
            "category": self.category,
            "properties": dict(self.properties),
            "implicit": self.implicit,
            "created_by": self.created_by,
            "enabled": self.enabled,
            "invalid": self.invalid,
        }

    @staticmethod
    def from_json(doc):
        return ComponentDescriptor(
            id=doc["id"],
            kind=doc["kind"],
            category=doc["category"],
            properties=dict(doc.get("properties", {})),
            implicit=doc.get("implicit", False),
            created_by=doc.get("created_by", ""),
            enabled=doc.get("enabled", True),
            invalid=doc.get("invalid", False),
        )


@dataclass
class Binding:
    id: str
    condition_id: str
    action_id: str
    edge: str = "rising"  # rising | falling | while-active

    def to_json(self):
        return {
            "id": self.id,
            "condition_id": self.condition_id,
            "action_id": self.action_id,
            "edge": self.edge,
        }

    @staticmethod
    def from_json(doc):
        return Binding(
            id=doc["id"],
            condition_id=doc["condition_id"],
            action_id=doc["action_id"],
            edge=doc.get("edge", "rising"),
        )


@dataclass
class Workstation:
    id: str
    name: str = ""
    revision: int = 0
    agents: dict = field(default_factory=dict)
    trackers: dict = field(default_factory=dict)
    anchors: dict = field(default_factory=dict)
    components: dict = field(default_factory=dict)  # id -> ComponentDescriptor
    tools: dict = field(default_factory=dict)
    parts: dict = field(default_factory=dict)
    tasks: dict = field(default_factory=dict)
    bindings: dict = field(default_factory=dict)

    def __post_init__(self):
        # every workstation carries the user's body anchors by default
        for uid in USER_ANCHOR_IDS:
            if uid not in self.anchors:
                self.anchors[uid] = Anchor(id=uid, label=uid, parent_type="user", parent_id=uid)

    def components_by_category(self, category):
        return [c for c in self.components.values() if c.category == category]

    def to_json(self):
        def dump(d):
            return [d[k].to_json() for k in sorted(d)]

        return {
            "id": self.id,
            "name": self.name,
            "revision": self.revision,
            "agents": dump(self.agents),
            "trackers": dump(self.trackers),
            "anchors": dump(self.anchors),
            "components": dump(self.components),
            "tools": dump(self.tools),
            "parts": dump(self.parts),
            "tasks": dump(self.tasks),
            "bindings": dump(self.bindings),
        }

    @staticmethod
    def from_json(doc):
        ws = Workstation(id=doc["id"], name=doc.get("name", ""), revision=doc.get("revision", 0))
        for item in doc.get("agents", []):
            ws.agents[item["id"]] = Agent.from_json(item)
        for item in doc.get("trackers", []):
            ws.trackers[item["id"]] = Tracker.from_json(item)
        for item in doc.get("anchors", []):
            ws.anchors[item["id"]] = Anchor.from_json(item)
        for item in doc.get("components", []):
            ws.components[item["id"]] = ComponentDescriptor.from_json(item)
        for item in doc.get("tools", []):
            ws.tools[item["id"]] = Tool.from_json(item)
        for item in doc.get("parts", []):
            ws.parts[item["id"]] = Part.from_json(item)
        for item in doc.get("tasks", []):
            ws.tasks[item["id"]] = Task.from_json(item)
        for item in doc.get("bindings", []):
            ws.bindings[item["id"]] = Binding.from_json(item)
        return ws


@dataclass
class InputEvent:
    type: str            # poke | gaze | pinch | button | speech | message
    target: str = ""     # feedback id, button id, speech token, or topic
    source: str = ""     # originating anchor (hand/head) where meaningful
    timestamp: float = 0.0
    payload: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "type": self.type,
            "target": self.target,
            "source": self.source,
            "timestamp": self.timestamp,
            "payload": dict(self.payload),
        }

    @staticmethod
    def from_json(doc):
        return InputEvent(
            type=doc["type"],
            target=doc.get("target", ""),
            source=doc.get("source", ""),
            timestamp=doc.get("timestamp", 0.0),
            payload=dict(doc.get("payload", {})),
        )


@dataclass
class RobotView:
    """Latest observed state of one robot agent."""

    joints: tuple = (0.0,) * 6
    tcp: Pose = field(default_factory=Pose)
    run_state: str = "stopped"
    moving: bool = False
    sensors: dict = field(default_factory=dict)
    assistance: bool = False


@dataclass
class WorldState:
    """Snapshot of everything condition evaluation can observe."""

    timestamp: float = 0.0
    robots: dict = field(default_factory=dict)       # agent id -> RobotView
    user_poses: dict = field(default_factory=dict)   # user anchor id -> Pose
    task_status: dict = field(default_factory=dict)  # task id -> status
    task_assignee: dict = field(default_factory=dict)
    events: list = field(default_factory=list)       # recent InputEvents
    zones: dict = field(default_factory=dict)        # zone id -> [[x,y,z], ...]


def resolve_anchor(anchor_id: str, workstation: Workstation, world: WorldState) -> Pose:
    """World pose of an anchor: fold of compose along the parent chain.

    Roots are tracker world poses (asserted in config) or the user's
    head/hand poses from the world snapshot.
    """
    seen = set()
    chain = []
    current = anchor_id
    while True:
        if current in seen:
            raise AnchorCycleError(f"anchor chain cycle at {current!r}")
        seen.add(current)
        anchor = workstation.anchors.get(current)
        if anchor is None:
            raise UnresolvedAnchorError(f"unknown anchor {current!r}")
        chain.append(anchor)
        if anchor.parent_type == "anchor":
            current = anchor.parent_id
            continue
        if anchor.parent_type == "tracker":
            tracker = workstation.trackers.get(anchor.parent_id)
            if tracker is None:
                raise UnresolvedAnchorError(f"unknown tracker {anchor.parent_id!r}")
            root = tracker.world_pose
        elif anchor.parent_type == "user":
            root = world.user_poses.get(anchor.parent_id)
            if root is None:
                raise UnresolvedAnchorError(f"user pose {anchor.parent_id!r} not in world state")
        else:
            raise UnresolvedAnchorError(f"unknown parent type {anchor.parent_type!r}")
        break

    pose = root
    for anchor in reversed(chain):
        pose = compose(pose, anchor.local_pose)
    return pose
