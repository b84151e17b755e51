"""Headless scene client: the HMD stand-in.

Maintains a synchronized scene (resolved poses, visibility, data payloads)
from retained config plus live world topics, injects user input events,
and renders a deterministic line-oriented dump for golden tests and the UI.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import bus as topics
from .authoring import ConfigReplica
from .conditions import EvaluationReport, visibility
from .geometry import Pose, compose
from .model import AnchorCycleError, UnresolvedAnchorError, resolve_anchor
from .worldstore import WorldStore


@dataclass
class SceneNode:
    feedback_id: str
    kind: str
    visible: bool = True
    pose: Pose = None
    points: list = field(default_factory=list)  # path polyline / zone polygon
    data: str = ""
    diagnostic: str = ""


def _fmt(value):
    return f"{value:.4f}"


def _current_task(workstation, world):
    """The task whose details task feedback should show: the lowest-order
    active task, falling back to the lowest-order ready task."""
    for wanted in ("active", "ready"):
        candidates = [
            t for t in workstation.tasks.values()
            if world.task_status.get(t.id, t.status) == wanted
        ]
        if candidates:
            return min(candidates, key=lambda t: (t.order, t.id))
    return None


def _node_pose(desc, workstation, world):
    anchor_id = desc.properties.get("anchor")
    pose = Pose()
    if anchor_id:
        pose = resolve_anchor(anchor_id, workstation, world)
    offset = desc.properties.get("pose")
    if offset:
        pose = compose(pose, Pose.from_json(offset))
    return pose


def build_scene(workstation, world, report: EvaluationReport, previews=None):
    """Pure projection: (config, world, condition report) -> scene nodes."""
    previews = previews or {}
    nodes = {}
    current = _current_task(workstation, world)
    for desc in workstation.components.values():
        if desc.category != "feedback":
            continue
        node = SceneNode(feedback_id=desc.id, kind=desc.kind)
        node.visible = desc.enabled and visibility(desc.id, report, workstation)
        props = desc.properties
        kind = desc.kind
        try:
            node.pose = _node_pose(desc, workstation, world)
        except (UnresolvedAnchorError, AnchorCycleError) as exc:
            node.pose = None
            node.visible = False
            node.diagnostic = f"unresolved: {exc}"

        if kind in ("robot-path", "robot-waypoints", "robot-silhouette"):
            preview = previews.get(props.get("agent", ""))
            if preview:
                node.points = [tuple(p) for p in preview.get("points", [])]
            if kind == "robot-path":
                node.data = f"points={len(node.points)} width={_fmt(props.get('width', 0.0))}"
            elif kind == "robot-waypoints":
                node.data = f"points={len(node.points)}"
            else:
                robot = world.robots.get(props.get("agent", ""))
                node.data = f"model={props.get('model', 'default')}"
                if robot is not None:
                    node.pose = robot.tcp
        elif kind == "robot-state":
            robot = world.robots.get(props.get("agent", ""))
            node.data = f"state={robot.run_state if robot else 'unknown'}"
        elif kind == "robot-sensor":
            robot = world.robots.get(props.get("agent", ""))
            sensor = props.get("sensor", "")
            if robot is not None and sensor in robot.sensors:
                node.data = f"{sensor}={_fmt(robot.sensors[sensor])}"
            else:
                node.data = f"{sensor}=none"
        elif kind == "robot-task-status":
            agent = props.get("agent", "")
            active = [
                t for t, s in sorted(world.task_status.items())
                if s == "active" and world.task_assignee.get(t) == agent
            ]
            node.data = f"task={active[0] if active else 'none'}"
        elif kind == "task-image":
            node.data = f"text={current.description if current else ''!r}"
        elif kind == "task-part-image":
            parts = ",".join(current.part_ids) if current else ""
            node.data = f"parts={parts}"
        elif kind in ("task-highlight", "task-model-highlight", "step-instructions-3d"):
            node.data = f"task={current.id if current else 'none'}"
            if current is not None and current.step_anchor_id:
                try:
                    base = resolve_anchor(current.step_anchor_id, workstation, world)
                    node.pose = compose(base, current.step_pose)
                except (UnresolvedAnchorError, AnchorCycleError):
                    pass
        elif kind == "tool-highlight":
            tools = ",".join(current.tool_ids) if current else ""
            node.data = f"tools={tools}"
        elif kind == "part-highlight":
            parts = ",".join(current.part_ids) if current else ""
            node.data = f"parts={parts}"
        elif kind == "task-list-status":
            done = sum(1 for s in world.task_status.values() if s == "completed")
            total = len(workstation.tasks)
            node.data = f"completed={done}/{total}"
        elif kind == "zone":
            points = world.zones.get(props.get("zone-id", ""), [])
            node.points = [tuple(p) for p in points]
            node.data = f"points={len(points)}"
        elif kind == "indicator-3d":
            node.data = f"shape={props.get('shape', 'sphere')} color={props.get('color', '')}"
        elif kind == "icon":
            node.data = f"icon={props.get('icon-name', '')}"
        elif kind == "light":
            node.data = f"light={props.get('light-id', '')} color={props.get('color', '')}"
        elif kind == "sound":
            trigger = props.get("trigger", "")
            playing = bool(trigger) and report.values.get(trigger, False)
            node.data = f"clip={props.get('clip', '')} playing={str(playing).lower()}"
        elif kind == "message":
            node.data = f"text={props.get('text', '')!r}"
        nodes[desc.id] = node
    return nodes


def dump_scene(nodes):
    """Canonical textual scene: one node per line, ordered by id."""
    lines = []
    for fid in sorted(nodes):
        node = nodes[fid]
        if node.pose is not None:
            x, y, z = node.pose.position
            pos = f"({_fmt(x)},{_fmt(y)},{_fmt(z)})"
        else:
            pos = "(unresolved)"
        line = (
            f"{fid} kind={node.kind} visible={str(node.visible).lower()} "
            f"pos={pos} {node.data}"
        ).rstrip()
        if node.diagnostic:
            line += f" # {node.diagnostic}"
        lines.append(line)
    return "\n".join(lines) + ("\n" if lines else "")


class SceneClient:
    def __init__(self, bus, ws_id, client_id="scene", clock=None):
        self.bus = bus
        self.ws_id = ws_id
        self.client_id = client_id
        self.clock = clock or (lambda: 0.0)
        self.replica = ConfigReplica(bus, ws_id)
        self.store = WorldStore(bus, ws_id, clock)
        self.previews = {}
        self.report = EvaluationReport()
        self._subs = [
            bus.subscribe(f"arthur/{ws_id}/preview/+", self._on_preview),
            bus.subscribe(topics.condition_events_topic(ws_id), self._on_report),
        ]

    def close(self):
        self.replica.close()
        self.store.close()
        for sub in self._subs:
            sub.unsubscribe()

    def _on_preview(self, env):
        agent_id = env.topic.split("/")[3]
        if env.payload is None:
            self.previews.pop(agent_id, None)
        else:
            self.previews[agent_id] = env.payload

    def _on_report(self, env):
        doc = env.payload or {}
        self.report = EvaluationReport(
            timestamp=doc.get("timestamp", 0.0),
            values=dict(doc.get("values", {})),
            invalid=set(doc.get("invalid", [])),
            fired=list(doc.get("fired", [])),
        )

    # -- queries -------------------------------------------------------------------

    def scene(self):
        return build_scene(
            self.replica.workstation, self.store.snapshot(), self.report, self.previews
        )

    def dump_scene(self):
        return dump_scene(self.scene())

    # -- input injection -------------------------------------------------------------

    def inject(self, event_type, target="", source="", payload=None):
        known = target in self.replica.workstation.components if target else True
        doc = {
            "type": event_type,
            "target": target,
            "source": source,
            "timestamp": self.clock(),
            "payload": payload or {},
        }
        if event_type in ("poke", "gaze", "pinch") and not known:
            doc["unresolved"] = True
        self.bus.publish(
            topics.input_events_topic(self.ws_id), doc, publisher=self.client_id
        )
        return doc

    def set_user_poses(self, poses):
        """Drive the user's head/hand anchors (scripted timelines or UI sliders)."""
        self.bus.publish(
            topics.user_pose_topic(self.ws_id),
            {key: pose.to_json() for key, pose in poses.items()},
            retained=True,
            publisher=self.client_id,
        )

    # -- authoring round-trips ----------------------------------------------------------

    def set_position(self, entity_id, pose: Pose):
        response = self.call_authoring("set_position", entity_id=entity_id, pose=pose.to_json())
        if not response.get("ok"):
            raise RuntimeError(response.get("error", "set_position failed"))
        return response

    _rpc_seq = 0

    def call_authoring(self, op, **kwargs):
        SceneClient._rpc_seq += 1
        request_id = SceneClient._rpc_seq
        result = {}

        def on_response(env):
            if (env.payload or {}).get("request_id") == request_id:
                result.update(env.payload)

        sub = self.bus.subscribe(
            topics.rpc_topic("authoring", self.client_id, "response"), on_response
        )
        try:
            self.bus.publish(
                topics.rpc_topic("authoring", self.client_id, "request"),
                {"op": op, "request_id": request_id, **kwargs},
                publisher=self.client_id,
            )
        finally:
            sub.unsubscribe()
        return result
