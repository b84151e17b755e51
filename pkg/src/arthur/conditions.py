"""Condition evaluation, edge detection, and action firing.

Evaluation is a pure function of (workstation, world snapshot, previous
report): logic conditions are ordered topologically after their operands,
every verdict lands in one report, and bindings fire on the configured
edge exactly once per transition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import bus as topics
from .authoring import ConfigReplica
from .geometry import distance, quat_rotate
from .model import UnresolvedAnchorError, AnchorCycleError, resolve_anchor
from .registry import registry
from .worldstore import WorldStore

DEFAULT_EVENT_WINDOW_S = 0.2
DEFAULT_GAZE_RADIUS_M = 0.15


class ConditionCycleError(ValueError):
    def __init__(self, cycle):
        super().__init__(f"logic condition cycle: {' -> '.join(cycle)}")
        self.cycle = list(cycle)


@dataclass
class EvaluationReport:
    timestamp: float = 0.0
    values: dict = field(default_factory=dict)   # condition id -> bool
    invalid: set = field(default_factory=set)    # dangling / misconfigured
    fired: list = field(default_factory=list)    # action event payloads

    def to_json(self):
        return {
            "timestamp": self.timestamp,
            "values": dict(self.values),
            "invalid": sorted(self.invalid),
            "fired": list(self.fired),
        }


def _event_match(world, etype, window, predicate):
    for event in world.events:
        if event.type != etype:
            continue
        age = world.timestamp - event.timestamp
        if age < 0.0 or age > window:
            continue
        if predicate(event):
            return True
    return False


def _resolve_feedback_center(feedback_id, workstation, world):
    desc = workstation.components.get(feedback_id)
    if desc is None:
        return None
    anchor_id = desc.properties.get("anchor")
    if not anchor_id:
        return None
    try:
        pose = resolve_anchor(anchor_id, workstation, world)
    except (UnresolvedAnchorError, AnchorCycleError):
        return None
    offset = desc.properties.get("pose")
    if offset:
        pose_pos = quat_rotate(pose.orientation, tuple(offset["position"]))
        return tuple(p + o for p, o in zip(pose.position, pose_pos))
    return pose.position


def _gaze_hit(feedback_id, workstation, world):
    """Ray-sphere test from the user's head against the feedback's center."""
    head = world.user_poses.get("user-head")
    center = _resolve_feedback_center(feedback_id, workstation, world)
    if head is None or center is None:
        return False
    desc = workstation.components.get(feedback_id)
    radius = float(desc.properties.get("radius", DEFAULT_GAZE_RADIUS_M))
    forward = quat_rotate(head.orientation, (0.0, 0.0, 1.0))
    rel = tuple(c - p for c, p in zip(center, head.position))
    along = sum(r * f for r, f in zip(rel, forward))
    if along <= 0.0:
        return False
    closest = tuple(r - along * f for r, f in zip(rel, forward))
    return math.sqrt(sum(c * c for c in closest)) <= radius


def _point_in_convex_hull_xy(point, points):
    """Point-in-convex-hull test in the xy plane, boundary counts as inside."""
    pts = sorted({(p[0], p[1]) for p in points})
    if len(pts) < 3:
        return False

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    x, y = point[0], point[1]
    for i in range(len(hull)):
        a, b = hull[i], hull[(i + 1) % len(hull)]
        if cross(a, b, (x, y)) < 0:
            return False
    return True


def evaluate(desc, workstation, world, operands) -> bool:
    """Verdict for one condition; `operands` maps condition id -> bool for
    already-evaluated logic dependencies.  Raises KeyError/LookupError for
    dangling references (callers flag the condition invalid)."""
    kind = desc.kind
    props = desc.properties
    window = float(props.get("window", DEFAULT_EVENT_WINDOW_S))

    if kind == "proximity":
        a = resolve_anchor(props["anchor-a"], workstation, world)
        b = resolve_anchor(props["anchor-b"], workstation, world)
        d = distance(a, b)
        threshold = float(props["threshold"])
        if props.get("direction", "within") == "beyond":
            return d > threshold
        return d < threshold

    if kind == "inside-zone":
        points = world.zones.get(props["zone-id"])
        if not points:
            return False
        pose = resolve_anchor(props["anchor"], workstation, world)
        return _point_in_convex_hull_xy(pose.position, points)

    if kind == "poke":
        target = props["feedback"]
        if target not in workstation.components:
            raise LookupError(f"dangling feedback {target!r}")
        return _event_match(world, "poke", window, lambda e: e.target == target)

    if kind == "gaze":
        target = props["feedback"]
        if target not in workstation.components:
            raise LookupError(f"dangling feedback {target!r}")
        if _event_match(world, "gaze", window, lambda e: e.target == target):
            return True
        return _gaze_hit(target, workstation, world)

    if kind == "gaze-pinch":
        target = props["feedback"]
        if target not in workstation.components:
            raise LookupError(f"dangling feedback {target!r}")
        pinched = _event_match(
            world, "pinch", window, lambda e: e.target in ("", target)
        )
        if not pinched:
            return False
        if _event_match(world, "gaze", window, lambda e: e.target == target):
            return True
        return _gaze_hit(target, workstation, world)

    if kind == "speech-command":
        return _event_match(
            world, "speech", window, lambda e: e.target == props["command"]
        )

    if kind == "operator-skill":
        agent = workstation.agents.get(props["agent"])
        if agent is None:
            raise LookupError(f"dangling agent {props['agent']!r}")
        if props.get("comparison", "at-least") == "below":
            return agent.skill_level < int(props["level"])
        return agent.skill_level >= int(props["level"])

    if kind == "robot-state":
        robot = world.robots.get(props["agent"])
        return robot is not None and robot.run_state == props["state"]

    if kind == "robot-moving":
        robot = world.robots.get(props["agent"])
        return robot is not None and robot.moving

    if kind == "robot-sensor-threshold":
        robot = world.robots.get(props["agent"])
        if robot is None or props["sensor"] not in robot.sensors:
            return False
        value = robot.sensors[props["sensor"]]
        threshold = float(props["threshold"])
        if props.get("direction", "above") == "below":
            return value < threshold
        return value > threshold

    if kind == "robot-assistance":
        robot = world.robots.get(props["agent"])
        return robot is not None and robot.assistance

    if kind == "workstation-button":
        return _event_match(
            world, "button", window, lambda e: e.target == props["button"]
        )

    if kind == "message-received":
        key = props.get("key", "")

        def match(event):
            if event.target != props["topic"]:
                return False
            return not key or key in event.payload

        return _event_match(world, "message", window, match)

    if kind == "task-status":
        return world.task_status.get(props["task"]) == props["status"]

    if kind == "task-assigned-to":
        return world.task_assignee.get(props["task"]) == props["agent"]

    if kind == "and":
        refs = [props[k] for k in ("operand-1", "operand-2", "operand-3", "operand-4")
                if props.get(k)]
        return all(operands[r] for r in refs)

    if kind == "or":
        refs = [props[k] for k in ("operand-1", "operand-2", "operand-3", "operand-4")
                if props.get(k)]
        return any(operands[r] for r in refs)

    if kind == "not":
        return not operands[props["operand"]]

    raise LookupError(f"unknown condition kind {kind!r}")


def _operand_refs(desc):
    spec = registry().lookup(desc.kind, "condition")
    if spec is None:
        return []
    refs = []
    for schema in spec.properties:
        if schema.kind == "condition":
            value = desc.properties.get(schema.name)
            if value:
                refs.append(value)
    return refs


def _topological_order(conditions):
    """Order condition ids so operands come before their logic consumers."""
    state = {}  # id -> 0 visiting, 1 done
    order = []
    stack_trace = []

    def visit(cid):
        mark = state.get(cid)
        if mark == 1:
            return
        if mark == 0:
            cycle_start = stack_trace.index(cid)
            raise ConditionCycleError(stack_trace[cycle_start:] + [cid])
        state[cid] = 0
        stack_trace.append(cid)
        desc = conditions.get(cid)
        if desc is not None:
            for ref in _operand_refs(desc):
                if ref in conditions:
                    visit(ref)
        stack_trace.pop()
        state[cid] = 1
        order.append(cid)

    for cid in sorted(conditions):
        visit(cid)
    return order


def evaluate_all(workstation, world, previous=None) -> EvaluationReport:
    previous = previous or EvaluationReport()
    conditions = {
        c.id: c for c in workstation.components.values() if c.category == "condition"
    }
    report = EvaluationReport(timestamp=world.timestamp)
    for cid in _topological_order(conditions):
        desc = conditions[cid]
        if desc.invalid:
            report.values[cid] = False
            report.invalid.add(cid)
            continue
        try:
            report.values[cid] = bool(
                evaluate(desc, workstation, world, report.values)
            )
        except (LookupError, AnchorCycleError):
            report.values[cid] = False
            report.invalid.add(cid)

    for binding in sorted(workstation.bindings.values(), key=lambda b: b.id):
        cid = binding.condition_id
        if cid not in report.values:
            continue
        value = report.values[cid]
        prior = previous.values.get(cid, False)
        fire = (
            (binding.edge == "rising" and value and not prior)
            or (binding.edge == "falling" and not value and prior)
            or (binding.edge == "while-active" and value)
        )
        if not fire:
            continue
        action = workstation.components.get(binding.action_id)
        if action is None or action.category != "action":
            continue
        report.fired.append(
            {
                "binding_id": binding.id,
                "action_id": action.id,
                "kind": action.kind,
                "properties": dict(action.properties),
                "timestamp": world.timestamp,
            }
        )
    return report


def visibility(feedback_id, report: EvaluationReport, workstation) -> bool:
    """Feedback is visible unless its visibility condition is inactive or
    unusable (fail-closed)."""
    desc = workstation.components.get(feedback_id)
    if desc is None:
        return False
    cond_id = desc.properties.get("visibility")
    if not cond_id:
        return True
    if cond_id in report.invalid:
        return False
    return report.values.get(cond_id, False)


class ConditionEngine:
    """Service wrapper: consumes config + world topics, publishes reports and
    fired-action events each tick."""

    SERVICE_NAME = "condition-engine"
    HEARTBEAT_PERIOD_S = 2.0

    def __init__(self, bus, ws_id, clock):
        self.bus = bus
        self.ws_id = ws_id
        self.clock = clock
        self.replica = ConfigReplica(bus, ws_id)
        self.store = WorldStore(bus, ws_id, clock)
        self.previous = EvaluationReport()
        self._last_heartbeat = None

    def close(self):
        self.replica.close()
        self.store.close()

    def tick(self, now):
        world = self.store.snapshot()
        report = evaluate_all(self.replica.workstation, world, self.previous)
        self.previous = report
        self.bus.publish(
            topics.condition_events_topic(self.ws_id),
            report.to_json(),
            publisher=self.SERVICE_NAME,
        )
        for fired in report.fired:
            self._dispatch(fired)
        if self._last_heartbeat is None or now - self._last_heartbeat >= self.HEARTBEAT_PERIOD_S:
            self._last_heartbeat = now
            self.bus.publish(
                topics.service_status_topic(self.ws_id, self.SERVICE_NAME),
                {"state": "ok", "timestamp": now},
                retained=True,
                publisher=self.SERVICE_NAME,
            )
        return report

    def _dispatch(self, fired):
        self.bus.publish(
            topics.action_events_topic(self.ws_id),
            fired,
            publisher=self.SERVICE_NAME,
        )
        if fired["kind"] == "send-mqtt-message":
            import json

            props = fired["properties"]
            try:
                payload = json.loads(props.get("payload", "{}"))
            except ValueError:
                payload = {"raw": props.get("payload", "")}
            self.bus.publish(props["topic"], payload, publisher=self.SERVICE_NAME)
