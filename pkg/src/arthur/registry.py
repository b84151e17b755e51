"""Component registry: every feedback, action, and condition kind with its
typed property schema.

The registry is the single source of truth for what users can author.  The
web UI builds its forms from these schemas; the authoring service validates
every mutation against them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

PROPERTY_KINDS = (
    "boolean",
    "integer",
    "float",
    "string",
    "anchor",
    "pose",
    "vector3",
    "condition",
    "color",
    "agent",
    "enum",
    "multi-select-enum",
)

FEEDBACK_SUBGROUPS = ("robot", "task", "general")
ACTION_SUBGROUPS = ("robot", "task", "general")
CONDITION_SUBGROUPS = ("spatial", "operator", "robot", "environment", "task", "logic")

# feedback kinds that auto-create an interaction condition, and which one
INTERACTIVE_FEEDBACK = {
    "indicator-3d": "poke",
    "task-model-highlight": "gaze-pinch",
}

# feedback kinds whose placement is fixed by other data (robot / BoP), so
# set_position must reject them
NON_POSITIONABLE_FEEDBACK = {
    "robot-path",
    "robot-waypoints",
    "robot-silhouette",
    "task-model-highlight",
    "step-instructions-3d",
}

_COLOR_RE = re.compile(r"^#[0-9A-Fa-f]{6}([0-9A-Fa-f]{2})?$")


@dataclass(frozen=True)
class PropertySchema:
    name: str
    kind: str
    required: bool = False
    domain: tuple = ()        # enum / multi-select-enum members
    minimum: float = None
    maximum: float = None
    default: object = None

    def __post_init__(self):
        if self.kind not in PROPERTY_KINDS:
            raise ValueError(f"unknown property kind {self.kind!r}")

    def to_json(self):
        doc = {"name": self.name, "kind": self.kind, "required": self.required}
        if self.domain:
            doc["domain"] = list(self.domain)
        if self.minimum is not None:
            doc["minimum"] = self.minimum
        if self.maximum is not None:
            doc["maximum"] = self.maximum
        if self.default is not None:
            doc["default"] = self.default
        return doc


@dataclass(frozen=True)
class ComponentSpec:
    kind: str
    category: str       # feedback | action | condition
    subgroup: str
    name: str
    icon: str
    description: str
    properties: tuple = ()

    def schema(self, name):
        for p in self.properties:
            if p.name == name:
                return p
        return None

    def to_json(self):
        return {
            "kind": self.kind,
            "category": self.category,
            "subgroup": self.subgroup,
            "name": self.name,
            "icon": self.icon,
            "description": self.description,
            "properties": [p.to_json() for p in self.properties],
        }


def _p(name, kind, **kw):
    return PropertySchema(name=name, kind=kind, **kw)


_VISIBILITY = _p("visibility", "condition")
_WINDOW = _p("window", "float", minimum=0.0, default=0.2)
# optional placement offset, written by scene-client set_position; only
# present on kinds whose placement is user-adjustable
_POSE = _p("pose", "pose")


def _feedback(kind, subgroup, name, icon, description, *props):
    return ComponentSpec(kind, "feedback", subgroup, name, icon, description, tuple(props))


def _action(kind, subgroup, name, icon, description, *props):
    return ComponentSpec(kind, "action", subgroup, name, icon, description, tuple(props))


def _condition(kind, subgroup, name, icon, description, *props):
    return ComponentSpec(kind, "condition", subgroup, name, icon, description, tuple(props))


_FEEDBACK_SPECS = (
    # robot
    _feedback(
        "robot-path", "robot", "Robot path", "route",
        "Polyline preview of the robot's upcoming tool-center-point motion.",
        _p("agent", "agent", required=True),
        _p("width", "float", required=True, minimum=0.0, default=0.02),
        _p("color", "color", required=True, default="#00A0FF"),
    ),
    _feedback(
        "robot-waypoints", "robot", "Robot waypoints", "timeline",
        "Discrete markers along the robot's planned motion.",
        _p("agent", "agent", required=True),
        _p("size", "float", minimum=0.0, default=0.03),
        _p("color", "color", default="#00A0FF"),
        _VISIBILITY,
    ),
    _feedback(
        "robot-silhouette", "robot", "Robot silhouette", "ghost",
        "Translucent robot model shown at a future configuration.",
        _p("agent", "agent", required=True),
        _p("model", "string", default="default"),
        _p("opacity", "float", minimum=0.0, maximum=1.0, default=0.4),
        _p("color", "color", default="#808080"),
        _VISIBILITY,
    ),
    _feedback(
        "robot-state", "robot", "Robot state", "activity",
        "Text panel showing whether the robot is playing, paused, or stopped.",
        _p("agent", "agent", required=True),
        _p("anchor", "anchor", required=True),
        _POSE,
        _VISIBILITY,
    ),
    _feedback(
        "robot-sensor", "robot", "Robot sensor", "gauge",
        "Live readout of one named robot sensor value.",
        _p("agent", "agent", required=True),
        _p("sensor", "string", required=True),
        _p("anchor", "anchor", required=True),
        _p("minimum", "float", default=0.0),
        _p("maximum", "float", default=1.0),
        _POSE,
        _VISIBILITY,
    ),
    _feedback(
        "robot-task-status", "robot", "Robot task status", "progress",
        "Current robot task and its progress fraction.",
        _p("agent", "agent", required=True),
        _p("anchor", "anchor", required=True),
        _POSE,
        _VISIBILITY,
    ),
    # task
    _feedback(
        "task-image", "task", "Task image", "image",
        "Panel with the description and image of the current task.",
        _p("anchor", "anchor", required=True),
        _p("width", "float", minimum=0.0, default=0.4),
        _POSE,
        _VISIBILITY,
    ),
    _feedback(
        "task-part-image", "task", "Task part image", "image-part",
        "Image of the part used in the current task step.",
        _p("anchor", "anchor", required=True),
        _p("width", "float", minimum=0.0, default=0.3),
        _POSE,
        _VISIBILITY,
    ),
    _feedback(
        "task-highlight", "task", "Task highlight", "target",
        "Highlights the step pose of the current task.",
        _p("color", "color", default="#FFD000"),
        _POSE,
        _VISIBILITY,
    ),
    _feedback(
        "task-model-highlight", "task", "Task model highlight", "cube-glow",
        "Hologram of where the current step's parts belong; interactive.",
        _p("model", "string", default="default"),
        _p("opacity", "float", minimum=0.0, maximum=1.0, default=0.6),
        _p("color", "color", default="#FFD000"),
        _VISIBILITY,
    ),
    _feedback(
        "tool-highlight", "task", "Tool highlight", "wrench",
        "Highlights the tool required by the current task.",
        _p("color", "color", default="#00FF80"),
        _POSE,
        _VISIBILITY,
    ),
    _feedback(
        "part-highlight", "task", "Part highlight", "puzzle",
        "Highlights the part required by the current task.",
        _p("color", "color", default="#00FF80"),
        _POSE,
        _VISIBILITY,
    ),
    _feedback(
        "task-list-status", "task", "Task list status", "list-check",
        "Overview list of all tasks with their statuses and assignees.",
        _p("anchor", "anchor", required=True),
        _POSE,
        _VISIBILITY,
    ),
    _feedback(
        "step-instructions-3d", "task", "3D step instructions", "steps",
        "Step-by-step instructions rendered at the step pose of each task.",
        _p("scale", "float", minimum=0.0, default=1.0),
        _VISIBILITY,
    ),
    # general
    _feedback(
        "indicator-3d", "general", "3D indicator", "sphere",
        "Simple 3D primitive; becomes a virtual button via its poke condition.",
        _p("shape", "enum", domain=("sphere", "cube", "arrow"), default="sphere"),
        _p("color", "color", required=True, default="#FFFFFF"),
        _p("anchor", "anchor", required=True),
        _p("radius", "float", minimum=0.0, default=0.05),
        _POSE,
        _VISIBILITY,
    ),
    _feedback(
        "icon", "general", "Icon", "star",
        "Billboarded 2D icon conveying a system state.",
        _p("icon-name", "string", required=True),
        _p("anchor", "anchor", required=True),
        _p("size", "float", minimum=0.0, default=0.1),
        _POSE,
        _VISIBILITY,
    ),
    _feedback(
        "zone", "general", "Zone", "fence",
        "Semi-transparent wall through a published series of boundary points.",
        _p("zone-id", "string", required=True),
        _p("color", "color", default="#FF4000"),
        _p("opacity", "float", minimum=0.0, maximum=1.0, default=0.35),
        _POSE,
        _VISIBILITY,
    ),
    _feedback(
        "light", "general", "Workspace light", "bulb",
        "Drives a physical light in the workstation.",
        _p("light-id", "string", required=True),
        _p("color", "color", default="#FFFFFF"),
        _POSE,
        _VISIBILITY,
    ),
    _feedback(
        "sound", "general", "Sound", "volume",
        "Plays a spatial audio clip while its trigger condition is active.",
        _p("clip", "string", required=True),
        _p("volume", "float", minimum=0.0, maximum=1.0, default=0.8),
        _p("anchor", "anchor"),
        _POSE,
        _p("trigger", "condition"),
    ),
    _feedback(
        "message", "general", "Message panel", "chat",
        "Free-form text panel placed in the workspace.",
        _p("text", "string", required=True),
        _p("anchor", "anchor", required=True),
        _POSE,
        _VISIBILITY,
    ),
)

_ACTION_SPECS = (
    _action(
        "robot-play-pause", "robot", "Robot play/pause", "play-pause",
        "Toggles the robot program between playing and paused.",
        _p("agent", "agent", required=True),
    ),
    _action(
        "robot-acknowledge", "robot", "Robot acknowledge", "check",
        "Confirms to the robot that it may initiate its next task.",
        _p("agent", "agent", required=True),
    ),
    _action(
        "robot-move-mode", "robot", "Robot move mode", "hand",
        "Puts the robot into hand-guiding mode.",
        _p("agent", "agent", required=True),
    ),
    _action(
        "complete-task", "task", "Complete task", "task-done",
        "Marks the agent's active task (or an explicit task) as completed.",
        _p("agent", "agent"),
        _p("task", "string"),
    ),
    _action(
        "reassign-task", "task", "Reassign task", "swap",
        "Moves a task to a different agent.",
        _p("task", "string", required=True),
        _p("agent", "agent", required=True),
    ),
    _action(
        "select-task", "task", "Select task", "cursor",
        "Selects a task so task-related feedback shows its details.",
        _p("task", "string", required=True),
    ),
    _action(
        "acknowledge", "general", "Acknowledge", "thumbs-up",
        "General-purpose acknowledgment broadcast on the bus.",
    ),
    _action(
        "global-play-pause", "general", "Global play/pause", "power",
        "Toggles play/pause for every robot in the workstation.",
    ),
    _action(
        "send-mqtt-message", "general", "Send message", "send",
        "Publishes a custom JSON payload to a chosen topic.",
        _p("topic", "string", required=True),
        _p("payload", "string", default="{}"),
    ),
    _action(
        "toggle-feedback", "general", "Toggle feedback", "eye",
        "Shows, hides, or toggles a feedback component.",
        _p("feedback", "string", required=True),
        _p("mode", "enum", domain=("show", "hide", "toggle"), default="toggle"),
    ),
)

_CONDITION_SPECS = (
    # spatial
    _condition(
        "proximity", "spatial", "Proximity", "ruler",
        "Active when the distance between two anchors is within/beyond a threshold.",
        _p("anchor-a", "anchor", required=True),
        _p("anchor-b", "anchor", required=True),
        _p("threshold", "float", required=True, minimum=0.0),
        _p("direction", "enum", domain=("within", "beyond"), default="within"),
    ),
    _condition(
        "inside-zone", "spatial", "Inside zone", "area",
        "Active while an anchor is inside the polygon of a published zone.",
        _p("zone-id", "string", required=True),
        _p("anchor", "anchor", required=True),
    ),
    # operator
    _condition(
        "gaze", "operator", "Gaze", "eye-open",
        "Active while the user looks at the referenced feedback element.",
        _p("feedback", "string", required=True),
        _WINDOW,
    ),
    _condition(
        "gaze-pinch", "operator", "Gaze + pinch", "pinch",
        "Active when the user pinches while gazing at the referenced feedback.",
        _p("feedback", "string", required=True),
        _WINDOW,
    ),
    _condition(
        "poke", "operator", "Poke", "finger",
        "Active when the user pokes the referenced feedback element.",
        _p("feedback", "string", required=True),
        _WINDOW,
    ),
    _condition(
        "speech-command", "operator", "Speech command", "mic",
        "Active when the given spoken command token is recognized.",
        _p("command", "string", required=True),
        _WINDOW,
    ),
    _condition(
        "operator-skill", "operator", "Operator skill", "graduate",
        "Compares the operator's skill level against a bound.",
        _p("agent", "agent", required=True),
        _p("level", "integer", required=True),
        _p("comparison", "enum", domain=("at-least", "below"), default="at-least"),
    ),
    # robot
    _condition(
        "robot-state", "robot", "Robot state", "robot",
        "Active while the robot's run state equals the configured state.",
        _p("agent", "agent", required=True),
        _p("state", "enum", domain=("playing", "paused", "stopped"), required=True),
    ),
    _condition(
        "robot-moving", "robot", "Robot moving", "motion",
        "Active while the robot is in motion.",
        _p("agent", "agent", required=True),
    ),
    _condition(
        "robot-sensor-threshold", "robot", "Robot sensor threshold", "dial",
        "Compares a named robot sensor scalar against a threshold.",
        _p("agent", "agent", required=True),
        _p("sensor", "string", required=True),
        _p("threshold", "float", required=True),
        _p("direction", "enum", domain=("above", "below"), default="above"),
    ),
    _condition(
        "robot-assistance", "robot", "Robot assistance", "alert",
        "Active while the robot raises its needs-assistance flag.",
        _p("agent", "agent", required=True),
    ),
    # environment
    _condition(
        "workstation-button", "environment", "Workstation button", "button",
        "Active when a physical workstation button is pressed.",
        _p("button", "string", required=True),
        _WINDOW,
    ),
    _condition(
        "message-received", "environment", "Message received", "inbox",
        "Active when a message event matching the topic arrives.",
        _p("topic", "string", required=True),
        _p("key", "string"),
        _WINDOW,
    ),
    # task
    _condition(
        "task-status", "task", "Task status", "flag",
        "Active while the task is in the configured status.",
        _p("task", "string", required=True),
        _p("status", "enum", domain=("pending", "ready", "active", "completed"), required=True),
    ),
    _condition(
        "task-assigned-to", "task", "Task assigned to", "person",
        "Active while the task is assigned to the given agent.",
        _p("task", "string", required=True),
        _p("agent", "agent", required=True),
    ),
    # logic
    _condition(
        "and", "logic", "AND", "gate-and",
        "Active when all configured operand conditions are active.",
        _p("operand-1", "condition", required=True),
        _p("operand-2", "condition", required=True),
        _p("operand-3", "condition"),
        _p("operand-4", "condition"),
    ),
    _condition(
        "or", "logic", "OR", "gate-or",
        "Active when any configured operand condition is active.",
        _p("operand-1", "condition", required=True),
        _p("operand-2", "condition", required=True),
        _p("operand-3", "condition"),
        _p("operand-4", "condition"),
    ),
    _condition(
        "not", "logic", "NOT", "gate-not",
        "Active when the operand condition is inactive.",
        _p("operand", "condition", required=True),
    ),
)


class Registry:
    """Specs keyed by (category, kind); kind ids are unique per category.

    `robot-state` names both a feedback and a condition, so a bare kind
    lookup resolves only when unambiguous.
    """

    def __init__(self, specs):
        self._specs = {}
        for spec in specs:
            key = (spec.category, spec.kind)
            if key in self._specs:
                raise ValueError(f"duplicate kind {key!r}")
            self._specs[key] = spec

    def lookup(self, kind, category=None):
        if category is not None:
            return self._specs.get((category, kind))
        hits = [s for s in self._specs.values() if s.kind == kind]
        if len(hits) == 1:
            return hits[0]
        return None

    def all(self):
        return list(self._specs.values())

    def by_category(self, category):
        return [s for s in self._specs.values() if s.category == category]

    def counts(self):
        return (
            len(self.by_category("feedback")),
            len(self.by_category("action")),
            len(self.by_category("condition")),
        )


_REGISTRY = Registry(_FEEDBACK_SPECS + _ACTION_SPECS + _CONDITION_SPECS)


def registry() -> Registry:
    return _REGISTRY


def _check_value(schema: PropertySchema, value, workstation):
    """Yield violation strings for one property value."""
    kind = schema.kind
    name = schema.name
    if kind == "boolean":
        if not isinstance(value, bool):
            yield f"{name}: expected boolean, got {type(value).__name__}"
    elif kind == "integer":
        if not isinstance(value, int) or isinstance(value, bool):
            yield f"{name}: expected integer, got {type(value).__name__}"
        elif schema.minimum is not None and value < schema.minimum:
            yield f"{name}: {value} below minimum {schema.minimum}"
        elif schema.maximum is not None and value > schema.maximum:
            yield f"{name}: {value} above maximum {schema.maximum}"
    elif kind == "float":
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            yield f"{name}: expected number, got {type(value).__name__}"
        elif schema.minimum is not None and value < schema.minimum:
            yield f"{name}: {value} below minimum {schema.minimum}"
        elif schema.maximum is not None and value > schema.maximum:
            yield f"{name}: {value} above maximum {schema.maximum}"
    elif kind == "string":
        if not isinstance(value, str):
            yield f"{name}: expected string, got {type(value).__name__}"
    elif kind == "color":
        if not isinstance(value, str) or not _COLOR_RE.match(value):
            yield f"{name}: expected #RRGGBB or #RRGGBBAA color, got {value!r}"
    elif kind == "enum":
        if value not in schema.domain:
            yield f"{name}: {value!r} not in {list(schema.domain)}"
    elif kind == "multi-select-enum":
        if not isinstance(value, list) or any(v not in schema.domain for v in value):
            yield f"{name}: {value!r} not a subset of {list(schema.domain)}"
    elif kind == "vector3":
        ok = isinstance(value, (list, tuple)) and len(value) == 3 and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        )
        if not ok:
            yield f"{name}: expected [x, y, z], got {value!r}"
    elif kind == "pose":
        ok = (
            isinstance(value, dict)
            and isinstance(value.get("position"), list)
            and len(value["position"]) == 3
            and isinstance(value.get("orientation"), list)
            and len(value["orientation"]) == 4
        )
        if not ok:
            yield f"{name}: expected {{position:[3], orientation:[4]}}, got {value!r}"
    elif kind == "anchor":
        if not isinstance(value, str):
            yield f"{name}: expected anchor id, got {type(value).__name__}"
        elif workstation is not None and value not in workstation.anchors:
            yield f"{name}: dangling anchor reference {value!r}"
    elif kind == "agent":
        if not isinstance(value, str):
            yield f"{name}: expected agent id, got {type(value).__name__}"
        elif workstation is not None and value not in workstation.agents:
            yield f"{name}: dangling agent reference {value!r}"
    elif kind == "condition":
        if not isinstance(value, str):
            yield f"{name}: expected condition id, got {type(value).__name__}"
        elif workstation is not None:
            target = workstation.components.get(value)
            if target is None:
                yield f"{name}: dangling condition reference {value!r}"
            elif target.category != "condition":
                yield f"{name}: {value!r} is not a condition"


def validate_component(desc, reg: Registry = None, workstation=None) -> list:
    """Return a list of violation strings; empty means the descriptor is ok."""
    reg = reg or _REGISTRY
    spec = reg.lookup(desc.kind, desc.category)
    if spec is None:
        return [f"unknown kind {desc.kind!r}"]
    violations = []
    if desc.category != spec.category:
        violations.append(f"category {desc.category!r} does not match spec {spec.category!r}")
    known = {p.name for p in spec.properties}
    for name in desc.properties:
        if name not in known:
            violations.append(f"unknown property {name!r} for kind {desc.kind!r}")
    for schema in spec.properties:
        if schema.name not in desc.properties:
            if schema.required:
                violations.append(f"missing required property {schema.name!r}")
            continue
        violations.extend(_check_value(schema, desc.properties[schema.name], workstation))
    return violations
