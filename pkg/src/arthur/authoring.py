"""Authoring service: the single writer for workstation configuration.

Every committed mutation bumps the revision and republishes the affected
entity on its retained config topic, so any late-joining client can
reconstruct the full configuration from retained messages alone.
"""

from __future__ import annotations

import json
import math
import os

from . import bus as topics
from .geometry import Pose, compose
from .model import (
    Agent,
    Anchor,
    Binding,
    ComponentDescriptor,
    Part,
    Task,
    Tool,
    Tracker,
    Workstation,
    canonical_json,
)
from .registry import INTERACTIVE_FEEDBACK, registry, validate_component

PHASES = ("configuration", "refinement", "operation")

FAKE_DATA_KINDS = ("path", "waypoints", "zones", "messages")

HEARTBEAT_PERIOD_S = 2.0


class UnknownEntityError(KeyError):
    pass


class ValidationError(ValueError):
    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


class PhaseError(RuntimeError):
    pass


class DependencyError(ValueError):
    def __init__(self, message, dependents=()):
        super().__init__(message)
        self.dependents = list(dependents)


class LoadError(ValueError):
    """Workstation file is corrupt; message names the offending path."""


_ENTITY_CATEGORY = {
    Agent: "agent",
    Tracker: "tracker",
    Anchor: "anchor",
    Tool: "tool",
    Part: "part",
    Task: "task",
    Binding: "binding",
}


class AuthoringService:
    SERVICE_NAME = "authoring"

    def __init__(self, bus, ws_id, name="", clock=None, store_path=None):
        self.bus = bus
        self.clock = clock or (lambda: 0.0)
        self.store_path = store_path
        self.workstation = Workstation(id=ws_id, name=name or ws_id)
        self.phase = "configuration"
        self._id_seq = 0
        self._last_heartbeat = None
        self._action_sub = bus.subscribe(
            topics.action_events_topic(ws_id), self._on_action_event
        )
        self._rpc_sub = bus.subscribe(
            topics.rpc_topic("authoring", "+", "request"), self._on_rpc
        )
        self._publish_all()

    @property
    def ws_id(self):
        return self.workstation.id

    def close(self):
        self._action_sub.unsubscribe()
        self._rpc_sub.unsubscribe()

    # -- lifecycle -------------------------------------------------------------

    def tick(self, now):
        if self._last_heartbeat is None or now - self._last_heartbeat >= HEARTBEAT_PERIOD_S:
            self._last_heartbeat = now
            self.bus.publish(
                topics.service_status_topic(self.ws_id, self.SERVICE_NAME),
                {"state": "ok", "timestamp": now, "revision": self.workstation.revision},
                retained=True,
                publisher=self.SERVICE_NAME,
            )

    def set_phase(self, phase):
        if phase not in PHASES:
            raise ValueError(f"invalid phase {phase!r}")
        self.phase = phase
        self._publish_meta()

    def _require_structural_phase(self):
        if self.phase == "operation":
            raise PhaseError("structural changes are frozen in the operation phase")

    # -- component CRUD ----------------------------------------------------------

    def create_component(self, kind, properties, category=None, component_id=None,
                         implicit=False, created_by=""):
        self._require_structural_phase()
        spec = registry().lookup(kind, category)
        if spec is None:
            raise ValidationError([f"unknown kind {kind!r}"])
        desc = ComponentDescriptor(
            id=component_id or self._new_id(kind),
            kind=kind,
            category=spec.category,
            properties=dict(properties),
            implicit=implicit,
            created_by=created_by,
        )
        violations = validate_component(desc, registry(), self.workstation)
        if violations:
            raise ValidationError(violations)
        self.workstation.components[desc.id] = desc
        self._commit(desc)
        if spec.category == "feedback" and kind in INTERACTIVE_FEEDBACK and not implicit:
            cond_kind = INTERACTIVE_FEEDBACK[kind]
            self.create_component(
                cond_kind,
                {"feedback": desc.id},
                category="condition",
                implicit=True,
                created_by=desc.id,
            )
        return desc.id

    def update_property(self, component_id, name, value):
        desc = self.workstation.components.get(component_id)
        if desc is None:
            raise UnknownEntityError(component_id)
        candidate = ComponentDescriptor.from_json(desc.to_json())
        candidate.properties[name] = value
        violations = validate_component(candidate, registry(), self.workstation)
        if violations:
            raise ValidationError(violations)
        self.workstation.components[component_id] = candidate
        self._commit(candidate)
        return self.workstation.revision

    def delete_component(self, component_id):
        self._require_structural_phase()
        desc = self.workstation.components.get(component_id)
        if desc is None:
            raise UnknownEntityError(component_id)
        del self.workstation.components[component_id]
        self._tombstone(desc)
        # implicit conditions created by this feedback are cascade-deleted;
        # explicit components that reference it are kept but flagged invalid
        cascade = [
            c.id for c in self.workstation.components.values()
            if c.implicit and c.created_by == component_id
        ]
        for cid in cascade:
            child = self.workstation.components.pop(cid)
            self._tombstone(child)
            self._drop_bindings(cid)
        self._drop_bindings(component_id)
        for other in list(self.workstation.components.values()):
            if self._references(other, component_id) and not other.invalid:
                flagged = ComponentDescriptor.from_json(other.to_json())
                flagged.invalid = True
                self.workstation.components[other.id] = flagged
                self._commit(flagged, bump=False)
        return self.workstation.revision

    def set_enabled(self, component_id, enabled):
        desc = self.workstation.components.get(component_id)
        if desc is None:
            raise UnknownEntityError(component_id)
        if desc.enabled == enabled:
            return self.workstation.revision
        updated = ComponentDescriptor.from_json(desc.to_json())
        updated.enabled = enabled
        self.workstation.components[component_id] = updated
        self._commit(updated)
        return self.workstation.revision

    def _references(self, desc, target_id):
        spec = registry().lookup(desc.kind, desc.category)
        if spec is None:
            return False
        for schema in spec.properties:
            if schema.kind == "condition" and desc.properties.get(schema.name) == target_id:
                return True
        if desc.properties.get("feedback") == target_id:
            return True
        return False

    def _drop_bindings(self, component_id):
        doomed = [
            b.id for b in self.workstation.bindings.values()
            if b.condition_id == component_id or b.action_id == component_id
        ]
        for bid in doomed:
            binding = self.workstation.bindings.pop(bid)
            self._tombstone(binding, category="binding")

    # -- entity CRUD -------------------------------------------------------------

    def add_agent(self, agent: Agent):
        self._require_structural_phase()
        if agent.role == "robot":
            if agent.tracker_id and agent.tracker_id not in self.workstation.trackers:
                raise DependencyError(f"unknown tracker {agent.tracker_id!r}")
        self.workstation.agents[agent.id] = agent
        self._commit(agent)
        return agent.id

    def add_tracker(self, tracker: Tracker):
        self._require_structural_phase()
        root = Anchor(
            id=tracker.root_anchor_id or f"{tracker.id}-root",
            label=f"{tracker.label or tracker.id} root",
            parent_type="tracker",
            parent_id=tracker.id,
        )
        tracker.root_anchor_id = root.id
        self.workstation.trackers[tracker.id] = tracker
        self.workstation.anchors[root.id] = root
        self._commit(tracker, bump=False)
        self._commit(root)
        return tracker.id

    def add_anchor(self, anchor: Anchor):
        self._require_structural_phase()
        if anchor.parent_type == "anchor" and anchor.parent_id not in self.workstation.anchors:
            raise DependencyError(f"unknown parent anchor {anchor.parent_id!r}")
        if anchor.parent_type == "tracker" and anchor.parent_id not in self.workstation.trackers:
            raise DependencyError(f"unknown tracker {anchor.parent_id!r}")
        self.workstation.anchors[anchor.id] = anchor
        self._commit(anchor)
        return anchor.id

    def update_anchor_pose(self, anchor_id, pose: Pose):
        anchor = self.workstation.anchors.get(anchor_id)
        if anchor is None:
            raise UnknownEntityError(anchor_id)
        anchor.local_pose = pose
        self._commit(anchor)
        return self.workstation.revision

    def remove_tracker(self, tracker_id):
        self._require_structural_phase()
        tracker = self.workstation.trackers.get(tracker_id)
        if tracker is None:
            raise UnknownEntityError(tracker_id)
        dependents = [
            a.id for a in self.workstation.anchors.values()
            if a.parent_type == "tracker" and a.parent_id == tracker_id
        ]
        dependents += [
            a.id for a in self.workstation.agents.values()
            if a.role == "robot" and a.tracker_id == tracker_id
        ]
        if dependents:
            raise DependencyError(
                f"tracker {tracker_id!r} has dependents", dependents=dependents
            )
        del self.workstation.trackers[tracker_id]
        self._tombstone(tracker, category="tracker")
        return self.workstation.revision

    def remove_anchor(self, anchor_id):
        self._require_structural_phase()
        anchor = self.workstation.anchors.get(anchor_id)
        if anchor is None:
            raise UnknownEntityError(anchor_id)
        dependents = [
            a.id for a in self.workstation.anchors.values()
            if a.parent_type == "anchor" and a.parent_id == anchor_id
        ]
        if dependents:
            raise DependencyError(f"anchor {anchor_id!r} has dependents", dependents=dependents)
        del self.workstation.anchors[anchor_id]
        self._tombstone(anchor, category="anchor")
        return self.workstation.revision

    def add_tool(self, tool: Tool):
        self._require_structural_phase()
        self._check_anchor_ref(tool.anchor_id)
        self.workstation.tools[tool.id] = tool
        self._commit(tool)
        return tool.id

    def add_part(self, part: Part):
        self._require_structural_phase()
        self._check_anchor_ref(part.anchor_id)
        self.workstation.parts[part.id] = part
        self._commit(part)
        return part.id

    def add_task(self, task: Task):
        self._require_structural_phase()
        for ref in task.part_ids:
            if ref not in self.workstation.parts:
                raise DependencyError(f"unknown part {ref!r}")
        for ref in task.tool_ids:
            if ref not in self.workstation.tools:
                raise DependencyError(f"unknown tool {ref!r}")
        self.workstation.tasks[task.id] = task
        self._commit(task)
        return task.id

    def add_binding(self, binding: Binding):
        self._require_structural_phase()
        for ref, want in ((binding.condition_id, "condition"), (binding.action_id, "action")):
            comp = self.workstation.components.get(ref)
            if comp is None or comp.category != want:
                raise DependencyError(f"binding references missing {want} {ref!r}")
        self.workstation.bindings[binding.id] = binding
        self._commit(binding)
        return binding.id

    def _check_anchor_ref(self, anchor_id):
        if anchor_id and anchor_id not in self.workstation.anchors:
            raise DependencyError(f"unknown anchor {anchor_id!r}")

    # -- set-position routing ------------------------------------------------------

    def set_position(self, entity_id, pose: Pose):
        if self.phase != "refinement":
            raise PhaseError("set_position is only routed in the refinement phase")
        if entity_id in self.workstation.anchors:
            return self.update_anchor_pose(entity_id, pose)
        desc = self.workstation.components.get(entity_id)
        if desc is None:
            raise UnknownEntityError(entity_id)
        spec = registry().lookup(desc.kind, desc.category)
        if spec is None or spec.schema("pose") is None:
            raise DependencyError(f"{desc.kind!r} placement is fixed and cannot be set")
        return self.update_property(entity_id, "pose", pose.to_json())

    # -- persistence ----------------------------------------------------------------

    def snapshot(self) -> str:
        return canonical_json(
            {"workstation": self.workstation.to_json(), "phase": self.phase}
        )

    def save(self, path=None):
        path = path or self.store_path
        with open(path, "w") as fh:
            fh.write(self.snapshot())
        return path

    def load(self, path=None):
        path = path or self.store_path
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise LoadError(f"{path}: {exc}") from exc
        try:
            ws = Workstation.from_json(doc["workstation"])
        except (KeyError, TypeError, ValueError) as exc:
            raise LoadError(f"{path}: workstation: {exc}") from exc
        for comp in ws.components.values():
            if registry().lookup(comp.kind, comp.category) is None:
                raise LoadError(
                    f"{path}: components/{comp.id}: unknown kind {comp.kind!r}"
                )
        self.workstation = ws
        self.phase = doc.get("phase", "configuration")
        self._publish_all()
        return ws

    # -- fake data --------------------------------------------------------------------

    def generate_fake_data(self, kind, seed=0):
        if kind not in FAKE_DATA_KINDS:
            raise ValueError(f"unsupported fake-data kind {kind!r}")
        robots = sorted(
            a.id for a in self.workstation.agents.values() if a.role == "robot"
        )
        agent = robots[0] if robots else "robot"
        if kind == "zones":
            return self._fake_zone(agent)
        if kind == "path":
            return self._fake_path(agent, samples=50)
        if kind == "waypoints":
            return self._fake_path(agent, samples=8)
        return self._fake_messages(seed)

    def _robot_base_pose(self, agent_id) -> Pose:
        agent = self.workstation.agents.get(agent_id)
        if agent is not None and agent.tracker_id in self.workstation.trackers:
            tracker = self.workstation.trackers[agent.tracker_id]
            return compose(tracker.world_pose, agent.mount_pose)
        return Pose()

    def _fake_zone(self, agent_id):
        base = self._robot_base_pose(agent_id)
        cx, cy, cz = base.position
        points = []
        for i in range(16):
            theta = 2.0 * math.pi * i / 16
            points.append([cx + math.cos(theta), cy + math.sin(theta), cz])
        payload = {"zone_id": "fake-zone", "points": points}
        self.bus.publish(
            topics.zone_topic(self.ws_id, "fake-zone"),
            payload,
            publisher=self.SERVICE_NAME,
        )
        return payload

    def _fake_path(self, agent_id, samples):
        base = self._robot_base_pose(agent_id)
        cx, cy, cz = base.position
        points = []
        stamps = []
        for i in range(samples):
            theta = math.pi * i / max(samples - 1, 1)
            points.append([cx + 0.5 * math.cos(theta), cy + 0.5 * math.sin(theta), cz + 0.3])
            stamps.append(round(i * 0.1, 3))
        payload = {
            "agent_id": agent_id,
            "task_id": "fake",
            "revision": 0,
            "points": points,
            "timestamps": stamps,
        }
        self.bus.publish(
            f"arthur/{self.ws_id}/preview/{agent_id}",
            payload,
            retained=True,
            publisher=self.SERVICE_NAME,
        )
        return payload

    def _fake_messages(self, seed):
        texts = [f"fake message {seed}-{i}" for i in range(3)]
        now = self.clock()
        for i, text in enumerate(texts):
            self.bus.publish(
                topics.input_events_topic(self.ws_id),
                {
                    "type": "message",
                    "target": "fake",
                    "source": "",
                    "timestamp": now,
                    "payload": {"text": text},
                },
                publisher=self.SERVICE_NAME,
            )
        return {"texts": texts}

    # -- bus integration ------------------------------------------------------------------

    def _on_action_event(self, env):
        doc = env.payload
        if not isinstance(doc, dict) or doc.get("kind") != "toggle-feedback":
            return
        props = doc.get("properties", {})
        target = props.get("feedback", "")
        desc = self.workstation.components.get(target)
        if desc is None:
            return
        mode = props.get("mode", "toggle")
        if mode == "show":
            self.set_enabled(target, True)
        elif mode == "hide":
            self.set_enabled(target, False)
        else:
            self.set_enabled(target, not desc.enabled)

    def _on_rpc(self, env):
        """Mutation endpoint for remote clients (scene client, web gateway)."""
        client_id = env.topic.split("/")[2]
        doc = env.payload or {}
        op = doc.get("op", "")
        response = {"request_id": doc.get("request_id", 0), "op": op, "ok": True}
        try:
            response["result"] = self._execute_rpc(op, doc)
        except Exception as exc:  # surfaced to the caller, service state intact
            response["ok"] = False
            response["error"] = str(exc)
            response["error_class"] = type(exc).__name__
        self.bus.publish(
            topics.rpc_topic("authoring", client_id, "response"),
            response,
            publisher=self.SERVICE_NAME,
        )

    def _execute_rpc(self, op, doc):
        if op == "create_component":
            return self.create_component(
                doc["kind"], doc.get("properties", {}), category=doc.get("category")
            )
        if op == "update_property":
            return self.update_property(doc["id"], doc["name"], doc["value"])
        if op == "delete_component":
            return self.delete_component(doc["id"])
        if op == "set_enabled":
            return self.set_enabled(doc["id"], bool(doc["enabled"]))
        if op == "set_position":
            return self.set_position(doc["entity_id"], Pose.from_json(doc["pose"]))
        if op == "set_phase":
            self.set_phase(doc["phase"])
            return doc["phase"]
        if op == "generate_fake_data":
            return self.generate_fake_data(doc["kind"], seed=doc.get("seed", 0))
        if op == "add_agent":
            return self.add_agent(Agent.from_json(doc["agent"]))
        if op == "add_tracker":
            return self.add_tracker(Tracker.from_json(doc["tracker"]))
        if op == "add_anchor":
            return self.add_anchor(Anchor.from_json(doc["anchor"]))
        if op == "add_tool":
            return self.add_tool(Tool.from_json(doc["tool"]))
        if op == "add_part":
            return self.add_part(Part.from_json(doc["part"]))
        if op == "add_task":
            return self.add_task(Task.from_json(doc["task"]))
        if op == "add_binding":
            return self.add_binding(Binding.from_json(doc["binding"]))
        if op == "remove_tracker":
            return self.remove_tracker(doc["id"])
        if op == "remove_anchor":
            return self.remove_anchor(doc["id"])
        if op == "snapshot":
            return json.loads(self.snapshot())
        if op == "registry":
            from .registry import registry as _registry

            return [spec.to_json() for spec in _registry().all()]
        raise ValueError(f"unknown op {op!r}")

    def _new_id(self, kind):
        self._id_seq += 1
        return f"{kind}-{self._id_seq}"

    def _entity_category(self, entity):
        if isinstance(entity, ComponentDescriptor):
            return entity.category
        return _ENTITY_CATEGORY[type(entity)]

    def _commit(self, entity, bump=True):
        if bump:
            self.workstation.revision += 1
        category = self._entity_category(entity)
        self.bus.publish(
            topics.config_topic(self.ws_id, category, entity.id),
            entity.to_json(),
            retained=True,
            publisher=self.SERVICE_NAME,
        )
        self._publish_meta()

    def _tombstone(self, entity, category=None):
        self.workstation.revision += 1
        category = category or self._entity_category(entity)
        # clear the retained config message, then announce the deletion
        self.bus.publish(
            topics.config_topic(self.ws_id, category, entity.id),
            None,
            retained=True,
            publisher=self.SERVICE_NAME,
        )
        self.bus.publish(
            topics.deleted_topic(self.ws_id, entity.id),
            {"id": entity.id, "category": category},
            publisher=self.SERVICE_NAME,
        )
        self._publish_meta()

    def _publish_meta(self):
        self.bus.publish(
            topics.config_topic(self.ws_id, "workstation", self.ws_id),
            {
                "id": self.ws_id,
                "name": self.workstation.name,
                "revision": self.workstation.revision,
                "phase": self.phase,
            },
            retained=True,
            publisher=self.SERVICE_NAME,
        )

    def _publish_all(self):
        ws = self.workstation
        for group in (ws.agents, ws.trackers, ws.anchors, ws.components,
                      ws.tools, ws.parts, ws.tasks, ws.bindings):
            for entity in group.values():
                self._commit(entity, bump=False)
        self._publish_meta()


class ConfigReplica:
    """Client-side mirror of the workstation built purely from config topics."""

    def __init__(self, bus, ws_id):
        self.ws_id = ws_id
        self.workstation = Workstation(id=ws_id)
        self.phase = "configuration"
        self._sub = bus.subscribe(f"arthur/{ws_id}/config/#", self._on_config)

    def close(self):
        self._sub.unsubscribe()

    def _group_for(self, category):
        ws = self.workstation
        return {
            "agent": (ws.agents, Agent),
            "tracker": (ws.trackers, Tracker),
            "anchor": (ws.anchors, Anchor),
            "feedback": (ws.components, ComponentDescriptor),
            "action": (ws.components, ComponentDescriptor),
            "condition": (ws.components, ComponentDescriptor),
            "tool": (ws.tools, Tool),
            "part": (ws.parts, Part),
            "task": (ws.tasks, Task),
            "binding": (ws.bindings, Binding),
        }.get(category)

    def _on_config(self, env):
        parts = env.topic.split("/")
        category, entity_id = parts[3], parts[4]
        if category == "workstation":
            doc = env.payload or {}
            self.workstation.name = doc.get("name", self.workstation.name)
            self.workstation.revision = doc.get("revision", self.workstation.revision)
            self.phase = doc.get("phase", self.phase)
            return
        if category == "deleted":
            doc = env.payload or {}
            group = self._group_for(doc.get("category", ""))
            if group is not None:
                group[0].pop(entity_id, None)
            return
        group = self._group_for(category)
        if group is None:
            return
        store, cls = group
        if env.payload is None:
            store.pop(entity_id, None)
        else:
            store[entity_id] = cls.from_json(env.payload)
