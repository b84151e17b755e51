"""Simulated 6-DOF robot and its bus adapter.

Outbound: periodic state samples (joints, TCP from forward kinematics,
run state, sensors).  Inbound: task polling / progress over request-response
envelopes, and play-pause / acknowledge / move-mode action events.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field
from importlib import resources

from . import bus as topics
from .geometry import InvalidPoseError, Pose, quat_from_matrix
from .model import Task

RUN_STATE_TRANSITIONS = {
    # internal machine; "move-mode" publishes as paused with hand_guiding set
    ("stopped", "play-pause"): "playing",
    ("playing", "play-pause"): "paused",
    ("paused", "play-pause"): "playing",
    ("move-mode", "play-pause"): "paused",
    ("playing", "move-mode"): "move-mode",
    ("paused", "move-mode"): "move-mode",
    ("move-mode", "move-mode"): "paused",
    ("playing", "stop"): "stopped",
    ("paused", "stop"): "stopped",
}


def _mat_mult(a, b):
    return [
        [sum(a[i][k] * b[k][j] for k in range(4)) for j in range(4)]
        for i in range(4)
    ]


def dh_matrix(a, d, alpha, theta):
    ct, st = math.cos(theta), math.sin(theta)
    ca, sa = math.cos(alpha), math.sin(alpha)
    return [
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ]


@dataclass
class RobotModel:
    name: str
    dh: list                      # rows of {a, d, alpha, theta_offset}
    joint_limits: list
    max_joint_speed: list
    home: list

    @staticmethod
    def from_json(doc):
        return RobotModel(
            name=doc["name"],
            dh=list(doc["dh"]),
            joint_limits=[tuple(l) for l in doc["joint_limits"]],
            max_joint_speed=list(doc["max_joint_speed"]),
            home=list(doc["home"]),
        )

    @staticmethod
    def load(name="ur5e"):
        text = resources.files("arthur.data").joinpath(f"{name}.json").read_text()
        return RobotModel.from_json(json.loads(text))

    def fk(self, q) -> Pose:
        """Tool-center-point pose for joint vector q (radians)."""
        if len(q) != len(self.dh):
            raise ValueError(f"expected {len(self.dh)} joints, got {len(q)}")
        for v in q:
            if not math.isfinite(v):
                raise InvalidPoseError(f"non-finite joint value {v!r}")
        t = [[1.0 if i == j else 0.0 for j in range(4)] for i in range(4)]
        for row, theta in zip(self.dh, q):
            t = _mat_mult(
                t, dh_matrix(row["a"], row["d"], row["alpha"], theta + row["theta_offset"])
            )
        rotation = [r[:3] for r in t[:3]]
        return Pose(
            position=(t[0][3], t[1][3], t[2][3]),
            orientation=quat_from_matrix(rotation),
        )


def fk(q, model=None) -> Pose:
    return (model or RobotModel.load()).fk(q)


def _task_target_q(model, task_id):
    """Deterministic joint target for a task: a stable pseudo-random offset
    from home, so every run of a task traces the same trajectory."""
    seed = zlib.crc32(task_id.encode())
    q = []
    for i, home in enumerate(model.home):
        lo, hi = model.joint_limits[i]
        span = 0.35
        frac = ((seed >> (i * 4)) & 0xFF) / 255.0
        q.append(max(lo, min(hi, home + (frac - 0.5) * 2.0 * span)))
    return q


@dataclass
class _ActiveMove:
    task: Task
    target: list
    initial_distance: float
    samples_emitted: int = 0


class RobotSimAdapter:
    SERVICE_NAME_PREFIX = "robot-sim"
    HEARTBEAT_PERIOD_S = 2.0

    def __init__(self, bus, ws_id, agent_id, clock, model=None, rate_hz=10.0,
                 require_acknowledge=True, sensor_profiles=None, initial_state="stopped"):
        if not (1.0 <= rate_hz <= 125.0):
            raise ValueError(f"rate {rate_hz} Hz outside [1, 125]")
        self.bus = bus
        self.ws_id = ws_id
        self.agent_id = agent_id
        self.clock = clock
        self.model = model or RobotModel.load()
        self.rate_hz = rate_hz
        self.require_acknowledge = require_acknowledge
        # per-task scripted sensor traces, e.g. {"pressure": [0.1, 0.2, ...]}
        self.sensor_profiles = sensor_profiles or {}
        self.q = list(self.model.home)
        self.run_state = initial_state
        self.assistance = False
        self.acknowledged = not require_acknowledge
        self.move = None
        self._last_sample_time = None
        self._last_tick_time = None
        self._last_heartbeat = None
        self._sample_seq = 0
        self._rpc_seq = 0
        self._pending_response = None
        self._subs = [
            bus.subscribe(topics.action_events_topic(ws_id), self._on_action_event),
            bus.subscribe(
                topics.rpc_topic("assembly", agent_id, "response"), self._on_rpc_response
            ),
            bus.subscribe(
                topics.rpc_topic("assembly", agent_id, "revoke"), self._on_revoke
            ),
        ]

    @property
    def service_name(self):
        return f"{self.SERVICE_NAME_PREFIX}-{self.agent_id}"

    def close(self):
        for sub in self._subs:
            sub.unsubscribe()

    @property
    def published_run_state(self):
        return "paused" if self.run_state == "move-mode" else self.run_state

    @property
    def moving(self):
        return self.run_state == "playing" and self.move is not None

    # -- state machine ------------------------------------------------------------

    def apply(self, command):
        """Apply a state-machine command; unknown transitions are ignored."""
        nxt = RUN_STATE_TRANSITIONS.get((self.run_state, command))
        if nxt is not None:
            self.run_state = nxt
        return self.run_state

    def handle_action(self, kind, properties):
        if kind in ("robot-play-pause", "global-play-pause"):
            self.apply("play-pause")
        elif kind == "robot-acknowledge":
            self.acknowledged = True
        elif kind == "robot-move-mode":
            self.apply("move-mode")

    def _on_action_event(self, env):
        doc = env.payload
        if not isinstance(doc, dict):
            return
        kind = doc.get("kind", "")
        props = doc.get("properties", {})
        if kind == "global-play-pause":
            self.handle_action(kind, props)
        elif kind in ("robot-play-pause", "robot-acknowledge", "robot-move-mode"):
            if props.get("agent") == self.agent_id:
                self.handle_action(kind, props)

    # -- motion / stream tick ---------------------------------------------------------

    def tick(self, now):
        dt = 0.0 if self._last_tick_time is None else now - self._last_tick_time
        self._last_tick_time = now
        if self.run_state == "playing":
            if self.move is None:
                self._try_dispatch()
            if self.move is not None and dt > 0.0:
                self._advance(dt)
        if self._last_sample_time is None or now - self._last_sample_time >= (1.0 / self.rate_hz) - 1e-9:
            self._last_sample_time = now
            self._publish_sample(now)
        if self._last_heartbeat is None or now - self._last_heartbeat >= self.HEARTBEAT_PERIOD_S:
            self._last_heartbeat = now
            self.bus.publish(
                topics.service_status_topic(self.ws_id, self.service_name),
                {"state": "ok", "timestamp": now},
                retained=True,
                publisher=self.service_name,
            )

    def _try_dispatch(self):
        if self.require_acknowledge and not self.acknowledged:
            return
        self._rpc_seq += 1
        self._pending_response = None
        self.bus.publish(
            topics.rpc_topic("assembly", self.agent_id, "request"),
            {"op": "next_task", "request_id": self._rpc_seq},
            publisher=self.service_name,
        )
        response = self._pending_response
        self._pending_response = None
        if not response or response.get("request_id") != self._rpc_seq:
            return
        task_doc = response.get("task")
        if task_doc is None:
            return
        task = Task.from_json(task_doc)
        target = _task_target_q(self.model, task.id)
        dist = max(abs(t - c) for t, c in zip(target, self.q))
        self.move = _ActiveMove(task=task, target=target, initial_distance=max(dist, 1e-9))
        self.acknowledged = not self.require_acknowledge

    def _advance(self, dt):
        move = self.move
        done = True
        for i in range(len(self.q)):
            step = self.model.max_joint_speed[i] * dt
            delta = move.target[i] - self.q[i]
            if abs(delta) <= step:
                self.q[i] = move.target[i]
            else:
                self.q[i] += math.copysign(step, delta)
                done = False
        remaining = max(abs(t - c) for t, c in zip(move.target, self.q))
        fraction = 1.0 - remaining / move.initial_distance
        self._rpc_seq += 1
        self.bus.publish(
            topics.rpc_topic("assembly", self.agent_id, "request"),
            {
                "op": "progress",
                "request_id": self._rpc_seq,
                "task_id": move.task.id,
                "fraction": round(max(0.0, min(1.0, fraction)), 6),
                "done": done,
            },
            publisher=self.service_name,
        )
        self._pending_response = None
        if done:
            self.move = None

    def _sensors(self):
        if self.move is None:
            return {}
        values = {}
        for name, profile in self.sensor_profiles.items():
            if not profile:
                continue
            idx = min(self.move.samples_emitted, len(profile) - 1)
            values[name] = profile[idx]
        return values

    def _publish_sample(self, now):
        tcp = self.model.fk(self.q)
        self._sample_seq += 1
        sample = {
            "timestamp_ms": int(round(now * 1000.0)),
            "seq": self._sample_seq,
            "joints": [round(v, 12) for v in self.q],
            "tcp": tcp.to_json(),
            "run_state": self.published_run_state,
            "hand_guiding": self.run_state == "move-mode",
            "moving": self.moving,
            "sensors": self._sensors(),
            "assistance": self.assistance,
            "task_id": self.move.task.id if self.move else "",
        }
        if self.move is not None:
            self.move.samples_emitted += 1
        self.bus.publish(
            topics.robot_state_topic(self.ws_id, self.agent_id),
            sample,
            publisher=self.service_name,
        )
        return sample

    # -- rpc plumbing --------------------------------------------------------------------

    def _on_rpc_response(self, env):
        self._pending_response = env.payload

    def _on_revoke(self, env):
        doc = env.payload or {}
        if self.move is not None and self.move.task.id == doc.get("task_id"):
            self.move = None
