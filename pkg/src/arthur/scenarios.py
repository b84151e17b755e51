"""Scripted end-to-end scenarios with deterministic traces.

Each scenario builds a workstation, runs a timeline on the in-process bus
with a virtual clock, and returns a line-oriented trace that is compared
against a reviewed golden log.
"""

from __future__ import annotations

import math
from importlib import resources

from . import bus as topics
from .geometry import Pose
from .model import Agent, Binding, Part, Task, Tracker
from .robot import RobotModel
from .runtime import Runtime, VirtualClock

SCENARIO_IDS = (1, 2, 3)


class TraceRecorder:
    """Collects action firings, task transitions, and robot state changes."""

    def __init__(self, bus, ws_id, clock):
        self.clock = clock
        self.lines = []
        self._task_status = {}
        self._robot_state = {}
        self._subs = [
            bus.subscribe(topics.action_events_topic(ws_id), self._on_action),
            bus.subscribe(f"arthur/{ws_id}/task/+/status", self._on_task),
            bus.subscribe(f"arthur/{ws_id}/robot/+/state", self._on_robot),
        ]

    def close(self):
        for sub in self._subs:
            sub.unsubscribe()

    def note(self, text):
        self.lines.append(f"t={self.clock():.2f} {text}")

    def _on_action(self, env):
        doc = env.payload or {}
        self.note(f"action-fired {doc.get('kind')} id={doc.get('action_id')}")

    def _on_task(self, env):
        doc = env.payload or {}
        task_id = doc.get("task_id", "")
        status = doc.get("status", "")
        if self._task_status.get(task_id) != status:
            self._task_status[task_id] = status
            self.note(f"task {task_id} -> {status}")

    def _on_robot(self, env):
        doc = env.payload or {}
        agent = env.topic.split("/")[3]
        state = doc.get("run_state", "")
        if self._robot_state.get(agent) != state:
            self._robot_state[agent] = state
            self.note(f"robot {agent} state={state}")

    def text(self):
        return "\n".join(self.lines) + "\n"


def _publish_zone_ring(bus, ws_id, zone_id, center, radius, count=16):
    """Stand-in for an external safety-zone service that publishes a series
    of points around the robot."""
    cx, cy, cz = center
    points = [
        [
            round(cx + radius * math.cos(2 * math.pi * i / count), 6),
            round(cy + radius * math.sin(2 * math.pi * i / count), 6),
            cz,
        ]
        for i in range(count)
    ]
    bus.publish(
        topics.zone_topic(ws_id, zone_id),
        {"zone_id": zone_id, "points": points},
        publisher="zone-service",
    )


def _slow_model(max_speed=0.6):
    model = RobotModel.load()
    model.max_joint_speed = [max_speed] * len(model.max_joint_speed)
    return model


def _base_workstation(rt, robot_id="ur5", operator_id="op"):
    auth = rt.authoring
    auth.add_tracker(Tracker(id="t1", label="table"))
    auth.add_agent(Agent(id=operator_id, role="operator", name="Operator", skill_level=2))
    auth.add_agent(
        Agent(id=robot_id, role="robot", name="UR5e", robot_type="ur5e", tracker_id="t1")
    )
    return auth


# -- scenario 1: replicated button/zone/status setup -----------------------------


def build_scenario_1(rt):
    auth = _base_workstation(rt)
    from .model import Anchor

    button_positions = {
        "green": (0.4, 0.2, 0.0),
        "red": (0.4, -0.2, 0.0),
        "yellow": (0.4, 0.4, 0.0),
        "blue": (0.4, 0.0, 0.0),
    }
    colors = {"green": "#00FF00", "red": "#FF0000", "yellow": "#FFFF00", "blue": "#0000FF"}
    for name, pos in button_positions.items():
        auth.add_anchor(
            Anchor(id=f"a-{name}", parent_type="tracker", parent_id="t1",
                   local_pose=Pose.from_translation(*pos))
        )
    auth.add_anchor(
        Anchor(id="a-panel", parent_type="tracker", parent_id="t1",
               local_pose=Pose.from_translation(-0.3, 0.6, 0.4))
    )

    buttons = {}
    for name in ("green", "red", "yellow", "blue"):
        buttons[name] = auth.create_component(
            "indicator-3d",
            {"shape": "sphere", "color": colors[name], "anchor": f"a-{name}"},
            component_id=f"btn-{name}",
        )
    pokes = {
        name: next(
            c.id for c in auth.workstation.components.values()
            if c.implicit and c.created_by == buttons[name]
        )
        for name in buttons
    }

    auth.create_component(
        "zone", {"zone-id": "z1", "color": "#FF8000", "anchor": "t1-root"},
        component_id="safety-zone",
    )
    auth.create_component(
        "task-image", {"anchor": "a-panel"}, component_id="status-panel"
    )
    auth.create_component(
        "robot-state", {"agent": "ur5", "anchor": "a-panel"}, component_id="robot-state-panel"
    )

    auth.create_component(
        "and", {"operand-1": pokes["green"], "operand-2": pokes["blue"]},
        component_id="cond-start",
    )
    auth.create_component(
        "and", {"operand-1": pokes["yellow"], "operand-2": pokes["blue"]},
        component_id="cond-confirm",
    )
    auth.create_component(
        "robot-acknowledge", {"agent": "ur5"}, component_id="act-ack"
    )
    auth.create_component(
        "robot-play-pause", {"agent": "ur5"}, component_id="act-playpause"
    )
    auth.create_component(
        "complete-task", {"agent": "op"}, component_id="act-complete"
    )
    auth.add_binding(Binding(id="b-start", condition_id="cond-start", action_id="act-ack"))
    auth.add_binding(
        Binding(id="b-stop", condition_id=pokes["red"], action_id="act-playpause")
    )
    auth.add_binding(
        Binding(id="b-confirm", condition_id="cond-confirm", action_id="act-complete")
    )

    auth.add_part(Part(id="p-plate", name="plate"))
    auth.add_task(Task(id="task-1", name="pick plate", description="Robot picks the base plate",
                       agent_id="ur5", order=0, part_ids=["p-plate"]))
    auth.add_task(Task(id="task-2", name="insert pins", description="Operator inserts the pins",
                       agent_id="op", order=1, predecessors=["task-1"]))
    auth.add_task(Task(id="task-3", name="fasten bolts", description="Robot fastens the bolts",
                       agent_id="ur5", order=2, predecessors=["task-2"]))
    return buttons


def run_scenario_1(seed=0):
    rt = Runtime(ws_id="s1")
    try:
        build_scenario_1(rt)
        rt.add_robot("ur5", model=_slow_model(), rate_hz=20.0,
                     require_acknowledge=True, initial_state="playing")
        scene = rt.add_scene_client("hmd")
        recorder = TraceRecorder(rt.bus, "s1", rt.clock)
        rt.assembly.load_sequence(rt.authoring.workstation)
        rt.authoring.set_phase("operation")

        base = rt.authoring._robot_base_pose("ur5")
        _publish_zone_ring(rt.bus, "s1", "z1", base.position, 1.2)
        rt.advance(0.25)
        recorder.note("checkpoint " + _node_line(scene, "safety-zone"))
        recorder.note("checkpoint " + _node_line(scene, "status-panel"))
        recorder.note("checkpoint " + _node_line(scene, "robot-state-panel"))

        # enable + start poked together -> robot acknowledge -> task-1 dispatched
        scene.inject("poke", "btn-blue")
        scene.inject("poke", "btn-green")
        rt.advance(1.0)
        recorder.note("checkpoint " + _node_line(scene, "robot-state-panel"))

        # stop button toggles play/pause mid-motion, then resumes
        scene.inject("poke", "btn-red")
        rt.advance(0.5)
        recorder.note("checkpoint " + _node_line(scene, "robot-state-panel"))
        scene.inject("poke", "btn-red")
        rt.advance(2.0)

        # operator task is now active; confirm + enable completes it
        recorder.note("checkpoint " + _node_line(scene, "status-panel"))
        scene.inject("poke", "btn-blue")
        scene.inject("poke", "btn-yellow")
        rt.advance(0.5)

        # acknowledge again so the robot runs the final task
        scene.inject("poke", "btn-blue")
        scene.inject("poke", "btn-green")
        rt.advance(3.0)
        recorder.note(f"progress={rt.assembly.progress():.2f}")
        recorder.note("checkpoint " + _node_line(scene, "safety-zone"))
        return recorder.text()
    finally:
        rt.close()


# -- scenario 2: switching motion-intent visualizations --------------------------


def build_scenario_2(rt):
    auth = _base_workstation(rt)
    variants = {
        "view-path": ("robot-path", {"agent": "ur5", "width": 0.02, "color": "#00A0FF"}),
        "view-waypoints": ("robot-waypoints", {"agent": "ur5"}),
        "view-silhouette": ("robot-silhouette", {"agent": "ur5"}),
    }
    for fid, (kind, props) in variants.items():
        auth.create_component(kind, props, component_id=fid)
    for i, fid in enumerate(("view-path", "view-waypoints", "view-silhouette"), start=1):
        auth.create_component(
            "workstation-button", {"button": f"btn-{i}"}, component_id=f"cond-btn-{i}"
        )
        for other in variants:
            mode = "show" if other == fid else "hide"
            auth.create_component(
                "toggle-feedback", {"feedback": other, "mode": mode},
                component_id=f"act-{i}-{mode}-{other}",
            )
            auth.add_binding(
                Binding(
                    id=f"b-{i}-{other}",
                    condition_id=f"cond-btn-{i}",
                    action_id=f"act-{i}-{mode}-{other}",
                )
            )
    # only the path variant starts visible
    auth.set_enabled("view-waypoints", False)
    auth.set_enabled("view-silhouette", False)
    return variants


def run_scenario_2(seed=0):
    rt = Runtime(ws_id="s2")
    try:
        build_scenario_2(rt)
        rt.add_robot("ur5", model=_slow_model(), rate_hz=20.0, require_acknowledge=False)
        scene = rt.add_scene_client("hmd")
        recorder = TraceRecorder(rt.bus, "s2", rt.clock)
        rt.authoring.generate_fake_data("path")
        rt.authoring.set_phase("operation")
        rt.advance(0.25)

        def checkpoint():
            nodes = scene.scene()
            visible = sorted(
                fid for fid in ("view-path", "view-waypoints", "view-silhouette")
                if nodes[fid].visible
            )
            recorder.note(f"visible={','.join(visible) or 'none'}")

        checkpoint()
        for i in (2, 3, 1, 3):
            scene.inject("button", f"btn-{i}")
            rt.advance(0.5)
            checkpoint()
        return recorder.text()
    finally:
        rt.close()


# -- scenario 3: sensor value visualization ---------------------------------------

PRESSURE_PROFILE = [0.0, 0.1, 0.25, 0.45, 0.7, 0.85, 0.9, 0.88, 0.86, 0.85, 0.6, 0.3, 0.1, 0.0]


def build_scenario_3(rt):
    auth = _base_workstation(rt)
    from .model import Anchor

    auth.add_anchor(
        Anchor(id="a-gauge", parent_type="tracker", parent_id="t1",
               local_pose=Pose.from_translation(0.0, 0.5, 0.5))
    )
    auth.create_component(
        "robot-sensor",
        {"agent": "ur5", "sensor": "pressure", "anchor": "a-gauge",
         "minimum": 0.0, "maximum": 1.0},
        component_id="pressure-gauge",
    )
    auth.add_task(Task(id="task-sand", name="sanding", description="Robot sands the surface",
                       agent_id="ur5", order=0))


def run_scenario_3(seed=0):
    rt = Runtime(ws_id="s3")
    try:
        build_scenario_3(rt)
        rt.add_robot(
            "ur5", model=_slow_model(0.25), rate_hz=20.0, require_acknowledge=False,
            initial_state="playing", sensor_profiles={"pressure": PRESSURE_PROFILE},
        )
        scene = rt.add_scene_client("hmd")
        recorder = TraceRecorder(rt.bus, "s3", rt.clock)
        rt.assembly.load_sequence(rt.authoring.workstation)
        rt.authoring.set_phase("operation")

        values = []
        for _ in range(40):
            rt.advance(0.05)
            view = scene.store.robots.get("ur5")
            if view is not None and "pressure" in view.sensors:
                node = scene.scene()["pressure-gauge"]
                values.append(node.data)
        for value in values:
            recorder.note(f"sensor {value}")
        recorder.note(f"progress={rt.assembly.progress():.2f}")
        return recorder.text()
    finally:
        rt.close()


def _node_line(scene_client, feedback_id):
    dump = scene_client.dump_scene()
    for line in dump.splitlines():
        if line.startswith(feedback_id + " "):
            return line
    return f"{feedback_id} missing"


_RUNNERS = {1: run_scenario_1, 2: run_scenario_2, 3: run_scenario_3}


def run_scenario(number, seed=0) -> str:
    if number not in _RUNNERS:
        raise ValueError(f"unknown scenario {number}")
    return _RUNNERS[number](seed=seed)


def golden_trace(number) -> str:
    return resources.files("arthur.golden").joinpath(f"scenario{number}.log").read_text()
