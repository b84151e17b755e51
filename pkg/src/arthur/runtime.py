"""Service supervisor: wires all services to one bus and drives them with a
virtual clock (deterministic, used by tests and scenario runs) or wall
time (the `up` command)."""

from __future__ import annotations

import time

from .assembly import AssemblyService
from .authoring import AuthoringService
from .bus import InProcessBus
from .conditions import ConditionEngine
from .preview import PreviewService
from .robot import RobotSimAdapter
from .scene import SceneClient

TICK_S = 0.05  # 20 Hz evaluation cadence


class VirtualClock:
    def __init__(self, start=0.0):
        self.now = start

    def __call__(self):
        return self.now

    def advance(self, dt):
        self.now += dt


class Runtime:
    """One bus, one workstation, all services; tick order is fixed so runs
    with identical seeds/timelines are byte-identical."""

    def __init__(self, ws_id="ws1", bus=None, clock=None, store_path=None,
                 recordings_dir=None):
        self.bus = bus or InProcessBus()
        self.clock = clock or VirtualClock()
        self.ws_id = ws_id
        self.authoring = AuthoringService(
            self.bus, ws_id, clock=self.clock, store_path=store_path
        )
        self.assembly = AssemblyService(self.bus, ws_id, clock=self.clock)
        self.preview = PreviewService(
            self.bus, ws_id, clock=self.clock, recordings_dir=recordings_dir
        )
        self.engine = ConditionEngine(self.bus, ws_id, clock=self.clock)
        self.robots = {}
        self.scene_clients = {}

    def add_robot(self, agent_id, **kwargs):
        adapter = RobotSimAdapter(self.bus, self.ws_id, agent_id, self.clock, **kwargs)
        self.robots[agent_id] = adapter
        return adapter

    def add_scene_client(self, client_id="scene"):
        client = SceneClient(self.bus, self.ws_id, client_id=client_id, clock=self.clock)
        self.scene_clients[client_id] = client
        return client

    def services(self):
        yield self.authoring
        yield self.assembly
        yield self.preview
        for robot in self.robots.values():
            yield robot
        yield self.engine  # evaluated last so it sees this tick's world

    def service_names(self):
        names = [
            self.authoring.SERVICE_NAME,
            self.assembly.SERVICE_NAME,
            self.preview.SERVICE_NAME,
            self.engine.SERVICE_NAME,
        ]
        names += [robot.service_name for robot in self.robots.values()]
        return names

    def tick(self):
        now = self.clock()
        for service in self.services():
            service.tick(now)

    def advance(self, duration, tick=TICK_S):
        """Virtual-clock stepping; only meaningful with a VirtualClock."""
        steps = int(round(duration / tick))
        for _ in range(steps):
            self.clock.advance(tick)
            self.tick()

    def run_wall_clock(self, duration=None, tick=TICK_S):
        start = time.monotonic()
        while duration is None or time.monotonic() - start < duration:
            self.tick()
            time.sleep(tick)

    def close(self):
        for client in self.scene_clients.values():
            client.close()
        self.engine.close()
        self.preview.close()
        self.assembly.close()
        self.authoring.close()
        for robot in self.robots.values():
            robot.close()


class WallClock:
    def __init__(self):
        self._start = time.monotonic()

    def __call__(self):
        return time.monotonic() - self._start
