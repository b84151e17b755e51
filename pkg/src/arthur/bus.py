"""Pub/sub transport with MQTT-style topics and JSON envelopes.

Two backends share one interface:

  * InProcessBus — deterministic, synchronous delivery for tests and the
    scenario runner (virtual-clock friendly, no threads).
  * MqttBus (see mqtt.py) — speaks MQTT 3.1.1 against an external broker.

Topic filters support MQTT wildcards: `+` matches one level, `#` matches
any remainder.  Delivery is per-topic FIFO per publisher; retained
messages are replayed to late subscribers (latest payload only).
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field

_TOPIC_LEVEL_RE = re.compile(r"^[^/#+\x00]+$")


class TopicError(ValueError):
    """Malformed topic or filter."""


class TransportError(RuntimeError):
    """Backend unavailable or over capacity; retry may help."""


class SubscriberLagError(TransportError):
    """Internal delivery queue overflowed; a subscriber is too slow."""


@dataclass(frozen=True)
class Envelope:
    topic: str
    payload: object           # parsed JSON document (dict/list/scalar) or None
    retained: bool = False
    publisher: str = ""
    seq: int = 0


def validate_topic(topic: str):
    if not topic or topic.startswith("/") or topic.endswith("/"):
        raise TopicError(f"malformed topic {topic!r}")
    for level in topic.split("/"):
        if not _TOPIC_LEVEL_RE.match(level):
            raise TopicError(f"malformed topic {topic!r}")


def validate_filter(flt: str):
    if not flt:
        raise TopicError("empty filter")
    levels = flt.split("/")
    for i, level in enumerate(levels):
        if level == "#":
            if i != len(levels) - 1:
                raise TopicError(f"'#' must be last in {flt!r}")
        elif level != "+" and not _TOPIC_LEVEL_RE.match(level):
            raise TopicError(f"malformed filter {flt!r}")


def topic_matches(flt: str, topic: str) -> bool:
    f_levels = flt.split("/")
    t_levels = topic.split("/")
    for i, f in enumerate(f_levels):
        if f == "#":
            return True
        if i >= len(t_levels):
            return False
        if f != "+" and f != t_levels[i]:
            return False
    return len(f_levels) == len(t_levels)


class Subscription:
    def __init__(self, bus, flt, callback):
        self.bus = bus
        self.filter = flt
        self.callback = callback
        self.active = True

    def unsubscribe(self):
        self.active = False
        self.bus._subscriptions = [s for s in self.bus._subscriptions if s is not self]


class InProcessBus:
    """Synchronous single-process broker.

    publish() enqueues and pumps a bounded FIFO, so delivery order is the
    global publish order even when callbacks publish reentrantly.
    """

    MAX_QUEUE = 100_000

    def __init__(self):
        self._subscriptions = []
        self._retained = {}      # topic -> Envelope
        self._seq = {}           # publisher -> counter
        self._queue = deque()
        self._pumping = False

    # -- backend interface -------------------------------------------------

    def publish(self, topic, payload, retained=False, publisher=""):
        validate_topic(topic)
        seq = self._seq.get(publisher, 0) + 1
        self._seq[publisher] = seq
        env = Envelope(topic=topic, payload=payload, retained=retained,
                       publisher=publisher, seq=seq)
        if retained:
            if payload is None:
                self._retained.pop(topic, None)  # empty retained payload clears
            else:
                self._retained[topic] = env
        if len(self._queue) >= self.MAX_QUEUE:
            raise SubscriberLagError("delivery queue overflow")
        self._queue.append(env)
        self._pump()

    def subscribe(self, flt, callback) -> Subscription:
        validate_filter(flt)
        sub = Subscription(self, flt, callback)
        self._subscriptions.append(sub)
        # replay the latest retained payload per matching topic
        for topic in sorted(self._retained):
            if topic_matches(flt, topic):
                callback(self._retained[topic])
        return sub

    def close(self):
        self._subscriptions.clear()
        self._queue.clear()

    # -- internals ----------------------------------------------------------

    def _pump(self):
        if self._pumping:
            return
        self._pumping = True
        try:
            while self._queue:
                env = self._queue.popleft()
                for sub in list(self._subscriptions):
                    if sub.active and topic_matches(sub.filter, env.topic):
                        sub.callback(env)
        finally:
            self._pumping = False


class Collector:
    """Test helper: subscription that records envelopes."""

    def __init__(self, bus, flt):
        self.envelopes = []
        self.subscription = bus.subscribe(flt, self.envelopes.append)

    @property
    def topics(self):
        return [e.topic for e in self.envelopes]

    @property
    def payloads(self):
        return [e.payload for e in self.envelopes]


# canonical topic scheme -----------------------------------------------------

def config_topic(ws, category, entity_id):
    return f"arthur/{ws}/config/{category}/{entity_id}"


def deleted_topic(ws, entity_id):
    return f"arthur/{ws}/config/deleted/{entity_id}"


def robot_state_topic(ws, agent):
    return f"arthur/{ws}/robot/{agent}/state"


def input_events_topic(ws):
    return f"arthur/{ws}/events/input"


def action_events_topic(ws):
    return f"arthur/{ws}/events/action"


def condition_events_topic(ws):
    return f"arthur/{ws}/events/condition"


def task_status_topic(ws, task_id):
    return f"arthur/{ws}/task/{task_id}/status"


def zone_topic(ws, zone_id):
    return f"arthur/{ws}/zone/{zone_id}"


def service_status_topic(ws, name):
    return f"arthur/{ws}/service/{name}/status"


def user_pose_topic(ws):
    return f"arthur/{ws}/user/pose"


def rpc_topic(service, agent, direction):
    return f"rpc/{service}/{agent}/{direction}"
