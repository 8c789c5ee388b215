"""Lightweight stand-ins for the simulator so MAC and DSR can be driven by hand."""

import heapq
import itertools
import random

import numpy as np
import pytest

from shadowsim.mac import DcfMac, MacParams


class FakeSim:
    def __init__(self, n=8, trace_nav=False):
        self.now = 0
        self.trace_nav = trace_nav
        self.armed = np.zeros(n, dtype=bool)
        self.waiting = np.zeros(n, dtype=bool)
        self.idle = [True] * n
        self.transmissions = []  # (time, node, frame)
        self.originated, self.received, self.dropped = [], [], []
        self._queue = []
        self._seq = itertools.count()

    def schedule(self, at, action, target, handler, *args):
        assert at >= self.now, "event scheduled in the past"
        heapq.heappush(self._queue, (at, next(self._seq), handler, args))

    def start_transmission(self, tx, frame):
        self.transmissions.append((self.now, tx, frame))
        return self.now + frame.tx_time

    def medium_idle(self, node_id):
        return self.idle[node_id]

    def run_until(self, t):
        while self._queue and self._queue[0][0] <= t:
            at, _, handler, args = heapq.heappop(self._queue)
            self.now = at
            handler(*args)
        self.now = max(self.now, t)

    def data_originated(self, pkt):
        self.originated.append(pkt)

    def data_received(self, pkt):
        self.received.append(pkt)

    def data_dropped(self, pkt, cause):
        self.dropped.append((pkt, cause))


class FakeNode:
    def __init__(self):
        self.delivered, self.ok, self.failures, self.queue_drops = [], [], [], []

    def mac_deliver(self, frame):
        self.delivered.append(frame)

    def mac_tx_ok(self, frame):
        self.ok.append(frame)

    def mac_link_failure(self, frame, cause):
        self.failures.append((frame, cause))

    def mac_queue_drop(self, frame):
        self.queue_drops.append(frame)


class FakeMac:
    """Records what DSR hands to the MAC."""

    def __init__(self, params=None):
        self.p = params or MacParams()
        self.frames = []

    def enqueue(self, frame):
        self.frames.append(frame)
        return True

    def drop_queued(self, predicate):
        dropped = [f for f in self.frames if predicate(f)]
        self.frames = [f for f in self.frames if not predicate(f)]
        return dropped


@pytest.fixture
def fake_sim():
    return FakeSim()


@pytest.fixture
def make_mac():
    def factory(node_id=0, params=None, sim=None, seed=0):
        sim = sim or FakeSim()
        node = FakeNode()
        mac = DcfMac(node_id, params or MacParams(), sim, node, random.Random(seed))
        return mac, sim, node

    return factory
