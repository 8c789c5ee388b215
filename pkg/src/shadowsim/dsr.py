"""Dynamic Source Routing: discovery by flooding, route caches, source-routed
forwarding and route-error based maintenance.

Packets are plain objects carried as ``Frame.routing_payload``. A unicast
packet travels along an explicit node sequence; each node locates itself in
that sequence instead of trusting a hop pointer, so retransmitted copies and
late failures upstream cannot confuse the forwarding state.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

from .mac import BROADCAST, MAC_HEADER_BYTES, Frame, FrameKind, to_ns

IP_HEADER_BYTES = 20
_uids = itertools.count(1)


@dataclass(frozen=True)
class DsrParams:
    send_buffer_size: int = 64
    send_buffer_timeout: float = 30.0  # s
    discovery_timeout: float = 0.5  # s, first retry; doubles up to the cap
    discovery_timeout_max: float = 10.0
    rebroadcast_jitter: float = 0.01  # s, uniform [0, jitter] before forwarding a RREQ
    reply_from_cache: bool = True
    max_routes_per_dest: int = 32


@dataclass(eq=False)
class DataPacket:
    origin: int
    target: int
    created: int  # ns
    payload_bytes: int
    route: tuple = ()
    holder: int = -1  # index in ``route`` of the furthest node known to hold the packet
    terminal: Optional[str] = None
    uid: int = field(default_factory=lambda: next(_uids))


@dataclass(eq=False)
class RouteRequest:
    origin: int
    seq: int
    target: int
    record: tuple

    @property
    def request_id(self) -> tuple[int, int]:
        return (self.origin, self.seq)


@dataclass(eq=False)
class RouteReply:
    route: tuple  # discovered route, origin ... target
    path: tuple  # hops the reply travels, replier ... origin


@dataclass(eq=False)
class RouteError:
    broken_link: tuple[int, int]
    notified: tuple  # upstream end of the broken link ... data source


def is_loop_free(route) -> bool:
    return len(set(route)) == len(route)


def route_has_link(route, a: int, b: int) -> bool:
    return any(route[i] == a and route[i + 1] == b for i in range(len(route) - 1))


class RouteCache:
    """Per-node path cache keyed by destination."""

    def __init__(self, owner: int, max_per_dest: int = 32):
        self.owner = owner
        self.max_per_dest = max_per_dest
        self._routes: dict[int, list[list]] = {}  # dest -> [[route, valid], ...]

    def add(self, route) -> bool:
        route = tuple(route)
        if len(route) < 2 or route[0] != self.owner or not is_loop_free(route):
            return False
        entries = self._routes.setdefault(route[-1], [])
        for entry in entries:
            if entry[0] == route:
                entry[1] = True
                return True
        entries.append([route, True])
        if len(entries) > self.max_per_dest:
            stale = next((e for e in entries if not e[1]), entries[0])
            entries.remove(stale)
        return True

    def best(self, dest: int) -> Optional[tuple]:
        """Shortest valid route; ties go to the earliest cached."""
        best = None
        for route, valid in self._routes.get(dest, ()):
            if valid and (best is None or len(route) < len(best)):
                best = route
        return best

    def routes(self, dest: int, valid_only: bool = True) -> list[tuple]:
        return [r for r, v in self._routes.get(dest, ()) if v or not valid_only]

    def invalidate_link(self, a: int, b: int) -> int:
        n = 0
        for entries in self._routes.values():
            for entry in entries:
                if entry[1] and route_has_link(entry[0], a, b):
                    entry[1] = False
                    n += 1
        return n

    def destinations(self) -> list[int]:
        return list(self._routes)


@dataclass
class DsrCounters:
    discoveries: int = 0
    rreq_sent: int = 0
    rreq_recv: int = 0
    rrep_sent: int = 0
    rrep_recv: int = 0
    rerr_sent: int = 0
    rerr_recv: int = 0


class DsrAgent:
    """DSR at one node.

    ``sim`` supplies ``now``, ``schedule``, ``data_received(pkt)`` and
    ``data_dropped(pkt, cause)``; ``mac`` is the node's :class:`DcfMac`.
    """

    def __init__(self, node_id: int, params: DsrParams, sim, mac, rng):
        self.id = node_id
        self.p = params
        self.sim = sim
        self.mac = mac
        self.rng = rng
        self.cache = RouteCache(node_id, params.max_routes_per_dest)
        self.counters = DsrCounters()
        self.send_buffer: list[DataPacket] = []
        self._seen_requests: set[tuple[int, int]] = set()
        self._replied_records: set[tuple] = set()
        self._seq = 0
        self._discovery: dict[int, list] = {}  # target -> [interval_ns, token]
        self._buffer_timeout = to_ns(params.send_buffer_timeout)

    # ------------------------------------------------------------ framing

    def _frame(self, kind: FrameKind, dst: int, payload, nbytes: int) -> Frame:
        total = nbytes + IP_HEADER_BYTES + MAC_HEADER_BYTES
        return Frame(kind, self.id, dst, total, self.mac.p.tx_time_ns(total), routing_payload=payload)

    def _send_data(self, pkt: DataPacket, route: tuple):
        pkt.route = route
        pkt.holder = 0
        self._forward(pkt, 0)

    def _forward(self, pkt: DataPacket, my_index: int):
        nbytes = pkt.payload_bytes + 4 + 4 * len(pkt.route)
        self.mac.enqueue(self._frame(FrameKind.DATA, pkt.route[my_index + 1], pkt, nbytes))

    # ---------------------------------------------------------- origination

    def originate(self, target: int, payload_bytes: int) -> DataPacket:
        if target == self.id:
            raise ValueError("payload must be destined to another node")
        pkt = DataPacket(self.id, target, self.sim.now, payload_bytes)
        self.sim.data_originated(pkt)
        self._route_or_buffer(pkt)
        return pkt

    def _route_or_buffer(self, pkt: DataPacket):
        route = self.cache.best(pkt.target)
        if route is not None:
            self._send_data(pkt, route)
            return
        self._expire_buffer()
        if len(self.send_buffer) >= self.p.send_buffer_size:
            self.sim.data_dropped(self.send_buffer.pop(0), "no_route")
        self.send_buffer.append(pkt)
        if pkt.target not in self._discovery:
            self._start_discovery(pkt.target)

    def _expire_buffer(self):
        now = self.sim.now
        if not self.send_buffer or now - self.send_buffer[0].created < self._buffer_timeout:
            return
        keep = []
        for pkt in self.send_buffer:
            if now - pkt.created >= self._buffer_timeout:
                self.sim.data_dropped(pkt, "no_route")
            else:
                keep.append(pkt)
        self.send_buffer = keep

    def _start_discovery(self, target: int):
        interval = to_ns(self.p.discovery_timeout)
        self._discovery[target] = [interval, 0]
        self.counters.discoveries += 1
        self._broadcast_request(target)

    def _broadcast_request(self, target: int):
        self._seq += 1
        rreq = RouteRequest(self.id, self._seq, target, (self.id,))
        self._seen_requests.add(rreq.request_id)
        self.counters.rreq_sent += 1
        self.mac.enqueue(self._frame(FrameKind.RREQ, BROADCAST, rreq, 8 + 4 * len(rreq.record)))
        state = self._discovery[target]
        state[1] += 1
        self.sim.schedule(self.sim.now + state[0], "mac_timer", self.id, self._discovery_timer, target, state[1])

    def _discovery_timer(self, target: int, token: int):
        state = self._discovery.get(target)
        if state is None or state[1] != token:
            return
        self._expire_buffer()
        if self.cache.best(target) is not None:
            del self._discovery[target]
            self._flush(target)
            return
        if not any(p.target == target for p in self.send_buffer):
            del self._discovery[target]
            return
        state[0] = min(2 * state[0], to_ns(self.p.discovery_timeout_max))
        self._broadcast_request(target)

    def _flush(self, target: int):
        route = self.cache.best(target)
        if route is None:
            return
        keep = []
        for pkt in self.send_buffer:
            if pkt.target == target:
                self._send_data(pkt, route)
            else:
                keep.append(pkt)
        self.send_buffer = keep

    # ------------------------------------------------------------ receive

    def receive(self, frame: Frame):
        pkt = frame.routing_payload
        kind = frame.kind
        if kind is FrameKind.RREQ:
            self.on_route_request(pkt)
        elif kind is FrameKind.RREP:
            self.on_route_reply(pkt)
        elif kind is FrameKind.RERR:
            self.on_route_error(pkt)
        elif kind is FrameKind.DATA:
            self.forward_data(pkt)

    def on_route_request(self, rreq: RouteRequest):
        self.counters.rreq_recv += 1
        if rreq.origin == self.id or self.id in rreq.record:
            return
        if rreq.target == self.id:
            # the target answers every distinct record it hears
            key = (rreq.request_id, rreq.record)
            if key in self._replied_records:
                return
            self._replied_records.add(key)
            route = rreq.record + (self.id,)
            self._send_reply(route, tuple(reversed(route)))
            return
        if rreq.request_id in self._seen_requests:
            return
        self._seen_requests.add(rreq.request_id)
        if self.p.reply_from_cache:
            cached = self.cache.best(rreq.target)
            if cached is not None and not set(cached).intersection(rreq.record):
                route = rreq.record + cached
                back = tuple(reversed(rreq.record + (self.id,)))
                self._send_reply(route, back)
                return
        fwd = RouteRequest(rreq.origin, rreq.seq, rreq.target, rreq.record + (self.id,))
        delay = to_ns(self.rng.uniform(0.0, self.p.rebroadcast_jitter))
        self.sim.schedule(self.sim.now + delay, "mac_timer", self.id, self._rebroadcast, fwd)

    def _rebroadcast(self, rreq: RouteRequest):
        self.counters.rreq_sent += 1
        self.mac.enqueue(self._frame(FrameKind.RREQ, BROADCAST, rreq, 8 + 4 * len(rreq.record)))

    def _send_reply(self, route: tuple, path: tuple):
        self.counters.rrep_sent += 1
        rrep = RouteReply(route, path)
        self._unicast(FrameKind.RREP, rrep, path, 0, 8 + 4 * len(route) + 4 * len(path))

    def _unicast(self, kind: FrameKind, pkt, path: tuple, my_index: int, nbytes: int):
        self.mac.enqueue(self._frame(kind, path[my_index + 1], pkt, nbytes))

    def on_route_reply(self, rrep: RouteReply):
        self.counters.rrep_recv += 1
        if self.id not in rrep.path:
            return
        i = rrep.path.index(self.id)
        if self.id in rrep.route:
            self.cache.add(rrep.route[rrep.route.index(self.id):])
        if i == len(rrep.path) - 1:
            target = rrep.route[-1]
            self._discovery.pop(target, None)
            self._expire_buffer()
            self._flush(target)
            return
        self._unicast(FrameKind.RREP, rrep, rrep.path, i, 8 + 4 * len(rrep.route) + 4 * len(rrep.path))

    def on_route_error(self, rerr: RouteError):
        self.counters.rerr_recv += 1
        self.cache.invalidate_link(*rerr.broken_link)
        if self.id not in rerr.notified:
            return
        i = rerr.notified.index(self.id)
        if i < len(rerr.notified) - 1:
            self.counters.rerr_sent += 1
            self._unicast(FrameKind.RERR, rerr, rerr.notified, i, 16 + 4 * len(rerr.notified))

    # ------------------------------------------------------------ data path

    def forward_data(self, pkt: DataPacket):
        if self.id not in pkt.route:
            self.sim.data_dropped(pkt, "misroute")
            return
        i = pkt.route.index(self.id)
        pkt.holder = max(pkt.holder, i)
        if i == len(pkt.route) - 1:
            self.sim.data_received(pkt)
            return
        self._forward(pkt, i)

    # --------------------------------------------------------- maintenance

    def on_link_failure(self, frame: Frame, cause: str):
        """MAC gave up on ``frame``: the link to ``frame.dst`` is considered broken."""
        next_hop = frame.dst
        self.cache.invalidate_link(self.id, next_hop)
        stranded = [frame]
        stranded += self.mac.drop_queued(lambda f: f.dst == next_hop)
        notified_sources = set()
        for k, f in enumerate(stranded):
            pkt = f.routing_payload
            if f.kind is not FrameKind.DATA:
                continue
            i = pkt.route.index(self.id)
            if pkt.holder > i:
                continue  # the next hop got it; only the acknowledgement was lost
            if k > 0 and pkt.origin == self.id:
                # still at its source: pick another route rather than drop
                self._route_or_buffer(pkt)
                continue
            self.sim.data_dropped(pkt, cause if k == 0 else "link_break")
            if pkt.origin not in notified_sources:
                notified_sources.add(pkt.origin)
                self._send_error(pkt, i, next_hop)

    def _send_error(self, pkt: DataPacket, my_index: int, next_hop: int):
        """RERR for link (self, next_hop) back along the route prefix to the packet's source."""
        if pkt.origin == self.id:
            return
        back = tuple(reversed(pkt.route[: my_index + 1]))
        self.counters.rerr_sent += 1
        rerr = RouteError((self.id, next_hop), back)
        self._unicast(FrameKind.RERR, rerr, back, 0, 16 + 4 * len(back))
