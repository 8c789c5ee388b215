"""Simplified IEEE 802.11 DCF: carrier sensing, NAV, backoff, RTS/CTS/DATA/ACK.

One :class:`DcfMac` per node. The MAC never touches the event queue or the
channel directly; it calls back into the simulator handle it was built with
(``sim``), which must provide ``now``, ``schedule``, ``start_transmission``,
``medium_idle`` and the upper-layer hooks on the owning node.

All times inside the MAC are integer nanoseconds so that slot boundaries and
same-instant events compare exactly.
"""

from __future__ import annotations

import enum
import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Optional

NS_PER_S = 1_000_000_000
BROADCAST = -1

RTS_BYTES = 20
CTS_BYTES = 14
ACK_BYTES = 14
MAC_HEADER_BYTES = 28  # header + FCS on every MPDU carrying a network packet


def to_ns(seconds: float) -> int:
    return int(round(seconds * NS_PER_S))


class FrameKind(str, enum.Enum):
    RTS = "RTS"
    CTS = "CTS"
    DATA = "DATA"
    ACK = "ACK"
    RREQ = "RREQ"
    RREP = "RREP"
    RERR = "RERR"


CONTROL_KINDS = frozenset({FrameKind.RTS, FrameKind.CTS, FrameKind.ACK})


class Phase(str, enum.Enum):
    IDLE = "idle"
    DIFS_WAIT = "difs_wait"
    BACKOFF = "backoff"
    AWAIT_CTS = "await_cts"
    AWAIT_ACK = "await_ack"
    TRANSMITTING = "transmitting"
    NAV_BLOCKED = "nav_blocked"


_WAITING = frozenset({Phase.BACKOFF, Phase.NAV_BLOCKED})


@dataclass(frozen=True)
class MacParams:
    slot_time: float = 20e-6
    sifs: float = 10e-6
    difs: float = 50e-6
    cw_min: int = 31
    cw_max: int = 1023
    long_retry_limit: int = 7
    short_retry_limit: int = 7
    data_rate: float = 2e6  # bit/s
    rts_threshold: int = 0  # bytes; unicast frames larger than this use RTS/CTS
    phy_overhead: float = 192e-6  # preamble + PLCP header per frame
    queue_limit: int = 50

    def __post_init__(self):
        if not (self.difs > self.sifs > 0):
            raise ValueError("need difs > sifs > 0")
        if abs(self.difs - (self.sifs + 2 * self.slot_time)) > 1e-12:
            raise ValueError("difs must equal sifs + 2 * slot_time")
        if not (0 < self.cw_min <= self.cw_max):
            raise ValueError("need 0 < cw_min <= cw_max")
        if self.long_retry_limit < 1 or self.short_retry_limit < 1:
            raise ValueError("retry limits must be >= 1")
        if self.data_rate <= 0:
            raise ValueError("data_rate must be positive")
        if self.queue_limit < 1:
            raise ValueError("queue_limit must be >= 1")

    def tx_time_ns(self, nbytes: int) -> int:
        return to_ns(self.phy_overhead) + int(round(nbytes * 8 * NS_PER_S / self.data_rate))


_uids = itertools.count()


@dataclass(eq=False)
class Frame:
    """Anything put on the air. ``duration_ns`` is the NAV reservation carried in the header."""

    kind: FrameKind
    src: int
    dst: int
    payload_bytes: int
    tx_time: int  # ns
    duration_ns: int = 0
    routing_payload: Any = None
    seq: int = 0
    uid: int = field(default_factory=lambda: next(_uids))

    @property
    def is_broadcast(self) -> bool:
        return self.dst == BROADCAST


def cw_sequence(params: MacParams, n: int) -> list[int]:
    """First ``n`` contention windows of the doubling rule ``cw -> 2 (cw + 1) - 1``."""
    out = [params.cw_min]
    while len(out) < n:
        out.append(min(params.cw_max, 2 * (out[-1] + 1) - 1))
    return out


@dataclass
class MacState:
    phase: Phase = Phase.IDLE
    nav_expiry: int = 0
    backoff_slots_remaining: Optional[int] = None
    contention_window: int = 31
    retry_count: int = 0
    current_frame: Optional[Frame] = None


@dataclass
class MacCounters:
    drop_ifq: int = 0
    drop_retry: int = 0
    drop_collision: int = 0  # frames lost to overlap at their intended receiver
    drop_subthreshold: int = 0  # frames below Pth at their intended receiver
    tx_frames: int = 0
    retransmissions: int = 0
    max_retry_seen: int = 0  # largest retry count reached; a max, not a sum


class DcfMac:
    """DCF state machine for one node.

    Upper layer hooks on ``node``: ``mac_deliver(frame)`` for received
    network frames, ``mac_tx_ok(frame)``, ``mac_link_failure(frame, cause)``
    after retry exhaustion and ``mac_queue_drop(frame)`` on ifq overflow.
    """

    def __init__(self, node_id: int, params: MacParams, sim, node, rng):
        self.id = node_id
        self.p = params
        self.sim = sim
        self.node = node
        self.rng = rng
        self.state = MacState(contention_window=params.cw_min)
        self.queue: deque[Frame] = deque()
        self.counters = MacCounters()
        self.nav_history: list[int] = []  # only filled when sim.trace_nav is set
        self._slot = to_ns(params.slot_time)
        self._sifs = to_ns(params.sifs)
        self._difs = to_ns(params.difs)
        self._rts_time = params.tx_time_ns(RTS_BYTES)
        self._cts_time = params.tx_time_ns(CTS_BYTES)
        self._ack_time = params.tx_time_ns(ACK_BYTES)
        self._timer_token = 0
        self._timer_at: Optional[int] = None
        self._count_start = 0
        self._timeout_token = 0
        self._seq = 0
        self._last_seq_from: dict[int, int] = {}
        self._responding = False
        # why the last attempt of the current exchange failed, as seen by the channel
        self.last_loss = "retry"

    def _set_phase(self, phase: Phase):
        self.state.phase = phase
        self.sim.waiting[self.id] = self._timer_at is None and phase in _WAITING

    def _set_timer(self, at: Optional[int]):
        self._timer_at = at
        self.sim.armed[self.id] = at is not None
        self.sim.waiting[self.id] = at is None and self.state.phase in _WAITING

    # ------------------------------------------------------------------ queue

    def enqueue(self, frame: Frame) -> bool:
        if frame.src != self.id:
            raise ValueError(f"frame source {frame.src} is not node {self.id}")
        if len(self.queue) >= self.p.queue_limit:
            self.counters.drop_ifq += 1
            self.node.mac_queue_drop(frame)
            return False
        self.queue.append(frame)
        st = self.state
        if st.phase is Phase.IDLE and st.current_frame is None and self._timer_at is None:
            self._begin_access()
        return True

    def _begin_access(self):
        st = self.state
        now = self.sim.now
        if self.medium_busy(now):
            if st.backoff_slots_remaining is None:
                self.start_backoff(self.rng)
            self._set_phase(Phase.NAV_BLOCKED if now < st.nav_expiry else Phase.BACKOFF)
        else:
            self._arm(now)

    # --------------------------------------------------------------- sensing

    def medium_busy(self, now: int) -> bool:
        return now < self.state.nav_expiry or not self.sim.medium_idle(self.id)

    def set_nav(self, until: int):
        st = self.state
        if until <= st.nav_expiry:
            return
        st.nav_expiry = until
        if self.sim.trace_nav:
            self.nav_history.append(until)
        self.sim.schedule(until, "mac_timer", self.id, self._nav_end, until)
        self.medium_became_busy(self.sim.now)

    def _nav_end(self, until: int):
        if until == self.state.nav_expiry:
            self.medium_became_idle(self.sim.now)

    def _wants_medium(self) -> bool:
        st = self.state
        if st.phase in (Phase.AWAIT_CTS, Phase.AWAIT_ACK, Phase.TRANSMITTING):
            return False
        return bool(self.queue) or st.current_frame is not None or st.backoff_slots_remaining is not None

    def medium_became_busy(self, now: int):
        """Freeze a running DIFS/backoff countdown, keeping the slots not yet consumed."""
        if self._timer_at is None or self._timer_at == now:
            # a countdown ending this very instant has already committed to transmit
            return
        st = self.state
        if st.backoff_slots_remaining is None:
            # medium went busy before access: contend with a random backoff
            self._timer_token += 1
            self._set_timer(None)
            self.start_backoff(self.rng)
        elif now > self._count_start and st.backoff_slots_remaining:
            used = (now - self._count_start) // self._slot
            st.backoff_slots_remaining = max(0, st.backoff_slots_remaining - used)
        self._timer_token += 1
        self._set_timer(None)
        self._set_phase(Phase.NAV_BLOCKED if now < st.nav_expiry else Phase.BACKOFF)

    def medium_became_idle(self, now: int):
        if self._timer_at is not None or not self._wants_medium():
            return
        if self.medium_busy(now):
            return
        self._arm(now)

    def _arm(self, now: int):
        st = self.state
        slots = st.backoff_slots_remaining or 0
        self._count_start = now + self._difs
        fire = self._count_start + slots * self._slot
        self._timer_token += 1
        self._set_timer(fire)
        self._set_phase(Phase.DIFS_WAIT)
        self.sim.schedule(fire, "mac_timer", self.id, self._access_timer, self._timer_token)

    # --------------------------------------------------------------- backoff

    def start_backoff(self, rng):
        st = self.state
        st.backoff_slots_remaining = rng.randint(0, st.contention_window)
        self._set_phase(Phase.BACKOFF)

    def _grow_cw(self):
        st = self.state
        st.contention_window = min(self.p.cw_max, 2 * (st.contention_window + 1) - 1)

    def _access_timer(self, token: int):
        if token != self._timer_token:
            return
        self._set_timer(None)
        st = self.state
        st.backoff_slots_remaining = None
        if st.current_frame is None:
            if not self.queue:
                self._set_phase(Phase.IDLE)
                return
            st.current_frame = self.queue[0]
        self._send_current()

    # ------------------------------------------------------------- transmit

    def _uses_rts(self, frame: Frame) -> bool:
        return not frame.is_broadcast and frame.payload_bytes > self.p.rts_threshold

    def _retry_limit(self, frame: Frame) -> int:
        return self.p.long_retry_limit if self._uses_rts(frame) else self.p.short_retry_limit

    def _send_current(self):
        st = self.state
        frame = st.current_frame
        self.last_loss = "retry"
        if st.retry_count > 0:
            self.counters.retransmissions += 1
        if frame.is_broadcast:
            self._set_phase(Phase.TRANSMITTING)
            self._transmit(frame)
            return
        if self._uses_rts(frame):
            dur = 3 * self._sifs + self._cts_time + frame.tx_time + self._ack_time
            rts = Frame(FrameKind.RTS, self.id, frame.dst, RTS_BYTES, self._rts_time, duration_ns=dur)
            self._set_phase(Phase.AWAIT_CTS)
            end = self._transmit(rts)
            self._arm_timeout(end + self._sifs + self._cts_time + self._slot)
        else:
            self._send_data()

    def _send_data(self):
        st = self.state
        frame = st.current_frame
        frame.duration_ns = self._sifs + self._ack_time
        if frame.seq == 0:
            self._seq += 1
            frame.seq = self._seq
        self._set_phase(Phase.AWAIT_ACK)
        end = self._transmit(frame)
        self._arm_timeout(end + self._sifs + self._ack_time + self._slot)

    def _transmit(self, frame: Frame) -> int:
        self.counters.tx_frames += 1
        return self.sim.start_transmission(self.id, frame)

    def _arm_timeout(self, at: int):
        self._timeout_token += 1
        self.sim.schedule(at, "mac_timer", self.id, self._timeout_fired, self._timeout_token)

    def _timeout_fired(self, token: int):
        if token == self._timeout_token and self.state.phase in (Phase.AWAIT_CTS, Phase.AWAIT_ACK):
            self.on_timeout(self.sim.now)

    def on_timeout(self, now: int):
        st = self.state
        frame = st.current_frame
        st.retry_count += 1
        self.counters.max_retry_seen = max(self.counters.max_retry_seen, st.retry_count)
        if st.retry_count < self._retry_limit(frame):
            self._grow_cw()
            self._set_phase(Phase.BACKOFF)
            self.start_backoff(self.rng)
            self._after_exchange(now, keep_frame=True)
            return
        self.counters.drop_retry += 1
        cause = self.last_loss
        self._finish_frame()
        self.node.mac_link_failure(frame, cause)
        self._after_exchange(now)

    def _finish_frame(self):
        st = self.state
        if self.queue and self.queue[0] is st.current_frame:
            self.queue.popleft()
        st.current_frame = None
        st.retry_count = 0
        st.contention_window = self.p.cw_min
        self._timeout_token += 1

    def _after_exchange(self, now: int, keep_frame: bool = False):
        st = self.state
        if not keep_frame:
            # post-transmission backoff with a fresh window
            self.start_backoff(self.rng)
        if self.medium_busy(now):
            self._set_phase(Phase.NAV_BLOCKED if now < st.nav_expiry else Phase.BACKOFF)
        else:
            self._arm(now)

    def drop_queued(self, predicate) -> list[Frame]:
        """Remove queued frames (not the one in service) matching ``predicate``."""
        st = self.state
        keep, dropped = deque(), []
        for f in self.queue:
            if f is not st.current_frame and predicate(f):
                dropped.append(f)
            else:
                keep.append(f)
        self.queue = keep
        return dropped

    # ------------------------------------------------------------- channel

    def on_tx_end(self, frame: Frame):
        """Called by the channel when this node finishes putting ``frame`` on air."""
        if frame.kind in (FrameKind.CTS, FrameKind.ACK):
            self._responding = False
            return
        st = self.state
        if frame.is_broadcast and frame is st.current_frame:
            self._finish_frame()
            self.node.mac_tx_ok(frame)
            self._after_exchange(self.sim.now)

    def on_frame_received(self, frame: Frame, now: int) -> list[tuple[int, str]]:
        """React to a frame that passed the reception test. Returns scheduled actions."""
        st = self.state
        if frame.dst != self.id and not frame.is_broadcast:
            if frame.duration_ns:
                self.set_nav(now + frame.duration_ns)
            return []
        kind = frame.kind
        if kind is FrameKind.RTS:
            if now < st.nav_expiry or self._responding or st.phase in (
                Phase.AWAIT_CTS, Phase.AWAIT_ACK, Phase.TRANSMITTING
            ):
                return []
            dur = frame.duration_ns - self._sifs - self._cts_time
            cts = Frame(FrameKind.CTS, self.id, frame.src, CTS_BYTES, self._cts_time, duration_ns=dur)
            return [self._respond(now + self._sifs, cts)]
        if kind is FrameKind.CTS:
            if st.phase is Phase.AWAIT_CTS and st.current_frame is not None and frame.src == st.current_frame.dst:
                self._timeout_token += 1
                self._set_phase(Phase.TRANSMITTING)
                self.sim.schedule(now + self._sifs, "mac_timer", self.id, self._send_data_checked, st.current_frame)
                return [(now + self._sifs, "DATA")]
            return []
        if kind is FrameKind.ACK:
            if st.phase is Phase.AWAIT_ACK and st.current_frame is not None and frame.src == st.current_frame.dst:
                done = st.current_frame
                self._finish_frame()
                self.node.mac_tx_ok(done)
                self._after_exchange(now)
            return []
        # network-layer MPDU
        if frame.is_broadcast:
            self.node.mac_deliver(frame)
            return []
        ack = Frame(FrameKind.ACK, self.id, frame.src, ACK_BYTES, self._ack_time)
        actions = [self._respond(now + self._sifs, ack)]
        if self._last_seq_from.get(frame.src) != frame.seq:
            self._last_seq_from[frame.src] = frame.seq
            self.node.mac_deliver(frame)
        return actions

    def _send_data_checked(self, frame: Frame):
        if self.state.current_frame is frame and self.state.phase is Phase.TRANSMITTING:
            self._send_data()

    def _respond(self, at: int, frame: Frame) -> tuple[int, str]:
        self._responding = True
        self.sim.schedule(at, "mac_timer", self.id, self._transmit_response, frame)
        return (at, frame.kind.value)

    def _transmit_response(self, frame: Frame):
        self._transmit(frame)
