"""Discrete-event core: topology, channel dispatch, CBR traffic and metrics.

A run is single-threaded over a total event order ``(timestamp, sequence)``
with integer-nanosecond timestamps. Randomness is split into independent
streams (topology, traffic, channel, MAC, routing) spawned from the run seed,
so two runs that differ only in propagation model or MAC limits share the
same topology and connections.
"""

from __future__ import annotations

import heapq
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, NamedTuple, Optional

import numpy as np

from .analytics import RectRegion
from .dsr import DataPacket, DsrAgent, DsrParams
from .mac import DcfMac, Frame, FrameKind, MacParams, to_ns
from .propagation import TABLE1, RadioParams, mean_received_power_dbm, received_power_tworay

PROPAGATION_MODELS = ("two_ray", "shadowing")
SHADOW_MODES = ("per_frame", "per_link")
DROP_CAUSES = ("subthreshold", "collision", "retry", "ifq", "no_route", "link_break", "misroute", "in_flight")


@dataclass(frozen=True)
class ScenarioConfig:
    region: RectRegion = field(default_factory=lambda: RectRegion(300.0, 400.0))
    node_count: int = 30
    propagation: str = "shadowing"
    radio: RadioParams = TABLE1
    mac: MacParams = field(default_factory=MacParams)
    dsr: DsrParams = field(default_factory=DsrParams)
    connections: int = 5
    cbr_rate: float = 1.0  # packets/s
    payload_bytes: int = 512
    sim_duration: float = 250.0  # s
    cbr_start_max: float = 10.0  # s
    seed: int = 1
    shadow_mode: str = "per_frame"
    positions: Optional[tuple] = None  # explicit ((x, y), ...) overrides random placement
    flows: Optional[tuple] = None  # explicit ((src, dst), ...) overrides random connections

    def __post_init__(self):
        if self.node_count < 2:
            raise ValueError("node_count must be >= 2")
        if self.flows is None and not 1 <= self.connections <= self.node_count // 2:
            raise ValueError("connections must be in [1, node_count // 2]")
        if not self.sim_duration > 0:
            raise ValueError("sim_duration must be positive")
        if not self.cbr_rate > 0:
            raise ValueError("cbr_rate must be positive")
        if self.payload_bytes < 1:
            raise ValueError("payload_bytes must be >= 1")
        if self.propagation not in PROPAGATION_MODELS:
            raise ValueError(f"propagation must be one of {PROPAGATION_MODELS}")
        if self.shadow_mode not in SHADOW_MODES:
            raise ValueError(f"shadow_mode must be one of {SHADOW_MODES}")
        if self.positions is not None and len(self.positions) != self.node_count:
            raise ValueError("positions must list exactly node_count points")
        if self.flows is not None:
            for s, d in self.flows:
                if s == d or not (0 <= s < self.node_count and 0 <= d < self.node_count):
                    raise ValueError(f"bad flow {(s, d)}")

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


class Event(NamedTuple):
    timestamp: int  # ns
    sequence: int
    action: str  # frame_start_rx | frame_end_rx | mac_timer | traffic_tick | sim_end
    target: int
    handler: Callable
    args: tuple


@dataclass
class MetricsReport:
    n_sent: int = 0
    n_recvd: int = 0
    drops: dict = field(default_factory=lambda: {c: 0 for c in DROP_CAUSES})
    control: dict = field(default_factory=dict)
    mac: dict = field(default_factory=dict)
    seed: Optional[int] = None

    @property
    def delivery_ratio(self) -> float:
        return self.n_recvd / self.n_sent if self.n_sent else 0.0

    def conserved(self) -> bool:
        return self.n_sent == self.n_recvd + sum(self.drops.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["delivery_ratio"] = self.delivery_ratio
        return d


def scenario_suite(base: Optional[ScenarioConfig] = None) -> list[ScenarioConfig]:
    """The eight constant-density rectangles, smallest first."""
    base = base or ScenarioConfig()
    dims = [(400, 300, 30), (400, 400, 40), (500, 400, 50), (500, 500, 62),
            (600, 500, 75), (600, 600, 90), (700, 600, 105), (700, 700, 122)]
    return [base.with_(region=RectRegion.from_dims(x, y), node_count=n) for x, y, n in dims]


def _streams(seed: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(5)


def generate_topology(config: ScenarioConfig) -> np.ndarray:
    """``node_count x 2`` positions, each coordinate uniform over the region."""
    if config.positions is not None:
        return np.asarray(config.positions, dtype=float)
    rng = np.random.default_rng(_streams(config.seed)[0])
    r = config.region
    # x spans the long side, y the short side
    return np.column_stack((rng.random(config.node_count) * r.length_d2,
                            rng.random(config.node_count) * r.width_d1))


def choose_flows(config: ScenarioConfig) -> list[tuple[int, int]]:
    if config.flows is not None:
        return [tuple(f) for f in config.flows]
    rng = np.random.default_rng(_streams(config.seed)[1])
    n = config.node_count
    picks = rng.choice(n * (n - 1), size=config.connections, replace=False)
    flows = []
    for k in picks:
        s, d = divmod(int(k), n - 1)
        flows.append((s, d + 1 if d >= s else d))
    return flows


class _Transmission:
    __slots__ = ("frame", "tx", "end", "sensed", "candidates", "lost", "intended_power")

    def __init__(self, frame, tx, end, sensed, candidates):
        self.frame = frame
        self.tx = tx
        self.end = end
        self.sensed = sensed
        self.candidates = candidates
        self.lost: set[int] = set()
        self.intended_power = None


class Node:
    """Per-node state: position, MAC (queue, NAV, backoff, retries) and DSR (cache, buffers)."""

    def __init__(self, node_id: int, position, sim: "Simulator"):
        self.id = node_id
        self.position = position
        self.sim = sim
        self.mac = DcfMac(node_id, sim.config.mac, sim, self, sim.mac_rng)
        self.dsr = DsrAgent(node_id, sim.config.dsr, sim, self.mac, sim.dsr_rng)

    def mac_deliver(self, frame: Frame):
        self.dsr.receive(frame)

    def mac_tx_ok(self, frame: Frame):
        pass

    def mac_link_failure(self, frame: Frame, cause: str):
        if frame.is_broadcast:
            return
        self.dsr.on_link_failure(frame, cause)

    def mac_queue_drop(self, frame: Frame):
        if frame.kind is FrameKind.DATA:
            self.sim.data_dropped(frame.routing_payload, "ifq")


class Simulator:
    def __init__(self, config: ScenarioConfig, trace_nav: bool = False):
        self.config = config
        self.trace_nav = trace_nav
        self.now = 0
        self._queue: list[Event] = []
        self._seq = 0
        self.executed = 0
        streams = _streams(config.seed)
        self.channel_rng = np.random.default_rng(streams[2])
        self.mac_rng = random.Random(int(streams[3].generate_state(1)[0]))
        self.dsr_rng = random.Random(int(streams[4].generate_state(1)[0]))

        self.positions = generate_topology(config)
        n = config.node_count
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        self.distance = np.hypot(diff[..., 0], diff[..., 1])
        self.mean_power = self._mean_power_matrix()
        radio = config.radio
        self.sigma = radio.shadow_sigma if config.propagation == "shadowing" else 0.0
        if self.sigma > 0 and config.shadow_mode == "per_link":
            draws = self.channel_rng.standard_normal((n, n))
            sym = np.triu(draws, 1)
            self.mean_power = self.mean_power - self.sigma * (sym + sym.T)
            self.sigma = 0.0
        self.pth = radio.rx_threshold
        self.cs = radio.carrier_sense_threshold

        self.busy = np.zeros(n, dtype=np.int64)
        self.armed = np.zeros(n, dtype=bool)  # MAC countdown running
        self.waiting = np.zeros(n, dtype=bool)  # MAC waiting for the medium to go idle
        self.on_air = [False] * n
        self.rx_ongoing: list[list[_Transmission]] = [[] for _ in range(n)]
        self.nodes = [Node(i, self.positions[i], self) for i in range(n)]
        self.macs = [node.mac for node in self.nodes]

        self.report = MetricsReport(seed=config.seed)
        self.packets: list[DataPacket] = []
        self.flows = choose_flows(config)
        self.loss_at_receiver = {"subthreshold": 0, "collision": 0}
        self.last_tx: Optional[_Transmission] = None

    def _mean_power_matrix(self) -> np.ndarray:
        cfg = self.config
        d = np.maximum(self.distance, cfg.radio.ref_distance)
        if cfg.propagation == "two_ray":
            pw = received_power_tworay(cfg.radio, d)
        else:
            pw = mean_received_power_dbm(cfg.radio, d)
        np.fill_diagonal(pw, np.inf)
        return pw

    # ------------------------------------------------------------ scheduling

    def schedule(self, at: int, action: str, target: int, handler: Callable, *args: Any):
        if at < self.now:
            raise RuntimeError(f"causality violation: event at {at} scheduled from {self.now}")
        self._seq += 1
        heapq.heappush(self._queue, Event(at, self._seq, action, target, handler, args))

    def disable_node(self, node_id: int):
        """Silence a node from now on (battery exhaustion): it neither hears nor is heard."""
        self.mean_power[node_id, :] = -np.inf
        self.mean_power[:, node_id] = -np.inf
        self.mean_power[node_id, node_id] = np.inf

    def advance(self, until: int):
        """Execute queued events with timestamps up to ``until`` (ns); for stepping by hand."""
        queue = self._queue
        while queue and queue[0].timestamp <= until and queue[0].handler is not None:
            ev = heapq.heappop(queue)
            self.now = ev.timestamp
            self.executed += 1
            ev.handler(*ev.args)
        self.now = max(self.now, until)

    def medium_idle(self, node_id: int) -> bool:
        return self.busy[node_id] == 0

    # --------------------------------------------------------------- channel

    def sample_powers(self, tx: int) -> np.ndarray:
        row = self.mean_power[tx]
        if self.sigma > 0:
            return row - self.sigma * self.channel_rng.standard_normal(row.shape[0])
        return row

    def start_transmission(self, tx: int, frame: Frame) -> int:
        """Put ``frame`` on the air from ``tx``; returns its end time.

        One received-power sample per (frame, receiver) decides both carrier
        sensing (>= CS threshold) and reception candidacy (>= Pth).
        """
        now = self.now
        end = now + frame.tx_time
        powers = self.sample_powers(tx)
        sensed_mask = powers >= self.cs
        sensed_mask[tx] = False
        sensed = np.flatnonzero(sensed_mask)
        candidates = np.flatnonzero(powers >= self.pth)
        candidates = candidates[candidates != tx]
        rec = _Transmission(frame, tx, end, sensed, candidates)
        self.last_tx = rec
        if frame.dst >= 0:
            rec.intended_power = powers[frame.dst]

        # half duplex: anything this node was receiving is lost
        for other in self.rx_ongoing[tx]:
            other.lost.add(tx)
        self.on_air[tx] = True
        self.busy[tx] += 1
        if self.busy[tx] == 1:
            self.macs[tx].medium_became_busy(now)

        busy = self.busy
        busy[sensed] += 1
        macs = self.macs
        newly = sensed[busy[sensed] == 1]
        for r in newly[self.armed[newly]].tolist():
            macs[r].medium_became_busy(now)

        on_air = self.on_air
        for r in candidates.tolist():
            ongoing = self.rx_ongoing[r]
            if on_air[r]:
                rec.lost.add(r)
            elif ongoing:
                for other in ongoing:
                    other.lost.add(r)
                rec.lost.add(r)
            ongoing.append(rec)
        self.schedule(end, "frame_end_rx", tx, self._frame_end, rec)
        return end

    def _frame_end(self, rec: _Transmission):
        now = self.now
        frame, tx = rec.frame, rec.tx
        busy = self.busy
        macs = self.macs
        self.on_air[tx] = False
        busy[tx] -= 1
        busy[rec.sensed] -= 1
        macs[tx].on_tx_end(frame)

        received = set()
        for r in rec.candidates.tolist():
            self.rx_ongoing[r].remove(rec)
            if r not in rec.lost:
                received.add(r)
                macs[r].on_frame_received(frame, now)
        if frame.dst >= 0 and frame.dst not in received:
            reason = "collision" if rec.intended_power >= self.pth else "subthreshold"
            self.loss_at_receiver[reason] += 1
            initiator = frame.dst if frame.kind in (FrameKind.CTS, FrameKind.ACK) else frame.src
            macs[initiator].last_loss = reason
            if reason == "collision":
                macs[initiator].counters.drop_collision += 1
            else:
                macs[initiator].counters.drop_subthreshold += 1

        if busy[tx] == 0:
            macs[tx].medium_became_idle(now)
        newly = rec.sensed[busy[rec.sensed] == 0]
        for r in newly[self.waiting[newly]].tolist():
            macs[r].medium_became_idle(now)

    # --------------------------------------------------------------- traffic

    def _traffic_tick(self, src: int, dst: int, interval: int):
        self.nodes[src].dsr.originate(dst, self.config.payload_bytes)
        nxt = self.now + interval
        if nxt < self._end:
            self.schedule(nxt, "traffic_tick", src, self._traffic_tick, src, dst, interval)

    def data_originated(self, pkt: DataPacket):
        self.report.n_sent += 1
        self.packets.append(pkt)

    def data_received(self, pkt: DataPacket):
        self._terminal(pkt, None)

    def data_dropped(self, pkt: DataPacket, cause: str):
        self._terminal(pkt, cause)

    def _terminal(self, pkt: DataPacket, cause: Optional[str]):
        if pkt.terminal is not None:
            raise RuntimeError(f"packet {pkt.uid} reached a second terminal state ({pkt.terminal}, {cause})")
        pkt.terminal = cause or "received"
        if cause is None:
            self.report.n_recvd += 1
        else:
            self.report.drops[cause] += 1

    # ------------------------------------------------------------------ run

    def run(self) -> MetricsReport:
        cfg = self.config
        self._end = to_ns(cfg.sim_duration)
        traffic_rng = np.random.default_rng(_streams(cfg.seed)[1].spawn(1)[0])
        interval = to_ns(1.0 / cfg.cbr_rate)
        for src, dst in self.flows:
            start = to_ns(traffic_rng.uniform(0.0, cfg.cbr_start_max))
            if start < self._end:
                self.schedule(start, "traffic_tick", src, self._traffic_tick, src, dst, interval)
        self.schedule(self._end, "sim_end", -1, None)

        queue = self._queue
        pop = heapq.heappop
        while queue:
            ev = pop(queue)
            self.now = ev.timestamp
            if ev.handler is None:
                break
            self.executed += 1
            ev.handler(*ev.args)
        self._finalize()
        return self.report

    def _finalize(self):
        for node in self.nodes:
            for pkt in node.dsr.send_buffer:
                if pkt.terminal is None:
                    self._terminal(pkt, "no_route")
        for pkt in self.packets:
            if pkt.terminal is None:
                self._terminal(pkt, "in_flight")
        control = {}
        mac = {"subthreshold_losses": self.loss_at_receiver["subthreshold"],
               "collision_losses": self.loss_at_receiver["collision"]}
        for node in self.nodes:
            for k, v in asdict(node.dsr.counters).items():
                control[k] = control.get(k, 0) + v
            for k, v in asdict(node.mac.counters).items():
                mac[k] = max(mac.get(k, 0), v) if k == "max_retry_seen" else mac.get(k, 0) + v
        self.report.control = control
        self.report.mac = mac


def run(config: ScenarioConfig) -> MetricsReport:
    return Simulator(config).run()


def derive_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


@dataclass
class AggregateReport:
    reports: list
    mean_delivery_ratio: float
    std_delivery_ratio: float
    mean_counts: dict

    @property
    def n_seeds(self) -> int:
        return len(self.reports)


def aggregate(reports: list[MetricsReport]) -> AggregateReport:
    drs = np.array([r.delivery_ratio for r in reports])
    keys = ["n_sent", "n_recvd"]
    means = {k: float(np.mean([getattr(r, k) for r in reports])) for k in keys}
    for cause in DROP_CAUSES:
        means[f"drop_{cause}"] = float(np.mean([r.drops[cause] for r in reports]))
    std = float(drs.std(ddof=1)) if len(drs) > 1 else 0.0
    return AggregateReport(list(reports), float(drs.mean()), std, means)


def replication_configs(config: ScenarioConfig, n_seeds: int) -> list[ScenarioConfig]:
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    if n_seeds == 1:
        return [config]
    return [config.with_(seed=derive_seed(config.seed, i)) for i in range(n_seeds)]


def run_many(configs: list[ScenarioConfig], workers: int = 1) -> list[MetricsReport]:
    """Run configs, optionally in worker processes; output order follows input order."""
    if workers <= 1 or len(configs) <= 1:
        return [run(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, configs))


def run_replicated(config: ScenarioConfig, n_seeds: int, workers: int = 1) -> AggregateReport:
    return aggregate(run_many(replication_configs(config, n_seeds), workers))


def default_workers() -> int:
    import os

    return max(1, min(8, (os.cpu_count() or 1)))


__all__ = [
    "ScenarioConfig", "Event", "MetricsReport", "AggregateReport", "Simulator", "Node",
    "scenario_suite", "generate_topology", "choose_flows", "run", "run_replicated", "run_many",
    "aggregate", "derive_seed", "replication_configs", "default_workers",
    "PROPAGATION_MODELS", "SHADOW_MODES", "DROP_CAUSES",
]
