"""
flow_extraction.py - Bidirectional flow assembly with session-aware termination.

A FlowTable consumes PacketRecords in timestamp order and emits ClosedFlows:
  • TCP flows close on the first FIN or RST packet (included in the flow);
    the key then goes on a terminated list and further packets for it are
    dropped until a SYN opens a new session.
  • UDP flows, and TCP flows that never see FIN/RST, close when the gap
    since their last packet exceeds the protocol timeout.
  • flush() emits everything still live at end of capture.

The table is single-writer; run one table per capture.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, NamedTuple, Optional

from pydantic import BaseModel, Field

from .errors import OutOfOrderPacket
from .packet_ingest import (
    FLAG_ACK,
    FLAG_CWR,
    FLAG_ECE,
    FLAG_FIN,
    FLAG_PSH,
    FLAG_RST,
    FLAG_SYN,
    FLAG_URG,
    PROTO_TCP,
    PacketRecord,
)

logger = logging.getLogger("flow_ids.flow_extraction")

# Counter name → flag bit, in feature-dictionary order.
FLAG_COUNTERS = (
    ("fin", FLAG_FIN),
    ("syn", FLAG_SYN),
    ("rst", FLAG_RST),
    ("psh", FLAG_PSH),
    ("ack", FLAG_ACK),
    ("urg", FLAG_URG),
    ("cwe", FLAG_CWR),
    ("ece", FLAG_ECE),
)


class FlowConfig(BaseModel):
    """Timeouts and thresholds for flow assembly and feature finalization (µs)."""
    udp_timeout_us: int = Field(120_000_000, gt=0)
    tcp_timeout_us: int = Field(120_000_000, gt=0)
    terminated_retention_us: int = Field(120_000_000, ge=0)
    activity_threshold_us: int = Field(5_000_000, gt=0)
    ooo_tolerance_us: int = Field(1_000, ge=0)
    subflow_gap_us: int = Field(1_000_000, gt=0)
    bulk_min_packets: int = Field(4, ge=2)
    bulk_max_gap_us: int = Field(1_000_000, gt=0)
    sweep_interval_packets: int = Field(10_000, ge=0)
    label: str = "benign"


class CloseReason(str, Enum):
    """Why a flow left the table."""
    FIN = "fin"
    RST = "rst"
    TIMEOUT = "timeout"
    END_OF_CAPTURE = "end_of_capture"


class FlowKey(NamedTuple):
    """Direction-free 5-tuple; the numerically smaller (ip, port) comes first."""
    ip_a: int
    port_a: int
    ip_b: int
    port_b: int
    protocol: int

    @classmethod
    def of(cls, pkt: PacketRecord) -> "FlowKey":
        a = (pkt.src_ip, pkt.src_port)
        b = (pkt.dst_ip, pkt.dst_port)
        if b < a:
            a, b = b, a
        return cls(a[0], a[1], b[0], b[1], pkt.protocol)


@dataclass
class FlowState:
    """
    Accumulators for one live flow.

    Per-packet series are kept in arrival order so that finalization is a
    pure function of this object; counters that never need the series
    (flags, init windows) are updated in place.
    """
    key: FlowKey
    fwd_ip: int
    fwd_port: int
    protocol: int
    start_ts_us: int
    last_ts_us: int
    last_fwd_ts_us: Optional[int] = None
    last_bwd_ts_us: Optional[int] = None
    timestamps: List[int] = field(default_factory=list)
    directions: List[bool] = field(default_factory=list)  # True = forward
    lengths: List[int] = field(default_factory=list)
    header_lengths: List[int] = field(default_factory=list)
    payloads: List[int] = field(default_factory=list)
    fwd_psh: int = 0
    bwd_psh: int = 0
    fwd_urg: int = 0
    bwd_urg: int = 0
    flag_counts: Dict[str, int] = field(default_factory=lambda: {name: 0 for name, _ in FLAG_COUNTERS})
    init_win_fwd: Optional[int] = None
    init_win_bwd: Optional[int] = None

    @classmethod
    def start(cls, key: FlowKey, pkt: PacketRecord) -> "FlowState":
        flow = cls(
            key=key,
            fwd_ip=pkt.src_ip,
            fwd_port=pkt.src_port,
            protocol=pkt.protocol,
            start_ts_us=pkt.ts_us,
            last_ts_us=pkt.ts_us,
        )
        flow.add(pkt)
        return flow

    def is_forward(self, pkt: PacketRecord) -> bool:
        return pkt.src_ip == self.fwd_ip and pkt.src_port == self.fwd_port

    def add(self, pkt: PacketRecord) -> None:
        forward = self.is_forward(pkt)
        self.timestamps.append(pkt.ts_us)
        self.directions.append(forward)
        self.lengths.append(pkt.length)
        self.header_lengths.append(pkt.header_len_bytes)
        self.payloads.append(pkt.payload_len_bytes)
        self.last_ts_us = max(self.last_ts_us, pkt.ts_us)

        psh = pkt.has_flag(FLAG_PSH)
        urg = pkt.has_flag(FLAG_URG)
        if forward:
            self.last_fwd_ts_us = pkt.ts_us
            self.fwd_psh += psh
            self.fwd_urg += urg
            if self.init_win_fwd is None:
                self.init_win_fwd = pkt.tcp_window
        else:
            self.last_bwd_ts_us = pkt.ts_us
            self.bwd_psh += psh
            self.bwd_urg += urg
            if self.init_win_bwd is None:
                self.init_win_bwd = pkt.tcp_window
        for name, bit in FLAG_COUNTERS:
            if pkt.tcp_flags & bit:
                self.flag_counts[name] += 1

    @property
    def packet_count(self) -> int:
        return len(self.timestamps)

    @property
    def fwd_packet_count(self) -> int:
        return sum(self.directions)


@dataclass(frozen=True)
class ClosedFlow:
    """A flow that has left the table; the state is no longer mutated."""
    state: FlowState
    reason: CloseReason


@dataclass
class FlowTableStats:
    """Conservation counters: packets_in == assigned + dropped."""
    packets_in: int = 0
    packets_assigned: int = 0
    packets_dropped: int = 0
    flows_emitted: int = 0

    def to_dict(self) -> dict:
        return {
            "packets_in": self.packets_in,
            "packets_assigned": self.packets_assigned,
            "packets_dropped": self.packets_dropped,
            "flows_emitted": self.flows_emitted,
        }


class FlowTable:
    """
    Live flows plus the TCP terminated list.

    Usage:
        table = FlowTable(FlowConfig())
        for pkt in packets:
            closed.extend(table.process_packet(pkt))
        closed.extend(table.flush())
    """

    def __init__(self, config: Optional[FlowConfig] = None):
        self.config = config or FlowConfig()
        self.flows: Dict[FlowKey, FlowState] = {}
        # key → closed_at_us, oldest first
        self.terminated: "OrderedDict[FlowKey, int]" = OrderedDict()
        self.clock_us: Optional[int] = None
        self.stats = FlowTableStats()

    def __len__(self) -> int:
        return len(self.flows)

    def _timeout_for(self, protocol: int) -> int:
        if protocol == PROTO_TCP:
            return self.config.tcp_timeout_us
        return self.config.udp_timeout_us

    def _emit(self, flow: FlowState, reason: CloseReason) -> ClosedFlow:
        self.stats.flows_emitted += 1
        return ClosedFlow(state=flow, reason=reason)

    def prune_terminated(self, now_us: int) -> int:
        """Drop terminated-list entries older than the retention window."""
        removed = 0
        retention = self.config.terminated_retention_us
        while self.terminated:
            key, closed_at = next(iter(self.terminated.items()))
            if now_us - closed_at <= retention:
                break
            self.terminated.popitem(last=False)
            removed += 1
        return removed

    def process_packet(self, pkt: PacketRecord) -> List[ClosedFlow]:
        """
        Route one packet into its flow.

        Returns:
            Every flow closed by this packet (a timed-out predecessor on the
            same key and/or the flow this packet terminates).

        Raises:
            OutOfOrderPacket: timestamp is more than ooo_tolerance_us behind
                the table clock.
        """
        if self.clock_us is not None and pkt.ts_us < self.clock_us - self.config.ooo_tolerance_us:
            raise OutOfOrderPacket(
                f"packet at {pkt.ts_us} us is {self.clock_us - pkt.ts_us} us behind the table clock"
            )
        self.clock_us = pkt.ts_us if self.clock_us is None else max(self.clock_us, pkt.ts_us)
        self.prune_terminated(self.clock_us)
        self.stats.packets_in += 1

        closed: List[ClosedFlow] = []
        key = FlowKey.of(pkt)
        flow = self.flows.get(key)
        if flow is not None and pkt.ts_us - flow.last_ts_us > self._timeout_for(pkt.protocol):
            del self.flows[key]
            closed.append(self._emit(flow, CloseReason.TIMEOUT))
            flow = None

        if pkt.is_tcp and key in self.terminated:
            if not pkt.has_flag(FLAG_SYN):
                self.stats.packets_dropped += 1
                return closed
            del self.terminated[key]

        if flow is None:
            flow = FlowState.start(key, pkt)
            self.flows[key] = flow
        else:
            flow.add(pkt)
        self.stats.packets_assigned += 1

        if pkt.is_tcp and pkt.tcp_flags & (FLAG_FIN | FLAG_RST):
            del self.flows[key]
            reason = CloseReason.RST if pkt.has_flag(FLAG_RST) else CloseReason.FIN
            closed.append(self._emit(flow, reason))
            self.terminated[key] = pkt.ts_us
            self.terminated.move_to_end(key)
        return closed

    def expire(self, now_us: int) -> List[ClosedFlow]:
        """Emit live flows whose idle gap at now_us exceeds their timeout."""
        expired = [
            key for key, flow in self.flows.items()
            if now_us - flow.last_ts_us > self._timeout_for(flow.protocol)
        ]
        return [self._emit(self.flows.pop(key), CloseReason.TIMEOUT) for key in expired]

    def flush(self, now_us: Optional[int] = None) -> List[ClosedFlow]:
        """
        Emit every live flow and empty the table.

        Flows idle past their timeout at now_us (default: the table clock)
        are reported as TIMEOUT, the rest as END_OF_CAPTURE.
        """
        now = self.clock_us if now_us is None else now_us
        closed = []
        for flow in self.flows.values():
            timed_out = now is not None and now - flow.last_ts_us > self._timeout_for(flow.protocol)
            reason = CloseReason.TIMEOUT if timed_out else CloseReason.END_OF_CAPTURE
            closed.append(self._emit(flow, reason))
        self.flows.clear()
        logger.debug("flush: %d flows emitted", len(closed))
        return closed


def extract_flows(packets, config: Optional[FlowConfig] = None):
    """
    Run a whole packet sequence through a fresh FlowTable.

    Returns:
        (closed flows in emission order, FlowTableStats)
    """
    table = FlowTable(config)
    interval = table.config.sweep_interval_packets
    closed: List[ClosedFlow] = []
    for i, pkt in enumerate(packets, start=1):
        closed.extend(table.process_packet(pkt))
        if interval and i % interval == 0:
            closed.extend(table.expire(table.clock_us))
    closed.extend(table.flush())
    logger.info("flows: %d packets in, %d dropped, %d flows out",
                table.stats.packets_in, table.stats.packets_dropped, len(closed))
    return closed, table.stats
