"""
synth.py - Seeded synthetic data for desk-scale verification.

  • gen_blobs           Gaussian class clusters → Dataset
  • one_nn_loo_accuracy 1-NN leave-one-out separability check
  • gen_flow_scenarios  packet fixtures with an expected-flows manifest
  • check_manifest      compare extracted flows against a manifest

Scenario catalog:
  tcp_clean_close    3 handshake → data → FIN sessions
  rst_suppression    RST-closed session, a stray ACK, then a fresh SYN session
  udp_timeout_split  one UDP conversation with a 121 s silence in the middle
  syn_flood          1000 single-SYN flows from distinct sources, 1 ms apart
  slow_request       one TCP session trickling request fragments every 10 s
"""

from __future__ import annotations

import ipaddress
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.spatial import cKDTree

from .artifacts import atomic_path, write_json
from .dataset import BENIGN, Dataset, Provenance
from .errors import ScenarioError
from .flow_extraction import ClosedFlow, FlowTableStats
from .packet_ingest import (
    FLAG_ACK,
    FLAG_FIN,
    FLAG_PSH,
    FLAG_RST,
    FLAG_SYN,
    PROTO_TCP,
    PROTO_UDP,
    PacketRecord,
    format_fixture_line,
    write_pcap,
)

logger = logging.getLogger("flow_ids.synth")

# ══════════════════════════════════════════════════════════
#  Blobs
# ══════════════════════════════════════════════════════════


class BlobSpec(BaseModel):
    """
    Gaussian cluster layout.

    Informative dimensions carry class means that are pairwise at least
    `separation` apart; every dimension gets N(0, noise²) noise.
    """
    n_per_class: int = Field(2000, ge=1)
    n_classes: int = Field(6, ge=1)
    d: int = Field(20, ge=1)
    n_informative: int = Field(4, ge=1)
    separation: float = Field(8.0, ge=0)
    noise: float = Field(1.0, gt=0)
    seed: int = 7

    @model_validator(mode="after")
    def _check_dims(self) -> "BlobSpec":
        if self.n_informative > self.d:
            raise ValueError(f"n_informative ({self.n_informative}) exceeds d ({self.d})")
        return self


def class_means(spec: BlobSpec) -> np.ndarray:
    """
    n_classes × n_informative centred means, pairwise at least `separation` apart.

    With n_classes ≤ n_informative, informative dim j belongs to class
    j mod n_classes and the means form a simplex (regular when the dims
    divide evenly). With more classes than dims, the means sit on a chain
    along the informative diagonal with spacing `separation`. Either way
    every informative dim varies with the class, and with two or more
    informative dims the means span fewer directions than there are dims.
    """
    c, m = spec.n_classes, spec.n_informative
    if c <= m:
        owner = np.arange(m) % c
        members = np.bincount(owner, minlength=c)
        height = spec.separation / np.sqrt(2.0 * members.min())
        means = np.zeros((c, m))
        means[owner, np.arange(m)] = height
    else:
        steps = np.arange(c, dtype=float) * spec.separation / np.sqrt(m)
        means = np.repeat(steps[:, None], m, axis=1)
    return means - means.mean(axis=0)


def one_nn_loo_accuracy(ds: Dataset) -> float:
    """Leave-one-out accuracy of a 1-NN rule: the separability ceiling of a labelled set."""
    if len(ds) < 2:
        return 0.0
    _, idx = cKDTree(ds.X).query(ds.X, k=2)
    own = idx[:, 0] == np.arange(len(ds))
    nearest = np.where(own, idx[:, 1], idx[:, 0])
    return float(np.mean(ds.y[nearest] == ds.y))


def blob_class_names(n_classes: int) -> Tuple[str, ...]:
    return (BENIGN,) + tuple(f"class_{i}" for i in range(1, n_classes))


def gen_blobs(spec: BlobSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    means = class_means(spec)
    y = np.repeat(np.arange(spec.n_classes), spec.n_per_class)
    X = rng.normal(0.0, spec.noise, size=(len(y), spec.d))
    X[:, : spec.n_informative] += means[y]
    order = rng.permutation(len(y))
    names = tuple(f"f{i:02d}" for i in range(spec.d))
    logger.info("Generated %d blob rows (%d classes, d=%d, seed=%d)",
                len(y), spec.n_classes, spec.d, spec.seed)
    return Dataset(
        X=X[order],
        y=y[order],
        feature_names=names,
        class_names=blob_class_names(spec.n_classes),
        provenance=Provenance(sources=(f"blobs:{spec.model_dump_json()}",)),
        excluded=(),
    )


# ══════════════════════════════════════════════════════════
#  Flow scenarios
# ══════════════════════════════════════════════════════════

TCP_HEADER = 40
UDP_HEADER = 28
WINDOW = 64240
SECOND = 1_000_000
SERVER = int(ipaddress.IPv4Address("192.168.10.50"))


@dataclass
class Scenario:
    name: str
    packets: List[PacketRecord]
    manifest: dict


class _Session:
    """Builds packets for one client ↔ server conversation."""

    def __init__(self, client: int, cport: int, server: int, sport: int, protocol: int = PROTO_TCP):
        self.client, self.cport = client, cport
        self.server, self.sport = server, sport
        self.protocol = protocol

    def send(self, ts_us: int, flags: int = 0, payload: int = 0, reply: bool = False) -> PacketRecord:
        tcp = self.protocol == PROTO_TCP
        src, sport, dst, dport = self.client, self.cport, self.server, self.sport
        if reply:
            src, sport, dst, dport = dst, dport, src, sport
        return PacketRecord(
            ts_us=ts_us, src_ip=src, dst_ip=dst, src_port=sport, dst_port=dport,
            protocol=self.protocol,
            tcp_flags=flags if tcp else 0,
            header_len_bytes=TCP_HEADER if tcp else UDP_HEADER,
            payload_len_bytes=payload,
            tcp_window=WINDOW if tcp else 0,
        )

    def handshake(self, t: int) -> List[PacketRecord]:
        return [
            self.send(t, FLAG_SYN),
            self.send(t + 500, FLAG_SYN | FLAG_ACK, reply=True),
            self.send(t + 1_000, FLAG_ACK),
        ]


def _client(rng: np.random.Generator, index: int) -> Tuple[int, int]:
    ip = int(ipaddress.IPv4Address("10.0.0.0")) + 1 + index
    port = int(rng.integers(1024, 60000))
    return ip, port


def _base_time(rng: np.random.Generator) -> int:
    return 1_500_000_000 * SECOND + int(rng.integers(0, SECOND))


def _tcp_clean_close(rng: np.random.Generator) -> Tuple[List[PacketRecord], dict]:
    t = _base_time(rng)
    packets = []
    for i in range(3):
        ip, port = _client(rng, i)
        s = _Session(ip, port + i, SERVER, 80)
        start = t + i * 2 * SECOND
        packets += s.handshake(start)
        packets.append(s.send(start + 2_000, FLAG_PSH | FLAG_ACK, payload=320))
        packets.append(s.send(start + 3_000, FLAG_FIN | FLAG_ACK))
    return packets, {"flows": 3, "packets_per_flow": [5, 5, 5], "dropped": 0}


def _rst_suppression(rng: np.random.Generator) -> Tuple[List[PacketRecord], dict]:
    t = _base_time(rng)
    ip, port = _client(rng, 0)
    s = _Session(ip, port, SERVER, 80)
    packets = s.handshake(t)
    packets.append(s.send(t + 2_000, FLAG_PSH | FLAG_ACK, payload=512))
    packets.append(s.send(t + 3_000, FLAG_RST | FLAG_ACK, reply=True))
    # late ACK for the reset session: suppressed
    packets.append(s.send(t + 4_000, FLAG_ACK))
    restart = t + SECOND
    packets += s.handshake(restart)
    packets.append(s.send(restart + 2_000, FLAG_FIN | FLAG_ACK))
    return packets, {"flows": 2, "packets_per_flow": [4, 5], "dropped": 1}


def _udp_timeout_split(rng: np.random.Generator) -> Tuple[List[PacketRecord], dict]:
    t = _base_time(rng)
    ip, port = _client(rng, 0)
    s = _Session(ip, port, SERVER, 53, PROTO_UDP)
    later = t + SECOND + 121 * SECOND
    packets = [
        s.send(t, payload=40),
        s.send(t + SECOND, payload=120, reply=True),
        s.send(later, payload=40),
        s.send(later + SECOND, payload=120, reply=True),
    ]
    return packets, {"flows": 2, "packets_per_flow": [2, 2], "dropped": 0}


def _syn_flood(rng: np.random.Generator) -> Tuple[List[PacketRecord], dict]:
    t = _base_time(rng)
    first = int(ipaddress.IPv4Address("172.16.0.0")) + 1
    ports = rng.integers(1024, 65535, size=1000)
    packets = [
        _Session(first + i, int(ports[i]), SERVER, 80).send(t + i * 1_000, FLAG_SYN)
        for i in range(1000)
    ]
    return packets, {"flows": 1000, "packets_per_flow": [1] * 1000, "dropped": 0}


def _slow_request(rng: np.random.Generator) -> Tuple[List[PacketRecord], dict]:
    t = _base_time(rng)
    ip, port = _client(rng, 0)
    s = _Session(ip, port, SERVER, 80)
    packets = s.handshake(t)
    for i in range(1, 20):
        packets.append(s.send(t + i * 10 * SECOND, FLAG_PSH | FLAG_ACK, payload=24))
    packets.append(s.send(t + 200 * SECOND, FLAG_FIN | FLAG_ACK))
    return packets, {"flows": 1, "packets_per_flow": [23], "dropped": 0, "idle_exceeds_active": True}


SCENARIOS: Dict[str, Callable[[np.random.Generator], Tuple[List[PacketRecord], dict]]] = {
    "tcp_clean_close": _tcp_clean_close,
    "rst_suppression": _rst_suppression,
    "udp_timeout_split": _udp_timeout_split,
    "syn_flood": _syn_flood,
    "slow_request": _slow_request,
}


def gen_flow_scenarios(catalog_name: str, seed: int = 0) -> Scenario:
    """
    Build one catalog scenario.

    Raises:
        ScenarioError: unknown catalog name.
    """
    if catalog_name not in SCENARIOS:
        raise ScenarioError(f"unknown scenario '{catalog_name}'; choose from {sorted(SCENARIOS)}")
    rng = np.random.default_rng(seed)
    packets, manifest = SCENARIOS[catalog_name](rng)
    manifest = {"scenario": catalog_name, "seed": seed, "packets": len(packets), **manifest}
    manifest["packets_per_flow"] = sorted(manifest["packets_per_flow"])
    return Scenario(catalog_name, packets, manifest)


def write_scenario(scenario: Scenario, out_dir: Union[str, Path], fmt: str = "fixture") -> Path:
    """Write <name>.fixture (or .pcap) plus <name>.manifest.json; return the packet file."""
    out_dir = Path(out_dir)
    if fmt == "pcap":
        target = out_dir / f"{scenario.name}.pcap"
        with atomic_path(target) as tmp:
            with open(tmp, "wb") as f:
                write_pcap(scenario.packets, f)
    elif fmt == "fixture":
        target = out_dir / f"{scenario.name}.fixture"
        with atomic_path(target) as tmp:
            with open(tmp, "w", encoding="utf-8", newline="\n") as f:
                f.write(f"# scenario {scenario.name}\n")
                for pkt in scenario.packets:
                    f.write(format_fixture_line(pkt) + "\n")
    else:
        raise ScenarioError(f"unknown scenario format '{fmt}'")
    write_json(scenario.manifest, out_dir / f"{scenario.name}.manifest.json")
    logger.info("Scenario %s: %d packets → %s", scenario.name, len(scenario.packets), target)
    return target


def check_manifest(manifest: dict, closed: Sequence[ClosedFlow], stats: FlowTableStats,
                   rows: Sequence[dict] = ()) -> List[str]:
    """
    Compare extraction results with a scenario manifest.

    Args:
        rows: Feature rows of the flows, needed for the idle/active check.

    Returns:
        Mismatch messages; empty when everything matches.
    """
    problems = []
    if len(closed) != manifest["flows"]:
        problems.append(f"flows: expected {manifest['flows']}, got {len(closed)}")
    sizes = sorted(c.state.packet_count for c in closed)
    if sizes != list(manifest["packets_per_flow"]):
        problems.append(f"packets_per_flow: expected {manifest['packets_per_flow']}, got {sizes}")
    if stats.packets_dropped != manifest["dropped"]:
        problems.append(f"dropped: expected {manifest['dropped']}, got {stats.packets_dropped}")
    if manifest.get("idle_exceeds_active"):
        if not rows or any(r["idle_mean"] <= r["active_mean"] for r in rows):
            problems.append("idle_mean does not exceed active_mean")
    return problems
