"""
features.py - Flow feature dictionary and FlowState finalization.

The dictionary is the single source of truth for CSV column order. It
mirrors the LYCOS-style groups: identification, time, per-direction packet
statistics, inter-arrival times, flag counts, header/segment/bulk
statistics, subflows, initial windows and active/idle periods.

All spread statistics use the population (÷N) convention, so one-sample
populations yield 0 rather than NaN.
"""

from __future__ import annotations

import csv
import ipaddress
import logging
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Union

import numpy as np

from .artifacts import atomic_path
from .flow_extraction import FLAG_COUNTERS, ClosedFlow, FlowConfig, FlowState

logger = logging.getLogger("flow_ids.features")

FEATURE_SCHEMA_VERSION = "1.0"

US = "µs"
BYTES = "bytes"
COUNT = "count"
RATIO = "ratio"
BYTES_PER_S = "bytes/s"


class FeatureSpec(NamedTuple):
    name: str
    unit: str
    group: str
    description: str


def _stats_specs(prefix: str, unit: str, group: str, what: str, stats: Sequence[str]) -> List[FeatureSpec]:
    names = {"tot": "total", "max": "maximum", "min": "minimum", "mean": "mean",
             "std": "standard deviation", "var": "variance"}
    return [FeatureSpec(f"{prefix}_{s}", unit, group, f"{names[s].capitalize()} of {what}") for s in stats]


def _build_dictionary() -> List[FeatureSpec]:
    specs = [
        FeatureSpec("flow_id", "id", "Identification", "Canonical flow identifier"),
        FeatureSpec("src_ip", "address", "Identification", "Source IPv4 of the first packet"),
        FeatureSpec("src_port", "port", "Identification", "Source port of the first packet"),
        FeatureSpec("dst_ip", "address", "Identification", "Destination IPv4 of the first packet"),
        FeatureSpec("dst_port", "port", "Identification", "Destination port of the first packet"),
        FeatureSpec("protocol", "number", "Identification", "IP protocol number"),
        FeatureSpec("timestamp", US, "Identification", "First packet timestamp"),
        FeatureSpec("flow_duration", US, "Time", "Last minus first packet timestamp"),
        FeatureSpec("fwd_pkt_cnt", COUNT, "Fwd pkts", "Forward packet count"),
    ]
    specs += _stats_specs("fwd_pkt_len", BYTES, "Fwd pkts", "forward packet lengths",
                          ("tot", "max", "min", "mean", "std"))
    specs.append(FeatureSpec("fwd_act_data_pkts", COUNT, "Fwd pkts", "Forward packets carrying payload"))
    specs.append(FeatureSpec("bwd_pkt_cnt", COUNT, "Bwd pkts", "Backward packet count"))
    specs += _stats_specs("bwd_pkt_len", BYTES, "Bwd pkts", "backward packet lengths",
                          ("tot", "max", "min", "mean", "std"))
    specs += _stats_specs("iat", US, "IAT", "gaps between consecutive packets",
                          ("mean", "std", "max", "min"))
    specs += _stats_specs("fwd_iat", US, "Fwd IAT", "gaps between consecutive forward packets",
                          ("tot", "mean", "std", "max", "min"))
    specs += _stats_specs("bwd_iat", US, "Bwd IAT", "gaps between consecutive backward packets",
                          ("tot", "mean", "std", "max", "min"))
    specs += [
        FeatureSpec("fwd_psh_cnt", COUNT, "Fwd flags", "Forward packets with PSH"),
        FeatureSpec("fwd_urg_cnt", COUNT, "Fwd flags", "Forward packets with URG"),
        FeatureSpec("bwd_psh_cnt", COUNT, "Bwd flags", "Backward packets with PSH"),
        FeatureSpec("bwd_urg_cnt", COUNT, "Bwd flags", "Backward packets with URG"),
    ]
    specs += _stats_specs("pkt_len", BYTES, "Pkts len/size", "all packet lengths",
                          ("min", "max", "mean", "std", "var"))
    specs.append(FeatureSpec("pkt_size_avg", BYTES, "Pkts len/size", "Average payload size per packet"))
    specs.append(FeatureSpec("down_up_ratio", RATIO, "Pkt loss", "Backward over forward packet count"))
    specs += [
        FeatureSpec(f"flag_{name}", COUNT, "Flags count", f"Packets with {name.upper()} set")
        for name, _ in FLAG_COUNTERS
    ]
    for direction, group in (("fwd", "Fwd pkt header"), ("bwd", "Bwd pkt header")):
        word = "forward" if direction == "fwd" else "backward"
        specs += [
            FeatureSpec(f"{direction}_header_len", BYTES, group, f"Total header bytes, {word}"),
            FeatureSpec(f"{direction}_seg_size_avg", BYTES, group, f"Average payload size, {word}"),
            FeatureSpec(f"{direction}_bytes_per_bulk_avg", BYTES, group, f"Average payload bytes per bulk, {word}"),
            FeatureSpec(f"{direction}_pkts_per_bulk_avg", COUNT, group, f"Average packets per bulk, {word}"),
            FeatureSpec(f"{direction}_bulk_rate_avg", BYTES_PER_S, group, f"Bulk bytes per bulk second, {word}"),
        ]
    specs += [
        FeatureSpec("fwd_subflow_pkts_mean", COUNT, "Subflow", "Forward packets per subflow"),
        FeatureSpec("fwd_subflow_bytes_mean", BYTES, "Subflow", "Forward payload bytes per subflow"),
        FeatureSpec("bwd_subflow_pkts_mean", COUNT, "Subflow", "Backward packets per subflow"),
        FeatureSpec("bwd_subflow_bytes_mean", BYTES, "Subflow", "Backward payload bytes per subflow"),
        FeatureSpec("init_win_bytes_fwd", BYTES, "Init win bytes", "TCP window of the first forward packet"),
        FeatureSpec("init_win_bytes_bwd", BYTES, "Init win bytes", "TCP window of the first backward packet"),
    ]
    specs += _stats_specs("active", US, "Active/idle", "active period durations", ("mean", "std", "max", "min"))
    specs += _stats_specs("idle", US, "Active/idle", "idle gap durations", ("mean", "std", "max", "min"))
    specs += [
        # Named by the dataset documentation without a definition; always 0.
        FeatureSpec("inbound", "flag", "Other labels", "Undefined upstream; emitted as 0"),
        FeatureSpec("similar_http", "flag", "Other labels", "Undefined upstream; emitted as 0"),
        FeatureSpec("label", "class", "Label", "Traffic class"),
    ]
    return specs


FEATURE_DICTIONARY: List[FeatureSpec] = _build_dictionary()
FEATURE_NAMES: List[str] = [spec.name for spec in FEATURE_DICTIONARY]
IDENTIFICATION_COLUMNS: List[str] = [s.name for s in FEATURE_DICTIONARY if s.group == "Identification"]
LABEL_COLUMN = "label"
_BY_NAME: Dict[str, FeatureSpec] = {spec.name: spec for spec in FEATURE_DICTIONARY}


def feature_dictionary() -> List[FeatureSpec]:
    """Ordered (name, unit, group, description) entries."""
    return list(FEATURE_DICTIONARY)


def lookup_feature(name: str) -> Optional[FeatureSpec]:
    """Dictionary entry for `name`, or None when it is not a known column."""
    return _BY_NAME.get(name)


# ── Statistics helpers ──────────────────────────────────


def _describe(values: np.ndarray) -> Dict[str, float]:
    """tot/max/min/mean/std/var of a sample; all 0 for an empty one."""
    if values.size == 0:
        return {"tot": 0.0, "max": 0.0, "min": 0.0, "mean": 0.0, "std": 0.0, "var": 0.0}
    var = float(np.var(values))
    return {
        "tot": float(values.sum()),
        "max": float(values.max()),
        "min": float(values.min()),
        "mean": float(values.mean()),
        "std": float(np.sqrt(var)),
        "var": var,
    }


def _gaps(timestamps: np.ndarray) -> np.ndarray:
    # Packets accepted inside the out-of-order window can step back slightly.
    return np.maximum(np.diff(timestamps), 0)


def _bulk_stats(ts: np.ndarray, fwd: np.ndarray, payloads: np.ndarray, forward: bool,
                min_packets: int, max_gap_us: int) -> Dict[str, float]:
    """
    Bulk transfer statistics for one direction.

    A bulk is a run of at least `min_packets` consecutive payload-carrying
    packets of this direction, with no payload packet of the other
    direction in between and no intra-run gap above `max_gap_us`.
    """
    totals = {"count": 0, "packets": 0, "bytes": 0, "duration": 0}
    run = {"packets": 0, "bytes": 0, "start": 0, "last": 0}

    def close_run():
        if run["packets"] >= min_packets:
            totals["count"] += 1
            totals["packets"] += run["packets"]
            totals["bytes"] += run["bytes"]
            totals["duration"] += run["last"] - run["start"]
        run["packets"] = 0

    for t, is_fwd, p in zip(ts.tolist(), fwd.tolist(), payloads.tolist()):
        if p <= 0:
            continue
        if is_fwd != forward:
            close_run()
        elif run["packets"] and t - run["last"] <= max_gap_us:
            run["packets"] += 1
            run["bytes"] += p
            run["last"] = t
        else:
            close_run()
            run.update(packets=1, bytes=p, start=t, last=t)
    close_run()

    count, size, duration = totals["count"], totals["bytes"], totals["duration"]
    packets = totals["packets"]
    if count == 0:
        return {"bytes_per_bulk_avg": 0.0, "pkts_per_bulk_avg": 0.0, "bulk_rate_avg": 0.0}
    return {
        "bytes_per_bulk_avg": size / count,
        "pkts_per_bulk_avg": packets / count,
        "bulk_rate_avg": size / (duration / 1e6) if duration > 0 else 0.0,
    }


def _active_idle(ts: np.ndarray, threshold_us: int):
    """Split the packet timeline at gaps > threshold into active runs and idle gaps."""
    ts = np.sort(ts)
    gaps = _gaps(ts)
    active, idle = [], []
    run_start = ts[0]
    for i, gap in enumerate(gaps):
        if gap > threshold_us:
            active.append(ts[i] - run_start)
            idle.append(gap)
            run_start = ts[i + 1]
    active.append(ts[-1] - run_start)
    return np.asarray(active, dtype=float), np.asarray(idle, dtype=float)


def flow_id(flow: FlowState) -> str:
    k = flow.key
    return (f"{ipaddress.IPv4Address(k.ip_a)}:{k.port_a}-"
            f"{ipaddress.IPv4Address(k.ip_b)}:{k.port_b}-{k.protocol}-{flow.start_ts_us}")


def finalize(flow: FlowState, config: Optional[FlowConfig] = None,
             label: Optional[str] = None) -> Dict[str, Union[float, int, str]]:
    """
    Compute the full feature row for a flow.

    Args:
        flow:   Flow with at least one packet.
        config: Thresholds for active/idle, subflow and bulk detection.
        label:  Class label; defaults to config.label.

    Returns:
        Dict keyed by FEATURE_NAMES, in dictionary order.
    """
    config = config or FlowConfig()
    ts = np.asarray(flow.timestamps, dtype=np.int64)
    fwd = np.asarray(flow.directions, dtype=bool)
    lengths = np.asarray(flow.lengths, dtype=float)
    headers = np.asarray(flow.header_lengths, dtype=float)
    payloads = np.asarray(flow.payloads, dtype=np.int64)
    bwd = ~fwd

    n_fwd = int(fwd.sum())
    n_bwd = int(bwd.sum())
    fwd_len = _describe(lengths[fwd])
    bwd_len = _describe(lengths[bwd])
    all_len = _describe(lengths)
    iat = _describe(_gaps(ts).astype(float))
    fwd_iat = _describe(_gaps(ts[fwd]).astype(float))
    bwd_iat = _describe(_gaps(ts[bwd]).astype(float))
    active, idle = _active_idle(ts, config.activity_threshold_us)
    active_s = _describe(active)
    idle_s = _describe(idle)

    subflows = 1 + int((_gaps(ts) > config.subflow_gap_us).sum())
    fwd_bulk = _bulk_stats(ts, fwd, payloads, True, config.bulk_min_packets, config.bulk_max_gap_us)
    bwd_bulk = _bulk_stats(ts, fwd, payloads, False, config.bulk_min_packets, config.bulk_max_gap_us)
    fwd_payload = float(payloads[fwd].sum())
    bwd_payload = float(payloads[bwd].sum())

    k = flow.key
    if (k.ip_a, k.port_a) == (flow.fwd_ip, flow.fwd_port):
        dst_ip, dst_port = k.ip_b, k.port_b
    else:
        dst_ip, dst_port = k.ip_a, k.port_a

    row: Dict[str, Union[float, int, str]] = {
        "flow_id": flow_id(flow),
        "src_ip": str(ipaddress.IPv4Address(flow.fwd_ip)),
        "src_port": flow.fwd_port,
        "dst_ip": str(ipaddress.IPv4Address(dst_ip)),
        "dst_port": dst_port,
        "protocol": flow.protocol,
        "timestamp": flow.start_ts_us,
        "flow_duration": flow.last_ts_us - flow.start_ts_us,
        "fwd_pkt_cnt": n_fwd,
    }
    for stat in ("tot", "max", "min", "mean", "std"):
        row[f"fwd_pkt_len_{stat}"] = fwd_len[stat]
    row["fwd_act_data_pkts"] = int((payloads[fwd] > 0).sum())
    row["bwd_pkt_cnt"] = n_bwd
    for stat in ("tot", "max", "min", "mean", "std"):
        row[f"bwd_pkt_len_{stat}"] = bwd_len[stat]
    for stat in ("mean", "std", "max", "min"):
        row[f"iat_{stat}"] = iat[stat]
    for stat in ("tot", "mean", "std", "max", "min"):
        row[f"fwd_iat_{stat}"] = fwd_iat[stat]
    for stat in ("tot", "mean", "std", "max", "min"):
        row[f"bwd_iat_{stat}"] = bwd_iat[stat]
    row["fwd_psh_cnt"] = flow.fwd_psh
    row["fwd_urg_cnt"] = flow.fwd_urg
    row["bwd_psh_cnt"] = flow.bwd_psh
    row["bwd_urg_cnt"] = flow.bwd_urg
    for stat in ("min", "max", "mean", "std", "var"):
        row[f"pkt_len_{stat}"] = all_len[stat]
    row["pkt_size_avg"] = float(payloads.mean())
    row["down_up_ratio"] = n_bwd / n_fwd if n_fwd else 0.0
    for name, _ in FLAG_COUNTERS:
        row[f"flag_{name}"] = flow.flag_counts[name]
    row["fwd_header_len"] = float(headers[fwd].sum())
    row["fwd_seg_size_avg"] = fwd_payload / n_fwd if n_fwd else 0.0
    for key, value in fwd_bulk.items():
        row[f"fwd_{key}"] = value
    row["bwd_header_len"] = float(headers[bwd].sum())
    row["bwd_seg_size_avg"] = bwd_payload / n_bwd if n_bwd else 0.0
    for key, value in bwd_bulk.items():
        row[f"bwd_{key}"] = value
    row["fwd_subflow_pkts_mean"] = n_fwd / subflows
    row["fwd_subflow_bytes_mean"] = fwd_payload / subflows
    row["bwd_subflow_pkts_mean"] = n_bwd / subflows
    row["bwd_subflow_bytes_mean"] = bwd_payload / subflows
    row["init_win_bytes_fwd"] = flow.init_win_fwd or 0
    row["init_win_bytes_bwd"] = flow.init_win_bwd or 0
    for stat in ("mean", "std", "max", "min"):
        row[f"active_{stat}"] = active_s[stat]
    for stat in ("mean", "std", "max", "min"):
        row[f"idle_{stat}"] = idle_s[stat]
    row["inbound"] = 0
    row["similar_http"] = 0
    row["label"] = config.label if label is None else label
    return {name: row[name] for name in FEATURE_NAMES}


def _format_cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def write_features_csv(rows: Iterable[Dict], target: Union[str, Path]) -> int:
    """
    Write feature rows with the dictionary header; floats use 6 significant
    digits. Returns the number of data rows written.
    """
    count = 0
    with atomic_path(target) as tmp:
        with open(tmp, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(FEATURE_NAMES)
            for row in rows:
                writer.writerow([_format_cell(row[name]) for name in FEATURE_NAMES])
                count += 1
    return count


def finalize_all(closed: Iterable[ClosedFlow], config: Optional[FlowConfig] = None) -> List[Dict]:
    return [finalize(c.state, config) for c in closed]
