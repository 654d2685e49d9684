"""
test_features.py - Unit tests for flow finalization and the feature dictionary.
"""

import csv
import math
import os
import sys
import tempfile
from dataclasses import replace

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from modules.features import (
    FEATURE_NAMES,
    IDENTIFICATION_COLUMNS,
    feature_dictionary,
    finalize,
    finalize_all,
    lookup_feature,
    write_features_csv,
)
from modules.flow_extraction import FlowConfig, extract_flows
from modules.packet_ingest import parse_fixture_line

def pkt(ts, forward=True, payload=0, flags="A", hdr=40, win=1000):
    ends = "10.0.0.1,1234,10.0.0.2,80" if forward else "10.0.0.2,80,10.0.0.1,1234"
    return parse_fixture_line(f"{ts},{ends},6,{flags},{hdr},{payload},{win}")


def one_flow(packets, config=None):
    closed, _ = extract_flows(packets, config)
    assert len(closed) == 1
    return finalize(closed[0].state, config)


# ── Dictionary ───────────────────────────────────────────

def test_named_columns_exist():
    required = ["flag_rst", "pkt_len_std", "fwd_subflow_bytes_mean", "flow_duration",
                "bwd_pkt_len_mean", "bwd_pkt_len_tot", "iat_max", "iat_mean", "iat_std",
                "fwd_iat_tot", "idle_max", "idle_min", "idle_mean"]
    for name in required:
        assert lookup_feature(name) is not None, name


def test_dictionary_order_and_uniqueness():
    names = [spec.name for spec in feature_dictionary()]
    assert names == FEATURE_NAMES
    assert len(set(names)) == len(names)
    assert names[0] == "flow_id" and names[-1] == "label"
    assert set(IDENTIFICATION_COLUMNS) <= set(names)
    assert lookup_feature("no_such_column") is None


def test_directional_groups_are_symmetric():
    """Paired fwd_/bwd_ columns sit in matching "Fwd ..." / "Bwd ..." groups."""
    unpaired = []
    for spec in feature_dictionary():
        if spec.name.startswith("fwd_") and spec.group.startswith("Fwd "):
            twin = lookup_feature("bwd_" + spec.name[4:])
            if twin is None:
                unpaired.append(spec.name)
                continue
            assert twin.group == "Bwd " + spec.group[4:], (spec.name, twin.group)
    assert unpaired == ["fwd_act_data_pkts"]
    assert lookup_feature("bwd_psh_cnt").group == "Bwd flags"


# ── Finalization ─────────────────────────────────────────

def test_single_packet_flow():
    row = one_flow([pkt(0, flags="S")])
    assert row["flow_duration"] == 0
    for name in FEATURE_NAMES:
        if name.startswith(("iat_", "fwd_iat_", "bwd_iat_", "active_", "idle_")):
            assert row[name] == 0, name
    assert row["pkt_len_std"] == 0
    assert row["bwd_pkt_cnt"] == 0
    assert row["down_up_ratio"] == 0


def test_two_forward_packets_one_second_apart():
    row = one_flow([pkt(0, payload=60), pkt(1_000_000, payload=60)])
    assert row["fwd_iat_tot"] == 1_000_000
    assert row["fwd_iat_mean"] == 1_000_000
    assert row["fwd_iat_std"] == 0
    assert row["pkt_len_mean"] == 100
    assert row["pkt_len_var"] == 0


def test_population_std():
    """fwd {40,1500,40} + bwd {40}: mean 405, population std ≈ 632.20."""
    row = one_flow([pkt(0), pkt(10, payload=1460), pkt(20), pkt(30, forward=False)])
    assert row["pkt_len_mean"] == 405
    assert abs(row["pkt_len_std"] - 632.20) < 0.005
    assert abs(row["pkt_len_var"] - 399_675) < 1e-6
    assert row["bwd_pkt_len_tot"] == 40
    assert row["fwd_pkt_len_max"] == 1500
    assert row["fwd_act_data_pkts"] == 1


def test_identification_and_direction():
    row = one_flow([pkt(5, forward=False, flags="S"), pkt(9, flags="SA")])
    assert row["src_ip"] == "10.0.0.2" and row["src_port"] == 80
    assert row["dst_ip"] == "10.0.0.1" and row["dst_port"] == 1234
    assert row["protocol"] == 6
    assert row["timestamp"] == 5
    assert row["fwd_pkt_cnt"] == 1 and row["bwd_pkt_cnt"] == 1
    assert row["down_up_ratio"] == 1.0
    assert row["flag_syn"] == 2 and row["flag_ack"] == 1


def test_min_mean_max_ordering():
    packets = [pkt(i * 37_000 + (i % 3) * 900, forward=i % 2 == 0, payload=(i * 131) % 700)
               for i in range(40)]
    row = one_flow(packets)
    for prefix in ("fwd_pkt_len", "bwd_pkt_len", "pkt_len", "iat", "fwd_iat", "bwd_iat",
                   "active", "idle"):
        assert row[f"{prefix}_min"] <= row[f"{prefix}_mean"] <= row[f"{prefix}_max"], prefix
    for name in FEATURE_NAMES:
        value = row[name]
        if isinstance(value, float):
            assert math.isfinite(value), name


def test_active_idle_split():
    """Gaps above the 5 s activity threshold split active runs."""
    packets = [pkt(0), pkt(1_000_000), pkt(11_000_000), pkt(12_000_000), pkt(30_000_000)]
    row = one_flow(packets)
    assert row["idle_max"] == 18_000_000
    assert row["idle_min"] == 10_000_000
    assert row["active_max"] == 1_000_000
    assert row["active_min"] == 0


def test_active_idle_with_late_packet():
    """A packet stepping back inside the out-of-order window never yields a negative period."""
    row = one_flow([pkt(0), pkt(6_000_000), pkt(5_999_500)])
    assert row["active_min"] == 0
    assert row["active_max"] == 500
    assert row["idle_max"] == row["idle_min"] == 5_999_500


def test_subflow_means():
    """A gap above 1 s starts a new subflow; means are totals per subflow."""
    packets = [pkt(0, payload=100), pkt(100, payload=100), pkt(5_000_000, payload=100),
               pkt(5_000_100, forward=False, payload=50)]
    row = one_flow(packets)
    assert row["fwd_subflow_pkts_mean"] == 1.5
    assert row["fwd_subflow_bytes_mean"] == 150
    assert row["bwd_subflow_pkts_mean"] == 0.5
    assert row["bwd_subflow_bytes_mean"] == 25


def test_bulk_detection():
    """Four forward payload packets in a row form one bulk; fewer form none."""
    bulk = [pkt(i * 1_000, payload=500) for i in range(4)]
    row = one_flow(bulk)
    assert row["fwd_bytes_per_bulk_avg"] == 2000
    assert row["fwd_pkts_per_bulk_avg"] == 4
    assert abs(row["fwd_bulk_rate_avg"] - 2000 / 0.003) < 1e-6
    broken = bulk[:2] + [pkt(1_500, forward=False, payload=10)] + bulk[2:]
    row = one_flow(broken)
    assert row["fwd_bytes_per_bulk_avg"] == 0
    assert row["bwd_bytes_per_bulk_avg"] == 0


def test_timestamp_shift_invariance():
    packets = [pkt(0, flags="S"), pkt(300, False, flags="SA"), pkt(9_000_000, payload=77),
               pkt(9_100_000, False, payload=5), pkt(9_200_000, flags="FA")]
    shift = 3_600_000_000
    shifted = [replace(p, ts_us=p.ts_us + shift) for p in packets]
    a = one_flow(packets)
    b = one_flow(shifted)
    for name in FEATURE_NAMES:
        if name in ("timestamp", "flow_id"):
            continue
        assert a[name] == b[name], name
    assert b["timestamp"] - a["timestamp"] == shift


def test_backward_reordering_keeps_forward_features():
    """Shuffling which backward packet lands in which backward slot leaves fwd_* alone."""
    forward = [pkt(0, flags="S", win=64240), pkt(40_000, payload=300), pkt(90_000, payload=1200),
               pkt(2_500_000, payload=10), pkt(2_600_000, flags="PA", payload=700)]
    slots = [20_000, 60_000, 1_800_000, 2_550_000, 2_700_000]
    backward = [dict(payload=0, win=65535), dict(payload=1460, hdr=52),
                dict(payload=512, flags="PA"), dict(payload=90, win=300), dict(payload=4, hdr=60)]

    def flow(order):
        packets = forward + [pkt(slots[slot], forward=False, **backward[i])
                             for slot, i in enumerate(order)]
        return one_flow(sorted(packets, key=lambda p: p.ts_us))

    base = flow([0, 1, 2, 3, 4])
    fwd_columns = [name for name in FEATURE_NAMES if name.startswith("fwd_")]
    assert len(fwd_columns) > 10
    for order in ([4, 3, 2, 1, 0], [1, 0, 3, 4, 2], [2, 4, 0, 1, 3]):
        row = flow(order)
        for name in fwd_columns:
            assert row[name] == base[name], (order, name)
        assert row["bwd_pkt_len_tot"] == base["bwd_pkt_len_tot"]

def test_label_defaults_to_config():
    cfg = FlowConfig(label="syn_flood")
    closed, _ = extract_flows([pkt(0, flags="S")], cfg)
    assert finalize_all(closed, cfg)[0]["label"] == "syn_flood"
    assert finalize(closed[0].state, cfg, label="other")["label"] == "other"


def test_write_features_csv_header_and_rows():
    closed, _ = extract_flows([pkt(0), pkt(10, payload=1460), pkt(20), pkt(30, forward=False)])
    rows = finalize_all(closed)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "flows.csv")
        assert write_features_csv(rows, path) == 1
        with open(path, encoding="utf-8") as f:
            table = list(csv.reader(f))
    assert table[0] == FEATURE_NAMES
    record = dict(zip(table[0], table[1]))
    assert record["pkt_len_std"] == "632.198"
    assert record["label"] == "benign"


def test_empty_capture_writes_header_only():
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "flows.csv")
        assert write_features_csv([], path) == 0
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
    assert lines == [",".join(FEATURE_NAMES)]


if __name__ == "__main__":
    tests = [v for k, v in globals().items() if k.startswith("test_")]
    passed = 0
    for t in tests:
        try:
            t()
            print(f"  ✓ {t.__name__}")
            passed += 1
        except AssertionError as e:
            print(f"  ✗ {t.__name__}: {e}")
        except Exception as e:
            print(f"  ✗ {t.__name__}: {e}")
    print(f"\n{passed}/{len(tests)} tests passed")
