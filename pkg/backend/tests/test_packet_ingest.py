"""
test_packet_ingest.py - Unit tests for the pcap reader/writer and fixture format.

Byte images are assembled by hand from the pcap, Ethernet, IPv4, UDP and
TCP header layouts and decoded field by field.
"""

import io
import os
import struct
import sys
import tempfile

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from modules.errors import FixtureParseError, TruncatedCapture, UnsupportedFormat
from modules.packet_ingest import (
    FLAG_ACK,
    FLAG_FIN,
    FLAG_PSH,
    FLAG_SYN,
    PacketRecord,
    format_fixture_line,
    load_packets,
    parse_fixture,
    parse_fixture_line,
    parse_pcap,
    write_pcap,
)

IP_A = (10 << 24) | 1          # 10.0.0.1
IP_B = (10 << 24) | 2          # 10.0.0.2


def global_header(magic=0xA1B2C3D4, endian="<", linktype=1):
    return struct.pack(endian + "IHHiIII", magic, 2, 4, 0, 0, 65535, linktype)


def ipv4(protocol, payload_after_ip, frag=0, src=IP_A, dst=IP_B):
    total = 20 + len(payload_after_ip)
    return struct.pack("!BBHHHBBHII", 0x45, 0, total, 0, frag, 64, protocol, 0, src, dst) + payload_after_ip


def ethernet(body, ethertype=0x0800):
    return b"\x00" * 12 + struct.pack("!H", ethertype) + body


def record(frame, sec=1, frac=0, endian="<"):
    return struct.pack(endian + "IIII", sec, frac, len(frame), len(frame)) + frame


def udp_frame(payload=b"abcd", sport=5353, dport=53):
    udp = struct.pack("!HHHH", sport, dport, 8 + len(payload), 0) + payload
    return ethernet(ipv4(17, udp))


def tcp_frame(flags=FLAG_SYN, window=1024, payload=b"", data_offset=5):
    tcp = struct.pack("!HHIIBBHHH", 1234, 80, 0, 0, data_offset << 4, flags, window, 0, 0) + payload
    return ethernet(ipv4(6, tcp))


# ── pcap reader ──────────────────────────────────────────

def test_empty_capture():
    """Global header only → no records, nothing skipped."""
    records, stats = parse_pcap(global_header())
    assert records == []
    assert stats.records == 0
    assert stats.skipped == 0


def test_single_udp_packet_field_by_field():
    """Ethernet/IPv4/UDP, 4-byte payload, ts = 1 s."""
    records, stats = parse_pcap(global_header() + record(udp_frame(b"abcd"), sec=1))
    assert len(records) == 1
    pkt = records[0]
    assert pkt.ts_us == 1_000_000
    assert pkt.protocol == 17
    assert pkt.payload_len_bytes == 4
    assert pkt.header_len_bytes == 28
    assert pkt.src_ip == IP_A and pkt.dst_ip == IP_B
    assert pkt.src_port == 5353 and pkt.dst_port == 53
    assert pkt.tcp_flags == 0 and pkt.tcp_window == 0
    assert stats.emitted == 1


def test_tcp_flags_and_window():
    data = global_header() + record(tcp_frame(FLAG_PSH | FLAG_ACK, 512, b"x" * 10))
    pkt = parse_pcap(data)[0][0]
    assert pkt.protocol == 6
    assert pkt.has_flag(FLAG_PSH) and pkt.has_flag(FLAG_ACK)
    assert not pkt.has_flag(FLAG_SYN)
    assert pkt.tcp_window == 512
    assert pkt.header_len_bytes == 40
    assert pkt.payload_len_bytes == 10
    assert pkt.length == 50


def test_big_endian_and_nanosecond():
    """Nanosecond timestamps are truncated to microseconds."""
    data = global_header(0xA1B23C4D, ">") + record(udp_frame(), sec=2, frac=1_999, endian=">")
    pkt = parse_pcap(data)[0][0]
    assert pkt.ts_us == 2_000_001


def test_bad_magic():
    try:
        parse_pcap(global_header(magic=0xDEADBEEF))
        assert False, "Should have raised UnsupportedFormat"
    except UnsupportedFormat:
        pass


def test_non_ethernet_link_type():
    try:
        parse_pcap(global_header(linktype=101))
        assert False, "Should have raised UnsupportedFormat"
    except UnsupportedFormat:
        pass


def test_truncated_body_reports_offset():
    full = global_header() + record(udp_frame())
    try:
        parse_pcap(full[:-3])
        assert False, "Should have raised TruncatedCapture"
    except TruncatedCapture as exc:
        assert exc.offset == 24 + 16
        assert "offset" in str(exc)


def test_truncated_record_header():
    data = global_header() + record(udp_frame()) + b"\x01\x02\x03"
    try:
        parse_pcap(data)
        assert False, "Should have raised TruncatedCapture"
    except TruncatedCapture as exc:
        assert exc.offset == 24 + 16 + len(udp_frame())


def test_skips_are_counted_not_errors():
    """ARP, ICMP and non-first fragments are skipped; count + skips = records."""
    frames = [
        udp_frame(),
        ethernet(b"\x00" * 28, ethertype=0x0806),                 # ARP
        ethernet(ipv4(1, b"\x08\x00" + b"\x00" * 6)),             # ICMP
        ethernet(ipv4(17, b"\x00" * 8, frag=0x0010)),             # fragment offset 16
        b"\x00" * 6,                                              # runt frame
        tcp_frame(),
    ]
    data = global_header() + b"".join(record(f, sec=i) for i, f in enumerate(frames))
    records, stats = parse_pcap(data)
    assert len(records) == 2
    assert stats.skipped_non_ipv4 == 1
    assert stats.skipped_protocol == 1
    assert stats.skipped_fragment == 1
    assert stats.skipped_malformed == 1
    assert stats.emitted + stats.skipped == stats.records == 6


def test_tcp_data_offset_below_five_is_malformed():
    """A TCP header claims at least 5 words; 0 to 4 are counted as malformed."""
    frames = [tcp_frame(data_offset=words) for words in (0, 4, 5)]
    data = global_header() + b"".join(record(f, sec=i) for i, f in enumerate(frames))
    records, stats = parse_pcap(data)
    assert len(records) == 1
    assert records[0].header_len_bytes == 40
    assert stats.skipped_malformed == 2

def test_file_order_preserved():
    frames = [record(udp_frame(), sec=s) for s in (5, 3, 9)]
    records, _ = parse_pcap(global_header() + b"".join(frames))
    assert [r.ts_us for r in records] == [5_000_000, 3_000_000, 9_000_000]


# ── pcap writer ──────────────────────────────────────────

def test_write_then_parse():
    pkts = [
        PacketRecord(1_000_001, IP_A, IP_B, 1234, 80, 6, FLAG_SYN, 40, 0, 65535),
        PacketRecord(1_000_500, IP_B, IP_A, 80, 1234, 6, FLAG_SYN | FLAG_ACK, 40, 0, 29200),
        PacketRecord(1_200_000, IP_A, IP_B, 5000, 53, 17, 0, 28, 33, 0),
    ]
    buf = io.BytesIO()
    assert write_pcap(pkts, buf) == 3
    records, stats = parse_pcap(buf.getvalue())
    assert records == pkts
    assert stats.skipped == 0


# ── Fixture format ───────────────────────────────────────

def test_fixture_syn():
    pkt = parse_fixture_line("0,10.0.0.1,1234,10.0.0.2,80,6,S,40,0,65535")
    assert pkt.ts_us == 0
    assert pkt.tcp_flags == FLAG_SYN
    assert pkt.src_ip == IP_A and pkt.dst_port == 80
    assert pkt.tcp_window == 65535


def test_fixture_flags_order_insensitive():
    a = parse_fixture_line("120000000,10.0.0.2,80,10.0.0.1,1234,6,FA,40,10,512")
    b = parse_fixture_line("120000000,10.0.0.2,80,10.0.0.1,1234,6,af,40,10,512")
    assert a == b
    assert a.tcp_flags == FLAG_FIN | FLAG_ACK


def test_fixture_rejects_protocol():
    try:
        parse_fixture_line("0,10.0.0.1,1,10.0.0.2,2,1,,20,0,0", line_no=7)
        assert False, "Should have raised FixtureParseError"
    except FixtureParseError as exc:
        assert exc.line_no == 7
        assert "line 7" in str(exc)


def test_fixture_rejects_bad_fields():
    bad_lines = [
        "0,10.0.0.1,1234,10.0.0.2,80,6,S,40,0",          # 9 fields
        "0,10.0.0.1,1234,10.0.0.2,80,6,X,40,0,0",        # unknown flag
        "x,10.0.0.1,1234,10.0.0.2,80,6,S,40,0,0",        # bad number
        "0,10.0.0.1,70000,10.0.0.2,80,6,S,40,0,0",       # port range
        "0,10.0.0.1,53,10.0.0.2,53,17,S,28,0,0",         # UDP with flags
    ]
    for line in bad_lines:
        try:
            parse_fixture_line(line)
            assert False, f"Should have rejected {line}"
        except FixtureParseError:
            pass


def test_fixture_line_round_trip():
    pkt = PacketRecord(42, IP_B, IP_A, 80, 1234, 6, FLAG_PSH | FLAG_ACK, 52, 1448, 501)
    assert parse_fixture_line(format_fixture_line(pkt)) == pkt


def test_fixture_comments_and_blanks():
    text = ["# header", "", "0,10.0.0.1,1234,10.0.0.2,80,6,S,40,0,65535", "   ",
            "5,10.0.0.2,80,10.0.0.1,1234,6,SA,40,0,65535"]
    records, stats = parse_fixture(text)
    assert len(records) == 2
    assert stats.records == 2


def test_load_packets_sniffs_format():
    """Same packets from a .pcap and from a fixture file."""
    pkts = [PacketRecord(10, IP_A, IP_B, 1234, 80, 6, FLAG_SYN, 40, 0, 1024)]
    with tempfile.TemporaryDirectory() as tmp:
        pcap_path = os.path.join(tmp, "capture.bin")
        with open(pcap_path, "wb") as f:
            write_pcap(pkts, f)
        fixture_path = os.path.join(tmp, "capture.fixture")
        with open(fixture_path, "w", encoding="utf-8") as f:
            f.write(format_fixture_line(pkts[0]) + "\n")
        assert load_packets(pcap_path)[0] == pkts
        assert load_packets(fixture_path)[0] == pkts


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
