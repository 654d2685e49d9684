"""
packet_ingest.py - Packet sources: classic pcap captures and text fixtures.

Both sources produce the same canonical PacketRecord stream:
  • parse_pcap           Ethernet/IPv4 TCP+UDP records from a pcap byte stream
  • parse_fixture_line   one comma-separated fixture line
  • write_pcap           the inverse of parse_pcap, used by the synthetic
                         scenario generator and the tests

Anything that is not IPv4 TCP/UDP (or is a non-first IP fragment) is
counted in ParseStats and skipped; it never raises.
"""

from __future__ import annotations

import io
import ipaddress
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, List, Tuple, Union

from .errors import FixtureParseError, TruncatedCapture, UnsupportedFormat

logger = logging.getLogger("flow_ids.packet_ingest")

PROTO_TCP = 6
PROTO_UDP = 17

# TCP flag bits in header byte 13, keyed by fixture letter.
FLAG_FIN = 0x01
FLAG_SYN = 0x02
FLAG_RST = 0x04
FLAG_PSH = 0x08
FLAG_ACK = 0x10
FLAG_URG = 0x20
FLAG_ECE = 0x40
FLAG_CWR = 0x80

FLAG_LETTERS = {
    "F": FLAG_FIN,
    "S": FLAG_SYN,
    "R": FLAG_RST,
    "P": FLAG_PSH,
    "A": FLAG_ACK,
    "U": FLAG_URG,
    "E": FLAG_ECE,
    "C": FLAG_CWR,
}

MAGIC_USEC = 0xA1B2C3D4
MAGIC_NSEC = 0xA1B23C4D
LINKTYPE_ETHERNET = 1
ETHERTYPE_IPV4 = 0x0800

GLOBAL_HEADER = struct.Struct("IHHiIII")
RECORD_HEADER_FMT = "IIII"
RECORD_HEADER_LEN = 16
ETH_HEADER_LEN = 14
UDP_HEADER_LEN = 8

FIXTURE_FIELDS = 10


@dataclass(frozen=True)
class PacketRecord:
    """
    One parsed IPv4 TCP/UDP packet.

    Attributes:
        ts_us:             Capture timestamp, microseconds since epoch.
        src_ip, dst_ip:    IPv4 addresses as 32-bit integers.
        src_port/dst_port: Transport ports.
        protocol:          6 (TCP) or 17 (UDP).
        tcp_flags:         Flag byte (0 for UDP).
        header_len_bytes:  IP header + transport header length.
        payload_len_bytes: Transport payload length.
        tcp_window:        Advertised window (0 for UDP).
    """
    ts_us: int
    src_ip: int
    dst_ip: int
    src_port: int
    dst_port: int
    protocol: int
    tcp_flags: int = 0
    header_len_bytes: int = 0
    payload_len_bytes: int = 0
    tcp_window: int = 0

    @property
    def length(self) -> int:
        """IP-level packet length (header + payload)."""
        return self.header_len_bytes + self.payload_len_bytes

    @property
    def is_tcp(self) -> bool:
        return self.protocol == PROTO_TCP

    def has_flag(self, mask: int) -> bool:
        return bool(self.tcp_flags & mask)


@dataclass
class ParseStats:
    """Per-source packet accounting; emitted + skipped == records."""
    records: int = 0
    emitted: int = 0
    skipped_non_ipv4: int = 0
    skipped_protocol: int = 0
    skipped_fragment: int = 0
    skipped_malformed: int = 0

    @property
    def skipped(self) -> int:
        return (self.skipped_non_ipv4 + self.skipped_protocol
                + self.skipped_fragment + self.skipped_malformed)

    def to_dict(self) -> dict:
        return {
            "records": self.records,
            "emitted": self.emitted,
            "skipped": self.skipped,
            "skipped_non_ipv4": self.skipped_non_ipv4,
            "skipped_protocol": self.skipped_protocol,
            "skipped_fragment": self.skipped_fragment,
            "skipped_malformed": self.skipped_malformed,
        }


# ══════════════════════════════════════════════════════════
#  pcap reader
# ══════════════════════════════════════════════════════════


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        data = stream.read(remaining)
        if not data:
            break
        chunks.append(data)
        remaining -= len(data)
    return b"".join(chunks)


class PcapReader:
    """
    Iterates PacketRecords out of a classic pcap byte stream.

    The global header is validated on construction; `stats` is filled in
    while iterating.
    """

    def __init__(self, stream: BinaryIO):
        self.stream = stream
        self.stats = ParseStats()
        self.offset = 0

        header = _read_exact(stream, GLOBAL_HEADER.size)
        if len(header) < 4:
            raise TruncatedCapture("capture shorter than the pcap magic", 0)
        magic_le = struct.unpack("<I", header[:4])[0]
        magic_be = struct.unpack(">I", header[:4])[0]
        if magic_le in (MAGIC_USEC, MAGIC_NSEC):
            self.endian = "<"
            magic = magic_le
        elif magic_be in (MAGIC_USEC, MAGIC_NSEC):
            self.endian = ">"
            magic = magic_be
        else:
            raise UnsupportedFormat(f"bad pcap magic 0x{magic_le:08X}")
        if len(header) < GLOBAL_HEADER.size:
            raise TruncatedCapture("truncated pcap global header", len(header))

        self.nanosecond = magic == MAGIC_NSEC
        fields = struct.unpack(self.endian + GLOBAL_HEADER.format, header)
        self.snaplen = fields[5]
        self.linktype = fields[6]
        if self.linktype != LINKTYPE_ETHERNET:
            raise UnsupportedFormat(f"unsupported link type {self.linktype}; only Ethernet")
        self.offset = GLOBAL_HEADER.size
        self._record_fmt = self.endian + RECORD_HEADER_FMT

    def __iter__(self) -> Iterator[PacketRecord]:
        while True:
            header = _read_exact(self.stream, RECORD_HEADER_LEN)
            if not header:
                return
            if len(header) < RECORD_HEADER_LEN:
                raise TruncatedCapture("truncated record header", self.offset)
            ts_sec, ts_frac, incl_len, _orig_len = struct.unpack(self._record_fmt, header)
            body_offset = self.offset + RECORD_HEADER_LEN
            frame = _read_exact(self.stream, incl_len)
            if len(frame) < incl_len:
                raise TruncatedCapture("truncated record body", body_offset)
            self.offset = body_offset + incl_len
            self.stats.records += 1

            frac_us = ts_frac // 1000 if self.nanosecond else ts_frac
            record = self._decode_frame(ts_sec * 1_000_000 + frac_us, frame)
            if record is not None:
                self.stats.emitted += 1
                yield record

    def _decode_frame(self, ts_us: int, frame: bytes):
        if len(frame) < ETH_HEADER_LEN:
            self.stats.skipped_malformed += 1
            return None
        ethertype = struct.unpack_from("!H", frame, 12)[0]
        if ethertype != ETHERTYPE_IPV4:
            self.stats.skipped_non_ipv4 += 1
            return None
        return decode_ipv4(ts_us, frame[ETH_HEADER_LEN:], self.stats)


def decode_ipv4(ts_us: int, packet: bytes, stats: ParseStats):
    """Decode an IPv4 datagram into a PacketRecord, or count why not."""
    if packet and packet[0] >> 4 != 4:
        stats.skipped_non_ipv4 += 1
        return None
    if len(packet) < 20:
        stats.skipped_malformed += 1
        return None
    ihl = (packet[0] & 0x0F) * 4
    total_length, frag_field = struct.unpack_from("!H2xH", packet, 2)
    protocol = packet[9]
    if ihl < 20 or len(packet) < ihl:
        stats.skipped_malformed += 1
        return None
    if frag_field & 0x1FFF:
        stats.skipped_fragment += 1
        return None
    if protocol not in (PROTO_TCP, PROTO_UDP):
        stats.skipped_protocol += 1
        return None
    src_ip, dst_ip = struct.unpack_from("!II", packet, 12)
    segment = packet[ihl:]

    if protocol == PROTO_TCP:
        if len(segment) < 20:
            stats.skipped_malformed += 1
            return None
        src_port, dst_port = struct.unpack_from("!HH", segment, 0)
        tcp_len = (segment[12] >> 4) * 4
        if tcp_len < 20:
            stats.skipped_malformed += 1
            return None
        flags = segment[13]
        window = struct.unpack_from("!H", segment, 14)[0]
        header_len = ihl + tcp_len
    else:
        if len(segment) < UDP_HEADER_LEN:
            stats.skipped_malformed += 1
            return None
        src_port, dst_port = struct.unpack_from("!HH", segment, 0)
        flags = 0
        window = 0
        header_len = ihl + UDP_HEADER_LEN

    if total_length < header_len:
        stats.skipped_malformed += 1
        return None
    return PacketRecord(
        ts_us=ts_us,
        src_ip=src_ip,
        dst_ip=dst_ip,
        src_port=src_port,
        dst_port=dst_port,
        protocol=protocol,
        tcp_flags=flags,
        header_len_bytes=header_len,
        payload_len_bytes=total_length - header_len,
        tcp_window=window,
    )


def parse_pcap(source: Union[bytes, BinaryIO]) -> Tuple[List[PacketRecord], ParseStats]:
    """
    Parse a whole pcap capture.

    Args:
        source: Raw bytes or a binary stream positioned at the global header.

    Returns:
        (records in file order, ParseStats)
    """
    stream = io.BytesIO(source) if isinstance(source, (bytes, bytearray)) else source
    reader = PcapReader(stream)
    records = list(reader)
    logger.info("pcap: %d records, %d emitted, %d skipped",
                reader.stats.records, reader.stats.emitted, reader.stats.skipped)
    return records, reader.stats


# ══════════════════════════════════════════════════════════
#  pcap writer
# ══════════════════════════════════════════════════════════


def _build_frame(pkt: PacketRecord) -> bytes:
    if pkt.protocol == PROTO_TCP:
        transport_len = max(pkt.header_len_bytes - 20, 20)
        transport_len -= transport_len % 4
        transport = struct.pack(
            "!HHIIBBHHH", pkt.src_port, pkt.dst_port, 0, 0,
            (transport_len // 4) << 4, pkt.tcp_flags, pkt.tcp_window, 0, 0,
        ) + b"\x00" * (transport_len - 20)
    else:
        transport = struct.pack(
            "!HHHH", pkt.src_port, pkt.dst_port,
            UDP_HEADER_LEN + pkt.payload_len_bytes, 0,
        )
    total_length = 20 + len(transport) + pkt.payload_len_bytes
    ip_header = struct.pack(
        "!BBHHHBBHII", 0x45, 0, total_length, 0, 0, 64, pkt.protocol, 0,
        pkt.src_ip, pkt.dst_ip,
    )
    eth = b"\x00\x00\x00\x00\x00\x02" + b"\x00\x00\x00\x00\x00\x01" + struct.pack("!H", ETHERTYPE_IPV4)
    return eth + ip_header + transport + b"\x00" * pkt.payload_len_bytes


def write_pcap(records: Iterable[PacketRecord], stream: BinaryIO) -> int:
    """
    Write records as a little-endian microsecond Ethernet pcap.

    TCP header lengths are rounded to whole 32-bit words (minimum 20 bytes
    of TCP header on a 20-byte IP header), so records whose header length
    is not 40 + 4k do not survive a write/parse round trip byte-exactly.
    """
    stream.write(struct.pack("<" + GLOBAL_HEADER.format, MAGIC_USEC, 2, 4, 0, 0, 65535, LINKTYPE_ETHERNET))
    count = 0
    for pkt in records:
        frame = _build_frame(pkt)
        sec, usec = divmod(pkt.ts_us, 1_000_000)
        stream.write(struct.pack("<" + RECORD_HEADER_FMT, sec, usec, len(frame), len(frame)))
        stream.write(frame)
        count += 1
    return count


# ══════════════════════════════════════════════════════════
#  Fixture format
# ══════════════════════════════════════════════════════════


def flags_to_string(flags: int) -> str:
    """Canonical flag string, e.g. 0x11 → 'FA'."""
    return "".join(letter for letter, bit in FLAG_LETTERS.items() if flags & bit)


def _parse_int(text: str, name: str, line_no: int, upper: int) -> int:
    try:
        value = int(text.strip())
    except ValueError:
        raise FixtureParseError(f"unparseable {name} '{text}'", line_no) from None
    if value < 0 or value > upper:
        raise FixtureParseError(f"{name} {value} out of range", line_no)
    return value


def _parse_ip(text: str, line_no: int) -> int:
    try:
        return int(ipaddress.IPv4Address(text.strip()))
    except ValueError:
        raise FixtureParseError(f"bad IPv4 address '{text}'", line_no) from None


def parse_fixture_line(text_line: str, line_no: int = 1) -> PacketRecord:
    """
    Parse `ts_us,src_ip,src_port,dst_ip,dst_port,proto,flags,hdr,payload,window`.

    Raises:
        FixtureParseError: on field count, number, flag letter or protocol errors.
    """
    fields = text_line.strip().split(",")
    if len(fields) != FIXTURE_FIELDS:
        raise FixtureParseError(f"expected {FIXTURE_FIELDS} fields, got {len(fields)}", line_no)
    ts, src, sport, dst, dport, proto, flag_text, hdr, payload, window = fields

    protocol = _parse_int(proto, "protocol", line_no, 255)
    if protocol not in (PROTO_TCP, PROTO_UDP):
        raise FixtureParseError(f"protocol {protocol} is not TCP (6) or UDP (17)", line_no)

    flags = 0
    for letter in flag_text.strip().upper():
        if letter not in FLAG_LETTERS:
            raise FixtureParseError(f"unknown flag letter '{letter}'", line_no)
        flags |= FLAG_LETTERS[letter]

    record = PacketRecord(
        ts_us=_parse_int(ts, "timestamp", line_no, 2 ** 63 - 1),
        src_ip=_parse_ip(src, line_no),
        dst_ip=_parse_ip(dst, line_no),
        src_port=_parse_int(sport, "src_port", line_no, 65535),
        dst_port=_parse_int(dport, "dst_port", line_no, 65535),
        protocol=protocol,
        tcp_flags=flags,
        header_len_bytes=_parse_int(hdr, "header length", line_no, 65535),
        payload_len_bytes=_parse_int(payload, "payload length", line_no, 65535),
        tcp_window=_parse_int(window, "window", line_no, 65535),
    )
    if protocol == PROTO_UDP and (record.tcp_flags or record.tcp_window):
        raise FixtureParseError("UDP packets carry no flags or window", line_no)
    return record


def format_fixture_line(pkt: PacketRecord) -> str:
    """Serialize a record in the fixture format (inverse of parse_fixture_line)."""
    return ",".join([
        str(pkt.ts_us),
        str(ipaddress.IPv4Address(pkt.src_ip)),
        str(pkt.src_port),
        str(ipaddress.IPv4Address(pkt.dst_ip)),
        str(pkt.dst_port),
        str(pkt.protocol),
        flags_to_string(pkt.tcp_flags),
        str(pkt.header_len_bytes),
        str(pkt.payload_len_bytes),
        str(pkt.tcp_window),
    ])


def parse_fixture(lines: Iterable[str]) -> Tuple[List[PacketRecord], ParseStats]:
    """Parse fixture text; blank lines and `#` comments are ignored."""
    stats = ParseStats()
    records = []
    for line_no, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        records.append(parse_fixture_line(stripped, line_no))
        stats.records += 1
        stats.emitted += 1
    return records, stats


def load_packets(path: Union[str, Path]) -> Tuple[List[PacketRecord], ParseStats]:
    """Load a capture or fixture file, choosing the parser from its first bytes."""
    path = Path(path)
    with open(path, "rb") as f:
        head = f.read(4)
    if len(head) == 4 and (struct.unpack("<I", head)[0] in (MAGIC_USEC, MAGIC_NSEC)
                           or struct.unpack(">I", head)[0] in (MAGIC_USEC, MAGIC_NSEC)):
        with open(path, "rb") as f:
            return parse_pcap(f)
    if path.suffix.lower() in (".pcap", ".cap"):
        with open(path, "rb") as f:
            return parse_pcap(f)
    with open(path, "r", encoding="utf-8") as f:
        records, stats = parse_fixture(f)
    logger.info("fixture %s: %d packets", path, len(records))
    return records, stats
