//! Ethernet II / IPv4 / TCP / UDP frame parsing, checksum screening, and
//! anonymization by excision.

use serde::{Deserialize, Serialize};

use super::{CleanPacket, Endpoint, FlowKey, RawPacket, Transport};

const ETH_HEADER_LEN: usize = 14;
const ETHERTYPE_IPV4: u16 = 0x0800;
const PROTO_TCP: u8 = 6;
const PROTO_UDP: u8 = 17;

/// Byte budgets applied when a packet is cleaned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub max_packets: usize,
    pub max_header: usize,
    pub max_payload: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation {
            max_packets: 50,
            max_header: 40,
            max_payload: 150,
        }
    }
}

/// Why a packet was excluded from a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Skip {
    /// Not an Ethernet II + IPv4 frame (includes VLAN and IPv6).
    NotIpv4,
    /// Non-first IPv4 fragment; no transport header to parse.
    Fragmented,
    /// IPv4 protocol other than TCP or UDP.
    UnsupportedTransport,
    /// Frame shorter than its declared header lengths.
    TruncatedFrame,
    BadIpChecksum,
    BadTransportChecksum,
    EmptyPayload,
}

/// Per-reason drop counts, reported by the preprocessing summary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipCounters {
    pub not_ipv4: u64,
    pub fragmented: u64,
    pub unsupported_transport: u64,
    pub truncated_frame: u64,
    pub bad_ip_checksum: u64,
    pub bad_transport_checksum: u64,
    pub empty_payload: u64,
    pub duplicate_tcp: u64,
    pub empty_segment: u64,
    pub overlong_segment: u64,
    pub unsupported_linktype: u64,
}

impl SkipCounters {
    pub fn count(&mut self, skip: Skip) {
        match skip {
            Skip::NotIpv4 => self.not_ipv4 += 1,
            Skip::Fragmented => self.fragmented += 1,
            Skip::UnsupportedTransport => self.unsupported_transport += 1,
            Skip::TruncatedFrame => self.truncated_frame += 1,
            Skip::BadIpChecksum => self.bad_ip_checksum += 1,
            Skip::BadTransportChecksum => self.bad_transport_checksum += 1,
            Skip::EmptyPayload => self.empty_payload += 1,
        }
    }

    pub fn merge(&mut self, other: &SkipCounters) {
        self.not_ipv4 += other.not_ipv4;
        self.fragmented += other.fragmented;
        self.unsupported_transport += other.unsupported_transport;
        self.truncated_frame += other.truncated_frame;
        self.bad_ip_checksum += other.bad_ip_checksum;
        self.bad_transport_checksum += other.bad_transport_checksum;
        self.empty_payload += other.empty_payload;
        self.duplicate_tcp += other.duplicate_tcp;
        self.empty_segment += other.empty_segment;
        self.overlong_segment += other.overlong_segment;
        self.unsupported_linktype += other.unsupported_linktype;
    }
}

/// Borrowed view of one parsed frame.
pub(crate) struct ParsedFrame<'a> {
    pub key: FlowKey,
    pub source: Endpoint,
    pub tcp_seq: Option<u32>,
    /// IPv4 header bytes (with options), addresses still in place.
    pub ip_header: &'a [u8],
    /// Transport header bytes, ports still in place.
    pub transport_header: &'a [u8],
    pub payload: &'a [u8],
}

fn ones_complement_sum(chunks: &[&[u8]]) -> u16 {
    let mut sum: u32 = 0;
    for chunk in chunks {
        let mut it = chunk.chunks_exact(2);
        for pair in &mut it {
            sum += u16::from_be_bytes([pair[0], pair[1]]) as u32;
        }
        if let [last] = it.remainder() {
            sum += (*last as u32) << 8;
        }
    }
    while sum > 0xFFFF {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    sum as u16
}

pub(crate) fn ip_checksum_valid(ip_header: &[u8]) -> bool {
    let stored = u16::from_be_bytes([ip_header[10], ip_header[11]]);
    // A zero checksum means offloaded/not computed; leave it alone.
    if stored == 0 {
        return true;
    }
    ones_complement_sum(&[ip_header]) == 0xFFFF
}

pub(crate) fn transport_checksum_valid(
    src: [u8; 4],
    dst: [u8; 4],
    proto: u8,
    segment: &[u8],
) -> bool {
    let stored_at = match proto {
        PROTO_TCP => 16,
        PROTO_UDP => 6,
        _ => return true,
    };
    if segment.len() < stored_at + 2 {
        return false;
    }
    let stored = u16::from_be_bytes([segment[stored_at], segment[stored_at + 1]]);
    if stored == 0 {
        // UDP: checksum legitimately optional. TCP: typically offload.
        return true;
    }
    let len = (segment.len() as u16).to_be_bytes();
    let pseudo = [
        src[0], src[1], src[2], src[3], dst[0], dst[1], dst[2], dst[3], 0, proto, len[0], len[1],
    ];
    ones_complement_sum(&[&pseudo, segment]) == 0xFFFF
}

/// Compute the transport checksum for a segment whose checksum field is
/// zeroed; used when crafting fixture frames.
pub(crate) fn transport_checksum(src: [u8; 4], dst: [u8; 4], proto: u8, segment: &[u8]) -> u16 {
    let len = (segment.len() as u16).to_be_bytes();
    let pseudo = [
        src[0], src[1], src[2], src[3], dst[0], dst[1], dst[2], dst[3], 0, proto, len[0], len[1],
    ];
    !ones_complement_sum(&[&pseudo, segment])
}

pub(crate) fn ip_checksum(ip_header: &[u8]) -> u16 {
    !ones_complement_sum(&[ip_header])
}

/// Parse one raw Ethernet frame down to its transport payload, validating
/// checksums when they are present and the full packet was captured.
pub(crate) fn parse_frame(p: &RawPacket) -> Result<ParsedFrame<'_>, Skip> {
    let bytes = &p.link_bytes;
    if bytes.len() < ETH_HEADER_LEN {
        return Err(Skip::TruncatedFrame);
    }
    let ethertype = u16::from_be_bytes([bytes[12], bytes[13]]);
    if ethertype != ETHERTYPE_IPV4 {
        return Err(Skip::NotIpv4);
    }
    let after_eth = &bytes[ETH_HEADER_LEN..];
    if after_eth.len() < 20 {
        return Err(Skip::TruncatedFrame);
    }
    if after_eth[0] >> 4 != 4 {
        return Err(Skip::NotIpv4);
    }
    let ihl = ((after_eth[0] & 0x0F) as usize) * 4;
    if ihl < 20 || after_eth.len() < ihl {
        return Err(Skip::TruncatedFrame);
    }
    let total_len = u16::from_be_bytes([after_eth[2], after_eth[3]]) as usize;
    if total_len < ihl {
        return Err(Skip::TruncatedFrame);
    }
    // Ethernet padding sits beyond total_len; a short capture ends earlier.
    let captured_ip_len = total_len.min(after_eth.len());
    let full_capture = after_eth.len() >= total_len;
    let ip_packet = &after_eth[..captured_ip_len];
    let frag_offset = u16::from_be_bytes([ip_packet[6], ip_packet[7]]) & 0x1FFF;
    if frag_offset != 0 {
        return Err(Skip::Fragmented);
    }
    let proto = ip_packet[9];
    let transport = match proto {
        PROTO_TCP => Transport::Tcp,
        PROTO_UDP => Transport::Udp,
        _ => return Err(Skip::UnsupportedTransport),
    };
    let ip_header = &ip_packet[..ihl];
    if !ip_checksum_valid(ip_header) {
        return Err(Skip::BadIpChecksum);
    }
    let src_addr: [u8; 4] = ip_header[12..16].try_into().unwrap();
    let dst_addr: [u8; 4] = ip_header[16..20].try_into().unwrap();
    let segment = &ip_packet[ihl..];
    let (header_len, tcp_seq) = match transport {
        Transport::Tcp => {
            if segment.len() < 20 {
                return Err(Skip::TruncatedFrame);
            }
            let data_offset = ((segment[12] >> 4) as usize) * 4;
            if data_offset < 20 || segment.len() < data_offset {
                return Err(Skip::TruncatedFrame);
            }
            let seq = u32::from_be_bytes(segment[4..8].try_into().unwrap());
            (data_offset, Some(seq))
        }
        Transport::Udp => {
            if segment.len() < 8 {
                return Err(Skip::TruncatedFrame);
            }
            (8, None)
        }
    };
    // Checksums cover the payload; only judge them on full captures.
    if full_capture && !transport_checksum_valid(src_addr, dst_addr, proto, segment) {
        return Err(Skip::BadTransportChecksum);
    }
    let src_port = u16::from_be_bytes([segment[0], segment[1]]);
    let dst_port = u16::from_be_bytes([segment[2], segment[3]]);
    let source = Endpoint {
        addr: src_addr,
        port: src_port,
    };
    let dest = Endpoint {
        addr: dst_addr,
        port: dst_port,
    };
    Ok(ParsedFrame {
        key: FlowKey::new(source, dest, transport),
        source,
        tcp_seq,
        ip_header,
        transport_header: &segment[..header_len],
        payload: &segment[header_len..],
    })
}

/// Excise the identifying octets and split one packet into its anonymized
/// header and payload byte sequences.
///
/// The Ethernet header is dropped entirely; the 8 IP address octets and the
/// 4 port octets are removed from the protocol headers. What remains of the
/// IP and transport headers becomes `header_bytes` (truncated to the header
/// budget); the transport payload becomes `payload_bytes` (truncated to the
/// payload budget). Packets with no payload are skipped.
pub fn anonymize_and_split(p: &RawPacket, limits: &Truncation) -> Result<CleanPacket, Skip> {
    let frame = parse_frame(p)?;
    clean_from_frame(p.timestamp, &frame, limits)
}

pub(crate) fn clean_from_frame(
    timestamp: super::Timestamp,
    frame: &ParsedFrame<'_>,
    limits: &Truncation,
) -> Result<CleanPacket, Skip> {
    if frame.payload.is_empty() {
        return Err(Skip::EmptyPayload);
    }
    let mut header_bytes =
        Vec::with_capacity(frame.ip_header.len() + frame.transport_header.len() - 12);
    header_bytes.extend_from_slice(&frame.ip_header[..12]);
    // Checksums are computed over the excised addresses and ports and would
    // leak them; zero the fields instead of shifting every later octet.
    header_bytes[10] = 0;
    header_bytes[11] = 0;
    header_bytes.extend_from_slice(&frame.ip_header[20..]);
    let transport_base = header_bytes.len();
    header_bytes.extend_from_slice(&frame.transport_header[4..]);
    let checksum_at = transport_base
        + match frame.tcp_seq {
            Some(_) => 12, // TCP checksum at header offset 16
            None => 2,     // UDP checksum at header offset 6
        };
    if checksum_at + 2 <= header_bytes.len() {
        header_bytes[checksum_at] = 0;
        header_bytes[checksum_at + 1] = 0;
    }
    header_bytes.truncate(limits.max_header);
    let mut payload_bytes = frame.payload.to_vec();
    payload_bytes.truncate(limits.max_payload);
    Ok(CleanPacket {
        timestamp,
        header_bytes,
        payload_bytes,
    })
}
