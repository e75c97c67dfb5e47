//! Builders for synthetic captures: Ethernet/IPv4/TCP/UDP frames with valid
//! checksums and classic pcap containers. Used by tests and for generating
//! demo inputs.

use crate::ingest::Timestamp;

/// Frame under construction; finish with [`FrameSpec::build`].
#[derive(Debug, Clone)]
pub struct FrameSpec {
    pub src_ip: [u8; 4],
    pub dst_ip: [u8; 4],
    pub src_port: u16,
    pub dst_port: u16,
    pub tcp: bool,
    pub seq: u32,
    pub payload: Vec<u8>,
    pub ttl: u8,
    /// When false, checksum fields are left zero (as with offloading).
    pub checksums: bool,
    /// Corrupt the IP checksum after computing it.
    pub corrupt_ip_checksum: bool,
}

impl Default for FrameSpec {
    fn default() -> Self {
        FrameSpec {
            src_ip: [10, 0, 0, 1],
            dst_ip: [10, 0, 0, 2],
            src_port: 40000,
            dst_port: 443,
            tcp: true,
            seq: 1,
            payload: Vec::new(),
            ttl: 64,
            checksums: true,
            corrupt_ip_checksum: false,
        }
    }
}

impl FrameSpec {
    pub fn tcp(src_ip: [u8; 4], src_port: u16, dst_ip: [u8; 4], dst_port: u16) -> Self {
        FrameSpec {
            src_ip,
            dst_ip,
            src_port,
            dst_port,
            ..Default::default()
        }
    }

    pub fn udp(src_ip: [u8; 4], src_port: u16, dst_ip: [u8; 4], dst_port: u16) -> Self {
        FrameSpec {
            src_ip,
            dst_ip,
            src_port,
            dst_port,
            tcp: false,
            ..Default::default()
        }
    }

    pub fn with_payload(mut self, payload: Vec<u8>) -> Self {
        self.payload = payload;
        self
    }

    pub fn with_seq(mut self, seq: u32) -> Self {
        self.seq = seq;
        self
    }

    /// Serialize to Ethernet II frame bytes.
    pub fn build(&self) -> Vec<u8> {
        let proto: u8 = if self.tcp { 6 } else { 17 };
        let transport_len = if self.tcp { 20 } else { 8 };
        let total_len = 20 + transport_len + self.payload.len();

        let mut ip = vec![0u8; 20];
        ip[0] = 0x45;
        ip[2..4].copy_from_slice(&(total_len as u16).to_be_bytes());
        ip[8] = self.ttl;
        ip[9] = proto;
        ip[12..16].copy_from_slice(&self.src_ip);
        ip[16..20].copy_from_slice(&self.dst_ip);
        if self.checksums {
            let mut csum = crate::ingest::checksum::ip_checksum(&ip);
            if self.corrupt_ip_checksum {
                csum = csum.wrapping_add(1);
            }
            ip[10..12].copy_from_slice(&csum.to_be_bytes());
        }

        let mut transport = vec![0u8; transport_len];
        transport[0..2].copy_from_slice(&self.src_port.to_be_bytes());
        transport[2..4].copy_from_slice(&self.dst_port.to_be_bytes());
        if self.tcp {
            transport[4..8].copy_from_slice(&self.seq.to_be_bytes());
            transport[12] = 5 << 4; // data offset: 5 words
            transport[13] = 0x18; // PSH|ACK
            transport[14..16].copy_from_slice(&1024u16.to_be_bytes());
        } else {
            let udp_len = (8 + self.payload.len()) as u16;
            transport[4..6].copy_from_slice(&udp_len.to_be_bytes());
        }
        if self.checksums {
            let mut segment = transport.clone();
            segment.extend_from_slice(&self.payload);
            let csum = crate::ingest::checksum::transport_checksum(
                self.src_ip,
                self.dst_ip,
                proto,
                &segment,
            );
            let at = if self.tcp { 16 } else { 6 };
            transport[at..at + 2].copy_from_slice(&csum.to_be_bytes());
        }

        let mut frame = Vec::with_capacity(14 + total_len);
        frame.extend_from_slice(&[0x02, 0x00, 0x00, 0x00, 0x00, 0x01]); // dst MAC
        frame.extend_from_slice(&[0x02, 0x00, 0x00, 0x00, 0x00, 0x02]); // src MAC
        frame.extend_from_slice(&0x0800u16.to_be_bytes());
        frame.extend_from_slice(&ip);
        frame.extend_from_slice(&transport);
        frame.extend_from_slice(&self.payload);
        frame
    }
}

/// Endianness/resolution variant of the pcap container.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcapVariant {
    MicrosLittleEndian,
    MicrosBigEndian,
    NanosLittleEndian,
}

/// Serialize `(timestamp, frame)` records into a classic pcap byte buffer.
pub fn pcap_bytes(records: &[(Timestamp, Vec<u8>)], variant: PcapVariant) -> Vec<u8> {
    let (magic, be, nanos): (u32, bool, bool) = match variant {
        PcapVariant::MicrosLittleEndian => (0xA1B2_C3D4, false, false),
        PcapVariant::MicrosBigEndian => (0xA1B2_C3D4, true, false),
        PcapVariant::NanosLittleEndian => (0xA1B2_3C4D, false, true),
    };
    let put = |out: &mut Vec<u8>, v: u32| {
        if be {
            out.extend_from_slice(&v.to_be_bytes());
        } else {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    let put16 = |out: &mut Vec<u8>, v: u16| {
        if be {
            out.extend_from_slice(&v.to_be_bytes());
        } else {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    let mut out = Vec::new();
    put(&mut out, magic);
    put16(&mut out, 2);
    put16(&mut out, 4);
    put(&mut out, 0); // thiszone
    put(&mut out, 0); // sigfigs
    put(&mut out, 65535); // snaplen
    put(&mut out, 1); // linktype: Ethernet
    for (ts, frame) in records {
        put(&mut out, ts.secs as u32);
        let frac = if nanos { ts.nanos } else { ts.nanos / 1000 };
        put(&mut out, frac);
        put(&mut out, frame.len() as u32);
        put(&mut out, frame.len() as u32);
        out.extend_from_slice(frame);
    }
    out
}

/// Write a pcap file of `(timestamp, frame)` records.
pub fn write_pcap(
    path: &std::path::Path,
    records: &[(Timestamp, Vec<u8>)],
    variant: PcapVariant,
) -> std::io::Result<()> {
    std::fs::write(path, pcap_bytes(records, variant))
}

/// Whole-second timestamp, convenient for ordered fixtures.
pub fn ts(secs: u64) -> Timestamp {
    Timestamp::new(secs, 0)
}
