//! Classic pcap reader. Both endiannesses and both timestamp resolutions
//! are recognized; pcapng is out of scope.

use std::fs;
use std::path::Path;

use super::{IngestError, RawPacket, Timestamp};

pub const LINKTYPE_ETHERNET: u32 = 1;

const MAGIC_MICROS: u32 = 0xA1B2_C3D4;
const MAGIC_MICROS_SWAPPED: u32 = 0xD4C3_B2A1;
const MAGIC_NANOS: u32 = 0xA1B2_3C4D;
const MAGIC_NANOS_SWAPPED: u32 = 0x4D3C_B2A1;

const GLOBAL_HEADER_LEN: usize = 24;
const RECORD_HEADER_LEN: usize = 16;

/// A parsed capture. `truncated` is set when the file ends mid-record; the
/// records before the cut are still returned.
#[derive(Debug)]
pub struct CaptureFile {
    pub link_type: u32,
    pub snaplen: u32,
    pub packets: Vec<RawPacket>,
    pub truncated: bool,
}

struct Layout {
    big_endian: bool,
    nanos: bool,
}

fn layout(magic: u32) -> Option<Layout> {
    match magic {
        MAGIC_MICROS => Some(Layout {
            big_endian: false,
            nanos: false,
        }),
        MAGIC_MICROS_SWAPPED => Some(Layout {
            big_endian: true,
            nanos: false,
        }),
        MAGIC_NANOS => Some(Layout {
            big_endian: false,
            nanos: true,
        }),
        MAGIC_NANOS_SWAPPED => Some(Layout {
            big_endian: true,
            nanos: true,
        }),
        _ => None,
    }
}

fn read_u32(buf: &[u8], big_endian: bool) -> u32 {
    let bytes: [u8; 4] = buf[..4].try_into().unwrap();
    if big_endian {
        u32::from_be_bytes(bytes)
    } else {
        u32::from_le_bytes(bytes)
    }
}

/// Parse a capture file into raw packets, in file order.
///
/// A malformed global header is fatal; a record cut off by the end of the
/// file stops parsing and returns everything read so far with the
/// `truncated` flag set.
pub fn parse_capture(path: &Path) -> Result<CaptureFile, IngestError> {
    let display = path.display().to_string();
    let data = fs::read(path).map_err(|source| IngestError::Io {
        path: display.clone(),
        source,
    })?;
    parse_capture_bytes(&data, &display)
}

pub fn parse_capture_bytes(data: &[u8], path: &str) -> Result<CaptureFile, IngestError> {
    if data.len() < GLOBAL_HEADER_LEN {
        return Err(IngestError::ShortHeader { path: path.into() });
    }
    let raw_magic = u32::from_le_bytes(data[..4].try_into().unwrap());
    let layout = layout(raw_magic).ok_or(IngestError::BadMagic {
        path: path.into(),
        magic: raw_magic,
    })?;
    let be = layout.big_endian;
    let snaplen = read_u32(&data[16..], be);
    let link_type = read_u32(&data[20..], be);

    let mut packets = Vec::new();
    let mut truncated = false;
    let mut pos = GLOBAL_HEADER_LEN;
    while pos < data.len() {
        if pos + RECORD_HEADER_LEN > data.len() {
            truncated = true;
            break;
        }
        let ts_sec = read_u32(&data[pos..], be) as u64;
        let ts_frac = read_u32(&data[pos + 4..], be);
        let incl_len = read_u32(&data[pos + 8..], be) as usize;
        pos += RECORD_HEADER_LEN;
        if pos + incl_len > data.len() {
            truncated = true;
            break;
        }
        let timestamp = if layout.nanos {
            Timestamp::new(ts_sec, ts_frac)
        } else {
            Timestamp::from_micros(ts_sec, ts_frac)
        };
        packets.push(RawPacket::new(timestamp, data[pos..pos + incl_len].to_vec()));
        pos += incl_len;
    }
    Ok(CaptureFile {
        link_type,
        snaplen,
        packets,
        truncated,
    })
}
