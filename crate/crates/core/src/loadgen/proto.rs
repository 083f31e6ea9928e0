//! Length-prefixed binary framing.
//!
//! Frame layout, both directions:
//!
//! ```text
//!   [payload length: u32 big-endian]
//!   [client send timestamp, nanoseconds: u64 big-endian]
//!   [payload bytes]
//! ```
//!
//! A reply echoes the request's timestamp and carries an empty payload.

use super::LoadGenError;
use std::io::{Read, Write};

/// Refuse to allocate absurd payloads from a corrupt length prefix.
const MAX_PAYLOAD: u32 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub send_ts_ns: u64,
    pub payload: Vec<u8>,
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> Result<(), LoadGenError> {
    let mut header = [0u8; 12];
    header[..4].copy_from_slice(&(frame.payload.len() as u32).to_be_bytes());
    header[4..].copy_from_slice(&frame.send_ts_ns.to_be_bytes());
    w.write_all(&header)?;
    w.write_all(&frame.payload)?;
    Ok(())
}

/// Reads one frame; returns `Ok(None)` on a clean EOF at a frame boundary.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Frame>, LoadGenError> {
    let mut header = [0u8; 12];
    match r.read_exact(&mut header) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(header[..4].try_into().expect("4 bytes"));
    if len > MAX_PAYLOAD {
        return Err(LoadGenError::Protocol(format!("payload length {len} exceeds limit")));
    }
    let send_ts_ns = u64::from_be_bytes(header[4..].try_into().expect("8 bytes"));
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(Some(Frame { send_ts_ns, payload }))
}
