//! Frame format of the TCP transport.
//!
//! ```text
//! magic "DGLM" | version u16 | type u8 | payload length u64 | payload
//! ```
//!
//! Integers are little-endian; the length counts payload bytes. Vector
//! payloads are packed little-endian `f64`s.

use std::io::{self, Read, Write};

pub const MAGIC: [u8; 4] = *b"DGLM";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 1 + 8;
/// Upper bound on accepted payloads; anything larger is treated as garbage.
pub const MAX_PAYLOAD: u64 = 1 << 36;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageType {
    /// Leaf contribution travelling up the tree.
    Contribute = 1,
    /// Subtree sum travelling up the tree.
    PartialSum = 2,
    /// Final sum travelling down the tree.
    Broadcast = 3,
    Barrier = 4,
    /// Registration with the coordinator: rank, world size, payload length,
    /// tree listener port.
    Hello = 5,
    /// Coordinator's reply: tree listener address of every rank.
    Roster = 6,
    /// First frame on a tree link, identifying the child's rank.
    Link = 7,
}

impl MessageType {
    fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => Self::Contribute,
            2 => Self::PartialSum,
            3 => Self::Broadcast,
            4 => Self::Barrier,
            5 => Self::Hello,
            6 => Self::Roster,
            7 => Self::Link,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: MessageType,
    pub payload: Vec<u8>,
}

#[derive(Debug)]
pub enum FrameError {
    Io(io::Error),
    Malformed(String),
}

impl From<io::Error> for FrameError {
    fn from(e: io::Error) -> Self {
        FrameError::Io(e)
    }
}

pub fn encode_frame(kind: MessageType, payload: &[u8]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + payload.len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(kind as u8);
    buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    buf.extend_from_slice(payload);
    buf
}

pub fn write_frame<W: Write>(w: &mut W, kind: MessageType, payload: &[u8]) -> io::Result<()> {
    w.write_all(&encode_frame(kind, payload))?;
    w.flush()
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Frame, FrameError> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if header[..4] != MAGIC {
        return Err(FrameError::Malformed(format!(
            "bad magic {:?}",
            &header[..4]
        )));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(FrameError::Malformed(format!(
            "unsupported protocol version {version}"
        )));
    }
    let kind = MessageType::from_u8(header[6])
        .ok_or_else(|| FrameError::Malformed(format!("unknown message type {}", header[6])))?;
    let len = u64::from_le_bytes(header[7..15].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(FrameError::Malformed(format!("payload length {len} too large")));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(Frame { kind, payload })
}

pub fn encode_f64s(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_f64s(bytes: &[u8]) -> Result<Vec<f64>, FrameError> {
    if bytes.len() % 8 != 0 {
        return Err(FrameError::Malformed(format!(
            "vector payload of {} bytes is not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hello {
    pub rank: u32,
    pub world: u32,
    pub payload_len: u64,
    pub port: u16,
}

impl Hello {
    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(18);
        b.extend_from_slice(&self.rank.to_le_bytes());
        b.extend_from_slice(&self.world.to_le_bytes());
        b.extend_from_slice(&self.payload_len.to_le_bytes());
        b.extend_from_slice(&self.port.to_le_bytes());
        b
    }

    pub fn decode(b: &[u8]) -> Result<Self, FrameError> {
        if b.len() != 18 {
            return Err(FrameError::Malformed(format!("hello of {} bytes", b.len())));
        }
        Ok(Self {
            rank: u32::from_le_bytes(b[0..4].try_into().unwrap()),
            world: u32::from_le_bytes(b[4..8].try_into().unwrap()),
            payload_len: u64::from_le_bytes(b[8..16].try_into().unwrap()),
            port: u16::from_le_bytes(b[16..18].try_into().unwrap()),
        })
    }
}

pub fn encode_roster(addrs: &[String]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(&(addrs.len() as u32).to_le_bytes());
    for a in addrs {
        b.extend_from_slice(&(a.len() as u16).to_le_bytes());
        b.extend_from_slice(a.as_bytes());
    }
    b
}

pub fn decode_roster(b: &[u8]) -> Result<Vec<String>, FrameError> {
    let bad = || FrameError::Malformed("truncated roster".into());
    let count = u32::from_le_bytes(b.get(0..4).ok_or_else(bad)?.try_into().unwrap()) as usize;
    let mut pos = 4;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u16::from_le_bytes(b.get(pos..pos + 2).ok_or_else(bad)?.try_into().unwrap()) as usize;
        pos += 2;
        let s = b.get(pos..pos + len).ok_or_else(bad)?;
        out.push(
            String::from_utf8(s.to_vec())
                .map_err(|_| FrameError::Malformed("roster address is not utf-8".into()))?,
        );
        pos += len;
    }
    if pos != b.len() {
        return Err(FrameError::Malformed("trailing bytes in roster".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let f = encode_frame(MessageType::Broadcast, &encode_f64s(&[1.0]));
        assert_eq!(&f[..4], b"DGLM");
        assert_eq!(&f[4..6], &[1, 0]);
        assert_eq!(f[6], 3);
        assert_eq!(&f[7..15], &8u64.to_le_bytes());
        assert_eq!(&f[15..], &1.0f64.to_le_bytes());
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let mut f = encode_frame(MessageType::Barrier, &[]);
        f[0] = b'X';
        assert!(matches!(read_frame(&mut f.as_slice()), Err(FrameError::Malformed(_))));
        let mut f = encode_frame(MessageType::Barrier, &[]);
        f[4] = 9;
        assert!(matches!(read_frame(&mut f.as_slice()), Err(FrameError::Malformed(_))));
        let mut f = encode_frame(MessageType::Barrier, &[]);
        f[6] = 42;
        assert!(matches!(read_frame(&mut f.as_slice()), Err(FrameError::Malformed(_))));
    }

    #[test]
    fn truncated_frame_is_io_error() {
        let f = encode_frame(MessageType::PartialSum, &encode_f64s(&[1.0, 2.0]));
        assert!(matches!(read_frame(&mut &f[..f.len() - 1]), Err(FrameError::Io(_))));
    }

    #[test]
    fn hello_and_roster() {
        let h = Hello { rank: 3, world: 8, payload_len: 10_001, port: 4242 };
        assert_eq!(Hello::decode(&h.encode()).unwrap(), h);
        let r = vec!["127.0.0.1:9000".to_string(), "10.0.0.2:31337".to_string()];
        assert_eq!(decode_roster(&encode_roster(&r)).unwrap(), r);
        assert!(decode_roster(&[1, 0, 0]).is_err());
    }

    proptest! {
        #[test]
        fn vector_frames_are_bit_exact(values in prop::collection::vec(any::<f64>(), 0..64)) {
            let f = encode_frame(MessageType::Contribute, &encode_f64s(&values));
            let back = read_frame(&mut f.as_slice()).unwrap();
            prop_assert_eq!(back.kind, MessageType::Contribute);
            let decoded = decode_f64s(&back.payload).unwrap();
            prop_assert_eq!(
                decoded.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
