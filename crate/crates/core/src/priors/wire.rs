//! Binary frames exchanged with external provider processes:
//! `"ESPR1"`, `u32` width, `u32` height, `u32` channels (all little-endian),
//! then `width·height·channels` little-endian `f32` values, row-major. A
//! frame with zero channels carries `width·height` raw bytes instead.

use std::io::{ErrorKind, Read, Write};

use crate::error::{Error, Result};
use crate::imaging::Image;

pub const MAGIC: &[u8; 5] = b"ESPR1";
/// Upper bound on a frame payload.
pub const MAX_PAYLOAD_BYTES: usize = 1 << 30;

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Floats(Vec<f32>),
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    pub payload: Payload,
}

impl Frame {
    pub fn from_image(img: &Image<f32>) -> Self {
        Self {
            width: img.width as u32,
            height: img.height as u32,
            channels: img.channels as u32,
            payload: Payload::Floats(img.data.clone()),
        }
    }

    pub fn from_floats(values: &[f32]) -> Self {
        Self {
            width: values.len() as u32,
            height: 1,
            channels: 1,
            payload: Payload::Floats(values.to_vec()),
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self {
            width: bytes.len() as u32,
            height: 1,
            channels: 0,
            payload: Payload::Bytes(bytes.to_vec()),
        }
    }

    pub fn into_image(self) -> Result<Image<f32>> {
        match self.payload {
            Payload::Floats(v) => Image::from_vec(self.width as usize, self.height as usize, self.channels as usize, v),
            Payload::Bytes(_) => Err(Error::MalformedFrame("expected a float frame, got raw bytes".into())),
        }
    }
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(17);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&frame.width.to_le_bytes());
    buf.extend_from_slice(&frame.height.to_le_bytes());
    buf.extend_from_slice(&frame.channels.to_le_bytes());
    match &frame.payload {
        Payload::Floats(v) => {
            buf.reserve(v.len() * 4);
            for x in v {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        Payload::Bytes(b) => buf.extend_from_slice(b),
    }
    w.write_all(&buf)
}

/// Reads one frame; `Ok(None)` on end of stream before any header byte.
pub fn read_frame(r: &mut impl Read) -> Result<Option<Frame>> {
    let mut header = [0u8; 17];
    let mut got = 0;
    while got < header.len() {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::MalformedFrame("stream ended inside a frame header".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::MalformedFrame(format!("read failed: {e}"))),
        }
    }
    if &header[..5] != MAGIC {
        return Err(Error::MalformedFrame(format!("bad magic {:?}", &header[..5])));
    }
    let word = |i: usize| u32::from_le_bytes([header[i], header[i + 1], header[i + 2], header[i + 3]]);
    let (width, height, channels) = (word(5), word(9), word(13));
    let count = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(channels.max(1) as usize))
        .ok_or_else(|| Error::MalformedFrame("frame size overflows".into()))?;
    let bytes = if channels == 0 { count } else { count.checked_mul(4).unwrap_or(usize::MAX) };
    if bytes > MAX_PAYLOAD_BYTES {
        return Err(Error::MalformedFrame(format!("payload of {bytes} bytes exceeds the limit")));
    }
    let mut data = vec![0u8; bytes];
    r.read_exact(&mut data)
        .map_err(|_| Error::MalformedFrame("stream ended inside a frame payload".into()))?;
    let payload = if channels == 0 {
        Payload::Bytes(data)
    } else {
        Payload::Floats(data.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    };
    Ok(Some(Frame {
        width,
        height,
        channels,
        payload,
    }))
}
