//! RVID video container.
//!
//! Header (little-endian): magic `RVID`, then `u32` version, T, H, W, C,
//! fps numerator, fps denominator. Payload: `T*H*W*C` `f32` values, t-major,
//! row-major, channel-last, each in [0, 1].

use super::HarnessError;
use crate::optics::VideoTensor;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"RVID";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;
const CHANNELS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RvidHeader {
    pub t: u32,
    pub h: u32,
    pub w: u32,
    pub c: u32,
    pub fps_num: u32,
    pub fps_den: u32,
}

impl RvidHeader {
    pub fn fps(&self) -> f64 {
        self.fps_num as f64 / self.fps_den as f64
    }

    pub fn payload_len(&self) -> u64 {
        self.t as u64 * self.h as u64 * self.w as u64 * self.c as u64 * 4
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Frame rate as a reduced fraction with denominator at most 1000.
pub fn fps_fraction(fs: f64) -> (u32, u32) {
    let num = (fs * 1000.0).round() as u32;
    let g = gcd(num, 1000).max(1);
    (num / g, 1000 / g)
}

/// Round to the nearest of 256 levels.
pub fn quantize_8bit(v: f64) -> f64 {
    (v * 255.0).round() / 255.0
}

pub fn encode(video: &VideoTensor) -> Vec<u8> {
    let (fps_num, fps_den) = fps_fraction(video.fs);
    let mut out = Vec::with_capacity(HEADER_LEN + video.data.len() * 4);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, video.t as u32, video.h as u32, video.w as u32, CHANNELS, fps_num, fps_den] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in &video.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn format_err(offset: usize, msg: impl Into<String>) -> HarnessError {
    HarnessError::Format {
        offset,
        msg: msg.into(),
    }
}

pub fn decode_header(buf: &[u8]) -> Result<RvidHeader, HarnessError> {
    if buf.len() < HEADER_LEN {
        return Err(format_err(buf.len(), format!("header needs {HEADER_LEN} bytes, file has {}", buf.len())));
    }
    if &buf[..4] != MAGIC {
        return Err(format_err(0, format!("bad magic {:?}", &buf[..4])));
    }
    let word = |i: usize| u32::from_le_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
    let version = word(0);
    if version != VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let h = RvidHeader {
        t: word(1),
        h: word(2),
        w: word(3),
        c: word(4),
        fps_num: word(5),
        fps_den: word(6),
    };
    for (i, (name, v)) in [("T", h.t), ("H", h.h), ("W", h.w)].into_iter().enumerate() {
        if v == 0 {
            return Err(format_err(8 + 4 * i, format!("{name} must be positive")));
        }
    }
    if h.c != CHANNELS {
        return Err(format_err(20, format!("expected C = 3, got {}", h.c)));
    }
    if h.fps_num == 0 || h.fps_den == 0 {
        return Err(format_err(24, "frame rate numerator and denominator must be positive"));
    }
    Ok(h)
}

pub fn decode(buf: &[u8]) -> Result<VideoTensor, HarnessError> {
    let h = decode_header(buf)?;
    let payload = (buf.len() - HEADER_LEN) as u64;
    if payload != h.payload_len() {
        return Err(format_err(
            HEADER_LEN,
            format!(
                "payload is {payload} bytes, header {}x{}x{}x{} needs {}",
                h.t,
                h.h,
                h.w,
                h.c,
                h.payload_len()
            ),
        ));
    }
    let mut data = Vec::with_capacity(payload as usize / 4);
    for (i, chunk) in buf[HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !(0.0..=1.0).contains(&v) {
            return Err(format_err(HEADER_LEN + 4 * i, format!("value {v} outside [0, 1]")));
        }
        data.push(v as f64);
    }
    VideoTensor::new(h.t as usize, h.h as usize, h.w as usize, h.fps(), data)
        .map_err(|e| format_err(0, e.to_string()))
}

pub fn write(path: &Path, video: &VideoTensor) -> Result<(), HarnessError> {
    std::fs::write(path, encode(video)).map_err(|e| HarnessError::io(path, e))
}

pub fn read(path: &Path) -> Result<VideoTensor, HarnessError> {
    let buf = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    decode(&buf).map_err(|e| e.in_file(path))
}
