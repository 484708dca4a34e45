//! Middlebury `.flo` flow files.

use std::path::Path;

use super::{read_bytes, write_atomic};
use crate::error::{Error, Result};
use crate::raster::{FlowField, FlowVector};

pub const FLO_TAG: f32 = 202021.25;

/// Components above this magnitude mark a pixel as unknown.
pub const INVALID_THRESHOLD: f64 = 1e9;

const INVALID_MARKER: f32 = 1e10;

fn is_marker(v: FlowVector) -> bool {
    !(v.dx.abs() <= INVALID_THRESHOLD && v.dy.abs() <= INVALID_THRESHOLD)
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 12 {
        return Err(Error::Length {
            expected: 12,
            found: bytes.len(),
        });
    }
    let word = |i: usize| <[u8; 4]>::try_from(&bytes[i..i + 4]).expect("four bytes");
    let tag = f32::from_le_bytes(word(0));
    if tag != FLO_TAG {
        return Err(Error::Format(format!("bad .flo tag {tag}")));
    }
    let (w, h) = (i32::from_le_bytes(word(4)), i32::from_le_bytes(word(8)));
    if w <= 0 || h <= 0 {
        return Err(Error::Format(format!("bad .flo dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(12))
        .ok_or_else(|| Error::Format(format!("bad .flo dimensions {w}x{h}")))?;
    if bytes.len() != expected {
        return Err(Error::Length {
            expected,
            found: bytes.len(),
        });
    }
    let mut vectors = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for chunk in bytes[12..].chunks_exact(8) {
        let u = f32::from_le_bytes(chunk[..4].try_into().expect("four bytes")) as f64;
        let v = f32::from_le_bytes(chunk[4..].try_into().expect("four bytes")) as f64;
        let vec = FlowVector::new(u, v);
        valid.push(!is_marker(vec));
        vectors.push(vec);
    }
    FlowField::new(w, h, vectors, valid)
}

/// Valid vectors are stored as `f32`; invalid pixels keep an existing
/// out-of-range marker or receive a fresh one.
pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let (w, h) = flow.dims();
    let mut out = Vec::with_capacity(12 + 8 * w * h);
    out.extend(FLO_TAG.to_le_bytes());
    out.extend((w as i32).to_le_bytes());
    out.extend((h as i32).to_le_bytes());
    for (v, &ok) in flow.vectors().iter().zip(flow.valid()) {
        let (u, vv) = if !ok && !is_marker(*v) {
            (INVALID_MARKER, INVALID_MARKER)
        } else {
            (v.dx as f32, v.dy as f32)
        };
        out.extend(u.to_le_bytes());
        out.extend(vv.to_le_bytes());
    }
    out
}

pub fn read_flo(path: &Path) -> Result<FlowField> {
    decode_flo(&read_bytes(path)?)
}

pub fn write_flo(flow: &FlowField, path: &Path) -> Result<()> {
    write_atomic(path, &encode_flo(flow))
}
