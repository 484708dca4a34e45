//! Flow and peak-ratio visualisation.

use crate::raster::FlowField;
use crate::spectral::PeakRatio;

/// Interleaved 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// The 55-entry Middlebury colour wheel, red through yellow, green, cyan,
/// blue and magenta back to red.
fn color_wheel() -> Vec<[f64; 3]> {
    let segments: [(usize, fn(f64) -> [f64; 3]); 6] = [
        (15, |t| [255.0, t, 0.0]),
        (6, |t| [255.0 - t, 255.0, 0.0]),
        (4, |t| [0.0, 255.0, t]),
        (11, |t| [0.0, 255.0 - t, 255.0]),
        (13, |t| [t, 0.0, 255.0]),
        (6, |t| [255.0, 0.0, 255.0 - t]),
    ];
    let mut wheel = Vec::with_capacity(55);
    for (n, f) in segments {
        for i in 0..n {
            wheel.push(f((255 * i / n) as f64));
        }
    }
    wheel
}

fn percentile(mut values: Vec<f64>, q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let idx = ((values.len() - 1) as f64 * q).round() as usize;
    Some(values[idx])
}

/// Middlebury colour coding. Hue follows the flow direction and saturation
/// its magnitude relative to `max_magnitude` (the 99th percentile of valid
/// magnitudes when absent). Zero flow is white, invalid pixels black, and
/// vectors beyond the maximum are darkened.
pub fn flow_to_color(flow: &FlowField, max_magnitude: Option<f64>) -> RgbImage {
    let wheel = color_wheel();
    let n = wheel.len();
    let max = max_magnitude
        .or_else(|| {
            let mags = flow
                .vectors()
                .iter()
                .zip(flow.valid())
                .filter(|(_, &ok)| ok)
                .map(|(v, _)| v.dx.hypot(v.dy))
                .collect();
            percentile(mags, 0.99)
        })
        .filter(|m| *m > 0.0 && m.is_finite())
        .unwrap_or(1.0);
    let mut data = Vec::with_capacity(3 * flow.vectors().len());
    for (v, &ok) in flow.vectors().iter().zip(flow.valid()) {
        if !ok {
            data.extend([0, 0, 0]);
            continue;
        }
        let (u, w) = (v.dx / max, v.dy / max);
        let rad = u.hypot(w);
        let a = (-w).atan2(-u) / std::f64::consts::PI;
        let fk = (a + 1.0) / 2.0 * (n - 1) as f64;
        let k0 = fk.floor() as usize;
        let k1 = (k0 + 1) % n;
        let f = fk - k0 as f64;
        for c in 0..3 {
            let col = ((1.0 - f) * wheel[k0][c] + f * wheel[k1][c]) / 255.0;
            let col = if rad <= 1.0 { 1.0 - rad * (1.0 - col) } else { col * 0.75 };
            data.push((255.0 * col).floor() as u8);
        }
    }
    RgbImage {
        width: flow.width(),
        height: flow.height(),
        data,
    }
}

/// Log-scaled 8-bit rendering of a peak-ratio map. Ratios of 1 map to 0,
/// the largest finite ratio to 255; single-peak surfaces saturate.
pub fn ratio_map_to_gray(ratios: &[PeakRatio]) -> Vec<u8> {
    let top = ratios
        .iter()
        .filter_map(|r| match r {
            PeakRatio::Finite(v) if v.is_finite() => Some(v.max(1.0).ln()),
            _ => None,
        })
        .fold(0.0f64, f64::max);
    ratios
        .iter()
        .map(|r| match r {
            PeakRatio::Finite(v) if v.is_finite() && top > 0.0 => {
                (255.0 * v.max(1.0).ln() / top).round().clamp(0.0, 255.0) as u8
            }
            PeakRatio::Finite(v) if v.is_finite() => 0,
            _ => 255,
        })
        .collect()
}
