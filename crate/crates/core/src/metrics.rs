//! Motion-compensated prediction and flow accuracy measures.

use crate::error::Result;
use crate::raster::{ensure_same_dims, warp_backward, FlowField, Image};

/// Default NRMS regulariser.
pub const NRMS_EPSILON: f64 = 1.0;

/// Data-range maximum used by PSNR unless the per-image maximum is requested.
pub const INTENSITY_MAX: f64 = 255.0;

/// Warps `frame2` onto frame 1's grid: `out(x, y) = frame2(x + dx, y + dy)`.
pub fn motion_compensate(frame2: &Image, flow: &FlowField) -> Result<Image> {
    warp_backward(frame2, flow)
}

pub fn mse(compensated: &Image, truth: &Image) -> Result<f64> {
    ensure_same_dims(compensated.dims(), truth.dims())?;
    let n = truth.data().len() as f64;
    Ok(compensated
        .data()
        .iter()
        .zip(truth.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// MSE over colour images: squared L2 norm of the per-pixel RGB difference.
pub fn mse_rgb(compensated: &[Image; 3], truth: &[Image; 3]) -> Result<f64> {
    let mut total = 0.0;
    for (c, t) in compensated.iter().zip(truth) {
        total += mse(c, t)?;
    }
    Ok(total)
}

/// PSNR in dB; `Exact` when the images are identical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Db(f64),
    Exact,
}

impl Psnr {
    pub fn label(self) -> String {
        match self {
            Psnr::Db(v) => format!("{v:.4}"),
            Psnr::Exact => "exact".to_string(),
        }
    }

    pub fn db(self) -> Option<f64> {
        match self {
            Psnr::Db(v) => Some(v),
            Psnr::Exact => None,
        }
    }
}

pub fn psnr_from_mse(mse: f64, max: f64) -> Psnr {
    if mse == 0.0 {
        Psnr::Exact
    } else {
        Psnr::Db(10.0 * (max * max / mse).log10())
    }
}

/// PSNR with the `[0, 255]` data range, or the compensated image's own maximum
/// when `per_image_max` is set.
pub fn psnr(compensated: &Image, truth: &Image, per_image_max: bool) -> Result<Psnr> {
    let m = mse(compensated, truth)?;
    let max = if per_image_max {
        compensated.min_max().1
    } else {
        INTENSITY_MAX
    };
    Ok(psnr_from_mse(m, max))
}

/// Squared central-difference gradient magnitude with replicated borders.
fn gradient_sq(img: &Image, x: usize, y: usize) -> f64 {
    let (x, y) = (x as isize, y as isize);
    let gx = (img.get_clamped(x + 1, y) - img.get_clamped(x - 1, y)) / 2.0;
    let gy = (img.get_clamped(x, y + 1) - img.get_clamped(x, y - 1)) / 2.0;
    gx * gx + gy * gy
}

/// Gradient-normalised RMS difference.
pub fn nrms(compensated: &Image, truth: &Image, epsilon: f64) -> Result<f64> {
    ensure_same_dims(compensated.dims(), truth.dims())?;
    let (w, h) = truth.dims();
    let mut acc = 0.0;
    for y in 0..h {
        for x in 0..w {
            let d = compensated.get(x, y) - truth.get(x, y);
            acc += d * d / (gradient_sq(truth, x, y) + epsilon);
        }
    }
    Ok((acc / (w * h) as f64).sqrt())
}

/// Per-pixel error map plus its mean over pixels valid in both fields.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub mean: f64,
    pub count: usize,
}

fn error_map(
    flow: &FlowField,
    gt: &FlowField,
    f: impl Fn(f64, f64, f64, f64) -> f64,
) -> Result<ErrorMap> {
    ensure_same_dims(flow.dims(), gt.dims())?;
    let n = flow.vectors().len();
    let mut values = vec![0.0; n];
    let mut valid = vec![false; n];
    let (mut sum, mut count) = (0.0, 0usize);
    for i in 0..n {
        if flow.valid()[i] && gt.valid()[i] {
            let (u, g) = (flow.vectors()[i], gt.vectors()[i]);
            let e = f(u.dx, u.dy, g.dx, g.dy);
            values[i] = e;
            valid[i] = true;
            sum += e;
            count += 1;
        }
    }
    let mean = if count == 0 { 0.0 } else { sum / count as f64 };
    Ok(ErrorMap {
        values,
        valid,
        mean,
        count,
    })
}

/// Angle in degrees between `(u, v, 1)` and `(u_gt, v_gt, 1)`.
pub fn angular_error_deg(u: f64, v: f64, ug: f64, vg: f64) -> f64 {
    let num = u * ug + v * vg + 1.0;
    let den = ((u * u + v * v + 1.0) * (ug * ug + vg * vg + 1.0)).sqrt();
    (num / den).clamp(-1.0, 1.0).acos().to_degrees()
}

pub fn angular_error(flow: &FlowField, gt: &FlowField) -> Result<ErrorMap> {
    error_map(flow, gt, angular_error_deg)
}

pub fn endpoint_error(flow: &FlowField, gt: &FlowField) -> Result<ErrorMap> {
    error_map(flow, gt, |u, v, ug, vg| (u - ug).hypot(v - vg))
}

/// One evaluation row.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method_name: String,
    pub mse: Option<f64>,
    pub psnr: Option<Psnr>,
    pub nrms: Option<f64>,
    /// Mean angular error in degrees.
    pub ae: Option<f64>,
    /// Mean endpoint error in pixels.
    pub aef: Option<f64>,
    pub runtime: f64,
    /// Pixels that entered the flow means.
    pub count: usize,
}

impl EvalReport {
    pub fn empty(method_name: &str) -> Self {
        EvalReport {
            method_name: method_name.to_string(),
            mse: None,
            psnr: None,
            nrms: None,
            ae: None,
            aef: None,
            runtime: 0.0,
            count: 0,
        }
    }
}

/// Compensation metrics (MSE, PSNR, NRMS) of `flow` on a frame pair.
pub fn compensation_metrics(
    frame1: &Image,
    frame2: &Image,
    flow: &FlowField,
    per_image_max: bool,
) -> Result<(f64, Psnr, f64)> {
    let comp = motion_compensate(frame2, flow)?;
    let m = mse(&comp, frame1)?;
    let max = if per_image_max {
        comp.min_max().1
    } else {
        INTENSITY_MAX
    };
    Ok((m, psnr_from_mse(m, max), nrms(&comp, frame1, NRMS_EPSILON)?))
}
