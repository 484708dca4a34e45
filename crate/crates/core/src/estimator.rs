//! Windowed motion estimation: plain phase correlation, the bilateral variant,
//! and the peak-ratio switch between them.

use crate::bilateral::{asymmetric_bilateral_pair, BilateralParams};
use crate::error::Result;
use crate::raster::{check_window_size, extract_window, FlowVector, Image};
use crate::spectral::{
    peak_ratio, phase_correlation_surface_with, subpixel_refine, CorrelationSurface, PeakRatio,
    SpectralOptions,
};

/// Filtered windows whose peak magnitude stays below this are treated as empty.
const ENERGY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Pc,
    Blpc,
    Lk,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pc => "pc",
            Method::Blpc => "blpc",
            Method::Lk => "lk",
        }
    }
}

/// When the bilateral estimator replaces plain phase correlation.
///
/// The switch fires when the highest correlation peak is *not* clearly above
/// the second one, `P1/P2 < T_r`, which is what two comparable motions inside
/// one window look like.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TriggerPolicy {
    /// `T_r = 1 + 1/log2(m_w)`.
    LogWindow,
    Fixed(f64),
    /// Never switch; plain phase correlation everywhere.
    Never,
}

impl TriggerPolicy {
    pub fn threshold(self, m_w: usize) -> Option<f64> {
        match self {
            TriggerPolicy::LogWindow => Some(1.0 + 1.0 / (m_w as f64).log2()),
            TriggerPolicy::Fixed(t) => Some(t),
            TriggerPolicy::Never => None,
        }
    }

    pub fn fires(self, ratio: PeakRatio, m_w: usize) -> bool {
        match (self.threshold(m_w), ratio) {
            (Some(t), PeakRatio::Finite(r)) => r < t,
            _ => false,
        }
    }
}

/// How a location is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Pc,
    Blpc,
    /// Plain phase correlation, switching to the bilateral estimator on the ratio test.
    Auto,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pc" => Ok(Mode::Pc),
            "blpc" => Ok(Mode::Blpc),
            "auto" => Ok(Mode::Auto),
            other => Err(format!("unknown method '{other}' (expected pc, blpc or auto)")),
        }
    }
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Pc => "pc",
            Mode::Blpc => "blpc",
            Mode::Auto => "auto",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimate {
    pub location: (usize, usize),
    pub flow: FlowVector,
    /// Peak ratio of the plain phase correlation surface at this location.
    pub ratio: PeakRatio,
    pub method: Method,
    pub peak_value: f64,
    /// Set when the bilateral estimator had nothing left to correlate and the
    /// plain estimate was kept instead.
    pub degraded: bool,
    /// Peak ratio of the bilateral surface, when one was computed.
    pub blpc_ratio: Option<PeakRatio>,
}

fn bounded(v: FlowVector, m_w: usize) -> FlowVector {
    let b = m_w as f64 / 2.0;
    FlowVector::new(v.dx.clamp(-b, b), v.dy.clamp(-b, b))
}

/// Correlation surface of the co-sited wrap-padded windows around `center`.
pub fn pc_surface_at(
    frame1: &Image,
    frame2: &Image,
    center: (usize, usize),
    m_w: usize,
    opts: SpectralOptions,
) -> Result<CorrelationSurface> {
    check_window_size(m_w)?;
    let a = extract_window(frame1, center, m_w)?;
    let b = extract_window(frame2, center, m_w)?;
    phase_correlation_surface_with(&a.pixels, &b.pixels, opts)
}

fn crop_center(image: &Image, size: usize) -> Image {
    let ox = (image.width() - size) / 2;
    let oy = (image.height() - size) / 2;
    Image::from_fn(size, size, |x, y| image.get(x + ox, y + oy))
}

/// Bilateral-filtered window pair around `center`, or `None` when the filter
/// suppressed everything in one of the frames.
pub fn filtered_windows_at(
    frame1: &Image,
    frame2: &Image,
    center: (usize, usize),
    m_w: usize,
    params: &BilateralParams,
) -> Result<Option<(Image, Image)>> {
    check_window_size(m_w)?;
    let wide = params.wide_region && 2 * m_w <= frame1.width().min(frame1.height());
    let size = if wide { 2 * m_w } else { m_w };
    let a = extract_window(frame1, center, size)?;
    let b = extract_window(frame2, center, size)?;
    let pair = asymmetric_bilateral_pair(&a.pixels, &b.pixels, params)?;
    let (first, second) = if wide {
        (crop_center(&pair.first, m_w), crop_center(&pair.second, m_w))
    } else {
        (pair.first, pair.second)
    };
    let peak = |img: &Image| img.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak(&first) < ENERGY_FLOOR || peak(&second) < ENERGY_FLOOR {
        return Ok(None);
    }
    Ok(Some((first, second)))
}

pub fn blpc_surface_at(
    frame1: &Image,
    frame2: &Image,
    center: (usize, usize),
    m_w: usize,
    params: &BilateralParams,
    opts: SpectralOptions,
) -> Result<Option<CorrelationSurface>> {
    match filtered_windows_at(frame1, frame2, center, m_w, params)? {
        Some((a, b)) => Ok(Some(phase_correlation_surface_with(&a, &b, opts)?)),
        None => Ok(None),
    }
}

fn from_surface(
    location: (usize, usize),
    surface: &CorrelationSurface,
    m_w: usize,
    method: Method,
) -> PointEstimate {
    PointEstimate {
        location,
        flow: bounded(subpixel_refine(surface), m_w),
        ratio: peak_ratio(surface),
        method,
        peak_value: surface.peak1.value,
        degraded: false,
        blpc_ratio: None,
    }
}

/// Plain phase correlation at one location.
pub fn pc_estimate(
    frame1: &Image,
    frame2: &Image,
    center: (usize, usize),
    m_w: usize,
) -> Result<PointEstimate> {
    pc_estimate_with(frame1, frame2, center, m_w, SpectralOptions::default())
}

pub fn pc_estimate_with(
    frame1: &Image,
    frame2: &Image,
    center: (usize, usize),
    m_w: usize,
    opts: SpectralOptions,
) -> Result<PointEstimate> {
    let surface = pc_surface_at(frame1, frame2, center, m_w, opts)?;
    Ok(from_surface(center, &surface, m_w, Method::Pc))
}

fn blpc_from_pc(
    frame1: &Image,
    frame2: &Image,
    pc: PointEstimate,
    m_w: usize,
    params: &BilateralParams,
    opts: SpectralOptions,
) -> Result<PointEstimate> {
    match blpc_surface_at(frame1, frame2, pc.location, m_w, params, opts)? {
        Some(surface) => {
            let ratio = peak_ratio(&surface);
            Ok(PointEstimate {
                flow: bounded(subpixel_refine(&surface), m_w),
                method: Method::Blpc,
                peak_value: surface.peak1.value,
                blpc_ratio: Some(ratio),
                ..pc
            })
        }
        None => Ok(PointEstimate {
            degraded: true,
            ..pc
        }),
    }
}

/// Bilateral phase correlation at one location. Falls back to the plain
/// estimate, flagged as degraded, when the prefilter leaves no energy.
pub fn blpc_estimate(
    frame1: &Image,
    frame2: &Image,
    center: (usize, usize),
    m_w: usize,
    params: &BilateralParams,
) -> Result<PointEstimate> {
    let opts = SpectralOptions::default();
    let pc = pc_estimate_with(frame1, frame2, center, m_w, opts)?;
    blpc_from_pc(frame1, frame2, pc, m_w, params, opts)
}

/// Plain estimate, replaced by the bilateral one when the ratio test fires.
pub fn estimate_at(
    frame1: &Image,
    frame2: &Image,
    center: (usize, usize),
    m_w: usize,
    params: &BilateralParams,
    policy: TriggerPolicy,
) -> Result<PointEstimate> {
    estimate_with(
        frame1,
        frame2,
        center,
        m_w,
        params,
        policy,
        Mode::Auto,
        SpectralOptions::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_with(
    frame1: &Image,
    frame2: &Image,
    center: (usize, usize),
    m_w: usize,
    params: &BilateralParams,
    policy: TriggerPolicy,
    mode: Mode,
    opts: SpectralOptions,
) -> Result<PointEstimate> {
    let pc = pc_estimate_with(frame1, frame2, center, m_w, opts)?;
    let switch = match mode {
        Mode::Pc => false,
        Mode::Blpc => true,
        Mode::Auto => policy.fires(pc.ratio, m_w),
    };
    if switch {
        blpc_from_pc(frame1, frame2, pc, m_w, params, opts)
    } else {
        Ok(pc)
    }
}
