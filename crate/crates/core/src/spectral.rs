//! 2D DFT, phase correlation surfaces, peak bookkeeping and subpixel refinement.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::raster::{ensure_same_dims, FlowVector, Image};

/// Relative floor on the cross-power magnitude; bins below
/// `SPECTRAL_FLOOR * mean(|A||B|)` are zeroed instead of normalised.
pub const SPECTRAL_FLOOR: f64 = 1e-12;

/// Second peaks at or below this value make the ratio test report a single peak.
pub const PEAK_FLOOR: f64 = 1e-6;

/// Row-major complex spectrum, unnormalised forward convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    #[inline]
    pub fn get(&self, k: usize, l: usize) -> Complex64 {
        self.data[l * self.width + k]
    }
}

struct Plans {
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

#[derive(Default)]
struct FftCache {
    planner: Option<FftPlanner<f64>>,
    plans: HashMap<(usize, usize), Arc<Plans>>,
    scratch: Vec<Complex64>,
    transposed: Vec<Complex64>,
}

thread_local! {
    static FFT_CACHE: RefCell<FftCache> = RefCell::new(FftCache::default());
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], width: usize, height: usize) {
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for (x, &v) in row.iter().enumerate() {
            dst[x * height + y] = v;
        }
    }
}

/// In-place 2D transform of a row-major buffer. Unnormalised in both directions.
pub(crate) fn fft2_in_place(data: &mut [Complex64], width: usize, height: usize, inverse: bool) {
    debug_assert_eq!(data.len(), width * height);
    FFT_CACHE.with(|cell| {
        let cache = &mut *cell.borrow_mut();
        let planner = cache.planner.get_or_insert_with(FftPlanner::new);
        let p = cache
            .plans
            .entry((width, height))
            .or_insert_with(|| {
                let row_fwd = planner.plan_fft(width, FftDirection::Forward);
                let row_inv = planner.plan_fft(width, FftDirection::Inverse);
                let col_fwd = planner.plan_fft(height, FftDirection::Forward);
                let col_inv = planner.plan_fft(height, FftDirection::Inverse);
                let scratch_len = [&row_fwd, &row_inv, &col_fwd, &col_inv]
                    .iter()
                    .map(|f| f.get_inplace_scratch_len())
                    .max()
                    .unwrap_or(0);
                Arc::new(Plans {
                    row_fwd,
                    row_inv,
                    col_fwd,
                    col_inv,
                    scratch_len,
                })
            })
            .clone();
        let (row, col) = if inverse {
            (&p.row_inv, &p.col_inv)
        } else {
            (&p.row_fwd, &p.col_fwd)
        };
        if cache.scratch.len() < p.scratch_len {
            cache.scratch.resize(p.scratch_len, Complex64::default());
        }
        if cache.transposed.len() < data.len() {
            cache.transposed.resize(data.len(), Complex64::default());
        }
        let scratch = &mut cache.scratch[..p.scratch_len];
        let t = &mut cache.transposed[..data.len()];
        row.process_with_scratch(data, scratch);
        transpose(data, t, width, height);
        col.process_with_scratch(t, scratch);
        transpose(t, data, height, width);
    });
}

fn to_complex(image: &Image) -> Vec<Complex64> {
    image
        .data()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect()
}

/// Unnormalised forward 2D DFT.
pub fn forward_dft(image: &Image) -> Result<Spectrum> {
    let (w, h) = image.dims();
    if w < 2 || h < 2 {
        return Err(Error::Dimension(format!("DFT needs at least 2x2, got {w}x{h}")));
    }
    let mut data = to_complex(image);
    fft2_in_place(&mut data, w, h, false);
    Ok(Spectrum {
        width: w,
        height: h,
        data,
    })
}

/// Inverse 2D DFT scaled by `1/(W·H)`, so `inverse_dft(forward_dft(x)) == x`.
pub fn inverse_dft(spectrum: &Spectrum) -> Vec<Complex64> {
    let mut data = spectrum.data.clone();
    fft2_in_place(&mut data, spectrum.width, spectrum.height, true);
    let scale = 1.0 / (spectrum.width * spectrum.height) as f64;
    data.iter_mut().for_each(|c| *c *= scale);
    data
}

/// A recorded maximum of a correlation surface, in array coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub x: usize,
    pub y: usize,
    pub value: f64,
}

/// Real part of the inverse transform of the normalised cross-power spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSurface {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub peak1: Peak,
    /// Largest local maximum outside the 3x3 neighbourhood of `peak1`.
    pub peak2: Option<Peak>,
}

impl CorrelationSurface {
    /// Builds a surface from raw values and locates its peaks.
    pub fn from_values(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height);
        let (peak1, peak2) = find_peaks(&data, width, height);
        CorrelationSurface {
            width,
            height,
            data,
            peak1,
            peak2,
        }
    }

    #[inline]
    pub fn get_wrapped(&self, x: isize, y: isize) -> f64 {
        let xw = x.rem_euclid(self.width as isize) as usize;
        let yw = y.rem_euclid(self.height as isize) as usize;
        self.data[yw * self.width + xw]
    }

    /// Integer shift of `peak1`, unwrapped into `[-W/2, W/2) x [-H/2, H/2)`.
    pub fn integer_shift(&self) -> (isize, isize) {
        (
            unwrap_index(self.peak1.x, self.width),
            unwrap_index(self.peak1.y, self.height),
        )
    }
}

/// Maps an array index to a signed circular shift in `[-n/2, n/2)`.
pub fn unwrap_index(i: usize, n: usize) -> isize {
    if i >= n / 2 {
        i as isize - n as isize
    } else {
        i as isize
    }
}

fn is_local_max(data: &[f64], w: usize, h: usize, x: usize, y: usize) -> bool {
    let v = data[y * w + x];
    for dy in -1isize..=1 {
        for dx in -1isize..=1 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let nx = (x as isize + dx).rem_euclid(w as isize) as usize;
            let ny = (y as isize + dy).rem_euclid(h as isize) as usize;
            if data[ny * w + nx] > v {
                return false;
            }
        }
    }
    true
}

fn circular_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

fn find_peaks(data: &[f64], w: usize, h: usize) -> (Peak, Option<Peak>) {
    let mut best = 0;
    for (i, &v) in data.iter().enumerate() {
        if v > data[best] {
            best = i;
        }
    }
    let peak1 = Peak {
        x: best % w,
        y: best / w,
        value: data[best],
    };
    let mut peak2: Option<Peak> = None;
    for y in 0..h {
        for x in 0..w {
            if circular_distance(x, peak1.x, w) <= 1 && circular_distance(y, peak1.y, h) <= 1 {
                continue;
            }
            let v = data[y * w + x];
            if peak2.is_some_and(|p| v <= p.value) {
                continue;
            }
            if is_local_max(data, w, h, x, y) {
                peak2 = Some(Peak { x, y, value: v });
            }
        }
    }
    (peak1, peak2)
}

/// Options for building correlation surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpectralOptions {
    /// Multiply both inputs by a separable raised-cosine window before the DFT.
    pub taper: bool,
}

fn raised_cosine(image: &Image) -> Image {
    let (w, h) = image.dims();
    let wx = |x: usize| 0.5 - 0.5 * (2.0 * PI * (x as f64 + 0.5) / w as f64).cos();
    let wy = |y: usize| 0.5 - 0.5 * (2.0 * PI * (y as f64 + 0.5) / h as f64).cos();
    Image::from_fn(w, h, |x, y| image.get(x, y) * wx(x) * wy(y))
}

/// Phase correlation of `a` against `b`; the main peak sits at the shift
/// that carries `a` onto `b`.
pub fn phase_correlation_surface(a: &Image, b: &Image) -> Result<CorrelationSurface> {
    phase_correlation_surface_with(a, b, SpectralOptions::default())
}

pub fn phase_correlation_surface_with(
    a: &Image,
    b: &Image,
    opts: SpectralOptions,
) -> Result<CorrelationSurface> {
    ensure_same_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    if w < 2 || h < 2 {
        return Err(Error::Dimension(format!("DFT needs at least 2x2, got {w}x{h}")));
    }
    for (name, img) in [("first", a), ("second", b)] {
        if img.data().iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateInput(format!("{name} frame is all zero")));
        }
    }
    let (a, b) = if opts.taper {
        (raised_cosine(a), raised_cosine(b))
    } else {
        (a.clone(), b.clone())
    };
    let mut fa = to_complex(&a);
    let mut fb = to_complex(&b);
    fft2_in_place(&mut fa, w, h, false);
    fft2_in_place(&mut fb, w, h, false);

    let magnitudes: Vec<f64> = fa.iter().zip(&fb).map(|(x, y)| (x.norm_sqr() * y.norm_sqr()).sqrt()).collect();
    let floor = SPECTRAL_FLOOR * magnitudes.iter().sum::<f64>() / magnitudes.len() as f64;
    let mut cross: Vec<Complex64> = fb
        .iter()
        .zip(&fa)
        .zip(&magnitudes)
        .map(|((y, x), &m)| {
            if m < floor || m == 0.0 {
                Complex64::default()
            } else {
                y * x.conj() / m
            }
        })
        .collect();
    fft2_in_place(&mut cross, w, h, true);
    let scale = 1.0 / (w * h) as f64;
    let values = cross.iter().map(|c| c.re * scale).collect();
    Ok(CorrelationSurface::from_values(w, h, values))
}

/// Outcome of the highest-over-second-highest peak test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PeakRatio {
    Finite(f64),
    /// No second peak above [`PEAK_FLOOR`].
    SinglePeak,
}

impl PeakRatio {
    /// Finite value, or `f64::INFINITY` for the sentinel. For internal
    /// comparisons only; reports use [`PeakRatio::label`].
    pub fn as_f64(self) -> f64 {
        match self {
            PeakRatio::Finite(r) => r,
            PeakRatio::SinglePeak => f64::INFINITY,
        }
    }

    pub fn label(self) -> String {
        match self {
            PeakRatio::Finite(r) => format!("{r:.6}"),
            PeakRatio::SinglePeak => "single".to_string(),
        }
    }
}

pub fn peak_ratio(surface: &CorrelationSurface) -> PeakRatio {
    match surface.peak2 {
        Some(p2) if p2.value > PEAK_FLOOR => PeakRatio::Finite(surface.peak1.value / p2.value),
        _ => PeakRatio::SinglePeak,
    }
}

fn fractional_offset(c0: f64, plus: f64, minus: f64) -> f64 {
    let d = plus - minus;
    let denom = c0 + d.abs();
    if denom <= 0.0 || !denom.is_finite() {
        return 0.0;
    }
    let off = d / denom;
    if off.is_finite() {
        // |d| < c0 + |d| whenever c0 > 0; keep the open interval when it is not
        off.clamp(-1.0 + 1e-9, 1.0 - 1e-9)
    } else {
        0.0
    }
}

/// Signed shift of the main peak with the three-point fractional correction
/// `D / (C(0,0) + |D|)`, `D = C(1,0) - C(-1,0)` (and likewise in y).
pub fn subpixel_refine(surface: &CorrelationSurface) -> FlowVector {
    let (px, py) = (surface.peak1.x as isize, surface.peak1.y as isize);
    let c = |k: isize, l: isize| surface.get_wrapped(px + k, py + l);
    let c0 = c(0, 0);
    let off_x = fractional_offset(c0, c(1, 0), c(-1, 0));
    let off_y = fractional_offset(c0, c(0, 1), c(0, -1));
    let (sx, sy) = surface.integer_shift();
    FlowVector::new(sx as f64 + off_x, sy as f64 + off_y)
}

/// Shifts `image` by a fractional `(dx, dy)` with a linear phase ramp, so the
/// result equals `image(x - dx, y - dy)` under the periodic band-limited model.
pub fn fourier_shift(image: &Image, dx: f64, dy: f64) -> Image {
    let (w, h) = image.dims();
    let mut data = to_complex(image);
    fft2_in_place(&mut data, w, h, false);
    let freq = |k: usize, n: usize| unwrap_index(k, n) as f64 / n as f64;
    for l in 0..h {
        for k in 0..w {
            let (fx, fy) = (freq(k, w), freq(l, h));
            data[l * w + k] *= Complex64::from_polar(1.0, -2.0 * PI * (fx * dx + fy * dy));
        }
    }
    fft2_in_place(&mut data, w, h, true);
    // taking the real part symmetrises the unsigned Nyquist bins
    let scale = 1.0 / (w * h) as f64;
    Image::from_fn(w, h, |x, y| data[y * w + x].re * scale)
}
