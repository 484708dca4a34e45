//! Gaussian kernels and the asymmetric bilateral prefilter.
//!
//! The prefilter works on a pair of co-sited blocks. A set of anchor
//! intensities is read from the neighbourhood of the frame-1 block centre and
//! every anchor produces one fixed-intensity slice per frame:
//!
//! ```text
//! Q_k = (G_s ⊗ (w_k · I)) / (G_s ⊗ w_k),   w_k(q) = exp(-(I_fk - I(q))² / 2σ_r²)
//! ```
//!
//! At pixels whose intensity equals `I_fk`, `Q_k` is the exact bilateral
//! filter. Slices are merged with the same range weight evaluated at the
//! output pixel, averaged over anchors, so pixels unlike every anchor fade
//! towards zero. Frame 1 uses a tighter spatial sigma than frame 2.
//! Convolutions are periodic, matching the DFT model.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::raster::{ensure_same_dims, Image};
use crate::spectral::fft2_in_place;

/// Denominators below this value suppress the slice pixel.
pub const DIVISION_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilateralParams {
    /// Spatial sigma applied to frame 1.
    pub sigma_s1: f64,
    /// Spatial sigma applied to frame 2; must exceed `sigma_s1`.
    pub sigma_s2: f64,
    /// Range sigma in intensity units.
    pub sigma_r: f64,
    /// Optional frame-2 range sigma; `sigma_r` is used when absent.
    pub sigma_r2: Option<f64>,
    /// Side of the centre neighbourhood that supplies the anchors (odd).
    pub slice_m: usize,
    /// Filter a `2·m_w` region around each window and crop its centre.
    pub wide_region: bool,
}

impl BilateralParams {
    pub fn for_window(m_w: usize) -> Self {
        BilateralParams {
            sigma_s1: m_w as f64 / 8.0,
            sigma_s2: m_w as f64 / 2.0,
            sigma_r: 30.0,
            sigma_r2: None,
            slice_m: 3,
            wide_region: false,
        }
    }

    pub fn frame2_sigma_r(&self) -> f64 {
        self.sigma_r2.unwrap_or(self.sigma_r)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.sigma_s1) || !positive(self.sigma_s2) {
            return Err(Error::Config("spatial sigmas must be positive".into()));
        }
        if self.sigma_s1 >= self.sigma_s2 {
            return Err(Error::Config(format!(
                "sigma_s1 ({}) must be smaller than sigma_s2 ({})",
                self.sigma_s1, self.sigma_s2
            )));
        }
        if !positive(self.sigma_r) || !self.sigma_r2.map_or(true, positive) {
            return Err(Error::Config("range sigma must be positive".into()));
        }
        if self.slice_m == 0 || self.slice_m % 2 == 0 {
            return Err(Error::Config(format!(
                "slice_m must be odd and at least 1, got {}",
                self.slice_m
            )));
        }
        Ok(())
    }
}

impl Default for BilateralParams {
    fn default() -> Self {
        Self::for_window(32)
    }
}

/// `1/(2πσ²) · exp(-d²/(2σ²))`.
#[inline]
pub fn gaussian(d2: f64, sigma: f64) -> f64 {
    (-d2 / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma)
}

#[inline]
fn range_weight(diff: f64, sigma_r: f64) -> f64 {
    (-(diff * diff) / (2.0 * sigma_r * sigma_r)).exp()
}

/// Square 2D Gaussian kernel of side `2·radius + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub radius: usize,
    pub data: Vec<f64>,
}

impl Kernel {
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    /// Tap at offset `(dx, dy)` from the centre.
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius as isize;
        self.data[((dy + r) as usize) * self.side() + (dx + r) as usize]
    }

    /// Folds the taps onto an `n x n` torus, index `(dx mod n, dy mod n)`.
    pub fn periodized(&self, n: usize) -> Vec<f64> {
        let r = self.radius as isize;
        let mut out = vec![0.0; n * n];
        for dy in -r..=r {
            for dx in -r..=r {
                let x = dx.rem_euclid(n as isize) as usize;
                let y = dy.rem_euclid(n as isize) as usize;
                out[y * n + x] += self.at(dx, dy);
            }
        }
        out
    }
}

pub fn default_radius(sigma: f64) -> usize {
    (3.0 * sigma).ceil() as usize
}

pub fn gaussian_kernel(sigma: f64, radius: usize) -> Result<Kernel> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Config(format!("kernel sigma must be positive, got {sigma}")));
    }
    if radius < default_radius(sigma) {
        return Err(Error::Config(format!(
            "radius {radius} is below 3 sigma for sigma {sigma}"
        )));
    }
    let side = 2 * radius + 1;
    let r = radius as isize;
    let mut data = Vec::with_capacity(side * side);
    for dy in -r..=r {
        for dx in -r..=r {
            data.push(gaussian((dx * dx + dy * dy) as f64, sigma));
        }
    }
    Ok(Kernel { radius, data })
}

struct PeriodicGaussian {
    size: (usize, usize),
    spectrum: Vec<f64>,
}

thread_local! {
    static KERNELS: RefCell<HashMap<(usize, usize, u64), Arc<PeriodicGaussian>>> =
        RefCell::new(HashMap::new());
}

fn periodic_gaussian(w: usize, h: usize, sigma: f64) -> Arc<PeriodicGaussian> {
    KERNELS.with(|cell| {
        cell.borrow_mut()
            .entry((w, h, sigma.to_bits()))
            .or_insert_with(|| {
                let kernel = gaussian_kernel(sigma, default_radius(sigma)).expect("validated sigma");
                let r = kernel.radius as isize;
                let mut taps = vec![Complex64::default(); w * h];
                for dy in -r..=r {
                    for dx in -r..=r {
                        let x = dx.rem_euclid(w as isize) as usize;
                        let y = dy.rem_euclid(h as isize) as usize;
                        taps[y * w + x].re += kernel.at(dx, dy);
                    }
                }
                fft2_in_place(&mut taps, w, h, false);
                // symmetric taps give a real spectrum
                Arc::new(PeriodicGaussian {
                    size: (w, h),
                    spectrum: taps.iter().map(|c| c.re).collect(),
                })
            })
            .clone()
    })
}

/// Periodic convolution of two real fields at once, packed as re/im.
fn convolve_pair(kernel: &PeriodicGaussian, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = kernel.size;
    let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
    fft2_in_place(&mut buf, w, h, false);
    for (c, &k) in buf.iter_mut().zip(&kernel.spectrum) {
        *c *= k;
    }
    fft2_in_place(&mut buf, w, h, true);
    let scale = 1.0 / (w * h) as f64;
    buf.iter().map(|c| (c.re * scale, c.im * scale)).unzip()
}

/// Normalised periodic Gaussian blur, `(G ⊗ I) / ΣG`.
pub fn gaussian_blur(image: &Image, sigma: f64) -> Result<Image> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Config(format!("blur sigma must be positive, got {sigma}")));
    }
    let (w, h) = image.dims();
    let kernel = periodic_gaussian(w, h, sigma);
    let ones = vec![1.0; w * h];
    let (num, den) = convolve_pair(&kernel, image.data(), &ones);
    Image::new(w, h, num.iter().zip(&den).map(|(n, d)| n / d).collect())
}

/// Brute-force bilateral filter of `window` with `sigma_s1` and `sigma_r`,
/// periodic in space. Used as the oracle for the slice construction.
pub fn reference_bilateral(window: &Image, params: &BilateralParams) -> Image {
    let (w, h) = window.dims();
    let kernel = gaussian_kernel(params.sigma_s1, default_radius(params.sigma_s1))
        .expect("sigma_s1 must be positive");
    let r = kernel.radius as isize;
    Image::from_fn(w, h, |px, py| {
        let ip = window.get(px, py);
        let (mut num, mut den) = (0.0, 0.0);
        for dy in -r..=r {
            for dx in -r..=r {
                let iq = window.get_wrapped(px as isize + dx, py as isize + dy);
                let wgt = kernel.at(dx, dy) * range_weight(ip - iq, params.sigma_r);
                num += wgt * iq;
                den += wgt;
            }
        }
        if den < DIVISION_FLOOR {
            0.0
        } else {
            num / den
        }
    })
}

/// Anchor intensities: the `m x m` neighbourhood of the block centre, row-major,
/// duplicates retained.
pub fn anchor_intensities(window: &Image, slice_m: usize) -> Vec<f64> {
    let (cx, cy) = ((window.width() / 2) as isize, (window.height() / 2) as isize);
    let half = (slice_m / 2) as isize;
    let mut out = Vec::with_capacity(slice_m * slice_m);
    for dy in -half..=half {
        for dx in -half..=half {
            out.push(window.get_wrapped(cx + dx, cy + dy));
        }
    }
    out
}

/// One fixed-intensity slice `Q_k` of `image` for the anchor `anchor`.
pub fn slice_output(image: &Image, anchor: f64, sigma_s: f64, sigma_r: f64) -> Image {
    let (w, h) = image.dims();
    let kernel = periodic_gaussian(w, h, sigma_s);
    slice_with(&kernel, image, anchor, sigma_r)
}

fn slice_with(kernel: &PeriodicGaussian, image: &Image, anchor: f64, sigma_r: f64) -> Image {
    let (w, h) = image.dims();
    let mut out = vec![0.0; w * h];
    let (mut buf, mut weights) = (Vec::new(), Vec::new());
    visit_slice(kernel, image, anchor, sigma_r, &mut buf, &mut weights, |i, _, q| out[i] = q);
    Image::new(w, h, out).expect("finite slice")
}

/// Computes the slice of `anchor` and calls `sink(index, range_weight, value)`
/// for every pixel. `buf` is scratch space reused across calls.
fn visit_slice(
    kernel: &PeriodicGaussian,
    image: &Image,
    anchor: f64,
    sigma_r: f64,
    buf: &mut Vec<Complex64>,
    weights: &mut Vec<f64>,
    mut sink: impl FnMut(usize, f64, f64),
) {
    let (w, h) = kernel.size;
    weights.clear();
    weights.extend(image.data().iter().map(|&v| range_weight(anchor - v, sigma_r)));
    buf.clear();
    buf.extend(weights.iter().zip(image.data()).map(|(&g, &v)| Complex64::new(g * v, g)));
    fft2_in_place(buf, w, h, false);
    for (c, &k) in buf.iter_mut().zip(&kernel.spectrum) {
        *c *= k;
    }
    fft2_in_place(buf, w, h, true);
    let floor = DIVISION_FLOOR * (w * h) as f64;
    for (i, (c, &g)) in buf.iter().zip(weights.iter()).enumerate() {
        let q = if c.im < floor { 0.0 } else { c.re / c.im };
        sink(i, g, q);
    }
}

fn filter_frame(image: &Image, anchors: &[f64], sigma_s: f64, sigma_r: f64) -> Image {
    let (w, h) = image.dims();
    let kernel = periodic_gaussian(w, h, sigma_s);
    let mut acc = vec![0.0; w * h];
    let mut distinct: Vec<(f64, usize)> = Vec::with_capacity(anchors.len());
    for &anchor in anchors {
        match distinct.iter_mut().find(|(a, _)| a.to_bits() == anchor.to_bits()) {
            Some(entry) => entry.1 += 1,
            None => distinct.push((anchor, 1)),
        }
    }
    let (mut buf, mut weights) = (Vec::with_capacity(w * h), Vec::with_capacity(w * h));
    for &(anchor, mult) in &distinct {
        let m = mult as f64;
        visit_slice(&kernel, image, anchor, sigma_r, &mut buf, &mut weights, |i, g, q| acc[i] += m * g * q);
    }
    let n = anchors.len() as f64;
    Image::new(w, h, acc.into_iter().map(|v| v / n).collect()).expect("finite output")
}

/// Filtered block pair `(I^B_1, I^B_2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredPair {
    pub first: Image,
    pub second: Image,
    pub anchors: Vec<f64>,
}

impl FilteredPair {
    /// Sum of squares of both outputs, used to detect fully suppressed pairs.
    pub fn energy(&self) -> (f64, f64) {
        let e = |img: &Image| img.data().iter().map(|v| v * v).sum::<f64>();
        (e(&self.first), e(&self.second))
    }
}

/// Asymmetric bilateral prefilter of a co-sited block pair. Anchors come from
/// `window1`; frame 1 is filtered with `sigma_s1`, frame 2 with `sigma_s2`.
pub fn asymmetric_bilateral_pair(
    window1: &Image,
    frame2_region: &Image,
    params: &BilateralParams,
) -> Result<FilteredPair> {
    params.validate()?;
    ensure_same_dims(window1.dims(), frame2_region.dims())?;
    let anchors = anchor_intensities(window1, params.slice_m);
    let first = filter_frame(window1, &anchors, params.sigma_s1, params.sigma_r);
    let second = filter_frame(
        frame2_region,
        &anchors,
        params.sigma_s2,
        params.frame2_sigma_r(),
    );
    Ok(FilteredPair {
        first,
        second,
        anchors,
    })
}
