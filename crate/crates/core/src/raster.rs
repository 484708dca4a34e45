//! Raster containers and deterministic sampling primitives.

use crate::error::{Error, Result};

/// Single-channel floating point raster, row-major, nominal range `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("empty image {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} samples for a {width}x{height} image",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput(format!(
                "non-finite sample at ({}, {})",
                i % width,
                i / width
            )));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0 && value.is_finite());
        Image {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0);
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                assert!(v.is_finite(), "non-finite sample at ({x}, {y})");
                data.push(v);
            }
        }
        Image {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Periodic indexing: coordinates wrap modulo the image dimensions.
    #[inline]
    pub fn get_wrapped(&self, x: isize, y: isize) -> f64 {
        let xw = x.rem_euclid(self.width as isize) as usize;
        let yw = y.rem_euclid(self.height as isize) as usize;
        self.data[yw * self.width + xw]
    }

    /// Border-replicating integer access.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64
    }

    /// Element-wise `|self - other|`.
    pub fn abs_diff(&self, other: &Image) -> Result<Image> {
        ensure_same_dims(self.dims(), other.dims())?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .collect();
        Ok(Image {
            width: self.width,
            height: self.height,
            data,
        })
    }

    /// Circular shift: `out(x, y) = self(x - dx, y - dy)` with wrap-around.
    pub fn circular_shift(&self, dx: isize, dy: isize) -> Image {
        Image::from_fn(self.width, self.height, |x, y| {
            self.get_wrapped(x as isize - dx, y as isize - dy)
        })
    }
}

pub(crate) fn ensure_same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!(
            "{}x{} does not match {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

/// Displacement of a frame-1 pixel into frame 2, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlowVector {
    pub dx: f64,
    pub dy: f64,
}

impl FlowVector {
    pub const ZERO: FlowVector = FlowVector { dx: 0.0, dy: 0.0 };

    pub const fn new(dx: f64, dy: f64) -> Self {
        FlowVector { dx, dy }
    }

    pub fn norm(self) -> f64 {
        self.dx.hypot(self.dy)
    }

    pub fn is_finite(self) -> bool {
        self.dx.is_finite() && self.dy.is_finite()
    }

    pub fn scale(self, s: f64) -> Self {
        FlowVector::new(self.dx * s, self.dy * s)
    }
}

impl std::ops::Add for FlowVector {
    type Output = FlowVector;

    fn add(self, rhs: Self) -> Self {
        FlowVector::new(self.dx + rhs.dx, self.dy + rhs.dy)
    }
}

impl std::ops::Sub for FlowVector {
    type Output = FlowVector;

    fn sub(self, rhs: Self) -> Self {
        FlowVector::new(self.dx - rhs.dx, self.dy - rhs.dy)
    }
}

impl std::ops::Neg for FlowVector {
    type Output = FlowVector;

    fn neg(self) -> Self {
        FlowVector::new(-self.dx, -self.dy)
    }
}

/// Dense flow with a per-pixel validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    vectors: Vec<FlowVector>,
    valid: Vec<bool>,
}

impl FlowField {
    pub fn new(
        width: usize,
        height: usize,
        vectors: Vec<FlowVector>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let n = width * height;
        if n == 0 || vectors.len() != n || valid.len() != n {
            return Err(Error::Dimension(format!(
                "flow field {width}x{height} with {} vectors and {} mask entries",
                vectors.len(),
                valid.len()
            )));
        }
        if let Some(i) = (0..n).find(|&i| valid[i] && !vectors[i].is_finite()) {
            return Err(Error::DegenerateInput(format!(
                "non-finite vector at valid pixel ({}, {})",
                i % width,
                i / width
            )));
        }
        Ok(FlowField {
            width,
            height,
            vectors,
            valid,
        })
    }

    pub fn constant(width: usize, height: usize, v: FlowVector) -> Self {
        assert!(width > 0 && height > 0 && v.is_finite());
        FlowField {
            width,
            height,
            vectors: vec![v; width * height],
            valid: vec![true; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, FlowVector::ZERO)
    }

    /// Fully valid field from a per-pixel function.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> FlowVector,
    ) -> Self {
        assert!(width > 0 && height > 0);
        let mut vectors = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                assert!(v.is_finite(), "non-finite flow at ({x}, {y})");
                vectors.push(v);
            }
        }
        FlowField {
            width,
            height,
            valid: vec![true; vectors.len()],
            vectors,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn vectors(&self) -> &[FlowVector] {
        &self.vectors
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> FlowVector {
        self.vectors[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn set_invalid(&mut self, x: usize, y: usize) {
        self.valid[y * self.width + x] = false;
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Horizontal or vertical component as an image, invalid pixels read 0.
    pub(crate) fn component(&self, horizontal: bool) -> Image {
        Image::from_fn(self.width, self.height, |x, y| {
            let i = y * self.width + x;
            if !self.valid[i] {
                0.0
            } else if horizontal {
                self.vectors[i].dx
            } else {
                self.vectors[i].dy
            }
        })
    }
}

/// Square block cut from a parent image with periodic padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub center: (usize, usize),
    pub size: usize,
    pub pixels: Image,
}

/// Smallest correlation window the estimators accept.
pub const MIN_WINDOW: usize = 8;

pub(crate) fn check_window_size(size: usize) -> Result<()> {
    if size < MIN_WINDOW || !size.is_power_of_two() {
        return Err(Error::Config(format!(
            "window size {size} must be a power of two and at least {MIN_WINDOW}"
        )));
    }
    Ok(())
}

/// Cuts the `size x size` block centred on `center` from `image`, wrapping
/// out-of-range coordinates. The centre lands at index `(size/2, size/2)`.
///
/// Any power of two from 2 up is accepted here; the estimators additionally
/// require [`MIN_WINDOW`].
pub fn extract_window(image: &Image, center: (usize, usize), size: usize) -> Result<Window> {
    if size < 2 || !size.is_power_of_two() {
        return Err(Error::Config(format!("window size {size} is not a power of two")));
    }
    if size > image.width.min(image.height) {
        return Err(Error::Dimension(format!(
            "window {size} exceeds image {}x{}",
            image.width, image.height
        )));
    }
    let half = (size / 2) as isize;
    let (cx, cy) = (center.0 as isize, center.1 as isize);
    let pixels = Image::from_fn(size, size, |x, y| {
        image.get_wrapped(cx - half + x as isize, cy - half + y as isize)
    });
    Ok(Window {
        center,
        size,
        pixels,
    })
}

/// Bilinear interpolation with border clamping; exact at integer positions.
pub fn bilinear_sample(image: &Image, x: f64, y: f64) -> f64 {
    let max_x = (image.width - 1) as f64;
    let max_y = (image.height - 1) as f64;
    let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, max_x) };
    let y = if y.is_nan() { 0.0 } else { y.clamp(0.0, max_y) };
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as usize, y0 as usize);
    let x1 = (x0 + 1).min(image.width - 1);
    let y1 = (y0 + 1).min(image.height - 1);
    let top = image.get(x0, y0) * (1.0 - fx) + image.get(x1, y0) * fx;
    if fy == 0.0 {
        return top;
    }
    let bottom = image.get(x0, y1) * (1.0 - fx) + image.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Backward warp: `out(x, y) = src(x + dx, y + dy)` with clamped sampling.
pub fn warp_backward(src: &Image, flow: &FlowField) -> Result<Image> {
    ensure_same_dims(src.dims(), flow.dims())?;
    Ok(Image::from_fn(src.width, src.height, |x, y| {
        let v = flow.get(x, y);
        if !flow.is_valid(x, y) {
            return src.get(x, y);
        }
        bilinear_sample(src, x as f64 + v.dx, y as f64 + v.dy)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| (y * w + x) as f64)
    }

    #[test]
    fn image_rejects_bad_length_and_nan() {
        assert!(matches!(
            Image::new(2, 2, vec![0.0; 3]),
            Err(Error::Dimension(_))
        ));
        assert!(Image::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn interior_window_is_plain_crop() {
        let img = ramp(8, 8);
        let w = extract_window(&img, (4, 4), 4).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(w.pixels.get(x, y), img.get(x + 2, y + 2));
            }
        }
    }

    #[test]
    fn corner_window_wraps() {
        let img = ramp(8, 8);
        let w = extract_window(&img, (0, 0), 4).unwrap();
        assert_eq!(w.pixels.get(0, 0), img.get(6, 6));
        assert_eq!(w.pixels.get(1, 0), img.get(7, 6));
        assert_eq!(w.pixels.get(0, 1), img.get(6, 7));
        assert_eq!(w.pixels.get(1, 1), img.get(7, 7));
        assert_eq!(w.pixels.get(2, 2), img.get(0, 0));
    }

    #[test]
    fn window_errors() {
        let img = ramp(8, 8);
        assert!(matches!(
            extract_window(&img, (0, 0), 12),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            extract_window(&img, (0, 0), 16),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn bilinear_examples() {
        let img = Image::new(2, 1, vec![0.0, 100.0]).unwrap();
        assert_eq!(bilinear_sample(&img, 0.25, 0.0), 25.0);
        let img = ramp(5, 4);
        assert_eq!(bilinear_sample(&img, 3.0, 2.0), img.get(3, 2));
        let c = Image::filled(4, 4, 7.5);
        assert_eq!(bilinear_sample(&c, 1.37, 2.9), 7.5);
        assert_eq!(bilinear_sample(&c, -3.0, 20.0), 7.5);
    }

    proptest! {
        #[test]
        fn window_is_shift_equivariant(
            seed in 0u64..1000, a in 0isize..16, b in 0isize..16,
            cx in 0usize..16, cy in 0usize..16,
        ) {
            let img = Image::from_fn(16, 16, |x, y| ((x * 31 + y * 17 + seed as usize) % 97) as f64);
            let shifted = img.circular_shift(a, b);
            let c2 = ((cx as isize + a).rem_euclid(16) as usize, (cy as isize + b).rem_euclid(16) as usize);
            let w1 = extract_window(&img, (cx, cy), 8).unwrap();
            let w2 = extract_window(&shifted, c2, 8).unwrap();
            prop_assert_eq!(&w1.pixels, &w2.pixels);
            let again = extract_window(&w1.pixels, (4, 4), 8).unwrap();
            prop_assert_eq!(again.pixels.get(4, 4), img.get(cx, cy));
        }

        #[test]
        fn bilinear_stays_within_neighbours(x in 0.0f64..6.99, y in 0.0f64..6.99) {
            let img = Image::from_fn(8, 8, |x, y| ((x * 13 + y * 7) % 11) as f64);
            let v = bilinear_sample(&img, x, y);
            let (x0, y0) = (x.floor() as usize, y.floor() as usize);
            let n = [img.get(x0, y0), img.get(x0 + 1, y0), img.get(x0, y0 + 1), img.get(x0 + 1, y0 + 1)];
            let lo = n.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = n.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }
}
