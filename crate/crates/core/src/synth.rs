//! Synthetic multi-motion frame pairs with dense ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::raster::{FlowField, FlowVector, Image};
use crate::spectral::fourier_shift;

/// Window size the suite's motion bound is stated for.
pub const SUITE_WINDOW: usize = 32;

/// Minimum intensity variance of every suite window.
pub const MIN_WINDOW_VARIANCE: f64 = 100.0;

/// Periodic smoothstep-interpolated lattice noise, zero mean and unit
/// standard deviation. `cell` is the lattice spacing in pixels.
pub fn value_noise(width: usize, height: usize, seed: u64, cell: f64) -> Image {
    let nx = ((width as f64 / cell).round() as usize).max(1);
    let ny = ((height as f64 / cell).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lattice: Vec<f64> = (0..nx * ny).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let at = |i: usize, j: usize| lattice[(j % ny) * nx + (i % nx)];
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let raw = Image::from_fn(width, height, |x, y| {
        let gx = x as f64 * nx as f64 / width as f64;
        let gy = y as f64 * ny as f64 / height as f64;
        let (i, j) = (gx.floor() as usize, gy.floor() as usize);
        let (tx, ty) = (smooth(gx.fract()), smooth(gy.fract()));
        let top = at(i, j) * (1.0 - tx) + at(i + 1, j) * tx;
        let bottom = at(i, j + 1) * (1.0 - tx) + at(i + 1, j + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    });
    normalize(&raw)
}

fn normalize(img: &Image) -> Image {
    let mean = img.mean();
    let std = img.variance().sqrt().max(1e-12);
    Image::from_fn(img.width(), img.height(), |x, y| (img.get(x, y) - mean) / std)
}

/// Texture descriptor: multi-octave value noise around a mean intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Texture {
    pub mean: f64,
    /// Standard deviation of the texture in intensity units.
    pub contrast: f64,
    /// Finest lattice spacing in pixels; coarser octaves double it.
    pub cell: f64,
}

impl Texture {
    pub const fn new(mean: f64, contrast: f64) -> Self {
        Texture {
            mean,
            contrast,
            cell: 1.0,
        }
    }

    /// Canvas-sized periodic texture field.
    pub fn render(&self, width: usize, height: usize, seed: u64) -> Image {
        let octaves = [(1.0, 0.6), (2.0, 1.0), (4.0, 0.8)];
        let mut acc = vec![0.0; width * height];
        for (k, &(scale, weight)) in octaves.iter().enumerate() {
            let n = value_noise(width, height, seed.wrapping_mul(31).wrapping_add(k as u64), self.cell * scale);
            for (a, v) in acc.iter_mut().zip(n.data()) {
                *a += weight * v;
            }
        }
        let combined = normalize(&Image::new(width, height, acc).expect("finite noise"));
        Image::from_fn(width, height, |x, y| self.mean + self.contrast * combined.get(x, y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Axis-aligned rectangle, top-left corner at `(x, y)`.
    Rect { x: f64, y: f64, w: f64, h: f64 },
    Disk { cx: f64, cy: f64, r: f64 },
}

impl Shape {
    fn bounds(&self) -> (f64, f64, f64, f64) {
        match *self {
            Shape::Rect { x, y, w, h } => (x, y, x + w, y + h),
            Shape::Disk { cx, cy, r } => (cx - r, cy - r, cx + r, cy + r),
        }
    }

    /// Fraction of the unit pixel box at `(px, py)` covered by the shape moved by `v`.
    fn coverage(&self, px: usize, py: usize, v: FlowVector) -> f64 {
        let (x0, y0) = (px as f64 - v.dx, py as f64 - v.dy);
        match *self {
            Shape::Rect { x, y, w, h } => {
                let ox = ((x0 + 1.0).min(x + w) - x0.max(x)).max(0.0);
                let oy = ((y0 + 1.0).min(y + h) - y0.max(y)).max(0.0);
                ox * oy
            }
            Shape::Disk { cx, cy, r } => {
                const SUB: usize = 4;
                let mut hits = 0;
                for sy in 0..SUB {
                    for sx in 0..SUB {
                        let qx = x0 + (sx as f64 + 0.5) / SUB as f64;
                        let qy = y0 + (sy as f64 + 0.5) / SUB as f64;
                        if (qx - cx).powi(2) + (qy - cy).powi(2) <= r * r {
                            hits += 1;
                        }
                    }
                }
                hits as f64 / (SUB * SUB) as f64
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    pub shape: Shape,
    pub texture: Texture,
    pub motion: FlowVector,
}

/// A canvas with a moving textured background and objects listed back to front.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub background: Texture,
    pub background_motion: FlowVector,
    pub objects: Vec<SceneObject>,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < SUITE_WINDOW || self.height < SUITE_WINDOW {
            return Err(Error::Scene(format!(
                "canvas {}x{} is smaller than one window",
                self.width, self.height
            )));
        }
        let bound = SUITE_WINDOW as f64 / 2.0;
        let motions = std::iter::once(self.background_motion).chain(self.objects.iter().map(|o| o.motion));
        for v in motions {
            if !v.is_finite() || v.dx.abs() > bound || v.dy.abs() > bound {
                return Err(Error::Scene(format!(
                    "motion ({}, {}) exceeds ±{bound}",
                    v.dx, v.dy
                )));
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            let (x0, y0, x1, y1) = o.shape.bounds();
            if x1 <= 0.0 || y1 <= 0.0 || x0 >= self.width as f64 || y0 >= self.height as f64 {
                return Err(Error::Scene(format!("object {i} lies outside the canvas")));
            }
        }
        Ok(())
    }
}

/// Rendered frame pair with frame-1-anchored ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePair {
    pub name: String,
    pub frame1: Image,
    pub frame2: Image,
    pub gt: FlowField,
}

fn shifted_texture(tex: &Image, v: FlowVector) -> Image {
    if v.dx.fract() == 0.0 && v.dy.fract() == 0.0 {
        tex.circular_shift(v.dx as isize, v.dy as isize)
    } else {
        fourier_shift(tex, v.dx, v.dy)
    }
}

fn composite(spec: &SceneSpec, layers: &[Image], bg: &Image, displaced: bool) -> Image {
    let (w, h) = (spec.width, spec.height);
    let mut out = bg.clone().into_data();
    for (obj, layer) in spec.objects.iter().zip(layers) {
        let v = if displaced { obj.motion } else { FlowVector::ZERO };
        for y in 0..h {
            for x in 0..w {
                let a = obj.shape.coverage(x, y, v);
                if a > 0.0 {
                    let i = y * w + x;
                    out[i] = (1.0 - a) * out[i] + a * layer.get(x, y);
                }
            }
        }
    }
    Image::new(w, h, out.into_iter().map(|v| v.clamp(0.0, 255.0)).collect()).expect("finite frame")
}

/// Renders `spec` into two frames and the ground-truth flow of frame 1.
pub fn render_pair(spec: &SceneSpec) -> Result<ScenePair> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let bg_tex = spec.background.render(w, h, spec.seed.wrapping_mul(1000));
    let obj_tex: Vec<Image> = spec
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| o.texture.render(w, h, spec.seed.wrapping_mul(1000) + 1 + i as u64))
        .collect();

    let frame1 = composite(spec, &obj_tex, &bg_tex, false);
    let moved: Vec<Image> = spec
        .objects
        .iter()
        .zip(&obj_tex)
        .map(|(o, t)| shifted_texture(t, o.motion))
        .collect();
    let frame2 = composite(
        spec,
        &moved,
        &shifted_texture(&bg_tex, spec.background_motion),
        true,
    );

    let gt = FlowField::from_fn(w, h, |x, y| {
        spec.objects
            .iter()
            .rev()
            .find(|o| o.shape.coverage(x, y, FlowVector::ZERO) >= 0.5)
            .map_or(spec.background_motion, |o| o.motion)
    });
    Ok(ScenePair {
        name: spec.name.clone(),
        frame1,
        frame2,
        gt,
    })
}

/// Smallest intensity variance over the non-overlapping `size` blocks of `img`.
pub fn min_block_variance(img: &Image, size: usize) -> f64 {
    let mut min = f64::INFINITY;
    for by in (0..img.height() / size).map(|j| j * size) {
        for bx in (0..img.width() / size).map(|i| i * size) {
            let block = Image::from_fn(size, size, |x, y| img.get(bx + x, by + y));
            min = min.min(block.variance());
        }
    }
    min
}

fn rect(x: f64, y: f64, w: f64, h: f64) -> Shape {
    Shape::Rect { x, y, w, h }
}

fn obj(shape: Shape, mean: f64, motion: (f64, f64)) -> SceneObject {
    SceneObject {
        shape,
        texture: Texture::new(mean, 16.0),
        motion: FlowVector::new(motion.0, motion.1),
    }
}

/// The nine benchmark scenes on a `size x size` canvas.
pub fn standard_specs(seed: u64, size: usize) -> Vec<SceneSpec> {
    let s = size as f64 / 256.0;
    let bg = |mean: f64| Texture::new(mean, 16.0);
    let scene = |name: &str, k: u64, background: Texture, bgm: (f64, f64), objects: Vec<SceneObject>| {
        SceneSpec {
            name: name.to_string(),
            width: size,
            height: size,
            background,
            background_motion: FlowVector::new(bgm.0, bgm.1),
            objects,
            seed: seed.wrapping_mul(9).wrapping_add(k),
        }
    };
    vec![
        scene(
            "square_translation",
            0,
            bg(70.0),
            (1.0, 0.0),
            vec![obj(rect(80.0 * s, 72.0 * s, 96.0 * s, 88.0 * s), 180.0, (-2.0, 3.0))],
        ),
        scene(
            "disk_over_static",
            1,
            bg(170.0),
            (0.0, 0.0),
            vec![obj(Shape::Disk { cx: 128.0 * s, cy: 120.0 * s, r: 56.0 * s }, 60.0, (4.0, -1.0))],
        ),
        scene(
            "three_motions",
            2,
            bg(120.0),
            (-1.0, -1.0),
            vec![
                obj(rect(24.0 * s, 40.0 * s, 80.0 * s, 72.0 * s), 210.0, (3.0, 2.0)),
                obj(Shape::Disk { cx: 176.0 * s, cy: 168.0 * s, r: 48.0 * s }, 30.0, (-4.0, 1.0)),
            ],
        ),
        scene(
            "overlapping_objects",
            3,
            bg(60.0),
            (2.0, 0.0),
            vec![
                obj(rect(48.0 * s, 48.0 * s, 112.0 * s, 96.0 * s), 150.0, (0.0, 3.0)),
                obj(rect(112.0 * s, 112.0 * s, 96.0 * s, 96.0 * s), 230.0, (-3.0, -2.0)),
            ],
        ),
        scene(
            "thin_objects",
            4,
            bg(80.0),
            (0.0, 1.0),
            vec![
                obj(rect(60.0 * s, 20.0 * s, 12.0 * s, 216.0 * s), 190.0, (3.0, 0.0)),
                obj(rect(20.0 * s, 150.0 * s, 216.0 * s, 10.0 * s), 200.0, (0.0, -3.0)),
                obj(rect(170.0 * s, 30.0 * s, 8.0 * s, 96.0 * s), 180.0, (-2.0, 2.0)),
            ],
        ),
        scene(
            "low_contrast",
            5,
            bg(100.0),
            (-1.0, 0.0),
            vec![obj(rect(72.0 * s, 64.0 * s, 112.0 * s, 120.0 * s), 160.0, (2.0, 3.0))],
        ),
        scene(
            "subpixel_motions",
            6,
            bg(75.0),
            (-0.75, 0.25),
            vec![obj(rect(76.0 * s, 84.0 * s, 104.0 * s, 92.0 * s), 185.0, (1.5, -1.25))],
        ),
        scene(
            "four_objects",
            7,
            bg(128.0),
            (1.0, 1.0),
            vec![
                obj(rect(24.0 * s, 24.0 * s, 72.0 * s, 72.0 * s), 230.0, (-3.0, 0.0)),
                obj(rect(160.0 * s, 24.0 * s, 72.0 * s, 72.0 * s), 25.0, (0.0, -3.0)),
                obj(Shape::Disk { cx: 64.0 * s, cy: 190.0 * s, r: 40.0 * s }, 20.0, (2.0, -2.0)),
                obj(rect(152.0 * s, 152.0 * s, 80.0 * s, 80.0 * s), 235.0, (-2.0, -3.0)),
            ],
        ),
        scene(
            "large_motion",
            8,
            bg(90.0),
            (-3.0, 2.0),
            vec![obj(rect(64.0 * s, 64.0 * s, 128.0 * s, 112.0 * s), 200.0, (8.0, -6.0))],
        ),
    ]
}

/// The nine-scene benchmark on the default 256x256 canvas.
pub fn standard_suite(seed: u64) -> Result<Vec<ScenePair>> {
    standard_suite_sized(seed, 256)
}

pub fn standard_suite_sized(seed: u64, size: usize) -> Result<Vec<ScenePair>> {
    standard_specs(seed, size)
        .iter()
        .map(|spec| {
            let pair = render_pair(spec)?;
            let v = min_block_variance(&pair.frame1, SUITE_WINDOW);
            if v <= MIN_WINDOW_VARIANCE {
                return Err(Error::Scene(format!(
                    "scene {} has a window with variance {v:.1}",
                    spec.name
                )));
            }
            Ok(pair)
        })
        .collect()
}
