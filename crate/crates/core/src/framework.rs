//! Coarse-to-fine sparse-to-dense flow: pyramid, keypoint selection, windowed
//! estimation at keypoints, Lucas-Kanade for the points dropped by the budget,
//! edge-aware densification and inter-layer warping.

use rayon::prelude::*;

use crate::bilateral::BilateralParams;
use crate::error::{Error, Result};
use crate::estimator::{estimate_with, Method, Mode, PointEstimate, TriggerPolicy};
use crate::raster::{bilinear_sample, ensure_same_dims, warp_backward, FlowField, FlowVector, Image, MIN_WINDOW};
use crate::spectral::{PeakRatio, SpectralOptions};

/// Upper bound on pyramid depth.
pub const MAX_LAYERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameworkConfig {
    /// Scale of the frame-difference threshold, `T_d = alpha * std(I_d)`.
    pub alpha: f64,
    /// Stride of the uniform keypoint grid.
    pub s_u: usize,
    /// Keypoint budget per layer.
    pub t_p: usize,
    pub m_w: usize,
    /// Decimation stops once both dimensions are below `min_width x min_height`.
    pub min_width: usize,
    pub min_height: usize,
    pub max_layers: usize,
    pub bilateral: BilateralParams,
    /// Fixed ratio threshold; the window-size rule applies when absent.
    pub t_r: Option<f64>,
    pub mode: Mode,
    pub lk_window: usize,
    pub lambda_min: f64,
    /// Spatial sigma of the densification weights.
    pub sigma_sd: f64,
    /// Range sigma of the densification weights.
    pub sigma_rd: f64,
    /// Number of nearest estimates blended per pixel.
    pub k_nearest: usize,
    pub spectral: SpectralOptions,
}

impl Default for FrameworkConfig {
    fn default() -> Self {
        FrameworkConfig {
            alpha: 2.0,
            s_u: 16,
            t_p: 2000,
            m_w: 32,
            min_width: 640,
            min_height: 360,
            max_layers: MAX_LAYERS,
            bilateral: BilateralParams::for_window(32),
            t_r: None,
            mode: Mode::Auto,
            lk_window: 15,
            lambda_min: 1e-4,
            sigma_sd: 16.0,
            sigma_rd: 25.0,
            k_nearest: 16,
            spectral: SpectralOptions::default(),
        }
    }
}

impl FrameworkConfig {
    pub fn trigger(&self) -> TriggerPolicy {
        self.t_r.map_or(TriggerPolicy::LogWindow, TriggerPolicy::Fixed)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("lambda_min", self.lambda_min),
            ("sigma_sd", self.sigma_sd),
            ("sigma_rd", self.sigma_rd),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.s_u < 2 {
            return Err(Error::Config(format!("s_u must be at least 2, got {}", self.s_u)));
        }
        if self.t_p < 16 {
            return Err(Error::Config(format!("t_p must be at least 16, got {}", self.t_p)));
        }
        if self.m_w < MIN_WINDOW || !self.m_w.is_power_of_two() {
            return Err(Error::Config(format!(
                "m_w must be a power of two and at least {MIN_WINDOW}, got {}",
                self.m_w
            )));
        }
        if self.min_width == 0 || self.min_height == 0 {
            return Err(Error::Config("pyramid threshold must be positive".into()));
        }
        if !(1..=MAX_LAYERS).contains(&self.max_layers) {
            return Err(Error::Config(format!(
                "max_layers must be between 1 and {MAX_LAYERS}, got {}",
                self.max_layers
            )));
        }
        if self.lk_window < 5 || self.lk_window % 2 == 0 {
            return Err(Error::Config(format!(
                "lk_window must be odd and at least 5, got {}",
                self.lk_window
            )));
        }
        if self.k_nearest == 0 {
            return Err(Error::Config("k_nearest must be positive".into()));
        }
        if let Some(t) = self.t_r {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Config(format!("t_r must be positive, got {t}")));
            }
        }
        self.bilateral.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLayer {
    pub frame1: Image,
    pub frame2: Image,
    /// Decimation factor relative to the original frames.
    pub scale: usize,
}

/// Frame pairs from the smallest layer to the original.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    pub layers: Vec<PyramidLayer>,
}

impl Pyramid {
    /// Power-of-two factors between consecutive layers.
    pub fn factors(&self) -> Vec<usize> {
        self.layers.windows(2).map(|w| w[0].scale / w[1].scale).collect()
    }
}

/// 2x2 box average; odd dimensions replicate their last row or column.
pub fn downsample(img: &Image) -> Image {
    let (w, h) = img.dims();
    Image::from_fn(w.div_ceil(2), h.div_ceil(2), |x, y| {
        let (sx, sy) = (2 * x as isize, 2 * y as isize);
        0.25 * (img.get_clamped(sx, sy)
            + img.get_clamped(sx + 1, sy)
            + img.get_clamped(sx, sy + 1)
            + img.get_clamped(sx + 1, sy + 1))
    })
}

pub fn build_pyramid(frame1: &Image, frame2: &Image, cfg: &FrameworkConfig) -> Result<Pyramid> {
    ensure_same_dims(frame1.dims(), frame2.dims())?;
    let below = |img: &Image| img.width() < cfg.min_width && img.height() < cfg.min_height;
    let mut chain = vec![(frame1.clone(), frame2.clone())];
    while cfg.max_layers > 1 && !below(&chain.last().expect("non-empty").0) {
        let (a, b) = chain.last().expect("non-empty");
        if a.width().min(a.height()).div_ceil(2) < MIN_WINDOW {
            break;
        }
        let next = (downsample(a), downsample(b));
        chain.push(next);
    }
    let decimations = chain.len() - 1;
    let mut picks = vec![decimations];
    if decimations >= 2 && cfg.max_layers >= 3 {
        picks.push(decimations / 2);
    }
    if decimations >= 1 {
        picks.push(0);
    }
    let layers = picks
        .into_iter()
        .map(|d| {
            let (a, b) = chain[d].clone();
            PyramidLayer {
                frame1: a,
                frame2: b,
                scale: 1 << d,
            }
        })
        .collect();
    Ok(Pyramid { layers })
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KeyPointSet {
    pub uniform: Vec<(usize, usize)>,
    pub difference: Vec<(usize, usize)>,
    pub retained_difference: Vec<(usize, usize)>,
    /// Difference points removed by the budget.
    pub dropped: Vec<(usize, usize)>,
}

impl KeyPointSet {
    /// Locations that receive a windowed spectral estimate.
    pub fn spectral(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.uniform.iter().chain(&self.retained_difference).copied()
    }
}

fn grid_axis(n: usize, step: usize) -> Vec<usize> {
    if n > step / 2 {
        (step / 2..n).step_by(step).collect()
    } else {
        vec![n / 2]
    }
}

fn uniform_grid(w: usize, h: usize, step: usize) -> Vec<(usize, usize)> {
    let xs = grid_axis(w, step);
    grid_axis(h, step)
        .into_iter()
        .flat_map(|y| xs.iter().map(move |&x| (x, y)))
        .collect()
}

/// Uniform grid points plus pixels whose frame difference reaches
/// `alpha * std`, thinned to fit the budget.
pub fn select_keypoints(frame1: &Image, frame2: &Image, cfg: &FrameworkConfig) -> Result<KeyPointSet> {
    select_keypoints_masked(frame1, frame2, None, cfg)
}

/// As [`select_keypoints`], with the difference zeroed where `mask` is false.
fn select_keypoints_masked(
    frame1: &Image,
    frame2: &Image,
    mask: Option<&[bool]>,
    cfg: &FrameworkConfig,
) -> Result<KeyPointSet> {
    let mut diff = frame1.abs_diff(frame2)?;
    let (w, h) = diff.dims();
    if let Some(mask) = mask {
        let data = diff.into_data().into_iter().zip(mask).map(|(d, &m)| if m { d } else { 0.0 }).collect();
        diff = Image::new(w, h, data)?;
    }
    let mut step = cfg.s_u;
    let mut uniform = uniform_grid(w, h, step);
    while uniform.len() > cfg.t_p {
        step += 1;
        uniform = uniform_grid(w, h, step);
    }

    let threshold = cfg.alpha * diff.variance().sqrt();
    let difference: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| {
            let d = diff.get(x, y);
            d > 0.0 && d >= threshold
        })
        .collect();

    let room = cfg.t_p - uniform.len();
    let (retained_difference, dropped) = if difference.len() <= room {
        (difference.clone(), Vec::new())
    } else if room == 0 {
        (Vec::new(), difference.clone())
    } else {
        let j = difference.len().div_ceil(room);
        let mut kept = Vec::with_capacity(room);
        let mut gone = Vec::with_capacity(difference.len() - room);
        for (i, &p) in difference.iter().enumerate() {
            if i % j == 0 {
                kept.push(p);
            } else {
                gone.push(p);
            }
        }
        (kept, gone)
    };
    Ok(KeyPointSet {
        uniform,
        difference,
        retained_difference,
        dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LkEstimate {
    pub flow: FlowVector,
    /// False when the structure tensor is too close to singular.
    pub valid: bool,
    pub min_eigenvalue: f64,
}

/// Single least-squares Lucas-Kanade solve over an odd `window` around `center`.
pub fn lucas_kanade_at(
    frame1: &Image,
    frame2: &Image,
    center: (usize, usize),
    window: usize,
    lambda_min: f64,
) -> Result<LkEstimate> {
    ensure_same_dims(frame1.dims(), frame2.dims())?;
    if window < 5 || window % 2 == 0 {
        return Err(Error::Config(format!("Lucas-Kanade window must be odd and at least 5, got {window}")));
    }
    let r = (window / 2) as isize;
    let (cx, cy) = (center.0 as isize, center.1 as isize);
    let (mut gxx, mut gxy, mut gyy, mut bx, mut by) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for y in cy - r..=cy + r {
        for x in cx - r..=cx + r {
            let ix = 0.5 * (frame1.get_clamped(x + 1, y) - frame1.get_clamped(x - 1, y));
            let iy = 0.5 * (frame1.get_clamped(x, y + 1) - frame1.get_clamped(x, y - 1));
            let it = frame2.get_clamped(x, y) - frame1.get_clamped(x, y);
            gxx += ix * ix;
            gxy += ix * iy;
            gyy += iy * iy;
            bx -= ix * it;
            by -= iy * it;
        }
    }
    let half_trace = 0.5 * (gxx + gyy);
    let det = gxx * gyy - gxy * gxy;
    let min_eigenvalue = half_trace - (half_trace * half_trace - det).max(0.0).sqrt();
    if !(min_eigenvalue >= lambda_min) {
        return Ok(LkEstimate {
            flow: FlowVector::ZERO,
            valid: false,
            min_eigenvalue,
        });
    }
    let flow = FlowVector::new((gyy * bx - gxy * by) / det, (gxx * by - gxy * bx) / det);
    Ok(LkEstimate {
        flow,
        valid: flow.is_finite(),
        min_eigenvalue,
    })
}

/// Bucket grid over estimate locations for nearest-neighbour queries.
struct SpatialIndex {
    cell: usize,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
}

impl SpatialIndex {
    fn new(points: &[(usize, usize)], width: usize, height: usize, cell: usize) -> Self {
        let cols = width.div_ceil(cell).max(1);
        let rows = height.div_ceil(cell).max(1);
        let mut buckets = vec![Vec::new(); cols * rows];
        for (i, &(x, y)) in points.iter().enumerate() {
            buckets[(y / cell).min(rows - 1) * cols + (x / cell).min(cols - 1)].push(i);
        }
        SpatialIndex {
            cell,
            cols,
            rows,
            buckets,
        }
    }

    /// Up to `k` nearest points as `(squared distance, index)`, ties broken by index.
    fn nearest(&self, points: &[(usize, usize)], p: (usize, usize), k: usize, out: &mut Vec<(usize, usize)>) {
        out.clear();
        let (pcx, pcy) = ((p.0 / self.cell) as isize, (p.1 / self.cell) as isize);
        let max_ring = self.cols.max(self.rows) as isize;
        for ring in 0..=max_ring {
            for cy in pcy - ring..=pcy + ring {
                if cy < 0 || cy >= self.rows as isize {
                    continue;
                }
                for cx in pcx - ring..=pcx + ring {
                    if cx < 0 || cx >= self.cols as isize {
                        continue;
                    }
                    if (cy - pcy).abs() != ring && (cx - pcx).abs() != ring {
                        continue;
                    }
                    for &i in &self.buckets[cy as usize * self.cols + cx as usize] {
                        let (qx, qy) = points[i];
                        let dx = qx.abs_diff(p.0);
                        let dy = qy.abs_diff(p.1);
                        out.push((dx * dx + dy * dy, i));
                    }
                }
            }
            out.sort_unstable();
            out.truncate(k);
            let reach = ring as usize * self.cell;
            if out.len() == k && out[k - 1].0 <= reach * reach {
                break;
            }
        }
    }
}

/// Weight of an estimate in densification.
fn estimate_weight(e: &PointEstimate) -> f64 {
    if e.degraded {
        0.5
    } else {
        1.0
    }
}

/// Edge-aware interpolation of sparse estimates: each pixel blends its `k`
/// nearest estimates with spatial and guide-intensity Gaussian weights.
pub fn densify(
    estimates: &[PointEstimate],
    guide: &Image,
    sigma_sd: f64,
    sigma_rd: f64,
    k: usize,
) -> Result<FlowField> {
    if estimates.is_empty() {
        return Err(Error::DegenerateInput("densification needs at least one estimate".into()));
    }
    if let Some(e) = estimates.iter().find(|e| !e.flow.is_finite()) {
        return Err(Error::DegenerateInput(format!("non-finite estimate at {:?}", e.location)));
    }
    let (w, h) = guide.dims();
    if let Some(e) = estimates.iter().find(|e| e.location.0 >= w || e.location.1 >= h) {
        return Err(Error::Dimension(format!("estimate at {:?} outside {w}x{h}", e.location)));
    }
    let points: Vec<(usize, usize)> = estimates.iter().map(|e| e.location).collect();
    let cell = (sigma_sd.round() as usize).clamp(4, 64);
    let index = SpatialIndex::new(&points, w, h, cell);
    let k = k.min(points.len());
    let inv_s = 1.0 / (2.0 * sigma_sd * sigma_sd);
    let inv_r = 1.0 / (2.0 * sigma_rd * sigma_rd);
    let rows: Vec<Vec<FlowVector>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut near = Vec::with_capacity(4 * k);
            (0..w)
                .map(|x| {
                    index.nearest(&points, (x, y), k, &mut near);
                    let g = guide.get(x, y);
                    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
                    for &(d2, i) in near.iter() {
                        let e = &estimates[i];
                        let (ex, ey) = e.location;
                        let dg = g - guide.get(ex, ey);
                        let wgt = estimate_weight(e) * (-(d2 as f64) * inv_s - dg * dg * inv_r).exp();
                        sx += wgt * e.flow.dx;
                        sy += wgt * e.flow.dy;
                        sw += wgt;
                    }
                    if sw > 0.0 && sw.is_finite() {
                        FlowVector::new(sx / sw, sy / sw)
                    } else {
                        estimates[near[0].1].flow
                    }
                })
                .collect()
        })
        .collect();
    FlowField::new(w, h, rows.into_iter().flatten().collect(), vec![true; w * h])
}

/// Frame 2 warped onto frame 1 by `flow`, and the absolute difference to frame 1.
pub fn warp_and_residual(frame1: &Image, frame2: &Image, flow: &FlowField) -> Result<(Image, Image)> {
    ensure_same_dims(frame1.dims(), frame2.dims())?;
    let warped = warp_backward(frame2, flow)?;
    let residual = frame1.abs_diff(&warped)?;
    Ok((warped, residual))
}

/// Bilinear resampling of a flow field to `width x height`, vectors scaled by `factor`.
pub fn upsample_flow(flow: &FlowField, width: usize, height: usize, factor: f64) -> FlowField {
    let (u, v) = (flow.component(true), flow.component(false));
    let (sx, sy) = (flow.width() as f64 / width as f64, flow.height() as f64 / height as f64);
    FlowField::from_fn(width, height, |x, y| {
        let px = (x as f64 + 0.5) * sx - 0.5;
        let py = (y as f64 + 0.5) * sy - 0.5;
        FlowVector::new(
            factor * bilinear_sample(&u, px, py),
            factor * bilinear_sample(&v, px, py),
        )
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerStats {
    pub width: usize,
    pub height: usize,
    pub scale: usize,
    /// Correlation window actually used on this layer.
    pub window: usize,
    pub uniform: usize,
    pub difference: usize,
    pub retained: usize,
    pub dropped: usize,
    /// Windowed spectral estimations performed.
    pub spectral_estimations: usize,
    pub blpc_estimations: usize,
    pub lk_valid: usize,
    pub lk_invalid: usize,
    /// Mean absolute residual of the original frames compensated with this
    /// layer's flow upsampled to full resolution.
    pub residual_mean: f64,
}

#[derive(Debug, Clone)]
pub struct FlowReport {
    pub flow: FlowField,
    pub layers: Vec<LayerStats>,
}

fn largest_pow2_at_most(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - n.leading_zeros())
    }
}

fn scaled_params(params: &BilateralParams, m_w: usize, window: usize) -> BilateralParams {
    if window == m_w {
        return *params;
    }
    let s = window as f64 / m_w as f64;
    BilateralParams {
        sigma_s1: params.sigma_s1 * s,
        sigma_s2: params.sigma_s2 * s,
        ..*params
    }
}

/// Residual flow between `frame1` and the already warped `frame2` of one layer.
/// Whether the displaced point `p + v` lies at least `margin` pixels inside a `w x h` frame.
fn lands_inside(p: (usize, usize), v: FlowVector, margin: f64, w: usize, h: usize) -> bool {
    let (x, y) = (p.0 as f64 + v.dx, p.1 as f64 + v.dy);
    x >= margin && y >= margin && x <= (w - 1) as f64 - margin && y <= (h - 1) as f64 - margin
}

/// Residual flow between `frame1` and `frame2`, which was warped by `base`.
/// Pixels whose warp sampled outside the frame neither seed difference
/// keypoints nor receive Lucas-Kanade estimates.
fn layer_residual(
    frame1: &Image,
    frame2: &Image,
    base: &FlowField,
    cfg: &FrameworkConfig,
    stats: &mut LayerStats,
) -> Result<FlowField> {
    let (w, h) = frame1.dims();
    let window = cfg.m_w.min(largest_pow2_at_most(w.min(h)));
    let params = scaled_params(&cfg.bilateral, cfg.m_w, window);
    let inside: Vec<bool> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|p| lands_inside(p, base.get(p.0, p.1), 0.0, w, h))
        .collect();
    let keypoints = select_keypoints_masked(frame1, frame2, Some(&inside), cfg)?;
    stats.window = window;
    stats.uniform = keypoints.uniform.len();
    stats.difference = keypoints.difference.len();
    stats.retained = keypoints.retained_difference.len();
    stats.dropped = keypoints.dropped.len();

    let spectral: Vec<(usize, usize)> = keypoints.spectral().collect();
    let results: Vec<Option<PointEstimate>> = spectral
        .par_iter()
        .map(|&p| {
            match estimate_with(frame1, frame2, p, window, &params, cfg.trigger(), cfg.mode, cfg.spectral) {
                Ok(e) => Ok(Some(e)),
                Err(Error::DegenerateInput(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    stats.spectral_estimations = spectral.len();
    let mut estimates: Vec<PointEstimate> = results.into_iter().flatten().collect();
    stats.blpc_estimations = estimates.iter().filter(|e| e.method == Method::Blpc).count();
    if estimates.is_empty() {
        return Ok(FlowField::zeros(w, h));
    }
    let provisional = densify(&estimates, frame1, cfg.sigma_sd, cfg.sigma_rd, cfg.k_nearest)?;
    if keypoints.dropped.is_empty() {
        return Ok(provisional);
    }

    let guided = warp_backward(frame2, &provisional)?;
    let margin = (cfg.lk_window / 2 + 1) as f64;
    let usable: Vec<(usize, usize)> = keypoints
        .dropped
        .iter()
        .copied()
        .filter(|&(x, y)| lands_inside((x, y), base.get(x, y) + provisional.get(x, y), margin, w, h))
        .collect();
    stats.lk_invalid += keypoints.dropped.len() - usable.len();
    let lk: Vec<LkEstimate> = usable
        .par_iter()
        .map(|&p| lucas_kanade_at(frame1, &guided, p, cfg.lk_window, cfg.lambda_min))
        .collect::<Result<_>>()?;
    for (&p, e) in usable.iter().zip(&lk) {
        if !e.valid {
            stats.lk_invalid += 1;
            continue;
        }
        stats.lk_valid += 1;
        estimates.push(PointEstimate {
            location: p,
            flow: provisional.get(p.0, p.1) + e.flow,
            ratio: PeakRatio::SinglePeak,
            method: Method::Lk,
            peak_value: 0.0,
            degraded: false,
            blpc_ratio: None,
        });
    }
    densify(&estimates, frame1, cfg.sigma_sd, cfg.sigma_rd, cfg.k_nearest)
}

/// Dense flow from frame 1 to frame 2 with per-layer statistics.
pub fn estimate_flow_report(frame1: &Image, frame2: &Image, cfg: &FrameworkConfig) -> Result<FlowReport> {
    cfg.validate()?;
    ensure_same_dims(frame1.dims(), frame2.dims())?;
    let pyramid = build_pyramid(frame1, frame2, cfg)?;
    if frame1 == frame2 {
        let (w, h) = frame1.dims();
        return Ok(FlowReport {
            flow: FlowField::zeros(w, h),
            layers: Vec::new(),
        });
    }
    let mut flow: Option<(FlowField, usize)> = None;
    let mut layers = Vec::with_capacity(pyramid.layers.len());
    for layer in &pyramid.layers {
        let (w, h) = layer.frame1.dims();
        let base = match &flow {
            Some((prev, prev_scale)) => upsample_flow(prev, w, h, (*prev_scale / layer.scale) as f64),
            None => FlowField::zeros(w, h),
        };
        let (warped, _) = warp_and_residual(&layer.frame1, &layer.frame2, &base)?;
        let mut stats = LayerStats {
            width: w,
            height: h,
            scale: layer.scale,
            window: 0,
            uniform: 0,
            difference: 0,
            retained: 0,
            dropped: 0,
            spectral_estimations: 0,
            blpc_estimations: 0,
            lk_valid: 0,
            lk_invalid: 0,
            residual_mean: 0.0,
        };
        let residual = layer_residual(&layer.frame1, &warped, &base, cfg, &mut stats)?;
        let total = FlowField::from_fn(w, h, |x, y| base.get(x, y) + residual.get(x, y));
        let full = if layer.scale == 1 {
            total.clone()
        } else {
            upsample_flow(&total, frame1.width(), frame1.height(), layer.scale as f64)
        };
        stats.residual_mean = warp_and_residual(frame1, frame2, &full)?.1.mean();
        layers.push(stats);
        flow = Some((total, layer.scale));
    }
    let (flow, _) = flow.expect("at least one layer");
    Ok(FlowReport { flow, layers })
}

pub fn estimate_flow(frame1: &Image, frame2: &Image, cfg: &FrameworkConfig) -> Result<FlowField> {
    Ok(estimate_flow_report(frame1, frame2, cfg)?.flow)
}
