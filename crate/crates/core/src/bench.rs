//! Dense per-pixel estimation and suite-level evaluation.
//!
//! Every pixel gets its own wrap-padded window, which is the setting in which
//! multiple motions inside one window hurt plain phase correlation the most.

use std::time::Instant;

use rayon::prelude::*;

use crate::bilateral::BilateralParams;
use crate::error::Result;
use crate::estimator::{estimate_with, Method, Mode, PointEstimate, TriggerPolicy};
use crate::metrics::{angular_error, compensation_metrics, endpoint_error, EvalReport, Psnr};
use crate::raster::{FlowField, Image};
use crate::spectral::SpectralOptions;
use crate::synth::ScenePair;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseConfig {
    pub m_w: usize,
    pub bilateral: BilateralParams,
    pub trigger: TriggerPolicy,
    pub spectral: SpectralOptions,
    /// PSNR against the compensated image's own maximum instead of 255.
    pub psnr_per_image_max: bool,
}

impl Default for DenseConfig {
    fn default() -> Self {
        DenseConfig {
            m_w: 32,
            bilateral: BilateralParams::for_window(32),
            trigger: TriggerPolicy::LogWindow,
            spectral: SpectralOptions::default(),
            psnr_per_image_max: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DenseResult {
    pub flow: FlowField,
    pub estimates: Vec<PointEstimate>,
}

impl DenseResult {
    pub fn count(&self, method: Method) -> usize {
        self.estimates.iter().filter(|e| e.method == method).count()
    }
}

/// Estimates every pixel independently. Output order is row-major regardless
/// of how rows are scheduled.
pub fn dense_flow(frame1: &Image, frame2: &Image, mode: Mode, cfg: &DenseConfig) -> Result<DenseResult> {
    let (w, h) = frame1.dims();
    let rows: Vec<Vec<PointEstimate>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    estimate_with(
                        frame1,
                        frame2,
                        (x, y),
                        cfg.m_w,
                        &cfg.bilateral,
                        cfg.trigger,
                        mode,
                        cfg.spectral,
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let estimates: Vec<PointEstimate> = rows.into_iter().flatten().collect();
    let vectors = estimates.iter().map(|e| e.flow).collect();
    let flow = FlowField::new(w, h, vectors, vec![true; w * h])?;
    Ok(DenseResult { flow, estimates })
}

/// Metrics of one estimated field against a scene.
pub fn evaluate_pair(
    pair: &ScenePair,
    flow: &FlowField,
    method_name: &str,
    runtime: f64,
    per_image_max: bool,
) -> Result<EvalReport> {
    let (mse, psnr, nrms) = compensation_metrics(&pair.frame1, &pair.frame2, flow, per_image_max)?;
    let ae = angular_error(flow, &pair.gt)?;
    let aef = endpoint_error(flow, &pair.gt)?;
    Ok(EvalReport {
        method_name: method_name.to_string(),
        mse: Some(mse),
        psnr: Some(psnr),
        nrms: Some(nrms),
        ae: Some(ae.mean),
        aef: Some(aef.mean),
        runtime,
        count: aef.count,
    })
}

/// Averages per-scene rows into one row per method. PSNR is averaged in dB
/// over the scenes that were not exact.
pub fn aggregate(method_name: &str, rows: &[EvalReport]) -> EvalReport {
    let mean = |f: &dyn Fn(&EvalReport) -> Option<f64>| {
        let vals: Vec<f64> = rows.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let psnr = if rows.iter().all(|r| r.psnr == Some(Psnr::Exact)) && !rows.is_empty() {
        Some(Psnr::Exact)
    } else {
        mean(&|r| r.psnr.and_then(Psnr::db)).map(Psnr::Db)
    };
    EvalReport {
        method_name: method_name.to_string(),
        mse: mean(&|r| r.mse),
        psnr,
        nrms: mean(&|r| r.nrms),
        ae: mean(&|r| r.ae),
        aef: mean(&|r| r.aef),
        runtime: rows.iter().map(|r| r.runtime).sum(),
        count: rows.iter().map(|r| r.count).sum(),
    }
}

/// Dense evaluation of one method over a suite: per-scene rows and the aggregate.
pub fn run_suite(
    suite: &[ScenePair],
    mode: Mode,
    cfg: &DenseConfig,
) -> Result<(Vec<EvalReport>, EvalReport)> {
    let mut rows = Vec::with_capacity(suite.len());
    for pair in suite {
        let start = Instant::now();
        let dense = dense_flow(&pair.frame1, &pair.frame2, mode, cfg)?;
        let runtime = start.elapsed().as_secs_f64();
        rows.push(evaluate_pair(pair, &dense.flow, mode.name(), runtime, cfg.psnr_per_image_max)?);
    }
    let total = aggregate(mode.name(), &rows);
    Ok((rows, total))
}
