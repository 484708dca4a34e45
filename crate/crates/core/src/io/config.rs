//! Flat `key = value` run configuration with `#` comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::read_bytes;
use crate::bilateral::BilateralParams;
use crate::error::{Error, Result};
use crate::estimator::Mode;
use crate::framework::FrameworkConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Tsv,
}

impl ReportFormat {
    pub fn separator(self) -> char {
        match self {
            ReportFormat::Csv => ',',
            ReportFormat::Tsv => '\t',
        }
    }

    fn name(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Tsv => "tsv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub framework: FrameworkConfig,
    pub output: Option<PathBuf>,
    pub viz: Option<PathBuf>,
    pub ratio_map: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub report_format: ReportFormat,
    pub psnr_per_image_max: bool,
    /// Worker cap; all available cores when absent.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            framework: FrameworkConfig::default(),
            output: None,
            viz: None,
            ratio_map: None,
            report: None,
            report_format: ReportFormat::Csv,
            psnr_per_image_max: false,
            threads: None,
        }
    }
}

const KEYS: &[&str] = &[
    "alpha",
    "s_u",
    "t_p",
    "m_w",
    "min_width",
    "min_height",
    "max_layers",
    "t_r",
    "method",
    "lk_window",
    "lambda_min",
    "sigma_sd",
    "sigma_rd",
    "k_nearest",
    "taper",
    "sigma_s1",
    "sigma_s2",
    "sigma_r",
    "sigma_r2",
    "slice_m",
    "wide_region",
    "output",
    "viz",
    "ratio_map",
    "report",
    "report_format",
    "psnr_per_image_max",
    "threads",
];

struct Entry {
    line: usize,
    value: String,
}

fn bad(key: &str, e: &Entry, why: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {}: {key} = {}: {why}", e.line, e.value))
}

fn number<T: FromStr>(key: &str, e: &Entry) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    e.value.parse().map_err(|err| bad(key, e, err))
}

fn boolean(key: &str, e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, e, "expected true or false")),
    }
}

/// `none`/`auto` for absent, otherwise a number.
fn optional<T: FromStr>(key: &str, e: &Entry, word: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if e.value == word {
        Ok(None)
    } else {
        number(key, e).map(Some)
    }
}

fn path(e: &Entry) -> Option<PathBuf> {
    (e.value != "none").then(|| PathBuf::from(&e.value))
}

impl RunConfig {
    /// Parses a configuration document. Unset keys take their defaults; the
    /// bilateral spatial sigmas follow `m_w` and `sigma_sd` follows `s_u`
    /// unless given explicitly.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key '{key}'", i + 1)));
            }
            let entry = Entry {
                line: i + 1,
                value: value.trim().to_string(),
            };
            if entries.insert(key.to_string(), entry).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", i + 1)));
            }
        }

        let mut cfg = RunConfig::default();
        let get = |k: &str| entries.get(k);
        let fw = &mut cfg.framework;
        if let Some(e) = get("m_w") {
            fw.m_w = number("m_w", e)?;
        }
        if let Some(e) = get("s_u") {
            fw.s_u = number("s_u", e)?;
        }
        fw.bilateral = BilateralParams::for_window(fw.m_w);
        fw.sigma_sd = fw.s_u as f64;
        for (key, e) in &entries {
            let key = key.as_str();
            match key {
                "m_w" | "s_u" => {}
                "alpha" => fw.alpha = number(key, e)?,
                "t_p" => fw.t_p = number(key, e)?,
                "min_width" => fw.min_width = number(key, e)?,
                "min_height" => fw.min_height = number(key, e)?,
                "max_layers" => fw.max_layers = number(key, e)?,
                "t_r" => fw.t_r = optional(key, e, "auto")?,
                "method" => fw.mode = Mode::from_str(&e.value).map_err(|err| bad(key, e, err))?,
                "lk_window" => fw.lk_window = number(key, e)?,
                "lambda_min" => fw.lambda_min = number(key, e)?,
                "sigma_sd" => fw.sigma_sd = number(key, e)?,
                "sigma_rd" => fw.sigma_rd = number(key, e)?,
                "k_nearest" => fw.k_nearest = number(key, e)?,
                "taper" => fw.spectral.taper = boolean(key, e)?,
                "sigma_s1" => fw.bilateral.sigma_s1 = number(key, e)?,
                "sigma_s2" => fw.bilateral.sigma_s2 = number(key, e)?,
                "sigma_r" => fw.bilateral.sigma_r = number(key, e)?,
                "sigma_r2" => fw.bilateral.sigma_r2 = optional(key, e, "none")?,
                "slice_m" => fw.bilateral.slice_m = number(key, e)?,
                "wide_region" => fw.bilateral.wide_region = boolean(key, e)?,
                "output" => cfg.output = path(e),
                "viz" => cfg.viz = path(e),
                "ratio_map" => cfg.ratio_map = path(e),
                "report" => cfg.report = path(e),
                "report_format" => {
                    cfg.report_format = match e.value.as_str() {
                        "csv" => ReportFormat::Csv,
                        "tsv" => ReportFormat::Tsv,
                        _ => return Err(bad(key, e, "expected csv or tsv")),
                    }
                }
                "psnr_per_image_max" => cfg.psnr_per_image_max = boolean(key, e)?,
                "threads" => {
                    cfg.threads = optional(key, e, "auto")?;
                    if cfg.threads == Some(0) {
                        return Err(bad(key, e, "must be at least 1"));
                    }
                }
                _ => unreachable!("key list checked above"),
            }
        }
        cfg.framework.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let bytes = read_bytes(path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
            offset: e.utf8_error().valid_up_to(),
            message: "configuration is not UTF-8".into(),
        })?;
        RunConfig::parse(&text)
    }

    /// Every key with its resolved value, parseable by [`RunConfig::parse`].
    pub fn to_document(&self) -> String {
        let fw = &self.framework;
        let b = &fw.bilateral;
        let opt_path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("alpha", fw.alpha.to_string());
        put("s_u", fw.s_u.to_string());
        put("t_p", fw.t_p.to_string());
        put("m_w", fw.m_w.to_string());
        put("min_width", fw.min_width.to_string());
        put("min_height", fw.min_height.to_string());
        put("max_layers", fw.max_layers.to_string());
        put("t_r", fw.t_r.map_or("auto".into(), |t| t.to_string()));
        put("method", fw.mode.name().into());
        put("lk_window", fw.lk_window.to_string());
        put("lambda_min", fw.lambda_min.to_string());
        put("sigma_sd", fw.sigma_sd.to_string());
        put("sigma_rd", fw.sigma_rd.to_string());
        put("k_nearest", fw.k_nearest.to_string());
        put("taper", fw.spectral.taper.to_string());
        put("sigma_s1", b.sigma_s1.to_string());
        put("sigma_s2", b.sigma_s2.to_string());
        put("sigma_r", b.sigma_r.to_string());
        put("sigma_r2", b.sigma_r2.map_or("none".into(), |s| s.to_string()));
        put("slice_m", b.slice_m.to_string());
        put("wide_region", b.wide_region.to_string());
        put("output", opt_path(&self.output));
        put("viz", opt_path(&self.viz));
        put("ratio_map", opt_path(&self.ratio_map));
        put("report", opt_path(&self.report));
        put("report_format", self.report_format.name().into());
        put("psnr_per_image_max", self.psnr_per_image_max.to_string());
        put("threads", self.threads.map_or("auto".into(), |t| t.to_string()));
        out
    }
}
