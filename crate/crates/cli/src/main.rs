use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use blpc::bench::{run_suite, DenseConfig};
use blpc::estimator::Mode;
use blpc::framework::estimate_flow_report;
use blpc::io::{self, ReportFormat, RunConfig};
use blpc::metrics::{angular_error, compensation_metrics, endpoint_error, EvalReport};
use blpc::synth::standard_suite_sized;
use blpc::Error;

#[derive(Parser)]
#[command(name = "blpc", version, about = "Bilateral phase correlation optical flow")]
struct Cli {
    /// Maximum worker threads (all cores when unset).
    #[arg(long, global = true, env = "BLPC_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate dense flow from frame 1 to frame 2.
    Flow(FlowArgs),
    /// Score a flow field against ground truth and/or by motion compensation.
    Eval(EvalArgs),
    /// Generate a synthetic benchmark suite.
    Synth(SynthArgs),
    /// Dense per-pixel evaluation of estimators over a suite directory.
    Bench(BenchArgs),
}

#[derive(Args)]
struct FlowArgs {
    frame1: Option<PathBuf>,
    frame2: Option<PathBuf>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// pc, blpc or auto.
    #[arg(long)]
    method: Option<Mode>,
    /// Colour-coded flow PNG.
    #[arg(long)]
    viz: Option<PathBuf>,
    /// Log-scaled PNG of the per-pixel correlation peak ratio.
    #[arg(long)]
    ratio_map: Option<PathBuf>,
    /// Report per-layer statistics and runtime on stderr.
    #[arg(long)]
    timing: bool,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    flow: PathBuf,
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long, num_args = 2, value_names = ["FRAME1", "FRAME2"])]
    frames: Option<Vec<PathBuf>>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    psnr_per_image_max: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "standard")]
    suite: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Canvas side in pixels.
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    suite: PathBuf,
    /// Comma-separated estimators: pc, blpc, auto.
    #[arg(long, value_delimiter = ',', default_value = "pc,blpc")]
    methods: Vec<Mode>,
    #[arg(long)]
    report: PathBuf,
    /// Optional per-scene rows.
    #[arg(long)]
    per_scene: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    m_w: usize,
    #[arg(long)]
    psnr_per_image_max: bool,
}

/// Diagnostic with the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = match error.downcast_ref::<Error>() {
            Some(Error::Dimension(_) | Error::Config(_)) => 2,
            _ => 1,
        };
        Failure { code, error }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        error: anyhow::anyhow!(msg.into()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(0) => Err(usage("--threads must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli.command)),
            Err(e) => Err(Failure::from(e)),
        },
        None => run(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let mut line = String::new();
            for cause in f.error.chain().map(|e| e.to_string()) {
                if !line.ends_with(&cause) {
                    if !line.is_empty() {
                        line.push_str(": ");
                    }
                    line.push_str(&cause);
                }
            }
            eprintln!("blpc: {line}");
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Flow(a) => flow(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
        Command::Bench(a) => bench(a),
    }
}

fn flow(a: FlowArgs) -> Result<(), Failure> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(m) = a.method {
        cfg.framework.mode = m;
    }
    if a.output.is_some() {
        cfg.output = a.output.clone();
    }
    if a.viz.is_some() {
        cfg.viz = a.viz.clone();
    }
    if a.ratio_map.is_some() {
        cfg.ratio_map = a.ratio_map.clone();
    }
    if a.print_config {
        print!("{}", cfg.to_document());
        return Ok(());
    }
    let (Some(p1), Some(p2)) = (&a.frame1, &a.frame2) else {
        return Err(usage("flow needs two frames"));
    };
    let Some(output) = cfg.output.clone() else {
        return Err(usage("flow needs an output path (-o or 'output' in the config)"));
    };
    let run = || -> Result<(), Failure> {
        let f1 = io::read_image(p1).with_context(|| format!("reading {}", p1.display()))?;
        let f2 = io::read_image(p2).with_context(|| format!("reading {}", p2.display()))?;
        let start = Instant::now();
        let report = estimate_flow_report(&f1, &f2, &cfg.framework)?;
        let elapsed = start.elapsed().as_secs_f64();
        io::write_flo(&report.flow, &output)?;
        if let Some(viz) = &cfg.viz {
            let rgb = io::flow_to_color(&report.flow, None);
            io::write_rgb_png(viz, rgb.width, rgb.height, &rgb.data)?;
        }
        if let Some(path) = &cfg.ratio_map {
            write_ratio_map(&f1, &f2, &cfg, path)?;
        }
        if a.timing {
            for (i, l) in report.layers.iter().enumerate() {
                eprintln!(
                    "layer {i}: {}x{} window {} keypoints {}+{} dropped {} spectral {} blpc {} lk {} residual {:.4}",
                    l.width,
                    l.height,
                    l.window,
                    l.uniform,
                    l.retained,
                    l.dropped,
                    l.spectral_estimations,
                    l.blpc_estimations,
                    l.lk_valid,
                    l.residual_mean
                );
            }
            eprintln!("time: {elapsed:.3} s");
        }
        Ok(())
    };
    match cfg.threads {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(Failure::from)?
            .install(run),
        _ => run(),
    }
}

fn write_ratio_map(f1: &blpc::Image, f2: &blpc::Image, cfg: &RunConfig, path: &Path) -> Result<(), Failure> {
    let fw = &cfg.framework;
    let window = fw.m_w.min(1 << f1.width().min(f1.height()).ilog2());
    let dense = DenseConfig {
        m_w: window,
        bilateral: fw.bilateral,
        trigger: fw.trigger(),
        spectral: fw.spectral,
        psnr_per_image_max: cfg.psnr_per_image_max,
    };
    let d = blpc::bench::dense_flow(f1, f2, Mode::Pc, &dense)?;
    let ratios: Vec<_> = d.estimates.iter().map(|e| e.ratio).collect();
    io::write_gray_png(path, f1.width(), f1.height(), &io::ratio_map_to_gray(&ratios))?;
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    if a.gt.is_none() && a.frames.is_none() {
        return Err(usage("eval needs --gt and/or --frames"));
    }
    let flow = io::read_flo(&a.flow)?;
    let mut row = EvalReport::empty("eval");
    row.count = flow.valid_count();
    if let Some(gt_path) = &a.gt {
        let gt = io::read_flo(gt_path)?;
        let ae = angular_error(&flow, &gt)?;
        row.ae = Some(ae.mean);
        row.aef = Some(endpoint_error(&flow, &gt)?.mean);
        row.count = ae.count;
    }
    if let Some(frames) = &a.frames {
        let f1 = io::read_image(&frames[0])?;
        let f2 = io::read_image(&frames[1])?;
        if f1.dims() != flow.dims() || f2.dims() != flow.dims() {
            return Err(Error::Dimension(format!(
                "frames are {}x{} and {}x{}, flow is {}x{}",
                f1.width(),
                f1.height(),
                f2.width(),
                f2.height(),
                flow.width(),
                flow.height()
            ))
            .into());
        }
        let (mse, psnr, nrms) = compensation_metrics(&f1, &f2, &flow, a.psnr_per_image_max)?;
        row.mse = Some(mse);
        row.psnr = Some(psnr);
        row.nrms = Some(nrms);
    }
    let text = io::format_report(std::slice::from_ref(&row), ReportFormat::Csv);
    print!("{text}");
    if let Some(path) = &a.report {
        io::write_report(path, &[row], ReportFormat::Csv)?;
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), Failure> {
    if a.suite != "standard" {
        return Err(usage(format!("unknown suite '{}' (only 'standard' exists)", a.suite)));
    }
    let suite = standard_suite_sized(a.seed, a.size)?;
    std::fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    for dir in io::write_suite(&a.output, &suite)? {
        println!("{}", dir.display());
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    if a.methods.is_empty() {
        return Err(usage("bench needs at least one method"));
    }
    let suite = io::read_suite(&a.suite)?;
    let cfg = DenseConfig {
        m_w: a.m_w,
        bilateral: blpc::BilateralParams::for_window(a.m_w),
        psnr_per_image_max: a.psnr_per_image_max,
        ..DenseConfig::default()
    };
    let mut totals = Vec::new();
    let mut scenes = Vec::new();
    for &mode in &a.methods {
        let (rows, total) = run_suite(&suite, mode, &cfg)?;
        scenes.extend(suite.iter().map(|p| p.name.clone()).zip(rows));
        totals.push(total);
    }
    print!("{}", io::format_report(&totals, ReportFormat::Csv));
    io::write_report(&a.report, &totals, ReportFormat::Csv)?;
    if let Some(path) = &a.per_scene {
        io::write_atomic(path, io::format_scene_report(&scenes, ReportFormat::Csv).as_bytes())?;
    }
    Ok(())
}
