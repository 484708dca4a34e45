//! Dense per-pixel PC vs BLPC on the synthetic suite.
//!
//! `cargo run --release -p blpc --example dense_suite [seed] [size]`

use blpc::bench::{run_suite, DenseConfig};
use blpc::estimator::Mode;
use blpc::synth::standard_suite_sized;

fn main() -> blpc::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let size = args.next().and_then(|s| s.parse().ok()).unwrap_or(256);
    let suite = standard_suite_sized(seed, size)?;
    let cfg = DenseConfig::default();
    println!("{:<22} {:>8} {:>9} {:>9} {:>8} {:>8} {:>7}", "scene/method", "MSE", "PSNR", "NRMS", "AE", "AEF", "Time");
    for mode in [Mode::Pc, Mode::Auto, Mode::Blpc] {
        let (rows, total) = run_suite(&suite, mode, &cfg)?;
        for (pair, r) in suite.iter().zip(&rows) {
            print_row(&format!("{}/{}", pair.name, mode.name()), r);
        }
        print_row(&format!("TOTAL/{}", mode.name()), &total);
    }
    Ok(())
}

fn print_row(label: &str, r: &blpc::metrics::EvalReport) {
    println!(
        "{:<22} {:>8.3} {:>9} {:>9.3} {:>8.3} {:>8.3} {:>7.2}",
        label,
        r.mse.unwrap_or(f64::NAN),
        r.psnr.map(|p| p.label()).unwrap_or_default(),
        r.nrms.unwrap_or(f64::NAN),
        r.ae.unwrap_or(f64::NAN),
        r.aef.unwrap_or(f64::NAN),
        r.runtime
    );
}
