use std::path::Path;
use std::process::Command;
use std::time::Instant;

use blpc::bench::{run_suite, DenseConfig};
use blpc::bilateral::{
    anchor_intensities, asymmetric_bilateral_pair, default_radius, gaussian_kernel, reference_bilateral,
    slice_output,
};
use blpc::estimator::{blpc_surface_at, pc_estimate, pc_surface_at, Mode};
use blpc::framework::estimate_flow_report;
use blpc::io;
use blpc::metrics::{angular_error, angular_error_deg, endpoint_error, nrms, NRMS_EPSILON};
use blpc::spectral::{fourier_shift, peak_ratio, phase_correlation_surface, subpixel_refine, SpectralOptions};
use blpc::synth::{standard_suite_sized, value_noise, ScenePair, Texture};
use blpc::{BilateralParams, FlowField, FlowVector, FrameworkConfig, Image};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn scaled_noise(w: usize, h: usize, seed: u64, cell: f64, lo: f64, hi: f64) -> Image {
    let n = value_noise(w, h, seed, cell);
    let (a, b) = n.min_max();
    Image::from_fn(w, h, |x, y| lo + (hi - lo) * (n.get(x, y) - a) / (b - a))
}

fn integer_shift_recovery() -> Outcome {
    let mut rng = StdRng::seed_from_u64(1);
    let start = Instant::now();
    let (exact, min_peak) = single_thread(|| {
        let mut exact = 0;
        let mut min_peak = f64::INFINITY;
        for i in 0..200u64 {
            let img = Texture::new(120.0, 40.0).render(64, 64, 100 + i);
            let (dx, dy) = (rng.gen_range(-12..=12), rng.gen_range(-12..=12));
            let moved = img.circular_shift(dx, dy);
            let e = pc_estimate(&img, &moved, (32, 32), 64).unwrap();
            let truth = FlowVector::new(dx as f64, dy as f64);
            let rounded = FlowVector::new(e.flow.dx.round(), e.flow.dy.round());
            if rounded == truth && (e.flow - truth).norm() < 1e-9 {
                exact += 1;
            }
            min_peak = min_peak.min(e.peak_value);
        }
        (exact, min_peak)
    });
    let secs = start.elapsed().as_secs_f64();
    outcome(
        exact == 200 && min_peak >= 0.99 && secs < 5.0,
        format!("{exact}/200 exact, min peak {min_peak:.4}, {secs:.2} s"),
    )
}

fn subpixel_accuracy() -> Outcome {
    let img = scaled_noise(64, 64, 2, 4.0, 0.0, 255.0);
    let grid: Vec<f64> = (-9..=9).map(|k| k as f64 * 0.05).collect();
    let mut errors = Vec::new();
    for &dy in &grid {
        for &dx in &grid {
            let moved = fourier_shift(&img, dx, dy);
            let s = phase_correlation_surface(&img, &moved).unwrap();
            let v = subpixel_refine(&s);
            errors.push((v.dx - dx).abs());
            errors.push((v.dy - dy).abs());
        }
    }
    let mae = errors.iter().sum::<f64>() / errors.len() as f64;
    let max = errors.iter().fold(0.0f64, |m, &e| m.max(e));
    outcome(mae <= 0.05 && max <= 0.15, format!("mean abs error {mae:.4} px, max {max:.4} px"))
}

fn multi_motion_superiority(suite: &[ScenePair]) -> Outcome {
    let cfg = DenseConfig::default();
    let start = Instant::now();
    let (pc, blpc) = single_thread(|| {
        let (_, pc) = run_suite(suite, Mode::Pc, &cfg).unwrap();
        let (_, blpc) = run_suite(suite, Mode::Blpc, &cfg).unwrap();
        (pc, blpc)
    });
    let secs = start.elapsed().as_secs_f64();
    let (ae_pc, ae_b) = (pc.ae.unwrap(), blpc.ae.unwrap());
    let (aef_pc, aef_b) = (pc.aef.unwrap(), blpc.aef.unwrap());
    let (mse_pc, mse_b) = (pc.mse.unwrap(), blpc.mse.unwrap());
    outcome(
        ae_b < ae_pc && aef_b <= 0.8 * aef_pc && mse_b <= mse_pc && secs < 600.0,
        format!(
            "AE {ae_b:.3} vs {ae_pc:.3}, AEF {aef_b:.3} vs {aef_pc:.3}, MSE {mse_b:.1} vs {mse_pc:.1}, {secs:.0} s"
        ),
    )
}

fn boundary_pixels(gt: &FlowField) -> Vec<(usize, usize)> {
    let (w, h) = gt.dims();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = gt.get(x, y);
            let differs = [(1isize, 0isize), (0, 1), (-1, 0), (0, -1)].iter().any(|&(ox, oy)| {
                let (nx, ny) = (x as isize + ox, y as isize + oy);
                nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h && gt.get(nx as usize, ny as usize) != v
            });
            if differs {
                out.push((x, y));
            }
        }
    }
    out
}

fn single_dominant_peak(suite: &[ScenePair]) -> Outcome {
    let m_w = 32;
    let params = BilateralParams::for_window(m_w);
    let opts = SpectralOptions::default();
    let (mut better, mut total) = (0usize, 0usize);
    for pair in suite {
        let boundary = boundary_pixels(&pair.gt);
        let step = boundary.len().div_ceil(64).max(1);
        for &c in boundary.iter().step_by(step) {
            let pc = peak_ratio(&pc_surface_at(&pair.frame1, &pair.frame2, c, m_w, opts).unwrap());
            let Some(s) = blpc_surface_at(&pair.frame1, &pair.frame2, c, m_w, &params, opts).unwrap() else {
                total += 1;
                continue;
            };
            if peak_ratio(&s).as_f64() > pc.as_f64() {
                better += 1;
            }
            total += 1;
        }
    }
    let share = better as f64 / total.max(1) as f64;
    outcome(
        total > 0 && share >= 0.9,
        format!("{better}/{total} boundary windows ({:.1}%)", 100.0 * share),
    )
}

fn blur_oracle(img: &Image, sigma: f64) -> Image {
    let k = gaussian_kernel(sigma, default_radius(sigma)).unwrap();
    let r = (k.side() / 2) as isize;
    let mut total = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            total += k.at(dx, dy);
        }
    }
    Image::from_fn(img.width(), img.height(), |x, y| {
        let mut acc = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                acc += k.at(dx, dy) * img.get_wrapped(x as isize + dx, y as isize + dy);
            }
        }
        acc / total
    })
}

fn max_diff(a: &Image, b: &Image) -> f64 {
    a.data().iter().zip(b.data()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn bilateral_degeneracies() -> Outcome {
    let a = scaled_noise(32, 32, 4, 4.0, 0.0, 100.0);
    let b = scaled_noise(32, 32, 5, 4.0, 0.0, 100.0);
    let wide = BilateralParams {
        sigma_r: 1e6,
        ..BilateralParams::for_window(32)
    };
    let pair = asymmetric_bilateral_pair(&a, &b, &wide).unwrap();
    let blur_err = max_diff(&pair.first, &blur_oracle(&a, wide.sigma_s1))
        .max(max_diff(&pair.second, &blur_oracle(&b, wide.sigma_s2)));

    let params = BilateralParams::for_window(32);
    let c = Image::filled(32, 32, 87.0);
    let fixed = asymmetric_bilateral_pair(&c, &c, &params).unwrap();
    let fixed_err = max_diff(&fixed.first, &c).max(max_diff(&fixed.second, &c));

    let img = scaled_noise(16, 16, 6, 2.0, 0.0, 255.0).data().iter().map(|v| v.round()).collect();
    let img = Image::new(16, 16, img).unwrap();
    let small = BilateralParams::for_window(16);
    let reference = reference_bilateral(&img, &small);
    let mut slice_err = 0.0f64;
    let mut checked = 0;
    for &anchor in &anchor_intensities(&img, small.slice_m) {
        let q = slice_output(&img, anchor, small.sigma_s1, small.sigma_r);
        for (i, &v) in img.data().iter().enumerate() {
            if v == anchor {
                slice_err = slice_err.max((q.data()[i] - reference.data()[i]).abs());
                checked += 1;
            }
        }
    }
    outcome(
        blur_err < 1e-6 && fixed_err < 1e-9 && slice_err < 1e-6 && checked > 0,
        format!("blur {blur_err:.1e}, constant {fixed_err:.1e}, slice {slice_err:.1e} over {checked} pixels"),
    )
}

fn metric_identities() -> Outcome {
    let mut rng = StdRng::seed_from_u64(6);
    let flow = FlowField::from_fn(16, 16, |_, _| FlowVector::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)));
    let ae0 = angular_error(&flow, &flow).unwrap().mean;
    let aef0 = endpoint_error(&flow, &flow).unwrap().mean;
    let ae60 = angular_error_deg(1.0, 0.0, 0.0, 1.0);
    let mut nrms_err = 0.0f64;
    for _ in 0..20 {
        let a = Image::from_fn(16, 16, |_, _| rng.gen_range(0.0..255.0));
        let b = Image::from_fn(16, 16, |_, _| rng.gen_range(0.0..255.0));
        let at = |x: isize, y: isize| b.get(x.clamp(0, 15) as usize, y.clamp(0, 15) as usize);
        let mut acc = 0.0;
        for y in 0..16isize {
            for x in 0..16isize {
                let gx = (at(x + 1, y) - at(x - 1, y)) / 2.0;
                let gy = (at(x, y + 1) - at(x, y - 1)) / 2.0;
                let d = a.get(x as usize, y as usize) - b.get(x as usize, y as usize);
                acc += d * d / (gx * gx + gy * gy + 1.0);
            }
        }
        let oracle = (acc / 256.0).sqrt();
        nrms_err = nrms_err.max((nrms(&a, &b, NRMS_EPSILON).unwrap() - oracle).abs());
    }
    outcome(
        ae0 == 0.0 && aef0 == 0.0 && (ae60 - 60.0).abs() <= 1e-9 && nrms_err <= 1e-9 && NRMS_EPSILON == 1.0,
        format!("AE {ae0}, AEF {aef0}, AE((1,0),(0,1)) {ae60:.12}, NRMS oracle gap {nrms_err:.1e}"),
    )
}

fn framework_sanity(bin: &Path, dir: &Path) -> Outcome {
    let a = Texture::new(120.0, 16.0).render(512, 512, 9);
    let b = a.circular_shift(6, -4);
    let cfg = FrameworkConfig::default();
    let report = estimate_flow_report(&a, &b, &cfg).unwrap();
    let truth = FlowVector::new(6.0, -4.0);
    let close = report.flow.vectors().iter().filter(|v| (**v - truth).norm() <= 0.3).count();
    let share = close as f64 / (512.0 * 512.0);
    let budget = report
        .layers
        .iter()
        .all(|l| l.spectral_estimations <= cfg.t_p + l.dropped);

    let (p1, p2) = (dir.join("f1.pgm"), dir.join("f2.pgm"));
    io::write_image(&a, &p1).unwrap();
    io::write_image(&b, &p2).unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let out = dir.join(format!("t{threads}.flo"));
        let status = Command::new(bin)
            .args(["--threads", threads, "flow"])
            .arg(&p1)
            .arg(&p2)
            .arg("-o")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(&out).unwrap());
    }
    let identical = outputs[0] == outputs[1];
    outcome(
        share >= 0.99 && budget && identical,
        format!(
            "{:.2}% within 0.3 px, per-layer budget held: {budget}, threads 1 vs 8 identical: {identical}",
            100.0 * share
        ),
    )
}

fn format_round_trips(dir: &Path) -> Outcome {
    let mut rng = StdRng::seed_from_u64(8);
    let mut flo_ok = 0;
    let mut pgm_ok = 0;
    for i in 0..100 {
        let (w, h) = (rng.gen_range(1..48), rng.gen_range(1..48));
        let vectors = (0..w * h)
            .map(|_| FlowVector::new(rng.gen_range(-100.0f32..100.0) as f64, rng.gen_range(-100.0f32..100.0) as f64))
            .collect();
        let flow = FlowField::new(w, h, vectors, vec![true; w * h]).unwrap();
        let path = dir.join(format!("{i}.flo"));
        io::write_flo(&flow, &path).unwrap();
        if io::read_flo(&path).unwrap() == flow {
            flo_ok += 1;
        }
        let img = Image::from_fn(w, h, |_, _| rng.gen_range(0..=255u8) as f64);
        let path = dir.join(format!("{i}.pgm"));
        io::write_image(&img, &path).unwrap();
        if io::read_image(&path).unwrap() == img {
            pgm_ok += 1;
        }
    }

    let good = io::encode_flo(&FlowField::zeros(3, 2));
    let mut bad_tag = good.clone();
    bad_tag[1] ^= 0x40;
    let mut bad_dims = good.clone();
    bad_dims[4..8].copy_from_slice(&(-3i32).to_le_bytes());
    let flo_corpus: Vec<(Vec<u8>, bool)> = vec![
        (Vec::new(), false),
        (good[..10].to_vec(), false),
        (good[..good.len() - 1].to_vec(), false),
        (bad_tag, true),
        (bad_dims, true),
    ];
    let flo_rejected = flo_corpus.iter().all(|(bytes, format)| match io::decode_flo(bytes) {
        Err(blpc::Error::Format(_)) => *format,
        Err(blpc::Error::Length { .. }) => !*format,
        _ => false,
    });
    let pgm_corpus: [&[u8]; 6] = [b"", b"P7 1 1 255\n\0", b"P5 a 1 255\n\0", b"P5 0 1 255\n", b"P5 1 1 0\n\0", b"P5 2"];
    let pgm_rejected = pgm_corpus
        .iter()
        .all(|bytes| matches!(io::decode_pgm(bytes), Err(blpc::Error::Parse { .. })))
        && matches!(io::decode_pgm(b"P5 4 4 255\n\0\0"), Err(blpc::Error::Length { .. }))
        && matches!(io::decode_pgm(b"P5 1 1 65535\n\0\0"), Err(blpc::Error::UnsupportedFormat(_)));
    outcome(
        flo_ok == 100 && pgm_ok == 100 && flo_rejected && pgm_rejected,
        format!("flo {flo_ok}/100, pgm {pgm_ok}/100, malformed flo rejected: {flo_rejected}, malformed pgm rejected: {pgm_rejected}"),
    )
}

fn without_time_column(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

fn end_to_end_determinism(bin: &Path, dir: &Path) -> Outcome {
    let mut reports = Vec::new();
    for run in 0..2 {
        let suite = dir.join(format!("suite{run}"));
        let synth = Command::new(bin)
            .args(["synth", "--seed", "7", "--size", "64", "-o"])
            .arg(&suite)
            .output()
            .unwrap();
        assert!(synth.status.success(), "{}", String::from_utf8_lossy(&synth.stderr));
        let csv = dir.join(format!("bench{run}.csv"));
        let per_scene = dir.join(format!("scenes{run}.csv"));
        let bench = Command::new(bin)
            .args(["bench", "--methods", "pc,blpc,auto", "--suite"])
            .arg(&suite)
            .arg("--report")
            .arg(&csv)
            .arg("--per-scene")
            .arg(&per_scene)
            .output()
            .unwrap();
        assert!(bench.status.success(), "{}", String::from_utf8_lossy(&bench.stderr));
        let read = |p: &Path| without_time_column(&std::fs::read_to_string(p).unwrap());
        reports.push((read(&csv), read(&per_scene)));
    }
    let same = reports[0] == reports[1];
    let rows = reports[0].1.lines().count().saturating_sub(1);
    outcome(same && rows == 27, format!("two runs identical: {same}, {rows} scene rows"))
}

fn main() {
    let bin = Path::new(env!("CARGO_BIN_EXE_blpc"));
    let tmp = tempfile::tempdir().unwrap();
    let suite = standard_suite_sized(7, 256).unwrap();

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("integer-shift recovery", Box::new(integer_shift_recovery)),
        ("subpixel accuracy", Box::new(subpixel_accuracy)),
        ("multi-motion superiority", Box::new(|| multi_motion_superiority(&suite))),
        ("single dominant peak at boundaries", Box::new(|| single_dominant_peak(&suite))),
        ("bilateral degeneracies", Box::new(bilateral_degeneracies)),
        ("metric identities", Box::new(metric_identities)),
        ("framework sanity", Box::new(|| framework_sanity(bin, tmp.path()))),
        ("format round-trips", Box::new(|| format_round_trips(tmp.path()))),
        ("end-to-end determinism", Box::new(|| end_to_end_determinism(bin, tmp.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {}: {verdict}  {name}: {}", i + 1, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
