use std::path::Path;
use std::process::{Command, Output};

use blpc::io;
use blpc::synth::Texture;
use blpc::{FlowField, FlowVector};

fn blpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blpc"))
        .args(args)
        .env_remove("BLPC_THREADS")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn frames(dir: &Path, w: usize, h: usize) -> (String, String) {
    let a = Texture::new(120.0, 30.0).render(w, h, 3);
    let b = a.circular_shift(2, 1);
    let (p1, p2) = (dir.join("a.pgm"), dir.join("b.pgm"));
    io::write_image(&a, &p1).unwrap();
    io::write_image(&b, &p2).unwrap();
    (s(&p1).to_string(), s(&p2).to_string())
}

#[test]
fn flow_writes_field_and_pictures() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = frames(dir.path(), 64, 48);
    let out = dir.path().join("out.flo");
    let viz = dir.path().join("viz.png");
    let ratio = dir.path().join("ratio.png");
    let o = blpc(&["flow", &a, &b, "-o", s(&out), "--viz", s(&viz), "--ratio-map", s(&ratio), "--timing"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("time:"));
    let flow = io::read_flo(&out).unwrap();
    assert_eq!(flow.dims(), (64, 48));
    let near = flow
        .vectors()
        .iter()
        .filter(|v| (**v - FlowVector::new(2.0, 1.0)).norm() < 0.5)
        .count();
    assert!(near > 64 * 48 * 9 / 10);
    for png in [&viz, &ratio] {
        let bytes = std::fs::read(png).unwrap();
        assert!(bytes.starts_with(b"\x89PNG"));
    }
}

#[test]
fn printed_config_is_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let o = blpc(&["flow", "--print-config", "--method", "blpc"]);
    assert!(o.status.success());
    let doc = String::from_utf8(o.stdout).unwrap();
    assert!(doc.contains("method = blpc"));
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, &doc).unwrap();
    let again = blpc(&["flow", "--print-config", "--config", s(&cfg)]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), doc);
}

#[test]
fn usage_and_input_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (a, _) = frames(dir.path(), 32, 32);
    let small = dir.path().join("small.pgm");
    io::write_image(&Texture::new(120.0, 30.0).render(16, 16, 1), &small).unwrap();
    let out = dir.path().join("o.flo");

    let mismatch = blpc(&["flow", &a, s(&small), "-o", s(&out)]);
    assert_eq!(mismatch.status.code(), Some(2), "{}", stderr(&mismatch));
    assert!(stderr(&mismatch).starts_with("blpc: dimension error"));

    let missing = blpc(&["flow", &a, "/nonexistent/b.pgm", "-o", s(&out)]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(stderr(&missing).lines().count(), 1);

    let bad_cfg = dir.path().join("bad.cfg");
    std::fs::write(&bad_cfg, "colour = red\n").unwrap();
    let cfg = blpc(&["flow", &a, &a, "-o", s(&out), "--config", s(&bad_cfg)]);
    assert_eq!(cfg.status.code(), Some(2));
    assert!(stderr(&cfg).contains("unknown key"));

    assert_eq!(blpc(&["flow", &a, &a, "-o", s(&out), "--method", "lk"]).status.code(), Some(2));
    assert_eq!(blpc(&["flow", &a, &a]).status.code(), Some(2));
    assert_eq!(blpc(&["eval", "--flow", s(&out)]).status.code(), Some(2));
    assert_eq!(blpc(&["--threads", "0", "flow", "--print-config"]).status.code(), Some(2));
    assert!(!out.exists());

    let garbage = dir.path().join("garbage.flo");
    std::fs::write(&garbage, b"not a flow file").unwrap();
    let o = blpc(&["eval", "--flow", s(&garbage), "--gt", s(&garbage)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("format error"));
}

#[test]
fn eval_reports_ground_truth_and_compensation() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = frames(dir.path(), 32, 32);
    let truth = dir.path().join("gt.flo");
    io::write_flo(&FlowField::constant(32, 32, FlowVector::new(2.0, 1.0)), &truth).unwrap();
    let report = dir.path().join("r.csv");
    let o = blpc(&["eval", "--flow", s(&truth), "--gt", s(&truth), "--frames", &a, &b, "--report", s(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&report).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("method,MSE,PSNR,NRMS,AE,AEF,Time"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "eval");
    assert_eq!(row[4].parse::<f64>().unwrap(), 0.0);
    assert_eq!(row[5].parse::<f64>().unwrap(), 0.0);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), csv);
    let zero = dir.path().join("zero.flo");
    io::write_flo(&FlowField::zeros(32, 32), &zero).unwrap();
    let z = blpc(&["eval", "--flow", s(&zero), "--frames", &a, &b]);
    let z = String::from_utf8(z.stdout).unwrap();
    let mse = |line: &str| line.split(',').nth(1).unwrap().parse::<f64>().unwrap();
    assert!(mse(csv.lines().nth(1).unwrap()) < 0.2 * mse(z.lines().nth(1).unwrap()));

    let only_gt = blpc(&["eval", "--flow", s(&truth), "--gt", s(&truth)]);
    let text = String::from_utf8(only_gt.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("eval,,,,"), "{text}");

    let tiny = dir.path().join("tiny.flo");
    io::write_flo(&FlowField::zeros(8, 8), &tiny).unwrap();
    let o = blpc(&["eval", "--flow", s(&tiny), "--frames", &a, &b]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn synth_and_bench_respect_thread_setting() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite");
    let o = blpc(&["synth", "--seed", "3", "--size", "48", "-o", s(&suite)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 9);
    assert_eq!(blpc(&["synth", "--suite", "other", "-o", s(&suite)]).status.code(), Some(2));

    let mut reports = Vec::new();
    for threads in ["1", "3"] {
        let report = dir.path().join(format!("bench{threads}.csv"));
        let o = Command::new(env!("CARGO_BIN_EXE_blpc"))
            .args(["bench", "--suite", s(&suite), "--methods", "pc,auto", "--m-w", "16", "--report", s(&report)])
            .env("BLPC_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        let csv = std::fs::read_to_string(&report).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("pc,"));
        assert!(csv.lines().nth(2).unwrap().starts_with("auto,"));
        let stripped: Vec<String> = csv
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect();
        reports.push(stripped);
    }
    assert_eq!(reports[0], reports[1]);
}
