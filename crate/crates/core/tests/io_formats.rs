use std::path::Path;

use blpc::io::{self, decode_flo, decode_pgm, encode_flo, encode_pgm, flow_to_color};
use blpc::{Error, FlowField, FlowVector, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_flow(rng: &mut ChaCha8Rng) -> FlowField {
    let (w, h) = (rng.gen_range(1..40), rng.gen_range(1..40));
    let vectors = (0..w * h)
        .map(|_| FlowVector::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)))
        .collect();
    let valid = (0..w * h).map(|_| rng.gen_bool(0.9)).collect();
    FlowField::new(w, h, vectors, valid).unwrap()
}

#[test]
fn flo_round_trips_hundred_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dir = tempfile::tempdir().unwrap();
    for i in 0..100 {
        let f = random_flow(&mut rng);
        let path = dir.path().join(format!("{i}.flo"));
        io::write_flo(&f, &path).unwrap();
        let back = io::read_flo(&path).unwrap();
        assert_eq!(back.dims(), f.dims());
        assert_eq!(back.valid(), f.valid());
        for ((a, b), &ok) in f.vectors().iter().zip(back.vectors()).zip(f.valid()) {
            if ok {
                assert_eq!(b.dx, a.dx as f32 as f64);
                assert_eq!(b.dy, a.dy as f32 as f64);
            }
        }
        assert_eq!(encode_flo(&back), std::fs::read(&path).unwrap());
    }
}

#[test]
fn pgm_round_trips_hundred_images() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let dir = tempfile::tempdir().unwrap();
    for i in 0..100 {
        let (w, h) = (rng.gen_range(1..50), rng.gen_range(1..50));
        let img = Image::from_fn(w, h, |_, _| rng.gen_range(0..=255u8) as f64);
        let ext = if i % 2 == 0 { "pgm" } else { "png" };
        let path = dir.path().join(format!("{i}.{ext}"));
        io::write_image(&img, &path).unwrap();
        assert_eq!(io::read_image(&path).unwrap(), img, "{ext} {w}x{h}");
    }
}

#[test]
fn ascii_and_binary_agree() {
    let img = Image::from_fn(5, 3, |x, y| (x * 40 + y * 7) as f64);
    let mut ascii = String::from("P2\n# generated\n5 3\n255\n");
    for v in img.data() {
        ascii.push_str(&format!("{} ", *v as u8));
    }
    assert_eq!(decode_pgm(ascii.as_bytes()).unwrap(), img);
    assert_eq!(decode_pgm(&encode_pgm(&img)).unwrap(), img);
}

#[test]
fn malformed_flo_corpus() {
    let good = encode_flo(&FlowField::zeros(4, 3));
    let mut corpus: Vec<(Vec<u8>, &str)> = Vec::new();
    corpus.push((Vec::new(), "length"));
    corpus.push((good[..11].to_vec(), "length"));
    corpus.push((good[..good.len() - 4].to_vec(), "length"));
    let mut longer = good.clone();
    longer.extend([0; 8]);
    corpus.push((longer, "length"));
    let mut tag = good.clone();
    tag[..4].copy_from_slice(&1.0f32.to_le_bytes());
    corpus.push((tag, "format"));
    for (at, value) in [(4, 0i32), (8, 0), (4, -1), (8, i32::MIN)] {
        let mut b = good.clone();
        b[at..at + 4].copy_from_slice(&value.to_le_bytes());
        corpus.push((b, "format"));
    }
    let mut huge = good;
    huge[4..8].copy_from_slice(&i32::MAX.to_le_bytes());
    huge[8..12].copy_from_slice(&i32::MAX.to_le_bytes());
    corpus.push((huge, "format"));
    for (bytes, kind) in corpus {
        let r = decode_flo(&bytes);
        let ok = match kind {
            "length" => matches!(r, Err(Error::Length { .. })),
            _ => matches!(r, Err(Error::Format(_))),
        };
        assert!(ok, "{kind}: {r:?}");
    }
}

#[test]
fn malformed_pgm_corpus() {
    let corpus: [(&[u8], usize); 8] = [
        (b"", 0),
        (b"P", 0),
        (b"P3 1 1 255\n0 0 0", 0),
        (b"P5\n# only a comment", 19),
        (b"P5 4 -1 255\n", 5),
        (b"P2 2 1 255 7", 12),
        (b"P2 2 1 255 7 300", 13),
        (b"P2 2 1 9 1 x", 11),
    ];
    for (bytes, offset) in corpus {
        match decode_pgm(bytes) {
            Err(Error::Parse { offset: o, .. }) => assert_eq!(o, offset, "{:?}", String::from_utf8_lossy(bytes)),
            other => panic!("{:?}: {other:?}", String::from_utf8_lossy(bytes)),
        }
    }
    assert!(matches!(decode_pgm(b"P5 3 3 255\n\x01\x02"), Err(Error::Length { expected: 20, found: 13 })));
    assert!(matches!(decode_pgm(b"P5 1 1 1023\n\0\0"), Err(Error::UnsupportedFormat(_))));
}

#[test]
fn unreadable_paths_and_unknown_formats() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.pgm");
    assert!(matches!(io::read_image(&missing), Err(Error::Io { .. })));
    assert!(matches!(io::read_flo(&missing), Err(Error::Io { .. })));
    let text = dir.path().join("notes.pgm");
    std::fs::write(&text, b"hello").unwrap();
    assert!(matches!(io::read_image(&text), Err(Error::UnsupportedFormat(_))));
    let img = Image::filled(2, 2, 9.0);
    assert!(matches!(io::write_image(&img, &dir.path().join("x.bmp")), Err(Error::UnsupportedFormat(_))));
}

fn golden() -> Vec<(f64, f64, f64, [u8; 3])> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/color_wheel_golden.txt");
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let t: Vec<&str> = l.split_whitespace().collect();
            let f = |i: usize| t[i].parse::<f64>().unwrap();
            let c = |i: usize| t[i].parse::<u8>().unwrap();
            (f(0), f(1), f(2), [c(3), c(4), c(5)])
        })
        .collect()
}

#[test]
fn color_coding_matches_golden_samples() {
    let samples = golden();
    assert!(samples.len() >= 25);
    for (u, v, max, rgb) in samples {
        let flow = FlowField::constant(1, 1, FlowVector::new(u, v));
        let got = flow_to_color(&flow, Some(max)).pixel(0, 0);
        assert_eq!(got, rgb, "u={u} v={v} max={max}");
    }
}
