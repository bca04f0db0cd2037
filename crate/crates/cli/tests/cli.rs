use std::path::Path;
use std::process::Command;

use image::{Rgb, RgbImage};
use metamorph::format::{level_file_name, save_tensor};
use metamorph_core::features::FeatureTensor;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_metamorph"))
}

fn square(path: &Path, size: u32, x0: u32) {
    RgbImage::from_fn(size, size, |x, y| {
        if (x0..x0 + 8).contains(&x) && (10..18).contains(&y) {
            Rgb([250, 200, 40])
        } else {
            Rgb([10, 20, 30])
        }
    })
    .save(path)
    .unwrap();
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn defaults_are_published_values() {
    let out = bin().args(["defaults"]).output().unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["k"], 15);
    assert_eq!(v["levels"], 5);
    assert_eq!(v["iterations"], 250);
    assert_eq!(v["mu"], 0.025);
    assert_eq!(v["lambda"], 0.1);
    assert_eq!(v["xi1"], 1000.0);
    let out = bin().args(["defaults", "--mode", "deep", "--K", "4"]).output().unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["eta"], 1e-6);
    assert_eq!(v["mu"], 0.002);
    assert_eq!(v["k"], 4);
}

#[test]
fn self_morph_writes_flat_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.png");
    square(&a, 32, 12);
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", a.to_str().unwrap(), a.to_str().unwrap(), "-o", out.to_str().unwrap()])
        .args(["--levels", "2", "--iters", "5", "--k", "3"])
        .status()
        .unwrap();
    assert!(status.success());
    let input = image::open(&a).unwrap().into_rgb8();
    for k in 0..=3 {
        let frame = image::open(out.join(format!("frame_{k:03}.png"))).unwrap().into_rgb8();
        assert_eq!(frame, input, "frame {k}");
    }
    for k in 1..=3 {
        let disp = image::open(out.join(format!("displacement_{k:03}.png"))).unwrap().into_rgb8();
        assert!(disp.pixels().all(|p| p.0 == [0, 0, 0]));
        assert!(out.join(format!("anisotropy_{k:03}.png")).exists());
    }
    let trace = std::fs::read_to_string(out.join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 2 * 6);
    let s = summary(&out);
    assert!(s["final_energy"].as_f64().unwrap() < 1e-20);
}

#[test]
fn single_step_and_padding() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    square(&a, 30, 10);
    square(&b, 30, 13);
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", a.to_str().unwrap(), b.to_str().unwrap(), "-o", out.to_str().unwrap()])
        .args(["--levels", "3", "--iters", "10", "--K", "1"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("frame_001.png").exists());
    assert!(!out.join("frame_002.png").exists());
    assert!(out.join("displacement_001.png").exists());
    let s = summary(&out);
    assert_eq!(s["padded_size"], serde_json::json!([32, 32]));
    assert_eq!(s["padding"]["left"], 1);
    assert_eq!(s["padding"]["right"], 1);
    let f0 = image::open(out.join("frame_000.png")).unwrap().into_rgb8();
    assert_eq!(f0.dimensions(), (30, 30));
    assert_eq!(f0, image::open(&a).unwrap().into_rgb8());
    assert_eq!(image::open(out.join("frame_001.png")).unwrap().into_rgb8(), image::open(&b).unwrap().into_rgb8());
}

#[test]
fn deep_mode_reads_pyramids() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    square(&a, 32, 10);
    square(&b, 32, 13);
    for (name, shift) in [("fa", 0.0f32), ("fb", 0.3)] {
        let d = dir.path().join(name);
        std::fs::create_dir(&d).unwrap();
        for side in [16usize, 32] {
            let data = (0..2 * side * side).map(|i| ((i % side) as f32 / side as f32 + shift).sin()).collect();
            save_tensor(d.join(level_file_name(side, side, 2)), &FeatureTensor::new(side, side, 2, data).unwrap()).unwrap();
        }
    }
    let out = dir.path().join("out");
    let run = |extra: &[&str]| {
        bin()
            .args(["run", a.to_str().unwrap(), b.to_str().unwrap(), "-o", out.to_str().unwrap()])
            .args(["--mode", "deep", "--levels", "2", "--iters", "3", "--warm-iters", "2", "--k", "2"])
            .args(extra)
            .output()
            .unwrap()
    };
    let fa = dir.path().join("fa");
    let fb = dir.path().join("fb");
    let ok = run(&["--features-a", fa.to_str().unwrap(), "--features-b", fb.to_str().unwrap()]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    // frames are de-scaled back to image intensities
    assert_eq!(image::open(out.join("frame_000.png")).unwrap().into_rgb8(), image::open(&a).unwrap().into_rgb8());
    let trace = std::fs::read_to_string(out.join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 2 * (3 + 4));

    let missing = run(&["--features-a", fa.to_str().unwrap()]);
    assert!(!missing.status.success());
    std::fs::remove_file(fb.join(level_file_name(16, 16, 2))).unwrap();
    let incomplete = run(&["--features-a", fa.to_str().unwrap(), "--features-b", fb.to_str().unwrap()]);
    assert!(!incomplete.status.success());
    assert!(String::from_utf8_lossy(&incomplete.stderr).contains("level_16x16"));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    square(&a, 32, 10);
    square(&b, 24, 10);
    let out = bin().args(["run", a.to_str().unwrap(), b.to_str().unwrap()]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sizes differ"));
    let out = bin().args(["run", a.to_str().unwrap(), "nope.png"]).output().unwrap();
    assert!(!out.status.success());
    let out = bin().args(["defaults", "--mu", "-1"]).output().unwrap();
    assert!(!out.status.success());
}
