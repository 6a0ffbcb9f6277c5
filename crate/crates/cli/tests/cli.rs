use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rawlume::io::{
    read_profile, read_raw, read_sidecar, sidecar_path, write_ppm, write_raw, write_sidecar,
    RawSidecar,
};
use rawlume::noise::{sample_noise, NoiseParams};
use rawlume::{CameraProfile, Cfa, ColorState, Plane, RawImage, RgbImage};
use std::path::Path;
use std::process::{Command, Output};

fn rawlume(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rawlume"))
        .args(args)
        .env("RAWLUME_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn noise() -> NoiseParams {
    NoiseParams {
        kappa: 0.002,
        lambda_r: 0.2,
        sigma_r: 0.015,
        sigma_b: 0.010,
        s: CameraProfile::reference(Cfa::Rggb).s,
    }
}

fn scene(w: usize, h: usize) -> RawImage {
    RawImage::new(
        Plane::from_fn(w, h, |x, y| {
            0.05 + 0.03 * ((x as f64 * 0.2).sin() + (y as f64 * 0.13).cos())
        }),
        Cfa::Rggb,
    )
    .unwrap()
}

fn gradient_ppm(path: &Path) {
    let img = RgbImage::from_fn(32, 24, ColorState::EncodedSrgb, |x, y| {
        [x as f64 / 31.0, y as f64 / 23.0, ((x + y) % 7) as f64 / 6.0]
    });
    write_ppm(path, &img).unwrap();
}

#[test]
fn enhance_is_deterministic_and_reports_stages() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.rlraw");
    let profile = CameraProfile::reference(Cfa::Rggb).with_noise(noise());
    let noisy = sample_noise(&scene(64, 48), &noise(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    write_raw(&input, &noisy, &RawSidecar::new(profile)).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let res = rawlume(&[
            "enhance",
            "--input",
            p(&input),
            "--steps",
            "20",
            "--depth",
            "16",
            "--out",
            p(&out),
        ]);
        ok(&res);
        (
            std::fs::read(&out).unwrap(),
            String::from_utf8(res.stdout).unwrap(),
        )
    };
    let (a, log) = run("a.ppm");
    let (b, _) = run("b.ppm");
    assert_eq!(a, b);
    assert!(a.starts_with(b"P6"));
    for stage in [
        "downsample",
        "fit_grids",
        "joint",
        "color_conversion",
        "color_transform",
        "metrics",
    ] {
        assert!(log.contains(stage), "missing stage {stage} in:\n{log}");
    }
    assert!(log.contains("exposure loss: input"));
}

#[test]
fn enhance_without_denoise_or_color_runs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.rlraw");
    write_raw(
        &input,
        &scene(32, 32),
        &RawSidecar::new(CameraProfile::reference(Cfa::Rggb)),
    )
    .unwrap();
    let out = dir.path().join("out.ppm");
    let res = rawlume(&[
        "enhance",
        "--input",
        p(&input),
        "--steps",
        "5",
        "--iterations",
        "3",
        "--no-denoise",
        "--no-color",
        "--out",
        p(&out),
    ]);
    ok(&res);
    let log = String::from_utf8(res.stdout).unwrap();
    assert!(!log.contains("color_transform"));
    assert!(out.exists());
}

#[test]
fn fit_color_rejects_degree_five() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img.ppm");
    gradient_ppm(&img);
    let out = dir.path().join("m.json");
    let res = rawlume(&[
        "fit-color",
        "--source",
        p(&img),
        "--target",
        p(&img),
        "--degree",
        "5",
        "--out",
        p(&out),
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("degree ∈ 1..4"));
    assert!(!out.exists());
}

#[test]
fn fit_color_writes_a_usable_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img.ppm");
    gradient_ppm(&img);
    let matrix = dir.path().join("m.json");
    ok(&rawlume(&[
        "fit-color",
        "--source",
        p(&img),
        "--target",
        p(&img),
        "--constant",
        "--out",
        p(&matrix),
    ]));
    let m = rawlume::color::ColorMatrix::load(&matrix).unwrap();
    assert_eq!(m.spec().term_count(), 20);

    let input = dir.path().join("in.rlraw");
    write_raw(
        &input,
        &scene(32, 32),
        &RawSidecar::new(CameraProfile::reference(Cfa::Rggb)),
    )
    .unwrap();
    let out = dir.path().join("out.ppm");
    ok(&rawlume(&[
        "enhance",
        "--input",
        p(&input),
        "--steps",
        "5",
        "--color-matrix",
        p(&matrix),
        "--out",
        p(&out),
    ]));
}

#[test]
fn calibrate_needs_dark_frames() {
    let dir = tempfile::tempdir().unwrap();
    let (darks, flats) = (dir.path().join("darks"), dir.path().join("flats"));
    std::fs::create_dir_all(&darks).unwrap();
    std::fs::create_dir_all(&flats).unwrap();
    let profile = dir.path().join("profile.json");
    write_sidecar(
        &profile,
        &RawSidecar::new(CameraProfile::reference(Cfa::Rggb)),
    )
    .unwrap();
    let out = dir.path().join("cal.json");
    let res = rawlume(&[
        "calibrate",
        "--dark-dir",
        p(&darks),
        "--flat-dir",
        p(&flats),
        "--profile",
        p(&profile),
        "--out",
        p(&out),
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("need ≥ 2 dark frames"));
}

#[test]
fn calibrate_recovers_planted_noise_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (darks, flats) = (dir.path().join("darks"), dir.path().join("flats"));
    std::fs::create_dir_all(&darks).unwrap();
    std::fs::create_dir_all(&flats).unwrap();
    let base = CameraProfile::reference(Cfa::Rggb);
    let profile = dir.path().join("profile.json");
    write_sidecar(&profile, &RawSidecar::new(base.clone())).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..8 {
        let black = RawImage::filled(128, 128, 0.0, Cfa::Rggb).unwrap();
        let frame = sample_noise(&black, &noise(), &mut rng).unwrap();
        write_raw(
            darks.join(format!("dark{i:02}.rlraw")),
            &frame,
            &RawSidecar::new(base.clone()),
        )
        .unwrap();
    }
    for (i, level) in [0.05, 0.1, 0.2, 0.3, 0.4, 0.5].into_iter().enumerate() {
        let flat = RawImage::filled(128, 128, level, Cfa::Rggb).unwrap();
        for half in ["a", "b"] {
            let frame = sample_noise(&flat, &noise(), &mut rng).unwrap();
            write_raw(
                flats.join(format!("flat{i:02}{half}.rlraw")),
                &frame,
                &RawSidecar::new(base.clone()),
            )
            .unwrap();
        }
    }
    let run = |name: &str| {
        let out = dir.path().join(name);
        let res = rawlume(&[
            "calibrate",
            "--dark-dir",
            p(&darks),
            "--flat-dir",
            p(&flats),
            "--profile",
            p(&profile),
            "--out",
            p(&out),
        ]);
        ok(&res);
        assert!(String::from_utf8_lossy(&res.stdout).contains("PPCC peak"));
        out
    };
    let (a, b) = (run("a.json"), run("b.json"));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let got = read_profile(&a).unwrap().noise.expect("noise written");
    assert!((got.kappa / 0.002 - 1.0).abs() < 0.1, "kappa {}", got.kappa);
    assert!((got.lambda_r - 0.2).abs() <= 0.1, "lambda {}", got.lambda_r);
    assert!(
        (got.sigma_r / 0.015 - 1.0).abs() < 0.15,
        "sigma_r {}",
        got.sigma_r
    );
    assert!(
        (got.sigma_b / 0.010 - 1.0).abs() < 0.25,
        "sigma_b {}",
        got.sigma_b
    );
}

#[test]
fn calibrate_rejects_unpaired_flats() {
    let dir = tempfile::tempdir().unwrap();
    let (darks, flats) = (dir.path().join("darks"), dir.path().join("flats"));
    std::fs::create_dir_all(&darks).unwrap();
    std::fs::create_dir_all(&flats).unwrap();
    let base = CameraProfile::reference(Cfa::Rggb);
    let profile = dir.path().join("profile.json");
    write_sidecar(&profile, &RawSidecar::new(base.clone())).unwrap();
    let flat = RawImage::filled(64, 64, 0.3, Cfa::Rggb).unwrap();
    for i in 0..3 {
        write_raw(
            flats.join(format!("f{i}.rlraw")),
            &flat,
            &RawSidecar::new(base.clone()),
        )
        .unwrap();
    }
    let out = dir.path().join("cal.json");
    let res = rawlume(&[
        "calibrate",
        "--dark-dir",
        p(&darks),
        "--flat-dir",
        p(&flats),
        "--profile",
        p(&profile),
        "--out",
        p(&out),
    ]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("estimate_gain_photon_transfer"));
}

#[test]
fn synth_is_reproducible_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean.rlraw");
    let profile = CameraProfile::reference(Cfa::Rggb).with_noise(noise());
    write_raw(&clean, &scene(64, 64), &RawSidecar::new(profile)).unwrap();
    let run = |tag: &str, seed: &str| {
        let (n, c) = (
            dir.path().join(format!("{tag}_noisy.rlraw")),
            dir.path().join(format!("{tag}_clean.rlraw")),
        );
        ok(&rawlume(&[
            "synth",
            "--clean",
            p(&clean),
            "--seed",
            seed,
            "--out-pair",
            p(&n),
            p(&c),
        ]));
        (
            std::fs::read(&n).unwrap(),
            std::fs::read(&c).unwrap(),
            read_sidecar(sidecar_path(&n)).unwrap(),
        )
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    assert_ne!(a.0, c.0);
    assert_eq!(a.2.seed, Some(7));
    let factor = a.2.darken_factor.unwrap();
    assert!((1.0..=16.0).contains(&factor));
}

#[test]
fn synth_without_noise_or_darkening_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean.rlraw");
    let profile = CameraProfile::reference(Cfa::Rggb).with_noise(NoiseParams::zero());
    write_raw(&clean, &scene(32, 32), &RawSidecar::new(profile.clone())).unwrap();
    let (n, c) = (dir.path().join("n.rlraw"), dir.path().join("c.rlraw"));
    ok(&rawlume(&[
        "synth",
        "--clean",
        p(&clean),
        "--factor-range",
        "1:1",
        "--out-pair",
        p(&n),
        p(&c),
    ]));
    let input = read_raw(&clean, Some(&profile)).unwrap().0;
    assert_eq!(read_raw(&n, Some(&profile)).unwrap().0, input);
    assert_eq!(read_raw(&c, Some(&profile)).unwrap().0, input);
}

#[test]
fn synth_requires_noise_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean.rlraw");
    write_raw(
        &clean,
        &scene(16, 16),
        &RawSidecar::new(CameraProfile::reference(Cfa::Rggb)),
    )
    .unwrap();
    let (n, c) = (dir.path().join("n.rlraw"), dir.path().join("c.rlraw"));
    let res = rawlume(&["synth", "--clean", p(&clean), "--out-pair", p(&n), p(&c)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("calibrate"));
}

#[test]
fn metrics_on_identical_images() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    for name in ["x.ppm", "y.ppm"] {
        gradient_ppm(&a.join(name));
        gradient_ppm(&b.join(name));
    }
    let res = rawlume(&["metrics", "--a", p(&a), "--b", p(&b)]);
    ok(&res);
    let text = String::from_utf8(res.stdout).unwrap();
    let lines: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    for line in &lines {
        assert_eq!(line["psnr"].as_f64(), Some(100.0));
        assert!((line["ssim"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        assert!(line["entropy"].as_f64().unwrap() > 0.0);
        assert!(line["exposure_loss"].as_f64().unwrap() >= 0.0);
    }
    assert!(lines[0]["file"].as_str().unwrap().ends_with("x.ppm"));
}

#[test]
fn bad_thread_count_is_reported() {
    let res = Command::new(env!("CARGO_BIN_EXE_rawlume"))
        .args(["metrics", "--a", "nope.ppm", "--b", "nope.ppm"])
        .env("RAWLUME_THREADS", "many")
        .output()
        .unwrap();
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("RAWLUME_THREADS"));
}
