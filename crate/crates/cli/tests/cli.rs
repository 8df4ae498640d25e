use std::f64::consts::FRAC_PI_2;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn polarcube(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polarcube"))
        .args(args)
        .current_dir(dir)
        .env_remove("POLARCUBE_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = polarcube(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("summary is JSON")
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    polarcube(dir, args).status.code().expect("exit code")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn noiseless_hyperspectral_roundtrip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let s = ok(
        dir.path(),
        &["roundtrip", "--camera", "hyperspectral", "--noise", "0", "--seed", "7"],
    );
    assert!(s["max_rel_error"].as_f64().unwrap() < 1e-5, "{s}");
    assert_eq!(s["valid_fraction"].as_f64().unwrap(), 1.0);
    assert_eq!(s["channels"], 21);
}

#[test]
fn synthetic_cube_validates_fully() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "simulate",
            "--seed",
            "2",
            "--out",
            "raw.spsi",
            "--scene-out",
            "cube.spsi",
        ],
    );
    let s = ok(dir.path(), &["validate", "cube.spsi"]);
    assert_eq!(s["valid_fraction"].as_f64().unwrap(), 1.0);
    assert_eq!(s["invalid_dop"], 0);
}

#[test]
fn aolp_gradient_csv_stays_in_half_period() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "simulate",
            "--seed",
            "5",
            "--out",
            "raw.spsi",
            "--scene-out",
            "cube.spsi",
        ],
    );
    let s = ok(
        dir.path(),
        &["stats", "--feature", "aolp-gradient", "cube.spsi", "--out", "g.csv"],
    );
    let rows = csv_rows(&dir.path().join("g.csv"));
    assert_eq!(rows.len(), 201);
    let mut counted = 0u64;
    for r in &rows {
        let (lo, hi): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        assert!(lo >= -FRAC_PI_2 && hi <= FRAC_PI_2, "bin [{lo}, {hi}]");
        counted += r[3].parse::<u64>().unwrap();
    }
    assert!(counted > 0);
    assert_eq!(s["stats"]["dropped"], 0);
    assert_eq!(s["stats"]["samples"].as_u64().unwrap(), counted);
}

fn pipeline(dir: &Path, threads: &str) -> Vec<(String, Vec<u8>)> {
    let t = ["--threads", threads];
    let mut stdout = Vec::new();
    for args in [
        &[
            "simulate",
            "--seed",
            "11",
            "--noise",
            "0.01",
            "--out",
            "raw.spsi",
            "--scene-out",
            "scene.spsi",
        ][..],
        &["reconstruct", "raw.spsi", "--out", "cube.spsi"],
        &["stats", "--feature", "dolp-gradient", "cube.spsi", "--out", "stats.csv"],
        &["features", "cube.spsi"],
        &["pca-fit", "scene.spsi", "--patch", "8", "--bases", "4"],
        &[
            "inr-fit",
            "scene.spsi",
            "--layers",
            "2",
            "--hidden",
            "8",
            "--steps",
            "20",
            "--batch",
            "64",
        ],
    ] {
        let out = polarcube(dir, &[args, &t[..]].concat());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        stdout.extend(out.stdout);
    }
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files.push(("stdout".into(), stdout));
    files
}

#[test]
fn identical_config_and_seed_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let ra = pipeline(a.path(), "1");
    let rb = pipeline(b.path(), "1");
    let rc = pipeline(c.path(), "2");
    assert_eq!(ra.len(), 8);
    for ((x, y), z) in ra.iter().zip(&rb).zip(&rc) {
        assert_eq!(x.0, y.0);
        assert!(x.1 == y.1, "{} differs between runs", x.0);
        assert!(x.1 == z.1, "{} differs between thread counts", x.0);
    }
}

#[test]
fn resolved_config_is_printed_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "seed = 3\n[noise]\ngaussian_sigma = 0.02\n[scene]\nwidth = 16\nheight = 8\n",
    )
    .unwrap();
    let out = polarcube(dir.path(), &["roundtrip", "--config", "run.toml", "--seed", "5"]);
    assert!(out.status.success());
    let printed: toml::Table = toml::from_str(&String::from_utf8(out.stderr).unwrap()).unwrap();
    assert_eq!(printed["seed"].as_integer(), Some(5));
    assert_eq!(printed["noise"]["gaussian_sigma"].as_float(), Some(0.02));
    assert_eq!(printed["noise"]["rng_seed"].as_integer(), Some(6));
    // Defaults are printed too.
    assert_eq!(printed["inr"]["hidden"].as_integer(), Some(256));
    assert_eq!(printed["stats"]["bins"].as_integer(), Some(201));
    let s: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((s["width"].as_u64(), s["height"].as_u64()), (Some(16), Some(8)));
    assert_eq!(s["noise_sigma"].as_f64(), Some(0.02));
}

#[test]
fn exit_codes_follow_failure_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("typo.toml"), "sede = 1\n").unwrap();
    std::fs::write(
        d.join("lp_only.toml"),
        "[camera]\nqwp_angles_deg = [0.0, 0.0, 0.0, 0.0]\n",
    )
    .unwrap();
    std::fs::write(d.join("junk.spsi"), b"not a container at all").unwrap();
    assert_eq!(code(d, &["roundtrip", "--config", "typo.toml"]), 2);
    assert_eq!(code(d, &["roundtrip", "--config", "lp_only.toml"]), 2);
    assert_eq!(code(d, &["roundtrip", "--camera", "trichromatic", "--width", "30"]), 2);
    assert_eq!(code(d, &["simulate"]), 2);
    assert_eq!(code(d, &["roundtrip", "--bogus-flag"]), 2);
    assert_eq!(code(d, &["validate", "missing.spsi"]), 3);
    assert_eq!(code(d, &["validate", "junk.spsi"]), 3);
    assert_eq!(code(d, &["roundtrip", "--config", "missing.toml"]), 3);

    ok(
        d,
        &[
            "simulate",
            "--seed",
            "1",
            "--out",
            "raw.spsi",
            "--scene-out",
            "cube.spsi",
        ],
    );
    assert_eq!(code(d, &["stats", "--feature", "nope", "cube.spsi"]), 2);
    assert_eq!(
        code(
            d,
            &["stats", "--feature", "aolp", "--environment", "attic", "cube.spsi"]
        ),
        2
    );
    // An unlabeled cube never passes a constrained filter.
    assert_eq!(
        code(
            d,
            &["stats", "--feature", "aolp", "--environment", "indoor", "cube.spsi"]
        ),
        4
    );
    assert_eq!(code(d, &["reconstruct", "cube.spsi"]), 3);
}

#[test]
fn label_sidecar_drives_filtering() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &["simulate", "--seed", "1", "--out", "raw.spsi", "--scene-out", "a.spsi"],
    );
    std::fs::copy(d.join("a.spsi"), d.join("b.spsi")).unwrap();
    std::fs::write(
        d.join("a.labels.toml"),
        "environment = \"outdoor\"\nillumination = \"cloudy\"\ncapture_time = \"2024-05-01T10:00:00Z\"\nscene_type = \"scene\"\n",
    )
    .unwrap();
    let s = ok(
        d,
        &[
            "stats",
            "--feature",
            "dolp",
            "a.spsi",
            "b.spsi",
            "--environment",
            "outdoor",
            "--out",
            "o.csv",
        ],
    );
    assert_eq!((s["images"].as_u64(), s["selected"].as_u64()), (Some(2), Some(1)));
    let all = ok(
        d,
        &["stats", "--feature", "dolp", "a.spsi", "b.spsi", "--out", "all.csv"],
    );
    assert_eq!(all["selected"], 2);
    assert_eq!(
        all["stats"]["samples"].as_u64().unwrap(),
        2 * s["stats"]["samples"].as_u64().unwrap()
    );
}

#[test]
fn pca_bits_per_pixel_follow_coefficient_count() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "simulate",
            "--seed",
            "4",
            "--out",
            "raw.spsi",
            "--scene-out",
            "cube.spsi",
            "--channels",
            "3",
        ],
    );
    let fit = ok(
        d,
        &[
            "pca-fit",
            "cube.spsi",
            "--patch",
            "8",
            "--bases",
            "16",
            "--spectrum",
            "spec.csv",
        ],
    );
    assert_eq!(fit["patches"], 64);
    assert_eq!(fit["dim"], 8 * 8 * 3 * 4);
    assert_eq!(csv_rows(&d.join("spec.csv")).len(), 16);
    let mut last = f64::INFINITY;
    for k in [1, 4, 16] {
        let k_str = k.to_string();
        let s = ok(
            d,
            &[
                "pca-code",
                "cube.spsi",
                "--codebook",
                "cube.codebook.spsi",
                "--bases",
                &k_str,
            ],
        );
        // 64 patches × k coefficients × 32 bits over 64 × 64 pixels.
        assert_eq!(s["bpp"].as_f64().unwrap(), (64 * k * 32) as f64 / 4096.0);
        let mse = s["mse"].as_f64().unwrap();
        assert!(mse <= last, "mse {mse} grew at k = {k}");
        last = mse;
    }
}

#[test]
fn inr_model_decodes_to_training_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("f64.toml"), "[io]\ninr_f64 = true\n").unwrap();
    ok(
        d,
        &[
            "simulate",
            "--seed",
            "4",
            "--out",
            "raw.spsi",
            "--scene-out",
            "cube.spsi",
            "--channels",
            "2",
            "--width",
            "16",
            "--height",
            "16",
        ],
    );
    let fit = ok(
        d,
        &[
            "inr-fit",
            "cube.spsi",
            "--config",
            "f64.toml",
            "--layers",
            "2",
            "--hidden",
            "8",
            "--steps",
            "30",
            "--curve",
            "loss.csv",
        ],
    );
    let dec = ok(d, &["inr-code", "cube.inr.spsi", "--reference", "cube.spsi"]);
    assert_eq!(
        (dec["width"].as_u64(), dec["height"].as_u64(), dec["channels"].as_u64()),
        (Some(16), Some(16), Some(2))
    );
    let (a, b) = (fit["final_mse"].as_f64().unwrap(), dec["mse"].as_f64().unwrap());
    assert!((a - b).abs() <= 1e-6 * a, "fit {a} vs decoded {b}");
    assert_eq!(fit["bpp"], dec["bpp"]);
    assert!(!csv_rows(&d.join("loss.csv")).is_empty());
}

#[test]
fn denoise_of_repeated_capture_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["simulate", "--seed", "8", "--noise", "0.01", "--out", "raw.spsi"]);
    let s = ok(
        d,
        &[
            "denoise", "raw.spsi", "raw.spsi", "raw.spsi", "raw.spsi", "--out", "avg.spsi",
        ],
    );
    assert_eq!(s["captures"], 4);
    assert_eq!(
        std::fs::read(d.join("avg.spsi")).unwrap(),
        std::fs::read(d.join("raw.spsi")).unwrap()
    );
    assert_eq!(code(d, &["denoise", "raw.spsi", "--median", "2"]), 2);
}

#[test]
fn sfp_stats_of_unjittered_normals_are_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("flat.toml"), "[sfp]\njitter_deg = 0.0\nchannels = 5\n").unwrap();
    ok(
        d,
        &[
            "simulate",
            "--config",
            "flat.toml",
            "--out",
            "raw.spsi",
            "--normals-out",
            "n.spsi",
            "--width",
            "16",
            "--height",
            "16",
        ],
    );
    let s = ok(d, &["sfp-stats", "n.spsi", "--out", "sfp"]);
    assert_eq!(
        (s["channels"].as_u64(), s["valid_pixels"].as_u64()),
        (Some(5), Some(256))
    );
    for k in ["x", "y", "z", "azimuth", "elevation"] {
        assert!(s["median_std"][k].as_f64().unwrap() < 1e-6, "{k}: {s}");
        assert!(d.join("sfp").join(format!("std_{k}.csv")).exists());
    }
}

#[test]
fn trichromatic_pipeline_reconstructs_from_mosaic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim = ok(
        d,
        &[
            "simulate",
            "--camera",
            "trichromatic",
            "--seed",
            "3",
            "--out",
            "raw.spsi",
            "--scene-out",
            "scene.spsi",
        ],
    );
    assert_eq!((sim["frames"].as_u64(), sim["channels"].as_u64()), (Some(1), Some(3)));
    // The raw layout, not the config, decides how to reconstruct.
    let rec = ok(d, &["reconstruct", "raw.spsi", "--out", "cube.spsi"]);
    assert_eq!(rec["channels"], 3);
    assert!(rec["valid_fraction"].as_f64().unwrap() > 0.99);
}
