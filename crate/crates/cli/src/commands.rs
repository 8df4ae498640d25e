use std::path::{Path, PathBuf};

use polarcube::analysis::{
    feature_gradient_histograms, normal_spectral_stddev, poincare_density, pol_unpol_histograms, stokes_histograms,
    Feature, Histogram, Item, LabelFilter, LabelSet, PoincarePlane,
};
use polarcube::camera::{
    mosaic_merge, mosaic_split, simulate_mosaic, simulate_sequential, CaptureConfig, MosaicLayout, RawCapture,
    RawLayout,
};
use polarcube::codecs::inr::{inr_decode, inr_init, inr_train};
use polarcube::codecs::pca::{
    extract_patches_mode, pca_decode, pca_encode, pca_fit, rate_curve, stack_patches, variance_spectrum,
};
use polarcube::io::export::{
    curve_table, density_table, export_curve, export_histogram, fmt_f64, histogram_table, Table,
};
use polarcube::io::labels::read_labels;
use polarcube::io::spsi::{
    read_codebook, read_cube, read_inr, read_normals, read_raw, write_spsi, write_spsi_with, Dtype, SpsiObject,
};
use polarcube::reconstruct::{burst_average_captures, median_filter, quality, reconstruct_image_with, system_matrix};
use polarcube::stokes::{features, is_valid};
use polarcube::synth::{smooth_scene, synthetic_normals};
use polarcube::{Error, Result, StokesImage};
use serde_json::{json, Value};

use crate::config::{CameraKind, RunConfig};
use crate::{Command, SceneArgs};

fn apply_scene(cfg: &mut RunConfig, a: &SceneArgs) {
    if let Some(k) = a.camera {
        cfg.camera.kind = k;
    }
    if let Some(s) = a.noise {
        cfg.noise.gaussian_sigma = s;
    }
    if let Some(w) = a.width {
        cfg.scene.width = w;
    }
    if let Some(h) = a.height {
        cfg.scene.height = h;
    }
    if let Some(c) = a.channels {
        cfg.scene.channels = c;
    }
}

fn parse_label<T: serde::de::DeserializeOwned>(what: &str, values: &[String]) -> Result<Vec<T>> {
    values
        .iter()
        .map(|v| {
            serde_json::from_value(Value::String(v.clone()))
                .map_err(|_| Error::Config(format!("unknown {what} label {v:?}")))
        })
        .collect()
}

/// Copies subcommand flags into the config so the printed config is what runs.
pub fn apply_overrides(cfg: &mut RunConfig, cmd: &Command) -> Result<()> {
    match cmd {
        Command::Simulate { scene, .. } | Command::Roundtrip { scene } => apply_scene(cfg, scene),
        Command::Reconstruct { dop_tol, .. } | Command::Validate { dop_tol, .. } => {
            if let Some(t) = dop_tol {
                cfg.reconstruct.dop_tol = *t;
            }
        }
        Command::Decompose { bins, .. } | Command::SfpStats { bins, .. } => {
            if let Some(b) = bins {
                cfg.stats.bins = *b;
            }
        }
        Command::Denoise { median, .. } => {
            if let Some(m) = median {
                cfg.denoise.median = *m;
            }
        }
        Command::PcaFit { patch, bases, mode, .. } => {
            if let Some(p) = patch {
                cfg.pca.patch = *p;
            }
            if let Some(b) = bases {
                cfg.pca.bases = *b;
            }
            if let Some(m) = mode {
                cfg.pca.mode = m.clone();
            }
        }
        Command::PcaCode { bases, .. } => {
            if let Some(b) = bases {
                cfg.pca.bases = *b;
            }
        }
        Command::InrFit {
            layers,
            hidden,
            steps,
            lr,
            batch,
            ..
        } => {
            if let Some(l) = layers {
                cfg.inr.layers = *l;
            }
            if let Some(h) = hidden {
                if cfg.inr.feature_dim == cfg.inr.hidden {
                    cfg.inr.feature_dim = *h;
                }
                cfg.inr.hidden = *h;
            }
            if let Some(s) = steps {
                cfg.train.steps = *s;
            }
            if let Some(r) = lr {
                cfg.train.lr = *r;
            }
            if let Some(b) = batch {
                cfg.train.batch_pixels = *b;
            }
        }
        Command::Stats {
            bins,
            environment,
            illumination,
            scene_type,
            ..
        } => {
            if let Some(b) = bins {
                cfg.stats.bins = *b;
            }
            if !environment.is_empty() {
                cfg.stats.filter.environment = parse_label("environment", environment)?;
            }
            if !illumination.is_empty() {
                cfg.stats.filter.illumination = parse_label("illumination", illumination)?;
            }
            if !scene_type.is_empty() {
                cfg.stats.filter.scene_type = parse_label("scene type", scene_type)?;
            }
        }
        Command::Features { .. } | Command::InrCode { .. } => {}
    }
    Ok(())
}

pub fn run(cfg: &RunConfig, cmd: &Command) -> Result<Value> {
    match cmd {
        Command::Simulate {
            scene_out, normals_out, ..
        } => cmd_simulate(cfg, scene_out.as_deref(), normals_out.as_deref()),
        Command::Reconstruct { input, .. } => cmd_reconstruct(cfg, input),
        Command::Features { input } => cmd_features(cfg, input),
        Command::Decompose { input, .. } => cmd_decompose(cfg, input),
        Command::Validate { input, .. } => cmd_validate(cfg, input),
        Command::Denoise { inputs, .. } => cmd_denoise(cfg, inputs),
        Command::PcaFit { inputs, spectrum, .. } => cmd_pca_fit(cfg, inputs, spectrum.as_deref()),
        Command::PcaCode {
            input,
            codebook,
            bases,
            curve,
        } => cmd_pca_code(cfg, input, codebook, bases.is_some(), curve.as_deref()),
        Command::InrFit { input, curve, .. } => cmd_inr_fit(cfg, input, curve.as_deref()),
        Command::InrCode {
            model,
            width,
            height,
            channels,
            reference,
        } => cmd_inr_code(cfg, model, [*width, *height, *channels], reference.as_deref()),
        Command::Stats {
            inputs,
            feature,
            direction,
            ..
        } => cmd_stats(cfg, inputs, feature, direction),
        Command::SfpStats { input, .. } => cmd_sfp_stats(cfg, input),
        Command::Roundtrip { .. } => cmd_roundtrip(cfg),
    }
}

/// `--out`, or a path derived from the input by replacing its extension.
fn out_path(cfg: &RunConfig, input: &Path, ext: &str) -> PathBuf {
    cfg.io.out.clone().unwrap_or_else(|| input.with_extension(ext))
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn simulate(cfg: &RunConfig) -> Result<(StokesImage, CaptureConfig, RawCapture)> {
    let scene = smooth_scene(&cfg.scene, cfg.seed);
    let capture = cfg.capture_config(scene.channels)?;
    let raw = match cfg.camera.kind {
        CameraKind::Hyperspectral => simulate_sequential(&scene, &capture, &cfg.noise)?,
        CameraKind::Trichromatic => simulate_mosaic(&scene, &capture, &MosaicLayout::default(), &cfg.noise)?,
    };
    Ok((scene, capture, raw))
}

fn cmd_simulate(cfg: &RunConfig, scene_out: Option<&Path>, normals_out: Option<&Path>) -> Result<Value> {
    let out = cfg
        .io
        .out
        .clone()
        .ok_or_else(|| Error::Config("simulate needs --out for the raw capture".into()))?;
    let (scene, _, raw) = simulate(cfg)?;
    write_spsi(&out, &SpsiObject::Raw(raw.clone()))?;
    if let Some(p) = scene_out {
        write_spsi(p, &SpsiObject::Cube(scene.clone()))?;
    }
    if let Some(p) = normals_out {
        let n = synthetic_normals(
            scene.width,
            scene.height,
            cfg.sfp.channels,
            cfg.sfp.jitter_deg,
            cfg.seed,
        )?;
        write_spsi(p, &SpsiObject::Normals(n))?;
    }
    let clipped: usize = raw.frames.iter().map(|f| f.valid.iter().filter(|v| !**v).count()).sum();
    Ok(json!({
        "command": "simulate",
        "camera": cfg.camera.kind,
        "width": raw.width,
        "height": raw.height,
        "channels": scene.channels,
        "frames": raw.frames.len(),
        "clipped_samples": clipped,
        "out": show(&out),
        "scene_out": scene_out.map(show),
        "normals_out": normals_out.map(show),
    }))
}

/// The filter configurations a raw capture was taken with.
fn capture_for_raw(cfg: &RunConfig, raw: &RawCapture) -> Result<CaptureConfig> {
    match &raw.layout {
        RawLayout::Sequential { channels, configs } => {
            if *configs != cfg.camera.qwp_angles_deg.len() {
                return Err(Error::Config(format!(
                    "raw capture has {configs} configurations, camera.qwp_angles_deg lists {}",
                    cfg.camera.qwp_angles_deg.len()
                )));
            }
            let mut c = cfg.clone();
            c.camera.kind = CameraKind::Hyperspectral;
            c.capture_config(*channels)
        }
        RawLayout::Mosaic(layout) => Ok(CaptureConfig::from_layout(layout).with_exposure(cfg.camera.exposure)),
    }
}

fn conditioning(capture: &CaptureConfig) -> Result<f64> {
    (0..capture.channels.len()).try_fold(0.0f64, |m, c| Ok(m.max(system_matrix(capture, c)?.condition_number)))
}

fn cmd_reconstruct(cfg: &RunConfig, input: &Path) -> Result<Value> {
    let raw = read_raw(input)?;
    let capture = capture_for_raw(cfg, &raw)?;
    let cube = reconstruct_image_with(&raw, &capture, &cfg.reconstruct)?;
    let out = out_path(cfg, input, "cube.spsi");
    write_spsi(&out, &SpsiObject::Cube(cube.clone()))?;
    Ok(json!({
        "command": "reconstruct",
        "width": cube.width,
        "height": cube.height,
        "channels": cube.channels,
        "valid_fraction": cube.valid_fraction(),
        "max_condition_number": conditioning(&capture)?,
        "out": show(&out),
    }))
}

fn cmd_features(cfg: &RunConfig, input: &Path) -> Result<Value> {
    let img = read_cube(input)?;
    let header = [
        "x [px]",
        "y [px]",
        "channel [index]",
        "wavelength [nm]",
        "s0 [intensity]",
        "s1 [intensity]",
        "s2 [intensity]",
        "s3 [intensity]",
        "dop [1]",
        "dolp [1]",
        "docp [1]",
        "aolp [rad]",
        "chi [rad]",
        "cop [1]",
        "aolp_degenerate [bool]",
    ];
    let mut rows = Vec::new();
    let (mut dolp, mut docp, mut undefined) = (0.0, 0.0, 0usize);
    for c in 0..img.channels {
        let wl = img.wavelengths.get(c).map_or(f64::NAN, |&w| w as f64);
        for y in 0..img.height {
            for x in 0..img.width {
                if !img.is_valid_at(x, y, c) {
                    continue;
                }
                let s = img.get(x, y, c);
                let Ok(f) = features(s) else {
                    undefined += 1;
                    continue;
                };
                dolp += f.dolp;
                docp += f.docp;
                rows.push(vec![
                    x.to_string(),
                    y.to_string(),
                    c.to_string(),
                    fmt_f64(wl),
                    fmt_f64(s.s0),
                    fmt_f64(s.s1),
                    fmt_f64(s.s2),
                    fmt_f64(s.s3),
                    fmt_f64(f.rho),
                    fmt_f64(f.dolp),
                    fmt_f64(f.docp),
                    fmt_f64(f.psi),
                    fmt_f64(f.chi),
                    f.cop.to_string(),
                    f.aolp_degenerate.to_string(),
                ]);
            }
        }
    }
    let n = rows.len();
    let out = out_path(cfg, input, "features.csv");
    Table {
        header: header.iter().map(|s| s.to_string()).collect(),
        rows,
    }
    .write(&out)?;
    Ok(json!({
        "command": "features",
        "pixels": n,
        "undefined": undefined,
        "mean_dolp": if n > 0 { dolp / n as f64 } else { f64::NAN },
        "mean_docp": if n > 0 { docp / n as f64 } else { f64::NAN },
        "out": show(&out),
    }))
}

fn cmd_decompose(cfg: &RunConfig, input: &Path) -> Result<Value> {
    let img = read_cube(input)?;
    let (p, u) = pol_unpol_histograms(&[Item::new(&img)], cfg.stats.bins, &LabelFilter::any())?;
    let centers = p.centers();
    let table = Table {
        header: vec![
            "bin_lo [intensity]".into(),
            "bin_hi [intensity]".into(),
            "bin_center [intensity]".into(),
            "polarized_count [samples]".into(),
            "unpolarized_count [samples]".into(),
        ],
        rows: (0..p.bins())
            .map(|i| {
                vec![
                    fmt_f64(p.edges[i]),
                    fmt_f64(p.edges[i + 1]),
                    fmt_f64(centers[i]),
                    p.counts[i].to_string(),
                    u.counts[i].to_string(),
                ]
            })
            .collect(),
    };
    let out = out_path(cfg, input, "decompose.csv");
    table.write(&out)?;
    let invalid = img
        .valid_vectors()
        .filter(|(_, _, _, s)| !is_valid(*s, cfg.reconstruct.dop_tol))
        .count();
    Ok(json!({
        "command": "decompose",
        "samples": p.total,
        "invalid": invalid,
        "mean_polarized": p.mean(),
        "mean_unpolarized": u.mean(),
        "out": show(&out),
    }))
}

fn cmd_validate(cfg: &RunConfig, input: &Path) -> Result<Value> {
    let mut img = read_cube(input)?;
    let total = img.width * img.height * img.channels;
    let masked = img.mask.iter().filter(|v| !**v).count();
    let mut invalid = 0usize;
    for c in 0..img.channels {
        for y in 0..img.height {
            for x in 0..img.width {
                if img.is_valid_at(x, y, c) && !is_valid(img.get(x, y, c), cfg.reconstruct.dop_tol) {
                    invalid += 1;
                    img.set_valid(x, y, c, false);
                }
            }
        }
    }
    if let Some(out) = &cfg.io.out {
        write_spsi(out, &SpsiObject::Cube(img))?;
    }
    Ok(json!({
        "command": "validate",
        "sites": total,
        "masked": masked,
        "invalid_dop": invalid,
        "valid_fraction": (total - masked - invalid) as f64 / total.max(1) as f64,
        "out": cfg.io.out.as_deref().map(show),
    }))
}

fn cmd_denoise(cfg: &RunConfig, inputs: &[PathBuf]) -> Result<Value> {
    let captures = inputs.iter().map(read_raw).collect::<Result<Vec<_>>>()?;
    let mut avg = burst_average_captures(&captures)?;
    let k = cfg.denoise.median;
    if k > 1 {
        let mosaic = matches!(avg.layout, RawLayout::Mosaic(_));
        for tf in &mut avg.frames {
            tf.frame = if mosaic {
                let segs = mosaic_split(&tf.frame)?
                    .iter()
                    .map(|s| median_filter(s, k))
                    .collect::<Result<Vec<_>>>()?;
                mosaic_merge(&segs)?
            } else {
                median_filter(&tf.frame, k)?
            };
        }
    }
    let out = out_path(cfg, &inputs[0], "avg.spsi");
    write_spsi(&out, &SpsiObject::Raw(avg.clone()))?;
    Ok(json!({
        "command": "denoise",
        "captures": captures.len(),
        "frames": avg.frames.len(),
        "median": k,
        "out": show(&out),
    }))
}

fn cmd_pca_fit(cfg: &RunConfig, inputs: &[PathBuf], spectrum: Option<&Path>) -> Result<Value> {
    let mode = cfg.pca.patch_mode()?;
    let mats = inputs
        .iter()
        .map(|p| extract_patches_mode(&read_cube(p)?, cfg.pca.patch, mode))
        .collect::<Result<Vec<_>>>()?;
    let all = stack_patches(&mats)?;
    let (rows, dim) = (all.len(), all.dim());
    let cb = pca_fit(&all, cfg.pca.bases)?;
    let spec = variance_spectrum(&cb);
    if let Some(p) = spectrum {
        let idx: Vec<f64> = (1..=spec.len()).map(|k| k as f64).collect();
        export_curve(
            p,
            &[("basis", "index", idx), ("variance_proportion", "1", spec.clone())],
        )?;
    }
    let out = out_path(cfg, &inputs[0], "codebook.spsi");
    write_spsi(&out, &SpsiObject::Codebook(cb.clone()))?;
    Ok(json!({
        "command": "pca-fit",
        "patches": rows,
        "dim": dim,
        "bases": cb.rank(),
        "explained_variance": spec.iter().sum::<f64>(),
        "leading_proportions": spec.iter().take(8).collect::<Vec<_>>(),
        "codebook_bits": cb.stored_bits(),
        "out": show(&out),
    }))
}

fn cmd_pca_code(cfg: &RunConfig, input: &Path, codebook: &Path, truncate: bool, curve: Option<&Path>) -> Result<Value> {
    let img = read_cube(input)?;
    let mut cb = read_codebook(codebook)?;
    if truncate {
        cb = cb.truncated(cfg.pca.bases)?;
    }
    let enc = pca_encode(&img, &cb)?;
    let dec = pca_decode(&enc, &cb)?;
    let q = quality(&img, &dec)?;
    if let Some(p) = curve {
        let pts = rate_curve(&img, &cb, &cfg.pca.rate_points(cb.rank()))?;
        export_curve(
            p,
            &[
                ("bases", "count", pts.iter().map(|p| p.bases as f64).collect()),
                ("bpp", "bit/px", pts.iter().map(|p| p.bpp).collect()),
                (
                    "bpp_with_codebook",
                    "bit/px",
                    pts.iter().map(|p| p.bpp_with_codebook).collect(),
                ),
                ("mse", "intensity^2", pts.iter().map(|p| p.mse).collect()),
            ],
        )?;
    }
    let out = out_path(cfg, input, "pca.spsi");
    write_spsi(&out, &SpsiObject::Cube(dec))?;
    Ok(json!({
        "command": "pca-code",
        "bases": cb.rank(),
        "bpp": enc.bpp(),
        "bpp_with_codebook": enc.bpp_with_codebook(&cb),
        "mse": q.mse,
        "psnr": q.psnr,
        "out": show(&out),
    }))
}

fn cmd_inr_fit(cfg: &RunConfig, input: &Path, curve: Option<&Path>) -> Result<Value> {
    let img = read_cube(input)?;
    let model = inr_init(cfg.inr, cfg.seed)?;
    let (model, report) = inr_train(model, &img, &cfg.train)?;
    eprintln!("trained {} steps in {:.1} s", report.steps, report.wall_clock_secs);
    if let Some(p) = curve {
        export_curve(
            p,
            &[
                ("step", "count", report.loss_curve.iter().map(|s| s.0 as f64).collect()),
                ("mse", "intensity^2", report.loss_curve.iter().map(|s| s.1).collect()),
                ("lr", "1", report.lr_curve.iter().map(|s| s.1).collect()),
            ],
        )?;
    }
    let out = out_path(cfg, input, "inr.spsi");
    let dtype = if cfg.io.inr_f64 { Dtype::F64 } else { Dtype::F32 };
    write_spsi_with(&out, &SpsiObject::Inr(model.clone()), dtype)?;
    Ok(json!({
        "command": "inr-fit",
        "params": model.param_count(),
        "bpp": model.bpp(img.width, img.height),
        "steps": report.steps,
        "final_mse": report.final_mse,
        "final_psnr": report.final_psnr,
        "out": show(&out),
    }))
}

fn cmd_inr_code(cfg: &RunConfig, path: &Path, dims: [Option<usize>; 3], reference: Option<&Path>) -> Result<Value> {
    let model = read_inr(path)?;
    let reference = reference.map(read_cube).transpose()?;
    let from_model = |i: usize| model.coord_max[i].round() as usize + 1;
    let from_ref = |i: usize| reference.as_ref().map(|r| [r.width, r.height, r.channels][i]);
    let [w, h, c] = [0, 1, 2].map(|i| dims[i].or(from_ref(i)).unwrap_or_else(|| from_model(i)));
    let mut dec = inr_decode(&model, w, h, c);
    let mut summary = json!({
        "command": "inr-code",
        "width": w,
        "height": h,
        "channels": c,
        "bpp": model.bpp(w, h),
    });
    if let Some(r) = &reference {
        if r.wavelengths.len() == c {
            dec.wavelengths = r.wavelengths.clone();
        }
        let q = quality(r, &dec)?;
        summary["mse"] = json!(q.mse);
        summary["psnr"] = json!(q.psnr);
    }
    let out = out_path(cfg, path, "decoded.spsi");
    write_spsi(&out, &SpsiObject::Cube(dec))?;
    summary["out"] = json!(show(&out));
    Ok(summary)
}

/// Sidecar labels live next to the cube as `<stem>.labels.toml`.
fn sidecar_labels(cube: &Path) -> Result<Option<LabelSet>> {
    let p = cube.with_extension("labels.toml");
    if p.exists() {
        Ok(Some(read_labels(&p)?.labels()))
    } else {
        Ok(None)
    }
}

fn histogram_summary(h: &Histogram) -> Value {
    let occ = h.occupied();
    let support = match (occ.first(), occ.last()) {
        (Some(&a), Some(&b)) => json!([h.edges[a], h.edges[b + 1]]),
        _ => Value::Null,
    };
    json!({ "samples": h.total, "dropped": h.dropped, "mean": h.mean(), "support": support })
}

fn cmd_stats(cfg: &RunConfig, inputs: &[PathBuf], spec: &str, direction: &str) -> Result<Value> {
    let cubes = inputs.iter().map(read_cube).collect::<Result<Vec<_>>>()?;
    let labels = inputs.iter().map(|p| sidecar_labels(p)).collect::<Result<Vec<_>>>()?;
    let items: Vec<Item> = cubes
        .iter()
        .zip(&labels)
        .map(|(c, l)| match l {
            Some(l) => Item::labeled(c, l),
            None => Item::new(c),
        })
        .collect();
    let selected = items.iter().filter(|i| cfg.stats.filter.matches(i.labels)).count();
    let (bins, filter) = (cfg.stats.bins, &cfg.stats.filter);
    let out = out_path(cfg, &inputs[0], &format!("{spec}.csv"));
    let mut summary =
        json!({ "command": "stats", "feature": spec, "images": items.len(), "selected": selected, "bins": bins });
    let stats = match spec {
        "pol-unpol" => {
            let (p, u) = pol_unpol_histograms(&items, bins, filter)?;
            let mut t = histogram_table(&p, "intensity");
            t.header[3] = "polarized_count [samples]".into();
            t.header[4] = "unpolarized_count [samples]".into();
            for (row, n) in t.rows.iter_mut().zip(&u.counts) {
                row[4] = n.to_string();
            }
            t.write(&out)?;
            json!({ "polarized": histogram_summary(&p), "unpolarized": histogram_summary(&u) })
        }
        "poincare-s1s2" | "poincare-s1s3" => {
            let plane = if spec.ends_with("s1s2") {
                PoincarePlane::S1S2
            } else {
                PoincarePlane::S1S3
            };
            let g = poincare_density(&items, plane, bins, filter)?;
            density_table(&g).write(&out)?;
            json!({ "samples": g.counts.iter().sum::<u64>() })
        }
        _ => {
            let (name, gradient) = match spec.strip_suffix("-gradient") {
                Some(n) => (n, true),
                None => (spec, false),
            };
            let f = Feature::parse(name).ok_or_else(|| Error::Config(format!("unknown feature {spec:?}")))?;
            let h = if gradient {
                let g = feature_gradient_histograms(&items, f, bins, filter)?;
                match direction {
                    "pooled" => g.pooled,
                    "horizontal" => g.horizontal,
                    "vertical" => g.vertical,
                    d => return Err(Error::Config(format!("unknown gradient direction {d:?}"))),
                }
            } else {
                stokes_histograms(&items, f, bins, filter)?
            };
            export_histogram(&out, &h, f.unit())?;
            histogram_summary(&h)
        }
    };
    summary["stats"] = stats;
    summary["out"] = json!(show(&out));
    Ok(summary)
}

fn median(v: &[f64]) -> f64 {
    let mut v: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn cmd_sfp_stats(cfg: &RunConfig, input: &Path) -> Result<Value> {
    let stack = read_normals(input)?;
    let st = normal_spectral_stddev(&stack, cfg.stats.bins)?;
    let dir = cfg.io.out.clone().unwrap_or_else(|| input.with_extension("sfp"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let parts: [(&str, &Histogram, &[f64], &str); 5] = [
        ("x", &st.hist_x, &st.std_x, "1"),
        ("y", &st.hist_y, &st.std_y, "1"),
        ("z", &st.hist_z, &st.std_z, "1"),
        ("azimuth", &st.hist_azimuth, &st.std_azimuth, "rad"),
        ("elevation", &st.hist_elevation, &st.std_elevation, "rad"),
    ];
    let mut medians = serde_json::Map::new();
    for (name, h, per_pixel, unit) in parts {
        export_histogram(dir.join(format!("std_{name}.csv")), h, unit)?;
        medians.insert(name.into(), json!(median(per_pixel)));
    }
    let per_pixel = curve_table(&[
        ("std_x", "1", st.std_x.clone()),
        ("std_y", "1", st.std_y.clone()),
        ("std_z", "1", st.std_z.clone()),
        ("std_azimuth", "rad", st.std_azimuth.clone()),
        ("std_elevation", "rad", st.std_elevation.clone()),
    ])?;
    per_pixel.write(dir.join("per_pixel.csv"))?;
    Ok(json!({
        "command": "sfp-stats",
        "width": st.width,
        "height": st.height,
        "channels": stack.channels,
        "valid_pixels": stack.mask.iter().filter(|v| **v).count(),
        "median_std": medians,
        "out": show(&dir),
    }))
}

fn cmd_roundtrip(cfg: &RunConfig) -> Result<Value> {
    let (scene, capture, raw) = simulate(cfg)?;
    let cube = reconstruct_image_with(&raw, &capture, &cfg.reconstruct)?;
    let q = quality(&scene, &cube)?;
    let mut max_abs = 0.0f64;
    let mut peak = 0.0f64;
    for (x, y, c, s) in scene.valid_vectors() {
        peak = peak.max(s.s0);
        if cube.is_valid_at(x, y, c) {
            let r = cube.get(x, y, c).to_array();
            for (a, b) in s.to_array().iter().zip(r) {
                max_abs = max_abs.max((a - b).abs());
            }
        }
    }
    if let Some(out) = &cfg.io.out {
        write_spsi(out, &SpsiObject::Cube(cube.clone()))?;
    }
    Ok(json!({
        "command": "roundtrip",
        "camera": cfg.camera.kind,
        "width": scene.width,
        "height": scene.height,
        "channels": scene.channels,
        "noise_sigma": cfg.noise.gaussian_sigma,
        "valid_fraction": cube.valid_fraction(),
        "max_abs_error": max_abs,
        "max_rel_error": max_abs / peak,
        "mse": q.mse,
        "psnr": q.psnr,
        "max_condition_number": conditioning(&capture)?,
        "out": cfg.io.out.as_deref().map(show),
    }))
}
