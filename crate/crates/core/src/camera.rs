//! Forward models of the two acquisition systems.
//!
//! The recorded intensity for channel `c` under configuration `Θ` is the first
//! element of `M_c(Θ) s_c`, where `s_c` is the scene's Stokes spectrum
//! integrated against the channel's spectral transmission. Light crosses the
//! retarder first and the linear polarizer second, so the modulation matrix is
//! `C_c · P(θ2) · Q(θ1, δ)`.

use std::f64::consts::FRAC_PI_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Frame, StokesImage};
use crate::reconstruct::system_matrix;
use crate::stokes::{apply, lp_mueller, retarder_mueller, MuellerMatrix, StokesVector};

/// Trapezoidal integral of `values` sampled on `grid`.
pub fn trapezoid(grid: &[f64], values: &[f64]) -> f64 {
    grid.windows(2)
        .zip(values.windows(2))
        .map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1]))
        .sum()
}

/// Per-channel spectral transmission curves on a shared wavelength grid (nm).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralResponse {
    pub grid: Vec<f64>,
    pub curves: Vec<Vec<f64>>,
    /// Nominal centre wavelength of each channel.
    pub centers: Vec<f64>,
}

impl SpectralResponse {
    pub fn new(grid: Vec<f64>, curves: Vec<Vec<f64>>, centers: Vec<f64>) -> Result<Self> {
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Sampling("wavelength grid must be strictly increasing".into()));
        }
        if curves.len() != centers.len() {
            return Err(Error::Sampling("one centre wavelength per curve".into()));
        }
        for (c, curve) in curves.iter().enumerate() {
            if curve.len() != grid.len() {
                return Err(Error::Sampling(format!(
                    "channel {c}: {} samples on a grid of {}",
                    curve.len(),
                    grid.len()
                )));
            }
            if curve.iter().any(|t| !(0.0..=1.0).contains(t)) {
                return Err(Error::Sampling(format!("channel {c}: transmission outside [0, 1]")));
            }
        }
        Ok(Self { grid, curves, centers })
    }

    pub fn channels(&self) -> usize {
        self.curves.len()
    }

    /// Unit-area Gaussian curves with the given full width at half maximum.
    pub fn gaussian(grid: Vec<f64>, centers: &[f64], fwhm: f64) -> Result<Self> {
        let sigma = fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
        let curves = centers
            .iter()
            .map(|&mu| {
                let raw: Vec<f64> = grid
                    .iter()
                    .map(|&l| (-0.5 * ((l - mu) / sigma).powi(2)).exp())
                    .collect();
                let area = trapezoid(&grid, &raw);
                raw.into_iter().map(|v| v / area).collect()
            })
            .collect();
        Self::new(grid, curves, centers.to_vec())
    }

    /// Unit-area box filters of the given width.
    pub fn boxes(grid: Vec<f64>, centers: &[f64], width: f64) -> Result<Self> {
        let curves = centers
            .iter()
            .map(|&mu| {
                let raw: Vec<f64> = grid
                    .iter()
                    .map(|&l| if (l - mu).abs() <= 0.5 * width + 1e-9 { 1.0 } else { 0.0 })
                    .collect();
                let area = trapezoid(&grid, &raw);
                raw.into_iter().map(|v| v / area).collect()
            })
            .collect();
        Self::new(grid, curves, centers.to_vec())
    }

    /// 21 LCTF bands, 450–650 nm in 10 nm steps, 10 nm box filters on a 1 nm grid.
    pub fn lctf_default() -> Self {
        let grid: Vec<f64> = (400..=700).map(|l| l as f64).collect();
        Self::boxes(grid, &lctf_wavelengths(), 10.0).expect("valid default response")
    }

    /// R, G, B Gaussian responses (FWHM 30 nm) on a 1 nm grid.
    pub fn trichromatic_default() -> Self {
        let grid: Vec<f64> = (380..=720).map(|l| l as f64).collect();
        Self::gaussian(grid, &[610.0, 540.0, 465.0], 30.0).expect("valid default response")
    }
}

/// Centre wavelengths of the hyperspectral camera: 450..=650 nm in 10 nm steps.
pub fn lctf_wavelengths() -> Vec<f64> {
    (0..21).map(|i| 450.0 + 10.0 * i as f64).collect()
}

/// Default QWP fast-axis angles of the hyperspectral camera: 30°, −45°, 60°, −90°.
pub fn default_qwp_angles() -> Vec<f64> {
    [30.0f64, -45.0, 60.0, -90.0].iter().map(|d| d.to_radians()).collect()
}

/// One polarization-filter configuration: a retarder followed by a linear polarizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub retarder_axis: f64,
    pub retardance: f64,
    pub polarizer_axis: f64,
    /// Mosaic segment that records this configuration, for single-shot sensors.
    #[serde(default)]
    pub segment: Option<usize>,
}

impl Measurement {
    pub fn qwp_lp(qwp_axis: f64, lp_axis: f64) -> Self {
        Self {
            retarder_axis: qwp_axis,
            retardance: FRAC_PI_2,
            polarizer_axis: lp_axis,
            segment: None,
        }
    }

    /// `C · P(θ2) · Q(θ1, δ)`.
    pub fn mueller(&self, calibration: &MuellerMatrix) -> MuellerMatrix {
        *calibration * lp_mueller(self.polarizer_axis) * retarder_mueller(self.retarder_axis, self.retardance)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub measurements: Vec<Measurement>,
    #[serde(default)]
    pub calibration: MuellerMatrix,
}

impl ChannelConfig {
    /// Intensity-measurement rows: first row of each modulation matrix, scaled by exposure.
    pub fn analyzer_rows(&self, exposure: f64) -> Vec<[f64; 4]> {
        self.measurements
            .iter()
            .map(|m| m.mueller(&self.calibration).row(0).map(|v| v * exposure))
            .collect()
    }
}

/// The polarization-filter configurations of every spectral channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptureConfig {
    pub channels: Vec<ChannelConfig>,
    pub exposure: f64,
}

impl CaptureConfig {
    /// Rotating-QWP sequential capture: every channel sees the same angle set.
    pub fn hyperspectral(channels: usize, qwp_angles: &[f64], lp_angle: f64) -> Result<Self> {
        if qwp_angles.is_empty() {
            return Err(Error::Config("empty QWP angle list".into()));
        }
        let ch = ChannelConfig {
            measurements: qwp_angles.iter().map(|&q| Measurement::qwp_lp(q, lp_angle)).collect(),
            calibration: MuellerMatrix::IDENTITY,
        };
        let cfg = Self {
            channels: vec![ch; channels],
            exposure: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Per-colour configurations read off a mosaic layout (R, G, B order).
    pub fn from_layout(layout: &MosaicLayout) -> Self {
        let mut channels = vec![
            ChannelConfig {
                measurements: Vec::new(),
                calibration: MuellerMatrix::IDENTITY,
            };
            3
        ];
        for (k, cell) in layout.cells.iter().enumerate() {
            channels[cell.color as usize].measurements.push(Measurement {
                retarder_axis: cell.retarder_axis,
                retardance: cell.retardance,
                polarizer_axis: cell.polarizer_axis,
                segment: Some(k),
            });
        }
        Self {
            channels,
            exposure: 1.0,
        }
    }

    pub fn with_exposure(mut self, exposure: f64) -> Self {
        self.exposure = exposure;
        self
    }

    /// Checks the ≥ 4 configurations and rank-4 requirements on every channel.
    pub fn validate(&self) -> Result<()> {
        if !(self.exposure > 0.0 && self.exposure.is_finite()) {
            return Err(Error::Config(format!(
                "exposure must be positive, got {}",
                self.exposure
            )));
        }
        for c in 0..self.channels.len() {
            system_matrix(self, c)?;
        }
        Ok(())
    }

    pub fn is_mosaic(&self) -> bool {
        self.channels
            .iter()
            .flat_map(|c| c.measurements.iter())
            .any(|m| m.segment.is_some())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BayerColor {
    R = 0,
    G = 1,
    B = 2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosaicCell {
    pub color: BayerColor,
    pub polarizer_axis: f64,
    pub retarder_axis: f64,
    pub retardance: f64,
}

/// A 4×4 superpixel of colour filters, wire-grid polarizers and micro-retarders.
/// Cell `(n mod 4, m mod 4)` is stored at index `(n mod 4)·4 + (m mod 4)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosaicLayout {
    pub cells: Vec<MosaicCell>,
}

impl MosaicLayout {
    pub fn new(cells: Vec<MosaicCell>) -> Result<Self> {
        if cells.len() != 16 {
            return Err(Error::Config(format!("mosaic needs 16 cells, got {}", cells.len())));
        }
        let count = |col: BayerColor| cells.iter().filter(|c| c.color == col).count();
        let (r, g, b) = (count(BayerColor::R), count(BayerColor::G), count(BayerColor::B));
        if (r, g, b) != (4, 8, 4) {
            return Err(Error::Config(format!(
                "mosaic needs 4/8/4 R/G/B cells, got {r}/{g}/{b}"
            )));
        }
        let layout = Self { cells };
        CaptureConfig::from_layout(&layout).validate()?;
        Ok(layout)
    }

    /// Segment index of full-resolution pixel `(row n, column m)`.
    pub fn segment_index(n: usize, m: usize) -> usize {
        (n % 4) * 4 + (m % 4)
    }

    pub fn cell(&self, n: usize, m: usize) -> &MosaicCell {
        &self.cells[Self::segment_index(n, m)]
    }
}

impl Default for MosaicLayout {
    /// RGGB Bayer tiling at pixel level; wire-grid axes 0°/45°/135°/90° per 2×2
    /// block; micro-retarders (δ = 45°) with fast axis 0° on columns 0–1 and 90°
    /// on columns 2–3.
    fn default() -> Self {
        let pol = [[0.0f64, 45.0], [135.0, 90.0]];
        let mut cells = Vec::with_capacity(16);
        for n in 0..4 {
            for m in 0..4 {
                let color = match (n % 2, m % 2) {
                    (0, 0) => BayerColor::R,
                    (1, 1) => BayerColor::B,
                    _ => BayerColor::G,
                };
                cells.push(MosaicCell {
                    color,
                    polarizer_axis: pol[n / 2][m / 2].to_radians(),
                    retarder_axis: if m < 2 { 0.0 } else { FRAC_PI_2 },
                    retardance: 45f64.to_radians(),
                });
            }
        }
        Self::new(cells).expect("default mosaic has rank 4 per colour")
    }
}

/// Sensor noise and clipping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub gaussian_sigma: f64,
    /// Signal-proportional variance: `var = sigma² + shot_gain · signal`.
    pub shot_gain: f64,
    pub saturation_level: f64,
    pub black_level: f64,
    pub rng_seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            gaussian_sigma: 0.0,
            shot_gain: 0.0,
            saturation_level: 1.0,
            black_level: 0.0,
            rng_seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            gaussian_sigma: sigma,
            rng_seed: seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gaussian_sigma >= 0.0) || !(self.shot_gain >= 0.0) {
            return Err(Error::Config("noise sigma and shot gain must be non-negative".into()));
        }
        if !(self.black_level < self.saturation_level) {
            return Err(Error::Config("black level must be below saturation level".into()));
        }
        Ok(())
    }

    fn is_noiseless(&self) -> bool {
        self.gaussian_sigma == 0.0 && self.shot_gain == 0.0
    }
}

/// One raw intensity frame with its acquisition tag.
#[derive(Clone, Debug, PartialEq)]
pub struct TaggedFrame {
    pub channel: usize,
    pub config: usize,
    pub frame: Frame,
    /// `false` where the sensor clipped or the pixel is otherwise unusable.
    pub valid: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RawLayout {
    /// One frame per (channel, configuration), captured sequentially.
    Sequential { channels: usize, configs: usize },
    /// A single division-of-focal-plane mosaic frame.
    Mosaic(MosaicLayout),
}

/// Raw frames produced by a camera.
#[derive(Clone, Debug, PartialEq)]
pub struct RawCapture {
    pub width: usize,
    pub height: usize,
    pub layout: RawLayout,
    pub frames: Vec<TaggedFrame>,
    pub black_level: f32,
    pub saturation_level: f32,
    /// Channel wavelengths in nm, empty for RGB.
    pub wavelengths: Vec<f32>,
}

impl RawCapture {
    pub fn frame(&self, channel: usize, config: usize) -> Option<&TaggedFrame> {
        self.frames.iter().find(|f| f.channel == channel && f.config == config)
    }
}

/// Integrates a sampled Stokes spectrum against one transmission curve.
pub fn integrate_spectrum(spectrum: &[StokesVector], grid: &[f64], curve: &[f64]) -> Result<StokesVector> {
    if spectrum.len() != grid.len() || curve.len() != grid.len() {
        return Err(Error::Sampling(format!(
            "spectrum has {} samples, response grid {}",
            spectrum.len(),
            grid.len()
        )));
    }
    let mut out = [0.0; 4];
    for (k, o) in out.iter_mut().enumerate() {
        let v: Vec<f64> = spectrum.iter().zip(curve).map(|(s, w)| s.to_array()[k] * w).collect();
        *o = trapezoid(grid, &v);
    }
    Ok(StokesVector::from_array(out))
}

/// Intensity recorded by one channel under one configuration.
pub fn measure_intensity(
    spectrum: &[StokesVector],
    measurement: &Measurement,
    calibration: &MuellerMatrix,
    response: &SpectralResponse,
    channel: usize,
) -> Result<f64> {
    let curve = response
        .curves
        .get(channel)
        .ok_or_else(|| Error::Sampling(format!("no response curve for channel {channel}")))?;
    let s_c = integrate_spectrum(spectrum, &response.grid, curve)?;
    Ok(apply(&measurement.mueller(calibration), s_c).s0)
}

/// Band-integrates a finely sampled spectral Stokes scene into one channel per
/// response curve. `spectral.wavelengths` must match the response grid.
pub fn integrate_scene(spectral: &StokesImage, response: &SpectralResponse) -> Result<StokesImage> {
    if spectral.channels != response.grid.len() {
        return Err(Error::Sampling(format!(
            "scene has {} spectral samples, response grid {}",
            spectral.channels,
            response.grid.len()
        )));
    }
    if !spectral.wavelengths.is_empty()
        && spectral
            .wavelengths
            .iter()
            .zip(&response.grid)
            .any(|(a, b)| (*a as f64 - b).abs() > 1e-3)
    {
        return Err(Error::Sampling("scene wavelengths differ from response grid".into()));
    }
    let mut out = StokesImage::new(spectral.width, spectral.height, response.channels());
    out.wavelengths = response.centers.iter().map(|&c| c as f32).collect();
    let mut spectrum = vec![StokesVector::default(); spectral.channels];
    for y in 0..spectral.height {
        for x in 0..spectral.width {
            for (l, s) in spectrum.iter_mut().enumerate() {
                *s = spectral.get(x, y, l);
            }
            for (c, curve) in response.curves.iter().enumerate() {
                let s = integrate_spectrum(&spectrum, &response.grid, curve)?;
                out.set(x, y, c, s);
            }
        }
    }
    Ok(out)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one row of one frame. Parallel and serial runs
/// draw identical numbers.
fn row_rng(seed: u64, stream: u64, row: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ row))
}

fn noisy_row(row: &mut [f32], valid: &mut [bool], model: &NoiseModel, rng: &mut ChaCha8Rng) {
    let lo = model.black_level;
    let hi = model.saturation_level;
    for (v, ok) in row.iter_mut().zip(valid.iter_mut()) {
        let clean = *v as f64;
        let noisy = if model.is_noiseless() {
            clean
        } else {
            let var = (model.gaussian_sigma * model.gaussian_sigma + model.shot_gain * clean).max(0.0);
            let z: f64 = StandardNormal.sample(rng);
            clean + var.sqrt() * z
        };
        if noisy >= hi || noisy <= lo {
            *ok = false;
        }
        *v = noisy.clamp(lo, hi) as f32;
    }
}

/// Adds noise to `frame` using stream 0 of the model's seed.
pub fn add_noise(frame: &Frame, model: &NoiseModel) -> Frame {
    add_noise_stream(frame, model, 0).0
}

/// `clip(in + N(0, σ² + shot_gain·in), black, saturation)`; also returns the
/// per-pixel flag that is `false` where the output was clipped.
pub fn add_noise_stream(frame: &Frame, model: &NoiseModel, stream: u64) -> (Frame, Vec<bool>) {
    let mut out = frame.clone();
    let mut valid = vec![true; frame.data.len()];
    let w = frame.width.max(1);
    out.data
        .par_chunks_mut(w)
        .zip(valid.par_chunks_mut(w))
        .enumerate()
        .for_each(|(r, (row, ok))| {
            let mut rng = row_rng(model.rng_seed, stream, r as u64);
            noisy_row(row, ok, model, &mut rng);
        });
    (out, valid)
}

fn check_scene(scene: &StokesImage) -> Result<()> {
    scene.check()?;
    if scene.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("scene contains non-finite values".into()));
    }
    Ok(())
}

/// Sequential capture: one frame per (channel, configuration) of `config`.
pub fn simulate_sequential(scene: &StokesImage, config: &CaptureConfig, noise: &NoiseModel) -> Result<RawCapture> {
    check_scene(scene)?;
    noise.validate()?;
    config.validate()?;
    if config.channels.len() != scene.channels {
        return Err(Error::Dimension(format!(
            "config has {} channels, scene {}",
            config.channels.len(),
            scene.channels
        )));
    }
    let (w, h) = (scene.width, scene.height);
    let mut frames = Vec::new();
    for (c, ch) in config.channels.iter().enumerate() {
        let rows = ch.analyzer_rows(config.exposure);
        for (i, a) in rows.iter().enumerate() {
            let mut frame = Frame::new(w, h);
            let planes: Vec<&[f32]> = (0..4).map(|k| scene.component(c, k)).collect();
            frame.data.par_iter_mut().enumerate().for_each(|(p, v)| {
                let val: f64 = (0..4).map(|k| a[k] * planes[k][p] as f64).sum();
                *v = val as f32;
            });
            let stream = frames.len() as u64;
            let (frame, valid) = add_noise_stream(&frame, noise, stream);
            frames.push(TaggedFrame {
                channel: c,
                config: i,
                frame,
                valid,
            });
        }
    }
    let configs = config.channels.iter().map(|c| c.measurements.len()).max().unwrap_or(0);
    Ok(RawCapture {
        width: w,
        height: h,
        layout: RawLayout::Sequential {
            channels: scene.channels,
            configs,
        },
        frames,
        black_level: noise.black_level as f32,
        saturation_level: noise.saturation_level as f32,
        wavelengths: scene.wavelengths.clone(),
    })
}

/// Hyperspectral capture through a rotating QWP and a fixed linear polarizer.
///
/// Scene channels hold band-integrated Stokes vectors (see [`integrate_scene`]).
pub fn simulate_hyperspectral(
    scene: &StokesImage,
    qwp_angles: &[f64],
    lp_angle: f64,
    noise: &NoiseModel,
) -> Result<RawCapture> {
    let config = CaptureConfig::hyperspectral(scene.channels, qwp_angles, lp_angle)?;
    simulate_sequential(scene, &config, noise)
}

/// Single-shot trichromatic mosaic capture. Scene channels are R, G, B.
pub fn simulate_trichromatic(scene: &StokesImage, layout: &MosaicLayout, noise: &NoiseModel) -> Result<RawCapture> {
    simulate_mosaic(scene, &CaptureConfig::from_layout(layout), layout, noise)
}

/// Mosaic capture with an explicit (possibly calibrated) per-colour configuration.
pub fn simulate_mosaic(
    scene: &StokesImage,
    config: &CaptureConfig,
    layout: &MosaicLayout,
    noise: &NoiseModel,
) -> Result<RawCapture> {
    check_scene(scene)?;
    noise.validate()?;
    config.validate()?;
    if scene.channels != 3 || config.channels.len() != 3 {
        return Err(Error::Dimension("trichromatic capture needs 3 channels".into()));
    }
    if !scene.width.is_multiple_of(4) || !scene.height.is_multiple_of(4) || scene.width == 0 || scene.height == 0 {
        return Err(Error::Dimension(format!(
            "mosaic dims {}x{} must be non-zero multiples of 4",
            scene.width, scene.height
        )));
    }
    // segment -> (channel, analyzer row)
    let mut table: Vec<Option<(usize, [f64; 4])>> = vec![None; 16];
    for (c, ch) in config.channels.iter().enumerate() {
        let rows = ch.analyzer_rows(config.exposure);
        for (m, row) in ch.measurements.iter().zip(rows) {
            let k = m
                .segment
                .ok_or_else(|| Error::Config("mosaic measurement without segment".into()))?;
            if k >= 16 || table[k].is_some() {
                return Err(Error::Config(format!("segment {k} assigned twice or out of range")));
            }
            table[k] = Some((c, row));
        }
    }
    let table: Vec<(usize, [f64; 4])> = table
        .into_iter()
        .enumerate()
        .map(|(k, t)| t.ok_or_else(|| Error::Config(format!("segment {k} has no configuration"))))
        .collect::<Result<_>>()?;

    let w = scene.width;
    let mut frame = Frame::new(w, scene.height);
    frame.data.par_chunks_mut(w).enumerate().for_each(|(n, row)| {
        for (m, v) in row.iter_mut().enumerate() {
            let (c, a) = table[MosaicLayout::segment_index(n, m)];
            let s = scene.get(m, n, c).to_array();
            *v = (0..4).map(|k| a[k] * s[k]).sum::<f64>() as f32;
        }
    });
    let (frame, valid) = add_noise_stream(&frame, noise, 0);
    Ok(RawCapture {
        width: w,
        height: scene.height,
        layout: RawLayout::Mosaic(layout.clone()),
        frames: vec![TaggedFrame {
            channel: 0,
            config: 0,
            frame,
            valid,
        }],
        black_level: noise.black_level as f32,
        saturation_level: noise.saturation_level as f32,
        wavelengths: scene.wavelengths.clone(),
    })
}

/// Splits a mosaic frame into its 16 sub-sampled segments.
pub fn mosaic_split(frame: &Frame) -> Result<Vec<Frame>> {
    if !frame.width.is_multiple_of(4) || !frame.height.is_multiple_of(4) {
        return Err(Error::Dimension(format!(
            "frame {}x{} not divisible by 4",
            frame.width, frame.height
        )));
    }
    let (sw, sh) = (frame.width / 4, frame.height / 4);
    Ok((0..16)
        .map(|k| Frame::from_fn(sw, sh, |j, i| frame.get(4 * j + k % 4, 4 * i + k / 4)))
        .collect())
}

/// Inverse of [`mosaic_split`].
pub fn mosaic_merge(segments: &[Frame]) -> Result<Frame> {
    check_segments(segments)?;
    let (sw, sh) = (segments[0].width, segments[0].height);
    let mut out = Frame::new(sw * 4, sh * 4);
    for (k, seg) in segments.iter().enumerate() {
        for i in 0..sh {
            for j in 0..sw {
                out.set(4 * j + k % 4, 4 * i + k / 4, seg.get(j, i));
            }
        }
    }
    Ok(out)
}

fn check_segments(segments: &[Frame]) -> Result<()> {
    if segments.len() != 16 {
        return Err(Error::Dimension(format!(
            "expected 16 segments, got {}",
            segments.len()
        )));
    }
    if segments.iter().any(|s| !s.same_dims(&segments[0])) {
        return Err(Error::Dimension("segments have inconsistent dims".into()));
    }
    Ok(())
}

/// Interpolation weights for full-resolution coordinate `pos` on a segment
/// lattice with the given offset and `len` samples. Outside the outermost
/// samples the nearest pair is extrapolated linearly.
#[inline]
fn lattice_weights(pos: usize, offset: usize, len: usize) -> (usize, usize, f64) {
    if len == 1 {
        return (0, 0, 0.0);
    }
    let u = (pos as f64 - offset as f64) / 4.0;
    let i0 = (u.floor().max(0.0) as usize).min(len - 2);
    (i0, i0 + 1, u - i0 as f64)
}

/// Bilinear demosaic: upsamples each of the 16 segments back to full
/// resolution. Values at a segment's own sample sites are preserved exactly
/// and affine signals are reproduced everywhere.
pub fn demosaic(segments: &[Frame]) -> Result<Vec<Frame>> {
    check_segments(segments)?;
    let (sw, sh) = (segments[0].width, segments[0].height);
    let (w, h) = (sw * 4, sh * 4);
    Ok(segments
        .par_iter()
        .enumerate()
        .map(|(k, seg)| {
            let (oy, ox) = (k / 4, k % 4);
            let cols: Vec<_> = (0..w).map(|x| lattice_weights(x, ox, sw)).collect();
            let mut out = Frame::new(w, h);
            for y in 0..h {
                let (r0, r1, ty) = lattice_weights(y, oy, sh);
                for (x, &(c0, c1, tx)) in cols.iter().enumerate() {
                    let top = interp(seg.get(c0, r0) as f64, seg.get(c1, r0) as f64, tx);
                    let bottom = interp(seg.get(c0, r1) as f64, seg.get(c1, r1) as f64, tx);
                    out.set(x, y, interp(top, bottom, ty) as f32);
                }
            }
            out
        })
        .collect())
}

#[inline]
fn interp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else if t == 1.0 {
        b
    } else {
        (1.0 - t) * a + t * b
    }
}
