//! Run configuration: a TOML document with command-line overrides applied on top.

use std::path::{Path, PathBuf};

use polarcube::analysis::{LabelFilter, DEFAULT_BINS};
use polarcube::camera::{lctf_wavelengths, CaptureConfig, MosaicLayout, NoiseModel};
use polarcube::codecs::inr::{InrConfig, TrainOptions};
use polarcube::codecs::pca::PatchMode;
use polarcube::reconstruct::ReconstructOptions;
use polarcube::synth::SceneSpec;
use polarcube::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CameraKind {
    /// Rotating QWP + fixed polarizer behind a tunable filter, one frame per angle.
    Hyperspectral,
    /// Single-shot RGB polarization mosaic.
    Trichromatic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSection {
    pub kind: CameraKind,
    /// Hyperspectral only.
    pub qwp_angles_deg: Vec<f64>,
    pub lp_angle_deg: f64,
    pub exposure: f64,
}

impl Default for CameraSection {
    fn default() -> Self {
        Self {
            kind: CameraKind::Hyperspectral,
            qwp_angles_deg: vec![30.0, -45.0, 60.0, -90.0],
            lp_angle_deg: 0.0,
            exposure: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiseSection {
    /// Odd median window applied after burst averaging; 1 disables it.
    pub median: usize,
}

impl Default for DenoiseSection {
    fn default() -> Self {
        Self { median: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaSection {
    pub patch: usize,
    pub bases: usize,
    /// `joint`, or one of `s0`..`s3` for a single Stokes element.
    pub mode: String,
    /// Basis counts for the rate curve; empty means powers of two up to `bases`.
    pub rate_bases: Vec<usize>,
}

impl Default for PcaSection {
    fn default() -> Self {
        Self {
            patch: 8,
            bases: 32,
            mode: "joint".into(),
            rate_bases: Vec::new(),
        }
    }
}

impl PcaSection {
    pub fn patch_mode(&self) -> Result<PatchMode> {
        match self.mode.as_str() {
            "joint" => Ok(PatchMode::Joint),
            "s0" => Ok(PatchMode::Element(0)),
            "s1" => Ok(PatchMode::Element(1)),
            "s2" => Ok(PatchMode::Element(2)),
            "s3" => Ok(PatchMode::Element(3)),
            m => Err(Error::Config(format!(
                "pca.mode: unknown mode {m:?} (joint, s0, s1, s2, s3)"
            ))),
        }
    }

    pub fn rate_points(&self, rank: usize) -> Vec<usize> {
        if !self.rate_bases.is_empty() {
            return self.rate_bases.clone();
        }
        let mut ks: Vec<usize> = std::iter::successors(Some(1usize), |k| Some(k * 2))
            .take_while(|&k| k < rank)
            .collect();
        ks.push(rank);
        ks
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    pub bins: usize,
    pub filter: LabelFilter,
}

impl Default for StatsSection {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            filter: LabelFilter::any(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SfpSection {
    /// Per-channel tilt noise of synthetic normal maps, degrees.
    pub jitter_deg: f64,
    pub channels: usize,
}

impl Default for SfpSection {
    fn default() -> Self {
        Self {
            jitter_deg: 2.0,
            channels: 21,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoSection {
    pub out: Option<PathBuf>,
    /// Store INR parameters as 64-bit floats instead of 32-bit.
    pub inr_f64: bool,
}

/// Everything a subcommand may read. Stage seeds are derived from `seed`:
/// the scene uses `seed`, sensor noise `seed + 1`, INR init and batches `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// 0 picks the number of CPUs.
    pub threads: usize,
    pub camera: CameraSection,
    /// `channels` applies to the hyperspectral camera; trichromatic scenes are RGB.
    pub scene: SceneSpec,
    pub noise: NoiseModel,
    pub reconstruct: ReconstructOptions,
    pub denoise: DenoiseSection,
    pub pca: PcaSection,
    pub inr: InrConfig,
    pub train: TrainOptions,
    pub stats: StatsSection,
    pub sfp: SfpSection,
    pub io: IoSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 0,
            camera: CameraSection::default(),
            scene: SceneSpec {
                channels: 21,
                wavelengths: lctf_wavelengths().iter().map(|&w| w as f32).collect(),
                ..SceneSpec::default()
            },
            noise: NoiseModel::default(),
            reconstruct: ReconstructOptions::default(),
            denoise: DenoiseSection::default(),
            pca: PcaSection::default(),
            inr: InrConfig::default(),
            train: TrainOptions::default(),
            stats: StatsSection::default(),
            sfp: SfpSection::default(),
            io: IoSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
    }

    /// Fills derived fields and checks module preconditions.
    pub fn resolve(mut self) -> Result<Self> {
        self.noise.rng_seed = self.seed.wrapping_add(1);
        self.train.seed = self.seed;
        if self.camera.kind == CameraKind::Trichromatic {
            self.scene.channels = 3;
            self.scene.wavelengths.clear();
        } else if self.scene.wavelengths.len() != self.scene.channels {
            self.scene.wavelengths.clear();
        }
        self.validate().map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let s = &self.scene;
        if s.width == 0 || s.height == 0 || s.channels == 0 {
            return Err(Error::Config("scene dimensions must be positive".into()));
        }
        if self.camera.kind == CameraKind::Trichromatic && (!s.width.is_multiple_of(4) || !s.height.is_multiple_of(4)) {
            return Err(Error::Config(format!(
                "trichromatic scene {}x{} must have dimensions divisible by 4",
                s.width, s.height
            )));
        }
        self.noise.validate()?;
        self.capture_config(s.channels)?;
        if !(self.reconstruct.dop_tol >= 0.0) {
            return Err(Error::Config("reconstruct.dop_tol must be non-negative".into()));
        }
        if self.denoise.median.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "denoise.median must be odd, got {}",
                self.denoise.median
            )));
        }
        if self.pca.patch == 0 || self.pca.bases == 0 {
            return Err(Error::Config("pca.patch and pca.bases must be positive".into()));
        }
        self.pca.patch_mode()?;
        self.inr.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.train.steps == 0 || self.train.batch_pixels == 0 || !(self.train.lr > 0.0) {
            return Err(Error::Config(
                "train.steps, train.batch_pixels and train.lr must be positive".into(),
            ));
        }
        if self.stats.bins == 0 {
            return Err(Error::Config("stats.bins must be positive".into()));
        }
        if self.sfp.channels < 2 || !(self.sfp.jitter_deg >= 0.0) {
            return Err(Error::Config(
                "sfp.channels must be at least 2 and sfp.jitter_deg non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Filter configurations of the configured camera for `channels` spectral channels.
    pub fn capture_config(&self, channels: usize) -> Result<CaptureConfig> {
        let cam = &self.camera;
        let cfg = match cam.kind {
            CameraKind::Hyperspectral => {
                let angles: Vec<f64> = cam.qwp_angles_deg.iter().map(|d| d.to_radians()).collect();
                CaptureConfig::hyperspectral(channels, &angles, cam.lp_angle_deg.to_radians())?
            }
            CameraKind::Trichromatic => CaptureConfig::from_layout(&MosaicLayout::default()),
        }
        .with_exposure(cam.exposure);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# config not representable as TOML: {e}\n"))
    }
}
