//! Band-limited synthetic Stokes scenes for simulation and testing.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::NormalMapStack;
use crate::error::Result;
use crate::image::StokesImage;
use crate::stokes::StokesVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Mean total intensity.
    pub s0_mean: f64,
    /// Peak deviation of the total intensity from its mean.
    pub s0_amplitude: f64,
    /// Upper bound on the degree of polarization.
    pub max_dop: f64,
    /// Upper bound on |ellipticity angle|.
    pub max_chi: f64,
    /// Highest spatial frequency, in cycles across the image.
    pub max_cycles: f64,
    /// Cosine terms per field.
    pub terms: usize,
    /// Per-channel centre wavelengths (nm); empty for none.
    pub wavelengths: Vec<f32>,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            channels: 3,
            s0_mean: 0.5,
            s0_amplitude: 0.3,
            max_dop: 0.6,
            max_chi: PI / 8.0,
            max_cycles: 2.0,
            terms: 4,
            wavelengths: Vec::new(),
        }
    }
}

/// A smooth scalar field in `[-1, 1]` over `(x, y, channel)`.
#[derive(Clone, Debug)]
struct Field {
    terms: Vec<(f64, f64, f64, f64, f64)>, // amplitude, fx, fy, fc, phase
    norm: f64,
}

impl Field {
    fn random(rng: &mut ChaCha8Rng, n: usize, max_cycles: f64) -> Self {
        let terms: Vec<_> = (0..n.max(1))
            .map(|_| {
                (
                    rng.random_range(0.3..1.0),
                    rng.random_range(-max_cycles..=max_cycles),
                    rng.random_range(-max_cycles..=max_cycles),
                    rng.random_range(-0.5..=0.5),
                    rng.random_range(0.0..2.0 * PI),
                )
            })
            .collect();
        let norm = terms.iter().map(|t| t.0).sum();
        Self { terms, norm }
    }

    fn eval(&self, u: f64, v: f64, w: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, fx, fy, fc, ph)| a * (2.0 * PI * (fx * u + fy * v + fc * w) + ph).cos())
            .sum::<f64>()
            / self.norm
    }
}

/// Generates a physically valid, spatially and spectrally smooth Stokes cube.
pub fn smooth_scene(spec: &SceneSpec, seed: u64) -> StokesImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields: Vec<Field> = (0..4)
        .map(|_| Field::random(&mut rng, spec.terms, spec.max_cycles))
        .collect();
    let (w, h, nc) = (spec.width, spec.height, spec.channels);
    let mut img = StokesImage::from_fn(w, h, nc, |x, y, c| {
        let u = x as f64 / w.max(1) as f64;
        let v = y as f64 / h.max(1) as f64;
        let t = c as f64 / nc.max(1) as f64;
        let s0 = spec.s0_mean + spec.s0_amplitude * fields[0].eval(u, v, t);
        let dop = spec.max_dop * 0.5 * (1.0 + fields[1].eval(u, v, t));
        let psi = PI * fields[2].eval(u, v, t);
        let chi = spec.max_chi * fields[3].eval(u, v, t);
        StokesVector::from_ellipse(s0, dop, psi, chi)
    });
    if spec.wavelengths.len() == nc {
        img.wavelengths = spec.wavelengths.clone();
    }
    img
}

/// A cube with the same Stokes vector everywhere.
pub fn constant_scene(width: usize, height: usize, channels: usize, s: StokesVector) -> StokesImage {
    StokesImage::from_fn(width, height, channels, |_, _, _| s)
}

/// Normals of a dome, re-estimated per channel with tilt noise of `jitter_deg`
/// (standard deviation per tangent axis).
pub fn synthetic_normals(
    width: usize,
    height: usize,
    channels: usize,
    jitter_deg: f64,
    seed: u64,
) -> Result<NormalMapStack> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = jitter_deg.to_radians();
    let tilts: Vec<(f64, f64)> = (0..width * height * channels)
        .map(|_| {
            let a: f64 = rng.sample(rand_distr::StandardNormal);
            let b: f64 = rng.sample(rand_distr::StandardNormal);
            (a * sigma, b * sigma)
        })
        .collect();
    NormalMapStack::from_fn(width, height, channels, |x, y, c| {
        let u = 2.0 * (x as f64 + 0.5) / width as f64 - 1.0;
        let v = 2.0 * (y as f64 + 0.5) / height as f64 - 1.0;
        let z = (2.0 - u * u - v * v).sqrt();
        let (tx, ty) = tilts[(c * height + y) * width + x];
        let n = [u + tx * z, v + ty * z, z - tx * u - ty * v];
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        [n[0] / len, n[1] / len, n[2] / len]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stokes::is_valid;

    #[test]
    fn scenes_are_valid_and_reproducible() {
        let spec = SceneSpec::default();
        let a = smooth_scene(&spec, 4);
        assert_eq!(a, smooth_scene(&spec, 4));
        assert_ne!(a, smooth_scene(&spec, 5));
        for (_, _, _, s) in a.valid_vectors() {
            assert!(is_valid(s, 0.0));
            assert!(s.s0 >= 0.2 - 1e-6 && s.s0 <= 0.8 + 1e-6);
        }
    }

    #[test]
    fn synthetic_normals_are_unit_and_spread_with_jitter() {
        let flat = synthetic_normals(8, 6, 4, 0.0, 1).unwrap();
        let noisy = synthetic_normals(8, 6, 4, 3.0, 1).unwrap();
        flat.check().unwrap();
        noisy.check().unwrap();
        let sf = crate::analysis::normal_spectral_stddev(&flat, 11).unwrap();
        let sn = crate::analysis::normal_spectral_stddev(&noisy, 11).unwrap();
        assert!(sf.std_z.iter().all(|&v| v < 1e-6));
        assert!(sn.std_z.iter().sum::<f64>() > 0.0);
    }
}
