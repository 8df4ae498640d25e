//! Per-pixel least-squares Stokes estimation, burst averaging, median
//! filtering and reconstruction quality metrics.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{demosaic, mosaic_split, CaptureConfig, RawCapture, RawLayout, TaggedFrame};
use crate::error::{Error, Result};
use crate::image::{Frame, StokesImage};
use crate::stokes::{is_valid, StokesVector, DEFAULT_DOP_TOL};

/// Singular values below `RANK_RTOL · σ_max` count as zero.
pub const RANK_RTOL: f64 = 1e-10;

/// Measurement matrix of one channel: row `i` maps a Stokes vector to the
/// intensity recorded under configuration `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemMatrix {
    pub rows: Vec<[f64; 4]>,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub condition_number: f64,
    /// `R⁻¹ Qᵀ` from the thin QR factorization of the rows (4 × m, row-major).
    solver: Vec<[f64; 4]>,
}

/// Least-squares estimate with its residual norm `‖A ŝ − I‖₂`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StokesSolution {
    pub stokes: StokesVector,
    pub residual: f64,
}

impl SystemMatrix {
    pub fn new(rows: Vec<[f64; 4]>) -> Result<Self> {
        let m = rows.len();
        if m == 0 || rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateConfiguration {
                rank: 0,
                singular_values: Vec::new(),
            });
        }
        let a = DMatrix::from_fn(m, 4, |i, j| rows[i][j]);
        let mut sv: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(|x, y| y.total_cmp(x));
        let smax = sv.first().copied().unwrap_or(0.0);
        let rank = sv.iter().filter(|&&s| s > smax * RANK_RTOL).count();
        if m < 4 || rank < 4 {
            return Err(Error::DegenerateConfiguration {
                rank,
                singular_values: sv,
            });
        }
        let condition_number = smax / sv[3];

        let qr = a.qr();
        let q = qr.q();
        let r = qr.r();
        let pinv = r
            .solve_upper_triangular(&q.transpose())
            .ok_or(Error::DegenerateConfiguration {
                rank,
                singular_values: sv.clone(),
            })?;
        // Stored transposed: solver[i] is the contribution of intensity i.
        let solver = (0..m)
            .map(|i| [pinv[(0, i)], pinv[(1, i)], pinv[(2, i)], pinv[(3, i)]])
            .collect();
        Ok(Self {
            rows,
            rank,
            singular_values: sv,
            condition_number,
            solver,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Predicted intensities `A s`.
    pub fn forward(&self, s: StokesVector) -> Vec<f64> {
        let v = s.to_array();
        self.rows
            .iter()
            .map(|r| r.iter().zip(v.iter()).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// System matrix of `channel` under `config`.
pub fn system_matrix(config: &CaptureConfig, channel: usize) -> Result<SystemMatrix> {
    let ch = config
        .channels
        .get(channel)
        .ok_or_else(|| Error::Config(format!("no channel {channel} in capture config")))?;
    SystemMatrix::new(ch.analyzer_rows(config.exposure))
}

/// Solves `argmin_s ‖A s − I‖²` with the precomputed orthogonal factorization.
pub fn solve_stokes(a: &SystemMatrix, intensities: &[f64]) -> Result<StokesSolution> {
    if intensities.len() != a.len() {
        return Err(Error::Dimension(format!(
            "{} intensities for a {}-row system",
            intensities.len(),
            a.len()
        )));
    }
    if intensities.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite intensity".into()));
    }
    let stokes = solve_unchecked(a, intensities);
    let residual = a
        .forward(stokes)
        .iter()
        .zip(intensities)
        .map(|(p, i)| (p - i) * (p - i))
        .sum::<f64>()
        .sqrt();
    Ok(StokesSolution { stokes, residual })
}

#[inline]
fn solve_unchecked(a: &SystemMatrix, intensities: &[f64]) -> StokesVector {
    let mut s = [0.0; 4];
    for (w, i) in a.solver.iter().zip(intensities) {
        for k in 0..4 {
            s[k] += w[k] * i;
        }
    }
    StokesVector::from_array(s)
}

/// Thresholds applied while reconstructing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructOptions {
    pub dop_tol: f64,
    /// Intensities at or above `saturation_fraction · saturation_level` are saturated.
    pub saturation_fraction: f64,
    /// Intensities at or below `underexposure_factor · black_level` are underexposed.
    pub underexposure_factor: f64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            dop_tol: DEFAULT_DOP_TOL,
            saturation_fraction: 0.998,
            underexposure_factor: 2.0,
        }
    }
}

/// Pixels that must not contribute to a valid reconstruction.
fn unusable(frame: &TaggedFrame, raw: &RawCapture, opts: &ReconstructOptions) -> Vec<bool> {
    let hi = opts.saturation_fraction * raw.saturation_level as f64;
    let lo = opts.underexposure_factor * raw.black_level as f64;
    frame
        .frame
        .data
        .iter()
        .zip(&frame.valid)
        .map(|(&v, &ok)| !ok || v as f64 >= hi || v as f64 <= lo)
        .collect()
}

/// Reconstructs a Stokes cube from raw frames with default thresholds.
pub fn reconstruct_image(raw: &RawCapture, config: &CaptureConfig) -> Result<StokesImage> {
    reconstruct_image_with(raw, config, &ReconstructOptions::default())
}

pub fn reconstruct_image_with(
    raw: &RawCapture,
    config: &CaptureConfig,
    opts: &ReconstructOptions,
) -> Result<StokesImage> {
    let matrices = (0..config.channels.len())
        .map(|c| system_matrix(config, c))
        .collect::<Result<Vec<_>>>()?;
    // Per channel: intensity planes and unusable-pixel planes, one per measurement.
    let mut planes: Vec<Vec<(Vec<f32>, Vec<bool>)>> = Vec::with_capacity(matrices.len());
    match &raw.layout {
        RawLayout::Sequential { .. } => {
            for (c, ch) in config.channels.iter().enumerate() {
                let mut per = Vec::with_capacity(ch.measurements.len());
                for i in 0..ch.measurements.len() {
                    let f = raw.frame(c, i).ok_or(Error::MissingFrame { channel: c, config: i })?;
                    if f.frame.width != raw.width || f.frame.height != raw.height {
                        return Err(Error::Dimension(format!("frame ({c}, {i}) has wrong dims")));
                    }
                    per.push((f.frame.data.clone(), unusable(f, raw, opts)));
                }
                planes.push(per);
            }
        }
        RawLayout::Mosaic(_) => {
            let f = raw
                .frames
                .first()
                .ok_or(Error::MissingFrame { channel: 0, config: 0 })?;
            let bad = unusable(f, raw, opts);
            let bad_frame = Frame::from_vec(
                f.frame.width,
                f.frame.height,
                bad.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            )?;
            let values = demosaic(&mosaic_split(&f.frame)?)?;
            let flags = demosaic(&mosaic_split(&bad_frame)?)?;
            for ch in &config.channels {
                let mut per = Vec::with_capacity(ch.measurements.len());
                for m in &ch.measurements {
                    let k = m
                        .segment
                        .ok_or_else(|| Error::Config("mosaic capture needs segment-tagged measurements".into()))?;
                    let k = k.min(15);
                    per.push((
                        values[k].data.clone(),
                        flags[k].data.iter().map(|&v| v != 0.0).collect(),
                    ));
                }
                planes.push(per);
            }
        }
    }

    let mut out = StokesImage::new(raw.width, raw.height, matrices.len());
    out.wavelengths = raw.wavelengths.clone();
    if !out.wavelengths.is_empty() && out.wavelengths.len() != out.channels {
        out.wavelengths.clear();
    }
    let n = raw.width * raw.height;
    for (c, (a, per)) in matrices.iter().zip(&planes).enumerate() {
        let solved: Vec<(StokesVector, bool)> = (0..n)
            .into_par_iter()
            .map(|p| {
                let mut intens = [0.0f64; 16];
                let mut bad = false;
                let m = per.len();
                let mut buf = Vec::new();
                let slice: &mut [f64] = if m <= 16 {
                    &mut intens[..m]
                } else {
                    buf.resize(m, 0.0);
                    &mut buf
                };
                for (i, (vals, flags)) in per.iter().enumerate() {
                    slice[i] = vals[p] as f64;
                    bad |= flags[p];
                }
                let s = solve_unchecked(a, slice);
                (s, !bad && is_valid(s, opts.dop_tol))
            })
            .collect();
        for (p, (s, ok)) in solved.into_iter().enumerate() {
            let (x, y) = (p % raw.width, p / raw.width);
            out.set(x, y, c, s);
            out.set_valid(x, y, c, ok);
        }
    }
    Ok(out)
}

/// Pixelwise arithmetic mean of equally sized frames.
pub fn burst_average(frames: &[Frame]) -> Result<Frame> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidArgument("burst average of zero frames".into()))?;
    if frames.iter().any(|f| !f.same_dims(first)) {
        return Err(Error::Dimension("burst frames differ in size".into()));
    }
    let n = frames.len() as f64;
    let mut acc = vec![0.0f64; first.data.len()];
    for f in frames {
        for (a, v) in acc.iter_mut().zip(&f.data) {
            *a += *v as f64;
        }
    }
    Frame::from_vec(
        first.width,
        first.height,
        acc.into_iter().map(|a| (a / n) as f32).collect(),
    )
}

/// Averages repeated sequential captures frame by frame. A pixel clipped in
/// any shot stays flagged.
pub fn burst_average_captures(captures: &[RawCapture]) -> Result<RawCapture> {
    let first = captures
        .first()
        .ok_or_else(|| Error::InvalidArgument("burst average of zero captures".into()))?;
    let mut out = first.clone();
    for (i, tf) in out.frames.iter_mut().enumerate() {
        let mut shots = Vec::with_capacity(captures.len());
        for cap in captures {
            let other = cap
                .frames
                .get(i)
                .filter(|f| f.channel == tf.channel && f.config == tf.config)
                .ok_or(Error::MissingFrame {
                    channel: tf.channel,
                    config: tf.config,
                })?;
            for (v, o) in tf.valid.iter_mut().zip(&other.valid) {
                *v &= *o;
            }
            shots.push(other.frame.clone());
        }
        tf.frame = burst_average(&shots)?;
    }
    Ok(out)
}

/// Median over a `k × k` window with edge replication.
pub fn median_filter(frame: &Frame, k: usize) -> Result<Frame> {
    if k == 0 || k.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("median window must be odd, got {k}")));
    }
    if k == 1 {
        return Ok(frame.clone());
    }
    let r = (k / 2) as isize;
    let (w, h) = (frame.width as isize, frame.height as isize);
    let mut out = Frame::new(frame.width, frame.height);
    out.data
        .par_chunks_mut(frame.width.max(1))
        .enumerate()
        .for_each(|(y, row)| {
            let mut window = Vec::with_capacity(k * k);
            for (x, v) in row.iter_mut().enumerate() {
                window.clear();
                for dy in -r..=r {
                    let yy = (y as isize + dy).clamp(0, h - 1) as usize;
                    for dx in -r..=r {
                        let xx = (x as isize + dx).clamp(0, w - 1) as usize;
                        window.push(frame.get(xx, yy));
                    }
                }
                let mid = window.len() / 2;
                let (_, m, _) = window.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
                *v = *m;
            }
        });
    Ok(out)
}

/// Error metrics of a reconstructed cube against a reference.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QualityReport {
    pub mse: f64,
    /// `10 log10(peak² / mse)`; `+∞` when the images agree exactly.
    pub psnr: f64,
    pub peak: f64,
    pub mse_per_element: [f64; 4],
    pub psnr_per_element: [f64; 4],
    pub psnr_per_channel: Vec<f64>,
    /// `[channel][element]`.
    pub psnr_per_channel_element: Vec<[f64; 4]>,
    /// Fraction of sites valid in both images.
    pub valid_fraction: f64,
}

pub fn psnr_from_mse(peak: f64, mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// MSE and PSNR over jointly valid sites; peak is the largest reference `s0` there.
pub fn quality(reference: &StokesImage, test: &StokesImage) -> Result<QualityReport> {
    if !reference.same_shape(test) {
        return Err(Error::Dimension("reference and test cubes differ in shape".into()));
    }
    let c_n = reference.channels;
    let mut sse = vec![[0.0f64; 4]; c_n];
    let mut count = vec![0usize; c_n];
    let mut peak = f64::NEG_INFINITY;
    for c in 0..c_n {
        for y in 0..reference.height {
            for x in 0..reference.width {
                if !(reference.is_valid_at(x, y, c) && test.is_valid_at(x, y, c)) {
                    continue;
                }
                let r = reference.get(x, y, c).to_array();
                let t = test.get(x, y, c).to_array();
                peak = peak.max(r[0]);
                for k in 0..4 {
                    sse[c][k] += (r[k] - t[k]) * (r[k] - t[k]);
                }
                count[c] += 1;
            }
        }
    }
    let total: usize = count.iter().sum();
    if total == 0 {
        return Err(Error::EmptySelection("no jointly valid pixels".into()));
    }
    let mut mse_el = [0.0; 4];
    for k in 0..4 {
        mse_el[k] = sse.iter().map(|e| e[k]).sum::<f64>() / total as f64;
    }
    let mse = mse_el.iter().sum::<f64>() / 4.0;
    let psnr_per_channel_element: Vec<[f64; 4]> = sse
        .iter()
        .zip(&count)
        .map(|(e, &n)| {
            if n == 0 {
                [f64::NAN; 4]
            } else {
                e.map(|v| psnr_from_mse(peak, v / n as f64))
            }
        })
        .collect();
    let psnr_per_channel = sse
        .iter()
        .zip(&count)
        .map(|(e, &n)| {
            if n == 0 {
                f64::NAN
            } else {
                psnr_from_mse(peak, e.iter().sum::<f64>() / (4 * n) as f64)
            }
        })
        .collect();
    Ok(QualityReport {
        mse,
        psnr: psnr_from_mse(peak, mse),
        peak,
        mse_per_element: mse_el,
        psnr_per_element: mse_el.map(|m| psnr_from_mse(peak, m)),
        psnr_per_channel,
        psnr_per_channel_element,
        valid_fraction: total as f64 / reference.mask.len() as f64,
    })
}

/// Least-squares with the normal equations solved through nalgebra's LU; only
/// used to cross-check the orthogonal-factorization path.
#[doc(hidden)]
pub fn solve_normal_equations(rows: &[[f64; 4]], intensities: &[f64]) -> Option<StokesVector> {
    let a = DMatrix::from_fn(rows.len(), 4, |i, j| rows[i][j]);
    let b = DVector::from_column_slice(intensities);
    let ata = a.transpose() * &a;
    let atb = a.transpose() * b;
    ata.lu().solve(&atb).map(|v| StokesVector::new(v[0], v[1], v[2], v[3]))
}
