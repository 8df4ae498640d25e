//! Dataset statistics: element histograms, gradient distributions,
//! polarized/unpolarized intensity, Poincaré-plane densities and the spectral
//! consistency of surface-normal maps.
//!
//! Every aggregate is built from per-image partial histograms merged in a
//! fixed order, so results do not depend on how the work was split.

use std::f64::consts::{FRAC_PI_2, PI};

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::StokesImage;
use crate::stokes::{features, is_valid, StokesVector, DEFAULT_DOP_TOL};

pub const DEFAULT_BINS: usize = 201;

/// Uniform-bin histogram. Samples outside the edge range are counted in
/// `dropped` and excluded from `counts`/`total`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
    pub dropped: u64,
    /// Sum of the binned samples.
    pub sum: f64,
}

impl Histogram {
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bad histogram range [{lo}, {hi}] with {bins} bins"
            )));
        }
        let w = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * w).collect();
        edges[bins] = hi;
        Ok(Self {
            edges,
            counts: vec![0; bins],
            total: 0,
            dropped: 0,
            sum: 0.0,
        })
    }

    /// Symmetric range `[-m, m]` covering every value; `[-1, 1]` if all are zero.
    pub fn symmetric_extent<'a>(values: impl IntoIterator<Item = &'a f64>, bins: usize) -> Result<Self> {
        let m = values
            .into_iter()
            .filter(|v| v.is_finite())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let m = if m > 0.0 { m } else { 1.0 };
        Self::uniform(-m, m, bins)
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn lo(&self) -> f64 {
        self.edges[0]
    }

    pub fn hi(&self) -> f64 {
        self.edges[self.bins()]
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi() - self.lo()) / self.bins() as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    /// Bin holding `v`; the upper edge belongs to the last bin.
    pub fn bin_of(&self, v: f64) -> Option<usize> {
        if !(v >= self.lo() && v <= self.hi()) {
            return None;
        }
        let i = ((v - self.lo()) / self.bin_width()).floor() as usize;
        Some(i.min(self.bins() - 1))
    }

    pub fn add(&mut self, v: f64) {
        match self.bin_of(v) {
            Some(i) => {
                self.counts[i] += 1;
                self.total += 1;
                self.sum += v;
            }
            None => self.dropped += 1,
        }
    }

    pub fn extend(&mut self, values: impl IntoIterator<Item = f64>) {
        for v in values {
            self.add(v);
        }
    }

    /// Adds another histogram with identical edges.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.edges != other.edges {
            return Err(Error::InvalidArgument(
                "cannot merge histograms with different edges".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self.dropped += other.dropped;
        self.sum += other.sum;
        Ok(())
    }

    /// Mean of the binned samples.
    pub fn mean(&self) -> f64 {
        self.sum / self.total as f64
    }

    /// Probability density per bin.
    pub fn density(&self) -> Vec<f64> {
        let norm = self.total as f64 * self.bin_width();
        self.counts.iter().map(|&c| c as f64 / norm).collect()
    }

    /// `ln(count / total / bin_width)`; `-inf` for empty bins.
    pub fn log_probability(&self) -> Vec<f64> {
        self.density().into_iter().map(f64::ln).collect()
    }

    /// Bins with nonzero count.
    pub fn occupied(&self) -> Vec<usize> {
        (0..self.bins()).filter(|&i| self.counts[i] > 0).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    Indoor,
    Outdoor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Illumination {
    Sunlight,
    Cloudy,
    White,
    Incandescent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneType {
    Object,
    Scene,
}

/// Per-image acquisition labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub environment: Environment,
    pub illumination: Illumination,
    /// ISO-8601 timestamp text.
    pub capture_time: String,
    pub scene_type: SceneType,
}

/// Selects images by label; an empty list accepts every value of that label.
/// Unlabeled images only pass a filter with all lists empty.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelFilter {
    pub environment: Vec<Environment>,
    pub illumination: Vec<Illumination>,
    pub scene_type: Vec<SceneType>,
}

impl LabelFilter {
    pub fn any() -> Self {
        Self::default()
    }

    pub fn is_any(&self) -> bool {
        self.environment.is_empty() && self.illumination.is_empty() && self.scene_type.is_empty()
    }

    pub fn matches(&self, labels: Option<&LabelSet>) -> bool {
        match labels {
            None => self.is_any(),
            Some(l) => {
                (self.environment.is_empty() || self.environment.contains(&l.environment))
                    && (self.illumination.is_empty() || self.illumination.contains(&l.illumination))
                    && (self.scene_type.is_empty() || self.scene_type.contains(&l.scene_type))
            }
        }
    }
}

/// An image with its optional labels.
#[derive(Clone, Copy, Debug)]
pub struct Item<'a> {
    pub image: &'a StokesImage,
    pub labels: Option<&'a LabelSet>,
}

impl<'a> Item<'a> {
    pub fn new(image: &'a StokesImage) -> Self {
        Self { image, labels: None }
    }

    pub fn labeled(image: &'a StokesImage, labels: &'a LabelSet) -> Self {
        Self {
            image,
            labels: Some(labels),
        }
    }
}

/// Per-pixel quantity derived from a Stokes vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    S0,
    S1,
    S2,
    S3,
    /// `s1 / s0`
    N1,
    N2,
    N3,
    Dolp,
    Docp,
    Aolp,
    Cop,
}

impl Feature {
    pub const ALL: [Feature; 11] = [
        Feature::S0,
        Feature::S1,
        Feature::S2,
        Feature::S3,
        Feature::N1,
        Feature::N2,
        Feature::N3,
        Feature::Dolp,
        Feature::Docp,
        Feature::Aolp,
        Feature::Cop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::S0 => "s0",
            Feature::S1 => "s1",
            Feature::S2 => "s2",
            Feature::S3 => "s3",
            Feature::N1 => "n1",
            Feature::N2 => "n2",
            Feature::N3 => "n3",
            Feature::Dolp => "dolp",
            Feature::Docp => "docp",
            Feature::Aolp => "aolp",
            Feature::Cop => "cop",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }

    /// Unit of the feature value, for export headers.
    pub fn unit(self) -> &'static str {
        match self {
            Feature::S0 | Feature::S1 | Feature::S2 | Feature::S3 => "intensity",
            Feature::Aolp => "rad",
            _ => "1",
        }
    }

    /// Fixed value range, or `None` for raw Stokes elements.
    fn value_range(self) -> Option<(f64, f64)> {
        match self {
            Feature::S0 | Feature::S1 | Feature::S2 | Feature::S3 => None,
            Feature::N1 | Feature::N2 | Feature::N3 | Feature::Cop => Some((-1.0, 1.0)),
            Feature::Dolp | Feature::Docp => Some((0.0, 1.0)),
            Feature::Aolp => Some((-FRAC_PI_2, FRAC_PI_2)),
        }
    }

    fn gradient_range(self) -> Option<(f64, f64)> {
        match self {
            Feature::S0 | Feature::S1 | Feature::S2 | Feature::S3 => None,
            Feature::N1 | Feature::N2 | Feature::N3 | Feature::Cop => Some((-2.0, 2.0)),
            Feature::Dolp | Feature::Docp => Some((-1.0, 1.0)),
            Feature::Aolp => Some((-FRAC_PI_2, FRAC_PI_2)),
        }
    }

    /// Value at one Stokes vector; `None` where the feature is undefined.
    pub fn value(self, s: StokesVector) -> Option<f64> {
        match self {
            Feature::S0 => Some(s.s0),
            Feature::S1 => Some(s.s1),
            Feature::S2 => Some(s.s2),
            Feature::S3 => Some(s.s3),
            _ => {
                let f = features(s).ok()?;
                match self {
                    Feature::N1 => Some(s.s1 / s.s0),
                    Feature::N2 => Some(s.s2 / s.s0),
                    Feature::N3 => Some(s.s3 / s.s0),
                    Feature::Dolp => Some(f.dolp),
                    Feature::Docp => Some(f.docp),
                    Feature::Aolp => (!f.aolp_degenerate).then_some(f.psi),
                    Feature::Cop => Some(f.cop as f64),
                    _ => unreachable!(),
                }
            }
        }
    }
}

/// Feature of one channel as a `height × width` array; NaN at masked or
/// undefined sites.
pub fn feature_plane(img: &StokesImage, channel: usize, feature: Feature) -> Array2<f64> {
    Array2::from_shape_fn((img.height, img.width), |(y, x)| {
        if img.is_valid_at(x, y, channel) {
            feature.value(img.get(x, y, channel)).unwrap_or(f64::NAN)
        } else {
            f64::NAN
        }
    })
}

fn selected<'a>(items: &'a [Item<'a>], filter: &LabelFilter) -> Vec<&'a StokesImage> {
    items
        .iter()
        .filter(|it| filter.matches(it.labels))
        .map(|it| it.image)
        .collect()
}

fn feature_values(img: &StokesImage, feature: Feature) -> Vec<f64> {
    img.valid_vectors()
        .filter_map(|(_, _, _, s)| feature.value(s))
        .collect()
}

fn histogram_of(values: &[Vec<f64>], range: Option<(f64, f64)>, bins: usize) -> Result<Histogram> {
    if values.iter().all(|v| v.is_empty()) {
        return Err(Error::EmptySelection("no valid samples after filtering".into()));
    }
    let empty = match range {
        Some((lo, hi)) => Histogram::uniform(lo, hi, bins)?,
        None => Histogram::symmetric_extent(values.iter().flatten(), bins)?,
    };
    fill(empty, values)
}

/// Bins per-part values in parallel and merges the parts in order.
fn fill(empty: Histogram, values: &[Vec<f64>]) -> Result<Histogram> {
    let parts: Vec<Histogram> = values
        .par_iter()
        .map(|v| {
            let mut h = empty.clone();
            h.extend(v.iter().copied());
            h
        })
        .collect();
    let mut out = empty;
    for p in &parts {
        out.merge(p)?;
    }
    Ok(out)
}

/// Histogram of one per-pixel feature over every valid pixel and channel of
/// the images passing `filter`.
pub fn stokes_histograms(items: &[Item], element: Feature, bins: usize, filter: &LabelFilter) -> Result<Histogram> {
    let values: Vec<Vec<f64>> = selected(items, filter)
        .par_iter()
        .map(|img| feature_values(img, element))
        .collect();
    histogram_of(&values, element.value_range(), bins)
}

/// Forward differences: `gx` is `h × (w-1)`, `gy` is `(h-1) × w`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub gx: Array2<f64>,
    pub gy: Array2<f64>,
}

impl Gradients {
    /// Finite horizontal then vertical values in row-major order.
    pub fn finite(&self) -> (Vec<f64>, Vec<f64>) {
        let f = |a: &Array2<f64>| a.iter().copied().filter(|v| v.is_finite()).collect();
        (f(&self.gx), f(&self.gy))
    }
}

pub fn gradient_field(plane: ArrayView2<f64>) -> Result<Gradients> {
    gradients_with(plane, |a, b| b - a)
}

fn gradients_with(plane: ArrayView2<f64>, diff: impl Fn(f64, f64) -> f64) -> Result<Gradients> {
    let (h, w) = plane.dim();
    if h < 2 || w < 2 {
        return Err(Error::Dimension(format!("gradient needs at least 2x2, got {w}x{h}")));
    }
    let gx = Array2::from_shape_fn((h, w - 1), |(y, x)| diff(plane[(y, x)], plane[(y, x + 1)]));
    let gy = Array2::from_shape_fn((h - 1, w), |(y, x)| diff(plane[(y, x)], plane[(y + 1, x)]));
    Ok(Gradients { gx, gy })
}

/// Angle difference folded by the π period of the AoLP.
#[inline]
pub fn wrap_aolp_diff(d: f64) -> f64 {
    if d.abs() > FRAC_PI_2 {
        d - PI * d.signum()
    } else {
        d
    }
}

/// Forward differences of an AoLP image with wrapping. NaN entries mark
/// undefined angles and propagate.
pub fn aolp_gradient(psi: ArrayView2<f64>) -> Result<Gradients> {
    if let Some(v) = psi
        .iter()
        .find(|v| !v.is_nan() && !(**v > -FRAC_PI_2 && **v <= FRAC_PI_2))
    {
        return Err(Error::InvalidArgument(format!("AoLP {v} outside (-pi/2, pi/2]")));
    }
    gradients_with(psi, |a, b| wrap_aolp_diff(b - a))
}

/// Gradient histograms of one feature: horizontal, vertical and both pooled.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientHistograms {
    pub horizontal: Histogram,
    pub vertical: Histogram,
    pub pooled: Histogram,
}

/// Gradient distributions of a feature. A gradient is counted only when both
/// neighbours are valid and the feature is defined at both.
pub fn feature_gradient_histograms(
    items: &[Item],
    feature: Feature,
    bins: usize,
    filter: &LabelFilter,
) -> Result<GradientHistograms> {
    let imgs = selected(items, filter);
    let per: Vec<(Vec<f64>, Vec<f64>)> = imgs
        .par_iter()
        .map(|img| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut hx = Vec::new();
            let mut hy = Vec::new();
            for c in 0..img.channels {
                let plane = feature_plane(img, c, feature);
                let g = if feature == Feature::Aolp {
                    aolp_gradient(plane.view())?
                } else {
                    gradient_field(plane.view())?
                };
                let (x, y) = g.finite();
                hx.extend(x);
                hy.extend(y);
            }
            Ok((hx, hy))
        })
        .collect::<Result<_>>()?;
    let (hx, hy): (Vec<Vec<f64>>, Vec<Vec<f64>>) = per.into_iter().unzip();
    let pooled_vals: Vec<Vec<f64>> = hx.iter().chain(hy.iter()).cloned().collect();
    let pooled = histogram_of(&pooled_vals, feature.gradient_range(), bins)?;
    let empty = Histogram::uniform(pooled.lo(), pooled.hi(), bins)?;
    Ok(GradientHistograms {
        horizontal: fill(empty.clone(), &hx)?,
        vertical: fill(empty, &hy)?,
        pooled,
    })
}

/// Histograms of the polarized and unpolarized intensity over valid pixels.
/// Both share the range `[min(0, min U), max s0]`.
pub fn pol_unpol_histograms(items: &[Item], bins: usize, filter: &LabelFilter) -> Result<(Histogram, Histogram)> {
    let per: Vec<(Vec<f64>, Vec<f64>)> = selected(items, filter)
        .par_iter()
        .map(|img| {
            img.valid_vectors()
                .filter(|(_, _, _, s)| is_valid(*s, DEFAULT_DOP_TOL))
                .map(|(_, _, _, s)| {
                    let p = s.polarized_intensity();
                    (p, s.s0 - p)
                })
                .unzip()
        })
        .collect();
    let (p, u): (Vec<Vec<f64>>, Vec<Vec<f64>>) = per.into_iter().unzip();
    let lo = u.iter().flatten().fold(0.0f64, |m, &v| m.min(v));
    let hi = p
        .iter()
        .flatten()
        .zip(u.iter().flatten())
        .fold(0.0f64, |m, (a, b)| m.max(a + b).max(*a).max(*b));
    let hi = if hi > lo { hi } else { lo + 1.0 };
    Ok((
        histogram_of(&p, Some((lo, hi)), bins)?,
        histogram_of(&u, Some((lo, hi)), bins)?,
    ))
}

/// Histogram of the degree of circular polarization over `[0, 1]`.
pub fn docp_distribution(items: &[Item], bins: usize, filter: &LabelFilter) -> Result<Histogram> {
    stokes_histograms(items, Feature::Docp, bins, filter)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoincarePlane {
    /// Horizontal axis `s'1`, vertical `s'2`.
    S1S2,
    S1S3,
}

impl PoincarePlane {
    pub fn axes(self) -> (&'static str, &'static str) {
        match self {
            PoincarePlane::S1S2 => ("n1", "n2"),
            PoincarePlane::S1S3 => ("n1", "n3"),
        }
    }
}

/// Square 2D histogram over `[lo, hi]²`, normalized so the fullest cell is 1.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityGrid {
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
    /// Row-major; row index along the vertical axis.
    pub counts: Vec<u64>,
    pub density: Vec<f64>,
    pub total: u64,
    pub axes: (String, String),
}

impl DensityGrid {
    pub fn centers(&self) -> Vec<f64> {
        let w = (self.hi - self.lo) / self.bins as f64;
        (0..self.bins).map(|i| self.lo + (i as f64 + 0.5) * w).collect()
    }

    pub fn cell_of(&self, u: f64, v: f64) -> (usize, usize) {
        let w = (self.hi - self.lo) / self.bins as f64;
        let f = |t: f64| (((t - self.lo) / w).floor().max(0.0) as usize).min(self.bins - 1);
        (f(v), f(u))
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.density[row * self.bins + col]
    }

    pub fn max(&self) -> f64 {
        self.density.iter().copied().fold(0.0, f64::max)
    }
}

/// Density of normalized Stokes vectors projected onto a Poincaré plane.
/// Vectors failing the validity test lie outside the ball and are excluded.
pub fn poincare_density(
    items: &[Item],
    plane: PoincarePlane,
    bins: usize,
    filter: &LabelFilter,
) -> Result<DensityGrid> {
    if bins == 0 {
        return Err(Error::InvalidArgument("density grid needs at least one bin".into()));
    }
    let (a, b) = plane.axes();
    let mut grid = DensityGrid {
        bins,
        lo: -1.0,
        hi: 1.0,
        counts: vec![0; bins * bins],
        density: vec![0.0; bins * bins],
        total: 0,
        axes: (a.to_string(), b.to_string()),
    };
    let parts: Vec<Vec<(usize, usize)>> = selected(items, filter)
        .par_iter()
        .map(|img| {
            img.valid_vectors()
                .filter(|(_, _, _, s)| is_valid(*s, DEFAULT_DOP_TOL))
                .map(|(_, _, _, s)| {
                    let v = match plane {
                        PoincarePlane::S1S2 => s.s2,
                        PoincarePlane::S1S3 => s.s3,
                    };
                    grid.cell_of(s.s1 / s.s0, v / s.s0)
                })
                .collect()
        })
        .collect();
    for (r, c) in parts.into_iter().flatten() {
        grid.counts[r * bins + c] += 1;
        grid.total += 1;
    }
    if grid.total == 0 {
        return Err(Error::EmptySelection("no valid samples after filtering".into()));
    }
    let peak = *grid.counts.iter().max().unwrap() as f64;
    grid.density = grid.counts.iter().map(|&c| c as f64 / peak).collect();
    Ok(grid)
}

/// Unit surface normals estimated independently per spectral channel.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalMapStack {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// `((c · 3 + k) · H + y) · W + x`.
    pub data: Vec<f32>,
    /// Per pixel; invalid pixels are ignored.
    pub mask: Vec<bool>,
}

pub const NORMAL_TOL: f64 = 1e-3;

impl NormalMapStack {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>, mask: Vec<bool>) -> Result<Self> {
        if channels < 2 {
            return Err(Error::Dimension(format!(
                "normal stack needs at least 2 channels, got {channels}"
            )));
        }
        if data.len() != width * height * channels * 3 || mask.len() != width * height {
            return Err(Error::Dimension(
                "normal stack buffer sizes do not match dimensions".into(),
            ));
        }
        let s = Self {
            width,
            height,
            channels,
            data,
            mask,
        };
        s.check()?;
        Ok(s)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut data = vec![0.0f32; width * height * channels * 3];
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    let n = f(x, y, c);
                    for k in 0..3 {
                        data[((c * 3 + k) * height + y) * width + x] = n[k] as f32;
                    }
                }
            }
        }
        Self::new(width, height, channels, data, vec![true; width * height])
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> [f64; 3] {
        let at = |k: usize| self.data[((c * 3 + k) * self.height + y) * self.width + x] as f64;
        [at(0), at(1), at(2)]
    }

    /// Every valid pixel has unit-length normals in every channel.
    pub fn check(&self) -> Result<()> {
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.mask[y * self.width + x] {
                    continue;
                }
                for c in 0..self.channels {
                    let n = self.get(x, y, c);
                    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                    if !((len - 1.0).abs() <= NORMAL_TOL) {
                        return Err(Error::InvalidArgument(format!(
                            "normal at ({x}, {y}) channel {c} has length {len}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Population standard deviation, summed in sorted order.
fn population_std(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Wraps an angle to `(-π, π]`.
fn wrap_pi(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Root-mean-square deviation of angles from their circular mean.
pub fn circular_std(angles: &mut [f64]) -> f64 {
    angles.sort_by(f64::total_cmp);
    let (s, c) = angles.iter().fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    let mean = s.atan2(c);
    let mut dev: Vec<f64> = angles.iter().map(|a| wrap_pi(a - mean).powi(2)).collect();
    dev.sort_by(f64::total_cmp);
    (dev.iter().sum::<f64>() / angles.len() as f64).sqrt()
}

/// Per-pixel spectral spread of normals (NaN at masked pixels) and the
/// histograms of each spread over valid pixels.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormalStats {
    pub width: usize,
    pub height: usize,
    pub std_x: Vec<f64>,
    pub std_y: Vec<f64>,
    pub std_z: Vec<f64>,
    /// Azimuth `atan2(n_y, n_x)`, circular statistics.
    pub std_azimuth: Vec<f64>,
    /// Elevation `asin(n_z)`.
    pub std_elevation: Vec<f64>,
    pub hist_x: Histogram,
    pub hist_y: Histogram,
    pub hist_z: Histogram,
    pub hist_azimuth: Histogram,
    pub hist_elevation: Histogram,
}

pub fn normal_spectral_stddev(stack: &NormalMapStack, bins: usize) -> Result<NormalStats> {
    if stack.channels < 2 {
        return Err(Error::Dimension(format!(
            "need at least 2 channels, got {}",
            stack.channels
        )));
    }
    let (w, h) = (stack.width, stack.height);
    let per_pixel: Vec<Option<[f64; 5]>> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            if !stack.mask[i] {
                return None;
            }
            let (x, y) = (i % w, i / w);
            let ns: Vec<[f64; 3]> = (0..stack.channels).map(|c| stack.get(x, y, c)).collect();
            let comp = |k: usize| population_std(&mut ns.iter().map(|n| n[k]).collect::<Vec<_>>());
            let (sx, sy, sz) = (comp(0), comp(1), comp(2));
            let mut az: Vec<f64> = ns.iter().map(|n| n[1].atan2(n[0])).collect();
            let mut el: Vec<f64> = ns.iter().map(|n| n[2].clamp(-1.0, 1.0).asin()).collect();
            Some([sx, sy, sz, circular_std(&mut az), population_std(&mut el)])
        })
        .collect();
    if per_pixel.iter().all(Option::is_none) {
        return Err(Error::EmptySelection("normal stack has no valid pixels".into()));
    }
    let field = |k: usize| -> Vec<f64> { per_pixel.iter().map(|p| p.map_or(f64::NAN, |v| v[k])).collect() };
    let hist = |v: &[f64], hi: f64| -> Result<Histogram> {
        let mut hst = Histogram::uniform(0.0, hi, bins)?;
        hst.extend(v.iter().copied().filter(|x| !x.is_nan()));
        Ok(hst)
    };
    let (sx, sy, sz, sa, se) = (field(0), field(1), field(2), field(3), field(4));
    Ok(NormalStats {
        width: w,
        height: h,
        hist_x: hist(&sx, 1.0)?,
        hist_y: hist(&sy, 1.0)?,
        hist_z: hist(&sz, 1.0)?,
        hist_azimuth: hist(&sa, PI)?,
        hist_elevation: hist(&se, FRAC_PI_2)?,
        std_x: sx,
        std_y: sy,
        std_z: sz,
        std_azimuth: sa,
        std_elevation: se,
    })
}
