//! Patch-PCA codec: non-overlapping `P × P` patches are flattened, centred on
//! their mean and projected onto the top-`K` principal directions, so a patch
//! is stored as `p ≈ B c + µ`.

use nalgebra::{DMatrix, DVector};

use crate::codecs::bpp;
use crate::error::{Error, Result};
use crate::image::StokesImage;

/// Which values of a patch go into its vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PatchMode {
    /// All channels and Stokes elements, flattened jointly.
    Joint,
    /// A single Stokes element (0..4) across all channels.
    Element(usize),
}

impl PatchMode {
    fn components(self) -> usize {
        match self {
            PatchMode::Joint => 4,
            PatchMode::Element(_) => 1,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            PatchMode::Joint => 0,
            PatchMode::Element(k) => 1 + k as u32,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(PatchMode::Joint),
            1..=4 => Ok(PatchMode::Element(code as usize - 1)),
            _ => Err(Error::Corrupt(format!("unknown patch mode {code}"))),
        }
    }
}

/// Flattened patches, one per row, in row-major grid order.
#[derive(Clone, Debug)]
pub struct PatchMatrix {
    pub data: DMatrix<f64>,
    pub patch: usize,
    pub channels: usize,
    pub mode: PatchMode,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl PatchMatrix {
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }
}

/// Length of a patch vector.
pub fn patch_dim(patch: usize, channels: usize, mode: PatchMode) -> usize {
    patch * patch * channels * mode.components()
}

#[inline]
fn patch_offset(r: usize, c: usize, ch: usize, k: usize, patch: usize, channels: usize, comps: usize) -> usize {
    ((r * patch + c) * channels + ch) * comps + k
}

/// Cuts the cube into non-overlapping patches; remainder rows and columns are dropped.
/// Within a patch values are ordered (row, col, channel, Stokes element), last fastest.
pub fn extract_patches(img: &StokesImage, patch: usize) -> Result<PatchMatrix> {
    extract_patches_mode(img, patch, PatchMode::Joint)
}

pub fn extract_patches_mode(img: &StokesImage, patch: usize, mode: PatchMode) -> Result<PatchMatrix> {
    if patch == 0 || patch > img.width.min(img.height) {
        return Err(Error::InvalidArgument(format!(
            "patch size {patch} invalid for {}x{} image",
            img.width, img.height
        )));
    }
    if let PatchMode::Element(k) = mode {
        if k >= 4 {
            return Err(Error::InvalidArgument(format!("Stokes element {k} out of range")));
        }
    }
    let (gr, gc) = (img.height / patch, img.width / patch);
    let comps = mode.components();
    let d = patch_dim(patch, img.channels, mode);
    let mut data = DMatrix::zeros(gr * gc, d);
    for gy in 0..gr {
        for gx in 0..gc {
            let row = gy * gc + gx;
            for r in 0..patch {
                for c in 0..patch {
                    let (x, y) = (gx * patch + c, gy * patch + r);
                    for ch in 0..img.channels {
                        let s = img.get(x, y, ch).to_array();
                        match mode {
                            PatchMode::Joint => {
                                for (k, v) in s.iter().enumerate() {
                                    data[(row, patch_offset(r, c, ch, k, patch, img.channels, comps))] = *v;
                                }
                            }
                            PatchMode::Element(k) => {
                                data[(row, patch_offset(r, c, ch, 0, patch, img.channels, comps))] = s[k];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(PatchMatrix {
        data,
        patch,
        channels: img.channels,
        mode,
        grid_rows: gr,
        grid_cols: gc,
    })
}

/// Concatenates patch sets from several images into one training set. The
/// result has one grid row per patch.
pub fn stack_patches(sets: &[PatchMatrix]) -> Result<PatchMatrix> {
    let first = sets
        .first()
        .ok_or_else(|| Error::EmptySelection("no patch sets to stack".into()))?;
    if let Some(m) = sets
        .iter()
        .find(|m| m.patch != first.patch || m.channels != first.channels || m.mode != first.mode)
    {
        return Err(Error::Dimension(format!(
            "patch sets differ: {}x{} with {} channels vs {}x{} with {} channels",
            first.patch, first.patch, first.channels, m.patch, m.patch, m.channels
        )));
    }
    let n: usize = sets.iter().map(|m| m.len()).sum();
    let mut data = DMatrix::zeros(n, first.dim());
    let mut r = 0;
    for m in sets {
        data.rows_mut(r, m.len()).copy_from(&m.data);
        r += m.len();
    }
    Ok(PatchMatrix {
        data,
        patch: first.patch,
        channels: first.channels,
        mode: first.mode,
        grid_rows: n,
        grid_cols: 1,
    })
}

/// Mean, orthonormal basis and per-basis spread of a set of patches.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaCodebook {
    pub patch: usize,
    pub channels: usize,
    pub mode: PatchMode,
    /// Length `D`.
    pub mean: DVector<f64>,
    /// `D × K`, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// Standard deviation of each coefficient, non-increasing.
    pub sigma: DVector<f64>,
    /// Total variance of the training patches (all directions, not only the kept ones).
    pub total_variance: f64,
    /// Number of training patches.
    pub samples: usize,
}

impl PcaCodebook {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Bits needed to store mean and basis as 32-bit floats.
    pub fn stored_bits(&self) -> f64 {
        ((self.dim() * self.rank() + self.dim()) * 32) as f64
    }

    /// Keeps only the first `k` bases.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.rank() {
            return Err(Error::InvalidArgument(format!(
                "cannot keep {k} of {} bases",
                self.rank()
            )));
        }
        Ok(Self {
            basis: self.basis.columns(0, k).into_owned(),
            sigma: self.sigma.rows(0, k).into_owned(),
            ..self.clone()
        })
    }
}

/// Fits a `K`-basis codebook by singular-value decomposition of the centred patches.
pub fn pca_fit(patches: &PatchMatrix, k: usize) -> Result<PcaCodebook> {
    let (n, d) = (patches.len(), patches.dim());
    if k == 0 || k > n.min(d) {
        return Err(Error::InvalidArgument(format!(
            "K = {k} must be in 1..={} for {n} patches of dimension {d}",
            n.min(d)
        )));
    }
    let mean = patches.data.row_mean().transpose();
    let mut centred = patches.data.clone();
    for mut row in centred.row_iter_mut() {
        row -= mean.transpose();
    }
    let svd = centred.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::InvalidArgument("SVD did not produce right singular vectors".into()))?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));

    let dof = (n.saturating_sub(1)).max(1) as f64;
    let total_variance = sv.iter().map(|s| s * s).sum::<f64>() / dof;
    let mut basis = DMatrix::zeros(d, k);
    let mut sigma = DVector::zeros(k);
    for (j, &i) in order.iter().take(k).enumerate() {
        let mut col: DVector<f64> = v_t.row(i).transpose();
        // Sign convention: largest-magnitude entry positive (first on ties).
        let mut best = 0;
        for t in 1..d {
            if col[t].abs() > col[best].abs() {
                best = t;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
        basis.set_column(j, &col);
        sigma[j] = sv[i] / dof.sqrt();
    }
    Ok(PcaCodebook {
        patch: patches.patch,
        channels: patches.channels,
        mode: patches.mode,
        mean,
        basis,
        sigma,
        total_variance,
        samples: n,
    })
}

/// Proportion of total variance carried by each kept basis: `σ_i² / Σσ²`.
/// Sums to one when every direction was kept.
pub fn variance_spectrum(codebook: &PcaCodebook) -> Vec<f64> {
    if codebook.total_variance == 0.0 {
        return vec![0.0; codebook.rank()];
    }
    codebook.sigma.iter().map(|s| s * s / codebook.total_variance).collect()
}

/// Coefficients of every patch of an image.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaEncoding {
    /// `patches × K`.
    pub coefficients: DMatrix<f64>,
    pub width: usize,
    pub height: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub wavelengths: Vec<f32>,
}

impl PcaEncoding {
    /// Bits for the coefficients alone at 32 bits each.
    pub fn coefficient_bits(&self) -> f64 {
        (self.coefficients.len() * 32) as f64
    }

    /// Coefficient-only bits per pixel.
    pub fn bpp(&self) -> f64 {
        bpp(self.coefficient_bits(), self.width, self.height)
    }

    /// Bits per pixel including the codebook's mean and basis.
    pub fn bpp_with_codebook(&self, codebook: &PcaCodebook) -> f64 {
        bpp(
            self.coefficient_bits() + codebook.stored_bits(),
            self.width,
            self.height,
        )
    }
}

/// `c = Bᵀ (p − µ)` for every patch.
pub fn pca_encode(img: &StokesImage, codebook: &PcaCodebook) -> Result<PcaEncoding> {
    if img.channels != codebook.channels {
        return Err(Error::Dimension(format!(
            "codebook built for {} channels, image has {}",
            codebook.channels, img.channels
        )));
    }
    let patches = extract_patches_mode(img, codebook.patch, codebook.mode)?;
    if patches.dim() != codebook.dim() {
        return Err(Error::Dimension("patch dimension differs from codebook".into()));
    }
    let mut centred = patches.data;
    for mut row in centred.row_iter_mut() {
        row -= codebook.mean.transpose();
    }
    Ok(PcaEncoding {
        coefficients: centred * &codebook.basis,
        width: img.width,
        height: img.height,
        grid_rows: patches.grid_rows,
        grid_cols: patches.grid_cols,
        wavelengths: img.wavelengths.clone(),
    })
}

/// `p̂ = B c + µ`, reassembled in grid order. Pixels outside the patch grid are
/// marked invalid. In single-element mode only that element is written.
pub fn pca_decode(enc: &PcaEncoding, codebook: &PcaCodebook) -> Result<StokesImage> {
    if enc.coefficients.ncols() != codebook.rank() {
        return Err(Error::Dimension(format!(
            "{} coefficients per patch, codebook has {} bases",
            enc.coefficients.ncols(),
            codebook.rank()
        )));
    }
    let recon = &enc.coefficients * codebook.basis.transpose();
    let p = codebook.patch;
    let comps = codebook.mode.components();
    let mut img = StokesImage::new(enc.width, enc.height, codebook.channels);
    if enc.wavelengths.len() == codebook.channels {
        img.wavelengths = enc.wavelengths.clone();
    }
    img.mask.iter_mut().for_each(|m| *m = false);
    let n = img.plane_len();
    for gy in 0..enc.grid_rows {
        for gx in 0..enc.grid_cols {
            let row = gy * enc.grid_cols + gx;
            for r in 0..p {
                for c in 0..p {
                    let (x, y) = (gx * p + c, gy * p + r);
                    for ch in 0..codebook.channels {
                        for k in 0..comps {
                            let off = patch_offset(r, c, ch, k, p, codebook.channels, comps);
                            let v = recon[(row, off)] + codebook.mean[off];
                            let elem = match codebook.mode {
                                PatchMode::Joint => k,
                                PatchMode::Element(e) => e,
                            };
                            img.data[(ch * 4 + elem) * n + y * enc.width + x] = v as f32;
                        }
                        img.set_valid(x, y, ch, true);
                    }
                }
            }
        }
    }
    Ok(img)
}

/// One point of a rate–distortion curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatePoint {
    pub bases: usize,
    pub bpp: f64,
    pub bpp_with_codebook: f64,
    pub mse: f64,
}

/// MSE over decoded (valid) sites of the decoded image against the input.
pub fn decode_mse(original: &StokesImage, decoded: &StokesImage) -> Result<f64> {
    Ok(crate::reconstruct::quality(original, decoded)?.mse)
}

/// Encodes the image at each basis count and records bits per pixel and error.
pub fn rate_curve(img: &StokesImage, codebook: &PcaCodebook, ks: &[usize]) -> Result<Vec<RatePoint>> {
    ks.iter()
        .map(|&k| {
            let cb = codebook.truncated(k)?;
            let enc = pca_encode(img, &cb)?;
            let dec = pca_decode(&enc, &cb)?;
            Ok(RatePoint {
                bases: k,
                bpp: enc.bpp(),
                bpp_with_codebook: enc.bpp_with_codebook(&cb),
                mse: decode_mse(img, &dec)?,
            })
        })
        .collect()
}
