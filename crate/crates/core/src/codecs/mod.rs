//! Compressed representations of Stokes cubes.

pub mod inr;
pub mod pca;

use std::f64::consts::PI;

/// Bits per spatial pixel.
pub fn bpp(stored_bits: f64, width: usize, height: usize) -> f64 {
    assert!(width * height > 0, "bpp of an empty image");
    stored_bits / (width * height) as f64
}

/// Bits per pixel of an uncompressed cube stored as 32-bit floats: `channels · 4 · 32`.
pub fn raw_cube_bpp(channels: usize) -> f64 {
    (channels * 4 * 32) as f64
}

/// Fourier-feature encoding `[x, sin(ω₀x), cos(ω₀x), …, sin(ω_k x), cos(ω_k x)]`
/// with `ω_j = 2^j π`; length `2k + 3`.
pub fn positional_encode(x: f64, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * k + 3);
    positional_encode_into(x, k, &mut out);
    out
}

pub(crate) fn positional_encode_into(x: f64, k: usize, out: &mut Vec<f64>) {
    out.push(x);
    for j in 0..=k {
        let w = (1u64 << j) as f64 * PI;
        out.push((w * x).sin());
        out.push((w * x).cos());
    }
}
