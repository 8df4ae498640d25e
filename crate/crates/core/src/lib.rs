//! Spectro-polarimetric imaging toolkit.
//!
//! The crate covers the whole path from a synthetic Stokes scene to
//! statistics: Stokes–Mueller algebra ([`stokes`]), forward simulation of
//! rotating-QWP hyperspectral and mosaic trichromatic cameras ([`camera`]),
//! per-pixel least-squares reconstruction ([`reconstruct`]), patch-PCA and
//! coordinate-network codecs ([`codecs`]), dataset statistics ([`analysis`])
//! and the on-disk formats ([`io`]).

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod camera;
pub mod codecs;
pub mod error;
pub mod image;
pub mod io;
pub mod reconstruct;
pub mod stokes;
pub mod synth;

pub use error::{Error, Result};
pub use image::{Frame, StokesImage};
pub use stokes::{MuellerMatrix, PolarimetricFeatures, StokesVector};
