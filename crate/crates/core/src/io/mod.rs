//! On-disk formats: the SPSI container, label sidecars and CSV exports.

pub mod export;
pub mod labels;
pub mod spsi;

pub use export::{export_curve, export_density, export_histogram};
pub use labels::{read_labels, write_labels, LabelSidecar};
pub use spsi::{read_spsi, write_spsi, SpsiObject};
