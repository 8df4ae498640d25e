//! CSV export of histograms, density grids and curves. Floats carry 17
//! significant digits; headers name each column and its unit.

use std::path::Path;

use crate::analysis::{DensityGrid, Histogram};
use crate::error::{Error, Result};
use crate::io::spsi::write_atomic;

/// 17 significant digits in scientific notation; parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// A header plus rows of already-formatted cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_csv()?)
    }
}

fn col(name: &str, unit: &str) -> String {
    format!("{name} [{unit}]")
}

/// One row per bin: edges, centre, count and log-probability density.
pub fn histogram_table(h: &Histogram, unit: &str) -> Table {
    let centers = h.centers();
    let lp = h.log_probability();
    Table {
        header: vec![
            col("bin_lo", unit),
            col("bin_hi", unit),
            col("bin_center", unit),
            col("count", "samples"),
            col("log_probability", &format!("ln 1/{unit}")),
        ],
        rows: (0..h.bins())
            .map(|i| {
                vec![
                    fmt_f64(h.edges[i]),
                    fmt_f64(h.edges[i + 1]),
                    fmt_f64(centers[i]),
                    h.counts[i].to_string(),
                    fmt_f64(lp[i]),
                ]
            })
            .collect(),
    }
}

/// Cells in row-major order with the centre of each cell on both axes.
pub fn density_table(g: &DensityGrid) -> Table {
    let c = g.centers();
    let mut rows = Vec::with_capacity(g.bins * g.bins);
    for r in 0..g.bins {
        for k in 0..g.bins {
            rows.push(vec![
                r.to_string(),
                k.to_string(),
                fmt_f64(c[k]),
                fmt_f64(c[r]),
                g.counts[r * g.bins + k].to_string(),
                fmt_f64(g.density[r * g.bins + k]),
            ]);
        }
    }
    Table {
        header: vec![
            col("row", "index"),
            col("col", "index"),
            col(&format!("{}_center", g.axes.0), "1"),
            col(&format!("{}_center", g.axes.1), "1"),
            col("count", "samples"),
            col("density", "max-normalized"),
        ],
        rows,
    }
}

/// Named numeric columns of equal length; each entry is `(name, unit, values)`.
pub fn curve_table(columns: &[(&str, &str, Vec<f64>)]) -> Result<Table> {
    let n = columns.first().map_or(0, |c| c.2.len());
    if columns.iter().any(|c| c.2.len() != n) {
        return Err(Error::Dimension("curve columns differ in length".into()));
    }
    Ok(Table {
        header: columns.iter().map(|(name, unit, _)| col(name, unit)).collect(),
        rows: (0..n)
            .map(|i| columns.iter().map(|c| fmt_f64(c.2[i])).collect())
            .collect(),
    })
}

pub fn export_histogram(path: impl AsRef<Path>, h: &Histogram, unit: &str) -> Result<()> {
    histogram_table(h, unit).write(path)
}

pub fn export_density(path: impl AsRef<Path>, g: &DensityGrid) -> Result<()> {
    density_table(g).write(path)
}

pub fn export_curve(path: impl AsRef<Path>, columns: &[(&str, &str, Vec<f64>)]) -> Result<()> {
    curve_table(columns)?.write(path)
}
