//! Stokes–Mueller algebra and polarimetric features.
//!
//! Conventions follow the ideal-element forms of Collett: angles are measured
//! from the horizontal axis, a retarder's fast axis sits at `theta`, and the
//! frame rotation is `R(-theta) * M * R(theta)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance on the degree of polarization used by validity checks.
pub const DEFAULT_DOP_TOL: f64 = 1e-3;

/// A 4-component Stokes vector in linear radiometric units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StokesVector {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    pub const UNPOLARIZED: StokesVector = StokesVector::new(1.0, 0.0, 0.0, 0.0);

    pub const fn new(s0: f64, s1: f64, s2: f64, s3: f64) -> Self {
        Self { s0, s1, s2, s3 }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.s0, self.s1, self.s2, self.s3]
    }

    /// Builds a vector from intensity, degree of polarization and ellipse angles.
    pub fn from_ellipse(s0: f64, dop: f64, psi: f64, chi: f64) -> Self {
        let p = dop * s0;
        Self::new(
            s0,
            p * (2.0 * chi).cos() * (2.0 * psi).cos(),
            p * (2.0 * chi).cos() * (2.0 * psi).sin(),
            p * (2.0 * chi).sin(),
        )
    }

    /// Polarized intensity `sqrt(s1² + s2² + s3²)`.
    pub fn polarized_intensity(&self) -> f64 {
        (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt()
    }

    /// Linearly polarized intensity `sqrt(s1² + s2²)`.
    pub fn linear_intensity(&self) -> f64 {
        self.s1.hypot(self.s2)
    }

    /// Degree of polarization. Infinite or NaN when `s0 <= 0`.
    pub fn dop(&self) -> f64 {
        self.polarized_intensity() / self.s0
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl Add for StokesVector {
    type Output = StokesVector;
    fn add(self, o: StokesVector) -> StokesVector {
        StokesVector::new(self.s0 + o.s0, self.s1 + o.s1, self.s2 + o.s2, self.s3 + o.s3)
    }
}

impl Sub for StokesVector {
    type Output = StokesVector;
    fn sub(self, o: StokesVector) -> StokesVector {
        StokesVector::new(self.s0 - o.s0, self.s1 - o.s1, self.s2 - o.s2, self.s3 - o.s3)
    }
}

impl Mul<f64> for StokesVector {
    type Output = StokesVector;
    fn mul(self, k: f64) -> StokesVector {
        StokesVector::new(self.s0 * k, self.s1 * k, self.s2 * k, self.s3 * k)
    }
}

/// A 4×4 Mueller matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuellerMatrix(pub [[f64; 4]; 4]);

impl Default for MuellerMatrix {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl MuellerMatrix {
    pub const IDENTITY: MuellerMatrix = MuellerMatrix([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]);

    pub fn row(&self, i: usize) -> [f64; 4] {
        self.0[i]
    }

    pub fn transpose(&self) -> Self {
        let mut t = [[0.0; 4]; 4];
        for (i, row) in self.0.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                t[j][i] = *v;
            }
        }
        MuellerMatrix(t)
    }

    /// Largest absolute entry-wise difference.
    pub fn max_abs_diff(&self, other: &MuellerMatrix) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

impl Mul for MuellerMatrix {
    type Output = MuellerMatrix;
    fn mul(self, rhs: MuellerMatrix) -> MuellerMatrix {
        let mut out = [[0.0; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..4).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        MuellerMatrix(out)
    }
}

impl Mul<StokesVector> for MuellerMatrix {
    type Output = StokesVector;
    fn mul(self, s: StokesVector) -> StokesVector {
        apply(&self, s)
    }
}

/// Ideal linear polarizer with its transmission axis at `theta`.
pub fn lp_mueller(theta: f64) -> MuellerMatrix {
    let c = (2.0 * theta).cos();
    let s = (2.0 * theta).sin();
    MuellerMatrix([
        [0.5, 0.5 * c, 0.5 * s, 0.0],
        [0.5 * c, 0.5 * c * c, 0.5 * c * s, 0.0],
        [0.5 * s, 0.5 * c * s, 0.5 * s * s, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ])
}

/// Ideal linear retarder with fast axis at `theta` and retardance `delta`.
/// `delta = π/2` is a quarter-wave plate.
pub fn retarder_mueller(theta: f64, delta: f64) -> MuellerMatrix {
    let c = (2.0 * theta).cos();
    let s = (2.0 * theta).sin();
    let cd = delta.cos();
    let sd = delta.sin();
    MuellerMatrix([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, c * c + s * s * cd, c * s * (1.0 - cd), -s * sd],
        [0.0, c * s * (1.0 - cd), s * s + c * c * cd, c * sd],
        [0.0, s * sd, -c * sd, cd],
    ])
}

/// Quarter-wave plate with fast axis at `theta`.
pub fn qwp_mueller(theta: f64) -> MuellerMatrix {
    retarder_mueller(theta, FRAC_PI_2)
}

fn rotator(theta: f64) -> MuellerMatrix {
    let c = (2.0 * theta).cos();
    let s = (2.0 * theta).sin();
    MuellerMatrix([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, c, s, 0.0],
        [0.0, -s, c, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
}

/// Expresses `m` for the element physically rotated by `theta`.
pub fn rotate_mueller(m: &MuellerMatrix, theta: f64) -> MuellerMatrix {
    rotator(-theta) * *m * rotator(theta)
}

/// Matrix-vector product `M s`.
pub fn apply(m: &MuellerMatrix, s: StokesVector) -> StokesVector {
    let v = s.to_array();
    let mut out = [0.0; 4];
    for (o, row) in out.iter_mut().zip(m.0.iter()) {
        *o = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
    }
    StokesVector::from_array(out)
}

/// Derived polarimetric quantities of one Stokes vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarimetricFeatures {
    /// Degree of polarization.
    pub rho: f64,
    pub dolp: f64,
    pub docp: f64,
    /// Angle of linear polarization in `(-π/2, π/2]`.
    pub psi: f64,
    /// Ellipticity angle in `[-π/4, π/4]`.
    pub chi: f64,
    /// Chirality: sign of `s3`.
    pub cop: i8,
    /// Set when the linear intensity is zero and `psi` carries no information.
    pub aolp_degenerate: bool,
}

/// Computes DoP, DoLP, DoCP, AoLP, ellipticity and chirality.
pub fn features(s: StokesVector) -> Result<PolarimetricFeatures> {
    if !(s.s0 > 0.0) {
        return Err(Error::UndefinedFeature { s0: s.s0 });
    }
    let p = s.polarized_intensity();
    let l = s.linear_intensity();
    let aolp_degenerate = l == 0.0;
    let psi = if aolp_degenerate {
        0.0
    } else {
        let mut psi = 0.5 * s.s2.atan2(s.s1);
        if psi <= -FRAC_PI_2 {
            psi += PI;
        }
        psi
    };
    // atan2 with a non-negative second argument equals atan(s3 / L) and is 0 at P = 0.
    let chi = 0.5 * s.s3.atan2(l);
    let cop = if s.s3 > 0.0 {
        1
    } else if s.s3 < 0.0 {
        -1
    } else {
        0
    };
    Ok(PolarimetricFeatures {
        rho: p / s.s0,
        dolp: l / s.s0,
        docp: s.s3.abs() / s.s0,
        psi,
        chi,
        cop,
        aolp_degenerate,
    })
}

/// Splits total intensity into polarized `P` and unpolarized `U = s0 - P` parts.
pub fn decompose(s: StokesVector) -> Result<(f64, f64)> {
    decompose_with_tol(s, DEFAULT_DOP_TOL)
}

pub fn decompose_with_tol(s: StokesVector, tol: f64) -> Result<(f64, f64)> {
    if !is_valid(s, tol) {
        return Err(Error::InvalidDecomposition { s0: s.s0, dop: s.dop() });
    }
    let p = s.polarized_intensity();
    Ok((p, s.s0 - p))
}

/// True iff `s0 > 0` and the degree of polarization does not exceed `1 + tol`.
pub fn is_valid(s: StokesVector, tol: f64) -> bool {
    s.s0 > 0.0 && s.is_finite() && s.polarized_intensity() <= (1.0 + tol) * s.s0
}

/// Point on (or inside) the Poincaré sphere: `(s1, s2, s3) / s0`.
pub fn normalize(s: StokesVector) -> Result<[f64; 3]> {
    if !(s.s0 > 0.0) {
        return Err(Error::UndefinedFeature { s0: s.s0 });
    }
    Ok([s.s1 / s.s0, s.s2 / s.s0, s.s3 / s.s0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, SQRT_2};

    fn close(a: StokesVector, b: StokesVector, tol: f64) -> bool {
        (a - b).to_array().iter().all(|d| d.abs() <= tol)
    }

    #[test]
    fn polarizer_examples() {
        let out = apply(&lp_mueller(0.0), StokesVector::UNPOLARIZED);
        assert_eq!(out, StokesVector::new(0.5, 0.5, 0.0, 0.0));
        let m = lp_mueller(0.0);
        assert!((m * m).max_abs_diff(&m) < 1e-15);
        let out = apply(&lp_mueller(FRAC_PI_4), StokesVector::new(1.0, 1.0, 0.0, 0.0));
        assert!(close(out, StokesVector::new(0.5, 0.0, 0.5, 0.0), 1e-15));
        let out = apply(&lp_mueller(FRAC_PI_2), StokesVector::new(1.0, 1.0, 0.0, 0.0));
        assert!(close(out, StokesVector::default(), 1e-15));
    }

    #[test]
    fn retarder_examples() {
        let out = apply(&qwp_mueller(FRAC_PI_4), StokesVector::new(1.0, 1.0, 0.0, 0.0));
        assert!(close(out, StokesVector::new(1.0, 0.0, 0.0, 1.0), 1e-15));

        // Fast axis horizontal: s2 -> s2 cos δ, s3 -> -s2 sin δ.
        let out = apply(&retarder_mueller(0.0, FRAC_PI_4), StokesVector::new(1.0, 0.0, 1.0, 0.0));
        let h = SQRT_2 / 2.0;
        assert!(close(out, StokesVector::new(1.0, 0.0, h, -h), 1e-15));

        for theta in [0.0, 0.3, 1.1, -2.0] {
            let q = qwp_mueller(theta);
            let four = q * q * q * q;
            assert!(four.max_abs_diff(&MuellerMatrix::IDENTITY) < 1e-12);
        }
    }

    #[test]
    fn rotation_examples() {
        for deg in [15.0f64, 30.0, 75.0] {
            let t = deg.to_radians();
            assert!(rotate_mueller(&lp_mueller(0.0), t).max_abs_diff(&lp_mueller(t)) < 1e-12);
        }
        let m = retarder_mueller(0.3, 0.7);
        assert_eq!(rotate_mueller(&m, 0.0), m);
        let r = rotate_mueller(&qwp_mueller(0.0), FRAC_PI_4);
        assert!(r.max_abs_diff(&qwp_mueller(FRAC_PI_4)) < 1e-15);
    }

    #[test]
    fn feature_examples() {
        let f = features(StokesVector::new(1.0, 1.0, 0.0, 0.0)).unwrap();
        assert_eq!((f.rho, f.psi, f.chi, f.dolp, f.docp), (1.0, 0.0, 0.0, 1.0, 0.0));

        let f = features(StokesVector::new(1.0, 0.0, 0.0, 1.0)).unwrap();
        assert_eq!((f.rho, f.dolp, f.docp, f.cop), (1.0, 0.0, 1.0, 1));
        assert!((f.chi - FRAC_PI_4).abs() < 1e-15);
        assert!(f.aolp_degenerate);
        assert_eq!(f.psi, 0.0);

        let f = features(StokesVector::new(2.0, 1.0, 1.0, SQRT_2)).unwrap();
        assert!((f.rho - 1.0).abs() < 1e-15);
        assert!((f.psi - FRAC_PI_8).abs() < 1e-15);
        assert!((f.chi - FRAC_PI_8).abs() < 1e-15);

        assert!(matches!(
            features(StokesVector::new(0.0, 0.0, 0.0, 0.0)),
            Err(Error::UndefinedFeature { .. })
        ));
    }

    #[test]
    fn aolp_on_negative_axis_is_pi_over_two() {
        // s2 = -0 would give atan2 = -π; the range is half-open at -π/2.
        let f = features(StokesVector::new(1.0, -1.0, -0.0, 0.0)).unwrap();
        assert_eq!(f.psi, FRAC_PI_2);
        let f = features(StokesVector::new(1.0, -1.0, 0.0, 0.0)).unwrap();
        assert_eq!(f.psi, FRAC_PI_2);
    }

    #[test]
    fn decompose_examples() {
        assert_eq!(decompose(StokesVector::UNPOLARIZED).unwrap(), (0.0, 1.0));
        assert_eq!(decompose(StokesVector::new(1.0, 1.0, 0.0, 0.0)).unwrap(), (1.0, 0.0));
        let (p, u) = decompose(StokesVector::new(2.0, 1.0, 0.0, 1.0)).unwrap();
        assert!((p - SQRT_2).abs() < 1e-15);
        assert!((u - (2.0 - SQRT_2)).abs() < 1e-15);
        assert!(matches!(
            decompose(StokesVector::new(1.0, 0.8, 0.8, 0.0)),
            Err(Error::InvalidDecomposition { .. })
        ));
    }

    #[test]
    fn validity_examples() {
        assert!(is_valid(StokesVector::new(1.0, 0.6, 0.8, 0.0), 1e-3));
        assert!(!is_valid(StokesVector::new(1.0, 0.8, 0.8, 0.0), 1e-3));
        assert!(!is_valid(StokesVector::new(-1.0, 0.0, 0.0, 0.0), 1e-3));
        assert!(!is_valid(StokesVector::new(f64::NAN, 0.0, 0.0, 0.0), 1e-3));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(
            normalize(StokesVector::new(2.0, 1.0, 0.0, 0.0)).unwrap(),
            [0.5, 0.0, 0.0]
        );
        assert_eq!(normalize(StokesVector::UNPOLARIZED).unwrap(), [0.0, 0.0, 0.0]);
        assert!(normalize(StokesVector::new(0.0, 1.0, 0.0, 0.0)).is_err());
    }
}
