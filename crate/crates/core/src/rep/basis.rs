use rand::Rng;
use serde::{Deserialize, Serialize};

use super::RepresentationSpec;
use crate::error::{validation, Result};
use crate::linalg::{haar_orthogonal, haar_unitary, unitarity_defect, CMatrix, CVector};
use crate::C64;

/// Whether sparse coefficients in the basis are complex or real.
///
/// Real coefficients describe real signals written in complex coordinates:
/// the conjugation-invariant field, or real signals handled through their
/// Fourier coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coefficients {
    Complex,
    Real,
}

/// An ordered orthonormal basis of flat coefficient space.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseBasis {
    matrix: CMatrix,
    coefficients: Coefficients,
}

/// Result of keeping the `k` largest basis coefficients.
#[derive(Clone, Debug)]
pub struct Thresholded {
    pub flat: CVector,
    /// Retained indices, sorted ascending.
    pub support: Vec<usize>,
    /// `l2` mass of the coefficients that were discarded, including the
    /// imaginary parts dropped for real coefficients.
    pub violation: f64,
}

impl SparseBasis {
    pub fn new(matrix: CMatrix, coefficients: Coefficients) -> Result<Self> {
        if !matrix.is_square() {
            return Err(validation("basis matrix must be square"));
        }
        let n = matrix.nrows();
        let defect = unitarity_defect(&matrix);
        if defect > 1e-12 * (n as f64).sqrt().max(1.0) {
            return Err(validation(format!("basis columns not orthonormal (defect {defect:.3e})")));
        }
        Ok(SparseBasis { matrix, coefficients })
    }

    /// Standard basis of the flat space, with the parity unit on each
    /// coordinate for real specs.
    pub fn standard(spec: &RepresentationSpec) -> Self {
        let parity = spec.flat_parity();
        let n = spec.dim();
        let diag = CVector::from_iterator(n, parity.iter().map(|p| p.unit()));
        SparseBasis { matrix: CMatrix::from_diagonal(&diag), coefficients: Self::default_coefficients(spec) }
    }

    /// Haar-random basis adapted to the field: unitary for complex specs,
    /// `D Q` with `Q` Haar orthogonal and `D` the parity units for real ones.
    pub fn random<R: Rng + ?Sized>(spec: &RepresentationSpec, rng: &mut R) -> Self {
        let n = spec.dim();
        if spec.is_real() {
            let q = haar_orthogonal(n, rng);
            let mut matrix = q;
            for (i, p) in spec.flat_parity().iter().enumerate() {
                let u = p.unit();
                matrix.row_mut(i).iter_mut().for_each(|z| *z *= u);
            }
            SparseBasis { matrix, coefficients: Coefficients::Real }
        } else {
            SparseBasis { matrix: haar_unitary(n, rng), coefficients: Coefficients::Complex }
        }
    }

    /// Random basis for real length-`n` signals expressed through their
    /// unitary DFT: `F Q` with `Q` Haar orthogonal and real coefficients.
    pub fn random_real_fourier<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let q = haar_orthogonal(n, rng);
        SparseBasis { matrix: dft_matrix(n) * q, coefficients: Coefficients::Real }
    }

    fn default_coefficients(spec: &RepresentationSpec) -> Coefficients {
        if spec.is_real() {
            Coefficients::Real
        } else {
            Coefficients::Complex
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn coefficients(&self) -> Coefficients {
        self.coefficients
    }

    pub(crate) fn check_spec(&self, spec: &RepresentationSpec) -> Result<()> {
        if self.dim() != spec.dim() {
            return Err(validation(format!("basis dimension {} != spec dimension {}", self.dim(), spec.dim())));
        }
        if spec.is_real() && self.coefficients != Coefficients::Real {
            return Err(validation("real specs need a basis with real coefficients"));
        }
        Ok(())
    }

    /// Basis coefficients `B* x`.
    pub fn analyze(&self, x: &CVector) -> CVector {
        self.matrix.adjoint() * x
    }

    /// Flat vector `B c`.
    pub fn synthesize(&self, c: &CVector) -> CVector {
        &self.matrix * c
    }

    /// Columns indexed by `support`, as an `N x |S|` matrix.
    pub fn columns(&self, support: &[usize]) -> CMatrix {
        CMatrix::from_fn(self.dim(), support.len(), |r, c| self.matrix[(r, support[c])])
    }

    /// Keeps the `k` largest-magnitude coefficients. Ties go to the lowest
    /// index. Real coefficient bases first drop imaginary parts.
    pub fn threshold(&self, x: &CVector, k: usize) -> Thresholded {
        let mut c = self.analyze(x);
        let mut discarded = 0.0;
        if self.coefficients == Coefficients::Real {
            for z in c.iter_mut() {
                discarded += z.im * z.im;
                z.im = 0.0;
            }
        }
        let support = top_k(&c, k);
        let mut kept = CVector::zeros(c.len());
        let mut mask = vec![false; c.len()];
        for &i in &support {
            mask[i] = true;
            kept[i] = c[i];
        }
        discarded += c.iter().zip(&mask).filter(|(_, &m)| !m).map(|(z, _)| z.norm_sqr()).sum::<f64>();
        Thresholded { flat: self.synthesize(&kept), support, violation: discarded.sqrt() }
    }
}

/// Indices of the `k` largest `|c_i|`, ascending. Stable: equal magnitudes
/// keep the lower index.
pub(crate) fn top_k(c: &CVector, k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&i, &j| c[j].norm_sqr().partial_cmp(&c[i].norm_sqr()).expect("NaN coefficient"));
    let mut support: Vec<usize> = order.into_iter().take(k).collect();
    support.sort_unstable();
    support
}

/// Unitary DFT matrix `F[k, j] = exp(-2πi jk / n) / sqrt(n)`.
pub fn dft_matrix(n: usize) -> CMatrix {
    let s = 1.0 / (n as f64).sqrt();
    CMatrix::from_fn(n, n, |k, j| {
        let t = -2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
        C64::from_polar(s, t)
    })
}
