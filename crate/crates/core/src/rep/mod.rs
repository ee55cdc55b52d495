//! Representation specifications and block-structured signals.
//!
//! A signal lives in `V = ⊕_ℓ V_ℓ^{R_ℓ}` and is stored as one `N_ℓ x R_ℓ`
//! coefficient matrix per isotypic block. The flat layout used everywhere
//! else (moments, files, bases) puts blocks in spec order and each block in
//! column-major order: copy `r` outer, row `m` inner.

mod ambiguity;
mod basis;
mod orbit;

pub use ambiguity::{apply_ambiguity, random_ambiguity, AmbiguityElement};
#[cfg(test)]
pub(crate) use ambiguity::apply_unchecked;
pub use basis::{dft_matrix, Coefficients, SparseBasis, Thresholded};
pub use orbit::{orbit_span_basis, orbit_span_dimension, sparsity_bound, SparsityBound};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{structure, validation, Result};
use crate::linalg::{CMatrix, CVector};
use crate::rng::{complex_gaussian, gaussian};
use crate::C64;

/// Absolute tolerance for parity checks on individual entries.
pub const PARITY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
    None,
}

impl Parity {
    /// Factor `c` such that admissible entries are `c * t` for real `t`.
    pub fn unit(self) -> C64 {
        match self {
            Parity::Odd => C64::new(0.0, 1.0),
            _ => C64::new(1.0, 0.0),
        }
    }

    /// Nearest admissible value of `z`.
    pub fn project(self, z: C64) -> C64 {
        match self {
            Parity::Even => C64::new(z.re, 0.0),
            Parity::Odd => C64::new(0.0, z.im),
            Parity::None => z,
        }
    }

    /// Distance from `z` to the admissible set.
    pub fn defect(self, z: C64) -> f64 {
        match self {
            Parity::Even => z.im.abs(),
            Parity::Odd => z.re.abs(),
            Parity::None => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Field {
    #[serde(rename = "complex")]
    Complex,
    /// Coefficients constrained by block parity; the ambiguity group is
    /// orthogonal rather than unitary.
    #[serde(rename = "real")]
    RealConjugationInvariant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IsotypicBlock {
    pub dim: usize,
    #[serde(rename = "mult")]
    pub multiplicity: usize,
    pub parity: Parity,
}

impl IsotypicBlock {
    pub fn new(dim: usize, multiplicity: usize, parity: Parity) -> Self {
        IsotypicBlock { dim, multiplicity, parity }
    }

    pub fn len(&self) -> usize {
        self.dim * self.multiplicity
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct RepresentationSpec {
    blocks: Vec<IsotypicBlock>,
    field: Field,
}

#[derive(Deserialize)]
struct RawSpec {
    blocks: Vec<IsotypicBlock>,
    field: Field,
}

impl TryFrom<RawSpec> for RepresentationSpec {
    type Error = crate::MraError;

    fn try_from(raw: RawSpec) -> Result<Self> {
        RepresentationSpec::new(raw.blocks, raw.field)
    }
}

impl RepresentationSpec {
    pub fn new(blocks: Vec<IsotypicBlock>, field: Field) -> Result<Self> {
        if blocks.is_empty() {
            return Err(validation("spec needs at least one block"));
        }
        for (i, b) in blocks.iter().enumerate() {
            if b.dim == 0 || b.multiplicity == 0 {
                return Err(validation(format!("block {i}: dim and mult must be >= 1")));
            }
        }
        Ok(RepresentationSpec { blocks, field })
    }

    /// Complex spec with `count` copies of `(dim, mult)`.
    pub fn uniform(count: usize, dim: usize, mult: usize) -> Result<Self> {
        Self::new(vec![IsotypicBlock::new(dim, mult, Parity::None); count], Field::Complex)
    }

    pub fn blocks(&self) -> &[IsotypicBlock] {
        &self.blocks
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn is_real(&self) -> bool {
        self.field == Field::RealConjugationInvariant
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Total dimension `N = Σ N_ℓ R_ℓ`.
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(IsotypicBlock::len).sum()
    }

    /// `M = Σ min(N_ℓ R_ℓ, N_ℓ²)`.
    pub fn m(&self) -> usize {
        self.blocks.iter().map(|b| b.len().min(b.dim * b.dim)).sum()
    }

    /// Flat offset of each block.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.blocks
            .iter()
            .map(|b| {
                let o = acc;
                acc += b.len();
                o
            })
            .collect()
    }

    /// Parity of every flat coordinate.
    pub fn flat_parity(&self) -> Vec<Parity> {
        let real = self.is_real();
        self.blocks
            .iter()
            .flat_map(|b| std::iter::repeat_n(if real { b.parity } else { Parity::None }, b.len()))
            .collect()
    }

    /// Projects a flat vector onto the conjugation-invariant subspace.
    /// Identity for complex specs.
    pub fn project_flat(&self, x: &mut CVector) {
        if !self.is_real() {
            return;
        }
        for (v, p) in x.iter_mut().zip(self.flat_parity()) {
            *v = p.project(*v);
        }
    }

    pub(crate) fn check_same(&self, other: &RepresentationSpec) -> Result<()> {
        if self != other {
            return Err(validation("representation specs differ"));
        }
        Ok(())
    }
}

/// A signal as one `N_ℓ x R_ℓ` matrix per block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSignal {
    spec: RepresentationSpec,
    matrices: Vec<CMatrix>,
}

impl BlockSignal {
    /// Validates shapes and, for real specs, entrywise parity.
    pub fn new(spec: RepresentationSpec, matrices: Vec<CMatrix>) -> Result<Self> {
        if matrices.len() != spec.num_blocks() {
            return Err(structure(format!(
                "expected {} block matrices, got {}",
                spec.num_blocks(),
                matrices.len()
            )));
        }
        for (i, (b, a)) in spec.blocks().iter().zip(&matrices).enumerate() {
            if a.shape() != (b.dim, b.multiplicity) {
                return Err(structure(format!(
                    "block {i}: expected {}x{}, got {}x{}",
                    b.dim,
                    b.multiplicity,
                    a.nrows(),
                    a.ncols()
                )));
            }
        }
        let signal = BlockSignal { spec, matrices };
        signal.check_parity()?;
        Ok(signal)
    }

    pub(crate) fn new_unchecked(spec: RepresentationSpec, matrices: Vec<CMatrix>) -> Self {
        BlockSignal { spec, matrices }
    }

    pub fn zeros(spec: &RepresentationSpec) -> Self {
        let matrices = spec.blocks().iter().map(|b| CMatrix::zeros(b.dim, b.multiplicity)).collect();
        BlockSignal { spec: spec.clone(), matrices }
    }

    pub fn spec(&self) -> &RepresentationSpec {
        &self.spec
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    pub fn block(&self, l: usize) -> &CMatrix {
        &self.matrices[l]
    }

    pub fn into_matrices(self) -> Vec<CMatrix> {
        self.matrices
    }

    pub fn norm(&self) -> f64 {
        self.matrices.iter().map(|a| a.norm_squared()).sum::<f64>().sqrt()
    }

    fn check_parity(&self) -> Result<()> {
        if !self.spec.is_real() {
            return Ok(());
        }
        for (l, (b, a)) in self.spec.blocks().iter().zip(&self.matrices).enumerate() {
            let tol = PARITY_TOL * a.iter().map(|z| z.norm()).fold(1.0, f64::max);
            if let Some(z) = a.iter().find(|z| b.parity.defect(**z) > tol) {
                return Err(validation(format!("block {l}: entry {z} violates {:?} parity", b.parity)));
            }
        }
        Ok(())
    }

    /// Flat coefficient vector of length `N`.
    pub fn flatten(&self) -> CVector {
        let mut out = Vec::with_capacity(self.spec.dim());
        for a in &self.matrices {
            // nalgebra stores column-major, which is the documented layout.
            out.extend_from_slice(a.as_slice());
        }
        CVector::from_vec(out)
    }

    /// Inverse of [`flatten`](Self::flatten). Validates parity for real specs.
    pub fn unflatten(spec: &RepresentationSpec, x: &CVector) -> Result<Self> {
        if x.len() != spec.dim() {
            return Err(structure(format!("flat vector has length {}, spec needs {}", x.len(), spec.dim())));
        }
        let matrices = spec
            .blocks()
            .iter()
            .zip(spec.offsets())
            .map(|(b, o)| CMatrix::from_column_slice(b.dim, b.multiplicity, &x.as_slice()[o..o + b.len()]))
            .collect();
        BlockSignal::new(spec.clone(), matrices)
    }

    /// Like [`unflatten`](Self::unflatten) but first projects onto the
    /// parity constraints, for vectors that satisfy them only up to rounding.
    pub fn unflatten_projected(spec: &RepresentationSpec, x: &CVector) -> Result<Self> {
        let mut x = x.clone();
        spec.project_flat(&mut x);
        Self::unflatten(spec, &x)
    }

    pub fn scale(&self, s: C64) -> BlockSignal {
        let matrices = self.matrices.iter().map(|a| a * s).collect();
        BlockSignal { spec: self.spec.clone(), matrices }
    }
}

/// Draws a random signal.
///
/// Without `sparsity` every admissible coefficient is standard Gaussian
/// (complex circular for complex specs, real times the parity unit for real
/// specs). With `Some((k, basis))` a uniformly random support of size `k` is
/// drawn and Gaussian coefficients are placed on it in `basis`.
pub fn random_signal<R: Rng + ?Sized>(
    spec: &RepresentationSpec,
    sparsity: Option<(usize, &SparseBasis)>,
    rng: &mut R,
) -> Result<BlockSignal> {
    match sparsity {
        None => {
            let real = spec.is_real();
            let matrices = spec
                .blocks()
                .iter()
                .map(|b| {
                    CMatrix::from_fn(b.dim, b.multiplicity, |_, _| {
                        if real {
                            b.parity.unit() * gaussian(rng)
                        } else {
                            complex_gaussian(rng)
                        }
                    })
                })
                .collect();
            BlockSignal::new(spec.clone(), matrices)
        }
        Some((k, basis)) => {
            basis.check_spec(spec)?;
            let n = spec.dim();
            if k == 0 || k > n {
                return Err(validation(format!("sparsity {k} outside 1..={n}")));
            }
            let support = rand::seq::index::sample(rng, n, k).into_vec();
            let mut c = CVector::zeros(n);
            let mut sorted = support;
            sorted.sort_unstable();
            for i in sorted {
                c[i] = match basis.coefficients() {
                    Coefficients::Real => C64::new(gaussian(rng), 0.0),
                    Coefficients::Complex => complex_gaussian(rng),
                };
            }
            BlockSignal::unflatten_projected(spec, &basis.synthesize(&c))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn flatten_layout() {
        let spec = RepresentationSpec::new(
            vec![IsotypicBlock::new(1, 2, Parity::None), IsotypicBlock::new(2, 1, Parity::None)],
            Field::Complex,
        )
        .unwrap();
        let f = BlockSignal::new(
            spec.clone(),
            vec![CMatrix::from_row_slice(1, 2, &[c(5.0), c(6.0)]), CMatrix::from_row_slice(2, 1, &[c(1.0), c(2.0)])],
        )
        .unwrap();
        let x = f.flatten();
        assert_eq!(x.as_slice(), &[c(5.0), c(6.0), c(1.0), c(2.0)]);
        assert_eq!(BlockSignal::unflatten(&spec, &x).unwrap(), f);
    }

    #[test]
    fn column_major_within_block() {
        let spec = RepresentationSpec::uniform(1, 2, 2).unwrap();
        let a = CMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(3.0), c(4.0)]);
        let f = BlockSignal::new(spec, vec![a]).unwrap();
        assert_eq!(f.flatten().as_slice(), &[c(1.0), c(3.0), c(2.0), c(4.0)]);
    }

    #[test]
    fn shape_mismatch_is_structural() {
        let spec = RepresentationSpec::uniform(2, 1, 1).unwrap();
        assert!(matches!(
            BlockSignal::new(spec.clone(), vec![CMatrix::zeros(1, 1)]),
            Err(crate::MraError::Structure(_))
        ));
        assert!(matches!(
            BlockSignal::unflatten(&spec, &CVector::zeros(3)),
            Err(crate::MraError::Structure(_))
        ));
    }

    #[test]
    fn parity_is_enforced_for_real_specs() {
        let spec = RepresentationSpec::new(
            vec![IsotypicBlock::new(1, 1, Parity::Even), IsotypicBlock::new(3, 1, Parity::Odd)],
            Field::RealConjugationInvariant,
        )
        .unwrap();
        let ok = BlockSignal::new(
            spec.clone(),
            vec![CMatrix::from_element(1, 1, c(2.0)), CMatrix::from_element(3, 1, C64::new(0.0, 1.0))],
        );
        assert!(ok.is_ok());
        let bad = BlockSignal::new(
            spec.clone(),
            vec![CMatrix::from_element(1, 1, c(2.0)), CMatrix::from_element(3, 1, c(1.0))],
        );
        assert!(matches!(bad, Err(crate::MraError::Validation(_))));
        let mut rng = seeded(4);
        let f = random_signal(&spec, None, &mut rng).unwrap();
        assert!(f.block(0)[(0, 0)].im == 0.0);
        assert!(f.block(1).iter().all(|z| z.re == 0.0));
    }

    #[test]
    fn random_signal_is_deterministic() {
        let spec = RepresentationSpec::uniform(3, 2, 2).unwrap();
        let a = random_signal(&spec, None, &mut seeded(9)).unwrap();
        let b = random_signal(&spec, None, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sparse_signal_has_exact_support_size() {
        let spec = RepresentationSpec::uniform(5, 1, 4).unwrap();
        let mut rng = seeded(1);
        let basis = SparseBasis::random(&spec, &mut rng);
        let f = random_signal(&spec, Some((5, &basis)), &mut rng).unwrap();
        let coeffs = basis.analyze(&f.flatten());
        let zeros = coeffs.iter().filter(|z| z.norm() < 1e-12).count();
        assert_eq!(zeros, 15);

        let dense = random_signal(&spec, Some((20, &basis)), &mut rng).unwrap();
        assert!(basis.analyze(&dense.flatten()).iter().all(|z| z.norm() > 1e-12));
        assert!(random_signal(&spec, Some((21, &basis)), &mut rng).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = RepresentationSpec::new(
            vec![IsotypicBlock::new(1, 3, Parity::Even), IsotypicBlock::new(3, 3, Parity::Odd)],
            Field::RealConjugationInvariant,
        )
        .unwrap();
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(
            s,
            r#"{"blocks":[{"dim":1,"mult":3,"parity":"even"},{"dim":3,"mult":3,"parity":"odd"}],"field":"real"}"#
        );
        let back: RepresentationSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
        assert!(serde_json::from_str::<RepresentationSpec>(r#"{"blocks":[{"dim":0,"mult":1,"parity":"none"}],"field":"complex"}"#).is_err());
    }
}
