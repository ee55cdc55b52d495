use rand::Rng;

use super::{BlockSignal, RepresentationSpec};
use crate::error::{structure, validation, Result};
use crate::linalg::{haar_orthogonal, haar_unitary, unitarity_defect, CMatrix};

/// Tolerance on `||U*U - I||_F` for ambiguity factors.
pub const UNITARY_TOL: f64 = 1e-12;

/// An element of `Π_ℓ U(N_ℓ)` (or `Π_ℓ O(N_ℓ)` for real specs).
#[derive(Clone, Debug, PartialEq)]
pub struct AmbiguityElement {
    spec: RepresentationSpec,
    factors: Vec<CMatrix>,
}

impl AmbiguityElement {
    /// Checks shapes, unitarity and, for real specs, that every factor is real.
    pub fn new(spec: RepresentationSpec, factors: Vec<CMatrix>) -> Result<Self> {
        let h = Self::from_factors_unchecked(spec, factors)?;
        h.validate()?;
        Ok(h)
    }

    /// Checks shapes only. Used for negative controls in tests.
    pub fn from_factors_unchecked(spec: RepresentationSpec, factors: Vec<CMatrix>) -> Result<Self> {
        if factors.len() != spec.num_blocks() {
            return Err(structure(format!("expected {} factors, got {}", spec.num_blocks(), factors.len())));
        }
        for (l, (b, u)) in spec.blocks().iter().zip(&factors).enumerate() {
            if u.shape() != (b.dim, b.dim) {
                return Err(structure(format!("factor {l} must be {0}x{0}", b.dim)));
            }
        }
        Ok(AmbiguityElement { spec, factors })
    }

    pub fn identity(spec: &RepresentationSpec) -> Self {
        let factors = spec.blocks().iter().map(|b| CMatrix::identity(b.dim, b.dim)).collect();
        AmbiguityElement { spec: spec.clone(), factors }
    }

    pub fn spec(&self) -> &RepresentationSpec {
        &self.spec
    }

    pub fn factors(&self) -> &[CMatrix] {
        &self.factors
    }

    pub fn validate(&self) -> Result<()> {
        for (l, u) in self.factors.iter().enumerate() {
            let defect = unitarity_defect(u);
            if defect > UNITARY_TOL * (u.nrows() as f64).sqrt().max(1.0) {
                return Err(validation(format!("factor {l} is not unitary (defect {defect:.3e})")));
            }
            if self.spec.is_real() && u.iter().any(|z| z.im.abs() > UNITARY_TOL) {
                return Err(validation(format!("factor {l} is not real orthogonal")));
            }
        }
        Ok(())
    }

    /// `self * other`, acting as `other` first.
    pub fn compose(&self, other: &AmbiguityElement) -> Result<Self> {
        self.spec.check_same(&other.spec)?;
        let factors = self.factors.iter().zip(&other.factors).map(|(a, b)| a * b).collect();
        Ok(AmbiguityElement { spec: self.spec.clone(), factors })
    }
}

/// Block `ℓ` of the result is `U_ℓ A_ℓ`.
pub fn apply_ambiguity(h: &AmbiguityElement, f: &BlockSignal) -> Result<BlockSignal> {
    h.spec.check_same(f.spec())?;
    h.validate()?;
    Ok(apply_unchecked(h, f))
}

pub(crate) fn apply_unchecked(h: &AmbiguityElement, f: &BlockSignal) -> BlockSignal {
    let matrices = h.factors.iter().zip(f.matrices()).map(|(u, a)| u * a).collect();
    BlockSignal::new_unchecked(f.spec().clone(), matrices)
}

/// Haar-random element: unitary factors for complex specs, orthogonal for real.
pub fn random_ambiguity<R: Rng + ?Sized>(spec: &RepresentationSpec, rng: &mut R) -> AmbiguityElement {
    let real = spec.is_real();
    let factors = spec
        .blocks()
        .iter()
        .map(|b| if real { haar_orthogonal(b.dim, rng) } else { haar_unitary(b.dim, rng) })
        .collect();
    AmbiguityElement { spec: spec.clone(), factors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rep::{random_signal, Field, IsotypicBlock, Parity};
    use crate::rng::seeded;
    use crate::C64;

    #[test]
    fn identity_leaves_signal_unchanged() {
        let spec = RepresentationSpec::uniform(3, 2, 3).unwrap();
        let f = random_signal(&spec, None, &mut seeded(2)).unwrap();
        assert_eq!(apply_ambiguity(&AmbiguityElement::identity(&spec), &f).unwrap(), f);
    }

    #[test]
    fn phase_on_one_dimensional_block() {
        let spec = RepresentationSpec::uniform(1, 1, 1).unwrap();
        let alpha = 0.7_f64;
        let phase = C64::from_polar(1.0, alpha);
        let h = AmbiguityElement::new(spec.clone(), vec![CMatrix::from_element(1, 1, phase)]).unwrap();
        let f = BlockSignal::new(spec, vec![CMatrix::from_element(1, 1, C64::new(1.0, 0.0))]).unwrap();
        let g = apply_ambiguity(&h, &f).unwrap();
        assert!((g.block(0)[(0, 0)] - phase).norm() < 1e-15);
    }

    #[test]
    fn non_unitary_factor_is_rejected() {
        let spec = RepresentationSpec::uniform(1, 2, 1).unwrap();
        let u = CMatrix::identity(2, 2) * C64::new(1.01, 0.0);
        assert!(AmbiguityElement::new(spec, vec![u]).is_err());
    }

    #[test]
    fn real_specs_get_orthogonal_factors_and_keep_parity() {
        let spec = RepresentationSpec::new(
            vec![IsotypicBlock::new(3, 2, Parity::Odd), IsotypicBlock::new(5, 4, Parity::Even)],
            Field::RealConjugationInvariant,
        )
        .unwrap();
        let mut rng = seeded(8);
        let f = random_signal(&spec, None, &mut rng).unwrap();
        for _ in 0..10 {
            let h = random_ambiguity(&spec, &mut rng);
            assert!(h.factors().iter().all(|u| u.iter().all(|z| z.im == 0.0)));
            // BlockSignal::new re-validates parity.
            let g = apply_ambiguity(&h, &f).unwrap();
            assert!((g.norm() - f.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn one_dimensional_phases_cover_the_circle() {
        let spec = RepresentationSpec::uniform(1, 1, 1).unwrap();
        let mut rng = seeded(3);
        let mut bins = [0usize; 4];
        let n = 4000;
        for _ in 0..n {
            let z = random_ambiguity(&spec, &mut rng).factors()[0][(0, 0)];
            assert!((z.norm() - 1.0).abs() < 1e-12);
            let q = ((z.arg() + std::f64::consts::PI) / (std::f64::consts::FRAC_PI_2)) as usize;
            bins[q.min(3)] += 1;
        }
        for b in bins {
            assert!((b as f64 / n as f64 - 0.25).abs() < 0.03);
        }
    }
}
