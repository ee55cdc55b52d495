//! Population and empirical second moments.

mod empirical;

pub use empirical::{accumulate_moment, debias, empirical_second_moment, ObservationBatch, CHUNK};

use crate::error::{validation, Result};
use crate::linalg::{hermitian_eigen, is_hermitian, CMatrix};
use crate::rep::{apply_ambiguity, random_ambiguity, BlockSignal, RepresentationSpec};
use crate::rng::{stream_rng, streams};
use crate::C64;

/// Relative tolerance for the Hermitian and PSD checks on stored grams.
pub const GRAM_TOL: f64 = 1e-10;

/// Per-block Gram matrices `G_ℓ = A_ℓ* A_ℓ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMoment {
    spec: RepresentationSpec,
    grams: Vec<CMatrix>,
}

impl GramMoment {
    /// Checks shapes, Hermitian symmetry and positive semidefiniteness.
    pub fn new(spec: RepresentationSpec, grams: Vec<CMatrix>) -> Result<Self> {
        if grams.len() != spec.num_blocks() {
            return Err(validation(format!("expected {} grams, got {}", spec.num_blocks(), grams.len())));
        }
        for (l, (b, g)) in spec.blocks().iter().zip(&grams).enumerate() {
            if g.shape() != (b.multiplicity, b.multiplicity) {
                return Err(validation(format!("gram {l} must be {0}x{0}", b.multiplicity)));
            }
            if !is_hermitian(g, GRAM_TOL) {
                return Err(validation(format!("gram {l} is not Hermitian")));
            }
            let (vals, _) = hermitian_eigen(g);
            let floor = -GRAM_TOL * g.norm();
            if vals.last().is_some_and(|&v| v < floor) {
                return Err(validation(format!("gram {l} is not positive semidefinite")));
            }
        }
        Ok(GramMoment { spec, grams })
    }

    /// Skips the PSD check, for noisy estimates that are only approximately
    /// moments. Shapes are still checked.
    pub fn new_estimate(spec: RepresentationSpec, grams: Vec<CMatrix>) -> Result<Self> {
        if grams.len() != spec.num_blocks()
            || spec.blocks().iter().zip(&grams).any(|(b, g)| g.shape() != (b.multiplicity, b.multiplicity))
        {
            return Err(validation("gram shapes do not match spec"));
        }
        Ok(GramMoment { spec, grams })
    }

    pub fn zeros(spec: &RepresentationSpec) -> Self {
        let grams = spec.blocks().iter().map(|b| CMatrix::zeros(b.multiplicity, b.multiplicity)).collect();
        GramMoment { spec: spec.clone(), grams }
    }

    pub fn spec(&self) -> &RepresentationSpec {
        &self.spec
    }

    pub fn grams(&self) -> &[CMatrix] {
        &self.grams
    }

    pub fn gram(&self, l: usize) -> &CMatrix {
        &self.grams[l]
    }

    /// Number of real parameters in the Gram list: `R²` per complex block,
    /// `R(R+1)/2` per real one.
    pub fn real_parameter_count(&self) -> usize {
        let real = self.spec.is_real();
        self.spec
            .blocks()
            .iter()
            .map(|b| {
                let r = b.multiplicity;
                if real {
                    r * (r + 1) / 2
                } else {
                    r * r
                }
            })
            .sum()
    }
}

pub fn population_gram(f: &BlockSignal) -> GramMoment {
    let grams = f.matrices().iter().map(|a| a.adjoint() * a).collect();
    GramMoment { spec: f.spec().clone(), grams }
}

/// `sqrt(Σ_ℓ ||G_ℓ^a - G_ℓ^b||_F²)`.
pub fn gram_distance(a: &GramMoment, b: &GramMoment) -> Result<f64> {
    a.spec.check_same(&b.spec)?;
    Ok(a.grams.iter().zip(&b.grams).map(|(x, y)| (x - y).norm_squared()).sum::<f64>().sqrt())
}

/// Largest Gram deviation over `trials` random ambiguity elements.
pub fn invariance_check(f: &BlockSignal, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(validation("trials must be >= 1"));
    }
    let reference = population_gram(f);
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let mut rng = stream_rng(seed, streams::AMBIGUITY, t as u64);
        let h = random_ambiguity(f.spec(), &mut rng);
        let moved = apply_ambiguity(&h, f)?;
        worst = worst.max(gram_distance(&population_gram(&moved), &reference)?);
    }
    Ok(worst)
}

/// Flat distance after the best global phase (complex specs) or sign (real
/// specs) is applied to `b`.
pub fn signal_distance_up_to_phase(a: &BlockSignal, b: &BlockSignal) -> Result<f64> {
    a.spec().check_same(b.spec())?;
    let x = a.flatten();
    let y = b.flatten();
    if a.spec().is_real() {
        return Ok((&x - &y).norm().min((&x + &y).norm()));
    }
    let inner = y.dotc(&x);
    let phase = if inner.norm() > 0.0 { inner / inner.norm() } else { C64::new(1.0, 0.0) };
    Ok((&x - &y * phase).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rep::{random_signal, AmbiguityElement, Field, IsotypicBlock, Parity};
    use crate::rng::seeded;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn simple_grams() {
        let spec = RepresentationSpec::uniform(1, 3, 1).unwrap();
        let mut a = CMatrix::zeros(3, 1);
        a[(0, 0)] = c(1.0);
        let f = BlockSignal::new(spec, vec![a]).unwrap();
        assert_eq!(population_gram(&f).gram(0), &CMatrix::from_element(1, 1, c(1.0)));

        let spec = RepresentationSpec::uniform(1, 3, 2).unwrap();
        let mut a = CMatrix::zeros(3, 2);
        a[(0, 0)] = c(1.0);
        a[(1, 1)] = c(1.0);
        let f = BlockSignal::new(spec, vec![a]).unwrap();
        assert_eq!(population_gram(&f).gram(0), &CMatrix::identity(2, 2));
    }

    #[test]
    fn gram_validation() {
        let spec = RepresentationSpec::uniform(1, 2, 2).unwrap();
        let not_psd = CMatrix::from_diagonal(&crate::linalg::CVector::from_vec(vec![c(1.0), c(-1.0)]));
        assert!(GramMoment::new(spec.clone(), vec![not_psd]).is_err());
        let mut not_herm = CMatrix::identity(2, 2);
        not_herm[(0, 1)] = c(0.5);
        assert!(GramMoment::new(spec.clone(), vec![not_herm]).is_err());
        assert!(GramMoment::new(spec, vec![CMatrix::identity(2, 2)]).is_ok());
    }

    #[test]
    fn distance_basics() {
        let spec = RepresentationSpec::uniform(2, 2, 3).unwrap();
        let f = random_signal(&spec, None, &mut seeded(1)).unwrap();
        let g = population_gram(&f);
        assert_eq!(gram_distance(&g, &g).unwrap(), 0.0);
        let z = GramMoment::zeros(&spec);
        let expected = g.grams().iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
        assert!((gram_distance(&g, &z).unwrap() - expected).abs() < 1e-12);
        let other = GramMoment::zeros(&RepresentationSpec::uniform(2, 2, 2).unwrap());
        assert!(gram_distance(&g, &other).is_err());
    }

    #[test]
    fn invariance_and_negative_control() {
        let spec = RepresentationSpec::new(
            vec![IsotypicBlock::new(1, 2, Parity::Even), IsotypicBlock::new(3, 2, Parity::Odd)],
            Field::RealConjugationInvariant,
        )
        .unwrap();
        let f = random_signal(&spec, None, &mut seeded(6)).unwrap();
        assert!(invariance_check(&f, 100, 3).unwrap() < 1e-10);

        let mut factors: Vec<CMatrix> = spec.blocks().iter().map(|b| CMatrix::identity(b.dim, b.dim)).collect();
        factors[1][(0, 0)] = c(1.1);
        let h = AmbiguityElement::from_factors_unchecked(spec.clone(), factors).unwrap();
        let moved = crate::rep::apply_unchecked(&h, &f);
        let dev = gram_distance(&population_gram(&moved), &population_gram(&f)).unwrap();
        assert!(dev > 1e-3);
    }

    #[test]
    fn phase_distance() {
        let spec = RepresentationSpec::uniform(3, 1, 2).unwrap();
        let mut rng = seeded(2);
        let a = random_signal(&spec, None, &mut rng).unwrap();
        let b = a.scale(C64::from_polar(1.0, std::f64::consts::PI / 3.0));
        assert!(signal_distance_up_to_phase(&a, &b).unwrap() < 1e-14 * a.norm().max(1.0) * 10.0);

        let spec = RepresentationSpec::new(vec![IsotypicBlock::new(2, 1, Parity::Even)], Field::RealConjugationInvariant)
            .unwrap();
        let a = random_signal(&spec, None, &mut rng).unwrap();
        assert_eq!(signal_distance_up_to_phase(&a, &a.scale(c(-1.0))).unwrap(), 0.0);

        let spec = RepresentationSpec::uniform(1, 2, 1).unwrap();
        let e0 = BlockSignal::new(spec.clone(), vec![CMatrix::from_column_slice(2, 1, &[c(1.0), c(0.0)])]).unwrap();
        let e1 = BlockSignal::new(spec, vec![CMatrix::from_column_slice(2, 1, &[c(0.0), C64::new(0.0, 1.0)])]).unwrap();
        assert!((signal_distance_up_to_phase(&e0, &e1).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }
}
