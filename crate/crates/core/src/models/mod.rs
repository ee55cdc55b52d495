//! Concrete models: group actions, observation simulators and the
//! model-specific parameterization of the second moment.

pub mod harmonics;
pub mod legendre;
pub mod so3;
pub mod wigner;

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::linalg::{hermitian_part, CMatrix, CVector};
use crate::moments::{accumulate_moment, GramMoment, ObservationBatch};
use crate::rep::{BlockSignal, Field, IsotypicBlock, Parity, RepresentationSpec};
use crate::rng::{complex_gaussian, stream_rng, streams};
use crate::C64;

use legendre::{legendre_invert, ProjectedMoment, CALIBRATION};
use so3::Quaternion;

/// Model name and parameters, in the shape used by config files:
/// `{"model":"cryo_em","L":4,"R":9,"P":10}`.
///
/// For the image models `L` is the angular bandlimit `L'`; the spec then has
/// `2L'+1` blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum ModelKind {
    #[serde(rename = "cyclic")]
    Cyclic {
        #[serde(rename = "N")]
        n: usize,
    },
    #[serde(rename = "dihedral")]
    Dihedral {
        #[serde(rename = "N")]
        n: usize,
    },
    #[serde(rename = "rotated_images")]
    RotatedImages {
        #[serde(rename = "L")]
        bandlimit: usize,
        #[serde(rename = "R")]
        shells: usize,
    },
    #[serde(rename = "tomography_2d")]
    Tomography2d {
        #[serde(rename = "L")]
        bandlimit: usize,
        #[serde(rename = "R")]
        shells: usize,
    },
    #[serde(rename = "cryo_em")]
    CryoEm {
        #[serde(rename = "L")]
        bandlimit: usize,
        #[serde(rename = "R")]
        shells: usize,
        #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
        grid: Option<usize>,
    },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Cyclic { .. } => "cyclic",
            ModelKind::Dihedral { .. } => "dihedral",
            ModelKind::RotatedImages { .. } => "rotated_images",
            ModelKind::Tomography2d { .. } => "tomography_2d",
            ModelKind::CryoEm { .. } => "cryo_em",
        }
    }
}

/// A group element drawn from the model's Haar measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupElement {
    /// `ω = exp(2πi s / N)`, acting on frequency `k` by `ω^k`.
    Root(usize),
    /// Rotation by `shift` after an optional reflection.
    Dihedral { shift: usize, reflect: bool },
    /// In-plane rotation angle.
    Angle(f64),
    Rotation(Quaternion),
}

#[derive(Clone, Debug)]
struct CryoTables {
    grid: usize,
    /// Per degree, the `P x (2ℓ+1)` map from real-harmonic coefficients to
    /// DFT coefficients of the equatorial slice.
    slice: Vec<CMatrix>,
    /// Per degree, `S_ℓ S_ℓ* / (2ℓ+1)`.
    kernels: Vec<CMatrix>,
}

#[derive(Clone, Debug)]
pub struct ModelInstance {
    kind: ModelKind,
    spec: RepresentationSpec,
    observation_dim: usize,
    cryo: Option<CryoTables>,
}

pub(crate) fn cryo_spec(bandlimit: usize, shells: usize) -> Result<RepresentationSpec> {
    let blocks = (0..=bandlimit)
        .map(|l| IsotypicBlock::new(2 * l + 1, shells, if l % 2 == 0 { Parity::Even } else { Parity::Odd }))
        .collect();
    RepresentationSpec::new(blocks, Field::RealConjugationInvariant)
}

/// Frequencies carried by each dihedral block: `[0]`, `[ℓ, N-ℓ]`, ..., and
/// `[N/2]` when `N` is even.
fn dihedral_frequencies(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0]];
    let mut l = 1;
    while 2 * l < n {
        out.push(vec![l, n - l]);
        l += 1;
    }
    if n % 2 == 0 && n >= 2 {
        out.push(vec![n / 2]);
    }
    out
}

/// Signed frequency of DFT index `k` on a grid of `p` points.
fn signed_frequency(k: usize, p: usize) -> f64 {
    if 2 * k <= p {
        k as f64
    } else {
        k as f64 - p as f64
    }
}

pub fn build_model(kind: ModelKind) -> Result<ModelInstance> {
    let positive = |v: usize, what: &str| {
        if v == 0 {
            Err(validation(format!("{what} must be positive")))
        } else {
            Ok(())
        }
    };
    let (spec, observation_dim, cryo) = match &kind {
        ModelKind::Cyclic { n } => {
            positive(*n, "N")?;
            (RepresentationSpec::uniform(*n, 1, 1)?, *n, None)
        }
        ModelKind::Dihedral { n } => {
            positive(*n, "N")?;
            let blocks =
                dihedral_frequencies(*n).iter().map(|f| IsotypicBlock::new(f.len(), 1, Parity::None)).collect();
            (RepresentationSpec::new(blocks, Field::Complex)?, *n, None)
        }
        ModelKind::RotatedImages { bandlimit, shells } => {
            positive(*shells, "R")?;
            let spec = RepresentationSpec::uniform(2 * bandlimit + 1, 1, *shells)?;
            let dim = spec.dim();
            (spec, dim, None)
        }
        ModelKind::Tomography2d { bandlimit, shells } => {
            positive(*shells, "R")?;
            (RepresentationSpec::uniform(2 * bandlimit + 1, 1, *shells)?, *shells, None)
        }
        ModelKind::CryoEm { bandlimit, shells, grid } => {
            positive(*shells, "R")?;
            let p = grid.unwrap_or(2 * bandlimit + 2);
            if p < 2 * bandlimit + 1 {
                return Err(validation(format!("grid P = {p} must be at least 2L+1 = {}", 2 * bandlimit + 1)));
            }
            let tables = cryo_tables(*bandlimit, p);
            (cryo_spec(*bandlimit, *shells)?, shells * p, Some(tables))
        }
    };
    Ok(ModelInstance { kind, spec, observation_dim, cryo })
}

fn cryo_tables(bandlimit: usize, p: usize) -> CryoTables {
    let samples: Vec<Vec<f64>> =
        (0..p).map(|j| harmonics::real_sh(bandlimit, PI / 2.0, 2.0 * PI * j as f64 / p as f64)).collect();
    let slice: Vec<CMatrix> = (0..=bandlimit)
        .map(|l| {
            let li = l as i64;
            CMatrix::from_fn(p, 2 * l + 1, |k, m| {
                let idx = harmonics::sh_index(l, m as i64 - li);
                let mut acc = C64::new(0.0, 0.0);
                for (j, y) in samples.iter().enumerate() {
                    let phase = -2.0 * PI * ((j * k) % p) as f64 / p as f64;
                    acc += C64::from_polar(y[idx], phase);
                }
                acc / p as f64
            })
        })
        .collect();
    let kernels = slice
        .iter()
        .enumerate()
        .map(|(l, s)| (s * s.adjoint()) / C64::new((2 * l + 1) as f64, 0.0))
        .collect();
    CryoTables { grid: p, slice, kernels }
}

impl ModelInstance {
    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn spec(&self) -> &RepresentationSpec {
        &self.spec
    }

    pub fn observation_dim(&self) -> usize {
        self.observation_dim
    }

    /// Azimuthal grid size of the cryo-EM model.
    pub fn grid(&self) -> Option<usize> {
        self.cryo.as_ref().map(|c| c.grid)
    }

    /// Spec of the Gram list recoverable from the model's observations.
    ///
    /// Equal to [`spec`](Self::spec) except for 2-D tomography, whose
    /// projected moment only determines the Gram of the stacked
    /// `(2L'+1) x R` coefficient matrix.
    pub fn moment_spec(&self) -> RepresentationSpec {
        match &self.kind {
            ModelKind::Tomography2d { bandlimit, shells } => RepresentationSpec::uniform(1, 2 * bandlimit + 1, *shells)
                .expect("positive tomography parameters"),
            _ => self.spec.clone(),
        }
    }

    /// The signal re-expressed in [`moment_spec`](Self::moment_spec).
    pub fn moment_signal(&self, f: &BlockSignal) -> Result<BlockSignal> {
        self.spec.check_same(f.spec())?;
        match &self.kind {
            ModelKind::Tomography2d { .. } => {
                let rows = f.spec().num_blocks();
                let r = f.block(0).ncols();
                let stacked = CMatrix::from_fn(rows, r, |k, c| f.block(k)[(0, c)]);
                BlockSignal::new(self.moment_spec(), vec![stacked])
            }
            _ => Ok(f.clone()),
        }
    }

    pub fn identity(&self) -> GroupElement {
        match &self.kind {
            ModelKind::Cyclic { .. } => GroupElement::Root(0),
            ModelKind::Dihedral { .. } => GroupElement::Dihedral { shift: 0, reflect: false },
            ModelKind::RotatedImages { .. } | ModelKind::Tomography2d { .. } => GroupElement::Angle(0.0),
            ModelKind::CryoEm { .. } => GroupElement::Rotation(Quaternion::IDENTITY),
        }
    }

    pub fn sample_group<R: Rng + ?Sized>(&self, rng: &mut R) -> GroupElement {
        match &self.kind {
            ModelKind::Cyclic { n } => GroupElement::Root(rng.random_range(0..*n)),
            ModelKind::Dihedral { n } => {
                GroupElement::Dihedral { shift: rng.random_range(0..*n), reflect: rng.random_bool(0.5) }
            }
            ModelKind::RotatedImages { .. } | ModelKind::Tomography2d { .. } => {
                GroupElement::Angle(rng.random_range(0.0..2.0 * PI))
            }
            ModelKind::CryoEm { .. } => GroupElement::Rotation(Quaternion::random(rng)),
        }
    }

    /// `a * b`, acting as `b` first.
    pub fn compose(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        Ok(match (&self.kind, a, b) {
            (ModelKind::Cyclic { n }, GroupElement::Root(x), GroupElement::Root(y)) => GroupElement::Root((x + y) % n),
            (
                ModelKind::Dihedral { n },
                GroupElement::Dihedral { shift: s2, reflect: b2 },
                GroupElement::Dihedral { shift: s1, reflect: b1 },
            ) => {
                // ρ^{s2} σ^{b2} ρ^{s1} σ^{b1} = ρ^{s2 ± s1} σ^{b1 xor b2}
                let s1 = if *b2 { (n - s1 % n) % n } else { *s1 };
                GroupElement::Dihedral { shift: (s2 + s1) % n, reflect: b1 ^ b2 }
            }
            (
                ModelKind::RotatedImages { .. } | ModelKind::Tomography2d { .. },
                GroupElement::Angle(x),
                GroupElement::Angle(y),
            ) => GroupElement::Angle(x + y),
            (ModelKind::CryoEm { .. }, GroupElement::Rotation(p), GroupElement::Rotation(q)) => {
                GroupElement::Rotation(p.mul(q))
            }
            _ => return Err(validation("group element does not belong to this model")),
        })
    }

    pub fn act(&self, g: &GroupElement, f: &BlockSignal) -> Result<BlockSignal> {
        self.spec.check_same(f.spec())?;
        let blocks = f.matrices();
        let matrices: Vec<CMatrix> = match (&self.kind, g) {
            (ModelKind::Cyclic { n }, GroupElement::Root(s)) => blocks
                .iter()
                .enumerate()
                .map(|(k, a)| a * C64::from_polar(1.0, 2.0 * PI * ((s * k) % n) as f64 / *n as f64))
                .collect(),
            (ModelKind::Dihedral { n }, GroupElement::Dihedral { shift, reflect }) => dihedral_frequencies(*n)
                .iter()
                .zip(blocks)
                .map(|(freqs, a)| {
                    let mut a = a.clone();
                    if *reflect && freqs.len() == 2 {
                        a.swap_rows(0, 1);
                    }
                    for (row, k) in freqs.iter().enumerate() {
                        let w = C64::from_polar(1.0, 2.0 * PI * ((shift * k) % n) as f64 / *n as f64);
                        a.row_mut(row).iter_mut().for_each(|z| *z *= w);
                    }
                    a
                })
                .collect(),
            (
                ModelKind::RotatedImages { bandlimit, .. } | ModelKind::Tomography2d { bandlimit, .. },
                GroupElement::Angle(alpha),
            ) => blocks
                .iter()
                .enumerate()
                .map(|(j, a)| {
                    let k = j as f64 - *bandlimit as f64;
                    a * C64::from_polar(1.0, -alpha * k)
                })
                .collect(),
            (ModelKind::CryoEm { bandlimit, .. }, GroupElement::Rotation(q)) => {
                let ds = wigner::wigner_real(*bandlimit, q);
                ds.iter().zip(blocks).map(|(d, a)| d.map(|v| C64::new(v, 0.0)) * a).collect()
            }
            _ => return Err(validation("group element does not belong to this model")),
        };
        // Orthogonal actions keep parity up to rounding; re-project so the
        // entrywise check stays exact.
        let spec = f.spec();
        let matrices = if spec.is_real() {
            matrices
                .into_iter()
                .zip(spec.blocks())
                .map(|(a, b)| a.map(|z| b.parity.project(z)))
                .collect()
        } else {
            matrices
        };
        BlockSignal::new(spec.clone(), matrices)
    }

    /// Noise-free observation of an already transformed signal.
    fn measure(&self, moved: &BlockSignal) -> CVector {
        match &self.kind {
            ModelKind::Tomography2d { shells, .. } => {
                CVector::from_fn(*shells, |r, _| moved.matrices().iter().map(|a| a[(0, r)]).sum())
            }
            ModelKind::CryoEm { shells, .. } => {
                let t = self.cryo.as_ref().expect("cryo tables");
                let mut out = CVector::zeros(shells * t.grid);
                for r in 0..*shells {
                    let mut acc = CVector::zeros(t.grid);
                    for (s, a) in t.slice.iter().zip(moved.matrices()) {
                        acc += s * a.column(r);
                    }
                    out.rows_mut(r * t.grid, t.grid).copy_from(&acc);
                }
                out
            }
            _ => moved.flatten(),
        }
    }

    /// `T(g·f) + ε` with circular complex noise, `E|ε_i|² = σ²`.
    pub fn observe<R: Rng + ?Sized>(
        &self,
        f: &BlockSignal,
        g: &GroupElement,
        sigma: f64,
        rng: &mut R,
    ) -> Result<CVector> {
        let mut y = self.measure(&self.act(g, f)?);
        if sigma > 0.0 {
            y.iter_mut().for_each(|z| *z += complex_gaussian(rng) * sigma);
        }
        Ok(y)
    }

    fn observe_indexed(&self, f: &BlockSignal, sigma: f64, seed: u64, i: usize) -> CVector {
        let mut rng = stream_rng(seed, streams::NOISE, i as u64);
        let g = self.sample_group(&mut rng);
        self.observe(f, &g, sigma, &mut rng).expect("signal spec checked by caller")
    }

    /// `n` observations; observation `i` draws its group element and noise
    /// from the stream `(seed, NOISE, i)`.
    pub fn simulate(&self, f: &BlockSignal, n: usize, sigma: f64, seed: u64) -> Result<ObservationBatch> {
        self.spec.check_same(f.spec())?;
        let dim = self.observation_dim;
        let mut data = vec![C64::new(0.0, 0.0); n * dim];
        data.par_chunks_mut(dim).enumerate().for_each(|(i, row)| {
            row.copy_from_slice(self.observe_indexed(f, sigma, seed, i).as_slice());
        });
        ObservationBatch::new(dim, data, sigma, seed)
    }

    /// Empirical second moment of [`simulate`](Self::simulate) without
    /// storing the batch. Bit-identical to computing it from the batch.
    pub fn simulate_moment(&self, f: &BlockSignal, n: usize, sigma: f64, seed: u64) -> Result<CMatrix> {
        self.spec.check_same(f.spec())?;
        accumulate_moment(n, self.observation_dim, |i, buf| {
            buf.copy_from_slice(self.observe_indexed(f, sigma, seed, i).as_slice())
        })
    }

    /// Exact `E[T(g·f) T(g·f)*]` over the Haar measure, noise excluded.
    pub fn population_moment(&self, f: &BlockSignal) -> Result<CMatrix> {
        self.spec.check_same(f.spec())?;
        let grams: Vec<CMatrix> = f.matrices().iter().map(|a| a.adjoint() * a).collect();
        let d = self.observation_dim;
        let mut m = CMatrix::zeros(d, d);
        match &self.kind {
            ModelKind::Tomography2d { .. } => {
                let stacked = self.moment_signal(f)?;
                let g = stacked.block(0).adjoint() * stacked.block(0);
                m = g.transpose();
            }
            ModelKind::CryoEm { shells, .. } => {
                let t = self.cryo.as_ref().expect("cryo tables");
                let p = t.grid;
                for r1 in 0..*shells {
                    for r2 in 0..*shells {
                        let mut acc = CMatrix::zeros(p, p);
                        for (g, k) in grams.iter().zip(&t.kernels) {
                            acc += k * g[(r2, r1)];
                        }
                        m.view_mut((r1 * p, r2 * p), (p, p)).copy_from(&acc);
                    }
                }
            }
            _ => {
                for ((b, g), off) in self.spec.blocks().iter().zip(&grams).zip(self.spec.offsets()) {
                    let nl = b.dim;
                    for i in 0..b.multiplicity {
                        for j in 0..b.multiplicity {
                            let v = g[(j, i)] / nl as f64;
                            for row in 0..nl {
                                m[(off + i * nl + row, off + j * nl + row)] = v;
                            }
                        }
                    }
                }
            }
        }
        Ok(m)
    }

    /// Least-squares Gram estimate from an observation-domain moment (already
    /// debiased). Returned over [`moment_spec`](Self::moment_spec); noisy
    /// inputs may give Grams that are not exactly PSD.
    pub fn project_to_grams(&self, moment: &CMatrix) -> Result<GramMoment> {
        let d = self.observation_dim;
        if moment.shape() != (d, d) {
            return Err(validation(format!(
                "moment is {}x{}, model observations have dimension {d}",
                moment.nrows(),
                moment.ncols()
            )));
        }
        match &self.kind {
            ModelKind::Tomography2d { .. } => {
                GramMoment::new_estimate(self.moment_spec(), vec![hermitian_part(&moment.transpose())])
            }
            ModelKind::CryoEm { bandlimit, .. } => legendre_invert(&self.projected_table(moment, bandlimit + 1)?, *bandlimit),
            _ => {
                let real = self.spec.is_real();
                let grams = self
                    .spec
                    .blocks()
                    .iter()
                    .zip(self.spec.offsets())
                    .map(|(b, off)| {
                        let nl = b.dim;
                        let g = CMatrix::from_fn(b.multiplicity, b.multiplicity, |j, i| {
                            (0..nl).map(|row| moment[(off + i * nl + row, off + j * nl + row)]).sum()
                        });
                        let g = hermitian_part(&g);
                        if real {
                            g.map(|z| C64::new(z.re, 0.0))
                        } else {
                            g
                        }
                    })
                    .collect();
                GramMoment::new_estimate(self.spec.clone(), grams)
            }
        }
    }

    /// Equatorial shell-pair moment `m²(u)`, `u = cos Δφ`, on `count`
    /// Gauss-Legendre nodes, read off the frequency-diagonal of a cryo-EM
    /// observation moment. Only the even part in `Δφ` is kept.
    pub fn projected_table(&self, moment: &CMatrix, count: usize) -> Result<ProjectedMoment> {
        let (ModelKind::CryoEm { shells, .. }, Some(t)) = (&self.kind, &self.cryo) else {
            return Err(validation("projected tables exist only for the cryo-EM model"));
        };
        let p = t.grid;
        if moment.shape() != (self.observation_dim, self.observation_dim) {
            return Err(validation("moment does not match the model's observation dimension"));
        }
        Ok(ProjectedMoment::sample(*shells, count, |r1, r2, u| {
            let dphi = u.clamp(-1.0, 1.0).acos();
            (0..p).map(|k| moment[(r1 * p + k, r2 * p + k)] * (signed_frequency(k, p) * dphi).cos()).sum()
        }))
    }

    /// Closed-form second-moment function on the model's domain.
    pub fn realize_moment_function(&self, f: &BlockSignal) -> Result<MomentFunction> {
        self.spec.check_same(f.spec())?;
        let grams: Vec<CMatrix> = f.matrices().iter().map(|a| a.adjoint() * a).collect();
        Ok(match &self.kind {
            ModelKind::Cyclic { n } => MomentFunction::Fourier {
                frequencies: (0..*n).map(|k| 2.0 * PI * k as f64 / *n as f64).collect(),
                coefficients: grams.iter().map(|g| g / C64::new(*n as f64, 0.0)).collect(),
            },
            ModelKind::Dihedral { n } => {
                let mut coefficients = vec![CMatrix::zeros(1, 1); *n];
                for (freqs, g) in dihedral_frequencies(*n).iter().zip(&grams) {
                    for &k in freqs {
                        coefficients[k] = g / C64::new((*n * freqs.len()) as f64, 0.0);
                    }
                }
                MomentFunction::Fourier {
                    frequencies: (0..*n).map(|k| 2.0 * PI * k as f64 / *n as f64).collect(),
                    coefficients,
                }
            }
            ModelKind::RotatedImages { bandlimit, .. } | ModelKind::Tomography2d { bandlimit, .. } => {
                MomentFunction::Fourier {
                    frequencies: (0..grams.len()).map(|j| j as f64 - *bandlimit as f64).collect(),
                    coefficients: grams.iter().map(|g| g.transpose()).collect(),
                }
            }
            ModelKind::CryoEm { .. } => MomentFunction::Legendre {
                coefficients: grams.iter().map(|g| g.transpose() / C64::new(CALIBRATION, 0.0)).collect(),
            },
        })
    }
}

/// Closed-form `m²[r1, r2](x1, x2)`.
#[derive(Clone, Debug)]
pub enum MomentFunction {
    /// `Σ_k C_k[r1, r2] exp(i ω_k (x1 - x2))`: positions for the discrete
    /// models, angles for the image models.
    Fourier { frequencies: Vec<f64>, coefficients: Vec<CMatrix> },
    /// `Σ_ℓ C_ℓ[r1, r2] P_ℓ(cos(φ1 - φ2))` for equatorial angles.
    Legendre { coefficients: Vec<CMatrix> },
}

impl MomentFunction {
    pub fn eval(&self, r1: usize, r2: usize, x1: f64, x2: f64) -> C64 {
        match self {
            MomentFunction::Fourier { frequencies, coefficients } => frequencies
                .iter()
                .zip(coefficients)
                .map(|(w, c)| c[(r1, r2)] * C64::from_polar(1.0, w * (x1 - x2)))
                .sum(),
            MomentFunction::Legendre { coefficients } => {
                let p = legendre::legendre_p(coefficients.len() - 1, (x1 - x2).cos());
                coefficients.iter().zip(&p).map(|(c, p)| c[(r1, r2)] * *p).sum()
            }
        }
    }

    /// Table over `(r1, r2, Δ)` with `x2 = 0`.
    pub fn table(&self, deltas: &[f64]) -> Vec<CMatrix> {
        let r = match self {
            MomentFunction::Fourier { coefficients, .. } | MomentFunction::Legendre { coefficients } => {
                coefficients[0].nrows()
            }
        };
        deltas.iter().map(|&d| CMatrix::from_fn(r, r, |a, b| self.eval(a, b, d, 0.0))).collect()
    }
}
