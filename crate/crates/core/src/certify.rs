//! Numerical certificates for sparse identifiability.
//!
//! For a support `S` the question is how `L_f`, the linear span of the
//! ambiguity orbit of `f`, meets `L_S`, the span of the basis vectors
//! indexed by `S`. Unique recovery needs the intersection to be the line
//! through `f` when `S` is the support of `f`, and zero for every other
//! support of the same size. Dimensions are read from principal angles.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{validation, Result};
use crate::linalg::{principal_sines, CMatrix};
use crate::rep::{orbit_span_basis, random_signal, BlockSignal, RepresentationSpec, SparseBasis};
use crate::rng::{stream_rng, streams};

/// Directions with `cos θ > 1 - COS_TOL` count as shared.
pub const COS_TOL: f64 = 1e-8;

/// Smallest separation between shared and non-shared sines for a rank
/// decision to be trusted.
pub const GAP_MIN: f64 = 1e-4;

/// Sine threshold equivalent to `cos θ > 1 - COS_TOL`.
pub fn sine_threshold() -> f64 {
    (1.0 - (1.0 - COS_TOL).powi(2)).sqrt()
}

/// Dimension of `L_f ∩ L_S` with the margin of the decision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Intersection {
    pub dimension: usize,
    /// Distance between the largest sine counted as shared and the
    /// smallest one that was not (0 and 1 stand in at the ends).
    pub gap: f64,
}

/// Intersection of an orthonormal span with the basis columns in `support`.
pub fn intersect_with_span(span: &CMatrix, basis: &SparseBasis, support: &[usize]) -> Intersection {
    let sines = principal_sines(span, &basis.columns(support));
    classify(&sines)
}

fn classify(sines: &[f64]) -> Intersection {
    let t = sine_threshold();
    let dimension = sines.iter().filter(|&&s| s < t).count();
    let below = if dimension == 0 { 0.0 } else { sines[dimension - 1] };
    let above = sines.get(dimension).copied().unwrap_or(1.0);
    Intersection { dimension, gap: above - below }
}

/// `dim(L_f ∩ L_S)`.
pub fn intersect_span_with_support(f: &BlockSignal, basis: &SparseBasis, support: &[usize]) -> Result<usize> {
    Ok(intersection_detail(f, basis, support)?.dimension)
}

pub fn intersection_detail(f: &BlockSignal, basis: &SparseBasis, support: &[usize]) -> Result<Intersection> {
    basis.check_spec(f.spec())?;
    let n = basis.dim();
    if support.len() > n || support.iter().any(|&i| i >= n) {
        return Err(validation(format!("support must be a subset of 0..{n}")));
    }
    Ok(intersect_with_span(&orbit_span_basis(f), basis, support))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// CLI exit code: 0 pass, 2 fail, 3 inconclusive.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 2,
            Verdict::Inconclusive => 3,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub support: Vec<usize>,
    pub own: Intersection,
    /// `None` when no other support of the same size exists (`K = N`).
    pub cross_support: Option<Vec<usize>>,
    pub cross: Option<Intersection>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub spec: RepresentationSpec,
    #[serde(skip)]
    pub basis: SparseBasis,
    pub k: usize,
    pub seed: u64,
    pub trials: Vec<TrialRecord>,
    /// Own-support intersections are all lines.
    pub condition1_pass: bool,
    /// Cross-support intersections are all trivial.
    pub condition2_pass: bool,
    pub min_gap: f64,
    pub verdict: Verdict,
}

impl Certificate {
    pub fn supports_tested(&self) -> Vec<(Vec<usize>, Option<Vec<usize>>)> {
        self.trials.iter().map(|t| (t.support.clone(), t.cross_support.clone())).collect()
    }
}

fn random_support<R: rand::Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut s = rand::seq::index::sample(rng, n, k).into_vec();
    s.sort_unstable();
    s
}

/// Samples `trials` supports with a random `k`-sparse signal on each and
/// checks both intersection conditions. Trial `t` draws from the stream
/// `(seed, TRIAL, t)`.
pub fn certify_basis(
    spec: &RepresentationSpec,
    basis: &SparseBasis,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<Certificate> {
    basis.check_spec(spec)?;
    let n = spec.dim();
    if k == 0 || k > n {
        return Err(validation(format!("K = {k} outside 1..={n}")));
    }
    if trials == 0 {
        return Err(validation("trials must be >= 1"));
    }
    let records: Vec<TrialRecord> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<TrialRecord> {
            let mut rng = stream_rng(seed, streams::TRIAL, t as u64);
            let f = random_signal(spec, Some((k, basis)), &mut rng)?;
            let support = basis.threshold(&f.flatten(), k).support;
            let span = orbit_span_basis(&f);
            let own = intersect_with_span(&span, basis, &support);
            let cross_support = (k < n).then(|| loop {
                let s = random_support(n, k, &mut rng);
                if s != support {
                    break s;
                }
            });
            let cross = cross_support.as_ref().map(|s| intersect_with_span(&span, basis, s));
            Ok(TrialRecord { trial: t, support, own, cross_support, cross })
        })
        .collect::<Result<_>>()?;

    let condition1_pass = records.iter().all(|r| r.own.dimension == 1);
    let condition2_pass = records.iter().all(|r| r.cross.is_none_or(|c| c.dimension == 0));
    let decisions: Vec<(bool, f64)> = records
        .iter()
        .flat_map(|r| {
            let own = (r.own.dimension == 1, r.own.gap);
            let cross = r.cross.map(|c| (c.dimension == 0, c.gap));
            std::iter::once(own).chain(cross)
        })
        .collect();
    let min_gap = decisions.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
    let verdict = if decisions.iter().any(|&(ok, gap)| !ok && gap > GAP_MIN) {
        Verdict::Fail
    } else if min_gap <= GAP_MIN {
        Verdict::Inconclusive
    } else if condition1_pass && condition2_pass {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(Certificate {
        spec: spec.clone(),
        basis: basis.clone(),
        k,
        seed,
        trials: records,
        condition1_pass,
        condition2_pass,
        min_gap,
        verdict,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSummary {
    pub certificates: Vec<Certificate>,
    /// Largest `K` such that every `K' <= K` in the sweep passed.
    pub largest_passing: Option<usize>,
}

/// One certificate per `K`; every `K` uses the same seed.
pub fn sweep_k(
    spec: &RepresentationSpec,
    basis: &SparseBasis,
    ks: &[usize],
    trials: usize,
    seed: u64,
) -> Result<SweepSummary> {
    let mut certificates = Vec::with_capacity(ks.len());
    for &k in ks {
        certificates.push(certify_basis(spec, basis, k, trials, seed)?);
    }
    let mut order: Vec<&Certificate> = certificates.iter().collect();
    order.sort_by_key(|c| c.k);
    let largest_passing = order.iter().take_while(|c| c.verdict == Verdict::Pass).last().map(|c| c.k);
    Ok(SweepSummary { certificates, largest_passing })
}
