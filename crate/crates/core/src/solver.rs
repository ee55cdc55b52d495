//! Sparse recovery from a Gram list.
//!
//! The feasible set is the intersection of the ambiguity orbit of any
//! Gram-consistent signal with the set of `K`-sparse signals. [`recover`]
//! alternates between the two with relaxed reflections, an annealed
//! sparsity level and a final plain alternating-projection polish.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{validation, MraError, Result};
use crate::linalg::{hermitian_eigen, principal_sines, CMatrix, CVector};
use crate::moments::{gram_distance, population_gram, signal_distance_up_to_phase, GramMoment};
use crate::rep::{orbit_span_basis, random_ambiguity, AmbiguityElement, BlockSignal, Coefficients, RepresentationSpec, SparseBasis};
use crate::rng::{gaussian, stream_rng, streams};
use crate::C64;

/// Relative eigenvalue threshold for the rank of a Gram block.
pub const GRAM_RANK_TOL: f64 = 1e-10;

/// Limits for [`exact_oracle`].
pub const ORACLE_MAX_DIM: usize = 16;
pub const ORACLE_MAX_SUPPORTS: u64 = 10_000;

/// Sine below which [`exact_oracle`] counts a support as meeting the orbit
/// span. Much tighter than the certifier's threshold: with exact Grams a
/// genuine intersection sits at rounding level, while among thousands of
/// supports near the bound some miss by only `1e-5`.
pub const ORACLE_SINE_TOL: f64 = 1e-8;

fn eigen(g: &CMatrix, real: bool) -> (Vec<f64>, CMatrix) {
    if !real {
        return hermitian_eigen(g);
    }
    // Real specs have real symmetric Grams; a real eigenbasis keeps the
    // factor inside the parity constraints.
    let n = g.nrows();
    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (g[(i, j)].re + g[(j, i)].re));
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).expect("NaN eigenvalue").then(i.cmp(&j)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| C64::new(eig.eigenvectors[(r, order[c])], 0.0));
    (values, vectors)
}

fn factor(grams: &GramMoment, truncate: bool) -> Result<BlockSignal> {
    let spec = grams.spec();
    let real = spec.is_real();
    let mut blocks = Vec::with_capacity(spec.num_blocks());
    for (l, (b, g)) in spec.blocks().iter().zip(grams.grams()).enumerate() {
        let (vals, vecs) = eigen(g, real);
        let top = vals.first().copied().unwrap_or(0.0).max(0.0);
        let rank = vals.iter().filter(|&&v| v > GRAM_RANK_TOL * top).count();
        if rank > b.dim && !truncate {
            return Err(MraError::Infeasible { block: l, rank, dim: b.dim });
        }
        let unit = if real { b.parity.unit() } else { C64::new(1.0, 0.0) };
        let mut a = CMatrix::zeros(b.dim, b.multiplicity);
        for i in 0..rank.min(b.dim) {
            let s = vals[i].sqrt();
            for j in 0..b.multiplicity {
                a[(i, j)] = unit * vecs[(j, i)].conj() * s;
            }
        }
        blocks.push(a);
    }
    BlockSignal::new(spec.clone(), blocks)
}

/// A signal with the given Grams: `A_ℓ = Λ^{1/2} Q*` from the eigen
/// decomposition of each block. Fails with [`MraError::Infeasible`] when a
/// Gram has rank above `N_ℓ`.
pub fn factor_gram(grams: &GramMoment) -> Result<BlockSignal> {
    factor(grams, false)
}

/// Like [`factor_gram`] but keeps only the top `N_ℓ` eigenpairs, giving the
/// nearest feasible Gram list for noisy estimates.
pub fn factor_gram_truncated(grams: &GramMoment) -> Result<BlockSignal> {
    factor(grams, true)
}

/// Unitary (orthogonal for real specs) polar factor of `m`.
fn polar(m: &CMatrix, real: bool) -> CMatrix {
    let n = m.nrows();
    if n == 1 {
        let z = m[(0, 0)];
        let u = match (real, z.norm() > 0.0) {
            (_, false) => C64::new(1.0, 0.0),
            (true, true) => C64::new(if z.re < 0.0 { -1.0 } else { 1.0 }, 0.0),
            (false, true) => z / z.norm(),
        };
        return CMatrix::from_element(1, 1, u);
    }
    if real {
        let r = DMatrix::from_fn(n, n, |i, j| m[(i, j)].re);
        let svd = r.svd(true, true);
        let p = svd.u.expect("u") * svd.v_t.expect("v_t");
        return p.map(|x| C64::new(x, 0.0));
    }
    let svd = m.clone().svd(true, true);
    svd.u.expect("u") * svd.v_t.expect("v_t")
}

fn procrustes_factors(from: &[CMatrix], to: &[CMatrix], real: bool) -> Vec<CMatrix> {
    from.iter().zip(to).map(|(a, t)| polar(&(t * a.adjoint()), real)).collect()
}

/// Ambiguity element `h` minimizing `||h·f - target||`, block by block.
pub fn block_procrustes(f: &BlockSignal, target: &BlockSignal) -> Result<AmbiguityElement> {
    f.spec().check_same(target.spec())?;
    let real = f.spec().is_real();
    AmbiguityElement::new(f.spec().clone(), procrustes_factors(f.matrices(), target.matrices(), real))
}

/// Best `K`-term approximation of `f` in `basis`.
pub fn hard_threshold(f: &BlockSignal, basis: &SparseBasis, k: usize) -> Result<BlockSignal> {
    basis.check_spec(f.spec())?;
    if k > basis.dim() {
        return Err(validation(format!("K = {k} exceeds dimension {}", basis.dim())));
    }
    BlockSignal::unflatten_projected(f.spec(), &basis.threshold(&f.flatten(), k).flat)
}

#[derive(Clone, Debug, Serialize)]
pub struct RecoveryOptions {
    pub restarts: usize,
    /// Iterations per restart across both phases.
    pub max_iters: usize,
    /// Share of `max_iters` spent in the relaxed phase.
    pub relax_fraction: f64,
    /// Share of `max_iters` over which the sparsity level falls from `N` to `K`.
    pub anneal_fraction: f64,
    /// Relaxation parameter of the reflection step.
    pub beta: f64,
    /// Absolute tolerance on the Gram residual and sparsity violation.
    pub tol: f64,
    /// Factor noisy Grams by keeping the top `N_ℓ` eigenpairs.
    pub truncate_grams: bool,
    /// Restarts run in fixed groups of this size; later groups are skipped
    /// once one restart converges.
    pub batch: usize,
    /// Enumerate supports instead of projecting when `C(N, K)` is at most
    /// this; `restarts` then counts local fits per support.
    pub enumerate_limit: u64,
    pub record_trace: bool,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        RecoveryOptions {
            restarts: 25,
            max_iters: 600,
            relax_fraction: 2.0 / 3.0,
            anneal_fraction: 1.0 / 3.0,
            beta: 0.9,
            tol: 1e-9,
            truncate_grams: false,
            batch: 8,
            enumerate_limit: ORACLE_MAX_SUPPORTS,
            record_trace: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RecoveryProblem {
    pub grams: GramMoment,
    pub basis: SparseBasis,
    pub k: usize,
    pub options: RecoveryOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryStatus {
    Converged,
    MaxIters,
    /// The polish stopped moving while still violating sparsity.
    Failed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Projections,
    Enumeration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Relaxed,
    Polish,
    /// Local Gram fit on the selected support.
    Fit,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub phase: Phase,
    /// Gram residual of the orbit iterate.
    pub residual: f64,
    pub violation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RecoveryResult {
    pub estimate: BlockSignal,
    pub method: Method,
    pub status: RecoveryStatus,
    pub gram_residual: f64,
    pub sparsity_violation: f64,
    pub support: Vec<usize>,
    pub restart: usize,
    pub restarts_run: usize,
    pub iterations: usize,
    pub trace: Option<Vec<TracePoint>>,
}

struct Workspace<'a> {
    spec: &'a RepresentationSpec,
    grams: &'a GramMoment,
    anchor: &'a [CMatrix],
    basis: &'a SparseBasis,
    real: bool,
}

impl Workspace<'_> {
    fn blocks(&self, x: &CVector) -> Vec<CMatrix> {
        let mut x = x.clone();
        self.spec.project_flat(&mut x);
        self.spec
            .blocks()
            .iter()
            .zip(self.spec.offsets())
            .map(|(b, o)| CMatrix::from_column_slice(b.dim, b.multiplicity, &x.as_slice()[o..o + b.len()]))
            .collect()
    }

    fn flat(blocks: &[CMatrix]) -> CVector {
        CVector::from_iterator(blocks.iter().map(|a| a.len()).sum(), blocks.iter().flat_map(|a| a.iter().copied()))
    }

    fn residual(&self, x: &CVector) -> f64 {
        self.blocks(x)
            .iter()
            .zip(self.grams.grams())
            .map(|(a, g)| (a.adjoint() * a - g).norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// Nearest point of the orbit of the anchor.
    fn orbit(&self, x: &CVector) -> CVector {
        let target = self.blocks(x);
        let u = procrustes_factors(self.anchor, &target, self.real);
        let moved: Vec<CMatrix> = u.iter().zip(self.anchor).map(|(u, a)| u * a).collect();
        Self::flat(&moved)
    }
}

struct Run {
    x: CVector,
    violation: f64,
    support: Vec<usize>,
    iterations: usize,
    stalled: bool,
    trace: Vec<TracePoint>,
}

fn run_restart(ws: &Workspace, start: &CVector, k: usize, opts: &RecoveryOptions) -> Run {
    let n = ws.basis.dim();
    let relaxed = ((opts.max_iters as f64) * opts.relax_fraction).round() as usize;
    let anneal = ((opts.max_iters as f64) * opts.anneal_fraction).round() as usize;
    let beta = opts.beta;
    let mut trace = Vec::new();
    let mut z = start.clone();
    let mut iterations = 0;
    for t in 0..relaxed.min(opts.max_iters) {
        let level = if t < anneal { n - (n - k) * t / anneal } else { k };
        let th = ws.basis.threshold(&z, level);
        let pk = th.flat;
        let rk = &pk * C64::new(2.0, 0.0) - &z;
        let po = ws.orbit(&rk);
        let ro = &po * C64::new(2.0, 0.0) - &rk;
        z = (&ro + &z) * C64::new(beta / 2.0, 0.0) + &pk * C64::new(1.0 - beta, 0.0);
        if opts.record_trace {
            trace.push(TracePoint { iteration: t, phase: Phase::Relaxed, residual: ws.residual(&po), violation: th.violation });
        }
        iterations += 1;
    }

    let mut x = ws.orbit(&z);
    let mut th = ws.basis.threshold(&x, k);
    let mut stalled = false;
    while iterations < opts.max_iters.max(1) && th.violation >= opts.tol {
        let next = ws.orbit(&th.flat);
        let next_th = ws.basis.threshold(&next, k);
        debug_assert!(
            next_th.violation <= th.violation * (1.0 + 1e-9) + 1e-12,
            "polish step increased the violation: {} -> {}",
            th.violation,
            next_th.violation
        );
        let step = (&next - &x).norm();
        x = next;
        th = next_th;
        if opts.record_trace {
            trace.push(TracePoint { iteration: iterations, phase: Phase::Polish, residual: ws.residual(&x), violation: th.violation });
        }
        iterations += 1;
        if step < opts.tol * 1e-3 {
            stalled = th.violation >= opts.tol;
            break;
        }
    }
    Run { x, violation: th.violation, support: th.support, iterations, stalled, trace }
}

/// Gram mismatch `A*A - G` of every block packed into a real vector whose
/// norm is the Frobenius distance.
fn pack(out: &mut Vec<f64>, d: &CMatrix) {
    for j in 0..d.ncols() {
        for i in 0..=j {
            if i == j {
                out.push(d[(i, i)].re);
            } else {
                let z = d[(i, j)] * std::f64::consts::SQRT_2;
                out.push(z.re);
                out.push(z.im);
            }
        }
    }
}

/// Least-squares Gram fit over the signals supported on one support.
struct SupportFit<'a> {
    spec: &'a RepresentationSpec,
    grams: &'a GramMoment,
    /// Flat image of each real parameter.
    dirs: Vec<CVector>,
}

struct Fit {
    x: CVector,
    residual: f64,
    iterations: usize,
    trace: Vec<TracePoint>,
}

const FIT_MAX_ITERS: usize = 200;

impl<'a> SupportFit<'a> {
    fn new(grams: &'a GramMoment, basis: &SparseBasis, support: &[usize]) -> Self {
        let cols = basis.columns(support);
        let complex = basis.coefficients() == Coefficients::Complex;
        let mut dirs = Vec::with_capacity(cols.ncols() * 2);
        for j in 0..cols.ncols() {
            dirs.push(cols.column(j).into_owned());
            if complex {
                dirs.push(cols.column(j) * C64::new(0.0, 1.0));
            }
        }
        SupportFit { spec: grams.spec(), grams, dirs }
    }

    fn signal(&self, p: &DVector<f64>) -> CVector {
        let mut x = CVector::zeros(self.spec.dim());
        for (d, &c) in self.dirs.iter().zip(p.iter()) {
            x.axpy(C64::new(c, 0.0), d, C64::new(1.0, 0.0));
        }
        x
    }

    fn split(&self, x: &CVector) -> Vec<CMatrix> {
        self.spec
            .blocks()
            .iter()
            .zip(self.spec.offsets())
            .map(|(b, o)| CMatrix::from_column_slice(b.dim, b.multiplicity, &x.as_slice()[o..o + b.len()]))
            .collect()
    }

    fn residual(&self, blocks: &[CMatrix]) -> DVector<f64> {
        let mut out = Vec::new();
        for (a, g) in blocks.iter().zip(self.grams.grams()) {
            pack(&mut out, &(a.adjoint() * a - g));
        }
        DVector::from_vec(out)
    }

    fn jacobian(&self, blocks: &[CMatrix], rows: usize) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(rows, self.dirs.len());
        for (c, d) in self.dirs.iter().enumerate() {
            let mut col = Vec::with_capacity(rows);
            for (a, da) in blocks.iter().zip(self.split(d)) {
                let t = da.adjoint() * a;
                pack(&mut col, &(&t + t.adjoint()));
            }
            j.set_column(c, &DVector::from_vec(col));
        }
        j
    }

    /// Levenberg-Marquardt from `p`.
    fn run(&self, mut p: DVector<f64>, tol: f64, record: bool) -> Fit {
        let mut blocks = self.split(&self.signal(&p));
        let mut r = self.residual(&blocks);
        let mut cost = r.norm_squared();
        let mut mu = 1e-3;
        let mut trace = Vec::new();
        let mut iterations = 0;
        let mut history = vec![cost];
        while iterations < FIT_MAX_ITERS && cost.sqrt() >= tol * 1e-3 {
            let j = self.jacobian(&blocks, r.len());
            let jtj = j.transpose() * &j;
            let g = j.transpose() * &r;
            let mut improved = false;
            while mu < 1e12 {
                let mut m = jtj.clone();
                for d in 0..m.nrows() {
                    m[(d, d)] += mu * (1.0 + jtj[(d, d)]);
                }
                let Some(chol) = m.cholesky() else {
                    mu *= 10.0;
                    continue;
                };
                let next = &p - chol.solve(&g);
                let next_blocks = self.split(&self.signal(&next));
                let next_r = self.residual(&next_blocks);
                let next_cost = next_r.norm_squared();
                if next_cost < cost {
                    (p, blocks, r, cost) = (next, next_blocks, next_r, next_cost);
                    mu = (mu * 0.3).max(1e-12);
                    improved = true;
                    break;
                }
                mu *= 10.0;
            }
            if record {
                trace.push(TracePoint { iteration: iterations, phase: Phase::Fit, residual: cost.sqrt(), violation: 0.0 });
            }
            iterations += 1;
            if !improved {
                break;
            }
            // A local minimum away from zero residual: stop crawling.
            history.push(cost);
            if history.len() > FIT_STALL_WINDOW
                && cost > FIT_STALL_RATIO * history[history.len() - 1 - FIT_STALL_WINDOW]
                && cost.sqrt() >= tol
            {
                break;
            }
        }
        Fit { x: self.signal(&p), residual: cost.sqrt(), iterations, trace }
    }
}

/// Searches for a `K`-sparse signal with the given Grams.
///
/// Small instances, `C(N, K) <= enumerate_limit`, fit the Grams on every
/// support by Levenberg-Marquardt from up to `restarts` random starts per
/// support. Larger ones use
/// relaxed projections between the Gram orbit and the sparse set: restart
/// `r` starts from the Gram factor moved by a random ambiguity drawn from
/// stream `(seed, RESTART, r)`, and the best restart is chosen by sparsity
/// violation, then Gram residual, then index.
pub fn recover(problem: &RecoveryProblem, seed: u64) -> Result<RecoveryResult> {
    let spec = problem.grams.spec();
    problem.basis.check_spec(spec)?;
    let opts = &problem.options;
    let n = spec.dim();
    if problem.k == 0 || problem.k > n {
        return Err(validation(format!("K = {} outside 1..={n}", problem.k)));
    }
    if opts.restarts == 0 || opts.batch == 0 {
        return Err(validation("restarts and batch must be >= 1"));
    }
    if !(0.0..=1.0).contains(&opts.relax_fraction) || !(0.0..=1.0).contains(&opts.anneal_fraction) {
        return Err(validation("phase fractions must lie in [0, 1]"));
    }
    let anchor = if opts.truncate_grams { factor_gram_truncated(&problem.grams)? } else { factor_gram(&problem.grams)? };
    if binomial(n, problem.k) <= opts.enumerate_limit {
        return recover_enumerated(problem, &anchor, seed);
    }
    let ws = Workspace { spec, grams: &problem.grams, anchor: anchor.matrices(), basis: &problem.basis, real: spec.is_real() };

    let mut runs: Vec<(usize, Run)> = Vec::new();
    let mut start = 0;
    while start < opts.restarts {
        let end = (start + opts.batch).min(opts.restarts);
        let chunk: Vec<(usize, Run)> = (start..end)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream_rng(seed, streams::RESTART, r as u64);
                let h = random_ambiguity(spec, &mut rng);
                let moved: Vec<CMatrix> = h.factors().iter().zip(ws.anchor).map(|(u, a)| u * a).collect();
                (r, run_restart(&ws, &Workspace::flat(&moved), problem.k, opts))
            })
            .collect();
        runs.extend(chunk);
        start = end;
        if runs.iter().any(|(_, run)| run.violation < opts.tol) {
            break;
        }
    }
    let restarts_run = runs.len();

    let mut scored = Vec::with_capacity(runs.len());
    for (r, run) in runs {
        let estimate = BlockSignal::unflatten_projected(spec, &run.x)?;
        let residual = gram_distance(&population_gram(&estimate), &problem.grams)?;
        scored.push((r, run, estimate, residual));
    }
    scored.sort_by(|a, b| {
        a.1.violation
            .partial_cmp(&b.1.violation)
            .expect("NaN violation")
            .then(a.3.partial_cmp(&b.3).expect("NaN residual"))
            .then(a.0.cmp(&b.0))
    });
    let (restart, run, estimate, gram_residual) = scored.into_iter().next().expect("at least one restart");
    let status = if run.violation < opts.tol && gram_residual < opts.tol {
        RecoveryStatus::Converged
    } else if run.stalled {
        RecoveryStatus::Failed
    } else {
        RecoveryStatus::MaxIters
    };
    log::debug!("restart {restart} selected: violation {:.3e}, residual {:.3e}", run.violation, gram_residual);
    Ok(RecoveryResult {
        estimate,
        method: Method::Projections,
        status,
        gram_residual,
        sparsity_violation: run.violation,
        support: run.support,
        restart,
        restarts_run,
        iterations: run.iterations,
        trace: opts.record_trace.then_some(run.trace),
    })
}

/// Largest group of supports fitted in parallel by [`recover_enumerated`];
/// groups double from 1 up to this.
const FIT_GROUP: usize = 32;
/// A fit stops once `FIT_STALL_WINDOW` iterations shrink the cost by less
/// than the factor `FIT_STALL_RATIO`.
const FIT_STALL_WINDOW: usize = 10;
const FIT_STALL_RATIO: f64 = 0.99;
/// Starts per support in the first enumeration pass.
const SCREEN_STARTS: usize = 4;

fn recover_enumerated(problem: &RecoveryProblem, anchor: &BlockSignal, seed: u64) -> Result<RecoveryResult> {
    let spec = problem.grams.spec();
    let opts = &problem.options;
    let k = problem.k;
    let energy: f64 = problem.grams.grams().iter().map(|g| g.trace().re).sum::<f64>().max(0.0);
    // Supports far from the orbit span cannot carry an exact fit; try the
    // closest first. When the span is everything the order is lexicographic.
    let span = orbit_span_basis(anchor);
    let mut supports: Vec<(f64, Vec<usize>)> = (0..spec.dim())
        .combinations(k)
        .map(|s| {
            let sine = principal_sines(&span, &problem.basis.columns(&s)).first().copied().unwrap_or(1.0);
            // Rounding noise must not reorder supports that all meet the span.
            (if sine < ORACLE_SINE_TOL { 0.0 } else { sine }, s)
        })
        .collect();
    supports.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("NaN sine").then_with(|| a.1.cmp(&b.1)));

    // Start `r` on support `i` draws from `(seed, FIT, i * 2^32 + r)`.
    let fit_support = |i: usize, starts: std::ops::Range<usize>| -> (usize, usize, Fit) {
        let fitter = SupportFit::new(&problem.grams, &problem.basis, &supports[i].1);
        let mut best: Option<(usize, Fit)> = None;
        let mut used = 0;
        for r in starts {
            let mut rng = stream_rng(seed, streams::FIT, ((i as u64) << 32) | r as u64);
            let p = DVector::from_fn(fitter.dirs.len(), |_, _| gaussian(&mut rng));
            let p = &p * (energy.sqrt() / p.norm().max(f64::MIN_POSITIVE));
            let fit = fitter.run(p, opts.tol, opts.record_trace);
            used += 1;
            if best.as_ref().is_none_or(|b| fit.residual < b.1.residual) {
                best = Some((r, fit));
            }
            if best.as_ref().is_some_and(|b| b.1.residual < opts.tol) {
                break;
            }
        }
        let (r, fit) = best.expect("at least one start");
        (r, used, fit)
    };

    // A cheap pass over every support first. If it finds nothing, the rest
    // of the budget goes to supports in order of their screening residual.
    let screen = SCREEN_STARTS.min(opts.restarts);
    let mut restarts_run = 0;
    let mut best: Option<(usize, usize, Fit)> = None;
    let mut order: Vec<usize> = (0..supports.len()).collect();
    let mut screened = vec![f64::INFINITY; supports.len()];
    for (pass, starts) in [0..screen, screen..opts.restarts].into_iter().enumerate() {
        if starts.is_empty() || best.as_ref().is_some_and(|b| b.2.residual < opts.tol) {
            continue;
        }
        if pass == 1 {
            order.sort_by(|&a, &b| screened[a].total_cmp(&screened[b]).then(a.cmp(&b)));
        }
        let mut start = 0;
        let mut size = 1;
        while start < order.len() {
            let end = (start + size).min(order.len());
            let fits: Vec<(usize, usize, usize, Fit)> = order[start..end]
                .par_iter()
                .map(|&i| {
                    let (r, used, fit) = fit_support(i, starts.clone());
                    (i, r, used, fit)
                })
                .collect();
            start = end;
            size = (size * 2).min(FIT_GROUP);
            for (i, r, used, fit) in fits {
                restarts_run += used;
                screened[i] = screened[i].min(fit.residual);
                if best.as_ref().is_none_or(|b| fit.residual < b.2.residual) {
                    best = Some((i, r, fit));
                }
            }
            if best.as_ref().is_some_and(|b| b.2.residual < opts.tol) {
                break;
            }
        }
    }
    let (index, restart, fit) = best.expect("at least one support");
    let support = supports[index].1.clone();
    let estimate = BlockSignal::unflatten_projected(spec, &fit.x)?;
    let gram_residual = gram_distance(&population_gram(&estimate), &problem.grams)?;
    let violation = problem.basis.threshold(&fit.x, k).violation;
    let status =
        if gram_residual < opts.tol && violation < opts.tol { RecoveryStatus::Converged } else { RecoveryStatus::MaxIters };
    log::debug!("support {support:?} selected: residual {gram_residual:.3e}");
    Ok(RecoveryResult {
        estimate,
        method: Method::Enumeration,
        status,
        gram_residual,
        sparsity_violation: violation,
        support,
        restart,
        restarts_run,
        iterations: fit.iterations,
        trace: opts.record_trace.then_some(fit.trace),
    })
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum OracleOutcome {
    /// Exactly one support meets the orbit span.
    Unique { support: Vec<usize>, estimate: BlockSignal },
    /// No support of size `K` meets the orbit span.
    Infeasible,
    /// Several supports do; the Grams do not single out one signal.
    Ambiguous { supports: Vec<Vec<usize>> },
}

/// `C(n, k)`, saturating at `u64::MAX`.
fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i as u128 + 1);
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Enumerates every support of size `K` and tests it against the linear
/// span of the Gram orbit. Refuses when `N > 16` or `C(N, K) > 10^4`.
pub fn exact_oracle(grams: &GramMoment, basis: &SparseBasis, k: usize) -> Result<OracleOutcome> {
    let spec = grams.spec();
    basis.check_spec(spec)?;
    let n = spec.dim();
    if k == 0 || k > n {
        return Err(validation(format!("K = {k} outside 1..={n}")));
    }
    if n > ORACLE_MAX_DIM {
        return Err(MraError::Refused(format!("dimension {n} exceeds the oracle limit {ORACLE_MAX_DIM}")));
    }
    let count = binomial(n, k);
    if count > ORACLE_MAX_SUPPORTS {
        return Err(MraError::Refused(format!("{count} supports exceed the oracle limit {ORACLE_MAX_SUPPORTS}")));
    }
    let anchor = factor_gram(grams)?;
    let span = orbit_span_basis(&anchor);
    let hits: Vec<Vec<usize>> = (0..n)
        .combinations(k)
        .filter(|s| principal_sines(&span, &basis.columns(s)).first().is_some_and(|&v| v < ORACLE_SINE_TOL))
        .collect();
    match hits.len() {
        0 => Ok(OracleOutcome::Infeasible),
        1 => {
            let support = hits.into_iter().next().expect("one support");
            let estimate = line_signal(&span, basis, &support, grams)?;
            Ok(OracleOutcome::Unique { support, estimate })
        }
        _ => Ok(OracleOutcome::Ambiguous { supports: hits }),
    }
}

/// The signal on the line `L_f ∩ L_S`, scaled to the energy `Σ tr G_ℓ`.
fn line_signal(span: &CMatrix, basis: &SparseBasis, support: &[usize], grams: &GramMoment) -> Result<BlockSignal> {
    let cols = basis.columns(support);
    let residual = &cols - span * (span.adjoint() * &cols);
    let svd = residual.svd(false, true);
    let vt = svd.v_t.expect("v_t");
    let last = svd.singular_values.len() - 1;
    debug_assert!(svd.singular_values[last] < ORACLE_SINE_TOL);
    let mut w = vt.row(last).adjoint();
    if basis.coefficients() == Coefficients::Real {
        let lead = w.iter().copied().max_by(|a, b| a.norm().partial_cmp(&b.norm()).expect("NaN")).expect("non-empty");
        let phase = lead.conj() / lead.norm();
        w.iter_mut().for_each(|z| *z = C64::new((*z * phase).re, 0.0));
        let norm = w.norm();
        w.iter_mut().for_each(|z| *z /= norm);
    }
    let energy: f64 = grams.grams().iter().map(|g| g.trace().re).sum();
    let x = &cols * w * C64::new(energy.max(0.0).sqrt(), 0.0);
    BlockSignal::unflatten_projected(grams.spec(), &x)
}

/// Flat distance up to the trivial ambiguity between a recovery and a truth.
pub fn recovery_error(estimate: &BlockSignal, truth: &BlockSignal) -> Result<f64> {
    signal_distance_up_to_phase(estimate, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rep::{apply_ambiguity, random_signal, Field, IsotypicBlock, Parity};
    use crate::rng::seeded;

    fn real_spec() -> RepresentationSpec {
        RepresentationSpec::new(
            vec![IsotypicBlock::new(1, 3, Parity::Even), IsotypicBlock::new(3, 3, Parity::Odd), IsotypicBlock::new(5, 3, Parity::Even)],
            Field::RealConjugationInvariant,
        )
        .unwrap()
    }

    #[test]
    fn factor_reproduces_grams() {
        for spec in [RepresentationSpec::uniform(3, 2, 4).unwrap(), real_spec()] {
            let f = random_signal(&spec, None, &mut seeded(4)).unwrap();
            let g = population_gram(&f);
            let a = factor_gram(&g).unwrap();
            assert!(gram_distance(&population_gram(&a), &g).unwrap() < 1e-12);
        }
    }

    #[test]
    fn rank_above_dimension_is_infeasible() {
        let spec = RepresentationSpec::uniform(1, 1, 2).unwrap();
        let g = GramMoment::new(spec, vec![CMatrix::identity(2, 2)]).unwrap();
        assert!(matches!(factor_gram(&g), Err(MraError::Infeasible { block: 0, rank: 2, dim: 1 })));
        let a = factor_gram_truncated(&g).unwrap();
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn procrustes_undoes_an_ambiguity() {
        let spec = real_spec();
        let mut rng = seeded(5);
        let f = random_signal(&spec, None, &mut rng).unwrap();
        let h = random_ambiguity(&spec, &mut rng);
        let g = apply_ambiguity(&h, &f).unwrap();
        let u = block_procrustes(&f, &g).unwrap();
        let back = apply_ambiguity(&u, &f).unwrap();
        assert!(signal_distance_up_to_phase(&back, &g).unwrap() < 1e-10);
    }

    #[test]
    fn recovers_small_sparse_signals() {
        let spec = RepresentationSpec::new(
            vec![IsotypicBlock::new(1, 5, Parity::Even), IsotypicBlock::new(3, 5, Parity::Odd), IsotypicBlock::new(5, 5, Parity::Even)],
            Field::RealConjugationInvariant,
        )
        .unwrap();
        let mut rng = seeded(6);
        let basis = SparseBasis::random(&spec, &mut rng);
        let k = 6;
        let f = random_signal(&spec, Some((k, &basis)), &mut rng).unwrap();
        let problem = RecoveryProblem {
            grams: population_gram(&f),
            basis,
            k,
            options: RecoveryOptions { record_trace: true, ..Default::default() },
        };
        let out = recover(&problem, 1).unwrap();
        assert_eq!(out.status, RecoveryStatus::Converged, "{:?} {} {}", out.status, out.sparsity_violation, out.gram_residual);
        assert_eq!(out.status, RecoveryStatus::Converged);
        assert!(recovery_error(&out.estimate, &f).unwrap() < 1e-6);
        let trace = out.trace.unwrap();
        let polish: Vec<f64> = trace.iter().filter(|t| t.phase == Phase::Polish).map(|t| t.violation).collect();
        assert!(polish.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-12));
    }

    #[test]
    fn oracle_finds_the_support() {
        let spec = RepresentationSpec::uniform(2, 1, 2).unwrap();
        let mut rng = seeded(7);
        let basis = SparseBasis::random(&spec, &mut rng);
        let f = random_signal(&spec, Some((2, &basis)), &mut rng).unwrap();
        match exact_oracle(&population_gram(&f), &basis, 2).unwrap() {
            OracleOutcome::Unique { support, estimate } => {
                assert_eq!(support, basis.threshold(&f.flatten(), 2).support);
                assert!(signal_distance_up_to_phase(&estimate, &f).unwrap() < 1e-8);
            }
            other => panic!("expected a unique support, got {other:?}"),
        }
        let big = RepresentationSpec::uniform(17, 1, 1).unwrap();
        let g = GramMoment::zeros(&big);
        assert!(matches!(exact_oracle(&g, &SparseBasis::standard(&big), 1), Err(MraError::Refused(_))));
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(16, 6), 8008);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(12, 9), 220);
        assert_eq!(binomial(225, 60), u64::MAX);
    }
}
