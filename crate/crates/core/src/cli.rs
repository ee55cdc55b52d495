//! Experiment driver behind the `mra` binary.
//!
//! Configs are JSON. Every output carries the SHA-256 of the effective
//! config (after command-line overrides) and the list of seeds used.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::de::IgnoredAny;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::certify::{certify_basis, Certificate, Verdict};
use crate::error::{MraError, Result};
use crate::linalg::CMatrix;
use crate::models::{build_model, ModelInstance, ModelKind};
use crate::moments::{debias, gram_distance, population_gram, signal_distance_up_to_phase, GramMoment};
use crate::rep::{random_signal, sparsity_bound, BlockSignal, SparseBasis};
use crate::rng::{stream_rng, streams};
use crate::solver::{recover, Phase, RecoveryOptions, RecoveryProblem, RecoveryResult, TracePoint};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

pub const CSV_HEADER: &str = "model,sigma,n,seed,gram_error,recovery_error,success,wall_time_ms";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GramSource {
    #[default]
    Exact,
    Empirical,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    /// `real_fourier` for the cyclic model, `random` otherwise.
    #[default]
    Default,
    Random,
    Standard,
    /// DFT of a random real orthogonal matrix: real signals sparse in a
    /// random real basis, seen through their Fourier coefficients.
    RealFourier,
}

fn default_trials() -> usize {
    20
}

fn default_restarts() -> usize {
    25
}

/// Model parameters sit at the top level next to the experiment fields:
/// `{"model":"cryo_em","L":4,"R":9,"K":10,"seeds":[1,2]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub model: ModelKind,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub grams: GramSource,
    #[serde(default)]
    pub basis: BasisKind,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    /// Relative recovery error below which a run counts as a success.
    /// Defaults to `1e-6` for exact Grams and `1e-2` for empirical ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_threshold: Option<f64>,
    /// Keep the solver trace of the selected restart. Not part of the file
    /// format.
    #[serde(skip)]
    pub record_trace: bool,
}

fn config_error(msg: impl Into<String>) -> MraError {
    MraError::Config(msg.into())
}

/// Every key a config file may contain. Parsed first so that typos are
/// reported with their position; `flatten` would otherwise swallow them.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct KnownKeys {
    model: IgnoredAny,
    #[serde(rename = "N")]
    size: Option<IgnoredAny>,
    #[serde(rename = "L")]
    bandlimit: Option<IgnoredAny>,
    #[serde(rename = "R")]
    shells: Option<IgnoredAny>,
    #[serde(rename = "P")]
    grid: Option<IgnoredAny>,
    #[serde(rename = "K")]
    k: Option<IgnoredAny>,
    trials: Option<IgnoredAny>,
    seeds: Option<IgnoredAny>,
    sigma: Option<IgnoredAny>,
    n: Option<IgnoredAny>,
    grams: Option<IgnoredAny>,
    basis: Option<IgnoredAny>,
    restarts: Option<IgnoredAny>,
    max_iters: Option<IgnoredAny>,
    success_threshold: Option<IgnoredAny>,
}

fn model_parameters(kind: &ModelKind) -> &'static [&'static str] {
    match kind {
        ModelKind::Cyclic { .. } | ModelKind::Dihedral { .. } => &["N"],
        ModelKind::RotatedImages { .. } | ModelKind::Tomography2d { .. } => &["L", "R"],
        ModelKind::CryoEm { .. } => &["L", "R", "P"],
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let wrap = |e: serde_json::Error| config_error(format!("{origin}: {e}"));
        serde_json::from_str::<KnownKeys>(text).map_err(wrap)?;
        let config: ExperimentConfig = serde_json::from_str(text).map_err(wrap)?;
        let keys: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text).map_err(wrap)?;
        let allowed = model_parameters(&config.model);
        if let Some(bad) = ["N", "L", "R", "P"].iter().find(|k| keys.contains_key(**k) && !allowed.contains(k)) {
            return Err(config_error(format!(
                "{origin}: field `{bad}`: not a parameter of model `{}` (expected {})",
                config.model.name(),
                allowed.join(", ")
            )));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("{}: cannot read config: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    fn require_k(&self) -> Result<usize> {
        match self.k {
            Some(0) => Err(config_error("field `K`: must be >= 1")),
            Some(k) => Ok(k),
            None => Err(config_error("field `K`: required for this subcommand")),
        }
    }

    fn require_seeds(&self) -> Result<&[u64]> {
        if self.seeds.is_empty() {
            return Err(config_error("field `seeds`: at least one seed is required (or pass --seed)"));
        }
        Ok(&self.seeds)
    }

    fn require_grid(&self) -> Result<()> {
        if self.sigma.is_empty() {
            return Err(config_error("field `sigma`: at least one noise level is required"));
        }
        if self.n.is_empty() {
            return Err(config_error("field `n`: at least one sample size is required"));
        }
        if let Some(s) = self.sigma.iter().find(|s| !s.is_finite() || **s < 0.0) {
            return Err(config_error(format!("field `sigma`: {s} is not a finite non-negative number")));
        }
        if self.n.contains(&0) {
            return Err(config_error("field `n`: sample sizes must be >= 1"));
        }
        Ok(())
    }

    fn check_common(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(config_error("field `trials`: must be >= 1"));
        }
        if self.restarts == 0 {
            return Err(config_error("field `restarts`: must be >= 1"));
        }
        if self.success_threshold.is_some_and(|t| !(t > 0.0)) {
            return Err(config_error("field `success_threshold`: must be positive"));
        }
        Ok(())
    }

    fn success_threshold(&self) -> f64 {
        self.success_threshold.unwrap_or(match self.grams {
            GramSource::Exact => 1e-6,
            GramSource::Empirical => 1e-2,
        })
    }

    fn options(&self) -> RecoveryOptions {
        let mut o = RecoveryOptions { restarts: self.restarts, ..Default::default() };
        if let Some(it) = self.max_iters {
            o.max_iters = it;
        }
        o.truncate_grams = self.grams == GramSource::Empirical;
        o.record_trace = self.record_trace;
        o
    }
}

fn model(config: &ExperimentConfig) -> Result<ModelInstance> {
    build_model(config.model.clone()).map_err(|e| config_error(format!("field `model`: {e}")))
}

/// Basis drawn from stream `(seed, BASIS, 0)`.
pub fn basis_for(model: &ModelInstance, kind: BasisKind, seed: u64) -> SparseBasis {
    let mut rng = stream_rng(seed, streams::BASIS, 0);
    let spec = model.spec();
    let kind = match (kind, model.kind()) {
        (BasisKind::Default, ModelKind::Cyclic { .. }) => BasisKind::RealFourier,
        (BasisKind::Default, _) => BasisKind::Random,
        (k, _) => k,
    };
    match kind {
        BasisKind::Standard => SparseBasis::standard(spec),
        BasisKind::RealFourier if !spec.is_real() => SparseBasis::random_real_fourier(spec.dim(), &mut rng),
        _ => SparseBasis::random(spec, &mut rng),
    }
}

/// Planted signal from stream `(seed, SIGNAL, 0)`: `K`-sparse in `basis`
/// when `k` is given, dense otherwise.
pub fn planted_signal(model: &ModelInstance, basis: &SparseBasis, k: Option<usize>, seed: u64) -> Result<BlockSignal> {
    let mut rng = stream_rng(seed, streams::SIGNAL, 0);
    random_signal(model.spec(), k.map(|k| (k, basis)), &mut rng)
}

/// The basis re-expressed in the model's moment coordinates.
fn moment_basis(model: &ModelInstance, basis: &SparseBasis) -> Result<SparseBasis> {
    if model.moment_spec() == *model.spec() {
        return Ok(basis.clone());
    }
    let n = basis.dim();
    let mut out = CMatrix::zeros(n, n);
    for j in 0..n {
        let col = BlockSignal::unflatten(model.spec(), &basis.matrix().column(j).into_owned())?;
        out.set_column(j, &model.moment_signal(&col)?.flatten());
    }
    SparseBasis::new(out, basis.coefficients())
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundRow {
    pub model: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K_max")]
    pub k_max: i64,
    pub ratio: f64,
    /// Closed-form cryo-EM ratio, available when `R = 2L + 1`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<f64>,
}

pub fn cryo_closed_form_ratio(l: usize) -> f64 {
    let l = l as f64;
    (2.0 / 3.0 * l.powi(3) + l * l + l / 3.0) / (2.0 * l.powi(3) + 5.0 * l * l + 4.0 * l + 1.0)
}

pub fn bound_row(config: &ExperimentConfig) -> Result<BoundRow> {
    let model = model(config)?;
    let b = sparsity_bound(model.spec());
    let closed_form = match model.kind() {
        ModelKind::CryoEm { bandlimit, shells, .. } if *shells == 2 * bandlimit + 1 => {
            let c = cryo_closed_form_ratio(*bandlimit);
            if (c - b.ratio()).abs() > 1e-12 {
                return Err(MraError::Validation(format!("closed-form ratio {c} disagrees with N - M arithmetic {}", b.ratio())));
            }
            Some(c)
        }
        _ => None,
    };
    Ok(BoundRow { model: model.name().to_string(), n: b.n, m: b.m, k_max: b.k_max, ratio: b.ratio(), closed_form })
}

pub fn format_bound(row: &BoundRow) -> String {
    let mut s = format!(
        "{:<16}{:>8}{:>8}{:>8}{:>10}\n{:<16}{:>8}{:>8}{:>8}{:>10.4}\n",
        "model", "N", "M", "K_max", "K_max/N", row.model, row.n, row.m, row.k_max, row.ratio
    );
    if let Some(c) = row.closed_form {
        s.push_str(&format!("closed-form ratio {c:.4} (equal to N - M arithmetic)\n"));
    }
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct CertifyReport {
    pub verdict: Verdict,
    pub certificates: Vec<Certificate>,
}

/// One certificate per seed; the basis and the trials of seed `s` both
/// derive from `s`.
pub fn run_certify(config: &ExperimentConfig) -> Result<CertifyReport> {
    config.check_common()?;
    let model = model(config)?;
    let k = config.require_k()?;
    let seeds = config.require_seeds()?;
    let mut certificates = Vec::new();
    for &seed in seeds {
        let basis = basis_for(&model, config.basis, seed);
        certificates.push(certify_basis(model.spec(), &basis, k, config.trials, seed)?);
    }
    let verdict = if certificates.iter().any(|c| c.verdict == Verdict::Fail) {
        Verdict::Fail
    } else if certificates.iter().any(|c| c.verdict == Verdict::Inconclusive) {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    Ok(CertifyReport { verdict, certificates })
}

#[derive(Clone, Debug, Serialize)]
pub struct RecoverRecord {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub gram_error: f64,
    /// Distance to the planted signal up to the trivial ambiguity, relative
    /// to the planted norm.
    pub recovery_error: f64,
    pub success: bool,
    pub result: RecoveryResult,
}

/// Plants, measures and recovers one signal. `noise` is `(sigma, n)` for
/// empirical Grams.
pub fn run_trial(config: &ExperimentConfig, noise: Option<(f64, usize)>, seed: u64) -> Result<RecoverRecord> {
    let model = model(config)?;
    let k = config.require_k()?;
    let basis = basis_for(&model, config.basis, seed);
    let truth = planted_signal(&model, &basis, Some(k), seed)?;
    let truth_m = model.moment_signal(&truth)?;
    let exact = population_gram(&truth_m);
    let grams: GramMoment = match noise {
        None => exact.clone(),
        Some((sigma, n)) => {
            let moment = model.simulate_moment(&truth, n, sigma, seed)?;
            model.project_to_grams(&debias(&moment, sigma))?
        }
    };
    let gram_error = gram_distance(&grams, &exact)?;
    let problem = RecoveryProblem { grams, basis: moment_basis(&model, &basis)?, k, options: config.options() };
    let result = recover(&problem, seed)?;
    let recovery_error = signal_distance_up_to_phase(&result.estimate, &truth_m)? / truth_m.norm().max(f64::MIN_POSITIVE);
    Ok(RecoverRecord {
        seed,
        sigma: noise.map(|p| p.0),
        n: noise.map(|p| p.1),
        gram_error,
        recovery_error,
        success: recovery_error < config.success_threshold(),
        result,
    })
}

fn grid(config: &ExperimentConfig) -> Result<Vec<(Option<(f64, usize)>, u64)>> {
    let seeds = config.require_seeds()?.to_vec();
    let mut points = Vec::new();
    match config.grams {
        GramSource::Exact => points.extend(seeds.iter().map(|&s| (None, s))),
        GramSource::Empirical => {
            config.require_grid()?;
            for &sigma in &config.sigma {
                for &n in &config.n {
                    points.extend(seeds.iter().map(|&s| (Some((sigma, n)), s)));
                }
            }
        }
    }
    Ok(points)
}

pub fn run_recover(config: &ExperimentConfig) -> Result<Vec<RecoverRecord>> {
    config.check_common()?;
    model(config)?;
    config.require_k()?;
    grid(config)?.into_iter().map(|(noise, seed)| run_trial(config, noise, seed)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRecord {
    pub model: String,
    pub sigma: f64,
    pub n: usize,
    pub seed: u64,
    pub gram_error: f64,
    pub recovery_error: f64,
    pub success: bool,
    pub wall_time_ms: f64,
}

/// Every `(sigma, n, seed)` grid point with empirical Grams, in parallel.
/// Rows come back sorted by `(sigma, n, seed)`.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    let mut config = config.clone();
    config.grams = GramSource::Empirical;
    config.check_common()?;
    let name = model(&config)?.name().to_string();
    config.require_k()?;
    let mut points = grid(&config)?;
    points.sort_by(|a, b| {
        let (sa, na) = a.0.expect("empirical grid");
        let (sb, nb) = b.0.expect("empirical grid");
        sa.total_cmp(&sb).then(na.cmp(&nb)).then(a.1.cmp(&b.1))
    });
    points
        .par_iter()
        .map(|&(noise, seed)| {
            let start = Instant::now();
            let r = run_trial(&config, noise, seed)?;
            let (sigma, n) = noise.expect("empirical grid");
            Ok(SweepRecord {
                model: name.clone(),
                sigma,
                n,
                seed,
                gram_error: r.gram_error,
                recovery_error: r.recovery_error,
                success: r.success,
                wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(
    mut w: W,
    records: &[SweepRecord],
    hash: &str,
    seeds: &[u64],
    timing: bool,
) -> std::io::Result<()> {
    writeln!(w, "# config_hash: {hash}")?;
    writeln!(w, "# seeds: {}", seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" "))?;
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        let t = if timing { r.wall_time_ms } else { 0.0 };
        writeln!(
            w,
            "{},{},{},{},{:e},{:e},{},{:.3}",
            r.model, r.sigma, r.n, r.seed, r.gram_error, r.recovery_error, r.success, t
        )?;
    }
    Ok(())
}

pub fn write_trace_csv<W: Write>(mut w: W, seed: u64, trace: &[TracePoint]) -> std::io::Result<()> {
    for t in trace {
        let phase = match t.phase {
            Phase::Relaxed => "relaxed",
            Phase::Polish => "polish",
            Phase::Fit => "fit",
        };
        writeln!(w, "{seed},{},{phase},{:e},{:e}", t.iteration, t.residual, t.violation)?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateSidecar {
    pub batch: PathBuf,
    pub observations: usize,
    pub observation_dim: usize,
    pub sigma: f64,
    pub seed: u64,
    pub signal: BlockSignal,
}

/// Writes one observation batch to `out` and returns the description for
/// the JSON sidecar.
pub fn run_simulate(config: &ExperimentConfig, out: &Path) -> Result<SimulateSidecar> {
    config.check_common()?;
    let model = model(config)?;
    let seeds = config.require_seeds()?;
    config.require_grid()?;
    if seeds.len() != 1 || config.sigma.len() != 1 || config.n.len() != 1 {
        return Err(config_error("simulate takes exactly one seed, one `sigma` and one `n`"));
    }
    let (seed, sigma, n) = (seeds[0], config.sigma[0], config.n[0]);
    let basis = basis_for(&model, config.basis, seed);
    let signal = planted_signal(&model, &basis, config.k, seed)?;
    let batch = model.simulate(&signal, n, sigma, seed)?;
    let file = std::fs::File::create(out)?;
    batch.write_to(std::io::BufWriter::new(file))?;
    Ok(SimulateSidecar {
        batch: out.to_path_buf(),
        observations: n,
        observation_dim: model.observation_dim(),
        sigma,
        seed,
        signal,
    })
}

/// Wraps a payload with the provenance fields.
pub fn provenance_json<T: Serialize>(config: &ExperimentConfig, payload: &T) -> Result<String> {
    let mut doc = serde_json::json!({
        "config_hash": config.hash(),
        "seeds": config.seeds,
        "config": config,
    });
    let body = serde_json::to_value(payload)?;
    match body {
        serde_json::Value::Object(map) => doc.as_object_mut().expect("object").extend(map),
        other => {
            doc["result"] = other;
        }
    }
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}
