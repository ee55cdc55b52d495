use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mra_core::cli::{self, ExperimentConfig, EXIT_CONFIG, EXIT_FAILURE, EXIT_INCONCLUSIVE, EXIT_OK};
use mra_core::certify::Verdict;
use mra_core::MraError;

#[derive(Parser)]
#[command(name = "mra", version, about = "Second-moment experiments for multi-reference alignment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print N, M, K_max and K_max/N for the configured model.
    Bound(Common),
    /// Certify a random basis at sparsity K.
    Certify(Common),
    /// Plant a sparse signal and recover it from its Grams.
    Recover {
        #[command(flatten)]
        common: Common,
        /// Write the selected restart's iterations as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Noise and sample-size grid, one CSV row per (sigma, n, seed).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Write 0 in the wall_time_ms column so outputs are reproducible byte for byte.
        #[arg(long)]
        no_timing: bool,
    },
    /// Write a binary observation batch plus a JSON sidecar.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config
    #[arg(long)]
    config: PathBuf,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted (required by `simulate`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, MraError> {
        let mut config = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            config.seeds = vec![seed];
        }
        if let Some(t) = self.threads {
            if t == 0 {
                return Err(MraError::Config("--threads must be >= 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global()
                .map_err(|e| MraError::Config(format!("thread pool: {e}")))?;
        }
        Ok(config)
    }

    fn sink(&self) -> Result<Box<dyn Write>, MraError> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(std::io::stdout().lock()),
        })
    }
}

fn emit(common: &Common, text: &str) -> Result<(), MraError> {
    let mut w = common.sink()?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<i32, MraError> {
    match cli.command {
        Command::Bound(common) => {
            let config = common.load()?;
            let row = cli::bound_row(&config)?;
            print!("{}", cli::format_bound(&row));
            if common.out.is_some() {
                emit(&common, &cli::provenance_json(&config, &row)?)?;
            }
            Ok(EXIT_OK)
        }
        Command::Certify(common) => {
            let config = common.load()?;
            let report = cli::run_certify(&config)?;
            emit(&common, &cli::provenance_json(&config, &report)?)?;
            eprintln!("verdict: {:?}", report.verdict);
            Ok(match report.verdict {
                Verdict::Pass => EXIT_OK,
                Verdict::Fail => EXIT_FAILURE,
                Verdict::Inconclusive => EXIT_INCONCLUSIVE,
            })
        }
        Command::Recover { common, trace } => {
            let mut config = common.load()?;
            config.record_trace = trace.is_some();
            let records = cli::run_recover(&config)?;
            if let Some(path) = trace {
                let mut w = BufWriter::new(File::create(&path)?);
                writeln!(w, "seed,iteration,phase,residual,violation")?;
                for r in &records {
                    cli::write_trace_csv(&mut w, r.seed, r.result.trace.as_deref().unwrap_or(&[]))?;
                }
                w.flush()?;
            }
            emit(&common, &cli::provenance_json(&config, &serde_json::json!({ "records": records }))?)?;
            let ok = records.iter().all(|r| r.success);
            eprintln!("{} of {} recoveries succeeded", records.iter().filter(|r| r.success).count(), records.len());
            Ok(if ok { EXIT_OK } else { EXIT_FAILURE })
        }
        Command::Sweep { common, no_timing } => {
            let config = common.load()?;
            let records = cli::run_sweep(&config)?;
            let mut w = common.sink()?;
            cli::write_sweep_csv(&mut w, &records, &config.hash(), &config.seeds, !no_timing)?;
            w.flush()?;
            Ok(EXIT_OK)
        }
        Command::Simulate(common) => {
            let config = common.load()?;
            let out = common
                .out
                .clone()
                .ok_or_else(|| MraError::Config("simulate needs --out for the batch file".into()))?;
            let sidecar = cli::run_simulate(&config, &out)?;
            let side_path = sidecar_path(&out);
            std::fs::write(&side_path, cli::provenance_json(&config, &sidecar)?)?;
            eprintln!("wrote {} and {}", out.display(), side_path.display());
            Ok(EXIT_OK)
        }
    }
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                MraError::Config(_) | MraError::Json(_) => EXIT_CONFIG,
                _ => EXIT_FAILURE,
            };
            ExitCode::from(code as u8)
        }
    }
}
