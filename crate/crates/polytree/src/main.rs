//! Command-line interface for polytree SEM learning and experiments.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal failure.

use clap::{Parser, Subcommand, ValueEnum};
use polytree::gen::{generate_polytree_sem, GenConfig};
use polytree::harness::{run_sweep, verify_trials, SweepConfig};
use polytree::learn::{learn_cpdag, sample_correlations, LearnConfig};
use polytree::metrics::{classify_edges, fdr_cpdag, fdr_skeleton, jaccard_cpdag, jaccard_skeleton};
use polytree::precision::estimate_inverse_correlation;
use polytree::{Cpdag, DataMatrix, LinearSem, NoiseFamily};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "polytree",
    version,
    about = "Polytree SEM structure learning: generation, sampling, recovery and sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Gaussian,
    Uniform,
    Rademacher,
}

impl From<NoiseArg> for NoiseFamily {
    fn from(v: NoiseArg) -> Self {
        match v {
            NoiseArg::Gaussian => NoiseFamily::Gaussian,
            NoiseArg::Uniform => NoiseFamily::Uniform,
            NoiseArg::Rademacher => NoiseFamily::RademacherScaled,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ThetaFormat {
    Dense,
    Coords,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random standardized polytree SEM and write it as text
    Generate {
        #[arg(short, long)]
        p: usize,
        #[arg(long, default_value_t = 1)]
        d_in_max: usize,
        #[arg(long, default_value_t = 0.2)]
        rho_min: f64,
        #[arg(long, default_value_t = 0.8)]
        rho_max: f64,
        #[arg(long, default_value_t = 0.1)]
        omega_min: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path (stdout if omitted)
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Draw i.i.d. samples from a SEM file into a headerless CSV
    Sample {
        #[arg(long)]
        sem: PathBuf,
        #[arg(short, long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = NoiseArg::Gaussian)]
        noise: NoiseArg,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Learn a CPDAG from a data CSV and write it as an edge list
    Learn {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        /// Explicit v-structure threshold, overriding the alpha-based one
        #[arg(long)]
        rho_crit: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare two CPDAG edge-list files and print one metrics row
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        est: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Estimate the inverse correlation matrix from data and a CPDAG
    Precision {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        cpdag: PathBuf,
        #[arg(long, value_enum, default_value_t = ThetaFormat::Dense)]
        format: ThetaFormat,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a Monte-Carlo sweep from a key=value config file
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Trials CSV path; the summary lands next to it as
        /// <stem>.summary.csv
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Check a trials CSV (and optionally its summary) for consistency
    Verify {
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

enum CliError {
    Usage(String),
    Data(String),
}

fn read_file(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn emit(output: Option<&PathBuf>, content: &str) -> Result<(), CliError> {
    match output {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate {
            p,
            d_in_max,
            rho_min,
            rho_max,
            omega_min,
            seed,
            output,
        } => {
            let cfg = GenConfig {
                p,
                d_in_max,
                rho_min,
                rho_max,
                omega_min,
                seed,
            };
            let sem = generate_polytree_sem(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
            emit(output.as_ref(), &sem.to_text())
        }
        Command::Sample {
            sem,
            n,
            seed,
            noise,
            output,
        } => {
            if n == 0 {
                return Err(CliError::Usage("n must be at least 1".into()));
            }
            let model = LinearSem::from_text(&read_file(&sem)?)
                .map_err(|e| CliError::Data(e.to_string()))?;
            let data = model.sample(n, noise.into(), seed);
            emit(output.as_ref(), &data.to_csv_text())
        }
        Command::Learn {
            data,
            alpha,
            rho_crit,
            output,
        } => {
            let matrix = DataMatrix::from_csv_text(&read_file(&data)?)
                .map_err(|e| CliError::Data(e.to_string()))?;
            let cfg = LearnConfig {
                alpha,
                rho_crit_override: rho_crit,
            };
            let learned = learn_cpdag(&matrix, &cfg).map_err(|e| CliError::Data(e.to_string()))?;
            if learned.orientation_conflicts > 0 {
                eprintln!(
                    "warning: {} edge(s) had conflicting orientation demands and were left undirected",
                    learned.orientation_conflicts
                );
            }
            emit(output.as_ref(), &learned.cpdag.to_edge_list_text())
        }
        Command::Evaluate { truth, est, output } => {
            let truth = Cpdag::from_edge_list_text(&read_file(&truth)?)
                .map_err(|e| CliError::Data(e.to_string()))?;
            let est = Cpdag::from_edge_list_text(&read_file(&est)?)
                .map_err(|e| CliError::Data(e.to_string()))?;
            let ec = classify_edges(&truth, &est).map_err(|e| CliError::Data(e.to_string()))?;
            let metrics = [
                fdr_skeleton(&ec),
                jaccard_skeleton(&ec),
                fdr_cpdag(&ec),
                jaccard_cpdag(&ec),
            ];
            let mut row = format!(
                "correct,wrong_dir,missing,extra,fdr_sk,ji_sk,fdr_cpdag,ji_cpdag\n{},{},{},{}",
                ec.correct, ec.wrong_direction, ec.missing, ec.extra
            );
            for m in metrics {
                let v = m.map_err(|e| CliError::Data(e.to_string()))?;
                row.push_str(&format!(",{v}"));
            }
            row.push('\n');
            emit(output.as_ref(), &row)
        }
        Command::Precision {
            data,
            cpdag,
            format,
            output,
        } => {
            let matrix = DataMatrix::from_csv_text(&read_file(&data)?)
                .map_err(|e| CliError::Data(e.to_string()))?;
            let graph = Cpdag::from_edge_list_text(&read_file(&cpdag)?)
                .map_err(|e| CliError::Data(e.to_string()))?;
            let corr = sample_correlations(&matrix).map_err(|e| CliError::Data(e.to_string()))?;
            let theta = estimate_inverse_correlation(&graph, &corr)
                .map_err(|e| CliError::Data(e.to_string()))?;
            let text = match format {
                ThetaFormat::Dense => theta.to_dense_csv(),
                ThetaFormat::Coords => theta.to_coordinate_csv(),
            };
            emit(output.as_ref(), &text)
        }
        Command::Sweep { config, output } => {
            let cfg = SweepConfig::parse(&read_file(&config)?)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let out = run_sweep(&cfg, &output).map_err(|e| CliError::Data(e.to_string()))?;
            let failed: usize = out.summary.iter().map(|s| s.trials_failed).sum();
            eprintln!(
                "wrote {} trial rows to {} and {} summary rows to {} ({} failed trials excluded from means)",
                out.records.len(),
                out.trials_path.display(),
                out.summary.len(),
                out.summary_path.display(),
                failed
            );
            Ok(())
        }
        Command::Verify { trials, summary } => {
            let trials_text = read_file(&trials)?;
            let summary_text = match &summary {
                Some(path) => Some(read_file(path)?),
                None => None,
            };
            let report = verify_trials(&trials_text, summary_text.as_deref())
                .map_err(|e| CliError::Data(e.to_string()))?;
            println!("rows checked: {}", report.rows_checked);
            for v in &report.violations {
                println!("violation: {v}");
            }
            match report.summary_matches {
                Some(true) => println!("summary: exactly recomputable from trial rows"),
                Some(false) => println!("summary: DOES NOT match recomputation"),
                None => {}
            }
            if report.is_clean() {
                println!("consistency: ok");
                Ok(())
            } else {
                Err(CliError::Data("consistency check failed".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" that should exit 0
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(CliError::Usage(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Ok(Err(CliError::Data(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(_) => {
            eprintln!("error: internal invariant failure");
            ExitCode::from(3)
        }
    }
}
