use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use nim_core::experiments::diagnostics::{gradient_check, patch_check, reproduce_check, CheckReport};
use nim_core::experiments::{
    generate_strain_data, run_forward, run_inverse, write_strain_data, ProblemConfig, RunOptions, Solution,
};
use nim_core::io::write_atomic;
use nim_core::residual::{Scheme, StrainDataSet};
use nim_core::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "nim", version, about = "Neural-integrated meshfree solver for finite-strain hyperelasticity")]
struct Cli {
    /// Print a progress line to stderr every N iterations.
    #[arg(long, global = true)]
    progress: Option<usize>,
    /// Worker threads (falls back to NIM_THREADS, then the machine's parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward solve.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Joint displacement / modulus identification from strain data.
    Inverse {
        #[arg(long)]
        config: PathBuf,
        /// Strain data CSV; defaults to `inverse.data` in the config.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Truth forward solve, then sampling of F at random interior points.
    MakeData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ndata: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Invariant suites.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        check: Check,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Check {
    Gradients,
    Patch,
    Reproduce,
}

#[derive(Serialize)]
struct Artifact {
    path: PathBuf,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: PathBuf,
    seed: u64,
    output: PathBuf,
    artifacts: Vec<Artifact>,
}

impl RunManifest {
    fn new(command: &str, config: &Path, seed: u64, output: &Path, files: &[PathBuf]) -> Result<Self, Error> {
        let artifacts = files
            .iter()
            .map(|p| {
                let bytes = std::fs::read(p).map_err(|e| Error::io(p, e))?;
                Ok(Artifact {
                    path: p.clone(),
                    sha256: hex::encode(Sha256::digest(&bytes)),
                })
            })
            .collect::<Result<_, Error>>()?;
        Ok(Self {
            command: command.into(),
            config: config.to_path_buf(),
            seed,
            output: output.to_path_buf(),
            artifacts,
        })
    }

    fn write(&self, path: &Path) -> Result<(), Error> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Solver(e.to_string()))?;
        write_atomic(path, text.as_bytes())
    }
}

enum Failure {
    Error(Error),
    /// Artifacts were written but the run did not meet its criterion.
    Unconverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, Error> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("NIM_THREADS") {
        Ok(s) if !s.trim().is_empty() => s
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::Argument(format!("NIM_THREADS must be a positive integer, got `{s}`"))),
        _ => Ok(None),
    }
}

fn print_summary(s: &Solution) {
    let mut text = format!(
        "stop reason: {}\niterations: {} (evaluations {})\nfinal loss: {:e}\n",
        s.stop, s.iterations, s.evaluations, s.loss.total
    );
    if let Some(e) = s.e_l2_u {
        text += &format!("e_l2_u: {e:e}\n");
    }
    if let Some(e) = s.e_l2_e {
        text += &format!("e_l2_E: {e:e}\n");
    }
    text += &format!("train time: {:.2} s\n", s.timings.train_seconds);
    // a closed pipe (e.g. `| head`) is not an error worth panicking over
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn finish_solution(command: &str, config: &Path, out: &Path, s: &Solution) -> Result<(), Failure> {
    let files = s.write(out)?;
    RunManifest::new(command, config, s.seed, out, &files)?.write(&out.join("manifest.json"))?;
    print_summary(s);
    if s.stop.converged() {
        Ok(())
    } else {
        Err(Failure::Unconverged(format!("training stopped without converging ({})", s.stop)))
    }
}

fn finish_check(report: &CheckReport) -> Result<(), Failure> {
    let _ = write!(std::io::stdout(), "{report}");
    match report.worst_failure() {
        None => Ok(()),
        Some(w) => Err(Failure::Unconverged(format!(
            "{} check failed: {} = {:e} exceeds {:e} at {}",
            report.check, w.label, w.value, w.tolerance, w.location
        ))),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = thread_count(cli.threads)? {
        if n == 0 {
            return Err(Error::Argument("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Solver(format!("configuring thread pool: {e}")))?;
    }
    let progress = cli.progress;
    match cli.command {
        Command::Solve {
            config,
            out,
            scheme,
            seed,
        } => {
            let cfg = ProblemConfig::load(&config)?;
            let s = run_forward(&cfg, RunOptions { scheme, seed, progress })?;
            finish_solution("solve", &config, &out, &s)
        }
        Command::Inverse {
            config,
            data,
            out,
            scheme,
            seed,
        } => {
            let cfg = ProblemConfig::load(&config)?;
            let inv = cfg
                .inverse
                .as_ref()
                .ok_or_else(|| Error::config("an [inverse] section is required"))?;
            let path = match data {
                Some(p) => p,
                None => cfg.resolve(
                    inv.data
                        .as_ref()
                        .ok_or_else(|| Error::config("no --data given and no inverse.data in the config"))?,
                ),
            };
            let set = StrainDataSet::read_csv(&path, inv.alpha)?;
            let s = run_inverse(&cfg, set, RunOptions { scheme, seed, progress })?;
            finish_solution("inverse", &config, &out, &s)
        }
        Command::MakeData {
            config,
            ndata,
            seed,
            out,
        } => {
            let cfg = ProblemConfig::load(&config)?;
            let gen = cfg.data.clone().unwrap_or_default();
            let ndata = ndata.unwrap_or(gen.ndata);
            let seed = seed.unwrap_or(gen.seed);
            let (set, truth) = generate_strain_data(&cfg, ndata, seed, progress)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let files = write_strain_data(&out, &set, &truth, ndata, seed)?;
            let mut manifest_path = out.clone().into_os_string();
            manifest_path.push(".manifest.json");
            RunManifest::new("make-data", &config, seed, &out, &files)?.write(Path::new(&manifest_path))?;
            let _ = writeln!(
                std::io::stdout(),
                "wrote {} rows to {}\ntruth loss: {:e} ({})",
                set.len(),
                out.display(),
                truth.loss.total,
                truth.stop
            );
            Ok(())
        }
        Command::Diagnose { config, check, seed } => {
            let cfg = ProblemConfig::load(&config)?;
            let report = match check {
                Check::Gradients => gradient_check(&cfg, seed)?,
                Check::Patch => patch_check(&cfg)?,
                Check::Reproduce => reproduce_check(&cfg, 1000, seed)?,
            };
            finish_check(&report)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Unconverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_SOLVER)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_SOLVER })
        }
    }
}
