//! `villain`: batch front end for sampling, measurement, exact
//! verification and benchmarking.
//!
//! Configuration comes from an optional TOML or JSON file; flags override
//! it. The resolved config is embedded in every artifact.

mod artifact;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use villain_core::BoundaryCondition;

use config::{Command, Format, Observable, RunConfig, SampleModel};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] villain_core::Error),
}

#[derive(Parser)]
#[command(name = "villain", version, about = "Villain model, Coulomb gas and integer-valued GFF toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Run chains and stream snapshots as JSON lines.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        model: Option<SampleModel>,
    },
    /// Monte Carlo estimate of one observable, as a JSON report.
    Measure {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        observable: Option<Observable>,
        /// First cell, `x,y`.
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        at: Option<[i64; 2]>,
        /// Second cell, `x,y`.
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        to: Option<[i64; 2]>,
        #[arg(long)]
        radius: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        z_limit: Option<f64>,
    },
    /// Exact identities on a small graph; exits nonzero if any fails.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        transfers: Option<usize>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Local pipeline against the Metropolis baseline.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
    },
    /// Integer Gaussian statistics and the error function.
    Ig {
        #[command(flatten)]
        common: Common,
        /// Per-`a` table of mean, variance, third moment and M(beta).
        #[arg(long)]
        table: bool,
        #[arg(long)]
        a_points: Option<usize>,
    },
    /// Green function column as CSV.
    Green {
        #[command(flatten)]
        common: Common,
        /// Source cell, `x,y`.
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        from: Option<[i64; 2]>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML or JSON config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Box radius: the grid is [-n, n]².
    #[arg(long)]
    n: Option<usize>,
    /// Boundary condition, `free` or `zero`.
    #[arg(long, value_parser = parse_bc)]
    bc: Option<BoundaryCondition>,
    /// Inverse temperature.
    #[arg(long)]
    beta: Option<f64>,
    /// Cell degree for height models and Green columns, 0 or 2.
    #[arg(long)]
    degree: Option<usize>,
    /// Master seed; chains use independent streams of it.
    #[arg(long)]
    seed: Option<u64>,
    /// Recorded sweeps per chain after burn-in.
    #[arg(long)]
    sweeps: Option<usize>,
    /// Discarded sweeps; defaults to 100 n.
    #[arg(long)]
    burn_in: Option<usize>,
    /// Sweeps between recorded samples.
    #[arg(long)]
    thin: Option<usize>,
    /// Independent chains.
    #[arg(long)]
    chains: Option<usize>,
    /// Batch-means batches across all chains, at least 32.
    #[arg(long)]
    batches: Option<usize>,
    /// Heat-bath mixture components below e^-margin of the heaviest are dropped.
    #[arg(long)]
    tail_margin: Option<f64>,
    /// Largest charge change proposed by the Metropolis baseline.
    #[arg(long)]
    metropolis_step: Option<i64>,
    /// Root vertex `x,y` instead of the default.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    root_vertex: Option<[i64; 2]>,
    /// Root face: the square with lower-left corner `x,y`.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    root_face: Option<[i64; 2]>,
    /// Output directory; defaults to $VILLAIN_OUTPUT_DIR, then `villain-out`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

fn parse_point(s: &str) -> Result<[i64; 2], String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected `x,y`, got `{s}`"))?;
    let p = |t: &str| t.trim().parse::<i64>().map_err(|e| format!("`{t}`: {e}"));
    Ok([p(x)?, p(y)?])
}

fn parse_bc(s: &str) -> Result<BoundaryCondition, String> {
    s.parse().map_err(|e: villain_core::Error| e.to_string())
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl Common {
    fn resolve(self, command: Command) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => config::load(p)?,
            None => RunConfig::default(),
        };
        c.command = Some(command);
        set(&mut c.geometry.n, self.n);
        set(&mut c.geometry.bc, self.bc);
        if self.root_vertex.is_some() {
            c.geometry.root_vertex = self.root_vertex;
        }
        if self.root_face.is_some() {
            c.geometry.root_face = self.root_face;
        }
        set(&mut c.model.beta, self.beta);
        set(&mut c.model.degree, self.degree);
        set(&mut c.seed, self.seed);
        set(&mut c.chain.sweeps, self.sweeps);
        if self.burn_in.is_some() {
            c.chain.burn_in = self.burn_in;
        }
        set(&mut c.chain.thin, self.thin);
        set(&mut c.chain.chains, self.chains);
        set(&mut c.chain.batches, self.batches);
        set(&mut c.chain.tail_margin, self.tail_margin);
        set(&mut c.chain.metropolis_step, self.metropolis_step);
        if self.out.is_some() {
            c.output.dir = self.out;
        }
        if self.format.is_some() {
            c.output.format = self.format;
        }
        Ok(c)
    }
}

impl Sub {
    fn resolve(self) -> Result<RunConfig, CliError> {
        let c = match self {
            Sub::Sample { common, model } => {
                let mut c = common.resolve(Command::Sample)?;
                set(&mut c.sample.model, model);
                c
            }
            Sub::Measure { common, observable, at, to, radius, eps, n_list, alphas, count, z_limit } => {
                let mut c = common.resolve(Command::Measure)?;
                let m = &mut c.measure;
                set(&mut m.observable, observable);
                set(&mut m.at, at);
                set(&mut m.to, to);
                set(&mut m.radius, radius);
                set(&mut m.eps, eps);
                set(&mut m.n_list, n_list);
                set(&mut m.alphas, alphas);
                set(&mut m.count, count);
                set(&mut m.z_limit, z_limit);
                c
            }
            Sub::Verify { common, transfers, tolerance } => {
                let mut c = common.resolve(Command::Verify)?;
                set(&mut c.verify.transfers, transfers);
                set(&mut c.verify.tolerance, tolerance);
                c
            }
            Sub::Bench { common, n_list } => {
                let mut c = common.resolve(Command::Bench)?;
                set(&mut c.bench.n_list, n_list);
                c
            }
            Sub::Ig { common, table, a_points } => {
                let mut c = common.resolve(Command::Ig)?;
                if table {
                    c.ig.table = true;
                }
                set(&mut c.ig.a_points, a_points);
                c
            }
            Sub::Green { common, from } => {
                let mut c = common.resolve(Command::Green)?;
                if from.is_some() {
                    c.green.from = from;
                }
                c
            }
        };
        c.validate()?;
        Ok(c)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = cli.command.resolve().and_then(|c| commands::run(&c));
    match result {
        Ok(report) => {
            println!("{}", report.path.display());
            if report.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("verification failed");
                ExitCode::from(1)
            }
        }
        Err(e @ CliError::Usage(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
