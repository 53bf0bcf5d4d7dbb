//! `unistoch`: command-line front end for the `unistoch` library.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::output::{emit_error, Context};

#[derive(Parser, Debug)]
#[command(name = "unistoch", version, about = "Generalized unistochastic matrices")]
pub struct Cli {
    /// Worker threads for sampling and solver restarts (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct SeedArg {
    /// RNG seed; falls back to UNISTOCH_SEED, then 0.
    #[arg(long, env = "UNISTOCH_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0.1)]
    pub step_init: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub grad_tol: f64,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Image φ_{d,s}(U) of a block unitary.
    Map {
        /// Complex matrix JSON file.
        #[arg(long, required_unless_present = "fixture", conflicts_with = "fixture")]
        unitary: Option<PathBuf>,
        /// Built-in matrix: block-swap-4, derangement-6, householder-3, fourier-<d>.
        #[arg(long)]
        fixture: Option<String>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        s: Option<usize>,
    },
    /// The 6x6 orthogonal family U_q and its (3,2) image.
    Uq {
        #[arg(long)]
        q: f64,
        #[arg(long)]
        emit_unitary: Option<PathBuf>,
    },
    /// Real orthogonal embedding of a block unitary (block size doubles).
    Realify {
        #[arg(long, required_unless_present = "fixture", conflicts_with = "fixture")]
        unitary: Option<PathBuf>,
        #[arg(long)]
        fixture: Option<String>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        s: Option<usize>,
        /// Write the embedded matrix here instead of inline.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bracelet report for every row and column pair; order-s screens with --s.
    Bracelet {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        s: Option<usize>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Grid scan of the slice set E(s) as CSV (alpha1, beta1, in_set).
    Eset {
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 201)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Birkhoff decomposition into permutation matrices.
    Decompose {
        #[arg(long)]
        matrix: PathBuf,
    },
    /// Rational approximation by an image of φ with an explicit witness.
    Approximate {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        emit_witness: Option<PathBuf>,
    },
    /// Certify membership in the image of φ_{d,s}.
    Member {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        s: usize,
        /// Warm start for the numerical search (complex matrix JSON).
        #[arg(long)]
        start: Option<PathBuf>,
        #[arg(long)]
        emit_certificate: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Feasibility of the order-s bracelet condition for one pair of vectors.
    Pair {
        /// Comma-separated probability vector.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        beta: Vec<f64>,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        emit_certificate: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Draws from μ_{d,s} as CSV, one flattened matrix per line.
    Sample {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Monte-Carlo moments against the closed forms.
    Moments {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Monte-Carlo variance, covariances and correlations against the closed forms.
    Correlations {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Eigenvalues of draws from μ_{d,s} as CSV (re, im).
    Spectra {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the d-cusped reference curve as CSV (re, im).
        #[arg(long)]
        hypocycloid: Option<PathBuf>,
        #[arg(long, default_value_t = 512)]
        points: usize,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Membership verdicts on uniform samples of the circulant triangle.
    Slice3 {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Admissible weights on the edge between two permutations.
    Lattice {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        s: usize,
        /// Cycle notation, e.g. "id", "123", "(12)(34)".
        #[arg(long)]
        pi: String,
        #[arg(long)]
        sigma: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("failed to configure thread pool: {e}");
        }
    }
    let mut ctx = Context::new();
    match commands::run(&cli.command, &mut ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            emit_error(&e);
            ExitCode::from(1)
        }
    }
}
