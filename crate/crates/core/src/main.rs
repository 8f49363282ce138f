use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use gaplab::harness::{exit_code_for, run, Command, RunConfig, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "gaplab", version, about = "Fundamental-gap laboratory for convex spherical domains")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Model eigenvalues μ₀, μ₁ and eigenfunctions
    Eigen,
    /// Robin eigenfunctions and c(ε)
    Robin,
    /// s(k) search and initial moduli ψ_{k,0}
    Modulus,
    /// Full construction followed by the parabolic flow
    Flow,
    /// Gap chain on geodesic balls and two-point sampling
    VerifyGap,
    /// Model spectrum over the sweep grid
    Sweep,
}

#[derive(Args)]
struct Flags {
    /// JSON config file; flags override its entries
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    n: Option<u32>,
    /// Diameter D ∈ (0, π)
    #[arg(long = "D", global = true, allow_negative_numbers = true)]
    diameter: Option<f64>,
    /// Comma-separated k list
    #[arg(long, global = true, value_delimiter = ',')]
    k: Option<Vec<u32>>,
    #[arg(long, global = true)]
    nodes: Option<usize>,
    #[arg(long, global = true)]
    t_end: Option<f64>,
    /// Flow convergence tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the merged config as JSON and exit
    #[arg(long, global = true)]
    print_config: bool,
}

impl Flags {
    fn merge(&self) -> gaplab::Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.n {
            c.n = v;
        }
        if let Some(v) = self.diameter {
            c.diameter = v;
        }
        if let Some(v) = &self.k {
            c.k_list = v.clone();
        }
        if let Some(v) = self.nodes {
            c.grid_nodes = v;
        }
        if let Some(v) = self.t_end {
            c.t_end = v;
        }
        if let Some(v) = self.tol {
            c.tolerances.flow = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.out {
            c.output_dir = v.clone();
        }
        Ok(c)
    }
}

fn init_threads() {
    let Ok(v) = std::env::var("GAPLAB_THREADS") else { return };
    match v.parse::<usize>() {
        Ok(n) if n > 0 => {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => eprintln!("ignoring GAPLAB_THREADS={v}: expected a positive integer"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    let cfg = match cli.flags.merge() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    if cli.flags.print_config {
        let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return ExitCode::SUCCESS;
    }
    let cmd = match cli.command {
        Cmd::Eigen => Command::Eigen,
        Cmd::Robin => Command::Robin,
        Cmd::Modulus => Command::Modulus,
        Cmd::Flow => Command::Flow,
        Cmd::VerifyGap => Command::VerifyGap,
        Cmd::Sweep => Command::Sweep,
    };
    match run(cmd, &cfg) {
        Ok(outcome) => {
            let m = &outcome.manifest;
            for v in &m.verdicts {
                println!("{} {}: {}", if v.passed { "PASS" } else { "FAIL" }, v.stage, v.detail);
            }
            if let Some(e) = &outcome.error {
                eprintln!("error: {e}");
            }
            println!("{} files, digest {}, manifest {}", m.files.len(), m.content_digest, cfg.output_dir.join("manifest.json").display());
            ExitCode::from(m.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
