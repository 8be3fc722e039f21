//! `lfield`: run the distributed Poisson demo or inspect a saved field file.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 transport
//! failure, 3 bad or unreadable field file.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use lattice_field::field::inspect_file;
use lattice_field::poisson::{run_poisson, Backend, PoissonConfig};
use lattice_field::{Error, FieldError, TcpConfig};

#[derive(Parser, Debug)]
#[command(name = "lfield", version, about = "Distributed lattice field demo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the matrix-valued Poisson equation by Jacobi iteration.
    Solve(SolveArgs),
    /// Print the header of a saved field file.
    Inspect { path: PathBuf },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum BackendKind {
    Inproc,
    Tcp,
}

#[derive(clap::Args, Debug)]
struct SolveArgs {
    /// Lattice extents.
    #[arg(long, value_delimiter = ',', default_value = "10,10,10")]
    dims: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// Total number of ranks.
    #[arg(long, default_value_t = 1)]
    ranks: usize,
    #[arg(long, value_enum, default_value_t = BackendKind::Inproc)]
    backend: BackendKind,
    /// `host:port` of rank 0 (tcp backend).
    #[arg(long)]
    coordinator: Option<String>,
    /// Rank run by this process (tcp backend).
    #[arg(long)]
    rank: Option<usize>,
    /// Port this rank accepts peers on (tcp backend, 0 picks one).
    #[arg(long, default_value_t = 0)]
    listen: u16,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stop once the residual is below this.
    #[arg(long)]
    tol: Option<f64>,
    /// Save the final field here.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Run(Error),
}

/// Overrides how long TCP startup may take, in milliseconds.
const HANDSHAKE_TIMEOUT_VAR: &str = "LFIELD_HANDSHAKE_TIMEOUT_MS";

fn handshake_timeout() -> Result<Option<Duration>, String> {
    match std::env::var(HANDSHAKE_TIMEOUT_VAR) {
        Ok(v) => v
            .parse()
            .map(|ms| Some(Duration::from_millis(ms)))
            .map_err(|_| format!("{HANDSHAKE_TIMEOUT_VAR} must be a whole number of milliseconds")),
        Err(_) => Ok(None),
    }
}

impl SolveArgs {
    fn into_config(self) -> Result<PoissonConfig, String> {
        let backend = match self.backend {
            BackendKind::Inproc => {
                if self.coordinator.is_some() || self.rank.is_some() {
                    return Err("--coordinator and --rank need --backend tcp".into());
                }
                Backend::InProc
            }
            BackendKind::Tcp => {
                let coordinator = self.coordinator.ok_or("--backend tcp needs --coordinator")?;
                let rank = self.rank.ok_or("--backend tcp needs --rank")?;
                if rank >= self.ranks {
                    return Err(format!("--rank {rank} out of range for --ranks {}", self.ranks));
                }
                let mut config = TcpConfig::new(coordinator);
                config.listen_port = self.listen;
                if let Some(timeout) = handshake_timeout()? {
                    config.handshake_timeout = timeout;
                }
                Backend::Tcp { rank, config }
            }
        };
        if let Some(tol) = self.tol {
            if tol.is_nan() || tol <= 0.0 {
                return Err(format!("--tol must be positive, got {tol}"));
            }
        }
        Ok(PoissonConfig {
            dims: self.dims,
            iterations: self.iters,
            nranks: self.ranks,
            backend,
            seed: self.seed,
            output: self.out,
            tolerance: self.tol,
            ..PoissonConfig::default()
        })
    }
}

fn solve(args: SolveArgs) -> Result<(), Failure> {
    let config = args.into_config().map_err(Failure::Usage)?;
    let report = run_poisson(&config).map_err(Failure::Run)?;
    for c in &report.checkpoints {
        println!("iter={} residual={:e}", c.iteration, c.residual);
    }
    println!("max_error={:e}", report.max_error);
    Ok(())
}

fn inspect(path: PathBuf) -> Result<(), Failure> {
    let header = inspect_file(&path).map_err(|e| Failure::Run(e.into()))?;
    let dims: Vec<String> = header.dims.iter().map(|d| d.to_string()).collect();
    println!(
        "magic=ok version={} ndim={} dims={} elem={}B sites={}",
        header.version,
        header.dims.len(),
        dims.join(","),
        header.element_size,
        header.sites
    );
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.transport().is_some() {
        return 2;
    }
    match e {
        Error::Field(FieldError::Format(_) | FieldError::Io(_) | FieldError::Remote(_)) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Solve(args) => solve(args),
        Command::Inspect { path } => inspect(path),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
