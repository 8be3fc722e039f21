//! Jacobi solver for a matrix-valued Poisson equation on a 3D torus.
//!
//! Solves `∇²φ(x) = f(x)` with `f(x) = A·sin(2π x₁/L₁)` by repeating
//!
//! ```text
//! φ(x) ← (Σ_μ [φ(x+μ̂) + φ(x−μ̂)] − f(x)) / 6
//! ```
//!
//! from `φ = 0`. Sweeps are double-buffered: every site reads the values of
//! the previous sweep, so the result does not depend on site order or on how
//! the lattice is split across ranks.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;

use crate::field::{Codec, Field, MatrixCodec};
use crate::lattice::{Lattice, LatticeSpec, Sign, Site};
use crate::linalg::{Complex, Matrix, I};
use crate::transport::{all_reduce_max, InProcHub, TcpConfig, TcpEndpoint, Transport};
use crate::{Error, Result};

pub const CHECKPOINT_EVERY: usize = 100;

/// `[[1, i], [3, 1]]`.
pub fn default_amplitude() -> Matrix {
    let one = Complex::new(1.0, 0.0);
    Matrix::from_rows(&[[one, I], [Complex::new(3.0, 0.0), one]])
}

#[derive(Debug, Clone)]
pub enum Backend {
    InProc,
    /// This process runs a single rank over TCP.
    Tcp { rank: usize, config: TcpConfig },
}

#[derive(Debug, Clone)]
pub struct PoissonConfig {
    pub dims: Vec<usize>,
    pub iterations: usize,
    pub nranks: usize,
    pub backend: Backend,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub amplitude: Matrix,
    /// Stop as soon as the residual drops below this.
    pub tolerance: Option<f64>,
}

impl Default for PoissonConfig {
    fn default() -> Self {
        PoissonConfig {
            dims: vec![10, 10, 10],
            iterations: 1000,
            nranks: 1,
            backend: Backend::InProc,
            seed: 0,
            output: None,
            amplitude: default_amplitude(),
            tolerance: None,
        }
    }
}

impl PoissonConfig {
    fn validate(&self) -> Result<()> {
        if self.dims.len() != 3 {
            return Err(Error::Config(format!(
                "the demo needs 3 extents, got {}",
                self.dims.len()
            )));
        }
        if self.amplitude.shape() != (2, 2) {
            return Err(Error::Config("amplitude must be a 2x2 matrix".into()));
        }
        if self.nranks == 0 {
            return Err(Error::Config("nranks must be at least 1".into()));
        }
        Ok(())
    }

    pub fn lattice_spec(&self) -> LatticeSpec {
        LatticeSpec::new(&self.dims, self.nranks).with_seed(self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub iteration: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub checkpoints: Vec<Checkpoint>,
    pub iterations: usize,
    /// Largest entry deviation from the analytic solution.
    pub max_error: f64,
}

/// `f(x) = A·sin(2π x₁/L₁)`.
pub fn source_term(x: &Site<'_>, a: &Matrix) -> Matrix {
    let l1 = x.lattice().dims()[1] as f64;
    a * (2.0 * PI * x.x(1) as f64 / l1).sin()
}

/// `φ*(x) = A·sin(2π x₁/L₁) / (2cos(2π/L₁) − 2)`, the zero-mean solution.
pub fn analytic_solution(x: &Site<'_>, a: &Matrix) -> Matrix {
    let l1 = x.lattice().dims()[1] as f64;
    let denom = 2.0 * (2.0 * PI / l1).cos() - 2.0;
    &source_term(x, a) / denom
}

fn neighbor_sum(phi: &Field<MatrixCodec>, index: usize) -> Result<Matrix> {
    let lattice = phi.lattice();
    let mut sum: Option<Matrix> = None;
    for mu in 0..lattice.ndim() {
        for sign in [Sign::Up, Sign::Down] {
            let v = phi.get_index(lattice.neighbor_unchecked(index, mu, sign))?;
            sum = Some(match sum {
                None => v,
                Some(s) => s + v,
            });
        }
    }
    Ok(sum.expect("at least one dimension"))
}

/// One Jacobi sweep over every local site. Halo copies must be current.
pub fn jacobi_sweep(phi: &mut Field<MatrixCodec>, a: &Matrix) -> Result<()> {
    let lattice = Arc::clone(phi.lattice());
    let elem = phi.element_size();
    let codec = *phi.codec();
    let denom = 2.0 * lattice.ndim() as f64;
    let mut next = vec![0u8; lattice.local_sites().len() * elem];
    for (k, x) in lattice.for_local_sites().enumerate() {
        let value = (neighbor_sum(phi, x.index())? - source_term(&x, a)) / denom;
        codec.encode(&value, &mut next[k * elem..(k + 1) * elem])?;
    }
    phi.local_block_mut().copy_from_slice(&next);
    Ok(())
}

/// Largest entry of `Σ_μ[φ(x+μ̂)+φ(x−μ̂)] − 6φ(x) − f(x)` over local sites.
pub fn local_residual(phi: &Field<MatrixCodec>, a: &Matrix) -> Result<f64> {
    let lattice = phi.lattice();
    let center = 2.0 * lattice.ndim() as f64;
    let mut max: f64 = 0.0;
    for x in lattice.for_local_sites() {
        let r = neighbor_sum(phi, x.index())? - phi.get(&x)? * center - source_term(&x, a);
        max = max.max(r.max_abs());
    }
    Ok(max)
}

/// Largest entry of `φ − φ*` over local sites.
pub fn local_error(phi: &Field<MatrixCodec>, a: &Matrix) -> Result<f64> {
    let mut max: f64 = 0.0;
    for x in phi.lattice().for_local_sites() {
        max = max.max((phi.get(&x)? - analytic_solution(&x, a)).max_abs());
    }
    Ok(max)
}

/// Runs this endpoint's rank of the solve. Collective over all ranks.
pub fn run_rank<T: Transport + ?Sized>(config: &PoissonConfig, t: &mut T) -> Result<ConvergenceReport> {
    config.validate()?;
    if t.nranks() != config.nranks {
        return Err(Error::Config(format!(
            "endpoint has {} ranks, config asks for {}",
            t.nranks(),
            config.nranks
        )));
    }
    let lattice = Arc::new(Lattice::build(config.lattice_spec(), t.rank())?);
    let a = &config.amplitude;
    let mut phi = Field::new(Arc::clone(&lattice), MatrixCodec::new(2, 2))?;
    phi.update(t)?;

    let mut checkpoints = Vec::new();
    let mut residual = all_reduce_max(t, local_residual(&phi, a)?)?;
    checkpoints.push(Checkpoint {
        iteration: 0,
        residual,
    });
    let mut done = 0;
    while done < config.iterations {
        if config.tolerance.is_some_and(|tol| residual < tol) {
            break;
        }
        jacobi_sweep(&mut phi, a)?;
        phi.update(t)?;
        done += 1;
        let at_checkpoint = done % CHECKPOINT_EVERY == 0 || done == config.iterations;
        if at_checkpoint || config.tolerance.is_some() {
            residual = all_reduce_max(t, local_residual(&phi, a)?)?;
            let converged = config.tolerance.is_some_and(|tol| residual < tol);
            if at_checkpoint || converged {
                checkpoints.push(Checkpoint {
                    iteration: done,
                    residual,
                });
            }
        }
    }

    if let Some(path) = &config.output {
        phi.save(path, t)?;
    }
    let max_error = all_reduce_max(t, local_error(&phi, a)?)?;
    Ok(ConvergenceReport {
        checkpoints,
        iterations: done,
        max_error,
    })
}

/// Runs the whole solve as described by `config`.
///
/// With the in-process backend all ranks run as threads of this process and
/// rank 0's report is returned. With TCP this process runs just its own rank.
pub fn run_poisson(config: &PoissonConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    match &config.backend {
        Backend::InProc => {
            let hub = InProcHub::new(config.nranks);
            let endpoints = (0..config.nranks)
                .map(|r| hub.endpoint(r))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let mut reports: Vec<Result<ConvergenceReport>> = thread::scope(|s| {
                let handles: Vec<_> = endpoints
                    .into_iter()
                    .map(|mut ep| s.spawn(move || run_rank(config, &mut ep)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("solver thread panicked"))
                    .collect()
            });
            // report the first real failure rather than a peer's hang-up
            if let Some(pos) = reports
                .iter()
                .position(|r| matches!(r, Err(e) if !e.is_disconnect()))
            {
                return reports.swap_remove(pos);
            }
            reports.swap_remove(0)
        }
        Backend::Tcp { rank, config: tcp } => {
            let mut ep = TcpEndpoint::open(*rank, config.nranks, tcp)?;
            let report = run_rank(config, &mut ep);
            ep.close();
            report
        }
    }
}
