//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use lattice_field::poisson::analytic_solution;
use lattice_field::{Complex, Field, Lattice, LatticeSpec, Matrix, MatrixCodec, RngStream};

/// Every rank's lattice for `dims` split over `nranks`.
pub fn lattices(dims: &[usize], nranks: usize) -> Vec<Arc<Lattice>> {
    let spec = LatticeSpec::new(dims, nranks);
    (0..nranks)
        .map(|r| Arc::new(Lattice::build(spec.clone(), r).expect("valid benchmark lattice")))
        .collect()
}

/// A 2x2 matrix field holding the analytic solution for amplitude `a`.
pub fn solution_field(lattice: &Arc<Lattice>, a: &Matrix) -> Field<MatrixCodec> {
    let mut f = Field::new(Arc::clone(lattice), MatrixCodec::new(2, 2)).expect("2x2 codec");
    f.fill_with(|x| analytic_solution(x, a)).expect("local sites");
    f
}

/// A well-conditioned random n x n matrix: uniform entries plus n on the diagonal.
pub fn random_matrix(n: usize, seed: u64) -> Matrix {
    let mut rng = RngStream::from_seed(seed);
    let mut m = Matrix::identity(n) * n as f64;
    for z in m.as_mut_slice() {
        *z += Complex::new(rng.uniform() - 0.5, rng.uniform() - 0.5);
    }
    m
}
