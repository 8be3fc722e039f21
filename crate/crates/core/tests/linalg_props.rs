use lattice_field::{Complex, Matrix, RngStream};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

// Box-Muller from an unrelated generator
fn gaussian_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> Matrix {
    let mut g = || {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let data = (0..rows * cols).map(|_| Complex::new(g(), g())).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn bits(m: &Matrix) -> Vec<(u64, u64)> {
    m.as_slice().iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect()
}

#[test]
fn inverse_recovers_identity() {
    let mut rng = StdRng::seed_from_u64(1);
    for trial in 0..100 {
        let n = 1 + trial % 8;
        let m = gaussian_matrix(&mut rng, n, n);
        let prod = &m * &m.inv().unwrap();
        let err = (&prod - &Matrix::identity(n)).max_abs();
        assert!(err < 1e-10, "n={n} err={err}");
    }
}

#[test]
fn diagonal_exponentials_match_scalar_exp() {
    let mut rng = StdRng::seed_from_u64(2);
    for _ in 0..50 {
        let n = rng.gen_range(1..6);
        let d: Vec<Complex> = (0..n)
            .map(|_| Complex::new(rng.gen_range(-4.0..4.0), rng.gen_range(-3.0..3.0)))
            .collect();
        let e = Matrix::diag(&d).exp().unwrap();
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { d[i].exp() } else { Complex::new(0.0, 0.0) };
                let tol = 1e-13 * want.norm().max(1.0);
                assert!((e[(i, j)] - want).norm() < tol, "{:?} vs {want}", e[(i, j)]);
            }
        }
    }
}

#[test]
fn exponential_of_zero_is_exact() {
    for n in 1..6 {
        assert_eq!(Matrix::zeros(n, n).exp().unwrap(), Matrix::identity(n));
    }
}

#[test]
fn exponentials_commute_with_negation() {
    let mut rng = StdRng::seed_from_u64(3);
    for _ in 0..20 {
        let m = gaussian_matrix(&mut rng, 4, 4);
        let prod = &m.exp().unwrap() * &(-&m).exp().unwrap();
        assert!((&prod - &Matrix::identity(4)).max_abs() < 1e-9);
    }
}

#[test]
fn random_su_over_many_seeds() {
    for n in [2, 3, 4] {
        for seed in 0..100 {
            let mut rng = RngStream::from_seed(seed);
            let u = Matrix::random_su(n, &mut rng).unwrap();
            let unitarity = (&(&u * &u.hermitian()) - &Matrix::identity(n)).max_abs();
            let det = (u.det().unwrap() - Complex::new(1.0, 0.0)).norm();
            assert!(unitarity < 1e-12, "n={n} seed={seed}: {unitarity}");
            assert!(det < 1e-12, "n={n} seed={seed}: {det}");
        }
    }
}

#[test]
fn random_su_is_reproducible() {
    let a = Matrix::random_su(3, &mut RngStream::for_site(5, 17)).unwrap();
    let b = Matrix::random_su(3, &mut RngStream::for_site(5, 17)).unwrap();
    assert_eq!(bits(&a), bits(&b));
}

fn matrix_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), rows * cols).prop_map(move |v| {
        Matrix::from_vec(rows, cols, v.into_iter().map(|(r, i)| Complex::new(r, i)).collect()).unwrap()
    })
}

proptest! {
    #[test]
    fn hermitian_is_an_involution(m in (1usize..5, 1usize..5).prop_flat_map(|(r, c)| matrix_strategy(r, c))) {
        prop_assert_eq!(bits(&m.hermitian().hermitian()), bits(&m));
    }

    // (MN)^H = N^H M^H exactly: conjugation commutes with every rounding step
    #[test]
    fn hermitian_reverses_products(
        (m, n) in (1usize..5, 1usize..5, 1usize..5)
            .prop_flat_map(|(a, b, c)| (matrix_strategy(a, b), matrix_strategy(b, c)))
    ) {
        let lhs = (&m * &n).hermitian();
        let rhs = &n.hermitian() * &m.hermitian();
        prop_assert_eq!(lhs.as_slice(), rhs.as_slice());
    }

    #[test]
    fn assignment_takes_the_new_shape(r0 in 0usize..5, c0 in 0usize..5, r in 0usize..5, c in 0usize..5) {
        let mut m = Matrix::zeros(r0, c0);
        let v = Matrix::zeros(r, c);
        m.assign(&v);
        prop_assert_eq!(m.shape(), (r, c));
        prop_assert_eq!(m.as_slice().len(), r * c);
    }

    #[test]
    fn determinant_is_multiplicative(
        (a, b) in (1usize..5).prop_flat_map(|n| (matrix_strategy(n, n), matrix_strategy(n, n)))
    ) {
        let lhs = (&a * &b).det().unwrap();
        let rhs = a.det().unwrap() * b.det().unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-9 * rhs.norm().max(1.0));
    }
}
