mod common;

use lattice_field::lattice::splitmix64;
use lattice_field::{Lattice, LatticeSpec, RngStream, Sign};
use proptest::prelude::*;

fn dims_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..6, 1..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_site_has_one_owner(dims in dims_strategy(), ranks in 1usize..7) {
        let v: usize = dims.iter().product();
        let nranks = ranks.min(v);
        let all = common::lattices(&LatticeSpec::new(&dims, nranks));
        let mut seen = vec![0; v];
        for l in &all {
            for &i in l.local_sites() {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let total: usize = all.iter().map(|l| l.local_sites().len()).sum();
        prop_assert_eq!(total, v);
    }

    #[test]
    fn torus_moves_invert(dims in dims_strategy()) {
        let l = Lattice::build(LatticeSpec::new(&dims, 1), 0).unwrap();
        for i in 0..l.volume() {
            for mu in 0..l.ndim() {
                let up = l.neighbor(i, mu, Sign::Up).unwrap();
                let down = l.neighbor(i, mu, Sign::Down).unwrap();
                prop_assert_eq!(l.neighbor(up, mu, Sign::Down).unwrap(), i);
                prop_assert_eq!(l.neighbor(down, mu, Sign::Up).unwrap(), i);
            }
        }
    }

    #[test]
    fn halo_and_send_lists_mirror(dims in dims_strategy(), ranks in 1usize..7, round_robin in any::<bool>()) {
        let v: usize = dims.iter().product();
        let nranks = ranks.min(v);
        let mut spec = LatticeSpec::new(&dims, nranks);
        if round_robin {
            spec = spec.with_partitioner(|i: usize, _: usize, p: usize| i % p);
        }
        let all = common::lattices(&spec);
        for r in 0..nranks {
            for p in 0..nranks {
                prop_assert_eq!(all[r].halo_list(p), all[p].send_list(r));
                let h = all[r].halo_list(p);
                prop_assert!(h.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(h.iter().all(|&i| all[r].owner(i) == p));
            }
            prop_assert!(all[r].halo_list(r).is_empty());
        }
    }

    #[test]
    fn construction_is_deterministic(dims in dims_strategy(), ranks in 1usize..5, seed in any::<u64>()) {
        let v: usize = dims.iter().product();
        let spec = LatticeSpec::new(&dims, ranks.min(v)).with_seed(seed);
        for r in 0..spec.nranks {
            let a = Lattice::build(spec.clone(), r).unwrap();
            let b = Lattice::build(spec.clone(), r).unwrap();
            prop_assert!(a.tables() == b.tables());
        }
    }
}

/// Straight transcription of the stream definition, independent of `RngStream`.
fn reference_stream(seed: u64, index: usize, n: usize) -> Vec<u64> {
    let gamma = 0x9E37_79B9_7F4A_7C15u64;
    let mut z = (seed ^ gamma.wrapping_mul(index as u64 + 1)).wrapping_add(gamma);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    let mut s = z ^ (z >> 31);
    if s == 0 {
        s = 1;
    }
    (0..n)
        .map(|_| {
            s ^= s >> 12;
            s ^= s << 25;
            s ^= s >> 27;
            s.wrapping_mul(0x2545_F491_4F6C_DD1D)
        })
        .collect()
}

#[test]
fn site_stream_matches_reference() {
    for (seed, index) in [(0u64, 0usize), (1, 999), (u64::MAX, 12345), (0xDEAD_BEEF, 7)] {
        let mut r = RngStream::for_site(seed, index);
        let got: Vec<u64> = (0..100).map(|_| r.uniform64()).collect();
        assert_eq!(got, reference_stream(seed, index, 100));
    }
    assert_eq!(RngStream::from_seed(4).state(), splitmix64(4));
}

#[test]
fn site_streams_ignore_partitioning() {
    let dims = [6, 5, 4];
    let one = common::lattices(&LatticeSpec::new(&dims, 1).with_seed(11));
    let many = common::lattices(&LatticeSpec::new(&dims, 3).with_seed(11));
    for i in 0..120 {
        let mut a = one[0].site_rng(i).unwrap();
        let owner = many[0].owner(i);
        let mut b = many[owner].site_rng(i).unwrap();
        for _ in 0..50 {
            assert_eq!(a.uniform64(), b.uniform64());
        }
    }
    assert!(one[0].site_rng(120).is_err());
}

#[test]
fn gaussian_moments() {
    let mut r = RngStream::from_seed(20240601);
    let n = 1_000_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let g = r.gaussian();
        sum += g;
        sum_sq += g * g;
    }
    let mean = sum / n as f64;
    let var = sum_sq / n as f64 - mean * mean;
    assert!(mean.abs() < 4e-3, "mean {mean}");
    assert!((var - 1.0).abs() < 0.01, "variance {var}");
}

#[test]
fn uniform_stays_in_unit_interval() {
    let mut r = RngStream::for_site(3, 3);
    let mut lo: f64 = 1.0;
    let mut hi: f64 = 0.0;
    for _ in 0..200_000 {
        let u = r.uniform();
        assert!((0.0..1.0).contains(&u));
        lo = lo.min(u);
        hi = hi.max(u);
    }
    assert!(lo < 1e-4 && hi > 1.0 - 1e-4);
}

#[test]
fn two_slab_halo_sizes_by_enumeration() {
    let all = common::lattices(&LatticeSpec::new(&[10, 10, 10], 2));
    for l in &all {
        let peer = 1 - l.rank();
        // boundary planes x0 = 0 and x0 = 4 (rank 0) or 5 and 9 (rank 1) read one plane each side
        let count = (0..1000)
            .filter(|&i| {
                l.owner(i) == peer
                    && l.local_sites().iter().any(|&x| {
                        (0..3).any(|mu| {
                            l.neighbor(x, mu, Sign::Up).unwrap() == i
                                || l.neighbor(x, mu, Sign::Down).unwrap() == i
                        })
                    })
            })
            .count();
        assert_eq!(count, 200);
        assert_eq!(l.halo_list(peer).len(), count);
    }
}
