use knh::linalg::*;
use knh_oracles::{cp_brute_force, jacobi_singular_values};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal)).unwrap()
}

fn orthonormality_error(m: &DenseMatrix) -> f64 {
    let g = m.transpose().matmul(m).unwrap();
    g.max_abs_diff(&DenseMatrix::identity(m.cols())).unwrap()
}

fn residual(x: &DenseMatrix, f: &SvdFactors) -> f64 {
    let diff: f64 = x
        .to_row_major()
        .iter()
        .zip(f.reconstruct().to_row_major())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    diff.sqrt()
}

#[test]
fn rank_one_reconstruction() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut u: Vec<f64> = (0..7).map(|_| rng.sample(StandardNormal)).collect();
    let mut v: Vec<f64> = (0..5).map(|_| rng.sample(StandardNormal)).collect();
    for w in [&mut u, &mut v] {
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        w.iter_mut().for_each(|x| *x /= n);
    }
    let x = DenseMatrix::from_fn(7, 5, |i, j| u[i] * v[j]).unwrap();
    let f = truncated_svd(&x, 1).unwrap();
    assert!(residual(&x, &f) < 1e-10);
}

#[test]
fn truncation_error_matches_jacobi_oracle() {
    let x = gaussian(50, 30, 1);
    let f = truncated_svd(&x, 5).unwrap();
    let sigma = jacobi_singular_values(&x.to_rows());
    let expected = sigma[5..].iter().map(|s| s * s).sum::<f64>().sqrt();
    assert!((residual(&x, &f) - expected).abs() < 1e-8);
    for (a, b) in f.s.iter().zip(&sigma) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn optimality_on_full_rank_matrices() {
    for seed in 0..10 {
        let x = gaussian(20, 10, 100 + seed);
        let sigma = jacobi_singular_values(&x.to_rows());
        for r in 1..10 {
            let f = truncated_svd(&x, r).unwrap();
            let expected: f64 = sigma[r..].iter().map(|s| s * s).sum();
            assert!((residual(&x, &f).powi(2) - expected).abs() < 1e-8, "seed {seed} r {r}");
        }
    }
}

#[test]
fn randomized_path_agrees_with_dense_path() {
    // Low-rank plus small noise so the sketch captures the top subspace.
    let signal = gaussian(120, 6, 2).matmul(&gaussian(6, 80, 3)).unwrap();
    let noise = gaussian(120, 80, 5);
    let x = DenseMatrix::from_fn(120, 80, |i, j| signal.get(i, j) + 1e-3 * noise.get(i, j)).unwrap();
    let dense = dense_truncated_svd(&x, 4).unwrap();
    let rand = randomized_svd(&x, 4, &RandomizedSvdOptions::default()).unwrap();
    for (a, b) in dense.s.iter().zip(&rand.s) {
        assert!((a - b).abs() / a < 1e-8);
    }
    assert!(orthonormality_error(&rand.u) < 1e-8);
    assert!(orthonormality_error(&rand.v) < 1e-8);
}

#[test]
fn large_inputs_take_randomized_path() {
    let x = gaussian(DENSE_SVD_MAX_DIM + 20, DENSE_SVD_MAX_DIM + 3, 9);
    let f = truncated_svd(&x, 3).unwrap();
    assert_eq!(f.u.shape(), (DENSE_SVD_MAX_DIM + 20, 3));
    assert!(orthonormality_error(&f.u) < 1e-8);
    assert!(f.s.windows(2).all(|w| w[0] >= w[1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn svd_factors_are_orthonormal(rows in 1usize..25, cols in 1usize..25, seed in any::<u64>(), frac in 0.0f64..1.0) {
        let x = gaussian(rows, cols, seed);
        let r = 1 + ((rows.min(cols) - 1) as f64 * frac) as usize;
        let f = truncated_svd(&x, r).unwrap();
        prop_assert!(orthonormality_error(&f.u) < 1e-8);
        prop_assert!(orthonormality_error(&f.v) < 1e-8);
        prop_assert!(f.s.windows(2).all(|w| w[0] >= w[1]) && f.s.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn cp_reconstruction_matches_brute_force(
        i in 1usize..=5, j in 1usize..=5, k in 1usize..=5, rank in 1usize..=3, seed in any::<u64>()
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..rank).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
        };
        let (a, b, c) = (draw(i), draw(j), draw(k));
        let factors = CpFactors {
            a: DenseMatrix::from_rows(&a).unwrap(),
            b: DenseMatrix::from_rows(&b).unwrap(),
            c: DenseMatrix::from_rows(&c).unwrap(),
            rank,
            fit: 1.0,
            loss_history: Vec::new(),
            sweeps: 0,
            converged: true,
        };
        let t = cp_reconstruct(&factors).unwrap();
        let oracle = cp_brute_force(&a, &b, &c);
        for (ii, plane) in oracle.iter().enumerate() {
            for (jj, fiber) in plane.iter().enumerate() {
                for (kk, &v) in fiber.iter().enumerate() {
                    prop_assert!((t.get(ii, jj, kk) - v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn cp_loss_never_increases(seed in any::<u64>(), rank in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = SparseTensor3::from_fn([5, 6, 4], |_, _, _| {
            if rng.random_bool(0.6) { rng.random_range(0.0..3.0) } else { 0.0 }
        }).unwrap();
        prop_assume!(t.nnz() > 0);
        let f = cp_als(&t, rank, 60, 0.0, seed).unwrap();
        let scale = t.frobenius_norm().powi(2);
        for w in f.loss_history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10 * scale, "{} then {}", w[0], w[1]);
        }
    }
}

#[test]
fn rank_one_recovery() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut pos = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(0.1..1.0)).collect() };
    let (a, b, c) = (pos(6), pos(7), pos(8));
    let t = SparseTensor3::from_fn([6, 7, 8], |i, j, k| a[i] * b[j] * c[k]).unwrap();
    let f = cp_als(&t, 1, 200, 1e-12, 3).unwrap();
    assert!(f.fit >= 0.9999, "fit {}", f.fit);
}

#[test]
fn rank_five_recovery_best_of_five_seeds() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut draw = |n: usize| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..5).map(|_| rng.random_range(0.0..1.0)).collect()).collect()
    };
    let (a, b, c) = (draw(20), draw(20), draw(20));
    let dense = cp_brute_force(&a, &b, &c);
    let t = SparseTensor3::from_fn([20, 20, 20], |i, j, k| dense[i][j][k]).unwrap();
    let best = (0..5)
        .map(|seed| cp_als(&t, 5, 200, 1e-10, seed).unwrap().fit)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(best >= 0.999, "best fit {best}");
}

#[test]
fn cp_is_deterministic_per_seed() {
    let t = SparseTensor3::from_fn([4, 5, 6], |i, j, k| ((i * 7 + j * 3 + k) % 5) as f64).unwrap();
    let a = cp_als(&t, 3, 50, 1e-9, 8).unwrap();
    let b = cp_als(&t, 3, 50, 1e-9, 8).unwrap();
    assert_eq!(a.a, b.a);
    assert_eq!(a.c, b.c);
    assert_eq!(a.loss_history, b.loss_history);
}
