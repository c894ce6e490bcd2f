//! Cross-checks against independent implementations, plus property tests.

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rd_core::attacks::fgsm_perturb;
use rd_core::defenses::random_noise_apply;
use rd_core::numerics::{cross_entropy_from_logits, cross_entropy_grad, jacobi_eigen, mse_grad, mse_loss};
use rd_core::{FgsmConfig, Matrix, MlpSpec, NoiseConfig, PcaModel, QNetwork};

/// Correlated data: random mixing of a few latent factors plus small noise.
fn correlated(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent = 4;
    let mix: Vec<f64> = (0..latent * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let z: Vec<f64> = (0..latent).map(|i| rng.random_range(-1.0..1.0) * (latent - i) as f64).collect();
        for j in 0..d {
            let v: f64 = (0..latent).map(|i| z[i] * mix[i * d + j]).sum();
            data.push(v + 0.01 * rng.random_range(-1.0..1.0));
        }
    }
    Matrix::from_vec(n, d, data).unwrap()
}

fn covariance(data: &Matrix) -> DMatrix<f64> {
    let m = DMatrix::from_row_slice(data.rows(), data.cols(), data.data());
    let mean = m.row_mean();
    let centered = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] - mean[j]);
    centered.transpose() * &centered / (m.nrows() as f64 - 1.0)
}

#[test]
fn jacobi_agrees_with_nalgebra() {
    let data = correlated(300, 25, 1);
    let cov = covariance(&data);
    let ours = Matrix::from_vec(25, 25, cov.transpose().as_slice().to_vec()).unwrap();
    let (mut vals, _) = jacobi_eigen(&ours).unwrap();
    let mut theirs: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    theirs.sort_by(|a, b| b.total_cmp(a));
    let scale = theirs[0];
    for (a, b) in vals.iter().zip(&theirs) {
        assert!((a - b).abs() <= 1e-10 * scale, "{a} vs {b}");
    }
}

#[test]
fn pca_components_match_nalgebra_eigenvectors() {
    let data = correlated(400, 25, 2);
    let pca = PcaModel::fit(&data, 0.95).unwrap();
    let eig = SymmetricEigen::new(covariance(&data));
    let mut order: Vec<usize> = (0..25).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().sum();
    // Oracle k: smallest count whose cumulative fraction reaches the target.
    let mut cum = 0.0;
    let mut k = 0;
    while cum / total < 0.95 {
        cum += eig.eigenvalues[order[k]];
        k += 1;
    }
    assert_eq!(pca.k(), k);
    for (i, comp) in pca.components.iter_rows().enumerate() {
        let v = eig.eigenvectors.column(order[i]);
        let cos: f64 = comp.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        assert!((cos.abs() - 1.0).abs() < 1e-8, "component {i}: |cos| = {}", cos.abs());
        assert!((pca.explained_variance[i] - eig.eigenvalues[order[i]]).abs() < 1e-9 * total);
    }
}

#[test]
fn loss_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-6;
    for _ in 0..50 {
        let pred: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let target: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let class = rng.random_range(0..5);
        let g_mse = mse_grad(&pred, &target).unwrap();
        let g_ce = cross_entropy_grad(&pred, class).unwrap();
        for i in 0..5 {
            let (mut up, mut down) = (pred.clone(), pred.clone());
            up[i] += h;
            down[i] -= h;
            let fd = (mse_loss(&up, &target).unwrap() - mse_loss(&down, &target).unwrap()) / (2.0 * h);
            assert!((fd - g_mse[i]).abs() < 1e-7);
            let fd = (cross_entropy_from_logits(&up, class).unwrap() - cross_entropy_from_logits(&down, class).unwrap())
                / (2.0 * h);
            assert!((fd - g_ce[i]).abs() < 1e-7);
        }
    }
}

fn small_q(seed: u64) -> QNetwork {
    QNetwork::new(MlpSpec::relu(&[25, 24, 5]).unwrap(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pca_reconstruction_is_idempotent(seed in 0u64..1000, target in 0.5f64..1.0) {
        let data = correlated(60, 25, seed);
        let pca = PcaModel::fit(&data, target).unwrap();
        let x: Vec<f64> = data.row(seed as usize % 60).iter().map(|v| v * 1.3 + 0.2).collect();
        let once = pca.reconstruct(&x).unwrap();
        let twice = pca.reconstruct(&once).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn fgsm_moves_each_coordinate_by_exactly_epsilon_or_not_at_all(
        state in prop::collection::vec(-1.0f64..1.0, 25),
        eps in 0.0f64..0.5,
        net_seed in 0u64..8,
    ) {
        let q = small_q(net_seed);
        let adv = fgsm_perturb(&q, &state, &FgsmConfig::new(eps)).unwrap();
        for (a, s) in adv.iter().zip(&state) {
            prop_assert!(*a == s + eps || *a == s - eps || *a == *s);
        }
    }

    #[test]
    fn noise_output_respects_bounds(
        state in prop::collection::vec(-3.0f64..3.0, 25),
        eta in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let cfg = NoiseConfig::new(eta, seed);
        let out = random_noise_apply(&cfg, &state, &mut ChaCha8Rng::seed_from_u64(seed));
        for (o, s) in out.iter().zip(&state) {
            prop_assert!(*o >= cfg.clip_lo && *o <= cfg.clip_hi);
            if s.abs() <= 1.0 {
                prop_assert!((o - s).abs() <= eta + 1e-15);
            }
        }
    }
}
