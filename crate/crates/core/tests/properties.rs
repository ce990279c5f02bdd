//! Cross-module property checks: the matrix-chain norm inequality behind the
//! sharpness lower bound, and structural invariants under random inputs.

use flatminima_core::linalg::{spectral_norm, standard_normal_matrix};
use flatminima_core::{
    end_to_end, interp_compare, loss, moments_from_target, InterpVerdict, LinearNetwork,
    ScalarNetwork,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn chain_norm_inequality_on_random_chains() {
    // sum_k ||Psi_k||_F^2 >= m * ||prod_k Psi_k||_2^(2/m) for any compatible chain.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let m = 1 + rng.gen_range(0..5usize);
        let mut dims = Vec::with_capacity(m + 1);
        for _ in 0..=m {
            dims.push(1 + rng.gen_range(0..4usize));
        }
        let chain: Vec<DMatrix<f64>> = (1..=m)
            .map(|j| standard_normal_matrix(&mut rng, dims[j], dims[j - 1]) * rng.gen_range(0.1..3.0))
            .collect();
        let sum_sq: f64 = chain.iter().map(|psi| psi.norm_squared()).sum();
        let mut product = chain[0].clone();
        for psi in &chain[1..] {
            product = psi * product;
        }
        let bound = m as f64 * spectral_norm(&product).powf(2.0 / m as f64);
        assert!(
            sum_sq >= bound - 1e-9 * bound.max(1.0),
            "chain inequality violated: {sum_sq} < {bound} (m = {m}, dims = {dims:?})"
        );
    }
}

proptest! {
    #[test]
    fn end_to_end_composes_at_any_split(
        seed in 0u64..500,
        m in 1usize..5,
        d in 1usize..4,
        split in 0usize..5,
    ) {
        let split = split.min(m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<DMatrix<f64>> = (0..m).map(|_| standard_normal_matrix(&mut rng, d, d)).collect();
        let net = LinearNetwork::new(weights).unwrap();
        let full = end_to_end(&net, 1, m).unwrap();
        let left = end_to_end(&net, 1, split).unwrap();
        let right = end_to_end(&net, split + 1, m).unwrap();
        let err = (right * left - &full).norm();
        prop_assert!(err <= 1e-12 * full.norm().max(1.0));
    }

    #[test]
    fn loss_is_nonnegative_everywhere(seed in 0u64..500, scale in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = standard_normal_matrix(&mut rng, 2, 2);
        let (moments, _) = moments_from_target(&t);
        let net = LinearNetwork::new(vec![
            standard_normal_matrix(&mut rng, 2, 2) * scale,
            standard_normal_matrix(&mut rng, 2, 2),
        ])
        .unwrap();
        prop_assert!(loss(&net, &moments).unwrap() >= 0.0);
    }

    #[test]
    fn interp_verdict_is_antisymmetric(seed in 0u64..500, m in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tau = rng.gen_range(0.5..4.0);
        let sample = |rng: &mut ChaCha8Rng| {
            let mut w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..3.0)).collect();
            let partial: f64 = w.iter().take(m - 1).product();
            w[m - 1] = tau / partial;
            ScalarNetwork::new(w, tau, 1.0).unwrap()
        };
        let a = sample(&mut rng);
        let b = sample(&mut rng);
        let (vab, f, bwd) = interp_compare(&a, &b).unwrap();
        let (vba, f2, b2) = interp_compare(&b, &a).unwrap();
        prop_assert_eq!(f, b2);
        prop_assert_eq!(bwd, f2);
        match vab {
            InterpVerdict::W1AppearsSharper => prop_assert_eq!(vba, InterpVerdict::W2AppearsSharper),
            InterpVerdict::W2AppearsSharper => prop_assert_eq!(vba, InterpVerdict::W1AppearsSharper),
            InterpVerdict::Equal => prop_assert_eq!(vba, InterpVerdict::Equal),
        }
    }

    #[test]
    fn network_json_round_trip(seed in 0u64..300, m in 1usize..4, d in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: Vec<DMatrix<f64>> = (0..m).map(|_| standard_normal_matrix(&mut rng, d, d)).collect();
        let net = LinearNetwork::new(weights).unwrap();
        let json = serde_json::to_string(&net).unwrap();
        let back: LinearNetwork = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, net);
    }
}
