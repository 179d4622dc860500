use proptest::prelude::*;
use qsep_core::approx::lambda_map;
use qsep_core::entropy::{
    chain_rule_terms, mutual_information, relative_entropy, total_correlation, von_neumann_entropy,
};
use qsep_core::gibbs::f_h;
use qsep_core::qmat::{partial_trace, random_density, random_pure};
use qsep_core::relent::{relent_entanglement, ErOptions};
use qsep_core::{DensityOp, DimSig, HamiltonianSpec, Partition};

fn sig(dims: &[usize]) -> DimSig {
    DimSig::new(dims.to_vec()).unwrap()
}

/// `Σ p_j ρ_j^A ⊗ ρ_j^B` with each factor drawn from its own seed.
fn separable_mixture(weights: &[f64], seed: u64) -> DensityOp {
    let total: f64 = weights.iter().sum();
    let mut out: Option<DensityOp> = None;
    let mut acc = 0.0;
    for (j, w) in weights.iter().enumerate() {
        let a = random_density(&sig(&[2]), 2, seed + 2 * j as u64).unwrap();
        let b = random_density(&sig(&[2]), 2, seed + 2 * j as u64 + 1).unwrap();
        let term = a.tensor(&b);
        acc += w;
        out = Some(match out {
            None => term,
            // running convex combination keeps every step a density operator
            Some(prev) => prev.mix(1.0 - w / acc, &term).unwrap(),
        });
    }
    assert!((acc - total).abs() < 1e-12);
    out.unwrap()
}

fn solver() -> ErOptions {
    ErOptions { max_iters: 200, tol: 1e-8, ..ErOptions::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn entropy_between_zero_and_log_dim(seed in 0u64..10_000, rank in 1usize..=4) {
        let rho = random_density(&sig(&[2, 2]), rank, seed).unwrap();
        let s = von_neumann_entropy(&rho);
        prop_assert!(s >= -1e-12);
        prop_assert!(s <= 4f64.ln() + 1e-12);
    }

    #[test]
    fn relative_entropy_is_nonnegative(a in 0u64..10_000, b in 0u64..10_000) {
        let rho = random_density(&sig(&[3]), 3, a).unwrap();
        let sigma = random_density(&sig(&[3]), 3, b).unwrap();
        let d = relative_entropy(&rho, &sigma).unwrap().to_f64();
        prop_assert!(d >= -1e-10, "{}", d);
    }

    #[test]
    fn mutual_information_nonnegative_and_subadditive(seed in 0u64..10_000) {
        let rho = random_density(&sig(&[2, 2, 2]), 8, seed).unwrap();
        let i = mutual_information(&rho, &Partition::finest(3)).unwrap();
        prop_assert!(i >= -1e-10);
        let marginal_sum: f64 = (0..3)
            .map(|s| von_neumann_entropy(&partial_trace(&rho, &[s]).unwrap()))
            .sum();
        prop_assert!((i - (marginal_sum - von_neumann_entropy(&rho))).abs() < 1e-10);
    }

    #[test]
    fn chain_terms_sum_to_total_correlation(seed in 0u64..10_000) {
        let rho = random_density(&sig(&[2, 2, 2]), 3, seed).unwrap();
        let terms: f64 = chain_rule_terms(&rho).unwrap().iter().sum();
        prop_assert!((terms - total_correlation(&rho).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn truncation_returns_a_state_and_full_rank_is_identity(seed in 0u64..10_000, r in 1usize..=3) {
        let rho = random_density(&sig(&[3, 3]), 9, seed).unwrap();
        let (out, plan) = lambda_map(&rho, &[0, 1], r).unwrap();
        prop_assert!((out.mat().trace().re - 1.0).abs() < 1e-10);
        prop_assert!(*out.eigh().values.last().unwrap() >= -1e-10);
        // the discarded weight is at most the summed marginal tails
        prop_assert!(1.0 - plan.c_r() <= plan.eps().powi(2) + 1e-10);
        if r == 3 {
            prop_assert!((out.mat() - rho.mat()).norm() < 1e-10);
        }
    }

    #[test]
    fn gibbs_ceiling_increases_with_energy(e in 0.05f64..3.0, de in 0.01f64..1.0) {
        let h = HamiltonianSpec::linear(1.0).unwrap();
        let lo = f_h(&h, e, None).unwrap();
        let hi = f_h(&h, e + de, None).unwrap();
        prop_assert!(hi >= lo - 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn separable_mixtures_have_zero_value(seed in 0u64..10_000, w in proptest::collection::vec(0.05f64..1.0, 1..4)) {
        let rho = separable_mixture(&w, seed);
        let sol = relent_entanglement(&rho, &Partition::finest(2), &solver()).unwrap();
        prop_assert!(sol.value <= 1e-5, "{}", sol.value);
    }

    #[test]
    fn descent_is_monotone_and_value_matches_sigma(seed in 0u64..10_000, rank in 1usize..=4) {
        let rho = random_density(&sig(&[2, 2]), rank, seed).unwrap();
        let sol = relent_entanglement(&rho, &Partition::finest(2), &solver()).unwrap();
        for w in sol.history.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{:?}", w);
        }
        let direct = relative_entropy(&rho, &sol.sigma).unwrap().to_f64();
        prop_assert!((direct - sol.value).abs() < 1e-8);
        prop_assert!((sol.weights_sum() - 1.0).abs() < 1e-9);
        prop_assert!(sol.gap >= -1e-10);
    }

    #[test]
    fn pure_values_below_entanglement_entropy(seed in 0u64..10_000) {
        // for pure bipartite states the optimum is the entanglement entropy
        let psi = random_pure(&sig(&[2, 2]), seed);
        let ent = von_neumann_entropy(&partial_trace(&psi, &[0]).unwrap());
        let sol = relent_entanglement(&psi, &Partition::finest(2), &solver()).unwrap();
        prop_assert!(sol.value <= ent + 1e-6, "{} vs {}", sol.value, ent);
        prop_assert!(sol.lower_certificate() <= ent + 1e-6);
        prop_assert!((sol.value - ent).abs() < 1e-3, "{} vs {}", sol.value, ent);
    }
}
