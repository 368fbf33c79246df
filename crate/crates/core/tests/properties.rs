use approx::assert_relative_eq;
use chaoslab::chaos::{divergence, expected_inner, malliavin_derivative, ou_apply, pseudo_inverse, ChaosFunctional, OuOp};
use chaoslab::rng::{normal_vec, StreamKey};
use chaoslab::tensor::{contract_r, k_operator_norms, symmetrize, DenseKernel, KOperator};
use proptest::prelude::*;

fn dense(seed: u64, order: usize, m: usize, p: usize) -> DenseKernel {
    let len = m.pow(order as u32) * p;
    let data = normal_vec(&mut StreamKey::new(seed).rng(0), len);
    DenseKernel::new(order, m, p, data).unwrap()
}

fn functional(seed: u64, m: usize, p: usize, n_max: usize) -> ChaosFunctional {
    let mut rng = StreamKey::new(seed).named("functional").rng(0);
    let mut f = ChaosFunctional::random(&mut rng, m, p, n_max, 1.0);
    f.set_mean(normal_vec(&mut rng, p)).unwrap();
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn symmetrization_is_a_contraction_and_idempotent(
        seed in any::<u64>(), order in 1usize..4, m in 1usize..4, p in 1usize..3,
    ) {
        let raw = dense(seed, order, m, p);
        let s = symmetrize(&raw, order).unwrap();
        prop_assert!(s.norm_sq() <= raw.norm_sq() * (1.0 + 1e-12));
        let again = symmetrize(&s.to_dense(), order).unwrap();
        for (a, b) in s.coeffs().iter().zip(again.coeffs()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn contraction_cauchy_schwarz(
        seed in any::<u64>(), q in 1usize..4, l in 1usize..4, m in 1usize..4,
    ) {
        let f = symmetrize(&dense(seed, q, m, 1), q).unwrap();
        let g = symmetrize(&dense(seed ^ 0x5555, l, m, 1), l).unwrap();
        for r in 0..=q.min(l) {
            let c = contract_r(&f, &g, r).unwrap();
            prop_assert!(c.norm_sq() <= f.norm_sq() * g.norm_sq() * (1.0 + 1e-10));
        }
    }

    #[test]
    fn psd_norm_chain(seed in any::<u64>(), p in 1usize..6, rank in 1usize..4) {
        let mut rng = StreamKey::new(seed).rng(0);
        let mut acc = KOperator::zeros(p);
        for _ in 0..rank {
            let a = normal_vec(&mut rng, p);
            acc = acc.sub(&KOperator::rank_one(&a).scaled(-1.0)).unwrap();
        }
        let n = k_operator_norms(&acc);
        prop_assert!(n.opnorm <= n.hs * (1.0 + 1e-12));
        prop_assert!(n.hs <= n.trace * (1.0 + 1e-12));
    }

    #[test]
    fn generator_inverts_on_centered_part(seed in any::<u64>(), m in 1usize..4, p in 1usize..3) {
        let f = functional(seed, m, p, 3);
        let (inv, mean) = pseudo_inverse(&f);
        prop_assert_eq!(mean.as_slice(), f.mean());
        let back = ou_apply(&inv, OuOp::Generator).unwrap();
        prop_assert!(back.max_abs_diff(&f.centered()) < 1e-12);
    }

    #[test]
    fn derivative_divergence_duality(seed in any::<u64>(), m in 1usize..4, p in 1usize..3) {
        let f = functional(seed, m, p, 3);
        let u = functional(seed ^ 0xabcdef, m, m * p, 2);
        let lhs = expected_inner(&malliavin_derivative(&f, 1), &u).unwrap();
        let rhs = expected_inner(&f, &divergence(&u).unwrap()).unwrap();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-10, max_relative = 1e-10);
    }

    #[test]
    fn poincare_inequality(seed in any::<u64>(), m in 1usize..4, p in 1usize..3) {
        let f = functional(seed, m, p, 4);
        let df = malliavin_derivative(&f, 1);
        prop_assert!(f.variance() <= df.expected_norm_sq() * (1.0 + 1e-12));
    }
}
