use lassoggm::adjacency::{pairs, Adjacency};
use lassoggm::linalg::{det_quadratic, is_pd, log_det_pd, pd_interval, SymMatrix};
use lassoggm::metrics::{adjusted_rand_index, confusion, kl_loss};
use lassoggm::model::{inverse_truncation_constant, GgmPrior, SufficientStats};
use lassoggm::partition::canonical_labels;
use lassoggm::sampler::{chain_rng, initial_state, sweep, Acceptance, McmcConfig, SweepFlags};
use lassoggm::simgen::{generate, random_pd_correlation, simulate_data, StructureKind, StructureSpec};
use nalgebra::DVector;
use proptest::prelude::*;

fn correlation(p: usize, seed: u64) -> SymMatrix {
    random_pd_correlation(p, &mut chain_rng(seed, 0))
}

fn adjacency(p: usize, bits: &[bool]) -> Adjacency {
    let mut it = bits.iter().cycle();
    Adjacency::from_fn(p, |_, _| *it.next().unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn interval_separates_pd_from_non_pd(p in 2usize..7, seed in any::<u64>(), pick in any::<usize>()) {
        let c = correlation(p, seed);
        let all: Vec<_> = pairs(p).collect();
        let (i, j) = all[pick % all.len()];
        let iv = pd_interval(&c, i, j).unwrap();
        prop_assert!(iv.lo < c.get(i, j) && c.get(i, j) < iv.hi);
        let q = det_quadratic(&c, i, j);
        for t in 1..20 {
            let x = iv.lo + (iv.hi - iv.lo) * t as f64 / 20.0;
            let mut m = c.clone();
            m.set(i, j, x);
            prop_assert!(q.eval(x) > 0.0);
            prop_assert!(is_pd(&m, 0.0), "x = {x} inside [{}, {}]", iv.lo, iv.hi);
        }
        for x in [iv.lo - 1e-3, iv.hi + 1e-3] {
            if x.abs() <= 1.0 {
                let mut m = c.clone();
                m.set(i, j, x);
                prop_assert!(!is_pd(&m, 0.0), "x = {x} outside [{}, {}]", iv.lo, iv.hi);
            }
        }
    }

    #[test]
    fn log_det_adds_over_blocks(p in 1usize..6, q in 1usize..6, s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = correlation(p.max(2), s1);
        let b = correlation(q.max(2), s2);
        let joint = log_det_pd(&a.block_diag(&b)).unwrap();
        prop_assert!((joint - log_det_pd(&a).unwrap() - log_det_pd(&b).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_truth(p in 2usize..7, s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = correlation(p, s1);
        let b = correlation(p, s2);
        prop_assert!(kl_loss(&a, &a).unwrap().abs() < 1e-10);
        prop_assert!(kl_loss(&a, &b).unwrap() >= -1e-10);
    }

    #[test]
    fn confusion_partitions_and_mcc_is_bounded(
        p in 2usize..9,
        t in proptest::collection::vec(any::<bool>(), 1..40),
        e in proptest::collection::vec(any::<bool>(), 1..40),
    ) {
        let truth = adjacency(p, &t);
        let est = adjacency(p, &e);
        let c = confusion(&truth, &est).unwrap();
        prop_assert_eq!(c.total() as usize, p * (p - 1) / 2);
        let mcc = c.mcc();
        if mcc.is_finite() {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&mcc));
            let flipped = Adjacency::from_fn(p, |i, j| !*est.get(i, j));
            let swapped = confusion(&truth, &flipped).unwrap().mcc();
            prop_assert!((swapped + mcc).abs() < 1e-12);
        }
    }

    #[test]
    fn partition_summaries_ignore_label_names(labels in proptest::collection::vec(0usize..4, 2..30), shift in 1usize..5) {
        let renamed: Vec<usize> = labels.iter().map(|l| (l + shift) % 4 + 7).collect();
        prop_assert_eq!(canonical_labels(&labels), canonical_labels(&renamed));
        let distinct = labels.iter().collect::<std::collections::BTreeSet<_>>().len();
        if distinct > 1 && distinct < labels.len() {
            prop_assert!((adjusted_rand_index(&labels, &renamed).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation_mass_is_bounded_by_branches(tau in 0.01f64..5.0, q in 0.0f64..1.0, u in -1.0f64..1.0, w in 0.0f64..2.0) {
        let iv = lassoggm::linalg::PdInterval { lo: u, hi: (u + w).min(1.0) };
        let k_inv = inverse_truncation_constant(tau, q, &iv);
        prop_assert!(k_inv >= 0.0);
        // The A = 1 branch can never exceed the Laplace mass on [-1, 1].
        let absent = if iv.contains(0.0) { (1.0 - q) / 2.0 * iv.width() / tau } else { 0.0 };
        prop_assert!(k_inv - absent <= q * (1.0 - (-1.0 / tau).exp()) + 1e-12);
    }

    #[test]
    fn generated_structures_are_pd(kind in prop::sample::select(StructureKind::ALL.to_vec()), p in 3usize..12, seed in any::<u64>()) {
        let omega = generate(&StructureSpec::new(kind, p, seed)).unwrap();
        prop_assert!(is_pd(&omega, 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sweeps_preserve_state_invariants(p in 2usize..6, seed in any::<u64>()) {
        let omega = generate(&StructureSpec::new(StructureKind::Banded, p, 0)).unwrap();
        let mut rng = chain_rng(seed, 3);
        let y = simulate_data(&omega, 12, &DVector::zeros(p), &mut rng).unwrap();
        let stats = SufficientStats::from_data(&y);
        let prior = GgmPrior::default();
        let cfg = McmcConfig::default();
        let mut state = initial_state(&stats, &prior);
        let mut acc = Acceptance::default();
        for _ in 0..30 {
            sweep(&mut state, &stats, &prior, cfg.grid(), cfg.steps(), SweepFlags::default(), &mut acc, &mut rng).unwrap();
            prop_assert!(is_pd(state.decomp.c(), 0.0));
            prop_assert!(is_pd(&state.decomp.omega(), 0.0));
            prop_assert!(state.sigma2 > 0.0);
            for (i, j) in pairs(p) {
                prop_assert!(*state.tau.get(i, j) > 0.0);
                let q = *state.q.get(i, j);
                prop_assert!(q > 0.0 && q < 1.0);
                let c = state.decomp.c().get(i, j);
                prop_assert!(c.abs() <= 1.0);
                if !*state.decomp.a().get(i, j) {
                    prop_assert_eq!(c, 0.0);
                }
            }
        }
    }
}
