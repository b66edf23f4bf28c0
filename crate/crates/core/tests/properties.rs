use std::collections::BTreeSet;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

use plab_core::coarse::{pullback, pushforward, random_atoms, UniformBins};
use plab_core::compression::{BoostedScheme, CompressionScheme, SegmentScheme};
use plab_core::emx::{
    quantile_bound, quantile_learn, sample_complexity, FinSupportDist, FiniteHypothesis, IndexedDomain, Membership,
};
use plab_core::feasibility::{sdp_feasible, SdpOptions, SdpVerdict, TaskSpec};
use plab_core::quantum::{
    born_kernel, helstrom, random_binary_povm, random_mixed, random_povm, success_sum, trace_distance, DimCap, Povm,
};
use plab_core::rng::seeded_rng;

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn weights_strategy() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(1u32..50, 1..20)
}

fn normalized(raw: &[u32]) -> Vec<BigRational> {
    let total: i64 = raw.iter().map(|&w| i64::from(w)).sum();
    raw.iter().map(|&w| ratio(i64::from(w), total)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nested_segments_have_monotone_mass(raw in weights_strategy()) {
        let labels: Vec<u32> = (0..raw.len() as u32).collect();
        let domain = Arc::new(IndexedDomain::new(labels.clone()).unwrap());
        let p = FinSupportDist::new(labels, normalized(&raw)).unwrap();
        let mut previous = ratio(0, 1);
        for t in 1..=raw.len() {
            let m = p.mass(&FiniteHypothesis::segment(t, Arc::clone(&domain)));
            prop_assert!(m >= previous);
            previous = m;
        }
        prop_assert_eq!(previous, ratio(1, 1));
    }

    #[test]
    fn quantile_output_covers_sample(sample in prop::collection::vec(0u32..30, 1..12)) {
        let domain = Arc::new(IndexedDomain::new((0..30u32).collect()).unwrap());
        let h = quantile_learn(&sample, &domain).unwrap();
        prop_assert!(sample.iter().all(|x| h.contains(x)));
        prop_assert_eq!(h.threshold(), sample.iter().max().map(|m| *m as usize + 1));
    }

    #[test]
    fn sample_complexity_is_monotone(e1 in 0.01f64..0.99, e2 in 0.01f64..0.99, d1 in 0.01f64..0.99, d2 in 0.01f64..0.99) {
        let (elo, ehi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let (dlo, dhi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(sample_complexity(elo, dlo).unwrap() >= sample_complexity(ehi, dlo).unwrap());
        prop_assert!(sample_complexity(elo, dlo).unwrap() >= sample_complexity(elo, dhi).unwrap());
        let d = sample_complexity(elo, dlo).unwrap();
        prop_assert!(quantile_bound(elo, d) >= 1.0 - dlo - 1e-12);
    }

    #[test]
    fn finer_bins_refine_coarser(x in 0.0f64..=1.0, bits in 0u32..16) {
        let coarse = UniformBins::new(bits).unwrap();
        let fine = UniformBins::new(bits + 1).unwrap();
        prop_assert_eq!(fine.bin(x).unwrap() >> 1, coarse.bin(x).unwrap());
    }

    #[test]
    fn pullback_mass_matches_pushforward(seed in any::<u64>(), atoms in 1usize..40, bits in 0u32..10, picks in prop::collection::vec(any::<u16>(), 0..20)) {
        let bins = UniformBins::new(bits).unwrap();
        let p = random_atoms(atoms, 30, seed).unwrap();
        let q = pushforward(&p, &bins).unwrap();
        let cells: BTreeSet<usize> = picks.iter().map(|&c| c as usize % bins.num_cells()).collect();
        prop_assert_eq!(p.mass(&pullback(cells.iter().copied(), &bins)), q.mass(&cells));
        let total = q.weights().iter().fold(ratio(0, 1), |a, w| a + w);
        prop_assert_eq!(total, ratio(1, 1));
    }

    #[test]
    fn boosted_scheme_covers(tuple in prop::collection::vec(0u32..12, 2..6)) {
        let domain = Arc::new(IndexedDomain::new((0..12u32).collect()).unwrap());
        let scheme = BoostedScheme::new(SegmentScheme::two_to_one(domain), tuple.len()).unwrap();
        let kept = scheme.compress(&tuple).unwrap().expect("monotone");
        let sub: Vec<u32> = kept.iter().map(|&i| tuple[i]).collect();
        let rebuilt = scheme.reconstruct(&sub).unwrap();
        prop_assert!(tuple.iter().all(|x| rebuilt.contains(x)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn trace_distance_is_a_metric(seed in any::<u64>(), dim in 2usize..5) {
        let mut rng = seeded_rng(seed);
        let a = random_mixed(dim, dim, &mut rng);
        let b = random_mixed(dim, 1, &mut rng);
        let c = random_mixed(dim, 2, &mut rng);
        let ab = trace_distance(&a, &b).unwrap();
        prop_assert!((ab - trace_distance(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(ab <= trace_distance(&a, &c).unwrap() + trace_distance(&c, &b).unwrap() + 1e-12);
        prop_assert!((0.0..=2.0 + 1e-12).contains(&ab));
        prop_assert!(trace_distance(&a, &a).unwrap() < 1e-12);
    }

    #[test]
    fn helstrom_dominates_random_measurements(seed in any::<u64>(), dim in 2usize..4, copies in 1usize..3) {
        let mut rng = seeded_rng(seed);
        let r0 = random_mixed(dim, dim, &mut rng);
        let r1 = random_mixed(dim, 1, &mut rng);
        let h = helstrom(&r0, &r1, copies, DimCap::default()).unwrap();
        prop_assert!((h.achieved - h.bound).abs() < 1e-9);
        let povm = random_binary_povm(dim.pow(copies as u32), &mut rng);
        prop_assert!(success_sum(&povm, &r0, &r1, copies, DimCap::default()).unwrap() <= h.bound + 1e-9);
    }

    #[test]
    fn born_rows_are_distributions(seed in any::<u64>(), outcomes in 1usize..5) {
        let mut rng = seeded_rng(seed);
        let povm = random_povm(2, outcomes, &mut rng);
        let states: Vec<_> = (0..3).map(|_| random_mixed(2, 2, &mut rng)).collect();
        let k = born_kernel(&povm, &states, 2, DimCap::default());
        // outcome count must match the 2-copy dimension
        prop_assert!(k.is_err());
        let big = random_povm(4, outcomes, &mut rng);
        let k = born_kernel(&big, &states, 2, DimCap::default()).unwrap();
        for row in k.rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|q| *q >= 0.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sdp_witnesses_verify(seed in any::<u64>(), delta in 0.05f64..0.6) {
        let mut rng = seeded_rng(seed);
        let states = vec![random_mixed(2, 1, &mut rng), random_mixed(2, 2, &mut rng), random_mixed(2, 1, &mut rng)];
        let task = TaskSpec::identity(3);
        let verdict = sdp_feasible(&states, &task, 0.5, delta, 1, &SdpOptions::default()).unwrap();
        if let SdpVerdict::Feasible { witness, .. } = verdict {
            Povm::new(witness.elements().to_vec()).unwrap();
            for (t, s) in states.iter().enumerate() {
                prop_assert!(witness.probabilities(s.matrix()).unwrap()[t] >= 1.0 - delta - 1e-6);
            }
            // the same witness serves every looser δ
            let looser = (delta + 0.1).min(1.0);
            prop_assert!(sdp_feasible(&states, &task, 0.5, looser, 1, &SdpOptions::default()).unwrap().is_feasible());
        }
    }
}

#[test]
fn sample_complexity_point_values() {
    assert_eq!(sample_complexity(0.5, 0.5).unwrap(), 1);
    assert_eq!(sample_complexity(0.5, 0.25).unwrap(), 2);
    assert_eq!(sample_complexity(1.0 / 3.0, 1.0 / 3.0).unwrap(), 3);
}
