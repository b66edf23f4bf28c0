//! End-to-end acceptance checks. Runs as a plain binary so each criterion
//! prints exactly one PASS/FAIL line; any failure exits nonzero.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::seq::IndexedRandom;
use rand::Rng;

use plab_core::coarse::{coarse_learn, pullback, pushforward, random_atoms, UniformBins};
use plab_core::compression::{learner_to_compression, required_n, CompressionLearner, CompressionScheme, SegmentScheme};
use plab_core::emx::{
    count_successes, quantile_bound, sample_complexity, three_sigma, FinSupportDist,
    IndexedDomain, QuantileLearner,
};
use plab_core::feasibility::{
    build_pl_constraints, kernel_satisfies, lp_feasible, sdp_threshold, LinearConstraint, LpVerdict,
    PolytopeSpec, Relation, SdpOptions, TaskSpec,
};
use plab_core::quantum::{
    check_no_signaling, d_min, delta_min, haar_state, helstrom, overlap, pure_distance_formula,
    pure_pair_with_overlap, quantum_correlation, random_binary_povm, random_mixed, random_povm, success_sum,
    tensor_power, trace_distance, CorrelationTable, DensityMatrix, DimCap,
};
use plab_core::rng::seeded_rng;

const SEED: u64 = 20_240_601;

type Outcome = Result<String, String>;

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    if elapsed > Duration::from_secs(limit_secs) {
        Err(format!("took {:.2?}, limit {limit_secs} s", elapsed))
    } else {
        Ok(())
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn labelled(weights: Vec<BigRational>) -> (Arc<IndexedDomain<u32>>, FinSupportDist<u32, BigRational>) {
    let labels: Vec<u32> = (1..=weights.len() as u32).collect();
    let domain = Arc::new(IndexedDomain::new(labels.clone()).unwrap());
    (domain, FinSupportDist::new(labels, weights).unwrap())
}

fn uniform_nine() -> Vec<BigRational> {
    vec![ratio(1, 9); 9]
}

/// `2^{-k}` for `k < 30`, the last atom absorbing the tail.
fn geometric_tail() -> Vec<BigRational> {
    let mut w: Vec<BigRational> = (1..30).map(|k| ratio(1, 1 << k)).collect();
    w.push(ratio(1, 1 << 29));
    w
}

/// 50 light low-index atoms totalling 199/300, just short of 2/3, followed by
/// three heavy atoms: success needs a heavy draw.
fn two_tier() -> Vec<BigRational> {
    let mut w = vec![ratio(199, 300 * 50); 50];
    w.extend(vec![ratio(101, 900); 3]);
    w
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let d = sample_complexity(1.0 / 3.0, 1.0 / 3.0).map_err(|e| e.to_string())?;
    ensure(d == 3, || format!("sample_complexity(1/3, 1/3) = {d}"))?;
    let trials = 10_000;
    let bound = quantile_bound(1.0 / 3.0, 3);
    let threshold = bound - three_sigma(bound, trials);
    let mut rates = Vec::new();
    for (name, weights) in [("uniform-9", uniform_nine()), ("geometric", geometric_tail()), ("two-tier", two_tier())] {
        let (domain, p) = labelled(weights);
        let learner = QuantileLearner::new(domain);
        let hits = count_successes(&learner, &p, 1.0 / 3.0, 3, trials, SEED).map_err(|e| e.to_string())?;
        let rate = hits as f64 / trials as f64;
        ensure(rate >= threshold, || format!("{name}: rate {rate:.4} < {threshold:.4}"))?;
        rates.push(format!("{name} {rate:.4}"));
    }
    within(start.elapsed(), 5)?;
    Ok(format!("d=3, threshold {threshold:.4}; {}", rates.join(", ")))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let bins = UniformBins::new(8).map_err(|e| e.to_string())?;
    let mut rng = seeded_rng(SEED + 2);
    for instance in 0..200u64 {
        let atoms = rng.random_range(1..=60);
        let p = random_atoms(atoms, 50, SEED + 100 + instance).map_err(|e| e.to_string())?;
        let q = pushforward(&p, &bins).map_err(|e| e.to_string())?;
        let size = rng.random_range(0..=bins.num_cells());
        let labels: BTreeSet<usize> = (0..size).map(|_| rng.random_range(0..bins.num_cells())).collect();
        let lhs = p.mass(&pullback(labels.iter().copied(), &bins));
        let rhs = q.mass(&labels);
        ensure(lhs == rhs, || format!("instance {instance}: {lhs} != {rhs}"))?;
    }
    within(start.elapsed(), 2)?;
    Ok("200 instances, exact equality".into())
}

fn criterion_3() -> Outcome {
    let bins = UniformBins::new(8).map_err(|e| e.to_string())?;
    let p = random_atoms(2_000, 20, SEED + 3).map_err(|e| e.to_string())?;
    let trials = 10_000u64;
    let eps = 1.0 / 3.0;
    let pf = p.to_float();
    let mut hits = 0usize;
    for trial in 0..trials {
        let sample = p.draw_trial(3, SEED, trial);
        let h = coarse_learn(&sample.points, &bins, eps, eps).map_err(|e| e.to_string())?;
        hits += usize::from(pf.mass(&h) >= 1.0 - eps - plab_core::emx::SUCCESS_SLACK);
    }
    let rate = hits as f64 / trials as f64;
    let threshold = 2.0 / 3.0 - three_sigma(2.0 / 3.0, trials as usize);
    ensure(rate >= threshold, || format!("rate {rate:.4} < {threshold:.4}"))?;
    Ok(format!("l=8, rate {rate:.4} >= {threshold:.4}"))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let n = required_n(1);
    ensure(n == 134, || format!("required_n(1) = {n}"))?;

    let (domain, p) = labelled(two_tier());
    let learner = CompressionLearner::new(SegmentScheme::two_to_one(Arc::clone(&domain)), n).map_err(|e| e.to_string())?;
    let trials = 2_000;
    let hits = count_successes(&learner, &p, 1.0 / 3.0, n, trials, SEED + 4).map_err(|e| e.to_string())?;
    let rate = hits as f64 / trials as f64;
    let threshold = 2.0 / 3.0 - three_sigma(2.0 / 3.0, trials);
    ensure(rate >= threshold, || format!("ERM rate {rate:.4} < {threshold:.4}"))?;

    let labels: Vec<u32> = (1..=40).collect();
    let scheme = learner_to_compression(QuantileLearner::new(Arc::new(IndexedDomain::new(labels.clone()).unwrap())), 3);
    ensure(scheme.m() == 5, || format!("m = {}", scheme.m()))?;
    let mut rng = seeded_rng(SEED + 40);
    let mut failures = 0;
    for _ in 0..500 {
        let tuple: Vec<u32> = (0..6).map(|_| *labels.choose(&mut rng).unwrap()).collect();
        let covered = match scheme.compress(&tuple).map_err(|e| e.to_string())? {
            Some(kept) => {
                let sub: Vec<u32> = kept.iter().map(|&i| tuple[i]).collect();
                let rebuilt = scheme.reconstruct(&sub).map_err(|e| e.to_string())?;
                kept.len() == 5 && tuple.iter().all(|x| rebuilt.contains(x))
            }
            None => false,
        };
        failures += usize::from(!covered);
    }
    ensure(failures == 0, || format!("{failures} of 500 instances not covered"))?;
    within(start.elapsed(), 60)?;
    Ok(format!("n=134, ERM rate {rate:.4} >= {threshold:.4}, 500/500 covered with m=5"))
}

fn criterion_5() -> Outcome {
    let mut rng = seeded_rng(SEED + 5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let dim = *[2usize, 3].choose(&mut rng).unwrap();
        let psi = haar_state(dim, &mut rng);
        let phi = haar_state(dim, &mut rng);
        let gamma = overlap(&psi, &phi);
        let (a, b) = (DensityMatrix::pure(&psi).unwrap(), DensityMatrix::pure(&phi).unwrap());
        for d in 1..=5 {
            let cap = DimCap::default();
            let dist = trace_distance(&tensor_power(&a, d, cap).unwrap(), &tensor_power(&b, d, cap).unwrap())
                .map_err(|e| e.to_string())?;
            worst = worst.max((dist - pure_distance_formula(gamma, d)).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    Ok(format!("500 comparisons, max deviation {worst:.1e}"))
}

fn criterion_6() -> Outcome {
    let mut rng = seeded_rng(SEED + 6);
    let cap = DimCap::default();
    let mut saturation_gap: f64 = 0.0;
    for _ in 0..50 {
        let dim = rng.random_range(2..=4);
        let r0 = random_mixed(dim, rng.random_range(1..=dim), &mut rng);
        let r1 = random_mixed(dim, rng.random_range(1..=dim), &mut rng);
        let h = helstrom(&r0, &r1, 1, cap).map_err(|e| e.to_string())?;
        saturation_gap = saturation_gap.max((h.achieved - h.bound).abs());
    }
    ensure(saturation_gap <= 1e-9, || format!("Helstrom POVM misses bound by {saturation_gap:e}"))?;

    let mut excess = f64::NEG_INFINITY;
    for _ in 0..1_000 {
        let dim = rng.random_range(2..=3);
        let d = rng.random_range(1..=2);
        let r0 = random_mixed(dim, rng.random_range(1..=dim), &mut rng);
        let r1 = random_mixed(dim, rng.random_range(1..=dim), &mut rng);
        let povm = random_binary_povm(dim.pow(d as u32), &mut rng);
        let h = helstrom(&r0, &r1, d, cap).map_err(|e| e.to_string())?;
        let s = success_sum(&povm, &r0, &r1, d, cap).map_err(|e| e.to_string())?;
        excess = excess.max(s - h.bound);
    }
    ensure(excess <= 1e-9, || format!("random POVM exceeds bound by {excess:e}"))?;

    let (r0, r1) = pure_pair_with_overlap(std::f64::consts::FRAC_1_SQRT_2).map_err(|e| e.to_string())?;
    let achieved = helstrom(&r0, &r1, 1, cap).map_err(|e| e.to_string())?.achieved;
    ensure((achieved - 1.707107).abs() <= 1e-6, || format!("achieved {achieved}"))?;
    Ok(format!(
        "saturation gap {saturation_gap:.1e}, max random excess {excess:.3}, gamma=1/sqrt2 achieves {achieved:.6}"
    ))
}

fn criterion_7() -> Outcome {
    let dm = d_min(0.9, 0.05).map_err(|e| e.to_string())?;
    ensure(dm == 8, || format!("d_min(0.9, 0.05) = {dm}"))?;
    let (r0, r1) = pure_pair_with_overlap(0.9).map_err(|e| e.to_string())?;
    let error_at = |d: usize| -> Result<f64, String> {
        let h = helstrom(&r0, &r1, d, DimCap::default()).map_err(|e| e.to_string())?;
        Ok(1.0 - h.per_state_success[0].min(h.per_state_success[1]))
    };
    let (e7, e8) = (error_at(7)?, error_at(8)?);
    ensure(e7 > 0.05 && e8 <= 0.05, || format!("errors {e7:.4} (d=7), {e8:.4} (d=8)"))?;

    let g = std::f64::consts::FRAC_1_SQRT_2;
    let (s0, s1) = pure_pair_with_overlap(g).map_err(|e| e.to_string())?;
    let threshold = sdp_threshold(&[s0, s1], &TaskSpec::identity(2), 0.5, 1, &SdpOptions::default(), 1e-4)
        .map_err(|e| e.to_string())?;
    let expected = delta_min(g, 1).map_err(|e| e.to_string())?;
    ensure((threshold - 0.146447).abs() <= 1e-3 && (expected - 0.146447).abs() < 1e-6, || {
        format!("bisection threshold {threshold:.6}")
    })?;
    Ok(format!("d_min=8, error {e7:.4} -> {e8:.4}, SDP threshold {threshold:.6}"))
}

/// A random model: constant-kernel equalities or bounded-coefficient
/// inequalities on top of the simplex.
fn random_polytope<R: Rng>(nt: usize, nh: usize, rng: &mut R) -> PolytopeSpec {
    let mut poly = PolytopeSpec::simplex(nt, nh);
    let n = nt * nh;
    for _ in 0..rng.random_range(0..=3) {
        let row = if rng.random_bool(0.4) {
            let (t, h) = (rng.random_range(1..nt), rng.random_range(0..nh));
            let mut c = vec![BigRational::zero(); n];
            c[t * nh + h] = BigRational::one();
            c[h] = -BigRational::one();
            LinearConstraint::new(c, Relation::Eq, BigRational::zero())
        } else {
            let c = (0..n).map(|_| ratio(rng.random_range(-2..=2), 1)).collect();
            let rel = if rng.random_bool(0.5) { Relation::Le } else { Relation::Ge };
            LinearConstraint::new(c, rel, ratio(rng.random_range(-2..=4), 2))
        };
        poly.push(row).expect("row width matches");
    }
    poly
}

fn random_task<R: Rng>(nt: usize, nh: usize, rng: &mut R) -> TaskSpec {
    TaskSpec::new(
        (0..nt).map(|t| format!("t{t}")).collect(),
        (0..nh).map(|h| format!("h{h}")).collect(),
        (0..nt).map(|_| (0..nh).map(|_| ratio(rng.random_range(0..=4), 4)).collect()).collect(),
    )
    .expect("utilities in [0, 1]")
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let identity = TaskSpec::identity(2);
    let pl = build_pl_constraints(&identity, &ratio(1, 2), &ratio(1, 5)).map_err(|e| e.to_string())?;
    let simplex = PolytopeSpec::simplex(2, 2);
    match lp_feasible(&simplex, &pl).map_err(|e| e.to_string())? {
        LpVerdict::Feasible(k) if simplex.satisfied_by(&k.coordinates()) && kernel_satisfies(&k, &pl) => {}
        other => return Err(format!("identity task: {other:?}")),
    }
    let constant = PolytopeSpec::constant_kernel(2, 2);
    ensure(!lp_feasible(&constant, &pl).map_err(|e| e.to_string())?.is_feasible(), || {
        "constant kernel reported feasible".into()
    })?;

    let mut rng = seeded_rng(SEED + 8);
    let (mut violations, mut feasible_count, mut checks) = (0, 0, 0);
    for _ in 0..100 {
        let (nt, nh) = (rng.random_range(2..=3), rng.random_range(2..=3));
        let task = random_task(nt, nh, &mut rng);
        let poly = random_polytope(nt, nh, &mut rng);
        let eps = ratio(rng.random_range(0..=2), 4);
        let delta = ratio(rng.random_range(0..=10), 10);
        let pl = build_pl_constraints(&task, &eps, &delta).map_err(|e| e.to_string())?;
        let verdict = lp_feasible(&poly, &pl).map_err(|e| e.to_string())?;
        if let LpVerdict::Feasible(k) = &verdict {
            feasible_count += 1;
            violations += usize::from(!(poly.satisfied_by(&k.coordinates()) && kernel_satisfies(k, &pl)));
            let mut looser = delta.clone();
            while looser < BigRational::one() {
                looser += ratio(1, 10);
                let pl2 = build_pl_constraints(&task, &eps, &looser.clone().min(BigRational::one()))
                    .map_err(|e| e.to_string())?;
                checks += 1;
                violations += usize::from(!kernel_satisfies(k, &pl2));
                violations += usize::from(!lp_feasible(&poly, &pl2).map_err(|e| e.to_string())?.is_feasible());
            }
            for row in poly.model_rows() {
                checks += 1;
                violations += usize::from(!lp_feasible(&poly.without_row(row), &pl).map_err(|e| e.to_string())?.is_feasible());
            }
        }
    }
    ensure(violations == 0, || format!("{violations} monotonicity violations"))?;
    within(start.elapsed(), 10)?;
    Ok(format!("exact witness, constant kernel infeasible; 100 random instances ({feasible_count} feasible, {checks} monotonicity checks), 0 violations"))
}

fn criterion_9() -> Outcome {
    let mut rng = seeded_rng(SEED + 9);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let (da, db) = (rng.random_range(2..=3), rng.random_range(2..=3));
        let rho = random_mixed(da * db, rng.random_range(1..=da * db), &mut rng);
        let (oa, ob) = (rng.random_range(2..=3), rng.random_range(2..=3));
        let alice: Vec<_> = (0..2).map(|_| random_povm(da, oa, &mut rng)).collect();
        let bob: Vec<_> = (0..2).map(|_| random_povm(db, ob, &mut rng)).collect();
        let table = quantum_correlation(&rho, &alice, &bob).map_err(|e| e.to_string())?;
        let v = check_no_signaling(&table, 1e-10);
        ensure(v.passes, || format!("quantum table signals by {:e}", v.max_violation))?;
        worst = worst.max(v.max_violation);
    }
    let planted = CorrelationTable::from_fn(2, 2, 2, 2, |a, b, _, y| if a == y && b == 0 { 1.0 } else { 0.0 })
        .map_err(|e| e.to_string())?;
    let v = check_no_signaling(&planted, 1e-10);
    ensure(!v.passes && v.max_violation >= 0.5, || format!("planted table: {v:?}"))?;
    Ok(format!("500 quantum tables, max violation {worst:.1e}; planted table violation {}", v.max_violation))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 quantile sample complexity", criterion_1),
        ("2 coarse-graining exactness", criterion_2),
        ("3 finite-precision learnability", criterion_3),
        ("4 compression equivalence", criterion_4),
        ("5 trace-distance formula", criterion_5),
        ("6 Helstrom saturation and bound", criterion_6),
        ("7 copy complexity", criterion_7),
        ("8 LP decidability", criterion_8),
        ("9 no-signaling verification", criterion_9),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        match check() {
            Ok(detail) => println!("PASS criterion {name} [{:.2?}]: {detail}", start.elapsed()),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name} [{:.2?}]: {why}", start.elapsed());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
