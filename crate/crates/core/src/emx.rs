//! EMX (estimating the maximum) over the class of finite subsets.
//!
//! A learner sees `d` i.i.d. draws from a finitely supported distribution `P`
//! and must output a finite set whose mass is within `ε` of the class optimum.
//! For finite subsets the optimum is always 1: the support itself is a finite
//! hypothesis.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Debug;
use std::hash::Hash;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prob::{parse_rational, Probability};
use crate::rng::trial_rng;

/// Slack used when comparing a float-converted mass against `1 - ε`.
///
/// Parameters such as `ε = 1/3` arrive as rounded binary fractions, so an
/// exact mass of `2/3` must not be rejected because `1 - 0.333…` rounds up.
pub const SUCCESS_SLACK: f64 = 1e-12;

/// Anything that can be a point of a countable domain.
pub trait Element: Clone + Eq + Hash + Debug + Send + Sync {}
impl<T: Clone + Eq + Hash + Debug + Send + Sync> Element for T {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmxError {
    #[error("duplicate element {0} in domain or support")]
    Duplicate(String),
    #[error("element {0} is not part of the indexed domain")]
    UnknownElement(String),
    #[error("cannot learn from an empty sample")]
    EmptySample,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("parameter out of range: {0}")]
    Domain(String),
}

/// A countable domain listed in a fixed order; `idx` is the 1-based rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedDomain<E: Element> {
    labels: Vec<E>,
    index: HashMap<E, usize>,
}

impl<E: Element> IndexedDomain<E> {
    pub fn new(labels: Vec<E>) -> Result<Self, EmxError> {
        let mut index = HashMap::with_capacity(labels.len());
        for (pos, label) in labels.iter().enumerate() {
            if index.insert(label.clone(), pos + 1).is_some() {
                return Err(EmxError::Duplicate(format!("{label:?}")));
            }
        }
        Ok(Self { labels, index })
    }

    pub fn idx(&self, x: &E) -> Option<usize> {
        self.index.get(x).copied()
    }

    /// Element of rank `rank` (1-based).
    pub fn element(&self, rank: usize) -> Option<&E> {
        rank.checked_sub(1).and_then(|i| self.labels.get(i))
    }

    /// `A_t = {x : idx(x) ≤ t}`.
    pub fn initial_segment(&self, t: usize) -> &[E] {
        &self.labels[..t.min(self.labels.len())]
    }

    pub fn labels(&self) -> &[E] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Set-membership view of a hypothesis.
pub trait Membership<E> {
    fn contains(&self, x: &E) -> bool;
}

impl<E: Eq + Hash> Membership<E> for HashSet<E> {
    fn contains(&self, x: &E) -> bool {
        HashSet::contains(self, x)
    }
}

impl<E: Ord> Membership<E> for BTreeSet<E> {
    fn contains(&self, x: &E) -> bool {
        BTreeSet::contains(self, x)
    }
}

/// A finite subset of the domain, either listed or an initial segment.
#[derive(Debug, Clone)]
pub enum FiniteHypothesis<E: Element> {
    Set(HashSet<E>),
    InitialSegment {
        threshold: usize,
        domain: Arc<IndexedDomain<E>>,
    },
}

impl<E: Element> FiniteHypothesis<E> {
    pub fn segment(threshold: usize, domain: Arc<IndexedDomain<E>>) -> Self {
        Self::InitialSegment { threshold, domain }
    }

    pub fn empty() -> Self {
        Self::Set(HashSet::new())
    }

    /// Expands the hypothesis into an explicit set.
    pub fn elements(&self) -> HashSet<E> {
        match self {
            Self::Set(set) => set.clone(),
            Self::InitialSegment { threshold, domain } => {
                domain.initial_segment(*threshold).iter().cloned().collect()
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Set(set) => set.len(),
            Self::InitialSegment { threshold, domain } => (*threshold).min(domain.len()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn threshold(&self) -> Option<usize> {
        match self {
            Self::Set(_) => None,
            Self::InitialSegment { threshold, .. } => Some(*threshold),
        }
    }
}

impl<E: Element> Membership<E> for FiniteHypothesis<E> {
    fn contains(&self, x: &E) -> bool {
        match self {
            Self::Set(set) => set.contains(x),
            Self::InitialSegment { threshold, domain } => {
                domain.idx(x).is_some_and(|i| i <= *threshold)
            }
        }
    }
}

/// Probability distribution with finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct FinSupportDist<E: Element, W: Probability> {
    support: Vec<E>,
    weights: Vec<W>,
    cumulative: Vec<f64>,
}

impl<E: Element, W: Probability> FinSupportDist<E, W> {
    pub fn new(support: Vec<E>, weights: Vec<W>) -> Result<Self, EmxError> {
        if support.len() != weights.len() {
            return Err(EmxError::InvalidDistribution(format!(
                "{} support points but {} weights",
                support.len(),
                weights.len()
            )));
        }
        if support.is_empty() {
            return Err(EmxError::InvalidDistribution("empty support".into()));
        }
        let mut seen = HashSet::with_capacity(support.len());
        for x in &support {
            if !seen.insert(x) {
                return Err(EmxError::Duplicate(format!("{x:?}")));
            }
        }
        let mut total = W::zero();
        for w in &weights {
            if *w <= W::zero() {
                return Err(EmxError::InvalidDistribution(format!(
                    "non-positive weight {w:?}"
                )));
            }
            total = total + w.clone();
        }
        if !W::is_unit_total(&total) {
            return Err(EmxError::InvalidDistribution(format!(
                "weights sum to {total:?}, not 1"
            )));
        }
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w.to_f64();
                acc
            })
            .collect();
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(Self {
            support,
            weights,
            cumulative,
        })
    }

    pub fn support(&self) -> &[E] {
        &self.support
    }

    pub fn weights(&self) -> &[W] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&E, &W)> {
        self.support.iter().zip(&self.weights)
    }

    /// `P(F)`: total weight of the support points inside `hypothesis`.
    pub fn mass<M: Membership<E> + ?Sized>(&self, hypothesis: &M) -> W {
        self.iter()
            .filter(|(x, _)| hypothesis.contains(x))
            .fold(W::zero(), |acc, (_, w)| acc + w.clone())
    }

    /// One inverse-CDF draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> &E {
        let u: f64 = rng.random();
        let pos = self.cumulative.partition_point(|&c| c <= u);
        &self.support[pos.min(self.support.len() - 1)]
    }

    /// `d` i.i.d. draws from the stream of trial `trial`.
    pub fn draw_trial(&self, d: usize, seed: u64, trial: u64) -> SampleSeq<E> {
        let mut rng = trial_rng(seed, trial);
        let points = (0..d).map(|_| self.draw(&mut rng).clone()).collect();
        SampleSeq {
            points,
            seed,
            trial,
        }
    }

    /// Same support with weights converted to `f64`.
    pub fn to_float(&self) -> FinSupportDist<E, f64> {
        FinSupportDist {
            support: self.support.clone(),
            weights: self.weights.iter().map(Probability::to_f64).collect(),
            cumulative: self.cumulative.clone(),
        }
    }
}

impl<E: Element> FinSupportDist<E, BigRational> {
    pub fn uniform(support: Vec<E>) -> Result<Self, EmxError> {
        let n = support.len();
        if n == 0 {
            return Err(EmxError::InvalidDistribution("empty support".into()));
        }
        let w = BigRational::new(1.into(), n.into());
        Self::new(support, vec![w; n])
    }
}

/// `d` draws from `P`, reproducible from `(P, d, seed)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSeq<E> {
    pub points: Vec<E>,
    pub seed: u64,
    pub trial: u64,
}

impl<E> SampleSeq<E> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn draw_sample<E: Element, W: Probability>(
    p: &FinSupportDist<E, W>,
    d: usize,
    seed: u64,
) -> SampleSeq<E> {
    p.draw_trial(d, seed, 0)
}

pub fn mass<E: Element, W: Probability, M: Membership<E> + ?Sized>(
    p: &FinSupportDist<E, W>,
    hypothesis: &M,
) -> W {
    p.mass(hypothesis)
}

/// Marker for the class of all finite subsets of a domain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FiniteSubsets;

/// `opt(P)` over the finite subsets: the support is finite, so the optimum is 1.
pub fn opt_value<E: Element, W: Probability>(_p: &FinSupportDist<E, W>, _class: FiniteSubsets) -> W {
    W::one()
}

/// Quantile rule: `T(S) = max_j idx(x_j)`, output `A_{T(S)}`.
pub fn quantile_learn<E: Element>(
    sample: &[E],
    domain: &Arc<IndexedDomain<E>>,
) -> Result<FiniteHypothesis<E>, EmxError> {
    let mut threshold = None;
    for x in sample {
        let i = domain
            .idx(x)
            .ok_or_else(|| EmxError::UnknownElement(format!("{x:?}")))?;
        threshold = Some(threshold.map_or(i, |t: usize| t.max(i)));
    }
    let threshold = threshold.ok_or(EmxError::EmptySample)?;
    Ok(FiniteHypothesis::segment(threshold, Arc::clone(domain)))
}

fn check_open_unit(name: &str, value: f64) -> Result<(), EmxError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(EmxError::Domain(format!("{name} = {value} is outside (0, 1)")))
    }
}

/// Smallest `d ≥ ln(1/δ) / (−ln(1−ε))`, at least 1.
pub fn sample_complexity(epsilon: f64, delta: f64) -> Result<usize, EmxError> {
    check_open_unit("epsilon", epsilon)?;
    check_open_unit("delta", delta)?;
    let ratio = (1.0 / delta).ln() / -(-epsilon).ln_1p();
    // Relative guard so that exact integers (ln 2 / ln 2) are not bumped up by rounding.
    let d = (ratio * (1.0 - 1e-12)).ceil();
    Ok((d as usize).max(1))
}

/// Success probability guaranteed for the quantile learner: `1 − (1−ε)^d`.
pub fn quantile_bound(epsilon: f64, d: usize) -> f64 {
    1.0 - (1.0 - epsilon).powi(d as i32)
}

/// A learner mapping a sample to a hypothesis.
pub trait EmxLearner<E>: Sync {
    type Hypothesis: Membership<E>;

    fn learn(&self, sample: &[E]) -> Result<Self::Hypothesis, EmxError>;
}

/// The quantile rule over a fixed naming of the domain.
#[derive(Debug, Clone)]
pub struct QuantileLearner<E: Element> {
    domain: Arc<IndexedDomain<E>>,
}

impl<E: Element> QuantileLearner<E> {
    pub fn new(domain: Arc<IndexedDomain<E>>) -> Self {
        Self { domain }
    }

    pub fn domain(&self) -> &Arc<IndexedDomain<E>> {
        &self.domain
    }
}

impl<E: Element> EmxLearner<E> for QuantileLearner<E> {
    type Hypothesis = FiniteHypothesis<E>;

    fn learn(&self, sample: &[E]) -> Result<FiniteHypothesis<E>, EmxError> {
        quantile_learn(sample, &self.domain)
    }
}

/// Outcome of a Monte Carlo check of an `(ε, δ)` guarantee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeReport {
    pub epsilon: f64,
    pub delta: f64,
    pub d: usize,
    pub trials: usize,
    pub seed: u64,
    pub empirical_rate: f64,
    /// Three binomial standard deviations at the bound probability.
    pub ci_halfwidth: f64,
    /// `1 − (1−ε)^d`.
    pub bound: f64,
}

impl GuaranteeReport {
    pub fn meets_bound(&self) -> bool {
        self.empirical_rate >= self.bound - self.ci_halfwidth
    }
}

/// Three-sigma half-width of a binomial proportion with success probability `p`.
pub fn three_sigma(p: f64, trials: usize) -> f64 {
    3.0 * (p * (1.0 - p) / trials as f64).max(0.0).sqrt()
}

/// Counts trials in which `P(learner(S)) ≥ 1 − ε` for `S ∼ P^d`.
pub fn count_successes<E, W, L>(
    learner: &L,
    p: &FinSupportDist<E, W>,
    epsilon: f64,
    d: usize,
    trials: usize,
    seed: u64,
) -> Result<usize, EmxError>
where
    E: Element,
    W: Probability,
    L: EmxLearner<E>,
{
    let target = opt_value(p, FiniteSubsets).to_f64() - epsilon - SUCCESS_SLACK;
    (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let sample = p.draw_trial(d, seed, trial);
            let h = learner.learn(&sample.points)?;
            Ok(usize::from(p.mass(&h).to_f64() >= target))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

/// Runs `trials` independent episodes and compares the empirical success
/// rate with `1 − (1−ε)^d`.
pub fn verify_guarantee<E, W, L>(
    learner: &L,
    p: &FinSupportDist<E, W>,
    epsilon: f64,
    delta: f64,
    d: usize,
    trials: usize,
    seed: u64,
) -> Result<GuaranteeReport, EmxError>
where
    E: Element,
    W: Probability,
    L: EmxLearner<E>,
{
    check_open_unit("epsilon", epsilon)?;
    if trials == 0 {
        return Err(EmxError::Domain("trials must be at least 1".into()));
    }
    let successes = count_successes(learner, p, epsilon, d, trials, seed)?;
    let bound = quantile_bound(epsilon, d);
    Ok(GuaranteeReport {
        epsilon,
        delta,
        d,
        trials,
        seed,
        empirical_rate: successes as f64 / trials as f64,
        ci_halfwidth: three_sigma(bound, trials),
        bound,
    })
}

/// Distribution file contents: `labels` plus weights as strings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionFile {
    pub labels: Vec<String>,
    pub weights: Vec<String>,
}

/// A distribution loaded from a file, exact when the weights allow it.
#[derive(Debug, Clone)]
pub enum LoadedDist {
    Exact(FinSupportDist<String, BigRational>),
    Float(FinSupportDist<String, f64>),
}

impl DistributionFile {
    /// Exact rationals when every weight parses and the total is exactly 1;
    /// otherwise falls back to `f64` weights normalized within `1e-12`.
    pub fn load(&self) -> Result<LoadedDist, EmxError> {
        let exact: Option<Vec<BigRational>> =
            self.weights.iter().map(|w| parse_rational(w).ok()).collect();
        if let Some(weights) = exact {
            let total = weights.iter().fold(BigRational::zero(), |a, w| a + w);
            if total.is_one() {
                return FinSupportDist::new(self.labels.clone(), weights).map(LoadedDist::Exact);
            }
        }
        let weights = self
            .weights
            .iter()
            .map(|w| {
                w.trim().parse::<f64>().map_err(|_| {
                    EmxError::InvalidDistribution(format!("cannot parse weight {w:?}"))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        FinSupportDist::new(self.labels.clone(), weights).map(LoadedDist::Float)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::ratio;

    fn labels(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn set(names: &[&str]) -> HashSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn mass_of_uniform_pair() {
        let p = FinSupportDist::uniform(labels(&["a", "b", "c"])).unwrap();
        assert_eq!(mass(&p, &set(&["a", "b"])), ratio(2, 3));
        assert_eq!(mass(&p, &set(&[])), ratio(0, 1));
    }

    #[test]
    fn mass_of_skewed_distribution() {
        let p = FinSupportDist::new(
            labels(&["a", "b", "c"]),
            vec![ratio(1, 2), ratio(1, 3), ratio(1, 6)],
        )
        .unwrap();
        assert_eq!(mass(&p, &set(&["b", "c"])), ratio(1, 2));
        // points outside the support contribute nothing
        assert_eq!(mass(&p, &set(&["c", "zzz"])), ratio(1, 6));
        assert_eq!(mass(&p, &set(&["a", "b", "c"])), ratio(1, 1));
    }

    #[test]
    fn rejects_bad_distributions() {
        assert!(FinSupportDist::new(labels(&["a", "b"]), vec![ratio(1, 2), ratio(1, 3)]).is_err());
        assert!(FinSupportDist::new(labels(&["a", "a"]), vec![ratio(1, 2), ratio(1, 2)]).is_err());
        assert!(FinSupportDist::new(labels(&["a", "b"]), vec![ratio(1, 1), ratio(0, 1)]).is_err());
        assert!(FinSupportDist::new(labels(&["a"]), vec![ratio(1, 1), ratio(0, 1)]).is_err());
        assert!(FinSupportDist::new(labels(&["a", "b"]), vec![0.5, 0.5 + 1e-13]).is_ok());
        assert!(FinSupportDist::new(labels(&["a", "b"]), vec![0.5, 0.5 + 1e-9]).is_err());
    }

    #[test]
    fn opt_is_one() {
        let p = FinSupportDist::uniform((0..100).collect()).unwrap();
        assert!(opt_value(&p, FiniteSubsets).is_one());
        let q = FinSupportDist::uniform(vec!["x"]).unwrap();
        assert!(opt_value(&q, FiniteSubsets).is_one());
        let support: HashSet<_> = p.support().iter().copied().collect();
        assert_eq!(p.mass(&support), opt_value(&p, FiniteSubsets));
    }

    #[test]
    fn draws_are_deterministic() {
        let p = FinSupportDist::uniform(labels(&["a", "b", "c"])).unwrap();
        assert!(draw_sample(&p, 0, 1).is_empty());
        assert_eq!(draw_sample(&p, 50, 9), draw_sample(&p, 50, 9));
        assert_ne!(draw_sample(&p, 50, 9).points, draw_sample(&p, 50, 10).points);
    }

    #[test]
    fn empirical_frequencies_match_uniform() {
        let p = FinSupportDist::uniform(vec![0u8, 1, 2, 3]).unwrap();
        let n = 40_000;
        let s = draw_sample(&p, n, 2024);
        let tol = 3.0 * (0.25f64 * 0.75 / n as f64).sqrt();
        for k in 0..4u8 {
            let freq = s.points.iter().filter(|&&x| x == k).count() as f64 / n as f64;
            assert!((freq - 0.25).abs() <= tol, "label {k}: {freq}");
        }
    }

    #[test]
    fn quantile_takes_max_index() {
        let domain = Arc::new(IndexedDomain::new((1..=10).collect::<Vec<u32>>()).unwrap());
        let h = quantile_learn(&[7, 3, 5], &domain).unwrap();
        assert_eq!(h.threshold(), Some(7));
        assert_eq!(h.elements(), (1..=7).collect());
        let h = quantile_learn(&[4], &domain).unwrap();
        assert_eq!(h.elements(), (1..=4).collect());
        assert_eq!(quantile_learn(&[], &domain).unwrap_err(), EmxError::EmptySample);
        assert!(matches!(
            quantile_learn(&[11], &domain),
            Err(EmxError::UnknownElement(_))
        ));
    }

    #[test]
    fn sample_complexity_values() {
        assert_eq!(sample_complexity(1.0 / 3.0, 1.0 / 3.0).unwrap(), 3);
        assert_eq!(sample_complexity(0.5, 0.5).unwrap(), 1);
        assert_eq!(sample_complexity(0.99, 0.5).unwrap(), 1);
        assert_eq!(sample_complexity(0.1, 0.01).unwrap(), 44);
        for bad in [(0.0, 0.5), (1.0, 0.5), (0.5, 0.0), (0.5, 1.0), (-0.1, 0.5)] {
            assert!(sample_complexity(bad.0, bad.1).is_err());
        }
    }

    #[test]
    fn degenerate_distribution_always_succeeds() {
        let p = FinSupportDist::uniform(vec!["only".to_string()]).unwrap();
        let domain = Arc::new(IndexedDomain::new(labels(&["z", "only", "y"])).unwrap());
        let learner = QuantileLearner::new(domain);
        let report = verify_guarantee(&learner, &p, 0.1, 0.1, 1, 200, 5).unwrap();
        assert_eq!(report.empirical_rate, 1.0);
        let again = verify_guarantee(&learner, &p, 0.1, 0.1, 1, 200, 5).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn loads_exact_and_float_files() {
        let exact = DistributionFile {
            labels: labels(&["a", "b", "c"]),
            weights: vec!["1/2".into(), "0.25".into(), "1/4".into()],
        };
        assert!(matches!(exact.load().unwrap(), LoadedDist::Exact(_)));
        let float = DistributionFile {
            labels: labels(&["a", "b", "c"]),
            weights: vec!["0.333333333333333".into(); 3],
        };
        assert!(matches!(float.load().unwrap(), LoadedDist::Float(_)));
        let bad = DistributionFile {
            labels: labels(&["a"]),
            weights: vec!["0.5".into()],
        };
        assert!(bad.load().is_err());
    }
}
