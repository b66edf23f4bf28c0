//! Monotone compression schemes for finite subsets of a countable domain.
//!
//! A scheme keeps `m_out` of `m_in` sample points and must be able to
//! reconstruct, from the kept points alone, a finite set containing the whole
//! input. Both directions of the learnability/compression equivalence are
//! constructive here: [`CompressionLearner`] turns a scheme into an EMX
//! learner, and [`LearnerCompression`] turns a learner into a scheme.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, RwLock};

use itertools::Itertools;
use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::Serialize;
use thiserror::Error;

use crate::emx::{EmxError, EmxLearner, Element, FiniteHypothesis, IndexedDomain};

/// Accuracy parameter fixed by the weak-learnability argument.
pub const ALPHA: f64 = 1.0 / 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompressionError {
    #[error("expected {expected} kept points, got {found}")]
    WrongArity { expected: usize, found: usize },
    #[error("sample size {n} must be at least m + 1 = {}", m + 1)]
    SampleTooSmall { n: usize, m: usize },
    #[error(transparent)]
    Emx(#[from] EmxError),
}

impl From<CompressionError> for EmxError {
    fn from(err: CompressionError) -> Self {
        match err {
            CompressionError::Emx(inner) => inner,
            other => EmxError::Domain(other.to_string()),
        }
    }
}

/// An `m_in → m_out` compression scheme with reconstruction `η`.
pub trait CompressionScheme<E: Element>: Sync {
    fn input_size(&self) -> usize;

    fn output_size(&self) -> usize;

    /// `η(kept)`, a finite set.
    fn reconstruct(&self, kept: &[E]) -> Result<HashSet<E>, CompressionError>;

    /// Indices (increasing) of an `m_out`-subtuple whose reconstruction covers
    /// `tuple`, found by exhaustive search. `None` means the monotone
    /// condition fails on this input.
    fn compress(&self, tuple: &[E]) -> Result<Option<Vec<usize>>, CompressionError> {
        for kept in (0..tuple.len()).combinations(self.output_size()) {
            let sub: Vec<E> = kept.iter().map(|&i| tuple[i].clone()).collect();
            let rebuilt = self.reconstruct(&sub)?;
            if tuple.iter().all(|x| rebuilt.contains(x)) {
                return Ok(Some(kept));
            }
        }
        Ok(None)
    }
}

/// `η(x) = {y : idx(y) ≤ idx(x)}`.
pub fn reconstruct_segment<E: Element>(
    x: &E,
    domain: &Arc<IndexedDomain<E>>,
) -> Result<FiniteHypothesis<E>, EmxError> {
    let rank = domain
        .idx(x)
        .ok_or_else(|| EmxError::UnknownElement(format!("{x:?}")))?;
    Ok(FiniteHypothesis::segment(rank, Arc::clone(domain)))
}

/// Keeps whichever of the two points has the larger index.
pub fn compress_two_to_one<E: Element>(
    x1: &E,
    x2: &E,
    domain: &IndexedDomain<E>,
) -> Result<E, EmxError> {
    let rank = |x: &E| {
        domain
            .idx(x)
            .ok_or_else(|| EmxError::UnknownElement(format!("{x:?}")))
    };
    Ok(if rank(x2)? > rank(x1)? {
        x2.clone()
    } else {
        x1.clone()
    })
}

/// Initial-segment scheme: keep the point of largest index, reconstruct its
/// segment. Valid as an `m_in → 1` scheme for every `m_in ≥ 2`.
#[derive(Debug, Clone)]
pub struct SegmentScheme<E: Element> {
    domain: Arc<IndexedDomain<E>>,
    input_size: usize,
}

impl<E: Element> SegmentScheme<E> {
    pub fn new(domain: Arc<IndexedDomain<E>>, input_size: usize) -> Self {
        Self { domain, input_size }
    }

    /// The `2 → 1` scheme.
    pub fn two_to_one(domain: Arc<IndexedDomain<E>>) -> Self {
        Self::new(domain, 2)
    }
}

impl<E: Element> CompressionScheme<E> for SegmentScheme<E> {
    fn input_size(&self) -> usize {
        self.input_size
    }

    fn output_size(&self) -> usize {
        1
    }

    fn reconstruct(&self, kept: &[E]) -> Result<HashSet<E>, CompressionError> {
        match kept {
            [x] => Ok(reconstruct_segment(x, &self.domain)?.elements()),
            _ => Err(CompressionError::WrongArity {
                expected: 1,
                found: kept.len(),
            }),
        }
    }

    fn compress(&self, tuple: &[E]) -> Result<Option<Vec<usize>>, CompressionError> {
        let mut best: Option<(usize, usize)> = None;
        for (pos, x) in tuple.iter().enumerate() {
            let rank = self
                .domain
                .idx(x)
                .ok_or_else(|| EmxError::UnknownElement(format!("{x:?}")))?;
            if best.is_none_or(|(_, r)| rank > r) {
                best = Some((pos, rank));
            }
        }
        Ok(best.map(|(pos, _)| vec![pos]))
    }
}

/// Extends an `(m+1) → m` scheme to `n → m` for every `n ≥ m + 1` by
/// induction, for families closed under finite unions.
///
/// `η_{n+1}(T) = η_{m+1}(T) ∪ ⋃ { η_n(V) : V an m-tuple over η_{m+1}(T) }`.
#[derive(Debug)]
pub struct BoostedScheme<E: Element, S> {
    base: S,
    input_size: usize,
    memo: RwLock<HashMap<(usize, Vec<E>), HashSet<E>>>,
}

impl<E: Element, S: CompressionScheme<E>> BoostedScheme<E, S> {
    pub fn new(base: S, input_size: usize) -> Result<Self, CompressionError> {
        let m = base.output_size();
        if base.input_size() != m + 1 {
            return Err(CompressionError::WrongArity {
                expected: m + 1,
                found: base.input_size(),
            });
        }
        if input_size < m + 1 {
            return Err(CompressionError::SampleTooSmall { n: input_size, m });
        }
        Ok(Self {
            base,
            input_size,
            memo: RwLock::new(HashMap::new()),
        })
    }

    /// `η_n(kept)` for `n ≥ m + 1`.
    pub fn reconstruct_at(&self, n: usize, kept: &[E]) -> Result<HashSet<E>, CompressionError> {
        let m = self.base.output_size();
        if n <= m + 1 {
            return self.base.reconstruct(kept);
        }
        let key = (n, kept.to_vec());
        if let Some(hit) = self.memo.read().expect("memo lock").get(&key) {
            return Ok(hit.clone());
        }
        let first = self.base.reconstruct(kept)?;
        let pool: Vec<E> = first.iter().cloned().collect();
        let mut out = first;
        for v in std::iter::repeat_n(pool.iter(), m).multi_cartesian_product() {
            let v: Vec<E> = v.into_iter().cloned().collect();
            out.extend(self.reconstruct_at(n - 1, &v)?);
        }
        self.memo
            .write()
            .expect("memo lock")
            .insert(key, out.clone());
        Ok(out)
    }

    /// Inductive compression of an `n`-tuple; returns positions in `tuple`.
    pub fn compress_at(&self, tuple: &[E]) -> Result<Option<Vec<usize>>, CompressionError> {
        let m = self.base.output_size();
        if tuple.len() <= m + 1 {
            return self.base.compress(tuple);
        }
        let n = tuple.len() - 1;
        let Some(prefix_kept) = self.compress_at(&tuple[..n])? else {
            return Ok(None);
        };
        let mut positions = prefix_kept;
        positions.push(n);
        let u: Vec<E> = positions.iter().map(|&i| tuple[i].clone()).collect();
        let Some(chosen) = self.base.compress(&u)? else {
            return Ok(None);
        };
        Ok(Some(chosen.into_iter().map(|j| positions[j]).collect()))
    }
}

impl<E: Element, S: CompressionScheme<E>> CompressionScheme<E> for BoostedScheme<E, S> {
    fn input_size(&self) -> usize {
        self.input_size
    }

    fn output_size(&self) -> usize {
        self.base.output_size()
    }

    fn reconstruct(&self, kept: &[E]) -> Result<HashSet<E>, CompressionError> {
        self.reconstruct_at(self.input_size, kept)
    }

    fn compress(&self, tuple: &[E]) -> Result<Option<Vec<usize>>, CompressionError> {
        let mut kept = self.compress_at(tuple)?;
        if let Some(k) = kept.as_mut() {
            k.sort_unstable();
        }
        Ok(kept)
    }
}

fn ln_biguint(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().expect("fits in f64").ln();
    }
    let shift = bits - 64;
    (x >> shift).to_f64().expect("fits in f64").ln() + shift as f64 * std::f64::consts::LN_2
}

fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    let k = k.min(n - k);
    (0..k).fold(BigUint::from(1u32), |acc, i| acc * (n - i) / (i + 1))
}

/// Which of the three sample-size conditions hold for `(n, m)` at `α = 1/6`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SampleSizeConditions {
    /// `m / n ≤ α`
    pub leave_out_fraction: bool,
    /// `2·C(n,m)·exp(−2(n−m)α²) ≤ α`
    pub uniform_deviation: bool,
    /// `exp(−2nα²) ≤ α`
    pub optimum_deviation: bool,
}

impl SampleSizeConditions {
    pub fn all(&self) -> bool {
        self.leave_out_fraction && self.uniform_deviation && self.optimum_deviation
    }
}

pub fn sample_size_conditions(n: usize, m: usize) -> SampleSizeConditions {
    let two_alpha_sq = 2.0 * ALPHA * ALPHA;
    let ln_alpha = ALPHA.ln();
    let leave_out_fraction = n > 0 && 6 * m <= n;
    let uniform_deviation = n > m
        && std::f64::consts::LN_2 + ln_biguint(&binomial(n as u64, m as u64))
            - (n - m) as f64 * two_alpha_sq
            <= ln_alpha;
    let optimum_deviation = -(n as f64) * two_alpha_sq <= ln_alpha;
    SampleSizeConditions {
        leave_out_fraction,
        uniform_deviation,
        optimum_deviation,
    }
}

/// Smallest `n ≥ m + 1` meeting all three sample-size conditions.
pub fn required_n(m: usize) -> usize {
    (m + 1..)
        .find(|&n| sample_size_conditions(n, m).all())
        .expect("conditions hold for large n")
}

/// Empirical risk maximization over the reconstructions of all `m`-subtuples.
#[derive(Debug, Clone)]
pub struct CompressionLearner<S> {
    scheme: S,
    n: usize,
}

/// Winning candidate with the index tuple it was reconstructed from.
#[derive(Debug, Clone, PartialEq)]
pub struct ErmChoice<E: Element> {
    pub indices: Vec<usize>,
    pub set: HashSet<E>,
    pub empirical_hits: usize,
}

impl<S> CompressionLearner<S> {
    pub fn new<E: Element>(scheme: S, n: usize) -> Result<Self, CompressionError>
    where
        S: CompressionScheme<E>,
    {
        let m = scheme.output_size();
        if n < m + 1 {
            return Err(CompressionError::SampleTooSmall { n, m });
        }
        Ok(Self { scheme, n })
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }

    pub fn scheme(&self) -> &S {
        &self.scheme
    }

    /// Candidates `η(x_{i_1},…,x_{i_m})` ranked by empirical mass, then by
    /// cardinality (larger first), then by the lexicographically smallest
    /// index tuple.
    pub fn choose<E: Element>(&self, sample: &[E]) -> Result<ErmChoice<E>, CompressionError>
    where
        S: CompressionScheme<E>,
    {
        if sample.len() != self.n {
            return Err(CompressionError::WrongArity {
                expected: self.n,
                found: sample.len(),
            });
        }
        let m = self.scheme.output_size();
        let mut best: Option<ErmChoice<E>> = None;
        for indices in (0..sample.len()).combinations(m) {
            let kept: Vec<E> = indices.iter().map(|&i| sample[i].clone()).collect();
            let set = self.scheme.reconstruct(&kept)?;
            let hits = sample.iter().filter(|x| set.contains(x)).count();
            let better = match &best {
                None => true,
                Some(b) => (hits, set.len()) > (b.empirical_hits, b.set.len()),
            };
            if better {
                best = Some(ErmChoice {
                    indices,
                    set,
                    empirical_hits: hits,
                });
            }
        }
        best.ok_or(CompressionError::Emx(EmxError::EmptySample))
    }
}

/// Free-function form of the compression-based learner.
pub fn compression_learner<E: Element, S: CompressionScheme<E>>(
    scheme: &S,
    n: usize,
    sample: &[E],
) -> Result<FiniteHypothesis<E>, CompressionError> {
    let learner = CompressionLearner::new(Ref(scheme), n)?;
    Ok(FiniteHypothesis::Set(learner.choose(sample)?.set))
}

struct Ref<'a, S>(&'a S);

impl<E: Element, S: CompressionScheme<E>> CompressionScheme<E> for Ref<'_, S> {
    fn input_size(&self) -> usize {
        self.0.input_size()
    }
    fn output_size(&self) -> usize {
        self.0.output_size()
    }
    fn reconstruct(&self, kept: &[E]) -> Result<HashSet<E>, CompressionError> {
        self.0.reconstruct(kept)
    }
}

impl<E: Element, S: CompressionScheme<E>> EmxLearner<E> for CompressionLearner<S> {
    type Hypothesis = FiniteHypothesis<E>;

    fn learn(&self, sample: &[E]) -> Result<FiniteHypothesis<E>, EmxError> {
        Ok(FiniteHypothesis::Set(self.choose(sample)?.set))
    }
}

/// Scheme built from a proper learner with sample size `d`:
/// `m = ⌈3d/2⌉` and `η(S') = S' ∪ ⋃ { G(T) : T a d-tuple over S' }`.
#[derive(Debug, Clone)]
pub struct LearnerCompression<L> {
    learner: L,
    d: usize,
    m: usize,
}

pub fn learner_to_compression<L>(learner: L, d: usize) -> LearnerCompression<L> {
    LearnerCompression {
        learner,
        d,
        m: (3 * d).div_ceil(2),
    }
}

impl<L> LearnerCompression<L> {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of `d`-tuples enumerated per reconstruction.
    pub fn tuples_per_reconstruction(&self) -> usize {
        self.m.pow(self.d as u32)
    }
}

impl<E, L> CompressionScheme<E> for LearnerCompression<L>
where
    E: Element,
    L: EmxLearner<E, Hypothesis = FiniteHypothesis<E>>,
{
    fn input_size(&self) -> usize {
        self.m + 1
    }

    fn output_size(&self) -> usize {
        self.m
    }

    fn reconstruct(&self, kept: &[E]) -> Result<HashSet<E>, CompressionError> {
        if kept.len() != self.m {
            return Err(CompressionError::WrongArity {
                expected: self.m,
                found: kept.len(),
            });
        }
        let mut out: HashSet<E> = kept.iter().cloned().collect();
        for t in std::iter::repeat_n(kept.iter(), self.d).multi_cartesian_product() {
            let t: Vec<E> = t.into_iter().cloned().collect();
            out.extend(self.learner.learn(&t)?.elements());
        }
        Ok(out)
    }
}

/// Record of one compression round trip.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionTrace {
    pub input: Vec<String>,
    pub kept_indices: Vec<usize>,
    pub kept: Vec<String>,
    pub reconstructed: Vec<String>,
    pub covered: bool,
}

/// Compresses `tuple`, reconstructs, and records whether the input is covered.
/// Element names are rendered with `name` and the reconstruction is listed in
/// `order`-ascending order.
pub fn trace<E, S, N, K>(
    scheme: &S,
    tuple: &[E],
    name: N,
    order: K,
) -> Result<CompressionTrace, CompressionError>
where
    E: Element,
    S: CompressionScheme<E>,
    N: Fn(&E) -> String,
    K: Fn(&E) -> usize,
{
    let input = tuple.iter().map(&name).collect();
    let Some(kept_indices) = scheme.compress(tuple)? else {
        return Ok(CompressionTrace {
            input,
            kept_indices: vec![],
            kept: vec![],
            reconstructed: vec![],
            covered: false,
        });
    };
    let kept_points: Vec<E> = kept_indices.iter().map(|&i| tuple[i].clone()).collect();
    let rebuilt = scheme.reconstruct(&kept_points)?;
    let covered = tuple.iter().all(|x| rebuilt.contains(x));
    let mut reconstructed: Vec<&E> = rebuilt.iter().collect();
    reconstructed.sort_by_key(|x| order(x));
    Ok(CompressionTrace {
        input,
        kept: kept_points.iter().map(&name).collect(),
        kept_indices,
        reconstructed: reconstructed.into_iter().map(name).collect(),
        covered,
    })
}
