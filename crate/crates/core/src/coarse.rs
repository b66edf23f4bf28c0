//! Finite-precision interfaces `π: X → Y`.
//!
//! A learner behind an interface only ever sees `π(x)`. Pushing `P` forward
//! along `π` and pulling label sets back gives an exact correspondence
//! `P(π⁻¹(F)) = (π#P)(F)`, so any discrete learner on `Y` becomes a learner
//! on `X` with the same sample size and the same guarantee.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emx::{
    quantile_learn, sample_complexity, EmxError, EmxLearner, FinSupportDist, FiniteHypothesis,
    IndexedDomain, Membership, QuantileLearner,
};
use crate::prob::Probability;
use crate::rng::seeded_rng;

/// Largest supported resolution for uniform bins.
pub const MAX_BITS: u32 = 24;

/// Output label of an interface: a cell number, ordered by `idx = cell + 1`.
pub type Cell = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoarseError {
    #[error("point {0} is outside the interface domain")]
    OutsideDomain(String),
    #[error("invalid interface: {0}")]
    InvalidMap(String),
    #[error(transparent)]
    Emx(#[from] EmxError),
}

/// A real number in `[0, 1]` with bitwise equality, usable as a support point.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Point(f64);

impl Point {
    pub fn new(x: f64) -> Option<Self> {
        // -0.0 and 0.0 must hash identically
        x.is_finite().then_some(Self(if x == 0.0 { 0.0 } else { x }))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Eq for Point {}

impl Hash for Point {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

/// A deterministic, total map from inputs `X` to cells of a countable alphabet.
pub trait CoarseGraining<X>: Sync {
    fn project(&self, x: &X) -> Result<Cell, CoarseError>;

    /// Output alphabet with its naming `idx`.
    fn alphabet(&self) -> &Arc<IndexedDomain<Cell>>;

    fn cell_name(&self, cell: Cell) -> String {
        cell.to_string()
    }
}

/// `π(x) = ⌊2^ℓ · x⌋`, clamped to `[0, 2^ℓ − 1]`, on inputs in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct UniformBins {
    bits: u32,
    alphabet: Arc<IndexedDomain<Cell>>,
}

impl UniformBins {
    pub fn new(bits: u32) -> Result<Self, CoarseError> {
        if bits > MAX_BITS {
            return Err(CoarseError::InvalidMap(format!(
                "{bits} bits exceeds the limit of {MAX_BITS}"
            )));
        }
        let alphabet = IndexedDomain::new((0..1usize << bits).collect())?;
        Ok(Self {
            bits,
            alphabet: Arc::new(alphabet),
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn num_cells(&self) -> usize {
        1 << self.bits
    }

    pub fn bin(&self, x: f64) -> Result<Cell, CoarseError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(CoarseError::OutsideDomain(x.to_string()));
        }
        let top = self.num_cells() - 1;
        Ok(((x * self.num_cells() as f64).floor() as usize).min(top))
    }
}

impl CoarseGraining<Point> for UniformBins {
    fn project(&self, x: &Point) -> Result<Cell, CoarseError> {
        self.bin(x.value())
    }

    fn alphabet(&self) -> &Arc<IndexedDomain<Cell>> {
        &self.alphabet
    }
}

/// Explicit lookup table; the output order is the order of first appearance.
#[derive(Debug, Clone)]
pub struct LabelTable {
    table: HashMap<String, Cell>,
    outputs: Vec<String>,
    alphabet: Arc<IndexedDomain<Cell>>,
}

impl LabelTable {
    pub fn new(entries: &[(String, String)]) -> Result<Self, CoarseError> {
        let mut table = HashMap::new();
        let mut outputs: Vec<String> = Vec::new();
        let mut out_index: HashMap<&str, Cell> = HashMap::new();
        for (input, output) in entries {
            let cell = *out_index.entry(output.as_str()).or_insert_with(|| {
                outputs.push(output.clone());
                outputs.len() - 1
            });
            if table.insert(input.clone(), cell).is_some() {
                return Err(CoarseError::InvalidMap(format!(
                    "input {input:?} listed twice"
                )));
            }
        }
        let alphabet = Arc::new(IndexedDomain::new((0..outputs.len()).collect())?);
        Ok(Self {
            table,
            outputs,
            alphabet,
        })
    }

    pub fn output_labels(&self) -> &[String] {
        &self.outputs
    }
}

impl CoarseGraining<String> for LabelTable {
    fn project(&self, x: &String) -> Result<Cell, CoarseError> {
        self.table
            .get(x)
            .copied()
            .ok_or_else(|| CoarseError::OutsideDomain(x.clone()))
    }

    fn alphabet(&self) -> &Arc<IndexedDomain<Cell>> {
        &self.alphabet
    }

    fn cell_name(&self, cell: Cell) -> String {
        self.outputs.get(cell).cloned().unwrap_or_else(|| cell.to_string())
    }
}

/// Interface description as stored in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapSpec {
    UniformBins { bits: u32 },
    Table { entries: Vec<(String, String)> },
}

/// `Q(y) = Σ_{x : π(x) = y} P(x)`, with support in cell order.
pub fn pushforward<X, W, M>(
    p: &FinSupportDist<X, W>,
    map: &M,
) -> Result<FinSupportDist<Cell, W>, CoarseError>
where
    X: crate::emx::Element,
    W: Probability,
    M: CoarseGraining<X>,
{
    let mut merged: BTreeMap<Cell, W> = BTreeMap::new();
    for (x, w) in p.iter() {
        let cell = map.project(x)?;
        let slot = merged.entry(cell).or_insert_with(W::zero);
        *slot = slot.clone() + w.clone();
    }
    let (support, weights) = merged.into_iter().unzip();
    Ok(FinSupportDist::new(support, weights)?)
}

/// `π⁻¹(F)` for a finite label set `F`.
#[derive(Debug, Clone)]
pub struct PulledBackHypothesis<'a, M> {
    cells: BTreeSet<Cell>,
    map: &'a M,
}

impl<'a, M> PulledBackHypothesis<'a, M> {
    pub fn cells(&self) -> &BTreeSet<Cell> {
        &self.cells
    }

    pub fn map(&self) -> &'a M {
        self.map
    }
}

impl<X, M: CoarseGraining<X>> Membership<X> for PulledBackHypothesis<'_, M> {
    fn contains(&self, x: &X) -> bool {
        self.map
            .project(x)
            .is_ok_and(|cell| self.cells.contains(&cell))
    }
}

pub fn pullback<M>(cells: impl IntoIterator<Item = Cell>, map: &M) -> PulledBackHypothesis<'_, M> {
    PulledBackHypothesis {
        cells: cells.into_iter().collect(),
        map,
    }
}

/// Discretizes the sample through `map`, runs `learner` on the labels and
/// pulls the resulting label set back to `X`.
pub fn coarse_learn_with<'a, X, M, L>(
    sample: &[X],
    map: &'a M,
    learner: &L,
) -> Result<PulledBackHypothesis<'a, M>, CoarseError>
where
    M: CoarseGraining<X>,
    L: EmxLearner<Cell, Hypothesis = FiniteHypothesis<Cell>>,
{
    if sample.is_empty() {
        return Err(EmxError::EmptySample.into());
    }
    let labels = sample
        .iter()
        .map(|x| map.project(x))
        .collect::<Result<Vec<_>, _>>()?;
    let learned = learner.learn(&labels)?;
    Ok(pullback(learned.elements(), map))
}

/// The quantile reduction: requires `|S| ≥ sample_complexity(ε, δ)`.
pub fn coarse_learn<'a, X, M>(
    sample: &[X],
    map: &'a M,
    epsilon: f64,
    delta: f64,
) -> Result<PulledBackHypothesis<'a, M>, CoarseError>
where
    M: CoarseGraining<X>,
{
    if sample.is_empty() {
        return Err(EmxError::EmptySample.into());
    }
    let needed = sample_complexity(epsilon, delta)?;
    if sample.len() < needed {
        return Err(EmxError::Domain(format!(
            "sample of size {} is below the required {needed}",
            sample.len()
        ))
        .into());
    }
    coarse_learn_with(sample, map, &QuantileLearner::new(Arc::clone(map.alphabet())))
}

/// Quantile learning on the cells of an interface, as a learner on `X`.
#[derive(Debug, Clone)]
pub struct CoarseLearner<'a, M> {
    map: &'a M,
}

impl<'a, M> CoarseLearner<'a, M> {
    pub fn new(map: &'a M) -> Self {
        Self { map }
    }
}

impl<'a, X, M: CoarseGraining<X>> EmxLearner<X> for CoarseLearner<'a, M> {
    type Hypothesis = PulledBackHypothesis<'a, M>;

    fn learn(&self, sample: &[X]) -> Result<Self::Hypothesis, EmxError> {
        if sample.is_empty() {
            return Err(EmxError::EmptySample);
        }
        let mut labels = Vec::with_capacity(sample.len());
        for x in sample {
            let cell = self
                .map
                .project(x)
                .map_err(|e| EmxError::UnknownElement(e.to_string()))?;
            labels.push(cell);
        }
        let learned = quantile_learn(&labels, self.map.alphabet())?;
        Ok(pullback(learned.elements(), self.map))
    }
}

/// `n` distinct uniform points in `[0, 1)` with random positive rational
/// weights `k_i / Σ k` (`k_i ∈ 1..=max_weight`).
pub fn random_atoms(
    n: usize,
    max_weight: u32,
    seed: u64,
) -> Result<FinSupportDist<Point, BigRational>, CoarseError> {
    if n == 0 || max_weight == 0 {
        return Err(EmxError::InvalidDistribution("need at least one atom".into()).into());
    }
    let mut rng = seeded_rng(seed);
    let mut seen = std::collections::HashSet::new();
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let p = Point::new(rng.random::<f64>()).expect("finite");
        if seen.insert(p) {
            points.push(p);
        }
    }
    let ks: Vec<u32> = (0..n).map(|_| rng.random_range(1..=max_weight)).collect();
    let total: u64 = ks.iter().map(|&k| u64::from(k)).sum();
    let weights = ks
        .iter()
        .map(|&k| BigRational::new(BigInt::from(k), BigInt::from(total)))
        .collect();
    Ok(FinSupportDist::new(points, weights)?)
}
