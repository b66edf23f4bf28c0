//! Conditional output laws `Q(h | θ)` over finite `Θ × H`.

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::prob::{format_rational, Probability};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("kernel has no rows")]
    Empty,
    #[error("row {row} has {found} entries, expected {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
    #[error("row {row} has a negative entry")]
    Negative { row: usize },
    #[error("row {row} does not sum to one (sum = {sum})")]
    NotNormalized { row: usize, sum: f64 },
}

/// Row-stochastic matrix `q[θ][h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<W: Probability> {
    rows: Vec<Vec<W>>,
}

impl<W: Probability> Kernel<W> {
    pub fn new(rows: Vec<Vec<W>>) -> Result<Self, KernelError> {
        let width = rows.first().ok_or(KernelError::Empty)?.len();
        for (row, entries) in rows.iter().enumerate() {
            if entries.len() != width {
                return Err(KernelError::Ragged {
                    row,
                    found: entries.len(),
                    expected: width,
                });
            }
            if entries.iter().any(|q| *q < W::zero()) {
                return Err(KernelError::Negative { row });
            }
            let sum = entries.iter().fold(W::zero(), |acc, q| acc + q.clone());
            if !W::is_unit_total(&sum) {
                return Err(KernelError::NotNormalized {
                    row,
                    sum: sum.to_f64(),
                });
            }
        }
        Ok(Self { rows })
    }

    pub fn q(&self, theta: usize, h: usize) -> &W {
        &self.rows[theta][h]
    }

    pub fn rows(&self) -> &[Vec<W>] {
        &self.rows
    }

    pub fn num_thetas(&self) -> usize {
        self.rows.len()
    }

    pub fn num_hyps(&self) -> usize {
        self.rows[0].len()
    }

    /// `Σ_{h ∈ hyps} Q(h | θ)`.
    pub fn mass_on(&self, theta: usize, hyps: &[usize]) -> W {
        hyps.iter()
            .fold(W::zero(), |acc, &h| acc + self.rows[theta][h].clone())
    }

    /// Flattened coordinates `q[θ·|H| + h]`.
    pub fn coordinates(&self) -> Vec<W> {
        self.rows.iter().flatten().cloned().collect()
    }
}

impl Kernel<BigRational> {
    /// Rebuilds a kernel from flattened coordinates.
    pub fn from_coordinates(
        coords: &[BigRational],
        num_hyps: usize,
    ) -> Result<Self, KernelError> {
        if num_hyps == 0 || coords.is_empty() {
            return Err(KernelError::Empty);
        }
        Self::new(coords.chunks(num_hyps).map(<[_]>::to_vec).collect())
    }

    pub fn is_zero_one(&self) -> bool {
        self.rows
            .iter()
            .flatten()
            .all(|q| q.is_zero() || *q == BigRational::from_integer(1.into()))
    }
}

impl Serialize for Kernel<BigRational> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(format_rational).collect())
            .collect();
        rows.serialize(serializer)
    }
}

impl Serialize for Kernel<f64> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.rows.serialize(serializer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::ratio;

    #[test]
    fn validates_rows() {
        assert!(Kernel::new(vec![vec![ratio(1, 2), ratio(1, 2)], vec![ratio(1, 1), ratio(0, 1)]]).is_ok());
        assert!(matches!(
            Kernel::new(vec![vec![ratio(1, 2), ratio(1, 3)]]),
            Err(KernelError::NotNormalized { .. })
        ));
        assert!(matches!(
            Kernel::new(vec![vec![ratio(3, 2), ratio(-1, 2)]]),
            Err(KernelError::Negative { .. })
        ));
        assert!(matches!(
            Kernel::new(vec![vec![1.0], vec![0.5, 0.5]]),
            Err(KernelError::Ragged { .. })
        ));
        assert!(Kernel::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn coordinates_round_trip() {
        let k = Kernel::new(vec![vec![ratio(1, 4), ratio(3, 4)], vec![ratio(0, 1), ratio(1, 1)]]).unwrap();
        let back = Kernel::from_coordinates(&k.coordinates(), 2).unwrap();
        assert_eq!(k, back);
        assert_eq!(k.mass_on(0, &[1]), ratio(3, 4));
        assert!(!k.is_zero_one());
    }
}
