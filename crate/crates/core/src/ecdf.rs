//! Empirical distribution functions and the exact 1-D Wasserstein distance
//! between them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Default number of transactions kept per entity when capping is enabled.
pub const DEFAULT_CAP: usize = 1000;

/// Raw transaction amounts of a single entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransactionBatch {
    pub entity_id: String,
    pub amounts: Vec<f64>,
}

impl TransactionBatch {
    pub fn new(entity_id: impl Into<String>, amounts: Vec<f64>) -> Result<Self> {
        let batch = Self {
            entity_id: entity_id.into(),
            amounts,
        };
        batch.validate()?;
        Ok(batch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.amounts.is_empty() {
            return Err(Error::EmptyBatch {
                entity: self.entity_id.clone(),
            });
        }
        for (index, &value) in self.amounts.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteAmount {
                    entity: self.entity_id.clone(),
                    index,
                });
            }
            if value < 0.0 {
                return Err(Error::NegativeAmount {
                    entity: self.entity_id.clone(),
                    index,
                    value,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.amounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amounts.is_empty()
    }

    /// Sample mean and sample standard deviation (n - 1 denominator; zero for
    /// a single transaction).
    pub fn mean_sd(&self) -> (f64, f64) {
        let n = self.amounts.len() as f64;
        let mean = self.amounts.iter().sum::<f64>() / n;
        if self.amounts.len() < 2 {
            return (mean, 0.0);
        }
        let ss: f64 = self.amounts.iter().map(|x| (x - mean) * (x - mean)).sum();
        (mean, (ss / (n - 1.0)).sqrt())
    }
}

/// Right-continuous step function `F(x) = #{amounts <= x} / v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ecdf {
    support: Vec<f64>,
    cum_prob: Vec<f64>,
    sample_count: usize,
}

impl Ecdf {
    /// Build from raw (validated) amounts.
    pub fn from_amounts(amounts: &[f64]) -> Self {
        let mut sorted = amounts.to_vec();
        sorted.sort_by(f64::total_cmp);
        let v = sorted.len();
        let mut support = Vec::new();
        let mut cum_prob = Vec::new();
        let mut i = 0;
        while i < v {
            let x = sorted[i];
            let mut j = i + 1;
            while j < v && sorted[j] == x {
                j += 1;
            }
            support.push(x);
            cum_prob.push(j as f64 / v as f64);
            i = j;
        }
        Self {
            support,
            cum_prob,
            sample_count: v,
        }
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn cum_prob(&self) -> &[f64] {
        &self.cum_prob
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn max_support(&self) -> f64 {
        *self.support.last().expect("ecdf support is never empty")
    }

    /// Evaluate `F(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        // number of support points <= x
        let k = self.support.partition_point(|&s| s <= x);
        if k == 0 {
            0.0
        } else {
            self.cum_prob[k - 1]
        }
    }

    /// Divide every support value by `m0`.
    pub fn scaled(&self, m0: f64) -> Self {
        Self {
            support: self.support.iter().map(|x| x / m0).collect(),
            cum_prob: self.cum_prob.clone(),
            sample_count: self.sample_count,
        }
    }
}

pub fn build_ecdf(batch: &TransactionBatch) -> Result<Ecdf> {
    batch.validate()?;
    Ok(Ecdf::from_amounts(&batch.amounts))
}

/// Keep at most `cap` transactions, drawn uniformly without replacement.
/// Selected amounts keep their original relative order.
pub fn cap_transactions(batch: &TransactionBatch, cap: usize, seed: u64) -> Result<TransactionBatch> {
    if cap == 0 {
        return Err(Error::InvalidArgument("transaction cap must be at least 1".into()));
    }
    batch.validate()?;
    if batch.amounts.len() <= cap {
        return Ok(batch.clone());
    }
    let mut rng = rng::stream_rng(seed, "cap_transactions", 0);
    let mut picked = rng::sample_without_replacement(&mut rng, batch.amounts.len(), cap);
    picked.sort_unstable();
    Ok(TransactionBatch {
        entity_id: batch.entity_id.clone(),
        amounts: picked.into_iter().map(|i| batch.amounts[i]).collect(),
    })
}

/// A collection of entity ECDFs on a common (optionally standardized) scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    entity_ids: Vec<String>,
    ecdfs: Vec<Ecdf>,
    m0: f64,
    standardized: bool,
}

impl Dataset {
    /// Dataset on the raw amount scale (`m0 = 1`, not standardized).
    pub fn raw(batches: &[TransactionBatch]) -> Result<Self> {
        if batches.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let ecdfs = batches.iter().map(build_ecdf).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            entity_ids: batches.iter().map(|b| b.entity_id.clone()).collect(),
            ecdfs,
            m0: 1.0,
            standardized: false,
        })
    }

    /// Assemble directly from ECDFs.
    pub fn from_ecdfs(entity_ids: Vec<String>, ecdfs: Vec<Ecdf>) -> Result<Self> {
        if ecdfs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if entity_ids.len() != ecdfs.len() {
            return Err(Error::LengthMismatch {
                left: entity_ids.len(),
                right: ecdfs.len(),
            });
        }
        Ok(Self {
            entity_ids,
            ecdfs,
            m0: 1.0,
            standardized: false,
        })
    }

    pub fn len(&self) -> usize {
        self.ecdfs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ecdfs.is_empty()
    }

    pub fn ecdfs(&self) -> &[Ecdf] {
        &self.ecdfs
    }

    pub fn ecdf(&self, i: usize) -> &Ecdf {
        &self.ecdfs[i]
    }

    pub fn entity_ids(&self) -> &[String] {
        &self.entity_ids
    }

    pub fn index_of(&self, entity_id: &str) -> Option<usize> {
        self.entity_ids.iter().position(|e| e == entity_id)
    }

    pub fn m0(&self) -> f64 {
        self.m0
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        wasserstein(&self.ecdfs[i], &self.ecdfs[j])
    }

    /// Entities with fewer than `ln n` transactions; the consistency theory
    /// assumes every entity has at least on the order of `ln n`.
    pub fn sparse_entities(&self) -> Vec<usize> {
        let floor = (self.len() as f64).ln();
        (0..self.len())
            .filter(|&i| (self.ecdfs[i].sample_count() as f64) < floor)
            .collect()
    }

    /// Human-readable warnings about the input.
    pub fn warnings(&self) -> Vec<String> {
        let sparse = self.sparse_entities();
        if sparse.is_empty() {
            return Vec::new();
        }
        vec![format!(
            "{} entities have fewer than ln(n) = {:.2} transactions (first: `{}`)",
            sparse.len(),
            (self.len() as f64).ln(),
            self.entity_ids[sparse[0]]
        )]
    }
}

/// Build a dataset with every amount divided by `m0`. Without an explicit
/// `m0` the global maximum amount is used; an all-zero dataset keeps
/// `m0 = 1`.
pub fn standardize(batches: &[TransactionBatch], m0: Option<f64>) -> Result<Dataset> {
    let raw = Dataset::raw(batches)?;
    let max = raw
        .ecdfs
        .iter()
        .map(Ecdf::max_support)
        .fold(0.0_f64, f64::max);
    let m0 = match m0 {
        Some(supplied) => {
            if !(supplied.is_finite() && supplied > 0.0) || supplied < max {
                return Err(Error::SuppliedM0TooSmall { supplied, max });
            }
            supplied
        }
        None if max > 0.0 => max,
        None => 1.0,
    };
    Ok(Dataset {
        ecdfs: raw.ecdfs.iter().map(|e| e.scaled(m0)).collect(),
        entity_ids: raw.entity_ids,
        m0,
        standardized: true,
    })
}

/// Exact 1-Wasserstein distance between two ECDFs: the integral of
/// `|F_a - F_b|` evaluated over the merged sorted distinct support.
///
/// The merge visits support points in the same order whichever argument
/// comes first, so the result is bitwise symmetric.
pub fn wasserstein(a: &Ecdf, b: &Ecdf) -> f64 {
    let (sa, pa) = (&a.support, &a.cum_prob);
    let (sb, pb) = (&b.support, &b.cum_prob);
    let (mut i, mut j) = (0usize, 0usize);
    let (mut fa, mut fb) = (0.0_f64, 0.0_f64);
    let mut prev = f64::NAN;
    let mut total = 0.0;
    while i < sa.len() || j < sb.len() {
        let x = match (sa.get(i), sb.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        if !prev.is_nan() {
            total += (fa - fb).abs() * (x - prev);
        }
        if i < sa.len() && sa[i] == x {
            fa = pa[i];
            i += 1;
        }
        if j < sb.len() && sb[j] == x {
            fb = pb[j];
            j += 1;
        }
        prev = x;
    }
    total
}
