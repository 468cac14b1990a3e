//! External clustering quality measures: Rand index, cluster accuracy and
//! normalized mutual information, plus the class/cluster matching matrix.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Assignment of `n` entities to `k` clusters labelled `0..k`, every label
/// occupied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
    entity_ids: Vec<String>,
}

impl Partition {
    /// Relabel arbitrary cluster ids to `0..k` in order of first appearance.
    pub fn from_labels(raw: &[usize], entity_ids: Vec<String>) -> Result<Self> {
        if raw.len() != entity_ids.len() {
            return Err(Error::LengthMismatch {
                left: raw.len(),
                right: entity_ids.len(),
            });
        }
        let mut map: HashMap<usize, usize> = HashMap::new();
        let labels = raw
            .iter()
            .map(|&r| {
                let next = map.len();
                *map.entry(r).or_insert(next)
            })
            .collect();
        Ok(Self {
            labels,
            k: map.len(),
            entity_ids,
        })
    }

    /// Partition with generated ids `0..n`.
    pub fn anonymous(raw: &[usize]) -> Self {
        let ids = (0..raw.len()).map(|i| i.to_string()).collect();
        Self::from_labels(raw, ids).expect("lengths agree")
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn entity_ids(&self) -> &[String] {
        &self.entity_ids
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

/// Counts of entities per (true class, predicted cluster).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchingMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl MatchingMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<usize> {
        let cols = self.counts.first().map_or(0, Vec::len);
        (0..cols).map(|c| self.counts.iter().map(|r| r[c]).sum()).collect()
    }
}

fn check_len(truth: &[usize], pred: &[usize]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: pred.len(),
        });
    }
    Ok(())
}

fn dense_ids(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map: HashMap<usize, usize> = HashMap::new();
    let ids = labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect();
    (ids, map.len())
}

/// `counts[c][k]` = number of entities with true class `c` and predicted
/// cluster `k`. Label values index rows/columns directly.
pub fn matching_matrix(truth: &[usize], pred: &[usize]) -> Result<MatchingMatrix> {
    check_len(truth, pred)?;
    let rows = truth.iter().max().map_or(0, |m| m + 1);
    let cols = pred.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0usize; cols]; rows];
    for (&t, &p) in truth.iter().zip(pred) {
        counts[t][p] += 1;
    }
    Ok(MatchingMatrix { counts })
}

fn contingency(truth: &[usize], pred: &[usize]) -> Vec<Vec<u64>> {
    let (t, kt) = dense_ids(truth);
    let (p, kp) = dense_ids(pred);
    let mut c = vec![vec![0u64; kp]; kt];
    for (&a, &b) in t.iter().zip(&p) {
        c[a][b] += 1;
    }
    c
}

fn pairs(x: u64) -> u128 {
    let x = u128::from(x);
    x * x.saturating_sub(1) / 2
}

/// Fraction of entity pairs on which the two partitions agree.
pub fn rand_index(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_len(truth, pred)?;
    let n = truth.len() as u64;
    if n < 2 {
        return Ok(1.0);
    }
    let c = contingency(truth, pred);
    let same_both: u128 = c.iter().flatten().map(|&x| pairs(x)).sum();
    let same_truth: u128 = c.iter().map(|r| pairs(r.iter().sum())).sum();
    let cols = c[0].len();
    let same_pred: u128 = (0..cols).map(|j| pairs(c.iter().map(|r| r[j]).sum())).sum();
    let total = pairs(n);
    let agree = total + 2 * same_both - same_truth - same_pred;
    Ok(agree as f64 / total as f64)
}

/// Accuracy under the best one-to-one matching of clusters to classes.
pub fn cluster_accuracy(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_len(truth, pred)?;
    if truth.is_empty() {
        return Ok(1.0);
    }
    let c = contingency(truth, pred);
    let size = c.len().max(c[0].len());
    let mut weight = vec![vec![0i64; size]; size];
    for (i, row) in c.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            weight[i][j] = v as i64;
        }
    }
    let matched = max_weight_assignment(&weight);
    Ok(matched as f64 / truth.len() as f64)
}

/// Maximum-weight perfect matching on a square matrix (Hungarian method with
/// potentials, O(n^3)). Returns the optimal total weight.
pub fn max_weight_assignment(weight: &[Vec<i64>]) -> i64 {
    let n = weight.len();
    if n == 0 {
        return 0;
    }
    let max_w = weight.iter().flatten().copied().max().unwrap_or(0);
    // minimize cost = max_w - w; 1-based arrays with sentinel column 0
    let cost = |i: usize, j: usize| max_w - weight[i - 1][j - 1];
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| weight[p[j] - 1][j - 1]).sum()
}

/// Mutual information normalized by the geometric mean of the entropies
/// (natural log). Two single-cluster partitions score 1; if only one side
/// has zero entropy the score is 0.
pub fn nmi(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_len(truth, pred)?;
    let n = truth.len() as f64;
    if truth.is_empty() {
        return Ok(1.0);
    }
    let c = contingency(truth, pred);
    let rows: Vec<f64> = c.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let cols: Vec<f64> = (0..c[0].len())
        .map(|j| c.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    let entropy = |m: &[f64]| -> f64 {
        m.iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| {
                let p = x / n;
                -p * p.ln()
            })
            .sum()
    };
    let (hu, hv) = (entropy(&rows), entropy(&cols));
    if hu == 0.0 && hv == 0.0 {
        return Ok(1.0);
    }
    if hu == 0.0 || hv == 0.0 {
        return Ok(0.0);
    }
    // same partition up to relabeling; avoids a rounded 0.999…
    let one_to_one = |m: &Vec<Vec<u64>>| m.iter().all(|r| r.iter().filter(|&&x| x > 0).count() == 1);
    let transposed: Vec<Vec<u64>> = (0..c[0].len()).map(|j| c.iter().map(|r| r[j]).collect()).collect();
    if one_to_one(&c) && one_to_one(&transposed) {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (i, row) in c.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (rows[i] * cols[j])).ln();
            }
        }
    }
    Ok((mi / (hu * hv).sqrt()).clamp(0.0, 1.0))
}

/// All metrics for one comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ri: f64,
    pub ca: f64,
    pub nmi: f64,
    pub nmi_normalization: String,
    pub matching_matrix: Vec<Vec<usize>>,
}

pub fn evaluate(truth: &[usize], pred: &[usize]) -> Result<MetricReport> {
    Ok(MetricReport {
        ri: rand_index(truth, pred)?,
        ca: cluster_accuracy(truth, pred)?,
        nmi: nmi(truth, pred)?,
        nmi_normalization: "sqrt".into(),
        matching_matrix: matching_matrix(truth, pred)?.counts,
    })
}

impl MetricReport {
    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8}{:>10}", "metric", "value");
        let _ = writeln!(out, "{:<8}{:>10.4}", "RI", self.ri);
        let _ = writeln!(out, "{:<8}{:>10.4}", "CA", self.ca);
        let _ = writeln!(out, "{:<8}{:>10.4}", "NMI", self.nmi);
        let _ = writeln!(out);
        let cols = self.matching_matrix.first().map_or(0, Vec::len);
        let _ = write!(out, "{:<10}", "truth\\pred");
        for c in 0..cols {
            let _ = write!(out, "{c:>8}");
        }
        let _ = writeln!(out);
        for (r, row) in self.matching_matrix.iter().enumerate() {
            let _ = write!(out, "{r:<10}");
            for v in row {
                let _ = write!(out, "{v:>8}");
            }
            let _ = writeln!(out);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: [usize; 4] = [0, 0, 1, 1];
    const P: [usize; 4] = [0, 1, 1, 1];

    #[test]
    fn rand_index_examples() {
        assert_eq!(rand_index(&T, &T).unwrap(), 1.0);
        assert_eq!(rand_index(&T, &P).unwrap(), 0.5);
        assert_eq!(rand_index(&[0, 1, 2], &[0, 0, 0]).unwrap(), 0.0);
        assert!(matches!(rand_index(&T, &[0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(cluster_accuracy(&T, &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(cluster_accuracy(&T, &P).unwrap(), 0.75);
        let truth = [0, 0, 1, 1, 2, 2];
        assert!((cluster_accuracy(&truth, &[0; 6]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn nmi_examples() {
        assert_eq!(nmi(&T, &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(nmi(&T, &[0, 1, 0, 1]).unwrap(), 0.0);
        assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 0], &[0, 1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn matching_matrix_examples() {
        let m = matching_matrix(&[0, 0, 0, 1, 1], &[0, 0, 0, 1, 1]).unwrap();
        assert_eq!(m.counts, vec![vec![3, 0], vec![0, 2]]);
        let m = matching_matrix(&T, &P).unwrap();
        assert_eq!(m.counts, vec![vec![1, 1], vec![0, 2]]);
        assert_eq!(m.total(), 4);
        assert_eq!(m.row_sums(), vec![2, 2]);
        assert_eq!(m.col_sums(), vec![1, 3]);
    }

    #[test]
    fn partition_canonical_labels() {
        let p = Partition::from_labels(&[7, 7, 2, 9], vec!["a".into(), "b".into(), "c".into(), "d".into()]).unwrap();
        assert_eq!(p.labels(), &[0, 0, 1, 2]);
        assert_eq!(p.k(), 3);
        assert_eq!(p.cluster_sizes(), vec![2, 1, 1]);
    }

    #[test]
    fn hungarian_rectangular_padding() {
        // 3 classes, 2 clusters
        assert!((cluster_accuracy(&[0, 0, 1, 1, 2, 2], &[0, 0, 1, 1, 1, 1]).unwrap() - 4.0 / 6.0).abs() < 1e-15);
        let w = vec![vec![1, 2, 3], vec![2, 4, 6], vec![3, 6, 9]];
        assert_eq!(max_weight_assignment(&w), 14);
    }

    #[test]
    fn report_json_keys() {
        let r = evaluate(&T, &P).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["ri", "ca", "nmi", "matching_matrix"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(r.to_table().contains("RI"));
    }
}
