//! Pairwise Wasserstein distances, the exponential similarity kernel and
//! k-nearest-neighbor sparsification of the similarity graph.

use ndarray::Array2;
use rayon::prelude::*;

use crate::ecdf::Dataset;
use crate::error::{Error, Result};

/// Largest entity count accepted by the dense pipeline unless overridden.
pub const DEFAULT_MAX_DENSE: usize = 20_000;

/// Symmetric matrix of pairwise distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    entries: Array2<f64>,
}

impl DistanceMatrix {
    /// Fill from a distance function evaluated once per unordered pair, in
    /// parallel over rows. Each pair has a fixed output slot, so the result
    /// does not depend on the thread count.
    pub fn from_fn<F>(n: usize, dist: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| ((i + 1)..n).map(|j| dist(i, j)).collect())
            .collect();
        let mut entries = Array2::zeros((n, n));
        for (i, row) in upper.into_iter().enumerate() {
            for (off, d) in row.into_iter().enumerate() {
                let j = i + 1 + off;
                entries[[i, j]] = d;
                entries[[j, i]] = d;
            }
        }
        Self { entries }
    }

    /// Wrap an existing matrix after checking shape, symmetry, sign and the
    /// zero diagonal.
    pub fn from_array(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::InvalidArgument(format!("distance matrix is {r}x{c}")));
        }
        for i in 0..r {
            if entries[[i, i]] != 0.0 {
                return Err(Error::InvalidArgument(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let v = entries[[i, j]];
                if v != entries[[j, i]] {
                    return Err(Error::NotSymmetric {
                        asymmetry: (v - entries[[j, i]]).abs(),
                    });
                }
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidArgument(format!("invalid distance {v} at ({i},{j})")));
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[[i, j]]
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    /// The `k` nearest other entities to `j`, ordered by distance and then
    /// by index.
    pub fn nearest(&self, j: usize, k: usize) -> Vec<usize> {
        let mut others: Vec<usize> = (0..self.n()).filter(|&i| i != j).collect();
        let row = self.entries.row(j);
        others.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        others.truncate(k);
        others
    }

    /// Neighbor lists of every entity.
    pub fn knn_lists(&self, k: usize) -> Result<Vec<Vec<usize>>> {
        let n = self.n();
        if k == 0 || k + 1 > n {
            return Err(Error::K0OutOfRange {
                k0: k,
                max: n.saturating_sub(1),
            });
        }
        Ok((0..n).into_par_iter().map(|j| self.nearest(j, k)).collect())
    }
}

/// Wasserstein distances between every pair of entities.
pub fn pairwise_distances(dataset: &Dataset) -> DistanceMatrix {
    DistanceMatrix::from_fn(dataset.len(), |i, j| dataset.distance(i, j))
}

/// Kernel similarities `exp(-W / sigma)` with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    entries: Array2<f64>,
    sigma: f64,
    k0: Option<usize>,
}

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[[i, j]]
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn is_sparsified(&self) -> bool {
        self.k0.is_some()
    }

    pub fn k0(&self) -> Option<usize> {
        self.k0
    }

    /// Full row sums (diagonal included).
    pub fn degrees(&self) -> Vec<f64> {
        self.entries.rows().into_iter().map(|r| r.sum()).collect()
    }

    /// Number of nonzero off-diagonal entries.
    pub fn off_diagonal_nnz(&self) -> usize {
        let n = self.n();
        let mut c = 0;
        for i in 0..n {
            for j in 0..n {
                if i != j && self.entries[[i, j]] != 0.0 {
                    c += 1;
                }
            }
        }
        c
    }
}

/// Apply the exponential kernel. Without `sigma` the largest distance is
/// used as the scale.
pub fn build_similarity(d: &DistanceMatrix, sigma: Option<f64>) -> Result<SimilarityMatrix> {
    let sigma = match sigma {
        Some(s) if s.is_finite() && s > 0.0 => s,
        Some(s) => return Err(Error::InvalidSigma(s)),
        None => {
            let m = d.max();
            if m <= 0.0 {
                return Err(Error::NoVariation);
            }
            m
        }
    };
    let n = d.n();
    let mut entries = d.entries.mapv(|w| (-w / sigma).exp());
    for i in 0..n {
        entries[[i, i]] = 1.0;
    }
    Ok(SimilarityMatrix {
        entries,
        sigma,
        k0: None,
    })
}

/// Keep `S(i,j)` only when `i` is among the `k0` nearest neighbors of `j` or
/// vice versa; the diagonal is always kept.
pub fn knn_sparsify(s: &SimilarityMatrix, d: &DistanceMatrix, k0: usize) -> Result<SimilarityMatrix> {
    if s.n() != d.n() {
        return Err(Error::LengthMismatch {
            left: s.n(),
            right: d.n(),
        });
    }
    let lists = d.knn_lists(k0)?;
    knn_sparsify_with_lists(s, &lists, k0)
}

/// Sparsify using precomputed neighbor lists (e.g. from a cover tree).
pub fn knn_sparsify_with_lists(
    s: &SimilarityMatrix,
    lists: &[Vec<usize>],
    k0: usize,
) -> Result<SimilarityMatrix> {
    let n = s.n();
    if lists.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: lists.len(),
        });
    }
    let mut keep = Array2::from_elem((n, n), false);
    for (j, list) in lists.iter().enumerate() {
        keep[[j, j]] = true;
        for &i in list {
            keep[[i, j]] = true;
            keep[[j, i]] = true;
        }
    }
    let mut entries = s.entries.clone();
    ndarray::Zip::from(&mut entries).and(&keep).for_each(|v, &k| {
        if !k {
            *v = 0.0;
        }
    });
    Ok(SimilarityMatrix {
        entries,
        sigma: s.sigma,
        k0: Some(k0),
    })
}
