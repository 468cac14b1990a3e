//! Lloyd's K-means with k-means++ seeding and restarts, plus silhouette
//! scores for choosing K.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KmeansConfig {
    pub n_init: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        Self {
            n_init: 10,
            max_iter: 300,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
    /// Sum of squared distances to the assigned centers.
    pub inertia: f64,
    pub iterations: usize,
    /// Index of the restart that produced this result.
    pub best_restart: usize,
    pub restarts_used: usize,
    /// Inertia after every assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
}

impl KmeansResult {
    pub fn occupied_clusters(&self) -> usize {
        let mut seen = vec![false; self.centers.nrows()];
        for &l in &self.labels {
            seen[l] = true;
        }
        seen.iter().filter(|&&s| s).count()
    }
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center (lowest index on ties) for every point; returns inertia.
fn assign(points: ArrayView2<'_, f64>, centers: &Array2<f64>, labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, p) in points.rows().into_iter().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, center) in centers.rows().into_iter().enumerate() {
            let d = sq_dist(p, center);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        labels[i] = best;
        inertia += best_d;
    }
    inertia
}

fn means(points: ArrayView2<'_, f64>, labels: &[usize], k: usize) -> (Array2<f64>, Vec<usize>) {
    let d = points.ncols();
    let mut sums = Array2::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (p, &l) in points.rows().into_iter().zip(labels) {
        counts[l] += 1;
        let mut row = sums.row_mut(l);
        row += &p;
    }
    for (c, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            sums.row_mut(c).mapv_inplace(|x| x / cnt as f64);
        }
    }
    (sums, counts)
}

fn plus_plus_init<R: Rng>(points: ArrayView2<'_, f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = points.nrows();
    let mut centers = Array2::zeros((k, points.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&points.row(first));
    let mut closest: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|p| sq_dist(p, points.row(first)))
        .collect();
    // greedy variant: draw several D²-weighted candidates and keep the one
    // that lowers the potential most
    let trials = 2 + (k as f64).ln().floor() as usize;
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let cand = if total > 0.0 {
                let target = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut chosen = n - 1;
                for (i, &w) in closest.iter().enumerate() {
                    acc += w;
                    if acc > target && w > 0.0 {
                        chosen = i;
                        break;
                    }
                }
                chosen
            } else {
                rng.random_range(0..n)
            };
            let updated: Vec<f64> = points
                .rows()
                .into_iter()
                .zip(&closest)
                .map(|(p, &d)| d.min(sq_dist(p, points.row(cand))))
                .collect();
            let potential: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, cand, updated));
            }
        }
        let (_, pick, updated) = best.expect("at least one trial");
        centers.row_mut(c).assign(&points.row(pick));
        closest = updated;
    }
    centers
}

/// Single-point transfers that lower the inertia, taking into account that
/// both centers move (Hartigan). A Lloyd fixed point can still admit such
/// moves; a transfer-stable partition is also Lloyd-stable. Returns whether
/// anything moved.
fn hartigan_pass(points: ArrayView2<'_, f64>, labels: &mut [usize], k: usize) -> bool {
    let (mut centers, mut counts) = means(points, labels, k);
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for (i, p) in points.rows().into_iter().enumerate() {
            let a = labels[i];
            if counts[a] <= 1 {
                continue;
            }
            let na = counts[a] as f64;
            let removal = na / (na - 1.0) * sq_dist(p, centers.row(a));
            let mut best = (0.0, a);
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let delta = nb / (nb + 1.0) * sq_dist(p, centers.row(b)) - removal;
                if delta < best.0 - 1e-12 * removal {
                    best = (delta, b);
                }
            }
            let b = best.1;
            if b == a {
                continue;
            }
            let (na, nb) = (counts[a] as f64, counts[b] as f64);
            for c in 0..points.ncols() {
                centers[[a, c]] = (centers[[a, c]] * na - p[c]) / (na - 1.0);
                centers[[b, c]] = (centers[[b, c]] * nb + p[c]) / (nb + 1.0);
            }
            counts[a] -= 1;
            counts[b] += 1;
            labels[i] = b;
            moved = true;
            moved_any = true;
        }
        if !moved {
            return moved_any;
        }
    }
}

fn single_run(points: ArrayView2<'_, f64>, k: usize, max_iter: usize, seed: u64, restart: usize) -> KmeansResult {
    let n = points.nrows();
    let mut rng = rng::stream_rng(seed, "kmeans", restart as u64);
    let mut centers = plus_plus_init(points, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut inertia = assign(points, &centers, &mut labels);
    let mut trace = vec![inertia];
    // rounding in the means scales with the coordinates, not the inertia
    let slack = 1e-12 * points.iter().map(|x| x * x).sum::<f64>();
    let mut iterations = 0;
    let mut prev = labels.clone();
    while iterations < max_iter {
        iterations += 1;
        let (mut new_centers, counts) = means(points, &labels, k);
        // empty clusters take the point farthest from its own center
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut far = 0;
            let mut far_d = -1.0;
            for (i, p) in points.rows().into_iter().enumerate() {
                let d = sq_dist(p, new_centers.row(labels[i]));
                if d > far_d {
                    far_d = d;
                    far = i;
                }
            }
            new_centers.row_mut(c).assign(&points.row(far));
            labels[far] = c;
        }
        centers = new_centers;
        inertia = assign(points, &centers, &mut labels);
        assert!(
            inertia <= trace.last().copied().unwrap_or(f64::INFINITY) + slack,
            "Lloyd iteration increased inertia"
        );
        trace.push(inertia);
        if labels == prev {
            break;
        }
        prev.clone_from(&labels);
    }
    if hartigan_pass(points, &mut labels, k) {
        let (c, _) = means(points, &labels, k);
        trace.push(
            points
                .rows()
                .into_iter()
                .zip(&labels)
                .map(|(p, &l)| sq_dist(p, c.row(l)))
                .sum(),
        );
    }
    // final centers are exact means of the final assignment
    let (mut final_centers, counts) = means(points, &labels, k);
    for c in 0..k {
        if counts[c] == 0 {
            final_centers.row_mut(c).assign(&centers.row(c));
        }
    }
    let inertia = points
        .rows()
        .into_iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, final_centers.row(l)))
        .sum();
    KmeansResult {
        labels,
        centers: final_centers,
        inertia,
        iterations,
        best_restart: restart,
        restarts_used: 0,
        inertia_trace: trace,
    }
}

/// Best-of-`n_init` K-means. Restarts run in parallel on independent
/// substreams; the winner is the lowest `(inertia, restart index)`.
pub fn kmeans(points: ArrayView2<'_, f64>, k: usize, cfg: &KmeansConfig) -> Result<KmeansResult> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::KTooLarge { k, n });
    }
    if points.ncols() == 0 {
        return Err(Error::InvalidArgument("points have zero dimensions".into()));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("points contain non-finite values".into()));
    }
    let n_init = cfg.n_init.max(1);
    let runs: Vec<KmeansResult> = (0..n_init)
        .into_par_iter()
        .map(|r| single_run(points, k, cfg.max_iter, cfg.seed, r))
        .collect();
    let mut best = runs
        .into_iter()
        .min_by(|a, b| a.inertia.total_cmp(&b.inertia).then(a.best_restart.cmp(&b.best_restart)))
        .expect("n_init >= 1");
    best.restarts_used = n_init;
    Ok(best)
}

/// Mean silhouette over all points for an arbitrary distance function.
/// Points in singleton clusters score 0.
pub fn silhouette_mean<D>(n: usize, labels: &[usize], dist: D) -> Result<f64>
where
    D: Fn(usize, usize) -> f64 + Sync,
{
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: labels.len(),
        });
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::SingleCluster);
    }
    let scores: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            for j in 0..n {
                if j != i {
                    sums[labels[j]] += dist(i, j);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / n as f64)
}

/// Silhouette with Euclidean distances between rows of `points`.
pub fn silhouette_euclidean(points: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    silhouette_mean(points.nrows(), labels, |i, j| sq_dist(points.row(i), points.row(j)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSelection {
    pub best_k: usize,
    pub scores: Vec<(usize, f64)>,
}

/// Run `cluster` for every candidate K and keep the one with the highest
/// mean silhouette (smaller K on ties). A candidate that collapses to a
/// single occupied cluster scores -1.
pub fn select_k_silhouette<C, D>(n: usize, k_range: &[usize], mut cluster: C, dist: D) -> Result<KSelection>
where
    C: FnMut(usize) -> Result<Vec<usize>>,
    D: Fn(usize, usize) -> f64 + Sync,
{
    if k_range.is_empty() {
        return Err(Error::InvalidArgument("empty K range".into()));
    }
    let mut ks = k_range.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if let Some(&bad) = ks.iter().find(|&&k| k < 2 || k + 1 > n) {
        return Err(Error::KOutOfRange {
            k: bad,
            max: n.saturating_sub(1),
        });
    }
    let mut scores = Vec::with_capacity(ks.len());
    for &k in &ks {
        let labels = cluster(k)?;
        let s = match silhouette_mean(n, &labels, &dist) {
            Ok(s) => s,
            Err(Error::SingleCluster) => -1.0,
            Err(e) => return Err(e),
        };
        scores.push((k, s));
    }
    let mut best = scores[0];
    for &(k, s) in &scores[1..] {
        if s > best.1 {
            best = (k, s);
        }
    }
    Ok(KSelection { best_k: best.0, scores })
}
