//! Normalized Laplacian, spectral embeddings and the two clustering
//! pipelines: full spectral clustering on the n×n Laplacian, and the
//! subsampled variant that works from an n×n_s column slice.

use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ecdf::Dataset;
use crate::eigen::{sym_eig_topk, EigenOptions};
use crate::error::{Error, Result};
use crate::evaluation::Partition;
use crate::kmeans::{kmeans, KmeansConfig};
use crate::rng;
use crate::similarity::{build_similarity, knn_sparsify, pairwise_distances, DistanceMatrix, SimilarityMatrix};

/// Relative threshold below which the K-th Gram eigenvalue counts as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// `D^{-1/2} S D^{-1/2}` with `D` the full row sums of `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    entries: Array2<f64>,
    degrees: Vec<f64>,
}

impl Laplacian {
    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn n(&self) -> usize {
        self.degrees.len()
    }
}

/// Row sums of `S`, rejecting entities with no off-diagonal weight.
fn checked_degrees(s: &SimilarityMatrix) -> Result<Vec<f64>> {
    let n = s.n();
    let e = s.entries();
    let degrees: Vec<f64> = (0..n).into_par_iter().map(|i| e.row(i).sum()).collect();
    if n > 1 {
        for (i, &d) in degrees.iter().enumerate() {
            if d - e[[i, i]] <= 0.0 || !d.is_finite() {
                return Err(Error::ZeroDegree { entity: i });
            }
        }
    } else if degrees[0] <= 0.0 {
        return Err(Error::ZeroDegree { entity: 0 });
    }
    Ok(degrees)
}

pub fn normalized_laplacian(s: &SimilarityMatrix) -> Result<Laplacian> {
    let degrees = checked_degrees(s)?;
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let e = s.entries();
    let n = s.n();
    let mut entries = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v = e[[i, j]] * inv_sqrt[i] * inv_sqrt[j];
            entries[[i, j]] = v;
            entries[[j, i]] = v;
        }
    }
    Ok(Laplacian { entries, degrees })
}

/// Rows to be clustered, one per entity, with the eigenvalues that produced
/// them (descending).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    pub rows: Array2<f64>,
    pub eigenvalues: Vec<f64>,
}

impl SpectralEmbedding {
    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn k(&self) -> usize {
        self.rows.ncols()
    }
}

/// Top-`k` eigenvectors of the Laplacian, stacked as columns.
pub fn wsc_embedding(lap: &Laplacian, k: usize, eig: &EigenOptions) -> Result<SpectralEmbedding> {
    let pairs = sym_eig_topk(lap.entries.view(), k, eig)?;
    Ok(SpectralEmbedding {
        rows: pairs.vectors,
        eigenvalues: pairs.values,
    })
}

/// The first `count` eigenvalues of the Laplacian (descending).
pub fn laplacian_spectrum(lap: &Laplacian, count: usize, eig: &EigenOptions) -> Result<Vec<f64>> {
    Ok(sym_eig_topk(lap.entries.view(), count.min(lap.n()).max(1), eig)?.values)
}

/// Sampled entity indices; position `j` holds the original index of the
/// `j`-th sampled entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsamplePlan {
    n: usize,
    selected: Vec<usize>,
    seed: Option<u64>,
}

impl SubsamplePlan {
    /// Plan from explicit indices (must be distinct and below `n`).
    pub fn from_indices(n: usize, selected: Vec<usize>) -> Result<Self> {
        if selected.is_empty() || selected.len() > n {
            return Err(Error::SizeOutOfRange {
                n_s: selected.len(),
                n,
            });
        }
        let mut seen = vec![false; n];
        for &i in &selected {
            if i >= n || seen[i] {
                return Err(Error::InvalidArgument(format!("invalid or repeated sample index {i}")));
            }
            seen[i] = true;
        }
        Ok(Self {
            n,
            selected,
            seed: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_s(&self) -> usize {
        self.selected.len()
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// Simple random sample of `n_s` of `n` entities without replacement.
pub fn subsample_plan(n: usize, n_s: usize, seed: u64) -> Result<SubsamplePlan> {
    if n_s == 0 || n_s > n {
        return Err(Error::SizeOutOfRange { n_s, n });
    }
    let mut r = rng::stream_rng(seed, "subsample", 0);
    Ok(SubsamplePlan {
        n,
        selected: rng::sample_without_replacement(&mut r, n, n_s),
        seed: Some(seed),
    })
}

/// `D_n^{-1/2} S C D_{n_s}^{-1/2}`: the sampled columns of the similarity
/// matrix, normalized with degrees taken from the full matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SubLaplacian {
    entries: Array2<f64>,
    row_degrees: Vec<f64>,
    col_degrees: Vec<f64>,
}

impl SubLaplacian {
    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn row_degrees(&self) -> &[f64] {
        &self.row_degrees
    }

    pub fn col_degrees(&self) -> &[f64] {
        &self.col_degrees
    }
}

pub fn sub_laplacian(s: &SimilarityMatrix, plan: &SubsamplePlan) -> Result<SubLaplacian> {
    if plan.n() != s.n() {
        return Err(Error::LengthMismatch {
            left: s.n(),
            right: plan.n(),
        });
    }
    let row_degrees = checked_degrees(s)?;
    let col_degrees: Vec<f64> = plan.selected.iter().map(|&i| row_degrees[i]).collect();
    let n = s.n();
    let n_s = plan.n_s();
    let e = s.entries();
    let mut entries = Array2::zeros((n, n_s));
    for i in 0..n {
        for (j, &phi) in plan.selected.iter().enumerate() {
            entries[[i, j]] = e[[i, phi]] / (row_degrees[i] * col_degrees[j]).sqrt();
        }
    }
    Ok(SubLaplacian {
        entries,
        row_degrees,
        col_degrees,
    })
}

/// Left singular vectors of the sub-Laplacian recovered from the small Gram
/// matrix: `U_K = L V_K Σ_K^{-1/2}`, with `Σ_K` the `k` largest eigenvalues
/// of `LᵀL`. The returned eigenvalues are those of `LᵀL`.
pub fn subwsc_embedding(
    sub: &SubLaplacian,
    k: usize,
    eig: &EigenOptions,
    rank_tol: f64,
) -> Result<SpectralEmbedding> {
    let l = &sub.entries;
    let n_s = l.ncols();
    if k == 0 || k > n_s {
        return Err(Error::KOutOfRange { k, max: n_s });
    }
    let gram = l.t().dot(l);
    let pairs = sym_eig_topk(gram.view(), k, eig)?;
    let top = pairs.values[0];
    let kth = pairs.values[k - 1];
    if !(top > 0.0) || kth <= rank_tol * top {
        return Err(Error::RankDeficientSample {
            k,
            ratio: if top > 0.0 { kth / top } else { 0.0 },
        });
    }
    let mut v = pairs.vectors;
    for (c, &lambda) in pairs.values.iter().enumerate() {
        v.column_mut(c).mapv_inplace(|x| x / lambda.sqrt());
    }
    Ok(SpectralEmbedding {
        rows: l.dot(&v),
        eigenvalues: pairs.values,
    })
}

/// Leading singular values of the sub-Laplacian (descending).
pub fn sub_laplacian_spectrum(sub: &SubLaplacian, count: usize, eig: &EigenOptions) -> Result<Vec<f64>> {
    let gram = sub.entries.t().dot(&sub.entries);
    let count = count.min(gram.nrows()).max(1);
    let values = sym_eig_topk(gram.view(), count, eig)?.values;
    Ok(values.into_iter().map(|v| v.max(0.0).sqrt()).collect())
}

/// Required subsample size so that every latent cluster is sampled at least
/// once with probability `1 − 1/n`: `ceil(α (ln n + ln k))` with
/// `α = −1 / ln(1 − n_min / n)`, clamped to `[k, n]`.
pub fn required_subsample_size(n: usize, n_min: usize, k: usize) -> Result<usize> {
    if n_min == 0 || n_min >= n {
        return Err(Error::DegenerateProportion { n_min, n });
    }
    if k == 0 {
        return Err(Error::KOutOfRange { k, max: n });
    }
    let nf = n as f64;
    let alpha = -1.0 / (1.0 - n_min as f64 / nf).ln();
    // the slack keeps exact-integer products from rounding up a whole unit
    let raw = (alpha * (nf.ln() + (k as f64).ln()) - 1e-9).ceil();
    let raw = if raw.is_finite() { raw as usize } else { n };
    Ok(raw.clamp(k.min(n), n))
}

/// Subsample size used when the caller gives none: the required size
/// assuming the smallest cluster holds `n / (4k)` entities.
pub fn default_subsample_size(n: usize, k: usize) -> Result<usize> {
    let n_min = (n / (4 * k.max(1))).max(1);
    if n_min >= n {
        return Ok(n);
    }
    required_subsample_size(n, n_min, k)
}

const GAP_TIE_TOL: f64 = 1e-12;

/// Number of clusters at the largest gap between consecutive eigenvalues
/// (descending input); candidates are `1..=min(k_max, len − 1)`, ties go to
/// the smaller K.
pub fn eigengap_suggest_k(eigenvalues: &[f64], k_max: usize) -> Result<usize> {
    if eigenvalues.len() < 2 {
        return Err(Error::TooFewEigenvalues(eigenvalues.len()));
    }
    let upper = k_max.min(eigenvalues.len() - 1).max(1);
    let mut best = 1;
    let mut best_gap = f64::NEG_INFINITY;
    for kk in 1..=upper {
        let gap = eigenvalues[kk - 1] - eigenvalues[kk];
        if gap > best_gap + GAP_TIE_TOL {
            best_gap = gap;
            best = kk;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralConfig {
    /// Kernel scale; the largest pairwise distance when `None`.
    pub sigma: Option<f64>,
    /// Keep only mutual-or-one-sided k0-nearest-neighbor edges.
    pub knn_k0: Option<usize>,
    pub seed: u64,
    pub kmeans_n_init: usize,
    pub kmeans_max_iter: usize,
    #[serde(skip)]
    pub eigen: EigenOptions,
    pub rank_tol: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            sigma: None,
            knn_k0: None,
            seed: 0,
            kmeans_n_init: 10,
            kmeans_max_iter: 300,
            eigen: EigenOptions::default(),
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

impl SpectralConfig {
    fn kmeans(&self) -> KmeansConfig {
        KmeansConfig {
            n_init: self.kmeans_n_init,
            max_iter: self.kmeans_max_iter,
            seed: rng::derive_seed(self.seed, "spectral-kmeans"),
        }
    }
}

/// Similarity graph per `config` (kernel, then optional sparsification).
pub fn similarity_for(d: &DistanceMatrix, config: &SpectralConfig) -> Result<SimilarityMatrix> {
    let s = build_similarity(d, config.sigma)?;
    match config.knn_k0 {
        Some(k0) => knn_sparsify(&s, d, k0),
        None => Ok(s),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub stages: Vec<(String, f64)>,
}

impl StageTimings {
    pub fn record(&mut self, stage: &str, start: Instant) {
        self.stages.push((stage.to_string(), start.elapsed().as_secs_f64()));
    }

    pub fn get(&self, stage: &str) -> Option<f64> {
        self.stages.iter().find(|(s, _)| s == stage).map(|(_, t)| *t)
    }

    pub fn total(&self) -> f64 {
        self.stages.iter().map(|(_, t)| t).sum()
    }

    /// Time spent after the similarity matrix was available.
    pub fn spectral(&self) -> f64 {
        self.stages
            .iter()
            .filter(|(s, _)| s != "distances" && s != "similarity")
            .map(|(_, t)| t)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringOutcome {
    pub partition: Partition,
    pub embedding: SpectralEmbedding,
    pub sigma: f64,
    pub plan: Option<SubsamplePlan>,
    pub warnings: Vec<String>,
    pub timings: StageTimings,
}

fn cluster_rows(
    embedding: &SpectralEmbedding,
    k: usize,
    entity_ids: &[String],
    config: &SpectralConfig,
    warnings: &mut Vec<String>,
) -> Result<Partition> {
    let result = kmeans(embedding.rows.view(), k, &config.kmeans())?;
    let occupied = result.occupied_clusters();
    if occupied < k {
        warnings.push(format!("KMeansDegenerate: only {occupied} of {k} clusters occupied"));
    }
    Partition::from_labels(&result.labels, entity_ids.to_vec())
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::KOutOfRange { k, max: n });
    }
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }
    Ok(())
}

/// Full pipeline on a similarity graph: Laplacian, top-`k` eigenvectors,
/// K-means on the rows (not row-normalized).
pub fn wsc_from_similarity(
    s: &SimilarityMatrix,
    entity_ids: &[String],
    k: usize,
    config: &SpectralConfig,
) -> Result<ClusteringOutcome> {
    check_k(k, s.n())?;
    let mut timings = StageTimings::default();
    let mut warnings = Vec::new();

    let t = Instant::now();
    let lap = normalized_laplacian(s)?;
    timings.record("laplacian", t);

    let t = Instant::now();
    let embedding = wsc_embedding(&lap, k, &config.eigen)?;
    timings.record("eigen", t);

    let t = Instant::now();
    let partition = cluster_rows(&embedding, k, entity_ids, config, &mut warnings)?;
    timings.record("kmeans", t);

    Ok(ClusteringOutcome {
        partition,
        embedding,
        sigma: s.sigma(),
        plan: None,
        warnings,
        timings,
    })
}

pub fn wsc_from_distances(
    d: &DistanceMatrix,
    entity_ids: &[String],
    k: usize,
    config: &SpectralConfig,
) -> Result<ClusteringOutcome> {
    check_k(k, d.n())?;
    let t = Instant::now();
    let s = similarity_for(d, config)?;
    let sim_time = t.elapsed().as_secs_f64();
    let mut out = wsc_from_similarity(&s, entity_ids, k, config)?;
    out.timings.stages.insert(0, ("similarity".into(), sim_time));
    Ok(out)
}

/// Wasserstein spectral clustering of a dataset.
pub fn wsc(dataset: &Dataset, k: usize, config: &SpectralConfig) -> Result<ClusteringOutcome> {
    check_k(k, dataset.len())?;
    let t = Instant::now();
    let d = pairwise_distances(dataset);
    let dist_time = t.elapsed().as_secs_f64();
    let mut out = wsc_from_distances(&d, dataset.entity_ids(), k, config)?;
    out.timings.stages.insert(0, ("distances".into(), dist_time));
    out.warnings.splice(0..0, dataset.warnings());
    Ok(out)
}

/// Subsampled pipeline on a similarity graph.
pub fn subwsc_from_similarity(
    s: &SimilarityMatrix,
    entity_ids: &[String],
    k: usize,
    plan: &SubsamplePlan,
    config: &SpectralConfig,
) -> Result<ClusteringOutcome> {
    check_k(k, s.n())?;
    if k > plan.n_s() {
        return Err(Error::KOutOfRange { k, max: plan.n_s() });
    }
    let mut timings = StageTimings::default();
    let mut warnings = Vec::new();

    let t = Instant::now();
    let sub = sub_laplacian(s, plan)?;
    timings.record("laplacian", t);

    let t = Instant::now();
    let embedding = subwsc_embedding(&sub, k, &config.eigen, config.rank_tol)?;
    timings.record("eigen", t);

    let t = Instant::now();
    let partition = cluster_rows(&embedding, k, entity_ids, config, &mut warnings)?;
    timings.record("kmeans", t);

    Ok(ClusteringOutcome {
        partition,
        embedding,
        sigma: s.sigma(),
        plan: Some(plan.clone()),
        warnings,
        timings,
    })
}

pub fn subwsc_from_distances(
    d: &DistanceMatrix,
    entity_ids: &[String],
    k: usize,
    plan: &SubsamplePlan,
    config: &SpectralConfig,
) -> Result<ClusteringOutcome> {
    check_k(k, d.n())?;
    let t = Instant::now();
    let s = similarity_for(d, config)?;
    let sim_time = t.elapsed().as_secs_f64();
    let mut out = subwsc_from_similarity(&s, entity_ids, k, plan, config)?;
    out.timings.stages.insert(0, ("similarity".into(), sim_time));
    Ok(out)
}

/// Subsampled Wasserstein spectral clustering of a dataset.
pub fn subwsc(dataset: &Dataset, k: usize, plan: &SubsamplePlan, config: &SpectralConfig) -> Result<ClusteringOutcome> {
    check_k(k, dataset.len())?;
    let t = Instant::now();
    let d = pairwise_distances(dataset);
    let dist_time = t.elapsed().as_secs_f64();
    let mut out = subwsc_from_distances(&d, dataset.entity_ids(), k, plan, config)?;
    out.timings.stages.insert(0, ("distances".into(), dist_time));
    out.warnings.splice(0..0, dataset.warnings());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::DistanceMatrix;
    use ndarray::array;

    fn sim_from(d: Array2<f64>) -> SimilarityMatrix {
        build_similarity(&DistanceMatrix::from_array(d).unwrap(), Some(1.0)).unwrap()
    }

    #[test]
    fn all_ones_similarity() {
        let s = sim_from(Array2::zeros((4, 4)));
        let lap = normalized_laplacian(&s).unwrap();
        for v in lap.entries().iter() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        let emb = wsc_embedding(&lap, 1, &EigenOptions::default()).unwrap();
        assert!((emb.eigenvalues[0] - 1.0).abs() < 1e-12);
        for v in emb.rows.column(0) {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn isolated_entity_is_zero_degree() {
        // sigma tiny so the off-diagonal kernel underflows to 0
        let d = DistanceMatrix::from_array(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let s = build_similarity(&d, Some(1e-3)).unwrap();
        assert_eq!(normalized_laplacian(&s), Err(Error::ZeroDegree { entity: 0 }));
    }

    #[test]
    fn required_size_examples() {
        assert_eq!(required_subsample_size(100, 50, 2).unwrap(), 8);
        assert_eq!(required_subsample_size(1000, 100, 3).unwrap(), 76);
        assert_eq!(required_subsample_size(1_000_000, 999_999, 1).unwrap(), 1);
        assert!(matches!(
            required_subsample_size(10, 10, 2),
            Err(Error::DegenerateProportion { .. })
        ));
        assert!(required_subsample_size(10, 0, 2).is_err());
        // clamp to n
        assert_eq!(required_subsample_size(10, 1, 3).unwrap(), 10);
    }

    #[test]
    fn eigengap_examples() {
        assert_eq!(eigengap_suggest_k(&[1.0, 0.98, 0.3, 0.1], 10).unwrap(), 2);
        assert_eq!(eigengap_suggest_k(&[1.0, 0.5, 0.4, 0.39], 10).unwrap(), 1);
        assert_eq!(eigengap_suggest_k(&[1.0, 0.8, 0.6], 10).unwrap(), 1);
        assert_eq!(eigengap_suggest_k(&[1.0, 0.98, 0.3, 0.1], 1).unwrap(), 1);
        assert_eq!(eigengap_suggest_k(&[1.0], 3), Err(Error::TooFewEigenvalues(1)));
    }

    #[test]
    fn plans() {
        let p = subsample_plan(10, 10, 3).unwrap();
        let mut s = p.selected().to_vec();
        s.sort_unstable();
        assert_eq!(s, (0..10).collect::<Vec<_>>());
        assert_eq!(subsample_plan(10, 3, 5).unwrap(), subsample_plan(10, 3, 5).unwrap());
        assert!(matches!(subsample_plan(10, 0, 1), Err(Error::SizeOutOfRange { .. })));
        assert!(matches!(subsample_plan(10, 11, 1), Err(Error::SizeOutOfRange { .. })));
        assert!(SubsamplePlan::from_indices(4, vec![0, 0]).is_err());
        assert!(SubsamplePlan::from_indices(4, vec![4]).is_err());
    }

    #[test]
    fn sub_laplacian_uses_full_degrees() {
        let d = array![[0.0, 0.2, 0.9], [0.2, 0.0, 0.5], [0.9, 0.5, 0.0]];
        let s = sim_from(d);
        let plan = SubsamplePlan::from_indices(3, vec![2, 0]).unwrap();
        let sub = sub_laplacian(&s, &plan).unwrap();
        let deg = s.degrees();
        assert_eq!(sub.row_degrees(), deg.as_slice());
        assert_eq!(sub.col_degrees(), &[deg[2], deg[0]]);
        for i in 0..3 {
            for (j, &phi) in [2usize, 0].iter().enumerate() {
                let expect = s.get(i, phi) / (deg[i] * deg[phi]).sqrt();
                assert!((sub.entries()[[i, j]] - expect).abs() < 1e-15);
            }
        }
    }
}
