//! Synthetic merchants drawn from latent transaction-amount distributions,
//! the two comparison baselines, and the replication benchmark runner.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ecdf::{standardize, TransactionBatch};
use crate::error::{Error, Result};
use crate::evaluation::{cluster_accuracy, nmi, rand_index, Partition};
use crate::kmeans::{kmeans, KmeansConfig};
use crate::rng;
use crate::similarity::{pairwise_distances, DistanceMatrix, SimilarityMatrix};
use crate::spectral::{
    similarity_for, subsample_plan, subwsc_from_similarity, wsc_from_similarity, SpectralConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Example {
    /// |N(2, 2²)|, Exp(rate ½), Gamma(shape 2, scale 1).
    Continuous1,
    /// N(4, 2²); 0.8 Exp(½) + 0.2 U[10,12]; 0.3 Exp(½) + 0.7 U[4,6];
    /// absolute values rounded to integers.
    Discrete2,
}

impl Example {
    pub fn number(self) -> u8 {
        match self {
            Example::Continuous1 => 1,
            Example::Discrete2 => 2,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Example::Continuous1),
            2 => Ok(Example::Discrete2),
            _ => Err(Error::InvalidArgument(format!("unknown example {n}, expected 1 or 2"))),
        }
    }

    fn draw<R: Rng + ?Sized>(self, cluster: usize, r: &mut R) -> f64 {
        match (self, cluster) {
            (Example::Continuous1, 0) => rng::normal(r, 2.0, 2.0).abs(),
            (Example::Continuous1, 1) => rng::exponential(r, 0.5),
            (Example::Continuous1, _) => rng::gamma_integer_shape(r, 2, 1.0),
            (Example::Discrete2, c) => {
                let m = match c {
                    0 => rng::normal(r, 4.0, 2.0),
                    1 => {
                        if rng::uniform(r, 0.0, 1.0) < 0.8 {
                            rng::exponential(r, 0.5)
                        } else {
                            rng::uniform(r, 10.0, 12.0)
                        }
                    }
                    _ => {
                        if rng::uniform(r, 0.0, 1.0) < 0.3 {
                            rng::exponential(r, 0.5)
                        } else {
                            rng::uniform(r, 4.0, 6.0)
                        }
                    }
                };
                m.abs().round()
            }
        }
    }
}

/// Cluster sizes of the three simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    A,
    B,
    C,
}

impl Setting {
    pub fn cluster_sizes(self) -> Vec<usize> {
        match self {
            Setting::A => vec![30, 50, 75],
            Setting::B => vec![60, 100, 150],
            Setting::C => vec![120, 200, 300],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Setting::A => "a",
            Setting::B => "b",
            Setting::C => "c",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Setting::A),
            "b" => Ok(Setting::B),
            "c" => Ok(Setting::C),
            _ => Err(Error::InvalidArgument(format!("unknown setting {s:?}, expected a, b or c"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub cluster_sizes: Vec<usize>,
    pub beta: f64,
    pub example: Example,
    pub seed: u64,
}

impl SimSpec {
    pub fn new(example: Example, cluster_sizes: Vec<usize>, beta: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            cluster_sizes,
            beta,
            example,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cluster_sizes.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "both examples have 3 latent clusters, got {} sizes",
                self.cluster_sizes.len()
            )));
        }
        if self.cluster_sizes.contains(&0) {
            return Err(Error::InvalidArgument("cluster sizes must be positive".into()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.cluster_sizes.iter().sum()
    }

    pub fn k(&self) -> usize {
        self.cluster_sizes.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub labels: Vec<usize>,
}

/// Entities are laid out cluster by cluster; entity `i` draws from its own
/// substream so generation order does not matter.
pub fn generate(spec: &SimSpec) -> Result<(Vec<TransactionBatch>, GroundTruth)> {
    spec.validate()?;
    let n = spec.n();
    let labels: Vec<usize> = spec
        .cluster_sizes
        .iter()
        .enumerate()
        .flat_map(|(k, &size)| std::iter::repeat_n(k, size))
        .collect();
    let floor = (n as f64).ln().ceil().max(1.0) as usize;
    let width = n.to_string().len();
    let batches = labels
        .par_iter()
        .enumerate()
        .map(|(i, &cluster)| {
            let mut r = rng::stream_rng(spec.seed, "simgen", i as u64);
            let v = (rng::poisson(&mut r, spec.beta) as usize).max(floor);
            let amounts = (0..v).map(|_| spec.example.draw(cluster, &mut r)).collect();
            TransactionBatch::new(format!("m{i:0width$}"), amounts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((batches, GroundTruth { labels }))
}

/// K-means on raw (mean, sample sd) per entity.
pub fn feature_kmeans_baseline(batches: &[TransactionBatch], k: usize, seed: u64) -> Result<Partition> {
    let mut features = Array2::zeros((batches.len(), 2));
    for (i, b) in batches.iter().enumerate() {
        let (mean, sd) = b.mean_sd();
        features[[i, 0]] = mean;
        features[[i, 1]] = sd;
    }
    let cfg = KmeansConfig {
        seed: rng::derive_seed(seed, "feature-kmeans"),
        ..KmeansConfig::default()
    };
    let result = kmeans(features.view(), k, &cfg)?;
    Partition::from_labels(&result.labels, batches.iter().map(|b| b.entity_id.clone()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HcResult {
    pub labels: Vec<usize>,
    /// Linkage value of each merge, in merge order.
    pub heights: Vec<f64>,
}

/// Complete-linkage agglomeration down to `k` clusters. A cluster is
/// identified by its smallest member; equal linkages merge the
/// lexicographically smallest pair.
pub fn hc_complete(d: &DistanceMatrix, k: usize) -> Result<HcResult> {
    let n = d.n();
    if k == 0 || k > n {
        return Err(Error::KTooLarge { k, n });
    }
    let mut link = d.entries().clone();
    let mut active: Vec<usize> = (0..n).collect();
    let mut owner: Vec<usize> = (0..n).collect();
    let mut heights = Vec::with_capacity(n - k);
    while active.len() > k {
        let mut best = (f64::INFINITY, 0, 0);
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                let v = link[[a, b]];
                if v < best.0 {
                    best = (v, a, b);
                }
            }
        }
        let (h, a, b) = best;
        for &c in &active {
            let m = link[[a, c]].max(link[[b, c]]);
            link[[a, c]] = m;
            link[[c, a]] = m;
        }
        link[[a, a]] = 0.0;
        active.retain(|&c| c != b);
        for o in owner.iter_mut() {
            if *o == b {
                *o = a;
            }
        }
        heights.push(h);
    }
    Ok(HcResult {
        labels: owner,
        heights,
    })
}

pub fn hc_complete_baseline(d: &DistanceMatrix, k: usize, entity_ids: &[String]) -> Result<Partition> {
    Partition::from_labels(&hc_complete(d, k)?.labels, entity_ids.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    FeatureKmeans,
    Hc,
    WscDense,
    WscKnn { k0: usize },
    SubWsc { fraction: f64 },
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::FeatureKmeans => "feature_kmeans".into(),
            Method::Hc => "hc".into(),
            Method::WscDense => "wsc_dense".into(),
            Method::WscKnn { k0 } => format!("wsc_knn{k0}"),
            Method::SubWsc { fraction } => format!("subwsc_{fraction:.2}"),
        }
    }

    /// The comparison set: both WSC variants plus the two baselines.
    pub fn standard() -> Vec<Method> {
        vec![
            Method::FeatureKmeans,
            Method::Hc,
            Method::WscDense,
            Method::WscKnn { k0: 10 },
        ]
    }
}

pub const METRICS: [&str; 4] = ["ri", "ca", "nmi", "seconds"];

/// Label of the summary row carrying the better of the two WSC variants.
pub const WSC_BEST: &str = "wsc";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchConfig {
    pub example: Example,
    pub setting_name: String,
    pub cluster_sizes: Vec<usize>,
    pub beta: f64,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub seed: u64,
}

/// One method on one replication. `values` follow [`METRICS`]; `seconds`
/// covers the method's own work given the shared distance and similarity
/// matrices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawRecord {
    pub replication: usize,
    pub method: String,
    pub values: Option<[f64; 4]>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub rows: Vec<SummaryRow>,
    pub raw: Vec<RawRecord>,
    /// Which WSC variant the `wsc` rows copy.
    pub wsc_choice: Option<String>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    if m == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (mean, var.sqrt())
}

struct Prepared {
    batches: Vec<TransactionBatch>,
    ids: Vec<String>,
    truth: Vec<usize>,
    d: DistanceMatrix,
    dense: std::result::Result<SimilarityMatrix, Error>,
}

fn prepare(cfg: &BenchConfig, seed: u64) -> Result<Prepared> {
    let spec = SimSpec::new(cfg.example, cfg.cluster_sizes.clone(), cfg.beta, seed)?;
    let (batches, truth) = generate(&spec)?;
    let dataset = standardize(&batches, None)?;
    let d = pairwise_distances(&dataset);
    let dense = similarity_for(&d, &SpectralConfig::default());
    Ok(Prepared {
        ids: dataset.entity_ids().to_vec(),
        batches,
        truth: truth.labels,
        d,
        dense,
    })
}

fn run_method(method: &Method, p: &Prepared, k: usize, seed: u64) -> Result<(Vec<usize>, f64)> {
    let config = SpectralConfig {
        seed,
        ..SpectralConfig::default()
    };
    let start = Instant::now();
    let partition = match *method {
        Method::FeatureKmeans => feature_kmeans_baseline(&p.batches, k, seed)?,
        Method::Hc => hc_complete_baseline(&p.d, k, &p.ids)?,
        Method::WscDense => wsc_from_similarity(p.dense.as_ref().map_err(Clone::clone)?, &p.ids, k, &config)?.partition,
        Method::WscKnn { k0 } => {
            let s = similarity_for(
                &p.d,
                &SpectralConfig {
                    knn_k0: Some(k0),
                    ..config.clone()
                },
            )?;
            let start = Instant::now();
            let out = wsc_from_similarity(&s, &p.ids, k, &config)?;
            return Ok((out.partition.labels().to_vec(), start.elapsed().as_secs_f64()));
        }
        Method::SubWsc { fraction } => {
            let s = p.dense.as_ref().map_err(Clone::clone)?;
            let n = s.n();
            let n_s = ((fraction * n as f64).ceil() as usize).clamp(k.min(n), n);
            let plan = subsample_plan(n, n_s, rng::derive_seed(seed, "bench-subsample"))?;
            let start = Instant::now();
            let out = subwsc_from_similarity(s, &p.ids, k, &plan, &config)?;
            return Ok((out.partition.labels().to_vec(), start.elapsed().as_secs_f64()));
        }
    }
    .labels()
    .to_vec();
    Ok((partition, start.elapsed().as_secs_f64()))
}

fn score(truth: &[usize], pred: &[usize], seconds: f64) -> Result<[f64; 4]> {
    Ok([rand_index(truth, pred)?, cluster_accuracy(truth, pred)?, nmi(truth, pred)?, seconds])
}

/// Runs every method on `replications` freshly generated datasets.
/// Replications run one after another so wall times are not distorted by
/// each other; each method parallelizes internally.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.replications == 0 {
        return Err(Error::InvalidArgument("at least one replication is required".into()));
    }
    let k = cfg.cluster_sizes.len();
    let mut raw = Vec::new();
    for m in 0..cfg.replications {
        let seed = rng::derive_indexed(cfg.seed, "replication", m as u64);
        let prepared = prepare(cfg, seed);
        for method in &cfg.methods {
            let outcome = prepared
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|p| {
                    let (labels, secs) = run_method(method, p, k, seed)?;
                    score(&p.truth, &labels, secs)
                });
            raw.push(match outcome {
                Ok(values) => RawRecord {
                    replication: m,
                    method: method.name(),
                    values: Some(values),
                    error: None,
                },
                Err(e) => {
                    log::warn!("replication {m}, {}: {e}", method.name());
                    RawRecord {
                        replication: m,
                        method: method.name(),
                        values: None,
                        error: Some(e.to_string()),
                    }
                }
            });
        }
    }

    let mut rows = Vec::new();
    for method in &cfg.methods {
        rows.extend(summarize(&method.name(), &method.name(), &raw));
    }
    let ri_mean = |name: &str| {
        rows.iter()
            .find(|r: &&SummaryRow| r.method == name && r.metric == "ri")
            .map(|r| r.mean)
            .filter(|v| v.is_finite())
    };
    let variants: Vec<String> = cfg
        .methods
        .iter()
        .filter(|m| matches!(m, Method::WscDense | Method::WscKnn { .. }))
        .map(Method::name)
        .collect();
    let wsc_choice = variants
        .iter()
        .filter_map(|name| ri_mean(name).map(|v| (name.clone(), v)))
        .fold(None::<(String, f64)>, |best, (name, v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((name, v)),
        })
        .map(|(name, _)| name);
    if let Some(choice) = &wsc_choice {
        rows.extend(summarize(choice, WSC_BEST, &raw));
    }
    Ok(BenchReport {
        config: cfg.clone(),
        rows,
        raw,
        wsc_choice,
    })
}

fn summarize(source: &str, label: &str, raw: &[RawRecord]) -> Vec<SummaryRow> {
    let ok: Vec<&[f64; 4]> = raw
        .iter()
        .filter(|r| r.method == source)
        .filter_map(|r| r.values.as_ref())
        .collect();
    METRICS
        .iter()
        .enumerate()
        .map(|(j, metric)| {
            let values: Vec<f64> = ok.iter().map(|v| v[j]).collect();
            let (mean, sd) = mean_sd(&values);
            SummaryRow {
                method: label.to_string(),
                metric: metric.to_string(),
                mean,
                sd,
                m: values.len(),
            }
        })
        .collect()
}

impl BenchReport {
    pub fn row(&self, method: &str, metric: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.method == method && r.metric == metric)
    }

    pub fn failures(&self) -> usize {
        self.raw.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn write_summary_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["example", "setting", "beta", "method", "metric", "mean", "sd", "M"])
            .map_err(io)?;
        for r in &self.rows {
            w.write_record([
                self.config.example.number().to_string(),
                self.config.setting_name.clone(),
                self.config.beta.to_string(),
                r.method.clone(),
                r.metric.clone(),
                format!("{:.6}", r.mean),
                format!("{:.6}", r.sd),
                r.m.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_raw_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["replication", "method", "ri", "ca", "nmi", "seconds", "error"])
            .map_err(io)?;
        for r in &self.raw {
            let mut rec = vec![r.replication.to_string(), r.method.clone()];
            match &r.values {
                Some(v) => rec.extend(v.iter().map(|x| x.to_string())),
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
            rec.push(r.error.clone().unwrap_or_default());
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Methods as rows, metrics as `mean (sd)` columns.
    pub fn to_table(&self) -> String {
        let mut methods: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
        }
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Example {}, setting {}, beta {}, M = {}",
            self.config.example.number(),
            self.config.setting_name,
            self.config.beta,
            self.config.replications
        );
        let _ = write!(out, "{:<16}", "method");
        for metric in METRICS {
            let _ = write!(out, "{metric:>20}");
        }
        out.push('\n');
        for method in methods {
            let _ = write!(out, "{method:<16}");
            for metric in METRICS {
                let cell = self
                    .row(method, metric)
                    .map(|r| format!("{:.3} ({:.3})", r.mean, r.sd))
                    .unwrap_or_default();
                let _ = write!(out, "{cell:>20}");
            }
            out.push('\n');
        }
        if let Some(choice) = &self.wsc_choice {
            let _ = writeln!(out, "wsc = {choice}");
        }
        let failures = self.failures();
        if failures > 0 {
            let _ = writeln!(out, "{failures} method runs failed; see raw output");
        }
        out
    }
}

/// Parses `start:stop:step` into the inclusive list of fractions.
pub fn parse_sweep(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::InvalidArgument(format!("sweep must be start:stop:step with 0 < start <= stop <= 1, got {spec:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad())?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(start > 0.0 && start <= stop && stop <= 1.0 && step > 0.0) {
        return Err(bad());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}
