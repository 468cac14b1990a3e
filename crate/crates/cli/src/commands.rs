use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use wsc_core::ecdf::{cap_transactions, standardize, Dataset, Ecdf, TransactionBatch};
use wsc_core::evaluation::{evaluate, Partition};
use wsc_core::io;
use wsc_core::kmeans::select_k_silhouette;
use wsc_core::rng::{derive_indexed, derive_seed};
use wsc_core::similarity::{pairwise_distances, DistanceMatrix, SimilarityMatrix};
use wsc_core::simgen::{self, BenchConfig, Example, Method, SimSpec};
use wsc_core::spectral::{
    self, default_subsample_size, laplacian_spectrum, normalized_laplacian, required_subsample_size,
    similarity_for, sub_laplacian, sub_laplacian_spectrum, subsample_plan, SpectralConfig, StageTimings,
    SubsamplePlan,
};
use wsc_core::Error;

use crate::{
    BenchArgs, Cli, ClusterArgs, Command, DataArgs, DistancesArgs, EmbedArgs, EvalArgs, GraphArgs, KSelect,
    MethodArg, PlotdataArgs, SimulateArgs,
};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Core(Error::KTooLarge { .. } | Error::KOutOfRange { .. }) => 1,
            Failure::Core(e) if e.is_input_error() => 2,
            Failure::Core(_) => 3,
        }
    }

    pub fn hint(&self) -> Option<&'static str> {
        match self {
            Failure::Core(Error::ZeroDegree { .. }) => Some("pass a larger --knn-k0 or drop it"),
            Failure::Core(Error::RankDeficientSample { .. }) => Some("pass a larger --n-s or another --seed"),
            Failure::Core(Error::NoVariation) => Some("all entities look alike; pass --sigma to proceed anyway"),
            _ => None,
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Print to stdout, ignoring a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Core(Error::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> std::result::Result<BufWriter<File>, Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

pub fn run(cli: &Cli) -> CmdResult {
    match &cli.command {
        Command::Cluster(a) => cluster(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::Distances(a) => distances(a),
        Command::Embed(a) => embed(a),
        Command::Plotdata(a) => plotdata(a),
        Command::Simulate(a) => simulate(a),
    }
}

fn load(data: &DataArgs) -> std::result::Result<(Vec<TransactionBatch>, Dataset), Failure> {
    let mut batches = io::read_transactions_file(&data.input)?;
    if let Some(cap) = data.cap {
        if cap == 0 {
            return Err(usage("--cap must be at least 1"));
        }
        batches = batches
            .iter()
            .enumerate()
            .map(|(i, b)| cap_transactions(b, cap, derive_indexed(data.seed, "cap", i as u64)))
            .collect::<wsc_core::Result<_>>()?;
    }
    let dataset = standardize(&batches, data.m0)?;
    Ok((batches, dataset))
}

fn spectral_config(graph: &GraphArgs, seed: u64) -> SpectralConfig {
    SpectralConfig {
        sigma: graph.sigma,
        knn_k0: graph.knn_k0,
        seed,
        ..SpectralConfig::default()
    }
}

fn check_graph_args(graph: &GraphArgs) -> CmdResult {
    if graph.knn_k0 == Some(0) {
        return Err(usage("--knn-k0 must be at least 1"));
    }
    if graph.n_s == Some(0) {
        return Err(usage("--n-s must be at least 1"));
    }
    Ok(())
}

/// Subsample size from --n-s, else from --n-min, else the default heuristic.
fn resolve_n_s(graph: &GraphArgs, n: usize, k: usize) -> wsc_core::Result<usize> {
    match (graph.n_s, graph.n_min) {
        (Some(n_s), _) => Ok(n_s),
        (None, Some(n_min)) => required_subsample_size(n, n_min, k),
        (None, None) => default_subsample_size(n, k),
    }
}

fn parse_k_range(spec: Option<&str>, n: usize) -> std::result::Result<Vec<usize>, Failure> {
    let Some(spec) = spec else {
        let hi = 10.min(n.saturating_sub(1));
        if hi < 2 {
            return Err(usage("automatic K selection needs at least 3 entities"));
        }
        return Ok((2..=hi).collect());
    };
    let bad = || usage(format!("--k-range must look like lo:hi, got {spec:?}"));
    let (lo, hi) = spec.split_once(':').ok_or_else(bad)?;
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo == 0 || lo > hi {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

/// Everything the pipelines share for one dataset.
struct Prepared {
    ids: Vec<String>,
    batches: Vec<TransactionBatch>,
    d: DistanceMatrix,
    s: Option<SimilarityMatrix>,
    config: SpectralConfig,
    timings: StageTimings,
}

impl Prepared {
    fn similarity(&self) -> wsc_core::Result<&SimilarityMatrix> {
        self.s
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("similarity graph was not built".into()))
    }
}

fn prepare(
    batches: Vec<TransactionBatch>,
    dataset: &Dataset,
    config: SpectralConfig,
    need_graph: bool,
) -> wsc_core::Result<Prepared> {
    let mut timings = StageTimings::default();
    let t = Instant::now();
    let d = pairwise_distances(dataset);
    timings.record("distances", t);
    let t = Instant::now();
    let s = if need_graph {
        let s = similarity_for(&d, &config)?;
        timings.record("similarity", t);
        Some(s)
    } else {
        None
    };
    Ok(Prepared {
        ids: dataset.entity_ids().to_vec(),
        batches,
        d,
        s,
        config,
        timings,
    })
}

struct MethodRun {
    labels: Vec<usize>,
    eigenvalues: Vec<f64>,
    n_s: Option<usize>,
    plan: Option<SubsamplePlan>,
    warnings: Vec<String>,
    timings: StageTimings,
}

fn run_method(p: &Prepared, method: MethodArg, graph: &GraphArgs, k: usize, seed: u64) -> wsc_core::Result<MethodRun> {
    let mut timings = StageTimings::default();
    let t = Instant::now();
    let out = match method {
        MethodArg::Wsc => {
            let o = spectral::wsc_from_similarity(p.similarity()?, &p.ids, k, &p.config)?;
            MethodRun {
                labels: o.partition.labels().to_vec(),
                eigenvalues: o.embedding.eigenvalues,
                n_s: None,
                plan: None,
                warnings: o.warnings,
                timings: o.timings,
            }
        }
        MethodArg::Subwsc => {
            let s = p.similarity()?;
            let n_s = resolve_n_s(graph, s.n(), k)?;
            let plan = subsample_plan(s.n(), n_s, derive_seed(seed, "subsample"))?;
            let o = spectral::subwsc_from_similarity(s, &p.ids, k, &plan, &p.config)?;
            MethodRun {
                labels: o.partition.labels().to_vec(),
                eigenvalues: o.embedding.eigenvalues,
                n_s: Some(n_s),
                plan: Some(plan),
                warnings: o.warnings,
                timings: o.timings,
            }
        }
        MethodArg::FeatureKmeans => {
            let part = simgen::feature_kmeans_baseline(&p.batches, k, seed)?;
            timings.record("feature_kmeans", t);
            MethodRun {
                labels: part.labels().to_vec(),
                eigenvalues: Vec::new(),
                n_s: None,
                plan: None,
                warnings: Vec::new(),
                timings,
            }
        }
        MethodArg::Hc => {
            let part = simgen::hc_complete_baseline(&p.d, k, &p.ids)?;
            timings.record("hc", t);
            MethodRun {
                labels: part.labels().to_vec(),
                eigenvalues: Vec::new(),
                n_s: None,
                plan: None,
                warnings: Vec::new(),
                timings,
            }
        }
    };
    Ok(out)
}

fn eigengap_k(p: &Prepared, method: MethodArg, graph: &GraphArgs, k_max: usize, seed: u64) -> wsc_core::Result<(usize, Vec<f64>)> {
    let s = p.similarity()?;
    let count = (k_max + 1).min(s.n());
    let values = if method == MethodArg::Subwsc {
        // size the sample for the largest candidate
        let n_s = resolve_n_s(graph, s.n(), k_max.min(s.n()))?;
        let plan = subsample_plan(s.n(), n_s, derive_seed(seed, "subsample"))?;
        sub_laplacian_spectrum(&sub_laplacian(s, &plan)?, count, &p.config.eigen)?
    } else {
        laplacian_spectrum(&normalized_laplacian(s)?, count, &p.config.eigen)?
    };
    Ok((spectral::eigengap_suggest_k(&values, k_max)?, values))
}

#[derive(Serialize)]
struct ClusterConfigEcho<'a> {
    input: String,
    method: MethodArg,
    k: Option<usize>,
    k_selection: KSelect,
    k_range: Option<&'a str>,
    sigma: Option<f64>,
    knn_k0: Option<usize>,
    n_s: Option<usize>,
    n_min: Option<usize>,
    cap: Option<usize>,
    m0: Option<f64>,
    seed: u64,
    threads: usize,
}

fn timings_json(t: &StageTimings) -> serde_json::Value {
    serde_json::Value::Array(
        t.stages
            .iter()
            .map(|(stage, secs)| json!({ "stage": stage, "seconds": secs }))
            .collect(),
    )
}

fn cluster(a: &ClusterArgs) -> CmdResult {
    check_graph_args(&a.graph)?;
    match (a.k_select, a.k) {
        (KSelect::Fixed, None) => return Err(usage("--k is required unless --k-select picks it")),
        (KSelect::Fixed, Some(0)) => return Err(usage("--k must be at least 1")),
        (KSelect::Silhouette | KSelect::Eigengap, Some(_)) => {
            return Err(usage("--k conflicts with automatic --k-select; use --k-range"))
        }
        _ => {}
    }
    let total = Instant::now();
    let t = Instant::now();
    let (batches, dataset) = load(&a.data)?;
    let load_time = t.elapsed().as_secs_f64();
    let n = dataset.len();
    let seed = a.data.seed;
    let needs_graph = matches!(a.method, MethodArg::Wsc | MethodArg::Subwsc) || a.k_select == KSelect::Eigengap;
    let config = spectral_config(&a.graph, seed);
    let mut p = prepare(batches, &dataset, config, needs_graph)?;
    p.timings.stages.insert(0, ("load".into(), load_time));

    let mut selection_scores = None;
    let mut spectrum = None;
    let k = match a.k_select {
        KSelect::Fixed => a.k.unwrap_or_default(),
        KSelect::Silhouette => {
            let range = parse_k_range(a.k_range.as_deref(), n)?;
            let t = Instant::now();
            let sel = select_k_silhouette(
                n,
                &range,
                |k| run_method(&p, a.method, &a.graph, k, seed).map(|r| r.labels),
                |i, j| p.d.get(i, j),
            )?;
            p.timings.record("k_selection", t);
            selection_scores = Some(sel.scores);
            sel.best_k
        }
        KSelect::Eigengap => {
            let range = parse_k_range(a.k_range.as_deref(), n)?;
            let k_max = *range.last().expect("non-empty range");
            let t = Instant::now();
            let (k, values) = eigengap_k(&p, a.method, &a.graph, k_max, seed)?;
            p.timings.record("k_selection", t);
            spectrum = Some(values);
            k.max(range[0])
        }
    };

    let run = run_method(&p, a.method, &a.graph, k, seed)?;
    let mut timings = p.timings.clone();
    timings.stages.extend(run.timings.stages.iter().cloned());

    let mut warnings = dataset.warnings();
    warnings.extend(run.warnings.iter().cloned());
    for w in &warnings {
        log::warn!("{w}");
    }

    fs::create_dir_all(&a.out_dir).map_err(|e| io_err(&a.out_dir, e))?;
    let labels_path = a.out_dir.join("labels.csv");
    io::write_labels(create(&labels_path)?, &p.ids, &run.labels)?;

    timings.stages.push(("total".into(), total.elapsed().as_secs_f64()));
    let sigma = p.s.as_ref().map(|s| s.sigma());
    let report = json!({
        "tool": "wsc",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "cluster",
        "config": ClusterConfigEcho {
            input: a.data.input.display().to_string(),
            method: a.method,
            k: a.k,
            k_selection: a.k_select,
            k_range: a.k_range.as_deref(),
            sigma: a.graph.sigma,
            knn_k0: a.graph.knn_k0,
            n_s: a.graph.n_s,
            n_min: a.graph.n_min,
            cap: a.data.cap,
            m0: a.data.m0,
            seed,
            threads: rayon::current_num_threads(),
        },
        "n": n,
        "k": k,
        "k_scores": selection_scores,
        "spectrum": spectrum,
        "sigma": sigma,
        "m0": dataset.m0(),
        "n_s": run.n_s,
        "subsample": run.plan.as_ref().map(|pl| pl.selected().iter().map(|&i| p.ids[i].clone()).collect::<Vec<_>>()),
        "eigenvalues": run.eigenvalues,
        "cluster_sizes": Partition::anonymous(&run.labels).cluster_sizes(),
        "timings": timings_json(&timings),
        "warnings": warnings,
    });
    let json_path = a.out_dir.join("run.json");
    let mut w = create(&json_path)?;
    serde_json::to_writer_pretty(&mut w, &report).map_err(|e| io_err(&json_path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| io_err(&json_path, e))?;
    say!("clustered {n} entities into {k} clusters; wrote {}", labels_path.display());
    Ok(())
}

fn eval(a: &EvalArgs) -> CmdResult {
    let pred = io::read_labels_file(&a.labels)?;
    let truth = io::read_labels_file(&a.truth)?;
    let truth_map: HashMap<&str, usize> = truth.iter().map(|(id, l)| (id.as_str(), *l)).collect();
    let pred_ids: HashMap<&str, usize> = pred.iter().map(|(id, l)| (id.as_str(), *l)).collect();
    let missing_pred: Vec<&str> = truth.iter().map(|(id, _)| id.as_str()).filter(|id| !pred_ids.contains_key(id)).collect();
    let missing_truth: Vec<&str> = pred.iter().map(|(id, _)| id.as_str()).filter(|id| !truth_map.contains_key(id)).collect();
    if !missing_pred.is_empty() || !missing_truth.is_empty() {
        let mut msg = String::from("label files do not cover the same entities");
        if !missing_pred.is_empty() {
            msg.push_str(&format!("; missing from {}: {}", a.labels.display(), missing_pred.join(", ")));
        }
        if !missing_truth.is_empty() {
            msg.push_str(&format!("; missing from {}: {}", a.truth.display(), missing_truth.join(", ")));
        }
        return Err(Failure::Core(Error::UnknownEntity(msg)));
    }
    let t: Vec<usize> = truth.iter().map(|(_, l)| *l).collect();
    let pr: Vec<usize> = truth.iter().map(|(id, _)| pred_ids[id.as_str()]).collect();
    let report = evaluate(&t, &pr)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    if a.table {
        say!("{}", report.to_table().trim_end());
    } else {
        say!("{text}");
    }
    if let Some(path) = &a.output {
        let mut w = create(path)?;
        writeln!(w, "{text}").and_then(|_| w.flush()).map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

fn cluster_sizes(setting: &str, sizes: &Option<Vec<usize>>) -> std::result::Result<(String, Vec<usize>), Failure> {
    match sizes {
        Some(s) => Ok(("custom".into(), s.clone())),
        None => {
            let setting = simgen::Setting::parse(setting).map_err(|e| usage(e.to_string()))?;
            Ok((setting.name().into(), setting.cluster_sizes()))
        }
    }
}

fn parse_method(s: &str) -> std::result::Result<Method, Failure> {
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (s.trim(), None),
    };
    let bad = || usage(format!("unknown method {s:?}"));
    Ok(match (name, arg) {
        ("feature-kmeans", None) => Method::FeatureKmeans,
        ("hc", None) => Method::Hc,
        ("wsc-dense", None) => Method::WscDense,
        ("wsc-knn", None) => Method::WscKnn { k0: 10 },
        ("wsc-knn", Some(k0)) => Method::WscKnn {
            k0: k0.parse().ok().filter(|&k| k > 0).ok_or_else(bad)?,
        },
        ("subwsc", None) => Method::SubWsc { fraction: 0.3 },
        ("subwsc", Some(f)) => Method::SubWsc {
            fraction: f.parse().ok().filter(|f: &f64| *f > 0.0 && *f <= 1.0).ok_or_else(bad)?,
        },
        _ => return Err(bad()),
    })
}

#[derive(Serialize)]
struct SweepPoint {
    fraction: f64,
    metric: String,
    mean: f64,
    sd: f64,
    m: usize,
}

fn bench(a: &BenchArgs) -> CmdResult {
    if a.m == 0 {
        return Err(usage("--m must be at least 1"));
    }
    if !(a.beta > 0.0 && a.beta.is_finite()) {
        return Err(usage("--beta must be positive"));
    }
    let (setting_name, sizes) = cluster_sizes(&a.setting, &a.sizes)?;
    let example = Example::from_number(a.example).map_err(|e| usage(e.to_string()))?;
    let fractions = match &a.subsample_sweep {
        Some(spec) => Some(simgen::parse_sweep(spec).map_err(|e| usage(e.to_string()))?),
        None => None,
    };
    let mut methods = match &a.methods {
        Some(list) => list.iter().map(|s| parse_method(s)).collect::<std::result::Result<Vec<_>, _>>()?,
        None if fractions.is_some() => vec![Method::WscDense],
        None => {
            let mut m = Method::standard();
            m.push(Method::SubWsc { fraction: 0.3 });
            m
        }
    };
    for &fraction in fractions.iter().flatten() {
        let m = Method::SubWsc { fraction };
        if !methods.iter().any(|x| x.name() == m.name()) {
            methods.push(m);
        }
    }
    let cfg = BenchConfig {
        example,
        setting_name,
        cluster_sizes: sizes,
        beta: a.beta,
        methods,
        replications: a.m,
        seed: a.seed,
    };
    SimSpec::new(example, cfg.cluster_sizes.clone(), cfg.beta, 0).map_err(|e| usage(e.to_string()))?;
    let report = simgen::run_benchmark(&cfg)?;
    say!("{}", report.to_table().trim_end());

    let sweep: Option<Vec<SweepPoint>> = fractions.map(|fr| {
        fr.iter()
            .flat_map(|&f| {
                let name = Method::SubWsc { fraction: f }.name();
                simgen::METRICS
                    .iter()
                    .filter_map(|metric| report.row(&name, metric))
                    .map(move |r| SweepPoint {
                        fraction: f,
                        metric: r.metric.clone(),
                        mean: r.mean,
                        sd: r.sd,
                        m: r.m,
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    });
    if let Some(points) = &sweep {
        say!("\nsubsample sweep");
        say!("{:>8} {:>8} {:>12} {:>12}", "fraction", "metric", "mean", "sd");
        for p in points {
            say!("{:>8.2} {:>8} {:>12.6} {:>12.6}", p.fraction, p.metric, p.mean, p.sd);
        }
    }

    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        report.write_summary_csv(create(&dir.join("bench_summary.csv"))?)?;
        let table_path = dir.join("bench_table.txt");
        let mut w = create(&table_path)?;
        w.write_all(report.to_table().as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| io_err(&table_path, e))?;
        if a.raw {
            report.write_raw_csv(create(&dir.join("bench_raw.csv"))?)?;
        }
        if let Some(points) = &sweep {
            let path = dir.join("subsample_sweep.csv");
            let mut w = csv::Writer::from_writer(create(&path)?);
            for p in points {
                w.serialize(p).map_err(|e| io_err(&path, e))?;
            }
            w.flush().map_err(|e| io_err(&path, e))?;
        }
    }
    Ok(())
}

fn distances(a: &DistancesArgs) -> CmdResult {
    let (_, dataset) = load(&a.data)?;
    let d = pairwise_distances(&dataset);
    io::write_matrix(create(&a.output)?, dataset.entity_ids(), d.entries().view())?;
    Ok(())
}

fn embed(a: &EmbedArgs) -> CmdResult {
    check_graph_args(&a.graph)?;
    if a.k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    let seed = a.data.seed;
    let (_, dataset) = load(&a.data)?;
    let config = spectral_config(&a.graph, seed);
    let d = pairwise_distances(&dataset);
    let s = similarity_for(&d, &config)?;
    let rows = match a.method {
        MethodArg::Wsc => spectral::wsc_embedding(&normalized_laplacian(&s)?, a.k, &config.eigen)?,
        MethodArg::Subwsc => {
            let n_s = resolve_n_s(&a.graph, s.n(), a.k)?;
            let plan = subsample_plan(s.n(), n_s, derive_seed(seed, "subsample"))?;
            spectral::subwsc_embedding(&sub_laplacian(&s, &plan)?, a.k, &config.eigen, config.rank_tol)?
        }
        other => return Err(usage(format!("{other:?} has no spectral embedding"))),
    };
    let mut w = csv::Writer::from_writer(create(&a.output)?);
    let err = |e: csv::Error| io_err(&a.output, e);
    let mut header = vec!["entity_id".to_string()];
    header.extend((1..=a.k).map(|c| format!("u{c}")));
    w.write_record(&header).map_err(err)?;
    for (id, row) in dataset.entity_ids().iter().zip(rows.rows.rows()) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| io_err(&a.output, e))?;
    Ok(())
}

fn plotdata(a: &PlotdataArgs) -> CmdResult {
    if a.bins == 0 {
        return Err(usage("--bins must be at least 1"));
    }
    let batches = io::read_transactions_file(&a.input)?;
    let labels = io::read_labels_file(&a.labels)?;
    let by_id: HashMap<&str, usize> = labels.iter().map(|(id, l)| (id.as_str(), *l)).collect();
    let missing: Vec<&str> = batches
        .iter()
        .map(|b| b.entity_id.as_str())
        .filter(|id| !by_id.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(Failure::Core(Error::UnknownEntity(format!(
            "no label for: {}",
            missing.join(", ")
        ))));
    }
    let mut pooled: BTreeMap<usize, (usize, Vec<f64>)> = BTreeMap::new();
    for b in &batches {
        let entry = pooled.entry(by_id[b.entity_id.as_str()]).or_default();
        entry.0 += 1;
        entry.1.extend_from_slice(&b.amounts);
    }
    let lo = pooled.values().flat_map(|(_, v)| v.iter().copied()).fold(f64::INFINITY, f64::min);
    let hi = pooled.values().flat_map(|(_, v)| v.iter().copied()).fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / a.bins as f64 } else { 1.0 };

    fs::create_dir_all(&a.out_dir).map_err(|e| io_err(&a.out_dir, e))?;
    let mut manifest = Vec::new();
    for (label, (entities, amounts)) in &pooled {
        let ecdf = Ecdf::from_amounts(amounts);
        let ecdf_name = format!("cluster_{label}_ecdf.csv");
        let path = a.out_dir.join(&ecdf_name);
        let mut w = create(&path)?;
        writeln!(w, "x,F").map_err(|e| io_err(&path, e))?;
        for (x, f) in ecdf.support().iter().zip(ecdf.cum_prob()) {
            writeln!(w, "{x},{f}").map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;

        let mut counts = vec![0usize; a.bins];
        for &x in amounts {
            let b = (((x - lo) / width) as usize).min(a.bins - 1);
            counts[b] += 1;
        }
        let hist_name = format!("cluster_{label}_hist.csv");
        let path = a.out_dir.join(&hist_name);
        let mut w = create(&path)?;
        writeln!(w, "bin_lo,bin_hi,count,density").map_err(|e| io_err(&path, e))?;
        for (b, &c) in counts.iter().enumerate() {
            let blo = lo + b as f64 * width;
            let density = c as f64 / (amounts.len() as f64 * width);
            writeln!(w, "{blo},{},{c},{density}", blo + width).map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        manifest.push(json!({
            "label": label,
            "entities": entities,
            "transactions": amounts.len(),
            "ecdf": ecdf_name,
            "histogram": hist_name,
        }));
    }
    let path = a.out_dir.join("manifest.json");
    let mut w = create(&path)?;
    let doc = json!({ "clusters": manifest, "bins": a.bins, "range": [lo, hi] });
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| io_err(&path, e))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| io_err(&path, e))?;
    Ok(())
}

fn simulate(a: &SimulateArgs) -> CmdResult {
    let (_, sizes) = cluster_sizes(&a.setting, &a.sizes)?;
    let example = Example::from_number(a.example).map_err(|e| usage(e.to_string()))?;
    let spec = SimSpec::new(example, sizes, a.beta, a.seed).map_err(|e| usage(e.to_string()))?;
    let (batches, truth) = simgen::generate(&spec)?;
    io::write_transactions(create(&a.output)?, &batches)?;
    if let Some(path) = &a.truth {
        let ids: Vec<String> = batches.iter().map(|b| b.entity_id.clone()).collect();
        io::write_labels(create(path)?, &ids, &truth.labels)?;
    }
    Ok(())
}
