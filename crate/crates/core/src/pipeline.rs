//! End-to-end runs: load or generate a graph, split it, build and score
//! candidates, aggregate, and evaluate against a naive merge.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fairness::{
    delta_dp_score, delta_dp_selection, delta_max, ndkl, ndkl_upper_bound, scores_by_class,
    scores_by_group, top_k_proportions, DyadicPools,
};
use crate::graph::{load_graph, SensitiveGraph};
use crate::group::{GroupDistribution, GroupId, NodeId, Pair, SMOOTHING_EPS};
use crate::io::write_atomic;
use crate::moral::{moral_aggregate, moral_aggregate_weighted, Aggregation};
use crate::ranking::{GroupedCandidateSet, Ranking, ScoredCandidate};
use crate::scorers::{score_candidates, Embeddings, Scorer};
use crate::split::{sample_negatives, stratified_split, SplitRatios, SplitResult};
use crate::synthetic::{generate, SyntheticConfig};
use crate::utility::{average_precision, hits_at_k, ndcg_at_k, precision_at_k, RelevanceVector};

/// Overrides `output_dir` from the environment.
pub const OUTPUT_DIR_ENV: &str = "MORAL_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Files { edges: PathBuf, attributes: PathBuf },
    Synthetic(SyntheticConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerChoice {
    CommonNeighbors,
    AdamicAdar,
    Embedding { path: PathBuf },
}

impl ScorerChoice {
    pub fn build(&self) -> Result<Scorer<f64>> {
        Ok(match self {
            ScorerChoice::CommonNeighbors => Scorer::CommonNeighbors,
            ScorerChoice::AdamicAdar => Scorer::AdamicAdar,
            ScorerChoice::Embedding { path } => Scorer::Embedding(Embeddings::load(path)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSource {
    /// Group shares of the training edges.
    Empirical,
    Explicit(BTreeMap<GroupId, f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub seed: u64,
    /// Number of seeds `seed, seed + 1, ...` run by the pipeline.
    pub repeats: usize,
    pub split: SplitRatios,
    pub scorer: ScorerChoice,
    pub decoupled: bool,
    pub target: TargetSource,
    /// Metric cutoffs, strictly ascending.
    pub k: Vec<usize>,
    pub lambda: f64,
    pub smoothing: bool,
    /// Sampled non-edges per test edge, per group.
    pub negative_ratio: f64,
    /// Output length; defaults to the largest cutoff.
    pub n: Option<usize>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetSource::Synthetic(SyntheticConfig::default()),
            seed: 0,
            repeats: 3,
            split: SplitRatios::default(),
            scorer: ScorerChoice::AdamicAdar,
            decoupled: true,
            target: TargetSource::Empirical,
            k: vec![10, 100, 1000],
            lambda: 1.0,
            smoothing: false,
            negative_ratio: 1.0,
            n: None,
            output_dir: PathBuf::from("moral-out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::LambdaOutOfRange(self.lambda));
        }
        if self.k.contains(&0) || self.k.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "k values must be positive and strictly ascending: {:?}",
                self.k
            )));
        }
        if !(self.negative_ratio.is_finite() && self.negative_ratio >= 0.0) {
            return Err(Error::Config(format!(
                "negative ratio {} is not a non-negative number",
                self.negative_ratio
            )));
        }
        if self.repeats == 0 || self.n == Some(0) {
            return Err(Error::Config("repeats and n must be at least 1".into()));
        }
        if let TargetSource::Explicit(map) = &self.target {
            GroupDistribution::new(map.clone())?;
        }
        if let DatasetSource::Synthetic(s) = &self.dataset {
            s.validate()?;
        }
        Ok(())
    }

    /// `output_dir`, unless the environment overrides it.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut copy = self.clone();
        copy.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&copy).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        let seed = self.seed;
        (0..self.repeats as u64).map(move |i| seed.wrapping_add(i))
    }

    /// Requested output length given `available` candidates.
    pub fn output_len(&self, available: usize) -> usize {
        self.n
            .or_else(|| self.k.last().copied())
            .unwrap_or(available)
    }
}

/// Seed for negative sampling, derived from the run seed.
pub fn negatives_seed(seed: u64) -> u64 {
    seed ^ 0x6a09_e667_f3bc_c908
}

pub fn load_dataset(source: &DatasetSource, seed: u64) -> Result<SensitiveGraph> {
    match source {
        DatasetSource::Files { edges, attributes } => load_graph(edges, attributes),
        DatasetSource::Synthetic(config) => generate(config, seed),
    }
}

/// Test edges plus `ratio` sampled non-edges of the full graph per test edge,
/// group by group. Returns the candidate pairs and the positive subset.
pub fn build_candidates(
    graph: &SensitiveGraph,
    split: &SplitResult,
    ratio: f64,
    seed: u64,
) -> Result<(Vec<Pair>, BTreeSet<Pair>)> {
    let per_group: BTreeMap<GroupId, usize> = graph
        .group_counts(split.test.iter())?
        .into_iter()
        .map(|(g, c)| (g, (c as f64 * ratio).round() as usize))
        .collect();
    let negatives = sample_negatives(graph, &per_group, seed)?;
    let positives = split.test.clone();
    let pairs = positives
        .iter()
        .chain(negatives.iter())
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok((pairs, positives))
}

/// Target distribution for aggregation. With `smoothing`, groups in `extra`
/// lacking mass receive a small one instead of failing.
pub fn resolve_target(
    source: &TargetSource,
    graph: &SensitiveGraph,
    train: &BTreeSet<Pair>,
    extra: impl IntoIterator<Item = GroupId>,
    smoothing: bool,
) -> Result<GroupDistribution<f64>> {
    let target = match source {
        TargetSource::Empirical => graph.empirical_distribution(train.iter())?,
        TargetSource::Explicit(map) => GroupDistribution::new(map.clone())?,
    };
    Ok(if smoothing {
        target.smoothed(SMOOTHING_EPS, extra)
    } else {
        target
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMetrics {
    pub k: usize,
    pub ndkl: f64,
    pub prec: f64,
    pub hits: f64,
    pub ndcg: f64,
    pub proportions: BTreeMap<GroupId, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub at_k: Vec<KMetrics>,
    pub ap: f64,
    pub delta_dp_selection: f64,
    /// Absent when the ranking has no items of one dyadic class.
    pub delta_dp_score: Option<f64>,
    /// Absent when the ranking covers fewer than two groups.
    pub delta_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub provenance: Provenance,
    pub target: BTreeMap<GroupId, f64>,
    pub bound: f64,
    pub n: usize,
    pub candidates: BTreeMap<GroupId, usize>,
    pub positives: usize,
    pub methods: Vec<MethodReport>,
}

impl EvalReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }

    /// Copy with timestamps zeroed, for reproducibility comparisons.
    pub fn without_timestamps(&self) -> Self {
        let mut copy = self.clone();
        copy.provenance.started_unix_ms = 0;
        copy.provenance.finished_unix_ms = 0;
        copy
    }
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// All metrics for one ranking of `candidates`.
pub fn evaluate_ranking(
    method: &str,
    ranking: &Ranking<f64>,
    candidates: &GroupedCandidateSet<f64>,
    target: &GroupDistribution<f64>,
    ks: &[usize],
) -> Result<MethodReport> {
    let total_positives = candidates.positives();
    let rel = RelevanceVector::from_ranking(ranking, total_positives)?;
    let mut at_k = Vec::with_capacity(ks.len());
    for &k in ks {
        if k > ranking.len() {
            return Err(Error::KOutOfRange {
                k,
                len: ranking.len(),
            });
        }
        at_k.push(KMetrics {
            k,
            ndkl: ndkl(ranking, target, Some(k))?,
            prec: precision_at_k(&rel, k)?,
            hits: hits_at_k(&rel, k)?,
            ndcg: ndcg_at_k(&rel, k)?,
            proportions: top_k_proportions(ranking, k)?.as_map().clone(),
        });
    }
    let n = ranking.len();
    let pools = DyadicPools::from_sizes(&candidates.sizes());
    let (intra, inter) = scores_by_class(ranking, n);
    Ok(MethodReport {
        method: method.to_string(),
        at_k,
        ap: average_precision(&rel)?,
        delta_dp_selection: delta_dp_selection(ranking, n, pools)?,
        delta_dp_score: delta_dp_score(&intra, &inter).ok(),
        delta_max: delta_max(&scores_by_group(ranking, n)).ok(),
    })
}

/// Aggregated and naive rankings plus their report, for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub report: EvalReport,
    pub moral: Ranking<f64>,
    pub naive: Ranking<f64>,
}

/// Aggregates `candidates` to the configured output length.
pub fn rerank(
    config: &RunConfig,
    candidates: &GroupedCandidateSet<f64>,
    target: &GroupDistribution<f64>,
) -> Result<Aggregation<f64>> {
    let n = config.output_len(candidates.total_len());
    if config.lambda == 1.0 {
        moral_aggregate(candidates, target, n)
    } else {
        moral_aggregate_weighted(candidates, target, n, config.lambda)
    }
}

/// Report for an aggregated ranking, with the naive merge of the same
/// candidates alongside it.
pub fn build_report(
    config: &RunConfig,
    candidates: &GroupedCandidateSet<f64>,
    target: &GroupDistribution<f64>,
    moral: &Ranking<f64>,
    seed: u64,
    started: u64,
) -> Result<(EvalReport, Ranking<f64>)> {
    let naive = candidates.naive_merge(moral.len());
    let methods = vec![
        evaluate_ranking("moral", moral, candidates, target, &config.k)?,
        evaluate_ranking("naive", &naive, candidates, target, &config.k)?,
    ];
    let report = EvalReport {
        provenance: Provenance {
            config_hash: config.hash(),
            seed,
            started_unix_ms: started,
            finished_unix_ms: unix_ms(),
        },
        target: target.as_map().clone(),
        bound: ndkl_upper_bound(&target.support())?,
        n: moral.len(),
        candidates: candidates.sizes(),
        positives: candidates.positives(),
        methods,
    };
    Ok((report, naive))
}

/// Graph, split and training graph for one seed.
pub fn prepare(
    config: &RunConfig,
    seed: u64,
) -> Result<(SensitiveGraph, SplitResult, SensitiveGraph)> {
    let graph = load_dataset(&config.dataset, seed).map_err(|e| e.in_stage("load"))?;
    let split = stratified_split(&graph, config.split, seed).map_err(|e| e.in_stage("split"))?;
    let train = graph
        .with_edges(split.train.iter().copied())
        .map_err(|e| e.in_stage("split"))?;
    Ok((graph, split, train))
}

/// Target for a run, with smoothing over the groups that have candidates.
pub fn run_target(
    config: &RunConfig,
    graph: &SensitiveGraph,
    split: &SplitResult,
    candidates: &GroupedCandidateSet<f64>,
) -> Result<GroupDistribution<f64>> {
    let present = candidates
        .sizes()
        .into_iter()
        .filter(|&(_, c)| c > 0)
        .map(|(g, _)| g);
    resolve_target(
        &config.target,
        graph,
        &split.train,
        present,
        config.smoothing,
    )
    .map_err(|e| e.in_stage("target"))
}

/// One full run at `seed`.
pub fn run_seed(config: &RunConfig, seed: u64) -> Result<SeedRun> {
    let started = unix_ms();
    let (graph, split, train) = prepare(config, seed)?;
    let (pairs, positives) =
        build_candidates(&graph, &split, config.negative_ratio, negatives_seed(seed))
            .map_err(|e| e.in_stage("candidates"))?;
    let scorer = config.scorer.build().map_err(|e| e.in_stage("score"))?;
    let candidates = score_candidates(&train, &pairs, &positives, &scorer, config.decoupled)
        .map_err(|e| e.in_stage("score"))?;
    let target = run_target(config, &graph, &split, &candidates)?;
    let moral = rerank(config, &candidates, &target)
        .map_err(|e| e.in_stage("rerank"))?
        .ranking;
    let (report, naive) = build_report(config, &candidates, &target, &moral, seed, started)
        .map_err(|e| e.in_stage("eval"))?;
    Ok(SeedRun {
        report,
        moral,
        naive,
    })
}

/// Runs every seed of `config`.
pub fn run_pipeline(config: &RunConfig) -> Result<Vec<SeedRun>> {
    config.validate()?;
    config.seeds().map(|s| run_seed(config, s)).collect()
}

/// `rank<TAB>u<TAB>v<TAB>group<TAB>score<TAB>relevance`, ranks from 1.
pub fn format_ranking(ranking: &Ranking<f64>) -> String {
    let mut out = String::new();
    for (i, c) in ranking.entries().iter().enumerate() {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            i + 1,
            c.u,
            c.v,
            c.group,
            c.score,
            u8::from(c.relevant)
        );
    }
    out
}

pub fn parse_ranking(text: &str, origin: &str) -> Result<Ranking<f64>> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = |what: &str| Error::malformed(origin, line_no, what.to_string());
        if fields.len() != 6 {
            return Err(bad("expected 6 tab-separated fields"));
        }
        if fields[0].parse::<usize>().ok() != Some(entries.len() + 1) {
            return Err(bad("ranks must run 1, 2, 3, ..."));
        }
        let u: NodeId = fields[1].parse().map_err(|_| bad("bad node id"))?;
        let v: NodeId = fields[2].parse().map_err(|_| bad("bad node id"))?;
        let group: GroupId = fields[3].parse().map_err(|_| bad("bad group id"))?;
        let score: f64 = fields[4]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| bad("bad score"))?;
        let relevant = match fields[5] {
            "1" => true,
            "0" => false,
            _ => return Err(bad("relevance must be 0 or 1")),
        };
        let pair = Pair::new(u, v).ok_or_else(|| bad("self-loop"))?;
        entries.push(ScoredCandidate::new(pair, score, group, relevant));
    }
    Ranking::new(entries)
}

pub fn read_ranking(path: &Path) -> Result<Ranking<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ranking(&text, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Per-seed `report.json` and ranking files.
    Json,
    /// `summary.csv` (mean and sample std over seeds) and `proportions.csv`.
    Csv,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn metric_rows(m: &MethodReport) -> Vec<(String, f64)> {
    let mut rows = Vec::new();
    for k in &m.at_k {
        rows.push((format!("ndkl@{}", k.k), k.ndkl));
        rows.push((format!("prec@{}", k.k), k.prec));
        rows.push((format!("hits@{}", k.k), k.hits));
        rows.push((format!("ndcg@{}", k.k), k.ndcg));
    }
    rows.push(("ap".into(), m.ap));
    rows.push(("delta_dp_selection".into(), m.delta_dp_selection));
    rows.extend(m.delta_dp_score.map(|v| ("delta_dp_score".to_string(), v)));
    rows.extend(m.delta_max.map(|v| ("delta_max".to_string(), v)));
    rows
}

/// `method,metric,mean,std,runs`, one row per method and metric.
pub fn summary_csv(reports: &[&EvalReport]) -> String {
    let mut collected: Vec<((String, String), Vec<f64>)> = Vec::new();
    for r in reports {
        for m in &r.methods {
            for (metric, value) in metric_rows(m) {
                let key = (m.method.clone(), metric);
                match collected.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, values)) => values.push(value),
                    None => collected.push((key, vec![value])),
                }
            }
        }
    }
    let mut out = String::from("method,metric,mean,std,runs\n");
    for ((method, metric), values) in collected {
        let (mean, std) = mean_std(&values);
        let _ = writeln!(out, "{method},{metric},{mean},{std},{}", values.len());
    }
    out
}

/// `seed,method,k,group,proportion`.
pub fn proportions_csv(reports: &[&EvalReport]) -> String {
    let mut out = String::from("seed,method,k,group,proportion\n");
    for r in reports {
        for m in &r.methods {
            for k in &m.at_k {
                for (g, p) in &k.proportions {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{}",
                        r.provenance.seed, m.method, k.k, g, p
                    );
                }
            }
        }
    }
    out
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn seed_dir(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed-{seed}"))
}

pub fn emit_report(dir: &Path, runs: &[SeedRun], format: ReportFormat) -> Result<()> {
    create_dir(dir)?;
    match format {
        ReportFormat::Json => {
            for run in runs {
                let sub = seed_dir(dir, run.report.provenance.seed);
                create_dir(&sub)?;
                write_atomic(
                    &sub.join("report.json"),
                    serde_json::to_string_pretty(&run.report)?.as_bytes(),
                )?;
                write_atomic(
                    &sub.join("ranking_moral.tsv"),
                    format_ranking(&run.moral).as_bytes(),
                )?;
                write_atomic(
                    &sub.join("ranking_naive.tsv"),
                    format_ranking(&run.naive).as_bytes(),
                )?;
            }
        }
        ReportFormat::Csv => {
            let reports: Vec<&EvalReport> = runs.iter().map(|r| &r.report).collect();
            write_atomic(&dir.join("summary.csv"), summary_csv(&reports).as_bytes())?;
            write_atomic(
                &dir.join("proportions.csv"),
                proportions_csv(&reports).as_bytes(),
            )?;
        }
    }
    Ok(())
}
