use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use moral_core::fairness::DyadicPools;
use moral_core::group::GroupDistribution;
use moral_core::io::write_atomic;
use moral_core::moral::{gap_experiment, preset_target, GROUP_MIX_PRESETS};
use moral_core::oracle::{enumerate_ndkl_extremes_with, MultisetSpec, OracleReport, DEFAULT_GUARD};
use moral_core::pipeline::{
    build_candidates, build_report, emit_report, format_ranking, negatives_seed, prepare,
    read_ranking, rerank, run_pipeline, run_target, DatasetSource, ReportFormat, RunConfig,
    ScorerChoice, TargetSource,
};
use moral_core::scorers::{format_scores, ingest_scores, score_candidates};
use moral_core::split::{read_split, write_split, SplitRatios};
use moral_core::{Error, ErrorKind, GroupId, Result};

#[derive(Parser, Debug)]
#[command(
    name = "moral",
    version,
    about = "Exposure-fair reranking for link prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stratified train/valid/test split of the dataset's edges.
    Split(StageArgs),
    /// Build test candidates and score them on the training graph.
    Score(StageArgs),
    /// Aggregate a score file into one exposure-fair ranking.
    Rerank(StageArgs),
    /// Evaluate a ranking file next to the naive merge of the same scores.
    Eval(StageArgs),
    /// NDKL of greedy and worst rankings that share the optimal parity mix.
    Gap(GapArgs),
    /// Exact NDKL extremes over all orderings of a small group multiset.
    Oracle(OracleArgs),
    /// Every stage, for each configured seed, with JSON and CSV reports.
    Pipeline(StageArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StageArgs {
    #[command(flatten)]
    common: Common,
    /// Edge list; use together with --attributes instead of a synthetic graph.
    #[arg(long, requires = "attributes")]
    edges: Option<PathBuf>,
    #[arg(long, requires = "edges")]
    attributes: Option<PathBuf>,
    /// Split ratios as `train,valid,test`.
    #[arg(long, value_parser = parse_ratios)]
    ratios: Option<SplitRatios>,
    #[arg(long, value_enum)]
    scorer: Option<ScorerFlag>,
    /// Embedding file for `--scorer embedding`.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Score every candidate on the full training graph.
    #[arg(long)]
    coupled: bool,
    /// `empirical` or `0-0=0.6,0-1=0.2,1-1=0.2`.
    #[arg(long, value_parser = parse_target)]
    target: Option<TargetSource>,
    /// Metric cutoffs, comma separated; an empty string disables them.
    #[arg(long, value_parser = parse_usize_list)]
    k: Option<Counts>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    smoothing: bool,
    #[arg(long)]
    negative_ratio: Option<f64>,
    /// Output ranking length.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Split directory; defaults to `<output-dir>/split`.
    #[arg(long)]
    split_dir: Option<PathBuf>,
    /// Score file; defaults to `<output-dir>/scores.tsv`.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Ranking file; defaults to `<output-dir>/ranking_moral.tsv`.
    #[arg(long)]
    ranking: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ScorerFlag {
    CommonNeighbors,
    AdamicAdar,
    Embedding,
}

#[derive(Args, Debug)]
struct GapArgs {
    #[command(flatten)]
    common: Common,
    /// Named group mix; see --list-presets.
    #[arg(long, conflicts_with = "target")]
    preset: Option<String>,
    /// Explicit target `0-0=0.61,0-1=0.2,1-1=0.19`.
    #[arg(long, value_parser = parse_group_values)]
    target: Option<BTreeMap<GroupId, f64>>,
    /// Candidate pool size split between dyadic classes by target mass.
    #[arg(long, default_value_t = 10_000)]
    pool_total: usize,
    #[arg(long, value_parser = parse_usize_list, default_value = "10,50,100,500,1000")]
    k_grid: Counts,
    #[arg(long)]
    list_presets: bool,
    /// Write the CSV here instead of `<output-dir>/gap_<name>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    common: Common,
    /// Group counts `0-0=2,0-1=2`.
    #[arg(long, value_parser = parse_group_counts)]
    counts: BTreeMap<GroupId, usize>,
    #[arg(long, value_parser = parse_group_values)]
    target: BTreeMap<GroupId, f64>,
    /// Raise the enumeration guard.
    #[arg(long, default_value_t = DEFAULT_GUARD)]
    limit: usize,
    /// Also write the JSON report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_pairs<T>(
    s: &str,
    value: impl Fn(&str) -> Option<T>,
) -> std::result::Result<BTreeMap<GroupId, T>, String> {
    let mut out = BTreeMap::new();
    for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let (g, v) = item
            .split_once('=')
            .ok_or_else(|| format!("`{item}` is not group=value"))?;
        let g: GroupId = g.parse().map_err(|e: Error| e.to_string())?;
        let v = value(v.trim()).ok_or_else(|| format!("bad value in `{item}`"))?;
        if out.insert(g, v).is_some() {
            return Err(format!("group {g} given twice"));
        }
    }
    Ok(out)
}

fn parse_group_values(s: &str) -> std::result::Result<BTreeMap<GroupId, f64>, String> {
    parse_pairs(s, |v| v.parse().ok())
}

fn parse_group_counts(s: &str) -> std::result::Result<BTreeMap<GroupId, usize>, String> {
    parse_pairs(s, |v| v.parse().ok())
}

fn parse_target(s: &str) -> std::result::Result<TargetSource, String> {
    if s.trim() == "empirical" {
        Ok(TargetSource::Empirical)
    } else {
        parse_group_values(s).map(TargetSource::Explicit)
    }
}

/// Comma separated counts; kept in a newtype so clap reads one value.
#[derive(Debug, Clone)]
struct Counts(Vec<usize>);

fn parse_usize_list(s: &str) -> std::result::Result<Counts, String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse().map_err(|_| format!("`{x}` is not a count")))
        .collect::<std::result::Result<_, _>>()
        .map(Counts)
}

fn parse_ratios(s: &str) -> std::result::Result<SplitRatios, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    match parts.as_slice() {
        [t, v, e] => SplitRatios::new(*t, *v, *e).map_err(|e| e.to_string()),
        _ => Err("expected train,valid,test".into()),
    }
}

fn base_config(common: &Common) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    // flag, then environment, then config file
    config.output_dir = match &common.output_dir {
        Some(dir) => dir.clone(),
        None => config.resolved_output_dir(),
    };
    Ok(config)
}

impl StageArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut config = base_config(&self.common)?;
        if let (Some(edges), Some(attributes)) = (&self.edges, &self.attributes) {
            config.dataset = DatasetSource::Files {
                edges: edges.clone(),
                attributes: attributes.clone(),
            };
        }
        if let Some(r) = self.ratios {
            config.split = r;
        }
        if let Some(s) = self.scorer {
            config.scorer = match s {
                ScorerFlag::CommonNeighbors => ScorerChoice::CommonNeighbors,
                ScorerFlag::AdamicAdar => ScorerChoice::AdamicAdar,
                ScorerFlag::Embedding => ScorerChoice::Embedding {
                    path: self.embeddings.clone().ok_or_else(|| {
                        Error::Config("--scorer embedding needs --embeddings".into())
                    })?,
                },
            };
        }
        if self.coupled {
            config.decoupled = false;
        }
        if let Some(t) = &self.target {
            config.target = t.clone();
        }
        if let Some(k) = &self.k {
            config.k = k.0.clone();
        }
        if let Some(l) = self.lambda {
            config.lambda = l;
        }
        if self.smoothing {
            config.smoothing = true;
        }
        if let Some(r) = self.negative_ratio {
            config.negative_ratio = r;
        }
        if self.n.is_some() {
            config.n = self.n;
        }
        if let Some(r) = self.repeats {
            config.repeats = r;
        }
        config.validate()?;
        Ok(config)
    }

    fn path(&self, given: &Option<PathBuf>, config: &RunConfig, default: &str) -> PathBuf {
        given
            .clone()
            .unwrap_or_else(|| config.output_dir.join(default))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn split_stage(args: &StageArgs) -> Result<()> {
    let config = args.config()?;
    let (graph, split, _) = prepare(&config, config.seed)?;
    let dir = args.path(&args.split_dir, &config, "split");
    write_split(&dir, &graph, &split, config.split)?;
    println!(
        "split {} edges into {}/{}/{} -> {}",
        graph.edge_count(),
        split.train.len(),
        split.valid.len(),
        split.test.len(),
        dir.display()
    );
    Ok(())
}

fn score_stage(args: &StageArgs) -> Result<()> {
    let config = args.config()?;
    let (graph, _, _) = prepare(&config, config.seed)?;
    let split = read_split(&args.path(&args.split_dir, &config, "split"))?;
    let train = graph.with_edges(split.train.iter().copied())?;
    let (pairs, positives) = build_candidates(
        &graph,
        &split,
        config.negative_ratio,
        negatives_seed(config.seed),
    )
    .map_err(|e| e.in_stage("candidates"))?;
    let scorer = config.scorer.build()?;
    let set = score_candidates(&train, &pairs, &positives, &scorer, config.decoupled)
        .map_err(|e| e.in_stage("score"))?;
    let out = args.path(&args.scores, &config, "scores.tsv");
    create_dir(out.parent().unwrap_or(Path::new(".")))?;
    write_atomic(&out, format_scores(&set).as_bytes())?;
    println!(
        "scored {} candidates ({} positive) -> {}",
        set.total_len(),
        set.positives(),
        out.display()
    );
    Ok(())
}

fn load_scored(
    args: &StageArgs,
    config: &RunConfig,
) -> Result<(moral_core::GroupedCandidateSet, GroupDistribution<f64>)> {
    let (graph, _, _) = prepare(config, config.seed)?;
    let split = read_split(&args.path(&args.split_dir, config, "split"))?;
    let set = ingest_scores(
        &args.path(&args.scores, config, "scores.tsv"),
        &graph,
        &split.test,
    )?;
    let target = run_target(config, &graph, &split, &set)?;
    Ok((set, target))
}

fn rerank_stage(args: &StageArgs) -> Result<()> {
    let config = args.config()?;
    let (set, target) = load_scored(args, &config)?;
    let aggregation = rerank(&config, &set, &target).map_err(|e| e.in_stage("rerank"))?;
    if aggregation.exhausted {
        eprintln!(
            "warning: candidates ran out after {} entries",
            aggregation.ranking.len()
        );
    }
    let out = args.path(&args.ranking, &config, "ranking_moral.tsv");
    write_atomic(&out, format_ranking(&aggregation.ranking).as_bytes())?;
    let trace = out.with_extension("trace.json");
    write_atomic(
        &trace,
        serde_json::to_string_pretty(&aggregation.trace)?.as_bytes(),
    )?;
    println!(
        "ranked {} candidates -> {}",
        aggregation.ranking.len(),
        out.display()
    );
    Ok(())
}

fn eval_stage(args: &StageArgs) -> Result<()> {
    let config = args.config()?;
    let started = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    let (set, target) = load_scored(args, &config)?;
    let ranking = read_ranking(&args.path(&args.ranking, &config, "ranking_moral.tsv"))?;
    let (report, naive) = build_report(&config, &set, &target, &ranking, config.seed, started)
        .map_err(|e| e.in_stage("eval"))?;
    let run = moral_core::pipeline::SeedRun {
        report,
        moral: ranking,
        naive,
    };
    emit_report(
        &config.output_dir,
        std::slice::from_ref(&run),
        ReportFormat::Json,
    )?;
    emit_report(
        &config.output_dir,
        std::slice::from_ref(&run),
        ReportFormat::Csv,
    )?;
    for m in &run.report.methods {
        for k in &m.at_k {
            println!(
                "{}\tndkl@{}={:.4}\tprec@{}={:.4}",
                m.method, k.k, k.ndkl, k.k, k.prec
            );
        }
    }
    Ok(())
}

fn pipeline_stage(args: &StageArgs) -> Result<()> {
    let config = args.config()?;
    let runs = run_pipeline(&config)?;
    emit_report(&config.output_dir, &runs, ReportFormat::Json)?;
    emit_report(&config.output_dir, &runs, ReportFormat::Csv)?;
    for run in &runs {
        for m in &run.report.methods {
            if let Some(k) = m.at_k.last() {
                println!(
                    "seed {}\t{}\tndkl@{}={:.4}\tprec@{}={:.4}",
                    run.report.provenance.seed, m.method, k.k, k.ndkl, k.k, k.prec
                );
            }
        }
    }
    println!("reports -> {}", config.output_dir.display());
    Ok(())
}

fn gap_stage(args: &GapArgs) -> Result<()> {
    if args.list_presets {
        for (name, inter, a, b) in GROUP_MIX_PRESETS {
            println!("{name}\tinter={inter}%\t0-0={a}%\t1-1={b}%");
        }
        return Ok(());
    }
    let config = base_config(&args.common)?;
    let (name, target) = match (&args.preset, &args.target) {
        (Some(p), _) => (p.clone(), preset_target::<f64>(p)?),
        (None, Some(t)) => ("custom".to_string(), GroupDistribution::new(t.clone())?),
        (None, None) => return Err(Error::Config("gap needs --preset or --target".into())),
    };
    let pools = DyadicPools::from_target(&target, args.pool_total);
    let curve = gap_experiment(&target, pools, &args.k_grid.0)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| config.output_dir.join(format!("gap_{name}.csv")));
    create_dir(out.parent().unwrap_or(Path::new(".")))?;
    write_atomic(&out, curve.to_csv().as_bytes())?;
    print!("{}", curve.to_csv());
    Ok(())
}

fn oracle_stage(args: &OracleArgs) -> Result<()> {
    let target = GroupDistribution::new(args.target.clone())?;
    let spec = MultisetSpec::new(args.counts.clone());
    let result = enumerate_ndkl_extremes_with(&spec, &target, args.limit, |_, _| {})?;
    let json = serde_json::to_string_pretty(&OracleReport::new(&result, &target)?)?;
    if let Some(out) = &args.out {
        write_atomic(out, json.as_bytes())?;
    }
    println!("{json}");
    Ok(())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Infeasible => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Split(a) => split_stage(a),
        Command::Score(a) => score_stage(a),
        Command::Rerank(a) => rerank_stage(a),
        Command::Eval(a) => eval_stage(a),
        Command::Gap(a) => gap_stage(a),
        Command::Oracle(a) => oracle_stage(a),
        Command::Pipeline(a) => pipeline_stage(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
