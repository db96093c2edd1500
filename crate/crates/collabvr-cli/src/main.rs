//! Command-line front end: generate benchmark task sets, run a policy over
//! them in parallel, aggregate reports, score annotation agreement, and
//! replay traces.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use collabvr::backends::http::{
    HttpCritic, HttpGenerator, HttpPlanner, HttpRouter, HttpSelector, HttpVerifier,
};
use collabvr::backends::{BackendSet, Critic, Generator, Planner, Router, Selector, Verifier};
use collabvr::baselines::{run_pass_k, run_single, run_tpo};
use collabvr::engine::run_collabvr;
use collabvr::metrics::{
    agreement_d1, agreement_d2, agreement_d3, aggregate_cost, pipeline_stats, AnnotationSet,
    Axis, PricingModel,
};
use collabvr::seeding::derive_seed;
use collabvr::simworld::{
    generate_task_set, read_task_set, rule_score, task_from_record, write_task_set, Category,
    FaultConfig, NMix, SimBackends, TaskRecord, TaskSetHeader,
};
use collabvr::trace::{RunResult, RunTrace};

use config::{Baseline, RunConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_BACKEND: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

#[derive(Parser)]
#[command(name = "collabvr", about = "Closed-loop video-reasoning orchestration at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark task-set file with a declared step-count mix.
    Genset(GensetArgs),
    /// Run a policy over a task set, writing traces and per-task results.
    Run(RunArgs),
    /// Aggregate cost, pipeline, and score reports over a run directory.
    Report(ReportArgs),
    /// Agreement statistics over an annotation file (d1/d2/d3 axes).
    Agree(AgreeArgs),
    /// Reconstruct a run result from a persisted trace.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct GensetArgs {
    #[arg(long, default_value_t = 100)]
    count: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Step-count mix: "multistep", "singlestep", or "n1".
    #[arg(long, default_value = "multistep")]
    mix: String,
    #[arg(long = "faults.p-wrong", default_value_t = 0.0)]
    p_wrong: f64,
    #[arg(long = "faults.p-early", default_value_t = 0.0)]
    p_early: f64,
    #[arg(long = "faults.p-target", default_value_t = 0.0)]
    p_target: f64,
    #[arg(long = "faults.seed", default_value_t = 0)]
    fault_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task_set: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long = "n-max")]
    n_max: Option<u32>,
    #[arg(long = "m-budget")]
    m_budget: Option<u32>,
    #[arg(long = "faults.p-wrong")]
    p_wrong: Option<f64>,
    #[arg(long = "faults.p-early")]
    p_early: Option<f64>,
    #[arg(long = "faults.p-target")]
    p_target: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "pricing.vgm-per-s")]
    vgm_per_s: Option<f64>,
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "run-dir")]
    run_dir: PathBuf,
    /// Aggregate even when trace config hashes disagree.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AgreeArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Genset(args) => cmd_genset(args),
        Command::Run(args) => cmd_run(args),
        Command::Report(args) => cmd_report(args),
        Command::Agree(args) => cmd_agree(args),
        Command::Replay(args) => cmd_replay(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn cmd_genset(args: GensetArgs) -> Result<u8> {
    let mix = match args.mix.as_str() {
        "multistep" => NMix::multi_step_heavy(),
        "singlestep" => NMix::single_step_heavy(),
        "n1" => NMix { n1: 1.0, n2: 0.0, n3: 0.0 },
        other => bail!("unknown mix {other:?}; use multistep, singlestep, or n1"),
    };
    let faults = FaultConfig {
        p_wrong_direction: args.p_wrong,
        p_early_stop: args.p_early,
        p_wrong_target: args.p_target,
        rng_seed: args.fault_seed,
    };
    let (header, records) = generate_task_set(args.seed, args.count, mix, faults)
        .map_err(|e| anyhow::anyhow!(e))?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let file = std::fs::File::create(&args.out)
        .with_context(|| format!("cannot create {}", args.out.display()))?;
    write_task_set(std::io::BufWriter::new(file), &header, &records)?;
    println!("wrote {} tasks to {}", records.len(), args.out.display());
    Ok(0)
}

/// One line of results.jsonl.
#[derive(Debug, Serialize, Deserialize)]
struct ResultRecord {
    task_id: String,
    baseline: Baseline,
    category: Category,
    required_steps: u32,
    score: Option<u8>,
    steps_taken: u32,
    regenerations: u32,
    clips_generated: u32,
    vlm_calls: u32,
    total_vgm_seconds: f64,
    error: Option<String>,
    trace_file: String,
}

#[derive(Serialize, Deserialize)]
struct RunMeta {
    config_hash: String,
    config: RunConfig,
    task_set: TaskSetHeader,
}

/// Remote adapters are built once and shared; grid-world backends are
/// per-task.
#[derive(Default)]
struct HttpAdapters {
    planner: Option<HttpPlanner>,
    verifier: Option<HttpVerifier>,
    generator: Option<HttpGenerator>,
    router: Option<HttpRouter>,
    selector: Option<HttpSelector>,
    critic: Option<HttpCritic>,
}

impl HttpAdapters {
    fn build(cfg: &RunConfig) -> Self {
        let b = &cfg.backends;
        Self {
            planner: b.planner.endpoint().cloned().map(HttpPlanner::new),
            verifier: b.verifier.endpoint().cloned().map(HttpVerifier::new),
            generator: b.generator.endpoint().cloned().map(HttpGenerator::new),
            router: b.router.endpoint().cloned().map(HttpRouter::new),
            selector: b.selector.endpoint().cloned().map(HttpSelector::new),
            critic: b.critic.endpoint().cloned().map(HttpCritic::new),
        }
    }
}

fn apply_overrides(cfg: &mut RunConfig, args: &RunArgs) {
    if let Some(p) = &args.task_set {
        cfg.task_set_path = p.clone();
    }
    if let Some(p) = &args.out_dir {
        cfg.out_dir = p.clone();
    }
    if let Some(b) = args.baseline {
        cfg.baseline = b;
    }
    if let Some(k) = args.k {
        cfg.pass_k = collabvr::baselines::PassKConfig::new(k);
    }
    if let Some(n) = args.n_max {
        cfg.engine.n_max = n;
    }
    if let Some(m) = args.m_budget {
        cfg.engine.m_budget = m;
    }
    if args.p_wrong.is_some() || args.p_early.is_some() || args.p_target.is_some() {
        let mut faults = cfg.faults.clone().unwrap_or_default();
        if let Some(p) = args.p_wrong {
            faults.p_wrong_direction = p;
        }
        if let Some(p) = args.p_early {
            faults.p_early_stop = p;
        }
        if let Some(p) = args.p_target {
            faults.p_wrong_target = p;
        }
        cfg.faults = Some(faults);
    }
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    if let Some(d) = args.vgm_per_s {
        cfg.pricing.vgm_dollars_per_second = d;
    }
    if let Some(p) = args.parallelism {
        cfg.parallelism = p;
    }
}

fn cmd_run(args: RunArgs) -> Result<u8> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    apply_overrides(&mut cfg, &args);
    cfg.validate()?;
    let config_hash = cfg.config_hash();

    let file = std::fs::File::open(&cfg.task_set_path)
        .with_context(|| format!("cannot open {}", cfg.task_set_path.display()))?;
    let (header, records) =
        read_task_set(std::io::BufReader::new(file)).map_err(|e| anyhow::anyhow!(e))?;
    let faults = cfg.faults.clone().unwrap_or_else(|| header.faults.clone());

    let traces_dir = cfg.out_dir.join("traces");
    std::fs::create_dir_all(&traces_dir)?;
    let http = HttpAdapters::build(&cfg);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .context("cannot build worker pool")?;
    let mut results: Vec<ResultRecord> = pool.install(|| {
        records
            .par_iter()
            .enumerate()
            .map(|(idx, rec)| run_one(rec, idx, &cfg, &faults, &http, &config_hash, &traces_dir))
            .collect()
    });
    results.sort_by(|a, b| a.task_id.cmp(&b.task_id));

    let results_path = cfg.out_dir.join("results.jsonl");
    let mut out = std::io::BufWriter::new(std::fs::File::create(&results_path)?);
    for r in &results {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;

    let meta = RunMeta { config_hash, config: cfg.clone(), task_set: header };
    std::fs::write(cfg.out_dir.join("run_meta.json"), serde_json::to_string_pretty(&meta)?)?;

    let failed = results.iter().filter(|r| r.error.is_some()).count();
    let completed = results.len() - failed;
    println!(
        "completed {completed}/{} tasks (results in {})",
        results.len(),
        results_path.display()
    );
    if failed == 0 {
        Ok(0)
    } else if completed == 0 {
        Ok(EXIT_BACKEND)
    } else {
        Ok(EXIT_PARTIAL)
    }
}

fn run_one(
    rec: &TaskRecord,
    index: usize,
    cfg: &RunConfig,
    faults: &FaultConfig,
    http: &HttpAdapters,
    config_hash: &str,
    traces_dir: &Path,
) -> ResultRecord {
    let mut task = task_from_record(rec, cfg.engine.n_max, cfg.engine.m_budget);
    if let Some(seed) = cfg.seed {
        task.rng_seed = derive_seed(seed, index as u64);
    }
    let sim = SimBackends::new(rec.task.clone(), faults.clone());
    let planner: &dyn Planner = http.planner.as_ref().map(|p| p as _).unwrap_or(&sim.planner);
    let verifier: &dyn Verifier = http.verifier.as_ref().map(|v| v as _).unwrap_or(&sim.verifier);
    let generator: &dyn Generator =
        http.generator.as_ref().map(|g| g as _).unwrap_or(&sim.generator);
    let router: &dyn Router = http.router.as_ref().map(|r| r as _).unwrap_or(&sim.router);
    let selector: &dyn Selector = http.selector.as_ref().map(|s| s as _).unwrap_or(&sim.selector);
    let critic: &dyn Critic = http.critic.as_ref().map(|c| c as _).unwrap_or(&sim.critic);

    let outcome = match cfg.baseline {
        Baseline::Collabvr => {
            let set = BackendSet {
                planner,
                verifier,
                generator,
                router: cfg.engine.router_enabled.then_some(router),
            };
            run_collabvr(&task, &cfg.engine, &set, config_hash)
        }
        Baseline::Single => run_single(&task, &cfg.engine, generator, config_hash),
        Baseline::PassK => {
            run_pass_k(&task, &cfg.engine, generator, selector, &cfg.pass_k, config_hash)
        }
        Baseline::Tpo => run_tpo(&task, &cfg.engine, generator, critic, &cfg.tpo, config_hash),
    };

    let trace_file = format!("{}.jsonl", rec.task_id);
    let trace_path = traces_dir.join(&trace_file);
    match outcome {
        Ok(result) => {
            let write = std::fs::File::create(&trace_path)
                .map_err(anyhow::Error::from)
                .and_then(|f| {
                    result.trace.write_jsonl(std::io::BufWriter::new(f)).map_err(Into::into)
                });
            let score = rule_score(&result, &rec.task);
            ResultRecord {
                task_id: rec.task_id.clone(),
                baseline: cfg.baseline,
                category: rec.task.category,
                required_steps: rec.task.required_steps,
                score: Some(score),
                steps_taken: result.steps_taken,
                regenerations: result.regenerations,
                clips_generated: result.clips_generated,
                vlm_calls: result.vlm_calls,
                total_vgm_seconds: result.total_vgm_seconds,
                error: write.err().map(|e| format!("trace write failed: {e}")),
                trace_file,
            }
        }
        Err(run_err) => {
            // Per-task failures are recorded, never fatal; the partial trace
            // is still persisted for diagnosis.
            if let Ok(f) = std::fs::File::create(&trace_path) {
                let _ = run_err.partial_trace.write_jsonl(std::io::BufWriter::new(f));
            }
            ResultRecord {
                task_id: rec.task_id.clone(),
                baseline: cfg.baseline,
                category: rec.task.category,
                required_steps: rec.task.required_steps,
                score: None,
                steps_taken: 0,
                regenerations: 0,
                clips_generated: 0,
                vlm_calls: 0,
                total_vgm_seconds: 0.0,
                error: Some(run_err.error.to_string()),
                trace_file,
            }
        }
    }
}

#[derive(Serialize)]
struct Report {
    runs: usize,
    completed: usize,
    failed: usize,
    score_overall: Option<f64>,
    score_by_category: std::collections::BTreeMap<Category, f64>,
    score_by_required_steps: std::collections::BTreeMap<u32, f64>,
    cost_total: collabvr::metrics::CostReport,
    cost_mean_per_sample: collabvr::metrics::CostReport,
    pipeline: collabvr::metrics::PipelineStats,
}

fn cmd_report(args: ReportArgs) -> Result<u8> {
    let meta: RunMeta = serde_json::from_str(
        &std::fs::read_to_string(args.run_dir.join("run_meta.json"))
            .context("run directory has no run_meta.json")?,
    )?;
    let results = read_results(&args.run_dir.join("results.jsonl"))?;

    let mut traces = Vec::new();
    for r in &results {
        let path = args.run_dir.join("traces").join(&r.trace_file);
        let file = std::fs::File::open(&path)
            .with_context(|| format!("missing trace {}", path.display()))?;
        let trace = RunTrace::read_jsonl(std::io::BufReader::new(file))
            .map_err(|e| anyhow::anyhow!(e))?;
        if trace.header.config_hash != meta.config_hash && !args.force {
            bail!(
                "trace {} was produced under config {} but this run is {}; pass --force to aggregate anyway",
                r.trace_file,
                trace.header.config_hash,
                meta.config_hash
            );
        }
        traces.push(trace);
    }

    let report = build_report(&results, &traces, &meta.config.pricing)?;
    let json = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => std::fs::write(path, &json)?,
        None => std::fs::write(args.run_dir.join("report.json"), &json)?,
    }
    print_report_tables(&report);
    Ok(0)
}

fn read_results(path: &Path) -> Result<Vec<ResultRecord>> {
    use std::io::BufRead;
    let file =
        std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn build_report(
    results: &[ResultRecord],
    traces: &[RunTrace],
    pricing: &PricingModel,
) -> Result<Report> {
    let completed: Vec<&ResultRecord> = results.iter().filter(|r| r.error.is_none()).collect();
    let scored: Vec<&ResultRecord> = completed.iter().copied().filter(|r| r.score.is_some()).collect();
    let mean_score = |subset: &[&ResultRecord]| -> Option<f64> {
        if subset.is_empty() {
            return None;
        }
        Some(subset.iter().map(|r| r.score.unwrap_or(0) as f64).sum::<f64>() / subset.len() as f64)
    };

    let mut by_cat: std::collections::BTreeMap<Category, Vec<&ResultRecord>> = Default::default();
    let mut by_n: std::collections::BTreeMap<u32, Vec<&ResultRecord>> = Default::default();
    for r in &scored {
        by_cat.entry(r.category).or_default().push(r);
        by_n.entry(r.required_steps).or_default().push(r);
    }
    let (cost_total, cost_mean) = aggregate_cost(traces, pricing);
    Ok(Report {
        runs: results.len(),
        completed: completed.len(),
        failed: results.len() - completed.len(),
        score_overall: mean_score(&scored),
        score_by_category: by_cat
            .into_iter()
            .map(|(k, v)| (k, mean_score(&v).unwrap_or(0.0)))
            .collect(),
        score_by_required_steps: by_n
            .into_iter()
            .map(|(k, v)| (k, mean_score(&v).unwrap_or(0.0)))
            .collect(),
        cost_total,
        cost_mean_per_sample: cost_mean,
        pipeline: pipeline_stats(traces).map_err(|e| anyhow::anyhow!(e))?,
    })
}

fn print_report_tables(report: &Report) {
    println!("runs        {:>10}", report.runs);
    println!("completed   {:>10}", report.completed);
    println!("failed      {:>10}", report.failed);
    if let Some(s) = report.score_overall {
        println!("score       {s:>10.3}");
    }
    println!();
    println!("{:<22}{:>10}", "category", "score");
    for (cat, s) in &report.score_by_category {
        println!("{:<22}{s:>10.3}", format!("{cat:?}"));
    }
    println!();
    println!("{:<22}{:>10}", "steps required", "score");
    for (n, s) in &report.score_by_required_steps {
        println!("{n:<22}{s:>10.3}");
    }
    println!();
    println!("{:<26}{:>12}{:>14}", "cost", "total", "mean/sample");
    println!(
        "{:<26}{:>12.3}{:>14.3}",
        "vgm seconds", report.cost_total.vgm_seconds, report.cost_mean_per_sample.vgm_seconds
    );
    println!(
        "{:<26}{:>12.3}{:>14.4}",
        "vgm dollars", report.cost_total.vgm_dollars, report.cost_mean_per_sample.vgm_dollars
    );
    println!(
        "{:<26}{:>12.3}{:>14.4}",
        "vlm dollars", report.cost_total.vlm_dollars, report.cost_mean_per_sample.vlm_dollars
    );
    println!();
    let p = &report.pipeline;
    println!("{:<16}{:>8}{:>8}{:>8}{:>8}{:>8}", "pipeline", "mean", "std", "median", "min", "max");
    for (name, s) in [
        ("steps", &p.steps),
        ("regens", &p.regenerations),
        ("clips", &p.clips),
        ("vlm calls", &p.vlm_calls),
    ] {
        println!(
            "{name:<16}{:>8.2}{:>8.2}{:>8.1}{:>8.0}{:>8.0}",
            s.mean, s.std, s.median, s.min, s.max
        );
    }
}

#[derive(Serialize)]
struct AgreeReport {
    d1: Option<collabvr::metrics::D1Report>,
    d2: Option<collabvr::metrics::D2Report>,
    d3: Option<collabvr::metrics::D3Report>,
}

fn cmd_agree(args: AgreeArgs) -> Result<u8> {
    let file = std::fs::File::open(&args.annotations)
        .with_context(|| format!("cannot open {}", args.annotations.display()))?;
    let set = AnnotationSet::read_jsonl(std::io::BufReader::new(file))
        .map_err(|e| anyhow::anyhow!(e))?;

    let has = |axis: Axis| set.axis(axis).next().is_some();
    let report = AgreeReport {
        d1: has(Axis::D1)
            .then(|| agreement_d1(&set))
            .transpose()
            .map_err(|e| anyhow::anyhow!(e))?,
        d2: has(Axis::D2)
            .then(|| agreement_d2(&set))
            .transpose()
            .map_err(|e| anyhow::anyhow!(e))?,
        d3: has(Axis::D3)
            .then(|| agreement_d3(&set))
            .transpose()
            .map_err(|e| anyhow::anyhow!(e))?,
    };

    let json = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &args.out {
        std::fs::write(out, &json)?;
    }
    if let Some(d1) = &report.d1 {
        println!(
            "d1 plan depth     exact-match {:.3}  mae {}  ({} items, {} parseable)",
            d1.exact_match,
            d1.mae.map(|m| format!("{m:.3}")).unwrap_or_else(|| "n/a".into()),
            d1.n,
            d1.parseable
        );
    }
    if let Some(d2) = &report.d2 {
        println!(
            "d2 verification   accuracy {:.3}  accept-recall {:.3}  reject-recall {:.3}  f1 {:.3}  kappa {}  ac1 {:.3}",
            d2.accuracy,
            d2.accept_recall,
            d2.reject_recall,
            d2.f1_accept,
            d2.cohen_kappa.map(|k| format!("{k:.3}")).unwrap_or_else(|| "undefined".into()),
            d2.gwet_ac1
        );
        println!(
            "                  confusion [model x human]: accept [{} {}], reject [{} {}]",
            d2.confusion[0][0], d2.confusion[0][1], d2.confusion[1][0], d2.confusion[1][1]
        );
    }
    if let Some(d3) = &report.d3 {
        println!(
            "d3 evolution      mean {:.2}  >=2 {:.1}%  =3 {:.1}%  ({} items)",
            d3.mean_rating,
            d3.share_ge2 * 100.0,
            d3.share_eq3 * 100.0,
            d3.n
        );
    }
    Ok(0)
}

fn cmd_replay(args: ReplayArgs) -> Result<u8> {
    let file = std::fs::File::open(&args.trace)
        .with_context(|| format!("cannot open {}", args.trace.display()))?;
    let trace = RunTrace::read_jsonl(std::io::BufReader::new(file))
        .map_err(|e| anyhow::anyhow!(e))?;
    let result = RunResult::from_trace(trace).map_err(|e| anyhow::anyhow!(e))?;
    let json = serde_json::to_string(&result)?;
    match &args.out {
        Some(path) => std::fs::write(path, json)?,
        None => {
            // Tolerate closed pipes: replay output is commonly paged.
            let mut stdout = std::io::stdout().lock();
            let write = stdout
                .write_all(json.as_bytes())
                .and_then(|_| stdout.write_all(b"\n"))
                .and_then(|_| stdout.flush());
            if let Err(e) = write {
                if e.kind() != std::io::ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
    }
    Ok(0)
}
