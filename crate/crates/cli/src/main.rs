//! Command-line driver: wires config parsing, engine construction, algorithm
//! selection, provenance I/O, and report emission.
//!
//! Exit codes: 0 = cause found, 1 = configuration or input error, 2 = backend
//! failure, 3 = no cause found within the budget.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use faultline_core::config::{load_config, LoadedConfig};
use faultline_core::ddt::{ddt_search, DdtConfig, DdtReport, Goal};
use faultline_core::engine::{
    write_provenance_csv, Engine, EngineConfig, EngineError, OracleBackend, PipelineBackend,
};
use faultline_core::minimize::minimize;
use faultline_core::model::{CauseDnf, Conjunction, Evaluation, ParameterSpace};
use faultline_core::shortcut::{
    declared_order, find_disjoint_pair, shortcut, ShortcutError, ShortcutReport,
};
use faultline_core::stacked::{stacked_shortcut, StackedReport, DEFAULT_K};
use faultline_core::synth::{
    enumerate_minimal_causes, fail_witness, generate, pipeline_score, score, succeed_witness,
    GeneratorConfig, PipelineScore, SyntheticPipeline,
};

#[derive(Parser)]
#[command(
    name = "faultline",
    about = "Root-cause debugger for parameterized computational pipelines",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the debugging flow with a chosen algorithm.
    Run(RunArgs),
    /// Walk one failing instance against the most different good instance.
    Shortcut(AlgoArgs),
    /// Walk against k good instances and union the assertions.
    Stacked(AlgoArgs),
    /// Decision-tree search for conjunctive and inequality causes.
    Ddt(AlgoArgs),
    /// Minimize a DNF explanation against a parameter space.
    Minimize(MinimizeArgs),
    /// Score the algorithms on synthetic pipelines and emit CSV reports.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgoChoice {
    Shortcut,
    Stacked,
    Ddt,
    All,
}

impl AlgoChoice {
    fn name(self) -> &'static str {
        match self {
            AlgoChoice::Shortcut => "shortcut",
            AlgoChoice::Stacked => "stacked",
            AlgoChoice::Ddt => "ddt",
            AlgoChoice::All => "all",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GoalChoice {
    One,
    All,
}

#[derive(Args)]
struct CommonArgs {
    /// Parameter-space and backend configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Seed provenance CSV of previously run instances.
    #[arg(long)]
    provenance: Option<PathBuf>,
    /// Maximum number of new executions.
    #[arg(long)]
    budget: Option<usize>,
    /// Concurrent executions (overrides the config).
    #[arg(long)]
    workers: Option<usize>,
    /// Seed for sampling and good-set synthesis.
    #[arg(long)]
    seed: Option<u64>,
    /// Good instances for the stacked walk.
    #[arg(long)]
    k: Option<usize>,
    /// Instances sampled (or exhausted) per suspect.
    #[arg(long)]
    samples: Option<usize>,
    /// Command timeout in seconds (0 = none; overrides the config).
    #[arg(long)]
    timeout: Option<f64>,
    /// Treat command timeouts as FAIL evaluations instead of backend failures.
    #[arg(long)]
    timeout_is_fail: bool,
    /// Directory for explanation, provenance, and report artifacts.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    algo: AlgoChoice,
    #[arg(long, value_enum, default_value = "one")]
    goal: GoalChoice,
}

#[derive(Args)]
struct AlgoArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum, default_value = "one")]
    goal: GoalChoice,
}

#[derive(Args)]
struct MinimizeArgs {
    /// Parameter-space configuration (JSON); only the space is used.
    #[arg(long)]
    config: PathBuf,
    /// DNF text file to minimize (stdin when omitted).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scenario {
    Single,
    Conjunction,
    Disjunction,
}

impl Scenario {
    fn name(self) -> &'static str {
        match self {
            Scenario::Single => "single",
            Scenario::Conjunction => "conjunction",
            Scenario::Disjunction => "disjunction",
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    scenario: Scenario,
    #[arg(long, default_value_t = 20)]
    pipelines: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Algorithm to score; `all` scores each in turn.
    #[arg(long, value_enum, default_value = "all")]
    algo: AlgoChoice,
    #[arg(long, value_enum, default_value = "one")]
    mode: GoalChoice,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run_flow(args.common, args.algo, args.goal),
        Command::Shortcut(args) => run_flow(args.common, AlgoChoice::Shortcut, args.goal),
        Command::Stacked(args) => run_flow(args.common, AlgoChoice::Stacked, args.goal),
        Command::Ddt(args) => run_flow(args.common, AlgoChoice::Ddt, args.goal),
        Command::Minimize(args) => run_minimize(args),
        Command::Bench(args) => run_bench(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("faultline: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> CliError {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    fn backend(message: impl Into<String>) -> CliError {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
}

#[derive(Serialize)]
struct Meta {
    timestamp_unix: u64,
    tool_version: &'static str,
}

#[derive(Serialize)]
struct ConjunctReport {
    text: String,
    proven: bool,
}

#[derive(Serialize)]
struct ShortcutSection {
    asserted: String,
    sanity_rejected: bool,
    pair_is_disjoint: bool,
    executions_used: usize,
    steps: Vec<StepReport>,
}

#[derive(Serialize)]
struct StepReport {
    instance: BTreeMap<String, String>,
    evaluation: String,
}

#[derive(Serialize)]
struct StackedSection {
    asserted: String,
    sanity_rejected: bool,
    k_requested: usize,
    k_found: usize,
    mutually_disjoint: bool,
    synthesis_executions: usize,
    per_run: Vec<ShortcutSection>,
}

#[derive(Serialize)]
struct DdtSection {
    causes: String,
    executions_used: usize,
    rebuilds: usize,
    budget_exhausted: bool,
    proven: bool,
}

#[derive(Serialize)]
struct Report {
    meta: Meta,
    algorithm: String,
    goal: String,
    cause_found: bool,
    explanation: String,
    conjuncts: Vec<ConjunctReport>,
    engine_executions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    shortcut: Option<ShortcutSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stacked: Option<StackedSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ddt: Option<DdtSection>,
}

fn shortcut_section(space: &ParameterSpace, r: &ShortcutReport) -> ShortcutSection {
    ShortcutSection {
        asserted: space.conjunction_text(&r.asserted),
        sanity_rejected: r.sanity_rejected,
        pair_is_disjoint: r.pair_is_disjoint,
        executions_used: r.executions_used,
        steps: r
            .steps
            .iter()
            .map(|(inst, eval)| StepReport {
                instance: space
                    .parameters()
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (p.name.clone(), inst.value(i).canonical()))
                    .collect(),
                evaluation: eval.text().to_string(),
            })
            .collect(),
    }
}

fn stacked_section(space: &ParameterSpace, r: &StackedReport) -> StackedSection {
    StackedSection {
        asserted: space.conjunction_text(&r.asserted),
        sanity_rejected: r.sanity_rejected,
        k_requested: r.k_requested,
        k_found: r.k_found,
        mutually_disjoint: r.mutually_disjoint,
        synthesis_executions: r.synthesis_executions,
        per_run: r
            .per_run
            .iter()
            .map(|s| shortcut_section(space, s))
            .collect(),
    }
}

fn ddt_section(space: &ParameterSpace, r: &DdtReport) -> DdtSection {
    DdtSection {
        causes: space.dnf_text(&r.causes),
        executions_used: r.executions_used,
        rebuilds: r.rebuilds,
        budget_exhausted: r.budget_exhausted,
        proven: r.proven,
    }
}

fn run_flow(common: CommonArgs, algo: AlgoChoice, goal: GoalChoice) -> Result<ExitCode, CliError> {
    if goal == GoalChoice::All && !matches!(algo, AlgoChoice::Ddt | AlgoChoice::All) {
        return Err(CliError::config(
            "--goal all requires --algo ddt or --algo all (the walk variants find one cause)",
        ));
    }
    let mut loaded: LoadedConfig =
        load_config(&common.config).map_err(|e| CliError::config(e.to_string()))?;
    if let PipelineBackend::Command(cmd) = &mut loaded.backend {
        if let Some(t) = common.timeout {
            cmd.timeout = Duration::from_secs_f64(t);
        }
        if common.timeout_is_fail {
            cmd.timeout_is_fail = true;
        }
    }
    let engine_cfg = EngineConfig {
        workers: common.workers.unwrap_or(loaded.engine.workers),
        budget: common.budget.or(loaded.engine.budget),
    };
    let seed = common.seed.unwrap_or(loaded.seed);
    let engine = Engine::new(loaded.space, loaded.backend, engine_cfg);
    let space = engine.space().clone();

    if let Some(path) = &common.provenance {
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::config(format!("cannot open {}: {e}", path.display())))?;
        let records =
            faultline_core::engine::read_provenance_csv(&space, file).map_err(CliError::config)?;
        let seeds: Vec<_> = records
            .into_iter()
            .map(|r| (r.instance, r.evaluation))
            .collect();
        engine
            .seed_history(&seeds)
            .map_err(|e| CliError::config(e.to_string()))?;
    }

    let goal = match goal {
        GoalChoice::One => Goal::FindOne,
        GoalChoice::All => Goal::FindAll,
    };
    let k = common.k.unwrap_or(DEFAULT_K);
    let samples = common
        .samples
        .unwrap_or(faultline_core::ddt::DEFAULT_SAMPLES_PER_SUSPECT);

    let mut report = Report {
        meta: Meta {
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            tool_version: env!("CARGO_PKG_VERSION"),
        },
        algorithm: algo.name().to_string(),
        goal: match goal {
            Goal::FindOne => "one".into(),
            Goal::FindAll => "all".into(),
        },
        cause_found: false,
        explanation: String::new(),
        conjuncts: Vec::new(),
        engine_executions: 0,
        shortcut: None,
        stacked: None,
        ddt: None,
    };

    let order = declared_order(&space);
    let mut gathered: Vec<Conjunction> = Vec::new();
    // A conjunct is proven only when an exhaustive filter covered it; walk
    // assertions are hypotheses validated against the observed provenance.
    let mut proven = true;
    let mut sampled = false;

    if matches!(algo, AlgoChoice::Shortcut | AlgoChoice::All) {
        match find_disjoint_pair(&engine.provenance(), &space)
            .and_then(|(f, g, _)| shortcut(&engine, &f, &g, &order))
        {
            Ok(r) => {
                let asserted = r.effective();
                if !asserted.is_empty() {
                    gathered.push(asserted);
                    proven = false;
                }
                report.shortcut = Some(shortcut_section(&space, &r));
            }
            Err(ShortcutError::Budget { partial }) => {
                report.shortcut = Some(shortcut_section(&space, &partial));
            }
            Err(ShortcutError::Engine(EngineError::BackendFailure(m))) => {
                return Err(CliError::backend(m));
            }
            Err(ShortcutError::NoFailingInstance) if algo == AlgoChoice::Shortcut => {
                return Err(CliError::config(
                    "provenance contains no failing instance: nothing to debug",
                ));
            }
            Err(e) => {
                if algo == AlgoChoice::Shortcut {
                    eprintln!("faultline: walk failed: {e}");
                }
            }
        }
    }
    if matches!(algo, AlgoChoice::Stacked | AlgoChoice::All) {
        let base_fail = engine
            .provenance()
            .iter()
            .find(|r| r.evaluation == Evaluation::Fail)
            .map(|r| r.instance.clone());
        match base_fail {
            None => {
                if algo == AlgoChoice::Stacked {
                    return Err(CliError::config(
                        "provenance contains no failing instance: nothing to debug",
                    ));
                }
            }
            Some(base_fail) => match stacked_shortcut(&engine, &base_fail, k, &order, seed) {
                Ok(r) => {
                    let asserted = r.effective();
                    if !asserted.is_empty() {
                        gathered.push(asserted);
                        proven = false;
                    }
                    report.stacked = Some(stacked_section(&space, &r));
                }
                Err(ShortcutError::Engine(EngineError::BackendFailure(m))) => {
                    return Err(CliError::backend(m))
                }
                Err(e) => {
                    if algo == AlgoChoice::Stacked {
                        eprintln!("faultline: stacked walk failed: {e}");
                    }
                }
            },
        }
    }
    if matches!(algo, AlgoChoice::Ddt | AlgoChoice::All) {
        let cfg = DdtConfig {
            goal,
            samples_per_suspect: samples,
            seed,
            universe_cap: faultline_core::ddt::DEFAULT_UNIVERSE_CAP,
        };
        match ddt_search(&engine, &cfg) {
            Ok(r) => {
                gathered.extend(r.causes.conjuncts().cloned());
                proven = proven && r.proven;
                sampled = sampled || !r.proven;
                report.ddt = Some(ddt_section(&space, &r));
            }
            Err(faultline_core::ddt::DdtError::Engine(EngineError::BackendFailure(m))) => {
                return Err(CliError::backend(m));
            }
            Err(faultline_core::ddt::DdtError::NoFailingInstance) => {
                if algo == AlgoChoice::Ddt {
                    return Err(CliError::config(
                        "provenance contains no failing instance: nothing to debug",
                    ));
                }
            }
            Err(e) => return Err(CliError::config(e.to_string())),
        }
    }

    let explanation = minimize(&CauseDnf::from_conjuncts(gathered), &space);
    report.cause_found = !explanation.is_empty();
    report.explanation = space.dnf_text(&explanation);
    report.conjuncts = explanation
        .conjuncts()
        .map(|c| ConjunctReport {
            text: space.conjunction_text(c),
            proven,
        })
        .collect();
    report.engine_executions = engine.executed_count();

    // Console output: the explanation in canonical form plus a cost line.
    if report.cause_found {
        println!("{}", report.explanation);
    } else {
        println!("(no cause found)");
    }
    println!("cost: {} new executions", report.engine_executions);

    if let Some(dir) = &common.out_dir {
        write_artifacts(dir, &space, &engine, &report, sampled)?;
    }

    Ok(if report.cause_found {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

fn write_artifacts(
    dir: &Path,
    space: &ParameterSpace,
    engine: &Engine,
    report: &Report,
    sampled: bool,
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
    let mut explanation = String::new();
    for c in &report.conjuncts {
        if !explanation.is_empty() {
            explanation.push_str("\nOR ");
        }
        explanation.push_str(&c.text);
        if sampled {
            explanation.push_str(" (sampled)");
        }
    }
    explanation.push('\n');
    std::fs::write(dir.join("explanation.txt"), explanation)
        .map_err(|e| CliError::config(e.to_string()))?;

    let file = std::fs::File::create(dir.join("provenance.csv"))
        .map_err(|e| CliError::config(e.to_string()))?;
    write_provenance_csv(space, &engine.provenance(), file)
        .map_err(|e| CliError::config(e.to_string()))?;

    let json = serde_json::to_string_pretty(report).map_err(|e| CliError::config(e.to_string()))?;
    std::fs::write(dir.join("report.json"), json + "\n")
        .map_err(|e| CliError::config(e.to_string()))?;
    Ok(())
}

fn run_minimize(args: MinimizeArgs) -> Result<ExitCode, CliError> {
    let loaded = load_config(&args.config).map_err(|e| CliError::config(e.to_string()))?;
    let text = match &args.input {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?,
        None => {
            let mut buf = String::new();
            std::io::stdin()
                .read_to_string(&mut buf)
                .map_err(|e| CliError::config(e.to_string()))?;
            buf
        }
    };
    let dnf = loaded
        .space
        .parse_dnf(&text)
        .map_err(|e| CliError::config(e.to_string()))?;
    let out = minimize(&dnf, &loaded.space);
    let rendered = loaded.space.dnf_text(&out) + "\n";
    match &args.out {
        Some(path) => {
            std::fs::write(path, rendered).map_err(|e| CliError::config(e.to_string()))?
        }
        None => print!("{rendered}"),
    }
    Ok(ExitCode::SUCCESS)
}

struct BenchRow {
    pipeline: usize,
    seed: u64,
    algorithm: &'static str,
    score: PipelineScore,
    executions: usize,
}

fn run_bench(args: BenchArgs) -> Result<ExitCode, CliError> {
    let gen_cfg = match args.scenario {
        Scenario::Single => GeneratorConfig {
            param_count: 3..=4,
            domain_size: 5..=6,
            extra_conjunct_prob: 0.0,
            params_per_conjunct: Some(1..=1),
            max_conjuncts: 1,
            ..GeneratorConfig::default()
        },
        Scenario::Conjunction => GeneratorConfig {
            param_count: 3..=4,
            domain_size: 5..=6,
            extra_conjunct_prob: 0.0,
            params_per_conjunct: Some(2..=3),
            max_conjuncts: 1,
            ..GeneratorConfig::default()
        },
        Scenario::Disjunction => GeneratorConfig {
            param_count: 3..=4,
            domain_size: 5..=6,
            extra_conjunct_prob: 0.5,
            params_per_conjunct: Some(1..=2),
            max_conjuncts: 3,
            ..GeneratorConfig::default()
        },
    };
    let algos: Vec<&'static str> = match args.algo {
        AlgoChoice::Shortcut => vec!["shortcut"],
        AlgoChoice::Stacked => vec!["stacked"],
        AlgoChoice::Ddt => vec!["ddt"],
        AlgoChoice::All => vec!["shortcut", "stacked", "ddt"],
    };
    let goal = match args.mode {
        GoalChoice::One => Goal::FindOne,
        GoalChoice::All => Goal::FindAll,
    };

    let mut rows: Vec<BenchRow> = Vec::new();
    for i in 0..args.pipelines {
        let seed = args.seed.wrapping_add(i as u64);
        let pipeline = generate(seed, &gen_cfg).map_err(|e| CliError::config(e.to_string()))?;
        let truth = enumerate_minimal_causes(&pipeline, 1_000_000)
            .map_err(|e| CliError::config(e.to_string()))?;
        for algorithm in &algos {
            let (asserted, executions) = bench_one(&pipeline, algorithm, goal, args.k, seed)?;
            let score =
                pipeline_score(&pipeline.space, &asserted, &truth.minimal_causes, 1_000_000)
                    .map_err(|e| CliError::config(e.to_string()))?;
            rows.push(BenchRow {
                pipeline: i,
                seed,
                algorithm,
                score,
                executions,
            });
        }
    }

    let out_dir = args.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", out_dir.display())))?;
    let scenario = args.scenario.name();
    let mode = match goal {
        Goal::FindOne => "one",
        Goal::FindAll => "all",
    };

    let mut scores = String::from(
        "row_type,pipeline,seed,scenario,algorithm,mode,matched,asserted,truth,executions,precision,recall,f_measure\n",
    );
    for row in &rows {
        scores.push_str(&format!(
            "pipeline,{},{},{scenario},{},{mode},{},{},{},{},,,\n",
            row.pipeline,
            row.seed,
            row.algorithm,
            row.score.matched,
            row.score.asserted,
            row.score.truth,
            row.executions,
        ));
    }

    let mut long = String::from("scenario,mode,budget_group,algorithm,metric,value\n");
    for algorithm in &algos {
        let per: Vec<PipelineScore> = rows
            .iter()
            .filter(|r| r.algorithm == *algorithm)
            .map(|r| r.score)
            .collect();
        let executions: usize = rows
            .iter()
            .filter(|r| r.algorithm == *algorithm)
            .map(|r| r.executions)
            .sum();
        let card = score(&per, goal, executions).map_err(|e| CliError::config(e.to_string()))?;
        let budget_group = (executions as f64 / per.len() as f64).round() as usize;
        scores.push_str(&format!(
            "aggregate,,,{scenario},{algorithm},{mode},{},{},{},{},{:.6},{:.6},{:.6}\n",
            card.matched_total,
            card.asserted_total,
            card.truth_total,
            card.executions_used,
            card.precision,
            card.recall,
            card.f_measure,
        ));
        for (metric, value) in [
            ("precision", card.precision),
            ("recall", card.recall),
            ("f_measure", card.f_measure),
        ] {
            long.push_str(&format!(
                "{scenario},{mode},{budget_group},{algorithm},{metric},{value:.6}\n"
            ));
        }
        println!(
            "{algorithm}: precision {:.3} recall {:.3} f {:.3} ({} instances/pipeline)",
            card.precision, card.recall, card.f_measure, budget_group
        );
    }
    let scores_path = out_dir.join("bench_scores.csv");
    let long_path = out_dir.join("bench_long.csv");
    std::fs::write(&scores_path, scores).map_err(|e| CliError::config(e.to_string()))?;
    std::fs::write(&long_path, long).map_err(|e| CliError::config(e.to_string()))?;
    println!(
        "wrote {} and {}",
        scores_path.display(),
        long_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// One benchmark run: a fresh oracle engine seeded with a failing witness and
/// a succeeding witness (disjoint when possible), then the selected algorithm.
fn bench_one(
    pipeline: &SyntheticPipeline,
    algorithm: &str,
    goal: Goal,
    k: usize,
    seed: u64,
) -> Result<(CauseDnf, usize), CliError> {
    let space = &pipeline.space;
    let engine = Engine::new(
        space.clone(),
        PipelineBackend::Oracle(OracleBackend::new(pipeline.planted.clone())),
        EngineConfig::default(),
    );
    let first = pipeline
        .planted
        .conjuncts()
        .next()
        .ok_or_else(|| CliError::config("planted cause is empty"))?;
    let base_fail = fail_witness(space, first)
        .ok_or_else(|| CliError::config("planted conjunct is unsatisfiable"))?;
    let base_good = succeed_witness(space, &pipeline.planted, Some(&base_fail))
        .or_else(|| succeed_witness(space, &pipeline.planted, None))
        .ok_or_else(|| CliError::config("degenerate pipeline: nothing succeeds"))?;
    engine
        .seed_history(&[
            (base_fail.clone(), Evaluation::Fail),
            (base_good.clone(), Evaluation::Succeed),
        ])
        .map_err(|e| CliError::config(e.to_string()))?;

    let order = declared_order(space);
    let singleton = |conj: Conjunction| {
        if conj.is_empty() {
            CauseDnf::empty()
        } else {
            CauseDnf::from_conjuncts([conj])
        }
    };
    let asserted: CauseDnf = match algorithm {
        "shortcut" => {
            let (f, g, _) = find_disjoint_pair(&engine.provenance(), space)
                .map_err(|e| CliError::config(e.to_string()))?;
            match shortcut(&engine, &f, &g, &order) {
                Ok(r) => singleton(r.effective()),
                Err(_) => CauseDnf::empty(),
            }
        }
        "stacked" => match stacked_shortcut(&engine, &base_fail, k, &order, seed) {
            Ok(r) => singleton(r.effective()),
            Err(_) => CauseDnf::empty(),
        },
        "ddt" => {
            let cfg = DdtConfig {
                goal,
                samples_per_suspect: 500,
                seed,
                universe_cap: 1_000_000,
            };
            match ddt_search(&engine, &cfg) {
                Ok(r) => r.causes,
                Err(_) => CauseDnf::empty(),
            }
        }
        other => return Err(CliError::config(format!("unknown algorithm `{other}`"))),
    };
    Ok((asserted, engine.executed_count()))
}
