//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::audit::{
    audit, report_rows, summary_row, sweep, sweep_rows, write_csv, AuditReport, SummaryRow, SweepMode,
    SweepSummary,
};
use crate::checks::{self, EXPERIMENT_RULES};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::forge::{ingest_bid_log, ingest_category_counts, with_random_budgets, ForgeRecipe};
use crate::model::{compile_proportionality, equal_split_spec, ConstraintSet, Instance, InstanceFile};
use crate::solver::{solve, SolverOptions, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::welfare::WelfareRule;

#[derive(Debug, Parser)]
#[command(name = "fairdiv", version, about = "Welfarist allocation of divisible items under agent constraints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Maximize welfare and print the solve report as JSON.
    Solve(SolveArgs),
    /// Compare values without and with agent constraints.
    Audit(AuditArgs),
    /// Run a single, pairs or monotonicity sweep of equal-split constraints.
    Sweep(SweepArgs),
    /// Run the acceptance checks and print a pass/fail table.
    PaperCheck(CheckArgs),
    /// Seeded sweeps over random budget-capped instances for every rule.
    Experiment(ExperimentArgs),
    /// Convert a counts or bid-log CSV into instance JSON.
    Ingest(IngestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IngestKind {
    Counts,
    Bids,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Built-in construction, e.g. `thm3:eps=1` or `random:n=6,m=20,seed=3`.
    #[arg(long)]
    pub recipe: Option<String>,
    /// Instance JSON file.
    #[arg(long)]
    pub instance: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Welfare rule: sw, nw, gamma=<g>, mmf[=<g>], exp=<rate>, snw, loglog, combo.
    #[arg(long)]
    pub rule: String,
    #[command(flatten)]
    pub source: Source,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Overrides the seed of a random recipe.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    /// Ignore the constraint sets that come with the instance.
    #[arg(long)]
    pub unconstrained: bool,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated agents given equal-split constraints; defaults to the
    /// instance's own constraint sets.
    #[arg(long, value_delimiter = ',')]
    pub agents: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub filter: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// single, pairs (or double) or mon.
    #[arg(long, default_value = "single")]
    pub mode: String,
    #[arg(long, default_value_t = 0.0)]
    pub filter: f64,
    /// csv prints the summary; with --out, a directory receives summary.csv and trials.csv.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Criteria to run, comma-separated; all when absent.
    #[arg(long, value_delimiter = ',')]
    pub criterion: Vec<u8>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Base random recipe; its seed is replaced per repetition.
    #[arg(long, default_value = "random:n=6,m=20,T=10,dist=lognormal,mu=0,sigma=1,sparsity=0.3")]
    pub recipe: String,
    /// Comma-separated rules.
    #[arg(long, value_delimiter = ',')]
    pub rules: Vec<String>,
    /// First seed; repetitions use seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub reps: u64,
    #[arg(long, default_value_t = 0.1)]
    pub filter: f64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, value_enum)]
    pub kind: IngestKind,
    /// Multiplier applied to counts.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 20)]
    pub max_items: usize,
    #[arg(long, default_value_t = 6)]
    pub max_agents: usize,
    /// Draw budgets from Uniform(0, T).
    #[arg(long)]
    pub budgets: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    pub file: PathBuf,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match out {
        Some(p) => fs::write(p, text).map_err(Error::Io),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(common: &Common) -> Result<(Instance, Vec<ConstraintSet>)> {
    match (&common.source.recipe, &common.source.instance) {
        (Some(r), None) => {
            let recipe: ForgeRecipe = r.parse()?;
            let recipe = match common.seed {
                Some(s) => recipe.with_seed(s),
                None => recipe,
            };
            recipe.build()
        }
        (None, Some(path)) => {
            let file = InstanceFile::from_json(&read(path)?)?;
            Ok((file.instance, file.constraints))
        }
        _ => Err(Error::BadParams("give exactly one of --recipe and --instance".into())),
    }
}

fn options(common: &Common) -> SolverOptions {
    SolverOptions { tol: common.tol, max_iter: common.max_iter }
}

fn equal_splits(instance: &Instance, agents: &[usize]) -> Result<Vec<ConstraintSet>> {
    agents.iter().map(|&i| compile_proportionality(&equal_split_spec(instance, i)?, instance.m_items())).collect()
}

pub fn audit_json(report: &AuditReport) -> Value {
    let ratios = |m: &std::collections::BTreeMap<usize, f64>| -> Value {
        m.iter().map(|(k, v)| (k.to_string(), json!(v))).collect::<serde_json::Map<_, _>>().into()
    };
    json!({
        "rule": report.rule.to_string(),
        "constrained_agents": report.constrained_agents,
        "values_before": report.values_before.as_slice(),
        "values_after": report.values_after.as_slice(),
        "q_ratios": ratios(&report.q_ratios),
        "p_ratios": ratios(&report.p_ratios),
        "q_min": report.q_min,
        "p_min": report.p_min,
        "filtered_agents": report.filtered_agents,
        "gap_before": report.gap_before,
        "gap_after": report.gap_after,
    })
}

fn sweep_json(summary: &SweepSummary) -> Value {
    json!({
        "rule": summary.rule.to_string(),
        "mode": summary.mode.to_string(),
        "statistic": summary.mode.statistic(),
        "value": summary.value,
        "baseline": summary.baseline.to_json_value(),
        "trials": summary.trials.iter().map(audit_json).collect::<Vec<_>>(),
    })
}

fn pretty(v: &Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn run_solve(args: &SolveArgs) -> Result<()> {
    let rule: WelfareRule = args.common.rule.parse()?;
    let (inst, sets) = load(&args.common)?;
    let sets = if args.unconstrained { Vec::new() } else { sets };
    let report = solve(&inst, &rule, &sets, &options(&args.common))?;
    emit(args.common.out.as_deref(), &report.to_json()?)
}

fn run_audit(args: &AuditArgs) -> Result<()> {
    let rule: WelfareRule = args.common.rule.parse()?;
    let (inst, sets) = load(&args.common)?;
    let sets = if args.agents.is_empty() { sets } else { equal_splits(&inst, &args.agents)? };
    let report = audit(&inst, &rule, &sets, args.filter, &options(&args.common))?;
    let text = match args.format {
        Format::Json => pretty(&audit_json(&report))?,
        Format::Csv => write_csv(&report_rows(0, &report))?,
    };
    emit(args.common.out.as_deref(), &text)
}

fn run_sweep(args: &SweepArgs) -> Result<()> {
    let rule: WelfareRule = args.common.rule.parse()?;
    let mode: SweepMode = args.mode.parse()?;
    let (inst, _) = load(&args.common)?;
    let summary = sweep(&inst, &rule, mode, args.filter, &options(&args.common), ExecMode::default())?;
    let seed = args.common.seed;
    match (args.format, args.common.out.as_deref()) {
        (Format::Json, out) => emit(out, &pretty(&sweep_json(&summary))?),
        (Format::Csv, None) => emit(None, &write_csv(&[summary_row(&summary, seed)])?),
        (Format::Csv, Some(dir)) => {
            fs::create_dir_all(dir)?;
            emit(Some(&dir.join("summary.csv")), &write_csv(&[summary_row(&summary, seed)])?)?;
            emit(Some(&dir.join("trials.csv")), &write_csv(&sweep_rows(&summary))?)
        }
    }
}

/// Returns whether every selected criterion passed.
fn run_checks(args: &CheckArgs) -> Result<bool> {
    let ids: Vec<u8> = if args.criterion.is_empty() { (1..=8).collect() } else { args.criterion.clone() };
    if let Some(&bad) = ids.iter().find(|&&i| !(1..=8).contains(&i)) {
        return Err(Error::BadParams(format!("no criterion {bad}")));
    }
    let results: Vec<_> = ids.iter().map(|&id| checks::run(id, ExecMode::default())).collect();
    let text = match args.format {
        Format::Csv => results.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"),
        Format::Json => pretty(&Value::Array(
            results
                .iter()
                .map(|r| json!({"id": r.id, "name": r.name, "passed": r.passed, "detail": r.detail}))
                .collect(),
        ))?,
    };
    emit(args.out.as_deref(), &text)?;
    Ok(results.iter().all(|r| r.passed))
}

/// One summary row per (seed, rule, mode); SINGLE and PAIRS report `1 - q_min`.
fn run_experiment(args: &ExperimentArgs) -> Result<()> {
    let base: ForgeRecipe = args.recipe.parse()?;
    if !matches!(base, ForgeRecipe::Random(_)) {
        return Err(Error::BadParams("experiment needs a random recipe".into()));
    }
    let rules: Vec<WelfareRule> = if args.rules.is_empty() {
        EXPERIMENT_RULES.to_vec()
    } else {
        args.rules.iter().map(|r| r.parse()).collect::<Result<_>>()?
    };
    let opts = SolverOptions { tol: args.tol, max_iter: DEFAULT_MAX_ITER };
    let seeds: Vec<u64> = (0..args.reps).map(|k| args.seed + k).collect();
    let per_seed = exec::map(ExecMode::default(), &seeds, |&seed| -> Result<Vec<SummaryRow>> {
        let (inst, _) = base.with_seed(seed).build()?;
        let mut rows = Vec::new();
        for rule in &rules {
            for mode in [SweepMode::Single, SweepMode::Pairs, SweepMode::Mon] {
                let s = sweep(&inst, rule, mode, args.filter, &opts, ExecMode::Sequential)?;
                let mut row = summary_row(&s, Some(seed));
                if mode != SweepMode::Mon {
                    row.statistic = "one_minus_q_min".into();
                    row.value = row.value.map(|q| 1.0 - q);
                }
                rows.push(row);
            }
        }
        Ok(rows)
    });
    let rows: Vec<SummaryRow> = per_seed.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect();
    emit(args.out.as_deref(), &write_csv(&rows)?)
}

fn run_ingest(args: &IngestArgs) -> Result<()> {
    let text = read(&args.file)?;
    let mut inst = match args.kind {
        IngestKind::Counts => ingest_category_counts(&text, args.scale)?,
        IngestKind::Bids => ingest_bid_log(&text, args.max_items, args.max_agents)?,
    };
    if let Some(t) = args.budgets {
        inst = with_random_budgets(&inst, t, args.seed)?;
    }
    let file = InstanceFile { instance: inst, constraints: Vec::new() };
    emit(args.out.as_deref(), &file.to_json()?)
}

fn error_json(e: &Error) -> String {
    json!({"error": e.kind(), "message": e.to_string(), "exit_code": e.exit_code()}).to_string()
}

/// Runs a parsed command and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    if let Some(n) = std::env::var("FAIRDIV_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            exec::init_threads(n);
        }
    }
    let outcome = match &cli.command {
        Command::Solve(a) => run_solve(a).map(|_| true),
        Command::Audit(a) => run_audit(a).map(|_| true),
        Command::Sweep(a) => run_sweep(a).map(|_| true),
        Command::PaperCheck(a) => run_checks(a),
        Command::Experiment(a) => run_experiment(a).map(|_| true),
        Command::Ingest(a) => run_ingest(a).map(|_| true),
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    run(&Cli::parse())
}
