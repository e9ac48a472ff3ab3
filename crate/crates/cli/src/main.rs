use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use imbalance_lab::datagen::{bundled_scenario, bundled_scenarios, solve_delta_mu};
use imbalance_lab::harness::{
    aggregate, draw_iteration_data, ingest_external, read_dataset, read_manifest, read_results,
    run_external, run_plan, write_aggregate, write_dataset, write_results, Phase, RunOptions,
    RunPlan, PREDICTIONS_HEADER,
};
use imbalance_lab::learners::{predict, train, LearnerKind, LearnerSpec};
use imbalance_lab::metrics::flexible_curve;
use imbalance_lab::metrics::{evaluate, evaluate_recalibrated, recalibrate};
use imbalance_lab::resample::{apply_correction, CorrectionKind, CorrectionSpec};
use imbalance_lab::rng::seeded;
use imbalance_lab::{Error, Result};

#[derive(Parser)]
#[command(name = "imblab", version, about = "Class-imbalance correction simulation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean shift that gives a target oracle concordance.
    SolveDelta(SolveDeltaArgs),
    /// Draw the training and validation sets of one scenario iteration.
    Generate(GenerateArgs),
    /// Apply one imbalance correction to a dataset.
    Correct(CorrectArgs),
    /// Fit one learner and score it on a validation set.
    TrainEval(TrainEvalArgs),
    /// Run the full simulation grid.
    Simulate(SimulateArgs),
    /// Summarise results files into medians with Monte Carlo errors.
    Aggregate(AggregateArgs),
    /// Flexible calibration curve coordinates for one cell.
    Curves(CurvesArgs),
    /// Run the correction × learner grid on a user-supplied CSV.
    Ingest(IngestArgs),
}

#[derive(Args)]
struct SolveDeltaArgs {
    #[arg(long)]
    p: usize,
    #[arg(long = "n-cov")]
    n_cov: usize,
    #[arg(long)]
    rho: f64,
    #[arg(long = "delta-sigma")]
    delta_sigma: f64,
    #[arg(long)]
    c: f64,
    /// Decimal places printed.
    #[arg(long, default_value_t = 4)]
    digits: usize,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    scenario: u32,
    #[arg(long, default_value_t = 0)]
    iteration: u32,
    #[arg(long)]
    seed: u64,
    /// Directory for train.csv and validation.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorrectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "y")]
    outcome: String,
    /// Control, RUS, ROS, SMOTE or SENN.
    #[arg(long)]
    method: CorrectionKind,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    target: f64,
    /// SMOTE neighbours (also SENN's SMOTE stage).
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// ENN neighbours.
    #[arg(long, default_value_t = 3)]
    k2: usize,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainEvalArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    validation: PathBuf,
    #[arg(long, default_value = "y")]
    outcome: String,
    /// LR, RF, GBT, RUSBoost or EasyEnsemble.
    #[arg(long)]
    learner: LearnerKind,
    #[arg(long)]
    seed: u64,
    /// Write validation outcomes and raw / recalibrated risks here.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Plan JSON; without it the bundled scenarios are used.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Restrict to these scenario ids (repeatable).
    #[arg(long)]
    scenario: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    corrections: Vec<CorrectionKind>,
    #[arg(long, value_delimiter = ',')]
    learners: Vec<LearnerKind>,
    #[arg(long)]
    iterations: Option<u32>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "save-predictions")]
    save_predictions: bool,
    /// Keep complete iterations already in the output directory.
    #[arg(long)]
    resume: bool,
    /// Record per-cell wall time in ms_elapsed.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct AggregateArgs {
    /// Run directory holding manifest.json and results files.
    #[arg(long)]
    dir: PathBuf,
    /// Bootstrap seed; defaults to the run's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Defaults to <dir>/aggregate.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Raw,
    Recalibrated,
}

#[derive(Args)]
struct CurvesArgs {
    /// A predictions CSV written by `simulate --save-predictions`.
    #[arg(long)]
    results: PathBuf,
    /// scenario,correction,learner
    #[arg(long)]
    cell: String,
    #[arg(long, value_enum, default_value = "raw")]
    phase: PhaseArg,
    /// One iteration; all iterations are pooled when omitted.
    #[arg(long)]
    iteration: Option<u32>,
    #[arg(long, default_value_t = 0.75)]
    span: f64,
    #[arg(long, default_value_t = 2)]
    degree: usize,
    #[arg(long, default_value_t = 100)]
    grid: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    outcome: String,
    /// Fraction of rows used for training.
    #[arg(long, default_value_t = 0.7)]
    split: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    standardize: bool,
    #[arg(long, value_delimiter = ',')]
    corrections: Vec<CorrectionKind>,
    #[arg(long, value_delimiter = ',')]
    learners: Vec<LearnerKind>,
    #[arg(long)]
    out: PathBuf,
}

fn show_config(name: &str, value: serde_json::Value) {
    eprintln!("{name}: {value}");
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn corrections_or_default(kinds: &[CorrectionKind]) -> Vec<CorrectionSpec> {
    if kinds.is_empty() {
        CorrectionSpec::defaults()
    } else {
        kinds.iter().map(|&k| CorrectionSpec::new(k)).collect()
    }
}

fn learners_or_default(kinds: &[LearnerKind]) -> Vec<LearnerSpec> {
    if kinds.is_empty() {
        LearnerSpec::defaults()
    } else {
        kinds.iter().map(|&k| LearnerSpec::new(k)).collect()
    }
}

fn solve_delta(a: SolveDeltaArgs) -> Result<()> {
    show_config(
        "solve-delta",
        serde_json::json!({"p": a.p, "n_cov": a.n_cov, "rho": a.rho, "delta_sigma": a.delta_sigma, "c": a.c}),
    );
    let d = solve_delta_mu(a.p, a.n_cov, a.rho, a.delta_sigma, a.c)?;
    println!("{d:.*}", a.digits);
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let scenario = bundled_scenario(a.scenario)
        .ok_or_else(|| Error::Domain(format!("no bundled scenario {}", a.scenario)))?;
    show_config(
        "generate",
        serde_json::json!({"scenario": scenario, "iteration": a.iteration, "seed": a.seed}),
    );
    let (train, val) = draw_iteration_data(&scenario, a.iteration, a.seed)?;
    create_dir(&a.out)?;
    for (name, ds) in [("train.csv", &train), ("validation.csv", &val)] {
        write_dataset(ds, output(Some(&a.out.join(name)))?)?;
    }
    eprintln!(
        "wrote {} training rows ({} events) and {} validation rows ({} events)",
        train.len(),
        train.n_events(),
        val.len(),
        val.n_events()
    );
    Ok(())
}

fn correct(a: CorrectArgs) -> Result<()> {
    let mut spec = CorrectionSpec::new(a.method);
    spec.target_event_fraction = a.target;
    spec.k = a.k;
    spec.k1 = a.k;
    spec.k2 = a.k2;
    show_config("correct", serde_json::json!({"correction": spec, "seed": a.seed}));
    let (ds, _) = read_dataset(&a.input, &a.outcome)?;
    let outcome = apply_correction(&spec, &ds, &mut seeded(a.seed));
    if !outcome.note.is_empty() {
        eprintln!("{}", outcome.note);
    }
    if !outcome.applied {
        return Err(Error::Correction(outcome.note));
    }
    eprintln!(
        "{} rows in, {} rows out ({} events)",
        ds.len(),
        outcome.dataset.len(),
        outcome.dataset.n_events()
    );
    write_dataset(&outcome.dataset, output(a.out.as_deref())?)
}

fn train_eval(a: TrainEvalArgs) -> Result<()> {
    let spec = LearnerSpec::new(a.learner);
    show_config("train-eval", serde_json::json!({"learner": spec, "seed": a.seed}));
    let (train_set, _) = read_dataset(&a.train, &a.outcome)?;
    let (val, _) = read_dataset(&a.validation, &a.outcome)?;
    let model = train(&spec, &train_set, &mut seeded(a.seed))?;
    let risks = predict(&model, &val.features)?;
    let rec = recalibrate(&risks, &val.outcome)?;
    let report = serde_json::json!({
        "diagnostics": model.diagnostics,
        "raw": evaluate(&risks, &val.outcome)?,
        "recalibrated": evaluate_recalibrated(&rec, &val.outcome)?,
        "recalibration_shift": rec.beta0,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(path) = a.predictions {
        let mut w = output(Some(&path))?;
        writeln!(w, "outcome,risk_raw,risk_recalibrated").map_err(|e| Error::Io { path: path.clone(), source: e })?;
        for ((y, r), q) in val.outcome.iter().zip(&risks).zip(&rec.risks) {
            writeln!(w, "{y},{r},{q}").map_err(|e| Error::Io { path: path.clone(), source: e })?;
        }
        w.flush().map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut plan = match &a.plan {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            serde_json::from_str::<RunPlan>(&text)?
        }
        None => RunPlan::new(bundled_scenarios(), a.seed),
    };
    plan.base_seed = a.seed;
    if !a.scenario.is_empty() {
        plan.scenarios.retain(|s| a.scenario.contains(&s.id));
        for id in &a.scenario {
            if !plan.scenarios.iter().any(|s| s.id == *id) {
                return Err(Error::Domain(format!("scenario {id} is not in the plan")));
            }
        }
    }
    if !a.corrections.is_empty() {
        plan.corrections = corrections_or_default(&a.corrections);
    }
    if !a.learners.is_empty() {
        plan.learners = learners_or_default(&a.learners);
    }
    if let Some(n) = a.iterations {
        plan.iterations = n;
    }
    if let Some(out) = a.out {
        plan.output_dir = out;
    }
    plan.save_predictions |= a.save_predictions;
    plan.record_timing |= a.timing;
    show_config("simulate", serde_json::to_value(&plan)?);
    eprintln!("seed: {} jobs: {}", plan.base_seed, a.jobs);
    let options = RunOptions {
        jobs: a.jobs,
        resume: a.resume,
        progress: !a.quiet,
    };
    let summary = run_plan(&plan, &options)?;
    eprintln!(
        "{} rows ({} missing) written to {}",
        summary.rows,
        summary.missing_rows,
        plan.output_dir.display()
    );
    Ok(())
}

fn aggregate_cmd(a: AggregateArgs) -> Result<()> {
    let manifest = read_manifest(&a.dir.join("manifest.json"))?;
    let seed = a.seed.unwrap_or(manifest.base_seed);
    show_config(
        "aggregate",
        serde_json::json!({"dir": a.dir, "seed": seed, "complete": manifest.complete}),
    );
    if !manifest.complete {
        eprintln!("warning: the run is incomplete; summarising the rows present");
    }
    let mut rows = Vec::new();
    for s in &manifest.scenarios {
        rows.extend(read_results(&a.dir.join(&s.results_file))?);
    }
    let agg = aggregate(&rows, seed);
    let out = a.out.unwrap_or_else(|| a.dir.join("aggregate.csv"));
    write_aggregate(&out, &agg)?;
    eprintln!("{} summary rows written to {}", agg.len(), out.display());
    Ok(())
}

fn parse_cell(cell: &str) -> Result<(u32, CorrectionKind, LearnerKind)> {
    let parts: Vec<&str> = cell.split(',').map(str::trim).collect();
    let [s, c, l] = parts[..] else {
        return Err(Error::Domain(format!(
            "cell '{cell}' must be scenario,correction,learner"
        )));
    };
    let s = s
        .parse()
        .map_err(|_| Error::Domain(format!("'{s}' is not a scenario id")))?;
    Ok((s, c.parse()?, l.parse()?))
}

fn curves(a: CurvesArgs) -> Result<()> {
    let (scenario, correction, learner) = parse_cell(&a.cell)?;
    let phase = match a.phase {
        PhaseArg::Raw => Phase::Raw,
        PhaseArg::Recalibrated => Phase::Recalibrated,
    };
    show_config(
        "curves",
        serde_json::json!({
            "results": a.results, "scenario": scenario, "correction": correction,
            "learner": learner, "phase": phase, "iteration": a.iteration,
            "span": a.span, "degree": a.degree, "grid": a.grid,
        }),
    );
    let file = File::open(&a.results).map_err(|e| Error::Io {
        path: a.results.clone(),
        source: e,
    })?;
    let mut reader = csv::Reader::from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    if header != PREDICTIONS_HEADER {
        return Err(Error::Interface(format!(
            "{} is not a predictions file (expected header {})",
            a.results.display(),
            PREDICTIONS_HEADER.join(",")
        )));
    }
    let mut risks = Vec::new();
    let mut outcomes = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let matches = rec[0].parse::<u32>().is_ok_and(|v| v == scenario)
            && a.iteration.is_none_or(|i| rec[1].parse::<u32>().is_ok_and(|v| v == i))
            && rec[2].parse::<CorrectionKind>().is_ok_and(|v| v == correction)
            && rec[3].parse::<LearnerKind>().is_ok_and(|v| v == learner)
            && &rec[4] == phase.as_str();
        if !matches {
            continue;
        }
        let bad = |f: &str| Error::Interface(format!("malformed predictions record: '{f}'"));
        outcomes.push(rec[5].parse::<u8>().map_err(|_| bad(&rec[5]))?);
        risks.push(rec[6].parse::<f64>().map_err(|_| bad(&rec[6]))?);
    }
    if risks.is_empty() {
        return Err(Error::Domain(format!("no predictions for cell {}", a.cell)));
    }
    let curve = flexible_curve(&risks, &outcomes, a.span, a.degree, a.grid)?;
    for note in &curve.notes {
        eprintln!("{note}");
    }
    curve.write_csv(output(a.out.as_deref())?)
}

fn ingest(a: IngestArgs) -> Result<()> {
    let corrections = corrections_or_default(&a.corrections);
    let learners = learners_or_default(&a.learners);
    show_config(
        "ingest",
        serde_json::json!({
            "input": a.input, "outcome": a.outcome, "split": a.split, "seed": a.seed,
            "standardize": a.standardize, "corrections": corrections, "learners": learners,
        }),
    );
    let (train_set, val) = ingest_external(&a.input, &a.outcome, a.split, a.seed, a.standardize)?;
    eprintln!(
        "training rows {} ({} events), validation rows {} ({} events)",
        train_set.len(),
        train_set.n_events(),
        val.len(),
        val.n_events()
    );
    let out = run_external(&train_set, &val, &corrections, &learners, a.seed)?;
    for entry in &out.log {
        eprintln!("{}", entry.message);
    }
    create_dir(&a.out)?;
    let path = a.out.join("results.csv");
    write_results(&path, &out.rows)?;
    eprintln!("{} rows written to {}", out.rows.len(), path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SolveDelta(a) => solve_delta(a),
        Command::Generate(a) => generate(a),
        Command::Correct(a) => correct(a),
        Command::TrainEval(a) => train_eval(a),
        Command::Simulate(a) => simulate(a),
        Command::Aggregate(a) => aggregate_cmd(a),
        Command::Curves(a) => curves(a),
        Command::Ingest(a) => ingest(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
