use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fairadj::bench::{
    check_targets, emit_tradeoff, format_table, read_report_csv, run_experiment, targets_for, write_report,
    write_tradeoff, ExperimentSpec, LambdaChoice, Method, SearchSpec,
};
use fairadj::data::{load_csv, Dataset, Manifest, Schema, Task, DATA_DIR_ENV};
use fairadj::fairness::PenaltyKind;
use fairadj::learner::{ModelFile, Role};
use fairadj::loss::sigmoid_scalar;
use fairadj::metrics::{evaluate, predict_label};
use fairadj::theory;
use fairadj::train::{fit_adjuster, fit_baseline, fit_joint, predict_adjusted, AdjustInput, LearnerKind, TrainConfig};
use fairadj::{Error, Result};

#[derive(Parser)]
#[command(name = "fairadj", version, about = "Fairness adjuster, adversarial debiasing and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the unconstrained baseline model.
    TrainBaseline(TrainArgs),
    /// Train a model with the fairness penalty in its objective.
    TrainJoint(TrainArgs),
    /// Train an offset model on top of a saved baseline, without labels.
    TrainAdjuster {
        #[command(flatten)]
        train: TrainArgs,
        /// Baseline model file.
        #[arg(long)]
        baseline: PathBuf,
    },
    /// Score a dataset with a saved model, optionally plus an adjuster.
    Predict {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        adjuster: Option<PathBuf>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validated experiments.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Numerical checks of the identities and bounds on synthetic data.
    VerifyTheory {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Run baseline, joint and adjuster over seeds x folds and write reports.
    Run(BenchArgs),
    /// Fold-averaged (accuracy, disparate impact) points from a report CSV.
    Tradeoff {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Dataset name from the manifest in the data directory.
    #[arg(long, conflicts_with = "csv")]
    dataset: Option<String>,
    /// Directory holding datasets.toml.
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    /// CSV file with a header row; needs --label and --protected.
    #[arg(long, requires_all = ["label", "protected"])]
    csv: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    protected: Option<String>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
    favorable: u8,
    #[arg(long, default_value = "clf")]
    task: Task,
    /// Columns to one-hot encode (comma separated).
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
    /// Columns to ignore (comma separated).
    #[arg(long, value_delimiter = ',')]
    drop: Vec<String>,
    /// Keep the protected column as a model feature.
    #[arg(long)]
    protected_is_feature: bool,
}

impl DataArgs {
    fn manifest(&self) -> Result<Manifest> {
        match &self.data_dir {
            Some(dir) => Manifest::load(dir),
            None => Manifest::load_default(),
        }
    }

    fn load(&self) -> Result<Dataset> {
        match (&self.dataset, &self.csv) {
            (Some(name), _) => self.manifest()?.load_dataset(name),
            (None, Some(path)) => {
                let mut schema = Schema::new(
                    self.label.as_deref().unwrap_or_default(),
                    self.protected.as_deref().unwrap_or_default(),
                    self.favorable,
                    self.task,
                );
                schema.categorical = self.categorical.clone();
                schema.drop = self.drop.clone();
                schema.protected_is_feature = self.protected_is_feature;
                load_csv(path, &schema)
            }
            (None, None) => Err(Error::InvalidArgument("give --dataset NAME or --csv PATH".into())),
        }
    }
}

#[derive(Args, Clone)]
struct LearnerArgs {
    #[arg(long, default_value = "boosted")]
    learner: LearnerKind,
    #[arg(long, default_value = "adversarial")]
    penalty: PenaltyKind,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Multiply the rounds by N and divide the learning rate by N.
    #[arg(long, default_value_t = 1)]
    stretch: usize,
    #[arg(long)]
    adversary_step: Option<f64>,
    #[arg(long)]
    adversary_steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl LearnerArgs {
    fn config(&self, task: Task, lambda: f64) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::new(task).with_lambda(lambda);
        cfg.learner = self.learner;
        cfg.penalty = self.penalty;
        cfg.seed = self.seed;
        if let Some(r) = self.rounds {
            cfg.boost.rounds = r;
        }
        if let Some(d) = self.max_depth {
            cfg.boost.max_depth = d;
        }
        if let Some(eta) = self.learning_rate {
            cfg.boost.learning_rate = eta;
        }
        cfg.boost = cfg.boost.stretched(self.stretch);
        if let Some(s) = self.adversary_step {
            cfg.adversary_step = s;
        }
        if let Some(s) = self.adversary_steps {
            cfg.adversary_steps = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    learner: LearnerArgs,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    dataset: String,
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    /// Number of seeds, 0..N.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Use 50 seeds.
    #[arg(long, conflicts_with = "seeds")]
    full: bool,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, value_delimiter = ',', default_value = "baseline,joint,adjuster")]
    methods: Vec<Method>,
    /// Fixed lambda for both fairness methods.
    #[arg(long, conflicts_with = "lambda_search")]
    lambda: Option<f64>,
    /// Search lambda per method (the default when --lambda is absent).
    #[arg(long)]
    lambda_search: bool,
    #[command(flatten)]
    learner: LearnerArgs,
    /// Report directory.
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    /// Compare against the dataset's replication targets; exit 2 on a miss.
    #[arg(long)]
    check: bool,
}

fn save_model(args: &TrainArgs, role: Role, ds: &Dataset, cfg: &TrainConfig, model: fairadj::learner::Model) -> Result<()> {
    let penalty = (role != Role::Baseline).then(|| cfg.penalty.to_string());
    let lambda = if role == Role::Baseline { 0.0 } else { cfg.lambda };
    ModelFile::new(role, lambda, penalty, ds.feature_names().to_vec(), model).save(&args.out)?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn load_model(path: &Path, ds: &Dataset) -> Result<ModelFile> {
    let file = ModelFile::load(path)?;
    if file.feature_names != ds.feature_names() {
        return Err(Error::Schema(format!(
            "{} was trained on different feature columns than this dataset",
            path.display()
        )));
    }
    Ok(file)
}

fn report_fit(ds: &Dataset, scores: &[f64]) -> Result<()> {
    if ds.task() == Task::Classification {
        let e = evaluate(scores, ds)?;
        let di = e.disparate_impact.map_or("undefined".to_string(), |d| format!("{d:.4}"));
        eprintln!("train accuracy {:.4}  disparate impact {di}", e.accuracy);
    }
    Ok(())
}

fn train(args: &TrainArgs, role: Role, baseline: Option<&Path>) -> Result<()> {
    let ds = args.data.load()?;
    let cfg = args.learner.config(ds.task(), args.lambda)?;
    match role {
        Role::Baseline => {
            let m = fit_baseline(&ds, &cfg)?;
            report_fit(&ds, &m.predict(ds.features())?.values)?;
            save_model(args, role, &ds, &cfg, m)
        }
        Role::Joint => {
            let fit = fit_joint(&ds, &cfg)?;
            report_fit(&ds, &fit.model.predict(ds.features())?.values)?;
            if let Some(adv) = fit.adversary {
                eprintln!("adversary slope {:.6}", adv.a);
            }
            save_model(args, role, &ds, &cfg, fit.model)
        }
        Role::Adjuster => {
            let path = baseline.ok_or_else(|| Error::InvalidArgument("--baseline is required".into()))?;
            let base = load_model(path, &ds)?.model;
            let input = if cfg.penalty.needs_labels() {
                AdjustInput::labeled(&ds)
            } else {
                AdjustInput::unlabeled(&ds)
            };
            let fit = fit_adjuster(&base, input, &cfg)?;
            report_fit(&ds, &predict_adjusted(&base, &fit.model, ds.features())?.values)?;
            save_model(args, role, &ds, &cfg, fit.model)
        }
    }
}

fn predict(data: &DataArgs, model: &Path, adjuster: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let ds = data.load()?;
    let base = load_model(model, &ds)?;
    let scores = match adjuster {
        Some(p) => predict_adjusted(&base.model, &load_model(p, &ds)?.model, ds.features())?,
        None => base.model.predict(ds.features())?,
    };
    let sink: Box<dyn std::io::Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        })?),
        None => Box::new(std::io::stdout()),
    };
    let csv_err = |e: csv::Error| Error::Csv {
        path: out.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(sink);
    let clf = ds.task() == Task::Classification;
    if clf {
        w.write_record(["row", "score", "probability", "prediction"]).map_err(csv_err)?;
    } else {
        w.write_record(["row", "score"]).map_err(csv_err)?;
    }
    for (i, s) in scores.values.iter().enumerate() {
        let mut rec = vec![i.to_string(), s.to_string()];
        if clf {
            rec.push(sigmoid_scalar(*s).to_string());
            rec.push(predict_label(*s).to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: PathBuf::from("<predictions>"),
        source: e,
    })?;
    if clf {
        report_fit(&ds, &scores.values)?;
    }
    Ok(())
}

fn bench_run(args: &BenchArgs) -> Result<bool> {
    let manifest = match &args.data_dir {
        Some(dir) => Manifest::load(dir)?,
        None => Manifest::load_default()?,
    };
    let task = manifest.entry(&args.dataset)?.schema.task;
    let cfg = args.learner.config(task, 0.0)?;
    let mut spec = ExperimentSpec::desk(&args.dataset, cfg);
    spec.seeds = (0..if args.full { 50 } else { args.seeds }).collect();
    spec.k = args.folds;
    spec.methods = args.methods.clone();
    spec.lambda = match args.lambda {
        Some(l) if !args.lambda_search => LambdaChoice::Fixed(l),
        _ => LambdaChoice::Search(SearchSpec::new(cfg.penalty)),
    };
    let report = run_experiment(&spec, &manifest)?;
    write_report(&report, &args.out)?;
    for s in &report.searches {
        if let Some(w) = &s.warning {
            eprintln!("warning: {} search: {w}", s.method);
        }
    }
    print!("{}", format_table(&report));
    println!("reports in {}", args.out.display());
    if !args.check {
        return Ok(true);
    }
    let targets = targets_for(&args.dataset)
        .ok_or_else(|| Error::InvalidArgument(format!("no replication targets for '{}'", args.dataset)))?;
    let checks = check_targets(&report, &targets);
    for c in &checks {
        println!("{} {} ({})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value);
    }
    Ok(checks.iter().all(|c| c.pass))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::TrainBaseline(a) => train(&a, Role::Baseline, None).map(|_| true),
        Command::TrainJoint(a) => train(&a, Role::Joint, None).map(|_| true),
        Command::TrainAdjuster { train: a, baseline } => train(&a, Role::Adjuster, Some(&baseline)).map(|_| true),
        Command::Predict {
            data,
            model,
            adjuster,
            out,
        } => predict(&data, &model, adjuster.as_deref(), out.as_deref()).map(|_| true),
        Command::Bench(BenchCommand::Run(a)) => bench_run(&a),
        Command::Bench(BenchCommand::Tradeoff { input, out }) => {
            let points = emit_tradeoff(&read_report_csv(&input)?);
            write_tradeoff(&points, &out)?;
            println!("{} points written to {}", points.len(), out.display());
            Ok(true)
        }
        Command::VerifyTheory { seed } => {
            let rows = theory::run_all(seed)?;
            print!("{}", theory::format_rows(&rows));
            Ok(rows.iter().all(|r| r.pass || !r.hard))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
