use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nodeharvest::data::{load_csv, load_csv_with_schema, ColumnHint, CsvOptions, Dataset};
use nodeharvest::estimator::fit_detailed;
use nodeharvest::eval::{evaluate, EvalConfig, EvalReport, Metric};
use nodeharvest::plot::{node_plot, render_svg};
use nodeharvest::qp::QpDump;
use nodeharvest::synth::sine_sample;
use nodeharvest::{FitConfig, HarvestModel, Task};

/// Sparse rule ensembles fitted by constrained least squares.
#[derive(Parser, Debug)]
#[command(name = "nodeharvest", version, about)]
struct Cli {
    /// Seed for node generation, splits and synthetic data.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Cell value read as missing (empty cells always are).
    #[arg(long, global = true, default_value = "NA")]
    na_string: String,
    /// Suppress informational output.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model and write it as JSON.
    Fit(FitCmd),
    /// Predict every row of a CSV file.
    Predict(PredictCmd),
    /// List the nodes a row falls into, with weights and means.
    Explain(ExplainCmd),
    /// Repeated half-split evaluation.
    Evaluate(EvaluateCmd),
    /// Export a node diagram as JSON or SVG.
    Plot(PlotCmd),
    /// Generate the sine-product dataset.
    SynthSine(SynthCmd),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum TaskArg {
    Regression,
    Classification,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Name of the response column.
    #[arg(long)]
    target: String,
    /// Read this column as categorical even if it looks numeric (repeatable).
    #[arg(long = "categorical", value_name = "COLUMN")]
    categorical: Vec<String>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Number of nodes in the initial set.
    #[arg(long, default_value_t = 1000)]
    q: usize,
    #[arg(long, default_value_t = 2)]
    max_interaction: usize,
    #[arg(long, default_value_t = 5)]
    min_node_size: usize,
    /// Variables tried per split; default ceil(p/3).
    #[arg(long)]
    mtry: Option<usize>,
    /// Upper bound on the sum of weights (at least 1).
    #[arg(long)]
    lambda: Option<f64>,
    /// Ridge penalty on the standardized response.
    #[arg(long, default_value_t = 0.001)]
    nu: f64,
    #[arg(long, value_enum, default_value_t = TaskArg::Regression)]
    task: TaskArg,
}

impl ModelArgs {
    fn config(&self, seed: u64) -> FitConfig {
        FitConfig {
            q: self.q,
            max_interaction: self.max_interaction,
            min_node_size: self.min_node_size,
            mtry: self.mtry,
            lambda: self.lambda,
            nu: self.nu,
            seed,
            task: match self.task {
                TaskArg::Regression => Task::Regression,
                TaskArg::Classification => Task::BinaryClassification,
            },
            ..FitConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct FitCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Where to write the model.
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Also write the reduced quadratic program and its solution.
    #[arg(long, value_name = "FILE")]
    dump_qp: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictCmd {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Probability cutoff for class labels.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args, Debug)]
struct ExplainCmd {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Zero-based row of the data file.
    #[arg(long, default_value_t = 0)]
    row: usize,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct EvaluateCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 10)]
    splits: usize,
    /// Add noise with this multiple of Var(y) to training responses.
    #[arg(long, default_value_t = 0.0)]
    noise_factor: f64,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the JSON report instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum PlotFormat {
    Json,
    Svg,
}

#[derive(Args, Debug)]
struct PlotCmd {
    #[arg(long)]
    model: PathBuf,
    /// Training data; needed for subset edges and for --row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Zero-based row of --data to highlight.
    #[arg(long)]
    row: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = PlotFormat::Svg)]
    format: PlotFormat,
}

#[derive(Args, Debug)]
struct SynthCmd {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn csv_options(cli: &Cli, data: &DataArgs) -> CsvOptions {
    CsvOptions {
        na_string: cli.na_string.clone(),
        hints: data.categorical.iter().map(|c| (c.clone(), ColumnHint::Categorical)).collect(),
    }
}

fn load_training(cli: &Cli, data: &DataArgs) -> Result<Dataset> {
    load_csv(&data.data, &data.target, &csv_options(cli, data))
        .with_context(|| format!("reading {}", data.data.display()))
}

/// Features for a fitted model; the response column is read when present.
fn load_for_model(cli: &Cli, model: &HarvestModel, path: &Path) -> Result<Dataset> {
    load_csv_with_schema(path, &model.schema, model.response_name.as_deref(), &cli.na_string)
        .with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> Result<HarvestModel> {
    HarvestModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))
}

fn cmd_fit(cli: &Cli, cmd: &FitCmd) -> Result<()> {
    let ds = load_training(cli, &cmd.data)?;
    let out = fit_detailed(&ds, &cmd.model.config(cli.seed))?;
    let model = &out.model;
    model.save(&cmd.out).with_context(|| format!("writing {}", cmd.out.display()))?;
    if let Some(path) = &cmd.dump_qp {
        match &out.qp.problem {
            Some(problem) => write_json(path, &serde_json::to_string_pretty(&QpDump::new(problem, out.qp.solution.as_ref()))?)?,
            None => bail!("no quadratic program was solved (root-only fit), nothing to dump"),
        }
    }
    if !cli.quiet {
        let d = &model.diagnostics;
        println!("rows {}, features {}, nodes {} from {} trees", d.n, d.p, model.q(), d.trees_grown);
        println!("reduced dimension {}, solver {:?} after {} iterations", d.nullspace_dim, d.status, d.iterations);
        println!("selected nodes {}, loss {:.6}, max KKT residual {:.1e}", d.nonzero_nodes, d.loss, d.kkt.max_violation());
        if let Some(w) = &d.warning {
            eprintln!("warning: {w}");
        }
        println!("model written to {}", cmd.out.display());
    }
    Ok(())
}

fn cmd_predict(cli: &Cli, cmd: &PredictCmd) -> Result<()> {
    let model = load_model(&cmd.model)?;
    let ds = load_for_model(cli, &model, &cmd.data)?;
    let mut w = csv::Writer::from_writer(output(cmd.out.as_deref())?);
    match model.task() {
        Task::Regression => {
            w.write_record(["prediction"])?;
            for i in 0..ds.n() {
                w.write_record([model.predict(&ds.row(i))?.to_string()])?;
            }
        }
        Task::BinaryClassification => {
            w.write_record(["probability", "label"])?;
            for i in 0..ds.n() {
                let c = model.predict_class(&ds.row(i), cmd.threshold)?;
                w.write_record([c.probability.to_string(), c.label.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_explain(cli: &Cli, cmd: &ExplainCmd) -> Result<()> {
    let model = load_model(&cmd.model)?;
    let ds = load_for_model(cli, &model, &cmd.data)?;
    if cmd.row >= ds.n() {
        bail!("row {} out of range, data has {} rows", cmd.row, ds.n());
    }
    let ex = model.explain(&ds.row(cmd.row))?;
    if cmd.json {
        println!("{}", serde_json::to_string_pretty(&ex)?);
        return Ok(());
    }
    println!("{:>8}  {:>10}  {:>6}  rule", "weight", "mean", "size");
    for e in &ex.entries {
        println!("{:>8.4}  {:>10.4}  {:>6}  {}", e.weight, e.mean, e.size, e.rule);
    }
    println!("prediction {}", ex.prediction);
    Ok(())
}

fn print_report(r: &EvalReport) {
    let metric = match r.metric {
        Metric::UnexplainedVariance => "unexplained variance",
        Metric::Misclassification => "misclassification",
    };
    println!("{:>5}  {:>20}  {:>6}  {:>8}", "split", metric, "nodes", "seconds");
    for s in &r.splits {
        println!("{:>5}  {:>20.4}  {:>6}  {:>8.2}", s.split, s.error, s.nonzero_nodes, s.seconds);
    }
    println!("{:>5}  {:>20.4}  {:>6.1}  {:>8.2}", "mean", r.mean_error, r.mean_nonzero_nodes, r.seconds);
}

fn cmd_evaluate(cli: &Cli, cmd: &EvaluateCmd) -> Result<()> {
    let ds = load_training(cli, &cmd.data)?;
    let cfg = EvalConfig {
        splits: cmd.splits,
        seed: cli.seed,
        noise_factor: cmd.noise_factor,
        fit: cmd.model.config(cli.seed),
    };
    let report = evaluate(&ds, &cfg)?;
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(path) = &cmd.out {
        write_json(path, &text)?;
    }
    if cmd.json {
        println!("{text}");
    } else if !cli.quiet {
        print_report(&report);
    }
    Ok(())
}

fn cmd_plot(cli: &Cli, cmd: &PlotCmd) -> Result<()> {
    let model = load_model(&cmd.model)?;
    let train = match &cmd.data {
        Some(p) => Some(load_for_model(cli, &model, p)?),
        None if cmd.row.is_some() => bail!("--row needs --data"),
        None => None,
    };
    let query = match (cmd.row, &train) {
        (Some(r), Some(ds)) if r < ds.n() => Some(ds.row(r)),
        (Some(r), Some(ds)) => bail!("row {r} out of range, data has {} rows", ds.n()),
        _ => None,
    };
    let plot = node_plot(&model, train.as_ref(), query.as_deref())?;
    let text = match cmd.format {
        PlotFormat::Json => serde_json::to_string_pretty(&plot)? + "\n",
        PlotFormat::Svg => render_svg(&plot),
    };
    std::fs::write(&cmd.out, text).with_context(|| format!("writing {}", cmd.out.display()))?;
    if !cli.quiet {
        eprintln!("{} nodes, {} edges written to {}", plot.nodes.len(), plot.edges.len(), cmd.out.display());
    }
    Ok(())
}

fn cmd_synth(cli: &Cli, cmd: &SynthCmd) -> Result<()> {
    let sample = sine_sample(cmd.n, cli.seed)?;
    sample.write_csv(output(cmd.out.as_deref())?)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(c) => cmd_fit(cli, c),
        Command::Predict(c) => cmd_predict(cli, c),
        Command::Explain(c) => cmd_explain(cli, c),
        Command::Evaluate(c) => cmd_evaluate(cli, c),
        Command::Plot(c) => cmd_plot(cli, c),
        Command::SynthSine(c) => cmd_synth(cli, c),
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
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = e.chain().any(|c| c.downcast_ref::<nodeharvest::Error>().is_some_and(|e| e.is_numerical()));
            ExitCode::from(if numerical { 2 } else { 1 })
        }
    }
}
