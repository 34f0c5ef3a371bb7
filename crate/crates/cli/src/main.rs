//! `shiftbench` command-line entry point.
//!
//! Every subcommand reads an optional TOML run configuration and applies the
//! flags on top of it. Exit status is 0 on success, 1 when the configuration
//! or command line is invalid and 2 when a stage fails at run time.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};
use shiftbench_core::eval::EvalReport;
use shiftbench_core::metrics::ShiftType;
use shiftbench_core::pipeline::{run_report, Pipeline, RunConfig, Stage};
use shiftbench_core::Error;

const OUTPUT_ENV: &str = "SHIFTBENCH_OUT";

#[derive(Parser, Debug)]
#[command(
    name = "shiftbench",
    version,
    about = "Structural distribution-shift benchmarks for node classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute the structural score of every node for each shift type.
    Metrics(RunArgs),
    /// Generate ID/OOD splits for each shift type and seed.
    Split(RunArgs),
    /// Summarize degree, distance and class balance of each split.
    Analyze(RunArgs),
    /// Train the propagation baseline on each split and evaluate it.
    TrainEval(RunArgs),
    /// Rebuild runs.csv and summary.csv from existing evaluation reports.
    Report(RunArgs),
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// TOML run configuration; flags override its values.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory [default: $SHIFTBENCH_OUT, else ./runs].
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Dataset name used in reports.
    #[arg(long, help_heading = "Dataset")]
    name: Option<String>,
    /// Edge list: one "u v" pair per line, '#' comments.
    #[arg(long, help_heading = "Dataset")]
    edges: Option<PathBuf>,
    /// Features CSV: node_id followed by the feature values.
    #[arg(long, help_heading = "Dataset")]
    features: Option<PathBuf>,
    /// Labels CSV: node_id,class.
    #[arg(long, help_heading = "Dataset")]
    labels: Option<PathBuf>,
    /// Read edge-list lines as arcs (symmetrized on load).
    #[arg(long, help_heading = "Dataset")]
    directed: bool,
    /// Restrict the graph to its largest connected component.
    #[arg(long, help_heading = "Dataset")]
    lcc: bool,

    /// Shift types, comma separated: popularity, locality, density.
    #[arg(long, value_delimiter = ',', help_heading = "Split")]
    shift: Vec<ShiftType>,
    /// Seeds, comma separated.
    #[arg(long, value_delimiter = ',', help_heading = "Split")]
    seeds: Vec<u64>,
    /// Fraction of nodes in the in-distribution part.
    #[arg(long, help_heading = "Split")]
    id_fraction: Option<f64>,
    #[arg(long, help_heading = "Split")]
    train_fraction: Option<f64>,
    #[arg(long, help_heading = "Split")]
    valid_in_fraction: Option<f64>,
    #[arg(long, help_heading = "Split")]
    test_in_fraction: Option<f64>,
    #[arg(long, help_heading = "Split")]
    valid_out_fraction: Option<f64>,
    #[arg(long, help_heading = "Split")]
    test_out_fraction: Option<f64>,

    /// PageRank restart probability.
    #[arg(long, help_heading = "Metrics")]
    alpha: Option<f64>,
    /// PageRank L1 convergence tolerance.
    #[arg(long, help_heading = "Metrics")]
    tolerance: Option<f64>,
    /// PageRank iteration cap.
    #[arg(long, help_heading = "Metrics")]
    max_iterations: Option<usize>,

    /// Propagation steps.
    #[arg(long, help_heading = "Model")]
    k: Option<usize>,
    #[arg(long, help_heading = "Model")]
    learning_rate: Option<f64>,
    #[arg(long, help_heading = "Model")]
    weight_decay: Option<f64>,
    #[arg(long, help_heading = "Model")]
    max_epochs: Option<usize>,
    /// Epochs without validation improvement before stopping.
    #[arg(long, help_heading = "Model")]
    patience: Option<usize>,

    /// Pair budget above which distances are sampled.
    #[arg(long, help_heading = "Analysis")]
    max_pairs: Option<u64>,
    #[arg(long, help_heading = "Analysis")]
    analysis_seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Core(Error::InvalidConfig(_)) => 1,
            CliError::Core(_) => 2,
        }
    }
}

fn set(root: &mut Map<String, Value>, path: &[&str], value: Value) {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = root;
    for key in parents {
        node = node
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Map::new()))
            .as_object_mut()
            .expect("config section is a table");
    }
    node.insert(last.to_string(), value);
}

fn resolve(base: &Path, value: &mut Value) {
    if let Some(s) = value.as_str() {
        let p = Path::new(s);
        if p.is_relative() {
            *value = Value::String(base.join(p).to_string_lossy().into_owned());
        }
    }
}

fn load_toml(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let table: toml::Table = toml::from_str(&text)
        .map_err(|e| CliError::Validation(format!("invalid config {}: {e}", path.display())))?;
    let Value::Object(mut map) = serde_json::to_value(table).expect("TOML converts to JSON") else {
        unreachable!("a TOML table is an object");
    };
    // Paths in a config file are relative to the file itself.
    let base = path.parent().unwrap_or(Path::new("."));
    if let Some(Value::Object(dataset)) = map.get_mut("dataset") {
        for key in ["edges", "features", "labels"] {
            if let Some(v) = dataset.get_mut(key) {
                resolve(base, v);
            }
        }
    }
    if let Some(v) = map.get_mut("output_dir") {
        resolve(base, v);
    }
    Ok(map)
}

impl RunArgs {
    fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut map = match &self.config {
            Some(path) => load_toml(path)?,
            None => Map::new(),
        };
        let mut put = |path: &[&str], value: Option<Value>| {
            if let Some(v) = value {
                set(&mut map, path, v);
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| json!(p));
        put(&["dataset", "name"], self.name.as_ref().map(|v| json!(v)));
        put(&["dataset", "edges"], path(&self.edges));
        put(&["dataset", "features"], path(&self.features));
        put(&["dataset", "labels"], path(&self.labels));
        put(
            &["dataset", "directed"],
            self.directed.then_some(json!(true)),
        );
        put(&["dataset", "lcc"], self.lcc.then_some(json!(true)));
        put(
            &["shifts"],
            (!self.shift.is_empty()).then(|| json!(self.shift)),
        );
        put(
            &["seeds"],
            (!self.seeds.is_empty()).then(|| json!(self.seeds)),
        );
        put(
            &["split", "id_fraction"],
            self.id_fraction.map(|v| json!(v)),
        );
        put(&["split", "train"], self.train_fraction.map(|v| json!(v)));
        put(
            &["split", "valid_in"],
            self.valid_in_fraction.map(|v| json!(v)),
        );
        put(
            &["split", "test_in"],
            self.test_in_fraction.map(|v| json!(v)),
        );
        put(
            &["split", "valid_out"],
            self.valid_out_fraction.map(|v| json!(v)),
        );
        put(
            &["split", "test_out"],
            self.test_out_fraction.map(|v| json!(v)),
        );
        put(&["pagerank", "alpha"], self.alpha.map(|v| json!(v)));
        put(&["pagerank", "tolerance"], self.tolerance.map(|v| json!(v)));
        put(
            &["pagerank", "max_iterations"],
            self.max_iterations.map(|v| json!(v)),
        );
        put(&["propagation", "k"], self.k.map(|v| json!(v)));
        put(
            &["train", "learning_rate"],
            self.learning_rate.map(|v| json!(v)),
        );
        put(
            &["train", "weight_decay"],
            self.weight_decay.map(|v| json!(v)),
        );
        put(&["train", "max_epochs"], self.max_epochs.map(|v| json!(v)));
        put(&["train", "patience"], self.patience.map(|v| json!(v)));
        put(&["analysis", "max_pairs"], self.max_pairs.map(|v| json!(v)));
        put(&["analysis", "seed"], self.analysis_seed.map(|v| json!(v)));
        put(&["output_dir"], path(&self.out));
        if !map.contains_key("output_dir") {
            if let Some(dir) = std::env::var_os(OUTPUT_ENV).filter(|d| !d.is_empty()) {
                map.insert("output_dir".into(), json!(PathBuf::from(dir)));
            }
        }
        if !map.contains_key("dataset") {
            return Err(CliError::Validation(
                "no dataset given: pass --edges or a config file with a [dataset] table".into(),
            ));
        }
        serde_json::from_value(Value::Object(map))
            .map_err(|e| CliError::Validation(format!("invalid run configuration: {e}")))
    }
}

fn print_eval(reports: &[EvalReport]) {
    println!("shift\tseed\tacc_id\tacc_ood\tdrop%\tauroc");
    for r in reports {
        println!(
            "{}\t{}\t{:.4}\t{:.4}\t{}\t{:.4}",
            r.shift_type,
            r.seed,
            r.accuracy_id,
            r.accuracy_ood,
            r.accuracy_drop_percent
                .map_or_else(|| "-".into(), |v| format!("{v:.2}")),
            r.auroc
        );
    }
}

fn run(command: Command) -> Result<(), CliError> {
    let (args, stage) = match &command {
        Command::Metrics(a) => (a, Stage::Metrics),
        Command::Split(a) => (a, Stage::Split),
        Command::Analyze(a) => (a, Stage::Analyze),
        Command::TrainEval(a) => (a, Stage::TrainEval),
        Command::Report(a) => (a, Stage::Report),
    };
    let level = match args.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    if let Some(threads) = args.threads {
        if threads == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let config = args.run_config()?;
    let out = config.output_dir.clone();

    if stage == Stage::Report {
        let reports = run_report(&config)?;
        print_eval(&reports);
        println!("wrote {}", out.join("summary.csv").display());
        return Ok(());
    }

    let pipeline = Pipeline::open(config, stage)?;
    log::info!(
        "{} nodes, {} edges, config {}",
        pipeline.data.graph.num_nodes(),
        pipeline.data.graph.num_edges(),
        pipeline.config_hash
    );
    match stage {
        Stage::Metrics => {
            for sigma in pipeline.run_metrics()? {
                println!(
                    "wrote {} ({} nodes)",
                    out.join(format!("metrics/{}.csv", sigma.shift_type))
                        .display(),
                    sigma.len()
                );
            }
        }
        Stage::Split => {
            for split in pipeline.run_split()? {
                let s = split.sizes();
                println!(
                    "{} seed {}: train {} valid_in {} test_in {} valid_out {} test_out {}",
                    split.metadata.shift_type,
                    split.metadata.config.seed,
                    s[0],
                    s[1],
                    s[2],
                    s[3],
                    s[4]
                );
            }
        }
        Stage::Analyze => {
            let reports = pipeline.run_analyze()?;
            let per_shift = pipeline.config.seeds.len();
            for (i, r) in reports.iter().enumerate() {
                let fmt = |v: Option<f64>| v.map_or_else(|| "-".into(), |v| format!("{v:.3}"));
                println!(
                    "{} seed {}: mean distance id {} ood {}",
                    r.shift_type,
                    pipeline.config.seeds[i % per_shift],
                    fmt(r.mean_distance_id),
                    fmt(r.mean_distance_ood)
                );
            }
        }
        Stage::TrainEval => {
            let reports = pipeline.run_train_eval()?;
            print_eval(&reports);
            println!("wrote {}", out.join("summary.csv").display());
        }
        Stage::Report => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
