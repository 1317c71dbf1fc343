use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fairsynth_core::classifiers::{train_tree, Classifier, DecisionTree, TreeConfig};
use fairsynth_core::discretize::{load_csv, DiscretizationConfig};
use fairsynth_core::estimation::{EmConfig, JointModel};
use fairsynth_core::freq::{Smoothing, SmoothingScope};
use fairsynth_core::metrics::{
    bootstrap_fairness, fidelity_report, BootstrapConfig, DiscriminatorConfig, FidelityOptions, Metric,
    ProtectedGroup,
};
use fairsynth_core::pipeline::{
    classifier_features, fit_method, read_report, render_text, run_experiment, write_report_csv, ExperimentConfig,
    Method,
};
use fairsynth_core::sampling::sample;
use fairsynth_core::schema::Schema;
use fairsynth_core::separation::{separate_columns, SeparationSpec};
use fairsynth_core::table::{holdout_split, DataTable};
use fairsynth_core::{seed, Error, Result};

/// Synthetic test data from overlapping datasets, and fairness audits on it.
///
/// Exit codes: 0 success, 1 usage or configuration error, 2 I/O, CSV or JSON
/// error, 3 numeric failure (undefined conditional or metric, non-finite value).
/// FAIRSYNTH_THREADS caps the worker pool.
#[derive(Parser)]
#[command(name = "fairsynth", version)]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discretize a raw CSV into a categorical table plus schema.json.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Discretization config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Receives data.csv and schema.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Holdout split, then column separation of the training part.
    Split {
        #[command(flatten)]
        data: SchemaInput,
        #[arg(long)]
        separation: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Receives train.csv, test.csv, internal.csv and external.csv.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fits a joint model on an internal/external pair. The overlap is the
    /// set of columns the two files share.
    Fit {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        internal: PathBuf,
        #[arg(long)]
        external: PathBuf,
        #[arg(long, value_parser = parse_method)]
        method: Method,
        #[command(flatten)]
        smoothing: SmoothingArgs,
        /// Latent components (latent_nb only).
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long, default_value_t = 500)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draws synthetic rows from a fitted model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fidelity of a synthetic table against a real one.
    Fidelity {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synthetic: PathBuf,
        /// Skip the random-forest discriminator.
        #[arg(long)]
        no_discriminator: bool,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 0.5)]
        kl_alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trains the decision tree under audit on internal features.
    Train {
        #[command(flatten)]
        data: SchemaInput,
        /// Features are the separation's internal attributes minus the label.
        #[arg(long, conflicts_with = "features", required_unless_present = "features")]
        separation: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
        #[arg(long, default_value_t = 12)]
        max_depth: usize,
        #[arg(long, default_value_t = 5)]
        min_samples_leaf: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bootstrap fairness metrics of a trained tree on a table.
    Fairness {
        #[command(flatten)]
        data: SchemaInput,
        #[arg(long)]
        classifier: PathBuf,
        /// Discretization config naming the favourable label and the
        /// privileged category of each protected attribute.
        #[arg(long)]
        discretization: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n_boot: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs a full experiment config and writes the report tree.
    Audit {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Prints the fidelity and fairness-difference tables.
        #[arg(long)]
        table: bool,
    },
    /// Re-renders a saved report.json.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Args)]
struct SchemaInput {
    /// schema.json written by `ingest`.
    #[arg(long)]
    schema: PathBuf,
    /// Categorical CSV over the schema.
    #[arg(long)]
    input: PathBuf,
}

impl SchemaInput {
    fn load(&self) -> Result<DataTable> {
        DataTable::read_csv_file(load_schema(&self.schema)?, &self.input)
    }
}

#[derive(Args)]
struct SmoothingArgs {
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = Scope::EmptySlices)]
    smoothing: Scope,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scope {
    Off,
    EmptySlices,
    AllCells,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    Method::parse(s).map_err(|e| e.to_string())
}

fn load_schema(path: &Path) -> Result<Arc<Schema>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(Arc::new(serde_json::from_str(&text)?))
}

fn write_pretty<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest { input, config, out_dir } => {
            let disc = DiscretizationConfig::from_file(&config)?;
            let (schema, table) = load_csv(&input, &disc)?;
            create_dir(&out_dir)?;
            write_pretty(&schema, Some(&out_dir.join("schema.json")))?;
            table.write_csv_file(&out_dir.join("data.csv"))?;
            println!("{} rows, {} attributes", table.n_rows(), schema.len());
        }
        Command::Split {
            data,
            separation,
            test_fraction,
            seed: s,
            out_dir,
        } => {
            let table = data.load()?;
            let spec = SeparationSpec::from_file(&separation)?;
            let (train, test) = holdout_split(&table, test_fraction, seed::derive(s, "holdout", 0))?;
            let (internal, external) = separate_columns(&train, &spec)?;
            create_dir(&out_dir)?;
            train.write_csv_file(&out_dir.join("train.csv"))?;
            test.write_csv_file(&out_dir.join("test.csv"))?;
            internal.write_csv_file(&out_dir.join("internal.csv"))?;
            external.write_csv_file(&out_dir.join("external.csv"))?;
        }
        Command::Fit {
            schema,
            internal,
            external,
            method,
            smoothing,
            k,
            restarts,
            max_iters,
            tol,
            seed: s,
            out,
        } => {
            let schema = load_schema(&schema)?;
            let internal = DataTable::read_csv_file(schema.clone(), &internal)?;
            let external = DataTable::read_csv_file(schema.clone(), &external)?;
            let overlap: Vec<String> = internal
                .attrs()
                .iter()
                .filter(|a| external.attrs().contains(a))
                .map(|&a| schema.name(a).to_string())
                .collect();
            let smoothing = Smoothing {
                alpha: smoothing.alpha,
                scope: match smoothing.smoothing {
                    Scope::Off => SmoothingScope::Off,
                    Scope::EmptySlices => SmoothingScope::EmptySlices,
                    Scope::AllCells => SmoothingScope::AllCells,
                },
            };
            let em = EmConfig {
                k,
                tol,
                max_iters,
                restarts,
                seed: seed::derive(s, "em", 0),
            };
            let model = fit_method(method, &internal, &external, &overlap, smoothing, &em)?;
            model.save(&out)?;
        }
        Command::Sample { model, n, seed: s, out } => {
            let model = JointModel::load(&model)?;
            sample(&model, n, s)?.write_csv_file(&out)?;
        }
        Command::Fidelity {
            schema,
            real,
            synthetic,
            no_discriminator,
            trials,
            kl_alpha,
            seed: s,
            out,
        } => {
            let schema = load_schema(&schema)?;
            let real = DataTable::read_csv_file(schema.clone(), &real)?;
            let synth = DataTable::read_csv_file(schema.clone(), &synthetic)?;
            let options = FidelityOptions {
                protected: schema.protected_indices().iter().map(|&a| schema.name(a).to_string()).collect(),
                label: schema.label().map(str::to_string),
                kl_alpha,
                discriminator: (!no_discriminator).then(|| DiscriminatorConfig {
                    trials,
                    seed: s,
                    ..DiscriminatorConfig::default()
                }),
            };
            write_pretty(&fidelity_report(&real, &synth, &options)?, out.as_deref())?;
        }
        Command::Train {
            data,
            separation,
            features,
            max_depth,
            min_samples_leaf,
            out,
        } => {
            let table = data.load()?;
            let schema = table.schema().clone();
            let label = schema
                .label()
                .ok_or_else(|| Error::Config("the schema has no label attribute".into()))?
                .to_string();
            let features = match separation {
                Some(p) => classifier_features(&schema, &SeparationSpec::from_file(&p)?.resolve(&schema)?)?,
                None => features,
            };
            if let Some(f) = features.iter().find(|f| schema.index_of(f).is_some_and(|a| schema.is_protected(a))) {
                return Err(Error::Config(format!("protected attribute `{f}` cannot be a classifier feature")));
            }
            let tree = train_tree(
                &table,
                &features,
                &label,
                &TreeConfig {
                    max_depth,
                    min_samples_leaf,
                },
            )?;
            tree.save(&out)?;
        }
        Command::Fairness {
            data,
            classifier,
            discretization,
            n_boot,
            seed: s,
            out,
        } => {
            let table = data.load()?;
            let tree = DecisionTree::load(&classifier)?;
            let disc = DiscretizationConfig::from_file(&discretization)?;
            let label = disc
                .label
                .ok_or_else(|| Error::Config("the discretization config names no label".into()))?;
            let groups: Vec<ProtectedGroup> = disc
                .protected
                .into_iter()
                .map(|p| ProtectedGroup {
                    attr: p.name,
                    privileged: p.privileged,
                })
                .collect();
            let preds = tree.predict(&table)?;
            let report = bootstrap_fairness(
                &table,
                &preds,
                &label.name,
                &label.positive,
                &groups,
                &Metric::ALL,
                &BootstrapConfig { n_boot, seed: s },
            )?;
            write_pretty(&report, out.as_deref())?;
        }
        Command::Audit {
            config,
            seed: s,
            output,
            table,
        } => {
            let mut c = ExperimentConfig::from_file(&config)?;
            if let Some(s) = s {
                c.seed = s;
            }
            if let Some(o) = output {
                c.output = std::env::current_dir().map_err(|e| Error::io(".", e))?.join(o);
            }
            let report = run_experiment(&c)?;
            log::info!("wrote {}", c.run_dir().display());
            if table {
                print!("{}", render_text(&report));
            }
            if let Some(failed) = report.methods.iter().find(|m| m.error.is_some()) {
                log::warn!("{} failed: {}", failed.method.name(), failed.error.as_deref().unwrap_or(""));
            }
        }
        Command::Report { input, format } => {
            let report = read_report(&input)?;
            match format {
                Format::Text => print!("{}", render_text(&report)),
                Format::Csv => write_report_csv(&report, std::io::stdout().lock())?,
                Format::Json => write_pretty(&report, None)?,
            }
        }
    }
    Ok(())
}

fn init_threads() -> std::result::Result<(), String> {
    let Ok(v) = std::env::var("FAIRSYNTH_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("FAIRSYNTH_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
