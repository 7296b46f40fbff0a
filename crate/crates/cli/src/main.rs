mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "sdtdl", version, about = "Structured discriminative tensor dictionary learning for domain adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Dataset paths shared by `fit` and `baseline`.
#[derive(Args)]
struct DataArgs {
    /// key=value run configuration; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Source samples (tensor file, sample mode last)
    #[arg(long)]
    source: Option<String>,
    /// Source labels, one 1-based class id per line
    #[arg(long)]
    source_labels: Option<String>,
    /// Target samples (tensor file)
    #[arg(long)]
    target: Option<String>,
    /// Target ground truth, used only for reporting accuracy
    #[arg(long)]
    truth: Option<String>,
}

#[derive(Args)]
struct HyperArgs {
    /// object, digit or custom
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    /// Per-mode dictionary ranks, e.g. 6,6,28
    #[arg(long)]
    ranks: Option<String>,
    /// Outer iterations
    #[arg(long)]
    max_iters: Option<String>,
    /// HOOI sweeps per dictionary update
    #[arg(long)]
    inner_sweeps: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    /// cross or same-domain
    #[arg(long)]
    pairing: Option<String>,
    /// phi or exact
    #[arg(long)]
    class_rule: Option<String>,
    /// Recorded only; fitting is deterministic
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn the dictionary, label the target set and write model, predictions and history
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        hyper: HyperArgs,
        /// Output directory
        #[arg(long)]
        out: Option<String>,
    },
    /// Label a target set with a saved model
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Prediction file to write
        #[arg(long, default_value = "predictions.txt")]
        out: PathBuf,
    },
    /// Score a prediction file against ground truth
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Generate a synthetic source/target benchmark
    Synth {
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value = "8,8")]
        dims: String,
        #[arg(long, default_value = "3,3")]
        ranks: String,
        #[arg(long, default_value_t = 30)]
        source_per_class: usize,
        #[arg(long, default_value_t = 30)]
        target_per_class: usize,
        /// Additive noise standard deviation
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        /// Rotation angle in radians between source and target dictionaries
        #[arg(long, default_value_t = 0.5)]
        shift: f64,
        /// Minimum class mean distance in within-class standard deviations
        #[arg(long, default_value_t = 5.0)]
        separation: f64,
        #[arg(long, default_value_t = 2.0)]
        domain_scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tucker-decompose a tensor by HOOI
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        ranks: String,
        #[arg(long, default_value_t = sdtdl::hooi::DEFAULT_MAX_SWEEPS)]
        max_sweeps: usize,
        #[arg(long, default_value_t = sdtdl::hooi::DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy of nearest source class centroid without adaptation
    Baseline {
        #[command(flatten)]
        data: DataArgs,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Core(sdtdl::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use sdtdl::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Core(e) => match e {
                E::Format(_) => 3,
                E::NonFinite | E::NotOrthonormal(_) | E::NotSymmetric(_) | E::EigenRank { .. } | E::EigenFailure => 4,
                _ => 2,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Io(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<sdtdl::Error> for CliError {
    fn from(e: sdtdl::Error) -> Self {
        CliError::Core(e)
    }
}

fn settings(data: &DataArgs) -> Result<config::Settings, CliError> {
    let mut s = match &data.config {
        Some(path) => config::Settings::from_file(path)?,
        None => config::Settings::default(),
    };
    s.set_flag("source", data.source.clone());
    s.set_flag("source_labels", data.source_labels.clone());
    s.set_flag("target", data.target.clone());
    s.set_flag("truth", data.truth.clone());
    Ok(s)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit { data, hyper, out } => {
            let mut s = settings(&data)?;
            for (key, value) in [
                ("preset", hyper.preset),
                ("theta", hyper.theta),
                ("lambda", hyper.lambda),
                ("gamma", hyper.gamma),
                ("delta", hyper.delta),
                ("ranks", hyper.ranks),
                ("max_iters", hyper.max_iters),
                ("inner_sweeps", hyper.inner_sweeps),
                ("tol", hyper.tol),
                ("pairing", hyper.pairing),
                ("class_rule", hyper.class_rule),
                ("seed", hyper.seed),
                ("out", out),
            ] {
                s.set_flag(key, value);
            }
            commands::fit(&s)
        }
        Command::Predict { model, target, out } => commands::predict(&model, &target, &out),
        Command::Eval { predictions, truth } => commands::eval(&predictions, &truth),
        Command::Synth {
            classes,
            dims,
            ranks,
            source_per_class,
            target_per_class,
            noise,
            shift,
            separation,
            domain_scale,
            seed,
            out,
        } => {
            let spec = sdtdl::synthetic::SyntheticSpec {
                class_count: classes,
                dims: config::parse_list(&dims).map_err(|e| CliError::Config(format!("--dims: {e}")))?,
                ranks: config::parse_list(&ranks).map_err(|e| CliError::Config(format!("--ranks: {e}")))?,
                source_per_class,
                target_per_class,
                noise,
                shift,
                separation,
                domain_scale,
                seed,
            };
            commands::synth(&spec, &out)
        }
        Command::Decompose { input, ranks, max_sweeps, tol, out } => {
            let ranks = config::parse_list(&ranks).map_err(|e| CliError::Config(format!("--ranks: {e}")))?;
            commands::decompose(&input, &ranks, max_sweeps, tol, &out)
        }
        Command::Baseline { data } => commands::baseline(&settings(&data)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
