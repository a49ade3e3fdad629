//! `recourse`: synthetic shift data, belief estimation, robust recourse
//! generation, shift-replay evaluation and frontier sweeps.
//!
//! Every subcommand reads an optional TOML config (`--config`); `--seed` and
//! the per-command flags override it. Exit status is 0 on success, 1 for
//! usage or config errors, 2 when the run itself fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use recourse_core::estimation::{train_logistic, LabeledDataset};
use recourse_core::harness::io::{
    dataset_to_csv, load_recourses, load_shifted, load_table, recourses_to_csv, shifted_to_csv,
};
use recourse_core::harness::{
    ensemble_for, estimate_belief, evaluate, frontier_to_csv, generate_recourses, generate_synthetic, load_instances,
    run_pipeline, BeliefFile, Evaluated, Experiment, ExperimentConfig, M2Mode, Normalization, Table,
};
use recourse_core::model::FeatureVector;
use recourse_core::Error;

#[derive(Parser)]
#[command(
    name = "recourse",
    version,
    about = "Distributionally robust recourse under model shifts"
)]
struct Cli {
    /// TOML config; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write `original.csv` and `shifted.csv` from the synthetic generator.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Bootstrap classifiers on a dataset and write the mixture belief as JSON.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "label")]
        label: String,
        /// Min-max scale features; the scaling is stored in the belief file.
        #[arg(long)]
        normalize: bool,
        /// Number of mixture components.
        #[arg(long)]
        k: Option<usize>,
        /// Ambiguity radii, comma separated (one, or one per component).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        rho: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one recourse problem per instance row.
    Generate {
        #[arg(long)]
        belief: PathBuf,
        /// Instances in original units; a label column is ignored.
        #[arg(long)]
        instances: PathBuf,
        #[arg(long, default_value = "label")]
        label: String,
        /// Budget above the minimal feasible one.
        #[arg(long, allow_negative_numbers = true)]
        delta_add: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score recourses against the original classifier and a retrained ensemble.
    Evaluate {
        #[arg(long)]
        recourses: PathBuf,
        #[arg(long)]
        instances: PathBuf,
        /// Shifted data as written by `synth`.
        #[arg(long)]
        shifted: PathBuf,
        /// Original data; the original classifier is trained on it.
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        belief: PathBuf,
        #[arg(long, default_value = "label")]
        label: String,
        /// `shifted-only` or `concat` (shifted rows appended to the original data).
        #[arg(long, value_parser = parse_m2_mode)]
        m2_mode: Option<M2Mode>,
        #[arg(long)]
        out_json: PathBuf,
        #[arg(long)]
        out_csv: PathBuf,
    },
    /// Cost/validity frontier of the synthetic experiment over budgets and radii.
    Sweep {
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        deltas_add: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        rhos: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthetic data, estimation, generation and evaluation in one run.
    Pipeline {
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_m2_mode(s: &str) -> Result<M2Mode, String> {
    match s {
        "shifted-only" => Ok(M2Mode::ShiftedOnly),
        "concat" => Ok(M2Mode::Concat),
        other => Err(format!("expected `shifted-only` or `concat`, got `{other}`")),
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            toml_config(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn toml_config(text: &str) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::from_toml(text).map_err(|e| match e {
        Error::InvalidConfig(m) => Failure::Usage(m),
        other => Failure::Usage(other.to_string()),
    })
}

fn checked(cfg: ExperimentConfig) -> Result<ExperimentConfig, Failure> {
    match cfg.validate() {
        Ok(()) => Ok(cfg),
        Err(Error::InvalidConfig(m)) => Err(Failure::Usage(m)),
        Err(e) => Err(Failure::Usage(e.to_string())),
    }
}

fn write(path: &Path, text: &str) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn read_belief(path: &Path) -> Result<BeliefFile, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    Ok(BeliefFile::from_json(&text)?)
}

fn normalized(data: LabeledDataset, norm: Option<&Normalization>) -> Result<LabeledDataset, Failure> {
    Ok(match norm {
        Some(n) => n.apply_dataset(&data)?,
        None => data,
    })
}

fn run(cli: Cli) -> Outcome {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Synth { out } => {
            let cfg = checked(cfg)?;
            let data = generate_synthetic(&cfg.synthetic, cfg.seed)?;
            write(&out.join("original.csv"), &dataset_to_csv(&data.original))?;
            write(&out.join("shifted.csv"), &shifted_to_csv(&data.shifted))
        }
        Command::Estimate {
            data,
            label,
            normalize,
            k,
            rho,
            out,
        } => {
            let mut cfg = cfg;
            if let Some(k) = k {
                cfg.estimation.k = k;
            }
            if let Some(rho) = rho {
                cfg.problem.rho = rho;
            }
            let cfg = checked(cfg)?;
            let loaded = load_table(&Table::read(&data)?, &label, normalize)?;
            let belief = estimate_belief(&loaded.dataset, &cfg.estimation, &cfg.problem, cfg.seed)?;
            write(&out, &BeliefFile::from_belief(&belief, loaded.normalization).to_json())
        }
        Command::Generate {
            belief,
            instances,
            label,
            delta_add,
            out,
        } => {
            let mut cfg = cfg;
            if let Some(d) = delta_add {
                cfg.problem.delta_add = d;
            }
            let cfg = checked(cfg)?;
            let file = read_belief(&belief)?;
            let belief = file.to_belief()?;
            let norm = file.normalization.as_ref();
            let items = load_instances(&Table::read(&instances)?, &label, norm)?;
            let records = generate_recourses(&items, &belief, &cfg.problem, &cfg.solver, cfg.seed);
            let failed = records.iter().filter(|r| r.outcome.is_err()).count();
            if failed > 0 {
                log::warn!("{failed} of {} instances failed", records.len());
            }
            write(&out, &recourses_to_csv(&records, belief.len(), norm))
        }
        Command::Evaluate {
            recourses,
            instances,
            shifted,
            original,
            belief,
            label,
            m2_mode,
            out_json,
            out_csv,
        } => {
            let mut cfg = cfg;
            if let Some(m) = m2_mode {
                cfg.evaluation.m2_mode = m;
            }
            let cfg = checked(cfg)?;
            let file = read_belief(&belief)?;
            let norm = file.normalization.as_ref();
            let nominal = file.to_belief()?.mean_classifier()?;
            let items = load_instances(&Table::read(&instances)?, &label, norm)?;
            let original_data = normalized(load_table(&Table::read(&original)?, &label, false)?.dataset, norm)?;
            let theta0 = train_logistic(&original_data, &cfg.estimation.train())?.classifier;
            let shifted_data = load_shifted(&Table::read(&shifted)?)?
                .into_iter()
                .map(|s| normalized(s.data, norm))
                .collect::<Result<Vec<_>, _>>()?;
            let ensemble = ensemble_for(&shifted_data, Some(&original_data), &cfg)?;

            let rows = load_recourses(&Table::read(&recourses)?)?;
            let mut actions = Vec::with_capacity(rows.len());
            for (id, coords) in rows {
                let (_, x0) = items
                    .iter()
                    .find(|(i, _)| *i == id)
                    .ok_or_else(|| Failure::Runtime(format!("recourse id {id} has no instance row")))?;
                let action = match coords {
                    Some(c) => Some(FeatureVector::from_features(&c)?),
                    None => None,
                };
                actions.push((id, x0, action));
            }
            let evaluated: Vec<Evaluated<'_>> = actions
                .iter()
                .map(|(id, x0, a)| Evaluated {
                    id: *id,
                    instance: x0,
                    recourse: a.as_ref().unwrap_or(x0),
                    solved: a.is_some(),
                })
                .collect();
            let report = evaluate(&evaluated, &theta0, &nominal, &ensemble)?;
            write(&out_json, &report.to_json())?;
            write(&out_csv, &report.to_csv())
        }
        Command::Sweep { deltas_add, rhos, out } => {
            let mut cfg = cfg;
            if let Some(d) = deltas_add {
                cfg.sweep.deltas_add = d;
            }
            if let Some(r) = rhos {
                cfg.sweep.rhos = r;
            }
            if cfg.sweep.deltas_add.is_empty() || cfg.sweep.rhos.is_empty() {
                return Err(Failure::Usage("sweep: grids must not be empty".into()));
            }
            let cfg = checked(cfg)?;
            let exp = Experiment::prepare(&cfg)?;
            let rows = exp.sweep_frontier(&cfg.sweep.deltas_add, &cfg.sweep.rhos);
            write(&out, &frontier_to_csv(&rows))
        }
        Command::Pipeline { out } => {
            let cfg = checked(cfg)?;
            let result = run_pipeline(&cfg)?;
            write(&out.join("belief.json"), &result.belief_json)?;
            write(&out.join("recourses.csv"), &result.recourse_csv)?;
            write(&out.join("report.json"), &result.report_json)?;
            write(&out.join("report.csv"), &result.report_csv)
        }
    }
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
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("usage error:\n{m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
