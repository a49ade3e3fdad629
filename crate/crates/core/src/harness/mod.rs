//! Experiment plumbing: synthetic shifts, data files, recourse generation,
//! shift-replay evaluation and frontier sweeps.

pub mod eval;
pub mod io;
pub mod synthetic;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use eval::{build_ensemble, evaluate, Evaluated, EvaluationReport, InstanceRow, M2Mode, ShiftEnsemble};
pub use io::{load_csv, load_instances, BeliefFile, LoadedData, Normalization, RecourseRecord, Table};
pub use synthetic::{generate_synthetic, ShiftKind, ShiftedDataset, SyntheticConfig, SyntheticData};

use crate::error::{Error, Result};
use crate::estimation::{bootstrap_parameters, fit_mixture_moments, train_logistic, LabeledDataset, TrainConfig};
use crate::feasibility::{delta_min, FeasibleSet};
use crate::model::{
    validate_problem, ActionabilitySpec, CostKind, Divergence, FeatureVector, LinearClassifier, MixtureBelief, Mode,
    RecourseProblem,
};
use crate::optimizer::{solve_prepared, GradientMode, SolverConfig};
use crate::rng::task_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    /// Number of mixture components.
    pub k: usize,
    /// Bootstrap fits.
    pub bootstrap: usize,
    /// Row fraction per bootstrap fit.
    pub subsample: f64,
    /// Covariance jitter.
    pub jitter: f64,
    pub l2_reg: f64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            k: 1,
            bootstrap: 100,
            subsample: 0.8,
            jitter: 1e-4,
            l2_reg: 1e-3,
        }
    }
}

impl EstimationConfig {
    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            l2_reg: self.l2_reg,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub mode: Mode,
    /// One radius per component, or a single radius for all.
    pub rho: Vec<f64>,
    /// Budget above the minimal one: `delta = delta_min + delta_add`.
    pub delta_add: f64,
    pub margin: f64,
    pub cost: CostKind,
    pub weight_budget: f64,
    pub divergence: Divergence,
    pub actionability: ActionabilitySpec,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Nonparametric,
            rho: vec![0.1],
            delta_add: 1.0,
            margin: 1e-3,
            cost: CostKind::L1,
            weight_budget: 0.1,
            divergence: Divergence::Kl,
            actionability: ActionabilitySpec::default(),
        }
    }
}

impl ProblemConfig {
    /// Radii for `k` components.
    pub fn radii(&self, k: usize) -> Result<Vec<f64>> {
        match self.rho.len() {
            1 => Ok(vec![self.rho[0]; k]),
            n if n == k => Ok(self.rho.clone()),
            n => Err(Error::InvalidConfig(format!("problem.rho has {n} entries for K = {k}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientChoice {
    #[default]
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub lambda_ls: f64,
    pub zeta: f64,
    pub max_iter: usize,
    pub station_tol: f64,
    pub max_backtracks: usize,
    pub restarts: usize,
    pub gradient: GradientChoice,
    pub fd_step: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            lambda_ls: d.lambda_ls,
            zeta: d.zeta,
            max_iter: d.max_iter,
            station_tol: d.station_tol,
            max_backtracks: d.max_backtracks,
            restarts: d.restarts,
            gradient: GradientChoice::Analytic,
            fd_step: 1e-6,
        }
    }
}

impl SolverSection {
    pub fn solver_config(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            lambda_ls: self.lambda_ls,
            zeta: self.zeta,
            max_iter: self.max_iter,
            station_tol: self.station_tol,
            max_backtracks: self.max_backtracks,
            restarts: self.restarts,
            seed,
            gradient: match self.gradient {
                GradientChoice::Analytic => GradientMode::Analytic,
                GradientChoice::FiniteDifference => GradientMode::FiniteDifference { h: self.fd_step },
            },
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Ensemble size.
    pub trials: usize,
    /// Fraction of a shifted dataset per ensemble member.
    pub subsample: f64,
    pub m2_mode: M2Mode,
    /// Cap on the number of negative test instances.
    pub max_instances: usize,
    /// Held-out fraction of the original data.
    pub test_fraction: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            subsample: 0.2,
            m2_mode: M2Mode::ShiftedOnly,
            max_instances: 100,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub deltas_add: Vec<f64>,
    pub rhos: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            deltas_add: vec![0.0, 0.5, 1.0, 2.0],
            rhos: vec![0.1],
        }
    }
}

/// Everything a run needs; read from TOML with every key optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub synthetic: SyntheticConfig,
    pub estimation: EstimationConfig,
    pub problem: ProblemConfig,
    pub solver: SolverSection,
    pub evaluation: EvaluationConfig,
    pub sweep: SweepConfig,
}

fn check(ok: bool, key: &str, msg: impl std::fmt::Display, errs: &mut Vec<String>) {
    if !ok {
        errs.push(format!("{key}: {msg}"));
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Checks every key and reports all problems at once, one per line.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if let Err(Error::InvalidConfig(m)) = self.synthetic.validate() {
            errs.push(m);
        }
        let e = &self.estimation;
        check(
            e.k >= 1,
            "estimation.k",
            format!("must be >= 1, got {}", e.k),
            &mut errs,
        );
        check(
            e.bootstrap >= 2,
            "estimation.bootstrap",
            format!("must be >= 2, got {}", e.bootstrap),
            &mut errs,
        );
        check(
            e.subsample > 0.0 && e.subsample <= 1.0,
            "estimation.subsample",
            format!("must be in (0, 1], got {}", e.subsample),
            &mut errs,
        );
        check(
            e.jitter > 0.0,
            "estimation.jitter",
            format!("must be > 0, got {}", e.jitter),
            &mut errs,
        );
        check(
            e.l2_reg >= 0.0,
            "estimation.l2_reg",
            format!("must be >= 0, got {}", e.l2_reg),
            &mut errs,
        );
        let p = &self.problem;
        check(!p.rho.is_empty(), "problem.rho", "must not be empty", &mut errs);
        check(
            p.rho.iter().all(|r| *r >= 0.0 && r.is_finite()),
            "problem.rho",
            "radii must be finite and >= 0",
            &mut errs,
        );
        check(
            p.delta_add >= 0.0 && p.delta_add.is_finite(),
            "problem.delta_add",
            format!("must be finite and >= 0, got {}", p.delta_add),
            &mut errs,
        );
        check(
            p.margin > 0.0,
            "problem.margin",
            format!("must be > 0, got {}", p.margin),
            &mut errs,
        );
        check(
            p.weight_budget >= 0.0,
            "problem.weight_budget",
            format!("must be >= 0, got {}", p.weight_budget),
            &mut errs,
        );
        if p.rho.len() > 1 && p.rho.len() != e.k {
            errs.push(format!(
                "problem.rho: {} entries for estimation.k = {}",
                p.rho.len(),
                e.k
            ));
        }
        if let Err(Error::InvalidConfig(m)) = self.solver.solver_config(0).validate() {
            errs.push(format!("solver: {m}"));
        }
        let v = &self.evaluation;
        check(v.trials >= 1, "evaluation.trials", "must be >= 1", &mut errs);
        check(
            v.subsample > 0.0 && v.subsample <= 1.0,
            "evaluation.subsample",
            format!("must be in (0, 1], got {}", v.subsample),
            &mut errs,
        );
        check(
            v.max_instances >= 1,
            "evaluation.max_instances",
            "must be >= 1",
            &mut errs,
        );
        check(
            v.test_fraction > 0.0 && v.test_fraction < 1.0,
            "evaluation.test_fraction",
            format!("must be in (0, 1), got {}", v.test_fraction),
            &mut errs,
        );
        check(
            self.sweep.deltas_add.iter().all(|d| *d >= 0.0),
            "sweep.deltas_add",
            "must be >= 0",
            &mut errs,
        );
        check(
            self.sweep.rhos.iter().all(|r| *r >= 0.0),
            "sweep.rhos",
            "must be >= 0",
            &mut errs,
        );
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errs.join("\n")))
        }
    }
}

/// Sub-seeds of the master seed, one per pipeline stage.
#[derive(Debug, Clone, Copy)]
enum Stage {
    Split = 1,
    Bootstrap = 2,
    Clustering = 3,
    Ensemble = 4,
    Solver = 5,
}

fn stage_seed(seed: u64, stage: Stage) -> u64 {
    task_rng(seed, stage as u64).random()
}

/// Random train/test split of the rows; both parts keep the original row order.
pub fn split(data: &LabeledDataset, test_fraction: f64, seed: u64) -> (LabeledDataset, LabeledDataset, Vec<usize>) {
    let mut rows: Vec<usize> = (0..data.len()).collect();
    rows.shuffle(&mut task_rng(seed, 0));
    let n_test = ((test_fraction * data.len() as f64).round() as usize).clamp(1, data.len() - 1);
    let mut test: Vec<usize> = rows[..n_test].to_vec();
    let mut train: Vec<usize> = rows[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (data.subset(&train), data.subset(&test), test)
}

/// Bootstrap + clustering, with the configured radii applied.
pub fn estimate_belief(
    train: &LabeledDataset,
    est: &EstimationConfig,
    problem: &ProblemConfig,
    seed: u64,
) -> Result<MixtureBelief> {
    let sample = bootstrap_parameters(
        train,
        est.bootstrap,
        est.subsample,
        &est.train(),
        stage_seed(seed, Stage::Bootstrap),
    )?;
    let belief = fit_mixture_moments(&sample, est.k, est.jitter, stage_seed(seed, Stage::Clustering))?;
    belief.with_radii(&problem.radii(est.k)?)
}

/// Shift-replay ensemble with the configured evaluation settings.
pub fn ensemble_for(
    shifted: &[LabeledDataset],
    original_train: Option<&LabeledDataset>,
    config: &ExperimentConfig,
) -> Result<ShiftEnsemble> {
    let ev = &config.evaluation;
    build_ensemble(
        shifted,
        original_train,
        ev.m2_mode,
        ev.subsample,
        ev.trials,
        &config.estimation.train(),
        stage_seed(config.seed, Stage::Ensemble),
    )
}

/// The recourse problem for `x0`, with the budget left at 0.
pub fn problem_for(x0: &FeatureVector, belief: &MixtureBelief, cfg: &ProblemConfig) -> RecourseProblem {
    RecourseProblem {
        x0: x0.clone(),
        belief: belief.clone(),
        delta: 0.0,
        margin: cfg.margin,
        cost: cfg.cost,
        actionability: cfg.actionability.clone(),
        mode: cfg.mode,
        weight_budget: cfg.weight_budget,
        divergence: cfg.divergence,
    }
}

/// Solves one instance with `delta = delta_min + delta_add`.
pub fn solve_instance(
    x0: &FeatureVector,
    belief: &MixtureBelief,
    cfg: &ProblemConfig,
    solver: &SolverConfig,
) -> Result<crate::model::RecourseResult> {
    let mut problem = validate_problem(problem_for(x0, belief, cfg))?;
    let set = FeasibleSet::from_problem(&problem)?;
    let dm = delta_min(&set)?;
    problem.delta = dm + cfg.delta_add;
    solve_prepared(&problem, &set.with_delta(problem.delta), dm, solver, &mut |_| {})
}

/// Solves every instance in parallel; instance `i` restarts from solver seed
/// stream `i`. Failures are kept as records.
pub fn generate_recourses(
    instances: &[(usize, FeatureVector)],
    belief: &MixtureBelief,
    cfg: &ProblemConfig,
    solver: &SolverSection,
    seed: u64,
) -> Vec<RecourseRecord> {
    let base = stage_seed(seed, Stage::Solver);
    instances
        .par_iter()
        .enumerate()
        .map(|(i, (id, x0))| {
            let scfg = solver.solver_config(task_rng(base, i as u64).random());
            RecourseRecord {
                id: *id,
                x0: x0.clone(),
                outcome: solve_instance(x0, belief, cfg, &scfg).map_err(|e| e.to_string()),
            }
        })
        .collect()
}

/// Instances rejected by `clf`, in row order, at most `max`.
pub fn negative_instances(
    data: &LabeledDataset,
    row_ids: &[usize],
    clf: &LinearClassifier,
    max: usize,
) -> Vec<(usize, FeatureVector)> {
    (0..data.len())
        .map(|i| (row_ids[i], data.instance(i)))
        .filter(|(_, x)| !clf.accepts(x.as_vector()))
        .take(max)
        .collect()
}

pub fn evaluate_records(
    records: &[RecourseRecord],
    original: &LinearClassifier,
    nominal: &LinearClassifier,
    ensemble: &ShiftEnsemble,
) -> Result<EvaluationReport> {
    let items: Vec<Evaluated<'_>> = records
        .iter()
        .map(|r| Evaluated {
            id: r.id,
            instance: &r.x0,
            recourse: r.action(),
            solved: r.outcome.is_ok(),
        })
        .collect();
    evaluate(&items, original, nominal, ensemble)
}

/// Data, classifiers and ensemble of a synthetic experiment, shared by all
/// cells of a sweep.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub data: SyntheticData,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    /// Classifier trained on all training rows.
    pub original: LinearClassifier,
    /// Belief with zero radii.
    pub belief: MixtureBelief,
    pub instances: Vec<(usize, FeatureVector)>,
    pub ensemble: ShiftEnsemble,
}

/// One `(delta_add, rho)` configuration.
#[derive(Debug, Clone)]
pub struct Cell {
    pub records: Vec<RecourseRecord>,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierRow {
    pub delta_add: f64,
    pub rho: f64,
    pub l1_cost: f64,
    pub l2_cost: f64,
    pub m1_validity: f64,
    pub m2_validity: f64,
    pub n_failed: usize,
    pub error: String,
}

impl Experiment {
    pub fn prepare(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let data = generate_synthetic(&config.synthetic, seed)?;
        let (train, test, test_rows) = split(
            &data.original,
            config.evaluation.test_fraction,
            stage_seed(seed, Stage::Split),
        );
        let original = train_logistic(&train, &config.estimation.train())?.classifier;
        let zero = ProblemConfig {
            rho: vec![0.0],
            ..config.problem.clone()
        };
        let belief = estimate_belief(&train, &config.estimation, &zero, seed)?;
        let instances = negative_instances(&test, &test_rows, &original, config.evaluation.max_instances);
        if instances.is_empty() {
            return Err(Error::EmptyInput("no negative test instances".into()));
        }
        let shifted: Vec<LabeledDataset> = data.shifted.iter().map(|s| s.data.clone()).collect();
        let ensemble = ensemble_for(&shifted, Some(&train), config)?;
        Ok(Self {
            config: config.clone(),
            data,
            train,
            test,
            original,
            belief,
            instances,
            ensemble,
        })
    }

    pub fn belief_with(&self, rho: &[f64]) -> Result<MixtureBelief> {
        let cfg = ProblemConfig {
            rho: rho.to_vec(),
            ..self.config.problem.clone()
        };
        self.belief.with_radii(&cfg.radii(self.belief.len())?)
    }

    /// Solves and evaluates every instance for the given radii and budget.
    pub fn run_cell(&self, rho: &[f64], delta_add: f64) -> Result<Cell> {
        let start = Instant::now();
        let belief = self.belief_with(rho)?;
        let cfg = ProblemConfig {
            rho: rho.to_vec(),
            delta_add,
            ..self.config.problem.clone()
        };
        let records = generate_recourses(&self.instances, &belief, &cfg, &self.config.solver, self.config.seed);
        let nominal = belief.mean_classifier()?;
        let mut report = evaluate_records(&records, &self.original, &nominal, &self.ensemble)?;
        report.runtime_seconds = start.elapsed().as_secs_f64();
        Ok(Cell { records, report })
    }

    /// One row per `(delta_add, rho)`; a failing cell is recorded and the
    /// sweep continues.
    pub fn sweep_frontier(&self, deltas_add: &[f64], rhos: &[f64]) -> Vec<FrontierRow> {
        let mut rows = Vec::new();
        for &rho in rhos {
            for &delta_add in deltas_add {
                rows.push(match self.run_cell(&[rho], delta_add) {
                    Ok(cell) => FrontierRow {
                        delta_add,
                        rho,
                        l1_cost: cell.report.l1_cost,
                        l2_cost: cell.report.l2_cost,
                        m1_validity: cell.report.m1_validity,
                        m2_validity: cell.report.m2_validity,
                        n_failed: cell.report.n_failed,
                        error: String::new(),
                    },
                    Err(e) => FrontierRow {
                        delta_add,
                        rho,
                        l1_cost: f64::NAN,
                        l2_cost: f64::NAN,
                        m1_validity: f64::NAN,
                        m2_validity: f64::NAN,
                        n_failed: self.instances.len(),
                        error: e.to_string(),
                    },
                });
            }
        }
        rows
    }
}

/// Frontier table with columns `delta_add,rho,l1_cost,l2_cost,m1_validity,m2_validity,n_failed,error`.
pub fn frontier_to_csv(rows: &[FrontierRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
}

/// Serialised outputs of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub belief_json: String,
    pub recourse_csv: String,
    pub report_json: String,
    pub report_csv: String,
    pub report: EvaluationReport,
}

/// Synthetic data, estimation, recourse generation and evaluation with the
/// configured radii and budget.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<PipelineOutput> {
    let exp = Experiment::prepare(config)?;
    let cell = exp.run_cell(&config.problem.rho, config.problem.delta_add)?;
    let belief = exp.belief_with(&config.problem.rho)?;
    Ok(PipelineOutput {
        belief_json: BeliefFile::from_belief(&belief, None).to_json(),
        recourse_csv: io::recourses_to_csv(&cell.records, belief.len(), None),
        report_json: cell.report.to_json(),
        report_csv: cell.report.to_csv(),
        report: cell.report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            seed: 3,
            synthetic: SyntheticConfig {
                n_per_class: 100,
                n_shifts: 6,
                ..SyntheticConfig::default()
            },
            estimation: EstimationConfig {
                bootstrap: 10,
                ..EstimationConfig::default()
            },
            solver: SolverSection {
                restarts: 1,
                ..SolverSection::default()
            },
            evaluation: EvaluationConfig {
                trials: 6,
                max_instances: 5,
                ..EvaluationConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = small();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn config_errors_name_their_keys() {
        let err = ExperimentConfig::from_toml("[problem]\ndelta_add = -1.0\nmargin = 0.0\n").unwrap_err();
        let Error::InvalidConfig(msg) = err else { panic!() };
        assert!(
            msg.contains("problem.delta_add") && msg.contains("problem.margin"),
            "{msg}"
        );
        assert!(ExperimentConfig::from_toml("[problem]\nunknown = 1\n").is_err());
    }

    #[test]
    fn small_pipeline_runs_and_is_deterministic() {
        let a = run_pipeline(&small()).unwrap();
        assert_eq!(a.report.n_instances, 5);
        assert_eq!(a.report.n_failed, 0);
        assert_eq!(a.report.m1_nominal_validity, 1.0);
        let b = run_pipeline(&small()).unwrap();
        assert_eq!(a.recourse_csv, b.recourse_csv);
        assert_eq!(a.report_json, b.report_json);
    }

    #[test]
    fn single_cell_sweep() {
        let exp = Experiment::prepare(&small()).unwrap();
        let rows = exp.sweep_frontier(&[0.5], &[0.1]);
        assert_eq!(rows.len(), 1);
        assert!(rows[0].error.is_empty());
        let csv = frontier_to_csv(&rows);
        assert!(csv.starts_with("delta_add,rho,l1_cost,l2_cost,m1_validity,m2_validity,n_failed,error\n"));
    }
}
