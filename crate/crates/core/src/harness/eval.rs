//! Validity of recourses under the current and retrained classifiers.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{train_logistic, LabeledDataset, TrainConfig};
use crate::model::{FeatureVector, LinearClassifier, Matrix};
use crate::rng::task_rng;

/// Training data of each ensemble member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum M2Mode {
    /// A random fraction of one shifted dataset.
    #[default]
    ShiftedOnly,
    /// That fraction concatenated with the original training data.
    Concat,
}

/// Classifiers retrained on shifted data.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftEnsemble {
    classifiers: Vec<LinearClassifier>,
}

impl ShiftEnsemble {
    pub fn new(classifiers: Vec<LinearClassifier>) -> Result<Self> {
        let Some(first) = classifiers.first() else {
            return Err(Error::EmptyInput("ensemble has no classifiers".into()));
        };
        let d = first.dim();
        if let Some(c) = classifiers.iter().find(|c| c.dim() != d) {
            return Err(Error::DimensionMismatch {
                what: "ensemble".into(),
                expected: d,
                got: c.dim(),
            });
        }
        Ok(Self { classifiers })
    }

    pub fn classifiers(&self) -> &[LinearClassifier] {
        &self.classifiers
    }

    pub fn len(&self) -> usize {
        self.classifiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classifiers.is_empty()
    }

    /// Fraction of members accepting `x`.
    pub fn acceptance(&self, x: &FeatureVector) -> f64 {
        let n = self.classifiers.iter().filter(|c| c.accepts(x.as_vector())).count();
        n as f64 / self.len() as f64
    }
}

fn concat(a: &LabeledDataset, b: &LabeledDataset) -> Result<LabeledDataset> {
    let mut f = Matrix::zeros(a.len() + b.len(), a.n_features());
    f.rows_mut(0, a.len()).copy_from(a.features());
    f.rows_mut(a.len(), b.len()).copy_from(b.features());
    let mut labels = a.labels().to_vec();
    labels.extend_from_slice(b.labels());
    LabeledDataset::new(f, labels)
}

/// `trials` classifiers; trial `t` trains on a random `subsample` fraction of
/// `shifted[t % len]` drawn from stream `t` of `seed`.
pub fn build_ensemble(
    shifted: &[LabeledDataset],
    original_train: Option<&LabeledDataset>,
    mode: M2Mode,
    subsample: f64,
    trials: usize,
    train: &TrainConfig,
    seed: u64,
) -> Result<ShiftEnsemble> {
    if shifted.is_empty() || trials == 0 {
        return Err(Error::EmptyInput("no shifted data or zero trials".into()));
    }
    if !(subsample > 0.0 && subsample <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "evaluation subsample must be in (0, 1], got {subsample}"
        )));
    }
    let base = match (mode, original_train) {
        (M2Mode::Concat, Some(d)) => Some(d),
        (M2Mode::Concat, None) => {
            return Err(Error::InvalidConfig(
                "concat mode needs the original training data".into(),
            ));
        }
        (M2Mode::ShiftedOnly, _) => None,
    };
    let fits = (0..trials)
        .into_par_iter()
        .map(|t| {
            let data = &shifted[t % shifted.len()];
            let mut rng = task_rng(seed, t as u64);
            let m = ((subsample * data.len() as f64).ceil() as usize).clamp(1, data.len());
            let mut rows = index::sample(&mut rng, data.len(), m).into_vec();
            rows.sort_unstable();
            let part = data.subset(&rows);
            let part = match base {
                Some(b) => concat(b, &part)?,
                None => part,
            };
            train_logistic(&part, train).map(|f| f.classifier)
        })
        .collect::<Result<Vec<_>>>()?;
    ShiftEnsemble::new(fits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub id: usize,
    pub solved: bool,
    /// 1 if the original classifier accepts the recourse.
    pub m1: f64,
    /// 1 if the nominal (mean) classifier accepts the recourse.
    pub m1_nominal: f64,
    /// Fraction of the ensemble accepting the recourse.
    pub m2: f64,
    pub l1_cost: f64,
    pub l2_cost: f64,
}

/// Means over instances. `runtime_seconds` is not serialised so that reports
/// are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_instances: usize,
    pub n_failed: usize,
    pub m1_validity: f64,
    pub m1_nominal_validity: f64,
    pub m2_validity: f64,
    pub l1_cost: f64,
    pub l2_cost: f64,
    pub per_instance: Vec<InstanceRow>,
    #[serde(skip)]
    pub runtime_seconds: f64,
}

/// One evaluated recourse.
pub struct Evaluated<'a> {
    pub id: usize,
    pub instance: &'a FeatureVector,
    pub recourse: &'a FeatureVector,
    pub solved: bool,
}

/// M1 (original classifier), M1 under `nominal`, M2 (ensemble) and mean
/// l1/l2 costs over the feature coordinates.
pub fn evaluate(
    items: &[Evaluated<'_>],
    original: &LinearClassifier,
    nominal: &LinearClassifier,
    ensemble: &ShiftEnsemble,
) -> Result<EvaluationReport> {
    if items.is_empty() {
        return Err(Error::EmptyInput("no recourses to evaluate".into()));
    }
    let d = original.dim();
    let mut rows = Vec::with_capacity(items.len());
    for it in items {
        for (what, got) in [("instance", it.instance.dim()), ("recourse", it.recourse.dim())] {
            if got != d {
                return Err(Error::DimensionMismatch {
                    what: what.into(),
                    expected: d,
                    got,
                });
            }
        }
        let x = it.recourse.as_vector();
        let diff = it.recourse.as_vector().rows(0, d - 1) - it.instance.as_vector().rows(0, d - 1);
        rows.push(InstanceRow {
            id: it.id,
            solved: it.solved,
            m1: f64::from(u8::from(original.accepts(x))),
            m1_nominal: f64::from(u8::from(nominal.accepts(x))),
            m2: ensemble.acceptance(it.recourse),
            l1_cost: diff.lp_norm(1),
            l2_cost: diff.norm(),
        });
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&InstanceRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Ok(EvaluationReport {
        n_instances: rows.len(),
        n_failed: rows.iter().filter(|r| !r.solved).count(),
        m1_validity: mean(|r| r.m1),
        m1_nominal_validity: mean(|r| r.m1_nominal),
        m2_validity: mean(|r| r.m2),
        l1_cost: mean(|r| r.l1_cost),
        l2_cost: mean(|r| r.l2_cost),
        per_instance: rows,
        runtime_seconds: 0.0,
    })
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serialises") + "\n"
    }

    /// Summary line followed by one row per instance. Columns:
    /// `id,solved,m1,m1_nominal,m2,l1_cost,l2_cost`; the summary row has id `mean`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "solved", "m1", "m1_nominal", "m2", "l1_cost", "l2_cost"])
            .expect("in-memory write");
        w.write_record([
            "mean".to_string(),
            (self.n_instances - self.n_failed).to_string(),
            self.m1_validity.to_string(),
            self.m1_nominal_validity.to_string(),
            self.m2_validity.to_string(),
            self.l1_cost.to_string(),
            self.l2_cost.to_string(),
        ])
        .expect("in-memory write");
        for r in &self.per_instance {
            w.write_record([
                r.id.to_string(),
                r.solved.to_string(),
                r.m1.to_string(),
                r.m1_nominal.to_string(),
                r.m2.to_string(),
                r.l1_cost.to_string(),
                r.l2_cost.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
    }
}
