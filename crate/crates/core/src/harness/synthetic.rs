//! Two Gaussian classes with mean and covariance shifts of class 0.

use nalgebra::{Cholesky, Matrix2, Vector2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::LabeledDataset;
use crate::model::Matrix;
use crate::rng::task_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftKind {
    Mean,
    Cov,
    Both,
}

impl ShiftKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ShiftKind::Mean => "mean",
            ShiftKind::Cov => "cov",
            ShiftKind::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub mu0: [f64; 2],
    pub mu1: [f64; 2],
    /// Row-major 2x2 covariances.
    pub sigma0: [[f64; 2]; 2],
    pub sigma1: [[f64; 2]; 2],
    pub n_per_class: usize,
    /// Shift `i` uses `kinds[i % kinds.len()]`.
    pub kinds: Vec<ShiftKind>,
    pub mu_adapt: f64,
    pub cov_adapt: f64,
    pub n_shifts: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            mu0: [-3.0, -3.0],
            mu1: [3.0, 3.0],
            sigma0: [[1.0, 0.0], [0.0, 1.0]],
            sigma1: [[1.0, 0.0], [0.0, 1.0]],
            n_per_class: 500,
            kinds: vec![ShiftKind::Mean, ShiftKind::Cov, ShiftKind::Both],
            mu_adapt: 0.1,
            cov_adapt: 0.1,
            n_shifts: 100,
        }
    }
}

fn mat(s: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(s[0][0], s[0][1], s[1][0], s[1][1])
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class < 10 {
            return Err(Error::InvalidConfig(format!(
                "synthetic.n_per_class must be >= 10, got {}",
                self.n_per_class
            )));
        }
        for (name, s) in [("sigma0", &self.sigma0), ("sigma1", &self.sigma1)] {
            let m = mat(s);
            if (m - m.transpose()).abs().max() > 0.0 || Cholesky::new(m).is_none() {
                return Err(Error::InvalidConfig(format!(
                    "synthetic.{name} must be symmetric positive definite"
                )));
            }
        }
        if self.kinds.is_empty() {
            return Err(Error::InvalidConfig("synthetic.kinds must not be empty".into()));
        }
        if self.mu_adapt < 0.0 || self.cov_adapt < 0.0 || !self.mu_adapt.is_finite() || !self.cov_adapt.is_finite() {
            return Err(Error::InvalidConfig(
                "synthetic.mu_adapt and cov_adapt must be finite and >= 0".into(),
            ));
        }
        if self.mu0.iter().chain(&self.mu1).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("synthetic means must be finite".into()));
        }
        Ok(())
    }

    /// Kind and per-kind iteration number (starting at 1) of shift `i`.
    pub fn shift_schedule(&self, i: usize) -> (ShiftKind, usize) {
        let n = self.kinds.len();
        (self.kinds[i % n], i / n + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedDataset {
    pub kind: ShiftKind,
    pub iter: usize,
    pub data: LabeledDataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub original: LabeledDataset,
    pub shifted: Vec<ShiftedDataset>,
}

fn draw(mu: Vector2<f64>, sigma: Matrix2<f64>, n: usize, rng: &mut impl rand::Rng, out: &mut Vec<f64>) {
    let l = Cholesky::new(sigma).expect("validated covariance").l();
    for _ in 0..n {
        let z = Vector2::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
        let x = mu + l * z;
        out.push(x[0]);
        out.push(x[1]);
    }
}

fn dataset(
    mu0: Vector2<f64>,
    s0: Matrix2<f64>,
    mu1: Vector2<f64>,
    s1: Matrix2<f64>,
    n: usize,
    stream: u64,
    seed: u64,
) -> LabeledDataset {
    let mut rng = task_rng(seed, stream);
    let mut rows = Vec::with_capacity(4 * n);
    draw(mu0, s0, n, &mut rng, &mut rows);
    draw(mu1, s1, n, &mut rng, &mut rows);
    let labels = (0..2 * n).map(|i| i >= n).collect();
    LabeledDataset::new(Matrix::from_row_slice(2 * n, 2, &rows), labels).expect("finite draws")
}

/// Original data from stream 0 and shift `i` from stream `i + 1`. A shift
/// moves class 0 to `mu0 + [alpha, 0]` and/or scales its covariance by
/// `1 + beta`, with `alpha = mu_adapt * iter` and `beta = cov_adapt * iter`.
pub fn generate_synthetic(cfg: &SyntheticConfig, seed: u64) -> Result<SyntheticData> {
    cfg.validate()?;
    let mu0 = Vector2::from(cfg.mu0);
    let mu1 = Vector2::from(cfg.mu1);
    let s0 = mat(&cfg.sigma0);
    let s1 = mat(&cfg.sigma1);
    let n = cfg.n_per_class;
    let original = dataset(mu0, s0, mu1, s1, n, 0, seed);
    let shifted = (0..cfg.n_shifts)
        .map(|i| {
            let (kind, iter) = cfg.shift_schedule(i);
            let alpha = cfg.mu_adapt * iter as f64;
            let beta = cfg.cov_adapt * iter as f64;
            let (m, s) = match kind {
                ShiftKind::Mean => (mu0 + Vector2::new(alpha, 0.0), s0),
                ShiftKind::Cov => (mu0, s0 * (1.0 + beta)),
                ShiftKind::Both => (mu0 + Vector2::new(alpha, 0.0), s0 * (1.0 + beta)),
            };
            ShiftedDataset {
                kind,
                iter,
                data: dataset(m, s, mu1, s1, n, i as u64 + 1, seed),
            }
        })
        .collect();
    Ok(SyntheticData { original, shifted })
}
