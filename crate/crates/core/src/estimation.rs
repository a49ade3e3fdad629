//! Building a mixture belief from data: bootstrap retraining of a logistic
//! classifier, k-means over the fitted parameters, and local linear
//! surrogates of black-box models.

use nalgebra::Cholesky;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ComponentMoments, FeatureVector, LinearClassifier, Matrix, MixtureBelief, Vector};
use crate::rng::task_rng;

/// Default covariance jitter added to every cluster.
pub const DEFAULT_JITTER: f64 = 1e-4;

/// Binary classification data. Features exclude the bias column.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<bool>,
}

impl LabeledDataset {
    /// Checks shapes and finiteness. Size and class balance are checked when
    /// training, see [`LabeledDataset::check_trainable`].
    pub fn new(features: Matrix, labels: Vec<bool>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.ncols() == 0 {
            return Err(Error::InvalidDataset("no feature columns".into()));
        }
        if let Some(v) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("non-finite feature value {v}")));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Dimension with the bias appended.
    pub fn dim(&self) -> usize {
        self.features.ncols() + 1
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    /// Row `i` with the bias appended.
    pub fn instance(&self, i: usize) -> FeatureVector {
        let row: Vec<f64> = self.features.row(i).iter().copied().collect();
        FeatureVector::from_features(&row).expect("validated rows are finite")
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Design matrix with a trailing column of ones.
    pub fn augmented(&self) -> Matrix {
        self.features.clone().insert_column(self.n_features(), 1.0)
    }

    pub fn check_trainable(&self) -> Result<()> {
        if self.len() < 10 {
            return Err(Error::InvalidDataset(format!(
                "need at least 10 rows, got {}",
                self.len()
            )));
        }
        let pos = self.labels.iter().filter(|&&l| l).count();
        if pos == 0 || pos == self.len() {
            return Err(Error::InvalidDataset("both classes must be present".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Penalty `l2_reg / 2 |w|^2` on the non-bias weights, added to the mean log-loss.
    pub l2_reg: f64,
    pub max_iter: usize,
    /// Stop when the gradient norm falls below this.
    pub tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l2_reg: 1e-3,
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub classifier: LinearClassifier,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

struct Logistic<'a> {
    x: &'a Matrix,
    y: Vec<f64>,
    reg: f64,
}

impl Logistic<'_> {
    fn loss(&self, theta: &Vector) -> f64 {
        let z = self.x * theta;
        let n = self.y.len() as f64;
        let data: f64 = z
            .iter()
            .zip(&self.y)
            .map(|(&zi, &yi)| softplus(zi) - yi * zi)
            .sum::<f64>()
            / n;
        let d = theta.len();
        data + 0.5 * self.reg * theta.rows(0, d - 1).norm_squared()
    }

    fn grad_hess(&self, theta: &Vector) -> (Vector, Matrix) {
        let z = self.x * theta;
        let n = self.y.len() as f64;
        let d = theta.len();
        let p: Vector = z.map(sigmoid);
        let r = Vector::from_iterator(p.len(), p.iter().zip(&self.y).map(|(&pi, &yi)| pi - yi));
        let mut g = self.x.transpose() * r / n;
        let w = p.map(|pi| pi * (1.0 - pi) / n);
        let mut h = self.x.transpose() * Matrix::from_diagonal(&w) * self.x;
        for i in 0..d - 1 {
            g[i] += self.reg * theta[i];
            h[(i, i)] += self.reg;
        }
        (g, h)
    }
}

/// Regularised logistic regression by damped Newton steps from zero.
/// Deterministic; on hitting `max_iter` the last iterate is returned with
/// `converged = false`.
pub fn train_logistic(data: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainedClassifier> {
    data.check_trainable()?;
    if !(cfg.l2_reg >= 0.0) {
        return Err(Error::InvalidConfig(format!("l2_reg must be >= 0, got {}", cfg.l2_reg)));
    }
    let x = data.augmented();
    let problem = Logistic {
        x: &x,
        y: data.labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect(),
        reg: cfg.l2_reg,
    };
    let d = data.dim();
    let mut theta = Vector::zeros(d);
    let mut loss = problem.loss(&theta);
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        let (g, mut h) = problem.grad_hess(&theta);
        grad_norm = g.norm();
        if grad_norm <= cfg.tol {
            break;
        }
        // tiny ridge keeps the unregularised bias direction solvable on separable data
        for i in 0..d {
            h[(i, i)] += 1e-12;
        }
        let step = match Cholesky::new(h) {
            Some(c) => c.solve(&g),
            None => g.clone(),
        };
        let slope = g.dot(&step);
        let mut t = 1.0;
        loop {
            let cand = &theta - &step * t;
            let l = problem.loss(&cand);
            if l <= loss - 1e-4 * t * slope || t < 1e-10 {
                theta = cand;
                loss = l;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
    }
    if iterations == cfg.max_iter {
        grad_norm = problem.grad_hess(&theta).0.norm();
    }
    let converged = grad_norm <= cfg.tol;
    if !converged {
        log::warn!("logistic regression stopped at gradient norm {grad_norm:e}");
    }
    Ok(TrainedClassifier {
        classifier: LinearClassifier::new(theta)?,
        converged,
        iterations,
        grad_norm,
    })
}

/// A set of fitted parameter vectors of equal dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSample {
    thetas: Vec<LinearClassifier>,
}

impl ParameterSample {
    pub fn new(thetas: Vec<LinearClassifier>) -> Result<Self> {
        if thetas.len() < 2 {
            return Err(Error::TooFewSamples(format!(
                "need at least 2 parameter vectors, got {}",
                thetas.len()
            )));
        }
        let d = thetas[0].dim();
        if let Some(t) = thetas.iter().find(|t| t.dim() != d) {
            return Err(Error::DimensionMismatch {
                what: "parameter sample".into(),
                expected: d,
                got: t.dim(),
            });
        }
        Ok(Self { thetas })
    }

    pub fn thetas(&self) -> &[LinearClassifier] {
        &self.thetas
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.thetas[0].dim()
    }

    pub fn mean(&self) -> Vector {
        let mut m = Vector::zeros(self.dim());
        for t in &self.thetas {
            m += t.theta();
        }
        m / self.len() as f64
    }
}

/// `b` classifiers, each trained on its own random `subsample` fraction of the
/// rows (without replacement). Fit `i` draws from stream `i` of `seed`.
pub fn bootstrap_parameters(
    data: &LabeledDataset,
    b: usize,
    subsample: f64,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<ParameterSample> {
    if b < 2 {
        return Err(Error::TooFewSamples(format!("bootstrap needs B >= 2, got {b}")));
    }
    if !(subsample > 0.0 && subsample <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "subsample must be in (0, 1], got {subsample}"
        )));
    }
    let n = data.len();
    let m = ((subsample * n as f64).ceil() as usize).clamp(1, n);
    let fits: Result<Vec<LinearClassifier>> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(seed, i as u64);
            let mut rows = index::sample(&mut rng, n, m).into_vec();
            rows.sort_unstable();
            train_logistic(&data.subset(&rows), cfg).map(|t| t.classifier)
        })
        .collect();
    ParameterSample::new(fits?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    /// Successful initialisations to compare.
    pub n_init: usize,
    /// Total initialisations allowed, including ones that produced an empty cluster.
    pub max_restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            n_init: 10,
            max_restarts: 50,
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centers: Vec<Vector>,
    /// Within-cluster sum of squares.
    pub inertia: f64,
}

fn nearest(p: &Vector, centers: &[Vector]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let d = (p - c).norm_squared();
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init<R: Rng>(points: &[Vector], k: usize, rng: &mut R) -> Vec<Vector> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    while centers.len() < k {
        let d2: Vec<f64> = points.iter().map(|p| nearest(p, &centers).1).collect();
        let total: f64 = d2.iter().sum();
        if total == 0.0 {
            centers.push(points[rng.random_range(0..points.len())].clone());
            continue;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = points.len() - 1;
        for (i, &w) in d2.iter().enumerate() {
            if u < w {
                pick = i;
                break;
            }
            u -= w;
        }
        centers.push(points[pick].clone());
    }
    centers
}

/// One Lloyd run; `None` if a cluster goes empty.
fn lloyd(points: &[Vector], mut centers: Vec<Vector>, max_iter: usize) -> Option<Clustering> {
    let k = centers.len();
    let mut assignments = vec![usize::MAX; points.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (a, p) in assignments.iter_mut().zip(points) {
            let j = nearest(p, &centers).0;
            if *a != j {
                *a = j;
                changed = true;
            }
        }
        let mut sums = vec![Vector::zeros(points[0].len()); k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignments.iter().zip(points) {
            sums[a] += p;
            counts[a] += 1;
        }
        if counts.contains(&0) {
            return None;
        }
        for j in 0..k {
            centers[j] = &sums[j] / counts[j] as f64;
        }
        if !changed {
            break;
        }
    }
    let inertia = assignments
        .iter()
        .zip(points)
        .map(|(&a, p)| (p - &centers[a]).norm_squared())
        .sum();
    Some(Clustering {
        assignments,
        centers,
        inertia,
    })
}

/// k-means with k-means++ seeding; the run with the smallest inertia wins.
pub fn kmeans(points: &[Vector], k: usize, cfg: &KMeansConfig, seed: u64) -> Result<Clustering> {
    if k == 0 {
        return Err(Error::InvalidConfig("K must be >= 1".into()));
    }
    if points.len() < k {
        return Err(Error::TooFewSamples(format!("{} points for K = {k}", points.len())));
    }
    let mut rng = task_rng(seed, 0);
    let mut best: Option<Clustering> = None;
    let mut successes = 0;
    for _ in 0..cfg.max_restarts {
        let init = plus_plus_init(points, k, &mut rng);
        if let Some(run) = lloyd(points, init, cfg.max_iter) {
            successes += 1;
            if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
                best = Some(run);
            }
            if successes == cfg.n_init {
                break;
            }
        }
    }
    best.ok_or(Error::EmptyCluster {
        restarts: cfg.max_restarts,
    })
}

/// Running mean and scatter (Welford). Identical inputs give an exactly zero
/// scatter.
fn moments(points: &[&Vector]) -> (Vector, Matrix) {
    let d = points[0].len();
    let mut mean = Vector::zeros(d);
    let mut scatter = Matrix::zeros(d, d);
    for (i, p) in points.iter().enumerate() {
        let delta = *p - &mean;
        mean += &delta / (i + 1) as f64;
        let delta2 = *p - &mean;
        scatter += &delta * delta2.transpose();
    }
    let cov = scatter / points.len() as f64;
    // symmetrise round-off of the rank-one updates
    let cov = (&cov + cov.transpose()) * 0.5;
    (mean, cov)
}

fn lex_cmp(a: &Vector, b: &Vector) -> std::cmp::Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Clusters the sample into `k` groups and returns weights, means and
/// covariances (population divisor plus `jitter * I`) with zero radii.
/// Components are ordered lexicographically by mean; the sample is sorted
/// before clustering, so the result does not depend on its order.
pub fn fit_mixture_moments(sample: &ParameterSample, k: usize, jitter: f64, seed: u64) -> Result<MixtureBelief> {
    fit_mixture_moments_with(sample, k, jitter, &KMeansConfig::default(), seed)
}

pub fn fit_mixture_moments_with(
    sample: &ParameterSample,
    k: usize,
    jitter: f64,
    cfg: &KMeansConfig,
    seed: u64,
) -> Result<MixtureBelief> {
    if !(jitter > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "covariance jitter must be > 0, got {jitter}"
        )));
    }
    let mut points: Vec<Vector> = sample.thetas().iter().map(|t| t.theta().clone()).collect();
    points.sort_by(lex_cmp);
    let clustering = kmeans(&points, k, cfg, seed)?;
    let n = points.len() as f64;
    let d = sample.dim();
    let mut comps: Vec<(f64, Vector, Matrix)> = (0..k)
        .map(|j| {
            let members: Vec<&Vector> = points
                .iter()
                .zip(&clustering.assignments)
                .filter(|(_, &a)| a == j)
                .map(|(p, _)| p)
                .collect();
            let (mean, cov) = moments(&members);
            (members.len() as f64 / n, mean, cov + Matrix::identity(d, d) * jitter)
        })
        .collect();
    comps.sort_by(|a, b| lex_cmp(&a.1, &b.1));
    let weights: Vec<f64> = comps.iter().map(|c| c.0).collect();
    let components = comps
        .into_iter()
        .map(|(_, mean, cov)| ComponentMoments::new(mean, cov, 0.0))
        .collect::<Result<Vec<_>>>()?;
    // cluster fractions can miss 1 by an ulp
    let total: f64 = weights.iter().sum();
    MixtureBelief::new(components, weights.iter().map(|w| w / total).collect())
}

/// Within-cluster sum of squares for each `k`, for an elbow plot.
pub fn elbow_curve(sample: &ParameterSample, ks: &[usize], seed: u64) -> Result<Vec<(usize, f64)>> {
    let mut points: Vec<Vector> = sample.thetas().iter().map(|t| t.theta().clone()).collect();
    points.sort_by(lex_cmp);
    ks.iter()
        .map(|&k| kmeans(&points, k, &KMeansConfig::default(), seed).map(|c| (k, c.inertia)))
        .collect()
}

/// Single-component belief `N(theta0, tau I)` for when no training data is
/// available.
pub fn prior_belief(theta0: &LinearClassifier, tau: f64) -> Result<MixtureBelief> {
    let d = theta0.dim();
    let comp = ComponentMoments::new(theta0.theta().clone(), Matrix::identity(d, d) * tau, 0.0)?;
    Ok(MixtureBelief::single(comp))
}

/// Any scoring model with outputs in `[0, 1]`.
pub trait BlackBoxModel: Sync {
    fn predict_proba(&self, x: &FeatureVector) -> f64;
}

/// `sigmoid(theta . x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel(pub LinearClassifier);

impl BlackBoxModel for LogisticModel {
    fn predict_proba(&self, x: &FeatureVector) -> f64 {
        sigmoid(self.0.score(x.as_vector()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateConfig {
    pub n_perturb: usize,
    /// Perturbation standard deviation per feature.
    pub std: f64,
    /// Kernel width; `None` uses `0.75 sqrt(d - 1)`.
    pub kernel_width: Option<f64>,
    pub ridge: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            n_perturb: 1000,
            std: 0.3,
            kernel_width: None,
            ridge: 1e-3,
        }
    }
}

/// Weighted ridge fit of `model(z) - 0.5` on Gaussian perturbations `z` of
/// `x0`; the coefficients (bias last) form the surrogate classifier.
pub fn local_linear_surrogate(
    model: &dyn BlackBoxModel,
    x0: &FeatureVector,
    cfg: &SurrogateConfig,
    seed: u64,
) -> Result<LinearClassifier> {
    if cfg.n_perturb < 50 {
        return Err(Error::InvalidConfig(format!(
            "n_perturb must be >= 50, got {}",
            cfg.n_perturb
        )));
    }
    let normal =
        Normal::new(0.0, cfg.std).map_err(|e| Error::InvalidConfig(format!("perturbation std {}: {e}", cfg.std)))?;
    let d = x0.dim();
    let width = cfg.kernel_width.unwrap_or(0.75 * ((d - 1) as f64).sqrt());
    if !(width > 0.0) {
        return Err(Error::InvalidConfig(format!("kernel width must be > 0, got {width}")));
    }
    let mut rng = task_rng(seed, 0);
    let base = x0.features();
    let mut design = Matrix::zeros(cfg.n_perturb, d);
    let mut target = Vector::zeros(cfg.n_perturb);
    let mut weight = Vector::zeros(cfg.n_perturb);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..cfg.n_perturb {
        let z: Vec<f64> = base.iter().map(|&b| b + normal.sample(&mut rng)).collect();
        let dist2: f64 = z.iter().zip(base).map(|(a, b)| (a - b) * (a - b)).sum();
        let zv = FeatureVector::from_features(&z)?;
        let score = model.predict_proba(&zv);
        lo = lo.min(score);
        hi = hi.max(score);
        design.row_mut(i).copy_from(&zv.as_vector().transpose());
        target[i] = score - 0.5;
        weight[i] = (-dist2 / (width * width)).exp();
    }
    if hi - lo <= 1e-12 {
        return Err(Error::DegenerateScores);
    }
    let wx = Matrix::from_diagonal(&weight) * &design;
    let mut gram = design.transpose() * &wx;
    for j in 0..d {
        gram[(j, j)] += cfg.ridge;
    }
    let rhs = wx.transpose() * target;
    let coef = Cholesky::new(gram)
        .ok_or_else(|| Error::InvalidClassifier("surrogate normal equations are singular".into()))?
        .solve(&rhs);
    LinearClassifier::new(coef)
}

/// Mean and covariance (plus `jitter * I`) of `n_fits` surrogates at `x0`,
/// fit `i` using stream `i` of `seed`.
pub fn surrogate_belief(
    model: &dyn BlackBoxModel,
    x0: &FeatureVector,
    n_fits: usize,
    cfg: &SurrogateConfig,
    jitter: f64,
    seed: u64,
) -> Result<MixtureBelief> {
    let fits = (0..n_fits)
        .map(|i| {
            let mut rng = task_rng(seed, i as u64);
            local_linear_surrogate(model, x0, cfg, rng.random())
        })
        .collect::<Result<Vec<_>>>()?;
    let sample = ParameterSample::new(fits)?;
    fit_mixture_moments(&sample, 1, jitter, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n: usize, seed: u64) -> LabeledDataset {
        let mut rng = task_rng(seed, 0);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let y = i % 2 == 1;
            let mu = if y { 3.0 } else { -3.0 };
            rows.push(mu + noise.sample(&mut rng));
            rows.push(mu + noise.sample(&mut rng));
            labels.push(y);
        }
        LabeledDataset::new(Matrix::from_row_slice(n, 2, &rows), labels).unwrap()
    }

    fn accuracy(data: &LabeledDataset, clf: &LinearClassifier) -> f64 {
        (0..data.len())
            .filter(|&i| clf.accepts(data.instance(i).as_vector()) == data.labels()[i])
            .count() as f64
            / data.len() as f64
    }

    fn cosine(a: &Vector, b: &Vector) -> f64 {
        a.dot(b) / (a.norm() * b.norm())
    }

    #[test]
    fn separable_blobs_are_learned() {
        let data = blobs(400, 1);
        let fit = train_logistic(&data, &TrainConfig::default()).unwrap();
        assert!(fit.converged, "{}", fit.grad_norm);
        assert!(accuracy(&data, &fit.classifier) >= 0.99);
    }

    #[test]
    fn flipped_labels_flip_the_direction() {
        let data = blobs(200, 2);
        let flipped = LabeledDataset::new(data.features().clone(), data.labels().iter().map(|l| !l).collect()).unwrap();
        let a = train_logistic(&data, &TrainConfig::default()).unwrap().classifier;
        let b = train_logistic(&flipped, &TrainConfig::default()).unwrap().classifier;
        assert!(cosine(a.theta(), b.theta()) <= -0.99);
    }

    #[test]
    fn symmetric_points_put_the_boundary_at_the_midpoint() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let y = i % 2 == 0;
            rows.extend_from_slice(&[if y { 1.0 } else { -1.0 }, 0.0]);
            labels.push(y);
        }
        let data = LabeledDataset::new(Matrix::from_row_slice(20, 2, &rows), labels).unwrap();
        let clf = train_logistic(&data, &TrainConfig::default()).unwrap().classifier;
        assert!(clf.score(&Vector::from_row_slice(&[0.0, 0.0, 1.0])).abs() < 1e-3);
    }

    #[test]
    fn training_rejects_small_or_one_class_data() {
        let data =
            LabeledDataset::new(Matrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]), vec![false, true, true]).unwrap();
        assert!(matches!(
            train_logistic(&data, &TrainConfig::default()),
            Err(Error::InvalidDataset(_))
        ));
        let data = LabeledDataset::new(Matrix::zeros(12, 1), vec![true; 12]).unwrap();
        assert!(matches!(
            train_logistic(&data, &TrainConfig::default()),
            Err(Error::InvalidDataset(_))
        ));
    }

    #[test]
    fn bootstrap_concentrates_around_the_full_fit() {
        let data = blobs(300, 3);
        let full = train_logistic(&data, &TrainConfig::default()).unwrap().classifier;
        let sample = bootstrap_parameters(&data, 100, 0.8, &TrainConfig::default(), 5).unwrap();
        assert_eq!(sample.len(), 100);
        assert!(cosine(&sample.mean(), full.theta()) >= 0.99);
    }

    #[test]
    fn full_subsamples_give_identical_fits() {
        let data = blobs(50, 4);
        let sample = bootstrap_parameters(&data, 2, 1.0, &TrainConfig::default(), 9).unwrap();
        assert_eq!(sample.thetas()[0], sample.thetas()[1]);
    }

    #[test]
    fn bootstrap_needs_two_fits() {
        let data = blobs(50, 4);
        for b in [0, 1] {
            assert!(matches!(
                bootstrap_parameters(&data, b, 0.8, &TrainConfig::default(), 0),
                Err(Error::TooFewSamples(_))
            ));
        }
    }

    fn clf(x: &[f64]) -> LinearClassifier {
        LinearClassifier::new(Vector::from_row_slice(x)).unwrap()
    }

    #[test]
    fn single_cluster_is_sample_moments() {
        let sample = ParameterSample::new(vec![clf(&[1.0, 0.0]), clf(&[3.0, 2.0])]).unwrap();
        let belief = fit_mixture_moments(&sample, 1, 1e-4, 0).unwrap();
        assert_eq!(belief.weights(), &[1.0]);
        let c = &belief.components()[0];
        assert_eq!(c.mean(), &Vector::from_row_slice(&[2.0, 1.0]));
        let expected = Matrix::from_row_slice(2, 2, &[1.0 + 1e-4, 1.0, 1.0, 1.0 + 1e-4]);
        assert!((c.covariance() - expected).abs().max() < 1e-15);
    }

    #[test]
    fn identical_samples_give_pure_jitter() {
        let sample = ParameterSample::new(vec![clf(&[0.1, 0.7, -0.3]); 7]).unwrap();
        let belief = fit_mixture_moments(&sample, 1, 1e-4, 0).unwrap();
        assert_eq!(belief.components()[0].covariance(), &(Matrix::identity(3, 3) * 1e-4));
    }

    #[test]
    fn two_clouds_are_recovered() {
        let mut rng = task_rng(12, 0);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let mut thetas = Vec::new();
        for i in 0..100 {
            let c = if i < 30 { [2.0, -1.0] } else { [-1.0, 1.0] };
            thetas.push(clf(&[c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)]));
        }
        let belief = fit_mixture_moments(&ParameterSample::new(thetas).unwrap(), 2, 1e-4, 3).unwrap();
        let m = belief.components();
        assert!((m[0].mean() - Vector::from_row_slice(&[-1.0, 1.0])).norm() < 0.1);
        assert!((m[1].mean() - Vector::from_row_slice(&[2.0, -1.0])).norm() < 0.1);
        assert!((belief.weights()[0] - 0.7).abs() < 0.05);
        assert!((belief.weights()[1] - 0.3).abs() < 0.05);
    }

    #[test]
    fn too_few_points_for_k() {
        let sample = ParameterSample::new(vec![clf(&[1.0, 0.0]), clf(&[3.0, 2.0])]).unwrap();
        assert!(matches!(
            fit_mixture_moments(&sample, 3, 1e-4, 0),
            Err(Error::TooFewSamples(_))
        ));
    }

    #[test]
    fn elbow_is_non_increasing_on_clouds() {
        let thetas: Vec<_> = (0..40)
            .map(|i| clf(&[(i % 4) as f64 + 1.0, (i % 3) as f64 + 0.1 * i as f64]))
            .collect();
        let curve = elbow_curve(&ParameterSample::new(thetas).unwrap(), &[1, 2, 3, 4], 0).unwrap();
        assert!(curve.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-9));
    }

    #[test]
    fn prior_only_belief() {
        let b = prior_belief(&clf(&[1.0, -1.0, 0.5]), 0.1).unwrap();
        assert_eq!(b.components()[0].covariance(), &(Matrix::identity(3, 3) * 0.1));
    }

    struct Constant;
    impl BlackBoxModel for Constant {
        fn predict_proba(&self, _: &FeatureVector) -> f64 {
            0.3
        }
    }

    #[test]
    fn surrogate_recovers_a_linear_model() {
        let theta = Vector::from_row_slice(&[1.5, -0.5, 0.2]);
        let model = LogisticModel(LinearClassifier::new(theta.clone()).unwrap());
        let x0 = FeatureVector::from_features(&[0.1, 0.3]).unwrap();
        let s = local_linear_surrogate(&model, &x0, &SurrogateConfig::default(), 4).unwrap();
        assert!(cosine(s.theta(), &theta) >= 0.99, "{}", cosine(s.theta(), &theta));
        assert_eq!(
            s,
            local_linear_surrogate(&model, &x0, &SurrogateConfig::default(), 4).unwrap()
        );
    }

    #[test]
    fn constant_model_is_degenerate() {
        let x0 = FeatureVector::from_features(&[0.1, 0.3]).unwrap();
        assert_eq!(
            local_linear_surrogate(&Constant, &x0, &SurrogateConfig::default(), 0),
            Err(Error::DegenerateScores)
        );
    }
}
