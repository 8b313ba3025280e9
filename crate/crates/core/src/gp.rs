//! Covariance assembly with heteroscedastic known output noise, log marginal
//! likelihood, predictive equations and Gaussian-comparison metrics.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::{KernelParams, Matern32, StationaryKernel};
use crate::numopt::nelder_mead;

const LN_2PI: f64 = 1.8378770664093453;

/// Observed noisy inputs and outputs with known per-point noise levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    t: Vec<f64>,
    sigma_t: Vec<f64>,
    y: Vec<f64>,
    sigma_y: Vec<f64>,
}

impl Dataset {
    pub fn new(t: Vec<f64>, sigma_t: Vec<f64>, y: Vec<f64>, sigma_y: Vec<f64>) -> Result<Self> {
        let n = t.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        for (name, v) in [("sigma_t", &sigma_t), ("y", &y), ("sigma_y", &sigma_y)] {
            if v.len() != n {
                return Err(Error::LengthMismatch {
                    what: name,
                    expected: n,
                    got: v.len(),
                });
            }
        }
        let all = t.iter().chain(&sigma_t).chain(&y).chain(&sigma_y);
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidDataset("non-finite value".into()));
        }
        if sigma_t.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidDataset("sigma_t must be > 0".into()));
        }
        if sigma_y.iter().any(|&s| s < 0.0) {
            return Err(Error::InvalidDataset("sigma_y must be >= 0".into()));
        }
        Ok(Self {
            t,
            sigma_t,
            y,
            sigma_y,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn sigma_t(&self) -> &[f64] {
        &self.sigma_t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn sigma_y(&self) -> &[f64] {
        &self.sigma_y
    }

    /// Dataset with all four columns reversed.
    pub fn reversed(&self) -> Dataset {
        let rev = |v: &[f64]| v.iter().rev().cloned().collect();
        Dataset {
            t: rev(&self.t),
            sigma_t: rev(&self.sigma_t),
            y: rev(&self.y),
            sigma_y: rev(&self.sigma_y),
        }
    }

    /// True when the observed inputs trend upward with the row index
    /// (least-squares slope of `t` against the index is positive). Used to
    /// canonicalize datasets to the internal descending convention.
    pub fn ascending_trend(&self) -> bool {
        let n = self.t.len();
        if n < 2 {
            return false;
        }
        let mean_i = (n as f64 - 1.0) / 2.0;
        let mean_t = self.t.iter().sum::<f64>() / n as f64;
        let cov: f64 = self
            .t
            .iter()
            .enumerate()
            .map(|(i, &t)| (i as f64 - mean_i) * (t - mean_t))
            .sum();
        cov > 0.0
    }
}

/// Gaussian predictive distribution at one query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPrediction {
    pub mean: f64,
    pub var: f64,
}

/// Factored training covariance `K = k(tau, tau) + diag(sigma_y^2)` together
/// with `gamma = K^{-1} y` and `log |K|`.
#[derive(Debug, Clone)]
pub struct GPWorkspace {
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    gamma: DVector<f64>,
    log_det: f64,
    jitter: f64,
}

impl GPWorkspace {
    /// Assembles and factors the covariance. Cholesky failures escalate a
    /// jitter ladder `1e-10 -> 1e-8 -> 1e-6` (times the signal variance)
    /// before giving up; near-duplicate latent inputs arise routinely during
    /// optimization.
    pub fn build<K: StationaryKernel>(
        tau: &[f64],
        y: &[f64],
        sigma_y: &[f64],
        kernel: &K,
    ) -> Result<Self> {
        let n = tau.len();
        if y.len() != n {
            return Err(Error::LengthMismatch {
                what: "y",
                expected: n,
                got: y.len(),
            });
        }
        if sigma_y.len() != n {
            return Err(Error::LengthMismatch {
                what: "sigma_y",
                expected: n,
                got: sigma_y.len(),
            });
        }
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = kernel.value(tau[i], tau[j]);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
            cov[(i, i)] += sigma_y[i] * sigma_y[i];
        }
        let scale = kernel.variance();
        let mut jitter = 0.0;
        loop {
            let mut attempt = cov.clone();
            if jitter > 0.0 {
                for i in 0..n {
                    attempt[(i, i)] += jitter;
                }
            }
            if let Some(chol) = Cholesky::new(attempt) {
                let log_det = 2.0 * chol.l_dirty().diagonal().map(f64::ln).sum();
                let gamma = chol.solve(&DVector::from_column_slice(y));
                if jitter > 0.0 {
                    for i in 0..n {
                        cov[(i, i)] += jitter;
                    }
                }
                return Ok(Self {
                    cov,
                    chol,
                    gamma,
                    log_det,
                    jitter,
                });
            }
            jitter = if jitter == 0.0 {
                1e-10 * scale
            } else {
                jitter * 100.0
            };
            if jitter > 1e-6 * scale * 1.0000001 {
                return Err(Error::NotPositiveDefinite);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn gamma(&self) -> &DVector<f64> {
        &self.gamma
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Solves `K x = b`.
    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// Solves `K X = B` column-wise.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// Dense `K^{-1}`, for the derivative recursions and MCMC refreshes.
    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.solve(&DMatrix::identity(self.len(), self.len()))
    }
}

/// Gaussian log marginal likelihood
/// `-1/2 y' K^{-1} y - 1/2 log |K| - n/2 log 2|pi`.
pub fn log_marginal(ws: &GPWorkspace, y: &[f64]) -> f64 {
    let n = ws.len();
    let quad: f64 = y.iter().zip(ws.gamma.iter()).map(|(a, b)| a * b).sum();
    -0.5 * quad - 0.5 * ws.log_det - 0.5 * n as f64 * LN_2PI
}

/// Predictive mean and variance at `tau_star`; the variance is clamped at 0.
pub fn predict<K: StationaryKernel>(
    tau_star: f64,
    tau: &[f64],
    ws: &GPWorkspace,
    kernel: &K,
) -> GaussianPrediction {
    let k_star = DVector::from_fn(tau.len(), |i, _| kernel.value(tau[i], tau_star));
    let mean = k_star.dot(ws.gamma());
    let var = kernel.value(tau_star, tau_star) - k_star.dot(&ws.solve_vec(&k_star));
    GaussianPrediction {
        mean,
        var: var.max(0.0),
    }
}

/// Symmetrized KL divergence between univariate Gaussians, the average of
/// the two directed divergences.
pub fn sym_kl(p: &GaussianPrediction, q: &GaussianPrediction) -> Result<f64> {
    if p.var <= 0.0 || q.var <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let kl = |a: &GaussianPrediction, b: &GaussianPrediction| {
        0.5 * ((a.var + (a.mean - b.mean).powi(2)) / b.var - 1.0 + (b.var / a.var).ln())
    };
    Ok(0.5 * (kl(p, q) + kl(q, p)))
}

/// Search box for kernel hyperparameters in log space, derived from the data
/// scales: `log sigma_f in [log(1e-3 sd(y)), log(1e3 sd(y))]` and
/// `log d in [log(1e-3 range(t)), log(10 range(t))]`.
#[derive(Debug, Clone, Copy)]
pub struct ThetaBounds {
    pub log_sigma_f: (f64, f64),
    pub log_d: (f64, f64),
}

impl ThetaBounds {
    pub fn from_data(t: &[f64], y: &[f64]) -> Self {
        let n = y.len().max(1) as f64;
        let mean = y.iter().sum::<f64>() / n;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };
        let max = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = t.iter().cloned().fold(f64::INFINITY, f64::min);
        let range = max - min;
        let range = if range > 0.0 { range } else { 1.0 };
        Self {
            log_sigma_f: ((1e-3 * sd).ln(), (1e3 * sd).ln()),
            log_d: ((1e-3 * range).ln(), (10.0 * range).ln()),
        }
    }

    pub fn as_box(&self) -> [(f64, f64); 2] {
        [self.log_sigma_f, self.log_d]
    }

    pub fn clamp(&self, log_sigma_f: f64, log_d: f64) -> (f64, f64) {
        (
            log_sigma_f.clamp(self.log_sigma_f.0, self.log_sigma_f.1),
            log_d.clamp(self.log_d.0, self.log_d.1),
        )
    }

    /// A degenerate box pinning the parameters at `theta`, used when the
    /// hyperparameters are known.
    pub fn pinned(theta: &KernelParams) -> Self {
        let ls = theta.sigma_f().ln();
        let ld = theta.d().ln();
        Self {
            log_sigma_f: (ls, ls),
            log_d: (ld, ld),
        }
    }
}

/// Settings for the hyperparameter search.
#[derive(Debug, Clone)]
pub struct GpFitConfig {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for GpFitConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            seed: 0,
            max_iter: 200,
        }
    }
}

/// Maximizes the log marginal likelihood over the kernel hyperparameters by
/// multi-start Nelder–Mead in log space, with the latent inputs taken equal
/// to the observed `t` (no input-noise handling). Returns the optimal
/// parameters and that latent input.
pub fn fit_standard_gp(dataset: &Dataset, cfg: &GpFitConfig) -> Result<(KernelParams, Vec<f64>)> {
    let bounds = ThetaBounds::from_data(dataset.t(), dataset.y());
    let theta = maximize_marginal(dataset.t(), dataset.y(), dataset.sigma_y(), &bounds, cfg)?;
    Ok((theta, dataset.t().to_vec()))
}

/// Shared hyperparameter search over a fixed latent input.
pub(crate) fn maximize_marginal(
    tau: &[f64],
    y: &[f64],
    sigma_y: &[f64],
    bounds: &ThetaBounds,
    cfg: &GpFitConfig,
) -> Result<KernelParams> {
    let objective = |x: &[f64]| -> f64 {
        let (ls, ld) = bounds.clamp(x[0], x[1]);
        let params = match KernelParams::new(ls.exp(), ld.exp()) {
            Ok(p) => p,
            Err(_) => return f64::INFINITY,
        };
        let kernel = Matern32::new(params);
        match GPWorkspace::build(tau, y, sigma_y, &kernel) {
            Ok(ws) => -log_marginal(&ws, y),
            Err(_) => f64::INFINITY,
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let b = bounds.as_box();
    let mut starts = Vec::with_capacity(cfg.restarts.max(1));
    // first start at the center of the box, the rest drawn uniformly
    starts.push(vec![
        0.5 * (b[0].0 + b[0].1),
        0.5 * (b[1].0 + b[1].1),
    ]);
    while starts.len() < cfg.restarts.max(1) {
        starts.push(vec![
            rng.gen_range(b[0].0..=b[0].1.max(b[0].0 + f64::MIN_POSITIVE)),
            rng.gen_range(b[1].0..=b[1].1.max(b[1].0 + f64::MIN_POSITIVE)),
        ]);
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        let step = [
            0.1 * (b[0].1 - b[0].0).max(1e-3),
            0.1 * (b[1].1 - b[1].0).max(1e-3),
        ];
        let (x, fx) = nelder_mead(objective, &start, &step, &b, cfg.max_iter, 1e-10);
        if fx.is_finite() && best.as_ref().map(|(_, f)| fx < *f).unwrap_or(true) {
            best = Some((x, fx));
        }
    }
    let (x, _) = best.ok_or(Error::OptimizationFailed("all hyperparameter restarts failed"))?;
    let (ls, ld) = bounds.clamp(x[0], x[1]);
    KernelParams::new(ls.exp(), ld.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy_kernel(sigma_f: f64, d: f64) -> Matern32 {
        Matern32::new(KernelParams::new(sigma_f, d).unwrap())
    }

    #[test]
    fn single_point_workspace() {
        let k = toy_kernel(2.0, 1.0);
        let ws = GPWorkspace::build(&[0.3], &[1.0], &[0.0], &k).unwrap();
        assert_relative_eq!(ws.cov()[(0, 0)], 4.0, max_relative = 1e-12);
        assert_relative_eq!(ws.log_det(), 4f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn duplicate_inputs_with_noise_factorize() {
        let k = toy_kernel(1.0, 1.0);
        let ws = GPWorkspace::build(&[1.0, 1.0], &[0.5, 0.6], &[0.3, 0.3], &k).unwrap();
        assert!(ws.log_det().is_finite());
        assert_relative_eq!(ws.cov()[(0, 1)], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn duplicate_inputs_without_noise_use_jitter() {
        let k = toy_kernel(1.0, 1.0);
        let ws = GPWorkspace::build(&[1.0, 1.0], &[0.5, 0.5], &[0.0, 0.0], &k).unwrap();
        assert!(ws.jitter() > 0.0);
        assert!(ws.log_det().is_finite());
    }

    #[test]
    fn gamma_matches_dense_solve() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let k = toy_kernel(1.3, 0.8);
        let n = 7;
        let mut tau: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        tau.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let sy: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.3)).collect();
        let ws = GPWorkspace::build(&tau, &y, &sy, &k).unwrap();
        let dense = ws.cov().clone().try_inverse().unwrap() * DVector::from_column_slice(&y);
        for i in 0..n {
            assert!((ws.gamma()[i] - dense[i]).abs() < 1e-8, "row {i}");
        }
        // residual of K gamma = y
        let resid = ws.cov() * ws.gamma() - DVector::from_column_slice(&y);
        assert!(resid.amax() < 1e-8);
    }

    #[test]
    fn scalar_log_marginal() {
        let k = toy_kernel(1.0, 1.0);
        let ws = GPWorkspace::build(&[0.0], &[0.0], &[0.0], &k).unwrap();
        assert_relative_eq!(
            log_marginal(&ws, &[0.0]),
            -0.5 * LN_2PI,
            max_relative = 1e-12
        );
        let ws = GPWorkspace::build(&[0.0], &[1.0], &[0.0], &k).unwrap();
        assert_relative_eq!(
            log_marginal(&ws, &[1.0]),
            -0.5 - 0.5 * LN_2PI,
            max_relative = 1e-12
        );
    }

    #[test]
    fn log_marginal_matches_dense_normal_density() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let k = toy_kernel(0.9, 1.7);
        let n = 5;
        let mut tau: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
        tau.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let sy: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..0.4)).collect();
        let ws = GPWorkspace::build(&tau, &y, &sy, &k).unwrap();

        let cov = ws.cov().clone();
        let yv = DVector::from_column_slice(&y);
        let quad = yv.dot(&(cov.clone().try_inverse().unwrap() * &yv));
        let det = cov.determinant();
        let dense = -0.5 * quad - 0.5 * det.ln() - 0.5 * n as f64 * LN_2PI;
        assert!((log_marginal(&ws, &y) - dense).abs() < 1e-8);
    }

    #[test]
    fn log_marginal_permutation_invariant() {
        let k = toy_kernel(1.1, 1.2);
        let tau = [3.0, 1.0, -2.0];
        let y = [0.4, -0.2, 0.9];
        let sy = [0.1, 0.2, 0.15];
        let a = log_marginal(&GPWorkspace::build(&tau, &y, &sy, &k).unwrap(), &y);
        let perm = [1usize, 2, 0];
        let taup: Vec<f64> = perm.iter().map(|&i| tau[i]).collect();
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let syp: Vec<f64> = perm.iter().map(|&i| sy[i]).collect();
        let b = log_marginal(&GPWorkspace::build(&taup, &yp, &syp, &k).unwrap(), &yp);
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn noiseless_interpolation_and_prior_reversion() {
        let k = toy_kernel(1.0, 1.0);
        let tau = [2.0, 1.0, 0.0];
        let y = [0.7, -0.3, 0.2];
        let sy = [0.0; 3];
        let ws = GPWorkspace::build(&tau, &y, &sy, &k).unwrap();
        let at_train = predict(2.0, &tau, &ws, &k);
        assert!((at_train.mean - 0.7).abs() < 1e-6);
        assert!(at_train.var < 1e-8);
        let far = predict(2.0 + 25.0, &tau, &ws, &k);
        assert!(far.mean.abs() < 1e-3);
        assert!((far.var - 1.0).abs() < 1e-3);
    }

    #[test]
    fn scalar_prediction_formula() {
        let k = toy_kernel(1.4, 0.9);
        let tau = [0.5];
        let y = [2.0];
        let ws = GPWorkspace::build(&tau, &y, &[0.0], &k).unwrap();
        let p = predict(1.3, &tau, &ws, &k);
        let expect = k.value(1.3, 0.5) / k.variance() * y[0];
        assert_relative_eq!(p.mean, expect, max_relative = 1e-10);
    }

    #[test]
    fn large_noise_shrinks_to_prior() {
        let k = toy_kernel(1.0, 1.0);
        let tau = [0.0];
        let y = [5.0];
        let huge = [100.0];
        let ws = GPWorkspace::build(&tau, &y, &huge, &k).unwrap();
        let p = predict(0.0, &tau, &ws, &k);
        assert!(p.mean.abs() < 0.01);
    }

    #[test]
    fn sym_kl_cases() {
        let p = GaussianPrediction { mean: 0.0, var: 1.0 };
        assert_eq!(sym_kl(&p, &p).unwrap(), 0.0);

        let q = GaussianPrediction { mean: 1.0, var: 1.0 };
        assert_relative_eq!(sym_kl(&p, &q).unwrap(), 0.5, max_relative = 1e-12);
        assert_eq!(sym_kl(&p, &q).unwrap(), sym_kl(&q, &p).unwrap());

        let r = GaussianPrediction { mean: 0.0, var: 4.0 };
        assert_relative_eq!(sym_kl(&p, &r).unwrap(), 0.5625, max_relative = 1e-12);

        let degenerate = GaussianPrediction { mean: 0.0, var: 0.0 };
        assert!(sym_kl(&p, &degenerate).is_err());
    }

    #[test]
    fn standard_gp_recovers_hyperparameters() {
        use rand_distr::{Distribution, StandardNormal};
        use rand::SeedableRng;
        let truth = KernelParams::new(1.5, 2.0).unwrap();
        let kernel = Matern32::new(truth);
        let n = 25;
        let tau: Vec<f64> = (0..n).map(|i| 10.0 - 20.0 * i as f64 / (n - 1) as f64).collect();
        // noise-free draw from the GP prior
        let cov = DMatrix::from_fn(n, n, |i, j| kernel.value(tau[i], tau[j]));
        let chol = Cholesky::new(cov + DMatrix::identity(n, n) * 1e-10).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let y = chol.l() * z;
        let dataset = Dataset::new(
            tau.clone(),
            vec![0.1; n],
            y.iter().cloned().collect(),
            vec![1e-3; n],
        )
        .unwrap();
        let (theta, tau_out) = fit_standard_gp(&dataset, &GpFitConfig::default()).unwrap();
        assert_eq!(tau_out, tau);
        assert!(
            (theta.sigma_f().ln() - truth.sigma_f().ln()).abs() < 0.5,
            "sigma_f {} vs {}",
            theta.sigma_f(),
            truth.sigma_f()
        );
        assert!(
            (theta.d().ln() - truth.d().ln()).abs() < 0.5,
            "d {} vs {}",
            theta.d(),
            truth.d()
        );
    }

    #[test]
    fn constant_output_hits_lower_bound() {
        let n = 10;
        let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let dataset = Dataset::new(t, vec![0.5; n], vec![0.0; n], vec![0.1; n]).unwrap();
        let (theta, _) = fit_standard_gp(&dataset, &GpFitConfig::default()).unwrap();
        // sd(y) = 0 falls back to 1.0, so the box is [1e-3, 1e3]
        assert!(theta.sigma_f() <= 1.1e-3, "sigma_f {}", theta.sigma_f());
    }

    #[test]
    fn fit_is_deterministic() {
        let n = 12;
        let t: Vec<f64> = (0..n).map(|i| i as f64 * 0.7).collect();
        let y: Vec<f64> = t.iter().map(|x| (0.8 * x).sin()).collect();
        let dataset = Dataset::new(t, vec![0.2; n], y, vec![0.05; n]).unwrap();
        let cfg = GpFitConfig {
            seed: 7,
            ..Default::default()
        };
        let (a, _) = fit_standard_gp(&dataset, &cfg).unwrap();
        let (b, _) = fit_standard_gp(&dataset, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dataset_validation() {
        assert!(matches!(
            Dataset::new(vec![], vec![], vec![], vec![]).unwrap_err(),
            Error::EmptyDataset
        ));
        assert!(Dataset::new(vec![1.0], vec![0.0], vec![1.0], vec![0.0]).is_err());
        assert!(Dataset::new(vec![1.0], vec![0.1], vec![1.0], vec![-0.1]).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], vec![0.1], vec![1.0, 2.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn trend_detection() {
        let up = Dataset::new(
            vec![0.0, 1.1, 0.9, 2.5],
            vec![0.1; 4],
            vec![0.0; 4],
            vec![0.0; 4],
        )
        .unwrap();
        assert!(up.ascending_trend());
        assert!(!up.reversed().ascending_trend());
    }
}
