//! Metropolis–Hastings baseline over the latent inputs and kernel
//! hyperparameters, with ordering-constraint rejection and
//! Woodbury-accelerated covariance-inverse updates.
//!
//! One sweep proposes every latent coordinate in turn with a Gaussian random
//! walk, discarding proposals that break the descending order, and then
//! updates each hyperparameter with a lognormal random walk under a uniform
//! prior on the log scale. Changing a single `tau_i` alters only row and
//! column `i` of the covariance, which a pair of rank-one updates propagates
//! to the stored inverse in `O(n^2)` instead of an `O(n^3)` refactorization.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gp::{Dataset, GaussianPrediction, ThetaBounds};
use crate::kernel::{KernelParams, Matern32, StationaryKernel};
use crate::transform::{from_latent, repaired_from_observed};

const LN_2PI: f64 = 1.8378770664093453;
// fixed diagonal jitter (times the signal variance) so near-duplicate latent
// inputs stay factorizable throughout the chain
const CHAIN_JITTER: f64 = 1e-10;

/// Chain settings. `proposal_scale` defaults to the per-point input noise
/// level; `theta_bounds` defaults to the data-derived hyperparameter box.
#[derive(Debug, Clone)]
pub struct ChainConfig {
    /// Full sweeps over all coordinates.
    pub iterations: usize,
    /// Per-coordinate random-walk standard deviation (None: `sigma_t`).
    pub proposal_scale: Option<Vec<f64>>,
    /// Fraction of sweeps discarded as burn-in.
    pub burn_in_fraction: f64,
    /// Full inverse recompute interval, in sweeps.
    pub refresh_period: usize,
    pub seed: u64,
    /// Starting hyperparameters (None: data-scale heuristic).
    pub theta_init: Option<KernelParams>,
    /// Uniform prior box for `log theta` (None: derived from the data).
    pub theta_bounds: Option<ThetaBounds>,
    /// Lognormal random-walk scale for the hyperparameter updates.
    pub theta_proposal_scale: f64,
    /// Cap on retained samples; longer runs are subsampled uniformly.
    pub max_stored: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            proposal_scale: None,
            burn_in_fraction: 0.5,
            refresh_period: 250,
            seed: 0,
            theta_init: None,
            theta_bounds: None,
            theta_proposal_scale: 0.05,
            max_stored: 10_000,
        }
    }
}

/// Post-burn-in summary of one chain.
#[derive(Debug, Clone)]
pub struct ChainSummary {
    /// Posterior mean of the latent inputs, in the original row order.
    pub tau_mean: Vec<f64>,
    /// Posterior standard deviation of the latent inputs.
    pub tau_std: Vec<f64>,
    /// Retained hyperparameter samples `(sigma_f, d)`.
    pub theta_samples: Vec<(f64, f64)>,
    pub acceptance_tau: f64,
    pub acceptance_theta: f64,
    /// Ordering-constraint violations observed in stored states (always 0).
    pub ordering_violations: usize,
    /// Predictive mixture moments at the query points, averaged over
    /// retained `(tau, theta)` samples.
    pub predictions: Vec<GaussianPrediction>,
    /// Largest `max|K_inv K - I|` observed right before an inverse refresh.
    pub max_inverse_drift: f64,
    /// Full inverse recomputes forced by singular rank-one updates.
    pub woodbury_fallbacks: usize,
}

/// In-place rank-one inverse update
/// `(K + u v')^{-1} = K^{-1} - K^{-1} u v' K^{-1} / (1 + v' K^{-1} u)`.
///
/// Returns the denominator `1 + v' K^{-1} u` (its log magnitude is the
/// determinant change). Fails without touching `k_inv` when the denominator
/// is within `1e-12` of zero.
pub fn woodbury_update(
    k_inv: &mut DMatrix<f64>,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<f64> {
    let kiu = &*k_inv * u;
    let ktv = k_inv.tr_mul(v); // v' K^{-1}, valid for asymmetric intermediates
    let denom = 1.0 + v.dot(&kiu);
    if denom.abs() < 1e-12 {
        return Err(Error::SingularUpdate);
    }
    let scale = 1.0 / denom;
    let n = k_inv.nrows();
    for c in 0..n {
        let w = ktv[c] * scale;
        if w != 0.0 {
            k_inv.column_mut(c).axpy(-w, &kiu, 1.0);
        }
    }
    Ok(denom)
}

/// Applies the covariance row/column change from moving `tau[i]` to
/// `new_val` as two rank-one updates on a copy of the inverse. Returns the
/// updated inverse and the log-determinant change. The diagonal is
/// unaffected: a stationary kernel has a constant zero-lag value.
pub fn row_col_update<K: StationaryKernel>(
    k_inv: &DMatrix<f64>,
    tau: &[f64],
    i: usize,
    new_val: f64,
    kernel: &K,
) -> Result<(DMatrix<f64>, f64)> {
    let n = tau.len();
    let mut delta = DVector::zeros(n);
    for j in 0..n {
        if j != i {
            delta[j] = kernel.value(new_val, tau[j]) - kernel.value(tau[i], tau[j]);
        }
    }
    let mut e_i = DVector::zeros(n);
    e_i[i] = 1.0;
    let mut out = k_inv.clone();
    let d1 = woodbury_update(&mut out, &e_i, &delta)?;
    let d2 = woodbury_update(&mut out, &delta, &e_i)?;
    let prod = d1 * d2;
    if prod <= 0.0 {
        // a valid SPD-to-SPD move keeps the determinant positive
        return Err(Error::SingularUpdate);
    }
    Ok((out, prod.ln()))
}

/// Current chain position with the cached covariance inverse, determinant
/// and unnormalized log posterior.
pub struct ChainState {
    tau: Vec<f64>,
    theta: KernelParams,
    k_inv: DMatrix<f64>,
    log_det: f64,
    quad: f64, // y' K^{-1} y
    log_post: f64,
    rng: ChaCha8Rng,
    proposal_scale: Vec<f64>,
    bounds: ThetaBounds,
    theta_step: f64,
    accepted_tau: u64,
    proposed_tau: u64,
    accepted_theta: u64,
    proposed_theta: u64,
    fallbacks: usize,
}

impl ChainState {
    /// Initializes the chain at the gap-repaired observed inputs.
    pub fn init(dataset: &Dataset, config: &ChainConfig) -> Result<Self> {
        let n = dataset.len();
        let tau = from_latent(&repaired_from_observed(dataset.t()))?.into_vec();
        let bounds = config
            .theta_bounds
            .unwrap_or_else(|| ThetaBounds::from_data(dataset.t(), dataset.y()));
        let theta = match config.theta_init {
            Some(t) => t,
            None => {
                let mean = dataset.y().iter().sum::<f64>() / n as f64;
                let sd = (dataset.y().iter().map(|y| (y - mean).powi(2)).sum::<f64>()
                    / n as f64)
                    .sqrt();
                let range = dataset.t().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    - dataset.t().iter().cloned().fold(f64::INFINITY, f64::min);
                let (ls, ld) = bounds.clamp(sd.max(1e-12).ln(), (range / 3.0).max(1e-12).ln());
                KernelParams::new(ls.exp(), ld.exp())?
            }
        };
        let proposal_scale = config
            .proposal_scale
            .clone()
            .unwrap_or_else(|| dataset.sigma_t().to_vec());
        if proposal_scale.len() != n {
            return Err(Error::LengthMismatch {
                what: "proposal_scale",
                expected: n,
                got: proposal_scale.len(),
            });
        }
        let mut state = Self {
            tau,
            theta,
            k_inv: DMatrix::zeros(n, n),
            log_det: 0.0,
            quad: 0.0,
            log_post: 0.0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            proposal_scale,
            bounds,
            theta_step: config.theta_proposal_scale,
            accepted_tau: 0,
            proposed_tau: 0,
            accepted_theta: 0,
            proposed_theta: 0,
            fallbacks: 0,
        };
        state.rebuild(dataset)?;
        Ok(state)
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn theta(&self) -> &KernelParams {
        &self.theta
    }

    pub fn k_inv(&self) -> &DMatrix<f64> {
        &self.k_inv
    }

    pub fn log_post(&self) -> f64 {
        self.log_post
    }

    fn kernel(&self) -> Matern32 {
        Matern32::new(self.theta)
    }

    fn build_cov(&self, tau: &[f64], dataset: &Dataset) -> DMatrix<f64> {
        let n = tau.len();
        let kernel = self.kernel();
        let jitter = CHAIN_JITTER * kernel.variance();
        let mut cov = DMatrix::from_fn(n, n, |i, j| kernel.value(tau[i], tau[j]));
        for i in 0..n {
            cov[(i, i)] += dataset.sigma_y()[i] * dataset.sigma_y()[i] + jitter;
        }
        cov
    }

    /// Recomputes the inverse, determinant and posterior from scratch.
    pub fn rebuild(&mut self, dataset: &Dataset) -> Result<()> {
        let cov = self.build_cov(&self.tau, dataset);
        let chol = Cholesky::new(cov).ok_or(Error::NotPositiveDefinite)?;
        self.log_det = 2.0 * chol.l_dirty().diagonal().map(f64::ln).sum();
        let n = self.tau.len();
        self.k_inv = chol.solve(&DMatrix::identity(n, n));
        self.refresh_cached_posterior(dataset);
        Ok(())
    }

    fn refresh_cached_posterior(&mut self, dataset: &Dataset) {
        let y = DVector::from_column_slice(dataset.y());
        self.quad = y.dot(&(&self.k_inv * &y));
        self.log_post = self.log_lik_y() + log_lik_t(&self.tau, dataset);
    }

    fn log_lik_y(&self) -> f64 {
        -0.5 * self.quad - 0.5 * self.log_det - 0.5 * self.tau.len() as f64 * LN_2PI
    }

    /// One Metropolis–Hastings update of coordinate `i`. Proposals breaking
    /// the ordering are rejected outright; otherwise the symmetric Gaussian
    /// proposal cancels and the acceptance probability is
    /// `min(1, exp(delta log posterior))`.
    pub fn mh_step(&mut self, i: usize, dataset: &Dataset) -> bool {
        self.proposed_tau += 1;
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let proposal = self.tau[i] + self.proposal_scale[i] * z;

        let upper_ok = i == 0 || self.tau[i - 1] > proposal;
        let lower_ok = i == self.tau.len() - 1 || proposal > self.tau[i + 1];
        if !upper_ok || !lower_ok {
            return false;
        }

        let kernel = self.kernel();
        let (new_inv, delta_log_det) =
            match row_col_update(&self.k_inv, &self.tau, i, proposal, &kernel) {
                Ok(ok) => ok,
                Err(_) => {
                    // singular rank-one step; fall back to a dense factorization
                    self.fallbacks += 1;
                    let mut tau_new = self.tau.clone();
                    tau_new[i] = proposal;
                    let cov = self.build_cov(&tau_new, dataset);
                    match Cholesky::new(cov) {
                        Some(chol) => {
                            let n = self.tau.len();
                            let log_det =
                                2.0 * chol.l_dirty().diagonal().map(f64::ln).sum();
                            (
                                chol.solve(&DMatrix::identity(n, n)),
                                log_det - self.log_det,
                            )
                        }
                        None => return false,
                    }
                }
            };

        let y = DVector::from_column_slice(dataset.y());
        let new_quad = y.dot(&(&new_inv * &y));
        let t = dataset.t()[i];
        let st = dataset.sigma_t()[i];
        let delta_lik_t = ((self.tau[i] - t).powi(2) - (proposal - t).powi(2)) / (2.0 * st * st);
        let delta = -0.5 * (new_quad - self.quad) - 0.5 * delta_log_det + delta_lik_t;

        let u: f64 = self.rng.gen();
        if u.ln() < delta {
            self.tau[i] = proposal;
            self.k_inv = new_inv;
            self.log_det += delta_log_det;
            self.quad = new_quad;
            self.log_post += delta;
            self.accepted_tau += 1;
            true
        } else {
            false
        }
    }

    /// Lognormal random-walk update of one hyperparameter component under a
    /// uniform prior on its log; the move is symmetric in log space.
    fn theta_step(&mut self, component: usize, dataset: &Dataset) -> bool {
        self.proposed_theta += 1;
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let mut log_sf = self.theta.sigma_f().ln();
        let mut log_d = self.theta.d().ln();
        match component {
            0 => log_sf += self.theta_step * z,
            _ => log_d += self.theta_step * z,
        }
        let inside = log_sf >= self.bounds.log_sigma_f.0
            && log_sf <= self.bounds.log_sigma_f.1
            && log_d >= self.bounds.log_d.0
            && log_d <= self.bounds.log_d.1;
        if !inside {
            return false;
        }
        let cand = match KernelParams::new(log_sf.exp(), log_d.exp()) {
            Ok(c) => c,
            Err(_) => return false,
        };

        let old_theta = self.theta;
        self.theta = cand;
        let cov = self.build_cov(&self.tau, dataset);
        let chol = match Cholesky::new(cov) {
            Some(c) => c,
            None => {
                self.theta = old_theta;
                return false;
            }
        };
        let n = self.tau.len();
        let new_log_det = 2.0 * chol.l_dirty().diagonal().map(f64::ln).sum();
        let new_inv = chol.solve(&DMatrix::identity(n, n));
        let y = DVector::from_column_slice(dataset.y());
        let new_quad = y.dot(&(&new_inv * &y));
        let delta = -0.5 * (new_quad - self.quad) - 0.5 * (new_log_det - self.log_det);

        let u: f64 = self.rng.gen();
        if u.ln() < delta {
            self.k_inv = new_inv;
            self.log_det = new_log_det;
            self.quad = new_quad;
            self.log_post += delta;
            self.accepted_theta += 1;
            true
        } else {
            self.theta = old_theta;
            false
        }
    }

    /// `max |K_inv K - I|` against a freshly assembled covariance.
    fn inverse_drift(&self, dataset: &Dataset) -> f64 {
        let cov = self.build_cov(&self.tau, dataset);
        let n = self.tau.len();
        let mut drift: f64 = 0.0;
        let prod = &self.k_inv * &cov;
        for r in 0..n {
            for c in 0..n {
                let expect = if r == c { 1.0 } else { 0.0 };
                drift = drift.max((prod[(r, c)] - expect).abs());
            }
        }
        drift
    }
}

fn log_lik_t(tau: &[f64], dataset: &Dataset) -> f64 {
    tau.iter()
        .zip(dataset.t())
        .zip(dataset.sigma_t())
        .map(|((tau_i, t_i), s)| -0.5 * LN_2PI - s.ln() - (tau_i - t_i).powi(2) / (2.0 * s * s))
        .sum()
}

/// Runs `iterations` full sweeps and summarizes the post-burn-in samples,
/// including predictive mixture moments at `query` points.
pub fn run_chain(dataset: &Dataset, config: &ChainConfig, query: &[f64]) -> Result<ChainSummary> {
    if config.iterations == 0 {
        return Err(Error::Config("iterations must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&config.burn_in_fraction) {
        return Err(Error::Config("burn_in_fraction must lie in [0, 1)".into()));
    }
    let reversed = dataset.ascending_trend();
    let canon = if reversed {
        dataset.reversed()
    } else {
        dataset.clone()
    };
    let n = canon.len();
    let mut state = ChainState::init(&canon, config)?;

    let burn_in = (config.iterations as f64 * config.burn_in_fraction) as usize;
    let retained_total = config.iterations - burn_in;
    let stride = retained_total.div_ceil(config.max_stored).max(1);

    let mut tau_sum = vec![0.0; n];
    let mut tau_sumsq = vec![0.0; n];
    let mut theta_samples = Vec::new();
    let mut stored = 0usize;
    let mut ordering_violations = 0usize;
    let mut max_drift: f64 = 0.0;

    let kq = query.len();
    let mut pred_mean_sum = vec![0.0; kq];
    let mut pred_m2_sum = vec![0.0; kq];
    let y = DVector::from_column_slice(canon.y());

    for sweep in 0..config.iterations {
        for i in 0..n {
            state.mh_step(i, &canon);
        }
        state.theta_step(0, &canon);
        state.theta_step(1, &canon);

        if state.tau.windows(2).any(|w| !(w[0] > w[1])) {
            ordering_violations += 1;
        }

        if (sweep + 1) % config.refresh_period == 0 {
            max_drift = max_drift.max(state.inverse_drift(&canon));
            state.rebuild(&canon)?;
        }

        if sweep >= burn_in && (sweep - burn_in) % stride == 0 {
            stored += 1;
            for (i, t) in state.tau.iter().enumerate() {
                tau_sum[i] += t;
                tau_sumsq[i] += t * t;
            }
            theta_samples.push((state.theta.sigma_f(), state.theta.d()));

            if kq > 0 {
                let kernel = state.kernel();
                let gamma = &state.k_inv * &y;
                for (qi, &x_star) in query.iter().enumerate() {
                    let k_star = DVector::from_fn(n, |j, _| kernel.value(state.tau[j], x_star));
                    let mean = k_star.dot(&gamma);
                    let var = (kernel.value(x_star, x_star)
                        - k_star.dot(&(&state.k_inv * &k_star)))
                    .max(0.0);
                    pred_mean_sum[qi] += mean;
                    pred_m2_sum[qi] += var + mean * mean;
                }
            }
        }
    }

    let cnt = stored.max(1) as f64;
    let mut tau_mean: Vec<f64> = tau_sum.iter().map(|s| s / cnt).collect();
    let mut tau_std: Vec<f64> = tau_sumsq
        .iter()
        .zip(&tau_mean)
        .map(|(sq, m)| (sq / cnt - m * m).max(0.0).sqrt())
        .collect();
    // mixture moments across retained samples (law of total variance)
    let predictions: Vec<GaussianPrediction> = (0..kq)
        .map(|qi| {
            let mean = pred_mean_sum[qi] / cnt;
            GaussianPrediction {
                mean,
                var: (pred_m2_sum[qi] / cnt - mean * mean).max(0.0),
            }
        })
        .collect();

    if reversed {
        tau_mean.reverse();
        tau_std.reverse();
    }

    Ok(ChainSummary {
        tau_mean,
        tau_std,
        theta_samples,
        acceptance_tau: state.accepted_tau as f64 / state.proposed_tau.max(1) as f64,
        acceptance_theta: state.accepted_theta as f64 / state.proposed_theta.max(1) as f64,
        ordering_violations,
        predictions,
        max_inverse_drift: max_drift,
        woodbury_fallbacks: state.fallbacks,
    })
}
