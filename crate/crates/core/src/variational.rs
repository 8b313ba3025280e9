//! Nonparametric Gaussian variational inference for the ordered
//! errors-in-variables GP model.
//!
//! The variational family is a uniformly weighted mixture of `K` diagonal
//! Gaussians over the unconstrained coordinates `(l_1 .. l_{n-1}, r)`. The
//! objective combines a Jensen lower bound on the mixture entropy, the exact
//! expected input log likelihood (computable in closed form from lognormal
//! moments) and a second-order Taylor approximation of the expected GP log
//! likelihood around each component mean. Minimizing it minimizes the KL
//! divergence from the mixture to the latent-input posterior, up to an
//! additive constant.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::deriv::DerivWorkspace;
use crate::error::{Error, Result};
use crate::gp::{Dataset, ThetaBounds};
use crate::kernel::{KernelParams, Matern32};
use crate::numopt::nelder_mead;
use crate::transform::{expected_tau, repaired_from_observed, TransformedLatent};

const LN_2PI: f64 = 1.8378770664093453;

/// Uniformly weighted mixture of `K` diagonal Gaussians over
/// `(l_1 .. l_{n-1}, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureQ {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl MixtureQ {
    pub fn new(m: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> Result<Self> {
        if m.is_empty() || m.len() != v.len() {
            return Err(Error::LengthMismatch {
                what: "mixture components",
                expected: m.len(),
                got: v.len(),
            });
        }
        let dim = m[0].len();
        if dim == 0 {
            return Err(Error::EmptyDataset);
        }
        for (mk, vk) in m.iter().zip(&v) {
            if mk.len() != dim || vk.len() != dim {
                return Err(Error::LengthMismatch {
                    what: "component dimension",
                    expected: dim,
                    got: mk.len().min(vk.len()),
                });
            }
            if mk.iter().any(|x| !x.is_finite()) {
                return Err(Error::Overflow("mixture mean"));
            }
            if vk.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(Error::NonPositiveParam {
                    name: "mixture variance",
                    value: f64::NAN,
                });
            }
        }
        Ok(Self { m, v })
    }

    pub fn n_components(&self) -> usize {
        self.m.len()
    }

    /// Number of coordinates, `n` (log-gaps plus the anchor).
    pub fn dim(&self) -> usize {
        self.m[0].len()
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.m[k]
    }

    pub fn var(&self, k: usize) -> &[f64] {
        &self.v[k]
    }

    /// Component mean as a latent transform `(l, r)`.
    pub fn component_transform(&self, k: usize) -> Result<TransformedLatent> {
        TransformedLatent::from_coords(&self.m[k])
    }
}

/// Jensen lower bound on the mixture entropy:
/// `-mean_i log( mean_j N(m_i; m_j, diag(v_i + v_j)) )`.
pub fn entropy_lower_bound(q: &MixtureQ) -> f64 {
    let k = q.n_components();
    let mut total = 0.0;
    for i in 0..k {
        let logs: Vec<f64> = (0..k).map(|j| log_pair_density(q, i, j)).collect();
        total += log_mean_exp(&logs);
    }
    -total / k as f64
}

fn log_pair_density(q: &MixtureQ, i: usize, j: usize) -> f64 {
    let (mi, mj) = (q.mean(i), q.mean(j));
    let (vi, vj) = (q.var(i), q.var(j));
    let mut acc = 0.0;
    for c in 0..q.dim() {
        let w = vi[c] + vj[c];
        let d = mi[c] - mj[c];
        acc += -0.5 * (LN_2PI + w.ln()) - d * d / (2.0 * w);
    }
    acc
}

fn log_mean_exp(logs: &[f64]) -> f64 {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    max + (sum / logs.len() as f64).ln()
}

/// Lognormal moments of one component's gap coordinates:
/// `a_j = E exp(l_j)` and `b_j = E exp(2 l_j)`.
struct GapMoments {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl GapMoments {
    fn compute(m: &[f64], v: &[f64]) -> Result<Self> {
        let n = m.len();
        let mut a = Vec::with_capacity(n - 1);
        let mut b = Vec::with_capacity(n - 1);
        for j in 0..n - 1 {
            let aj = (m[j] + 0.5 * v[j]).exp();
            let bj = (2.0 * m[j] + 2.0 * v[j]).exp();
            if !aj.is_finite() || !bj.is_finite() {
                return Err(Error::Overflow("lognormal moment"));
            }
            a.push(aj);
            b.push(bj);
        }
        Ok(Self { a, b })
    }
}

/// Exact expected log likelihood of the observed inputs,
/// `E_Q log Pr(t | l, r, sigma_t)`, including the Gaussian normalizing
/// constants.
///
/// Under each diagonal component the coordinates are independent, so with
/// `tau_i = r + sum_{j >= i} exp(l_j)` both `E[tau_i]` and `Var[tau_i]`
/// reduce to suffix sums of lognormal moments and
/// `E (tau_i - t_i)^2 = Var[tau_i] + (E tau_i - t_i)^2`. The dataset must be
/// in the internal descending-constraint order.
pub fn expected_input_loglik(q: &MixtureQ, dataset: &Dataset) -> Result<f64> {
    let n = dataset.len();
    if q.dim() != n {
        return Err(Error::LengthMismatch {
            what: "mixture dimension",
            expected: n,
            got: q.dim(),
        });
    }
    let t = dataset.t();
    let st = dataset.sigma_t();
    let const_term: f64 = st.iter().map(|s| -0.5 * LN_2PI - s.ln()).sum();

    let mut total = 0.0;
    for k in 0..q.n_components() {
        let m = q.mean(k);
        let v = q.var(k);
        let mom = GapMoments::compute(m, v)?;
        let m_r = m[n - 1];
        let v_r = v[n - 1];
        // right-to-left pass over suffix aggregates
        let mut suf_mean = 0.0;
        let mut suf_var = 0.0;
        let mut acc = 0.0;
        for i in (0..n).rev() {
            if i < n - 1 {
                suf_mean += mom.a[i];
                suf_var += mom.b[i] - mom.a[i] * mom.a[i];
            }
            let resid = m_r + suf_mean - t[i];
            acc += -(resid * resid + v_r + suf_var) / (2.0 * st[i] * st[i]);
        }
        total += acc;
    }
    Ok(total / q.n_components() as f64 + const_term)
}

/// Taylor approximation of the expected GP log likelihood (second order
/// around each component mean):
/// `mean_k ( log Pr(y | m_k) + 1/2 sum_j H_jj(m_k) v_{k,j} )` with the sum
/// over the log-gap coordinates only, since the GP likelihood does not
/// depend on the anchor.
pub fn expected_gp_loglik(q: &MixtureQ, dataset: &Dataset, params: &KernelParams) -> Result<f64> {
    let n = dataset.len();
    if q.dim() != n {
        return Err(Error::LengthMismatch {
            what: "mixture dimension",
            expected: n,
            got: q.dim(),
        });
    }
    let mut total = 0.0;
    for k in 0..q.n_components() {
        let x = q.component_transform(k)?;
        let ws = DerivWorkspace::new(&x, dataset.y(), dataset.sigma_y(), Matern32::new(*params))?;
        let hess = ws.hess_diag_loglik_l();
        let v = q.var(k);
        let trace_term: f64 = hess.iter().zip(v).map(|(h, vj)| 0.5 * h * vj).sum();
        total += ws.log_marginal() + trace_term;
    }
    Ok(total / q.n_components() as f64)
}

/// The variational objective
/// `F = -entropy_lower_bound - expected_input_loglik - expected_gp_loglik`;
/// an upper bound, up to an additive constant, on the KL divergence from `Q`
/// to the latent posterior.
pub fn objective(q: &MixtureQ, dataset: &Dataset, params: &KernelParams) -> Result<f64> {
    let h = entropy_lower_bound(q);
    let e_in = expected_input_loglik(q, dataset)?;
    let e_gp = expected_gp_loglik(q, dataset, params)?;
    let f = -h - e_in - e_gp;
    if !f.is_finite() {
        return Err(Error::Overflow("variational objective"));
    }
    Ok(f)
}

/// Gradient of the objective over all component means and log-variances.
#[derive(Debug, Clone)]
pub struct PhiGrad {
    pub m: Vec<Vec<f64>>,
    pub log_v: Vec<Vec<f64>>,
}

/// Analytic gradient of `F` in the variational parameters. The entropy and
/// input-likelihood parts are exact; the Taylor part treats the Hessian
/// diagonal as locally constant in `m` (third derivatives omitted), which is
/// why step acceptance during fitting is always judged on the exact
/// objective.
pub fn grad_objective_phi(
    q: &MixtureQ,
    dataset: &Dataset,
    params: &KernelParams,
) -> Result<PhiGrad> {
    let k = q.n_components();
    let n = q.dim();
    let mut dm = vec![vec![0.0; n]; k];
    let mut dv = vec![vec![0.0; n]; k];

    accumulate_neg_entropy_grad(q, &mut dm, &mut dv);
    accumulate_neg_input_grad(q, dataset, &mut dm, &mut dv)?;
    accumulate_neg_gp_grad(q, dataset, params, &mut dm, &mut dv)?;

    // chain rule into log-variance coordinates
    let mut dlogv = vec![vec![0.0; n]; k];
    for c in 0..k {
        for j in 0..n {
            dlogv[c][j] = dv[c][j] * q.var(c)[j];
        }
    }
    Ok(PhiGrad { m: dm, log_v: dlogv })
}

/// Adds the gradient of `-entropy_lower_bound` to the accumulators.
fn accumulate_neg_entropy_grad(q: &MixtureQ, dm: &mut [Vec<f64>], dv: &mut [Vec<f64>]) {
    let k = q.n_components();
    let n = q.dim();
    // responsibilities rho_ij = softmax_j log N(m_i; m_j, v_i + v_j)
    for i in 0..k {
        let logs: Vec<f64> = (0..k).map(|j| log_pair_density(q, i, j)).collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let wsum: f64 = weights.iter().sum();
        for j in 0..k {
            let rho = weights[j] / wsum;
            // d(-H)/dx = (1/K) sum_i rho_ij d logN_ij / dx
            let (mi, mj) = (q.mean(i), q.mean(j));
            let (vi, vj) = (q.var(i), q.var(j));
            for c in 0..n {
                let w = vi[c] + vj[c];
                let d = mi[c] - mj[c];
                let dlog_dmi = -d / w;
                let dlog_dv = -0.5 / w + d * d / (2.0 * w * w);
                // m_i and m_j receive opposite-sign contributions; v_i and
                // v_j the same one. i == j contributes only to v.
                dm[i][c] += rho * dlog_dmi / k as f64;
                dm[j][c] -= rho * dlog_dmi / k as f64;
                dv[i][c] += rho * dlog_dv / k as f64;
                dv[j][c] += rho * dlog_dv / k as f64;
            }
        }
    }
}

/// Adds the gradient of `-expected_input_loglik` to the accumulators.
fn accumulate_neg_input_grad(
    q: &MixtureQ,
    dataset: &Dataset,
    dm: &mut [Vec<f64>],
    dv: &mut [Vec<f64>],
) -> Result<()> {
    let n = dataset.len();
    let t = dataset.t();
    let st = dataset.sigma_t();
    let kf = q.n_components() as f64;
    for k in 0..q.n_components() {
        let m = q.mean(k);
        let v = q.var(k);
        let mom = GapMoments::compute(m, v)?;
        let m_r = m[n - 1];

        // residuals need the suffix means first
        let mut suf_mean = vec![0.0; n];
        for i in (0..n - 1).rev() {
            suf_mean[i] = suf_mean[i + 1] + mom.a[i];
        }
        // prefix sums over data index of 1/sigma^2 and resid/sigma^2
        let mut s1 = 0.0;
        let mut sr = 0.0;
        let mut s1_pref = vec![0.0; n];
        let mut sr_pref = vec![0.0; n];
        for i in 0..n {
            let w = 1.0 / (st[i] * st[i]);
            let resid = m_r + suf_mean[i] - t[i];
            s1 += w;
            sr += resid * w;
            s1_pref[i] = s1;
            sr_pref[i] = sr;
        }

        // gradient of the component value; negate for -E_in and divide by K
        for j in 0..n - 1 {
            let (a, b) = (mom.a[j], mom.b[j]);
            let g_m = -(b - a * a) * s1_pref[j] - a * sr_pref[j];
            let g_v = -(b - 0.5 * a * a) * s1_pref[j] - 0.5 * a * sr_pref[j];
            dm[k][j] += -g_m / kf;
            dv[k][j] += -g_v / kf;
        }
        let g_mr = -sr;
        let g_vr = -0.5 * s1;
        dm[k][n - 1] += -g_mr / kf;
        dv[k][n - 1] += -g_vr / kf;
    }
    Ok(())
}

/// Adds the gradient of `-expected_gp_loglik` to the accumulators.
fn accumulate_neg_gp_grad(
    q: &MixtureQ,
    dataset: &Dataset,
    params: &KernelParams,
    dm: &mut [Vec<f64>],
    dv: &mut [Vec<f64>],
) -> Result<()> {
    let n = dataset.len();
    let kf = q.n_components() as f64;
    for k in 0..q.n_components() {
        let x = q.component_transform(k)?;
        let ws = DerivWorkspace::new(&x, dataset.y(), dataset.sigma_y(), Matern32::new(*params))?;
        let (grad, hess) = ws.grad_and_hess_diag();
        for j in 0..n - 1 {
            dm[k][j] += -grad[j] / kf;
            dv[k][j] += -0.5 * hess[j] / kf;
        }
        // the GP likelihood is free of the anchor coordinate
    }
    Ok(())
}

/// Settings of the alternating variational fit.
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Number of mixture components.
    pub k: usize,
    /// Independent restarts from perturbed initializations.
    pub restarts: usize,
    pub seed: u64,
    /// Outer rounds of alternating Phi / theta updates.
    pub max_outer: usize,
    /// Gradient-descent steps per Phi round.
    pub inner_iters: usize,
    /// Relative objective-change stopping threshold between outer rounds.
    pub rel_tol: f64,
    /// Nelder–Mead iterations of each theta update.
    pub theta_iters: usize,
    /// Starting hyperparameters (None: data-scale heuristic).
    pub theta_init: Option<KernelParams>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k: 3,
            restarts: 5,
            seed: 0,
            max_outer: 20,
            inner_iters: 100,
            rel_tol: 1e-6,
            theta_iters: 24,
            theta_init: None,
        }
    }
}

/// Output of [`fit`]: the final mixture, hyperparameters, estimated latent
/// inputs (original row order) and the objective trace of the best restart.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub q: MixtureQ,
    pub theta: KernelParams,
    pub tau_hat: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub restarts_summary: Vec<f64>,
}

// The fit optimizes within the isotropic subfamily (one variance per
// component, matching the paper's choice of V_i); the packed layout is
// `[m_k (n), log v_k (1)]` per component. The diagonal machinery above
// remains fully general.

fn pack_iso(q: &MixtureQ) -> Vec<f64> {
    let mut x = Vec::with_capacity(q.n_components() * (q.dim() + 1));
    for k in 0..q.n_components() {
        x.extend_from_slice(q.mean(k));
        x.push(q.var(k)[0].ln());
    }
    x
}

fn unpack_iso(x: &[f64], k: usize, n: usize) -> Result<MixtureQ> {
    let mut m = Vec::with_capacity(k);
    let mut v = Vec::with_capacity(k);
    for c in 0..k {
        let base = c * (n + 1);
        m.push(x[base..base + n].to_vec());
        v.push(vec![x[base + n].exp(); n]);
    }
    MixtureQ::new(m, v)
}

/// Flattens the per-coordinate gradients into the isotropic layout: the
/// log-variance gradient of component `k` collapses to
/// `v_k * sum_j dF/dv_{k,j}`.
fn flatten_iso(q: &MixtureQ, dm: &[Vec<f64>], dv: &[Vec<f64>]) -> Vec<f64> {
    let n = q.dim();
    let mut flat = Vec::with_capacity(q.n_components() * (n + 1));
    for c in 0..q.n_components() {
        flat.extend_from_slice(&dm[c]);
        let total: f64 = dv[c].iter().sum();
        flat.push(total * q.var(c)[0]);
    }
    flat
}

/// Objective value with per-coordinate mean and variance gradients, from one
/// derivative sweep per component (the sweep yields the GP gradient and
/// Hessian diagonal together, and the Taylor value needs the same Hessian
/// diagonal).
#[allow(clippy::type_complexity)]
fn objective_and_grad_parts(
    q: &MixtureQ,
    dataset: &Dataset,
    params: &KernelParams,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let k = q.n_components();
    let n = q.dim();
    let mut dm = vec![vec![0.0; n]; k];
    let mut dv = vec![vec![0.0; n]; k];

    accumulate_neg_entropy_grad(q, &mut dm, &mut dv);
    accumulate_neg_input_grad(q, dataset, &mut dm, &mut dv)?;

    let mut gp_term = 0.0;
    for c in 0..k {
        let x = q.component_transform(c)?;
        let ws = DerivWorkspace::new(&x, dataset.y(), dataset.sigma_y(), Matern32::new(*params))?;
        let (grad, hess) = ws.grad_and_hess_diag();
        let v = q.var(c);
        let trace_term: f64 = hess.iter().zip(v).map(|(h, vj)| 0.5 * h * vj).sum();
        gp_term += ws.log_marginal() + trace_term;
        for j in 0..n - 1 {
            dm[c][j] += -grad[j] / k as f64;
            dv[c][j] += -0.5 * hess[j] / k as f64;
        }
    }
    gp_term /= k as f64;

    let value = -entropy_lower_bound(q) - expected_input_loglik(q, dataset)? - gp_term;
    if !value.is_finite() {
        return Err(Error::Overflow("variational objective"));
    }
    Ok((value, dm, dv))
}

/// Fits the variational mixture and kernel hyperparameters by alternating
/// (a) gradient descent on the variational parameters with backtracking line
/// search judged on the exact objective, and (b) a bounded derivative-free
/// update of the hyperparameters through the expected GP log likelihood (the
/// only theta-dependent objective term). The best of `restarts` runs by
/// final objective wins.
pub fn fit(dataset: &Dataset, config: &FitConfig) -> Result<FitResult> {
    if config.k == 0 || config.restarts == 0 {
        return Err(Error::Config("k and restarts must be >= 1".into()));
    }
    let reversed = dataset.ascending_trend();
    let canon = if reversed {
        dataset.reversed()
    } else {
        dataset.clone()
    };
    let n = canon.len();
    let mut bounds = ThetaBounds::from_data(canon.t(), canon.y());
    // length-scales below the mean training gap decouple neighboring
    // points entirely, which drives the alternating fit into the
    // no-structure basin (y explained as pure signal-variance noise);
    // keep the search floor at the data resolution instead
    if n > 1 {
        let range = canon.t().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - canon.t().iter().cloned().fold(f64::INFINITY, f64::min);
        let gap_floor = (range / (n - 1) as f64).max(1e-12).ln();
        bounds.log_d.0 = bounds.log_d.0.max(gap_floor.min(bounds.log_d.1));
    }
    let sigma_t_bar = canon.sigma_t().iter().sum::<f64>() / n as f64;
    let base = repaired_from_observed(canon.t()).coords();
    let v_init = (sigma_t_bar * sigma_t_bar).min(1.0);

    // Per-restart starting hyperparameters: the signal scale from the data,
    // and a log-spaced ladder of length-scales between the mean gap and a
    // third of the range. The alternation co-adapts theta and Phi, so basins
    // are effectively indexed by the starting length-scale; spreading the
    // restarts across it is what makes the best-of-restarts selection work.
    let theta0_for = |restart: usize| -> Result<KernelParams> {
        if let Some(t) = config.theta_init {
            return Ok(t);
        }
        let mean_y = canon.y().iter().sum::<f64>() / n as f64;
        let sd_y = (canon.y().iter().map(|y| (y - mean_y).powi(2)).sum::<f64>() / n as f64).sqrt();
        let range = canon.t().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - canon.t().iter().cloned().fold(f64::INFINITY, f64::min);
        let range = if range > 0.0 { range } else { 1.0 };
        let d0 = if config.restarts <= 1 || n <= 1 {
            range / 3.0
        } else {
            let lo = (1.2 * range / (n - 1) as f64).max(1e-12).ln();
            let hi = (range / 3.0).max(1e-12).ln().max(lo);
            let frac = restart as f64 / (config.restarts - 1) as f64;
            (lo + (hi - lo) * frac).exp()
        };
        let (ls, ld) = bounds.clamp(sd_y.max(1e-12).ln(), d0.max(1e-12).ln());
        KernelParams::new(ls.exp(), ld.exp())
    };

    // restarts are independent; run them in parallel with per-restart seeds
    // derived from the master seed, then select deterministically
    let outcomes: Vec<Option<(f64, MixtureQ, KernelParams, Vec<f64>)>> = (0..config.restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                config
                    .seed
                    .wrapping_add((restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            );
            let spread = 0.1 * sigma_t_bar;
            let m0: Vec<Vec<f64>> = (0..config.k)
                .map(|_| {
                    base.iter()
                        .map(|b| {
                            let z: f64 = rand_distr::Distribution::sample(
                                &rand_distr::StandardNormal,
                                &mut rng,
                            );
                            b + spread * z
                        })
                        .collect()
                })
                .collect();
            let q0 = MixtureQ::new(m0, vec![vec![v_init; n]; config.k]).ok()?;
            let theta0 = theta0_for(restart).ok()?;
            run_restart(&q0, &canon, theta0, &bounds, config)
        })
        .collect();

    let mut best: Option<(f64, MixtureQ, KernelParams, Vec<f64>)> = None;
    let mut restarts_summary = Vec::with_capacity(config.restarts);
    for outcome in outcomes {
        match outcome {
            Some((f, q, theta, trace)) => {
                restarts_summary.push(f);
                if best.as_ref().map(|(bf, ..)| f < *bf).unwrap_or(true) {
                    best = Some((f, q, theta, trace));
                }
            }
            None => restarts_summary.push(f64::INFINITY),
        }
    }

    let (_, q, theta, objective_trace) = best.ok_or(Error::OptimizationFailed(
        "every variational restart failed to produce a finite objective",
    ))?;
    let tau = expected_tau(&q)?.into_vec();
    let tau_hat = if reversed {
        tau.into_iter().rev().collect()
    } else {
        tau
    };
    Ok(FitResult {
        q,
        theta,
        tau_hat,
        objective_trace,
        restarts_summary,
    })
}

/// L-BFGS two-loop recursion over the stored curvature pairs; returns the
/// quasi-Newton descent direction `-H g`.
fn lbfgs_direction(g: &[f64], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>]) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let m = s_hist.len();
    let mut alpha = vec![0.0; m];
    let mut rho = vec![0.0; m];
    for i in (0..m).rev() {
        let sy: f64 = s_hist[i].iter().zip(&y_hist[i]).map(|(a, b)| a * b).sum();
        rho[i] = 1.0 / sy;
        alpha[i] = rho[i] * s_hist[i].iter().zip(&q).map(|(a, b)| a * b).sum::<f64>();
        for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
            *qj -= alpha[i] * yj;
        }
    }
    if m > 0 {
        let last = m - 1;
        let sy: f64 = s_hist[last]
            .iter()
            .zip(&y_hist[last])
            .map(|(a, b)| a * b)
            .sum();
        let yy: f64 = y_hist[last].iter().map(|v| v * v).sum();
        let scale = sy / yy.max(1e-300);
        for qj in q.iter_mut() {
            *qj *= scale;
        }
    }
    for i in 0..m {
        let beta = rho[i] * y_hist[i].iter().zip(&q).map(|(a, b)| a * b).sum::<f64>();
        let corr = alpha[i] - beta;
        for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
            *qj += corr * sj;
        }
    }
    for v in q.iter_mut() {
        *v = -*v;
    }
    q
}

fn run_restart(
    q0: &MixtureQ,
    canon: &Dataset,
    theta0: KernelParams,
    bounds: &ThetaBounds,
    config: &FitConfig,
) -> Option<(f64, MixtureQ, KernelParams, Vec<f64>)> {
    let k = q0.n_components();
    let n = q0.dim();
    let mut x = pack_iso(q0);
    let mut theta = theta0;

    // value + gradient in one evaluation; the derivative sweep behind the
    // Taylor term produces the GP gradient alongside the Hessian diagonal,
    // so the gradient is free at every line-search trial
    let eval = |x: &[f64], theta: &KernelParams| -> Result<(f64, Vec<f64>)> {
        let q = unpack_iso(x, k, n)?;
        let (f, dm, dv) = objective_and_grad_parts(&q, canon, theta)?;
        Ok((f, flatten_iso(&q, &dm, &dv)))
    };

    let (mut f_cur, mut g) = eval(&x, &theta).ok()?;
    let mut trace = vec![f_cur];
    // curvature memory survives outer rounds; it only resets when the
    // theta step actually moves the surface
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    // warm-started line-search scale; quasi-Newton steps approach 1
    let mut s_start = 1.0f64;

    for outer in 0..config.max_outer {
        let f_round_start = f_cur;

        // (a) Phi step: L-BFGS descent directions from the (possibly
        // inexact) gradient, with backtracking acceptance judged on the
        // exact objective
        for _ in 0..config.inner_iters {
            let gnorm2: f64 = g.iter().map(|v| v * v).sum();
            if !gnorm2.is_finite() || gnorm2.sqrt() < 1e-9 {
                break;
            }
            let mut dir = lbfgs_direction(&g, &s_hist, &y_hist);
            let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
            if !slope.is_finite() || slope >= 0.0 {
                // memory built from an inexact gradient can stop giving
                // descent directions; fall back to steepest descent
                s_hist.clear();
                y_hist.clear();
                dir = g.iter().map(|v| -v).collect();
                slope = -gnorm2;
            }
            let mut s = s_start;
            let mut accepted = false;
            while s > 1e-14 {
                let xt: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + s * di).collect();
                match eval(&xt, &theta) {
                    Ok((ft, g_new)) if ft <= f_cur + 1e-4 * s * slope => {
                        let step_vec: Vec<f64> = dir.iter().map(|d| s * d).collect();
                        let y_vec: Vec<f64> =
                            g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                        let sy: f64 = step_vec.iter().zip(&y_vec).map(|(a, b)| a * b).sum();
                        if sy > 1e-12 {
                            s_hist.push(step_vec);
                            y_hist.push(y_vec);
                            if s_hist.len() > 10 {
                                s_hist.remove(0);
                                y_hist.remove(0);
                            }
                        }
                        x = xt;
                        f_cur = ft;
                        g = g_new;
                        trace.push(ft);
                        s_start = (s * 2.0).min(1.0);
                        accepted = true;
                        break;
                    }
                    _ => s *= 0.5,
                }
            }
            if !accepted {
                break;
            }
            let len = trace.len();
            if len >= 2 && (trace[len - 2] - f_cur) <= 1e-8 * f_cur.abs().max(1.0) {
                break;
            }
        }

        // (b) theta step through the only theta-dependent term
        let q = unpack_iso(&x, k, n).ok()?;
        let term = |p: &[f64]| -> f64 {
            let (ls, ld) = bounds.clamp(p[0], p[1]);
            match KernelParams::new(ls.exp(), ld.exp()) {
                Ok(params) => match expected_gp_loglik(&q, canon, &params) {
                    Ok(v) => -v,
                    Err(_) => f64::INFINITY,
                },
                Err(_) => f64::INFINITY,
            }
        };
        let start = [theta.sigma_f().ln(), theta.d().ln()];
        let cur_term = term(&start);
        let b = bounds.as_box();
        // wide simplex and full budget early; cheap local refinement once
        // the alternation has settled
        let (spread, iters) = if outer == 0 {
            (0.05, config.theta_iters)
        } else {
            (0.01, (config.theta_iters / 4).max(4))
        };
        let steps = [
            spread * (b[0].1 - b[0].0).max(1e-6),
            spread * (b[1].1 - b[1].0).max(1e-6),
        ];
        let (cand, cand_term) = nelder_mead(term, &start, &steps, &b, iters, 1e-8);
        if cand_term < cur_term {
            let (ls, ld) = bounds.clamp(cand[0], cand[1]);
            if let Ok(params) = KernelParams::new(ls.exp(), ld.exp()) {
                if let Ok((f_new, g_new)) = eval(&x, &params) {
                    if f_new < f_cur {
                        theta = params;
                        f_cur = f_new;
                        g = g_new;
                        trace.push(f_new);
                        s_hist.clear();
                        y_hist.clear();
                    }
                }
            }
        }

        if (f_round_start - f_cur) <= config.rel_tol * f_cur.abs().max(1.0) {
            break;
        }
    }

    let q = unpack_iso(&x, k, n).ok()?;
    f_cur.is_finite().then_some((f_cur, q, theta, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::log_marginal;
    use crate::gp::GPWorkspace;
    use crate::transform::from_latent;
    use rand::Rng;

    fn toy_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t: Vec<f64> = (0..n).map(|i| 5.0 - i as f64 + rng.gen_range(-0.2..0.2)).collect();
        t.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let y: Vec<f64> = t.iter().map(|x| x.sin() + rng.gen_range(-0.05..0.05)).collect();
        Dataset::new(t, vec![0.5; n], y, vec![0.1; n]).unwrap()
    }

    fn random_q(k: usize, n: usize, seed: u64) -> MixtureQ {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let v: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|_| rng.gen_range(0.05..0.8)).collect())
            .collect();
        MixtureQ::new(m, v).unwrap()
    }

    // full-diagonal packing for the gradient finite-difference checks
    fn pack(q: &MixtureQ) -> Vec<f64> {
        let mut x = Vec::new();
        for k in 0..q.n_components() {
            x.extend_from_slice(q.mean(k));
            x.extend(q.var(k).iter().map(|v| v.ln()));
        }
        x
    }

    fn unpack(x: &[f64], k: usize, n: usize) -> MixtureQ {
        let mut m = Vec::new();
        let mut v = Vec::new();
        for c in 0..k {
            let base = 2 * c * n;
            m.push(x[base..base + n].to_vec());
            v.push(x[base + n..base + 2 * n].iter().map(|lv| lv.exp()).collect());
        }
        MixtureQ::new(m, v).unwrap()
    }

    #[test]
    fn entropy_bound_single_component_closed_form() {
        // K = 1, n = 1: bound = 1/2 log(4 pi v)
        let v = 0.37;
        let q = MixtureQ::new(vec![vec![1.3]], vec![vec![v]]).unwrap();
        let expect = 0.5 * (4.0 * std::f64::consts::PI * v).ln();
        assert!((entropy_lower_bound(&q) - expect).abs() < 1e-12);
    }

    #[test]
    fn entropy_bound_duplicated_component_unchanged() {
        let m = vec![0.3, -0.4];
        let v = vec![0.2, 0.5];
        let single = MixtureQ::new(vec![m.clone()], vec![v.clone()]).unwrap();
        let dup = MixtureQ::new(vec![m.clone(), m], vec![v.clone(), v]).unwrap();
        assert!((entropy_lower_bound(&single) - entropy_lower_bound(&dup)).abs() < 1e-12);
    }

    #[test]
    fn entropy_bound_permutation_invariant() {
        let q = random_q(3, 4, 17);
        let m: Vec<Vec<f64>> = (0..3).rev().map(|k| q.mean(k).to_vec()).collect();
        let v: Vec<Vec<f64>> = (0..3).rev().map(|k| q.var(k).to_vec()).collect();
        let qp = MixtureQ::new(m, v).unwrap();
        assert!((entropy_lower_bound(&q) - entropy_lower_bound(&qp)).abs() < 1e-12);
    }

    #[test]
    fn input_loglik_single_coordinate() {
        // n = 1: only the anchor; value = -((m_r - t)^2 + v_r) / (2 s^2) + const
        let ds = Dataset::new(vec![2.0], vec![0.7], vec![0.0], vec![0.0]).unwrap();
        let q = MixtureQ::new(vec![vec![1.5]], vec![vec![0.3]]).unwrap();
        let got = expected_input_loglik(&q, &ds).unwrap();
        let expect = -((1.5f64 - 2.0).powi(2) + 0.3) / (2.0 * 0.49)
            - 0.5 * LN_2PI
            - 0.7f64.ln();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn input_loglik_point_mass_limit() {
        let ds = toy_dataset(5, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let q = MixtureQ::new(vec![m.clone()], vec![vec![1e-14; 5]]).unwrap();
        let got = expected_input_loglik(&q, &ds).unwrap();
        // plain log density at the point (l, r) = m
        let x = TransformedLatent::from_coords(&m).unwrap();
        let tau = from_latent(&x).unwrap();
        let mut expect = 0.0;
        for i in 0..5 {
            let s = ds.sigma_t()[i];
            let resid = tau.values()[i] - ds.t()[i];
            expect += -0.5 * LN_2PI - s.ln() - resid * resid / (2.0 * s * s);
        }
        assert!((got - expect).abs() < 1e-6, "{got} vs {expect}");
    }

    #[test]
    fn input_loglik_additive_over_components() {
        let ds = toy_dataset(4, 5);
        let q = random_q(3, 4, 7);
        let whole = expected_input_loglik(&q, &ds).unwrap();
        let mut acc = 0.0;
        for k in 0..3 {
            let single = MixtureQ::new(vec![q.mean(k).to_vec()], vec![q.var(k).to_vec()]).unwrap();
            acc += expected_input_loglik(&single, &ds).unwrap();
        }
        assert!((whole - acc / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gp_loglik_zero_variance_limit() {
        let ds = toy_dataset(5, 11);
        let params = KernelParams::new(1.0, 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..5).map(|_| rng.gen_range(-0.5..0.5)).collect())
            .collect();
        let mut v = vec![vec![1e-300; 5]; 2];
        // anchor variance may be anything; it never enters
        v[0][4] = 0.7;
        let q = MixtureQ::new(m.clone(), v).unwrap();
        let got = expected_gp_loglik(&q, &ds, &params).unwrap();
        let mut expect = 0.0;
        for mk in &m {
            let x = TransformedLatent::from_coords(mk).unwrap();
            let tau = from_latent(&x).unwrap();
            let ws = GPWorkspace::build(
                tau.values(),
                ds.y(),
                ds.sigma_y(),
                &Matern32::new(params),
            )
            .unwrap();
            expect += log_marginal(&ws, ds.y());
        }
        expect /= 2.0;
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
    }

    #[test]
    fn objective_is_sum_of_terms() {
        let ds = toy_dataset(5, 19);
        let q = random_q(2, 5, 23);
        let params = KernelParams::new(0.8, 1.2).unwrap();
        let f = objective(&q, &ds, &params).unwrap();
        let parts = -entropy_lower_bound(&q)
            - expected_input_loglik(&q, &ds).unwrap()
            - expected_gp_loglik(&q, &ds, &params).unwrap();
        assert_eq!(f, parts);
    }

    #[test]
    fn shrinking_variance_blows_up_entropy_penalty() {
        let ds = toy_dataset(4, 29);
        let params = KernelParams::new(0.8, 1.2).unwrap();
        let m = vec![vec![0.1, 0.2, -0.3, 0.5]];
        let f_small = objective(
            &MixtureQ::new(m.clone(), vec![vec![1e-10; 4]]).unwrap(),
            &ds,
            &params,
        )
        .unwrap();
        let f_mid = objective(
            &MixtureQ::new(m, vec![vec![0.1; 4]]).unwrap(),
            &ds,
            &params,
        )
        .unwrap();
        assert!(f_small > f_mid + 10.0, "{f_small} vs {f_mid}");
    }

    #[test]
    fn entropy_and_input_gradients_match_finite_differences() {
        let ds = toy_dataset(4, 31);
        let q = random_q(2, 4, 37);
        let k = q.n_components();
        let n = q.dim();
        let x0 = pack(&q);
        // value of the two exact terms only
        let value = |x: &[f64]| -> f64 {
            let q = unpack(x, k, n);
            -entropy_lower_bound(&q) - expected_input_loglik(&q, &ds).unwrap()
        };
        // analytic gradient of those terms
        let mut dm = vec![vec![0.0; n]; k];
        let mut dv = vec![vec![0.0; n]; k];
        accumulate_neg_entropy_grad(&q, &mut dm, &mut dv);
        accumulate_neg_input_grad(&q, &ds, &mut dm, &mut dv).unwrap();
        let mut flat = Vec::new();
        for c in 0..k {
            flat.extend_from_slice(&dm[c]);
            for j in 0..n {
                flat.push(dv[c][j] * q.var(c)[j]);
            }
        }
        let eps = 1e-6;
        for i in 0..x0.len() {
            let mut xp = x0.clone();
            xp[i] += eps;
            let mut xm = x0.clone();
            xm[i] -= eps;
            let fd = (value(&xp) - value(&xm)) / (2.0 * eps);
            let scale = flat[i].abs().max(fd.abs()).max(1e-4);
            assert!(
                (flat[i] - fd).abs() <= 1e-5 * scale,
                "coord {i}: analytic {} vs fd {fd}",
                flat[i]
            );
        }
    }

    #[test]
    fn taylor_gradient_matches_fd_at_small_variance() {
        let ds = toy_dataset(5, 41);
        let params = KernelParams::new(1.0, 1.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let m: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let q = MixtureQ::new(vec![m], vec![vec![1e-4; 5]]).unwrap();
        let k = 1;
        let n = 5;
        let x0 = pack(&q);
        let value = |x: &[f64]| -> f64 {
            let q = unpack(x, k, n);
            expected_gp_loglik(&q, &ds, &params).unwrap()
        };
        let mut dm = vec![vec![0.0; n]; k];
        let mut dv = vec![vec![0.0; n]; k];
        accumulate_neg_gp_grad(&q, &ds, &params, &mut dm, &mut dv).unwrap();
        let eps = 1e-6;
        // m-coordinates of the log-gaps only (anchor and variances excluded)
        for i in 0..n - 1 {
            let mut xp = x0.clone();
            xp[i] += eps;
            let mut xm = x0.clone();
            xm[i] -= eps;
            let fd = (value(&xp) - value(&xm)) / (2.0 * eps);
            let analytic = -dm[0][i];
            let scale = analytic.abs().max(fd.abs()).max(1e-3);
            assert!(
                (analytic - fd).abs() <= 1e-2 * scale,
                "coord {i}: analytic {analytic} vs fd {fd}"
            );
        }
    }

    #[test]
    fn fit_is_deterministic_and_monotone() {
        let ds = toy_dataset(8, 47);
        let config = FitConfig {
            k: 2,
            restarts: 2,
            seed: 3,
            max_outer: 4,
            inner_iters: 15,
            ..Default::default()
        };
        let a = fit(&ds, &config).unwrap();
        let b = fit(&ds, &config).unwrap();
        assert_eq!(a.q, b.q);
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.tau_hat, b.tau_hat);
        assert_eq!(a.objective_trace, b.objective_trace);
        for w in a.objective_trace.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-10,
                "objective increased: {} -> {}",
                w[0],
                w[1]
            );
        }
        // the trace must show at least one accepted improvement
        assert!(a.objective_trace.len() > 1);
        assert!(a.objective_trace.last().unwrap() < &a.objective_trace[0]);
    }

    #[test]
    fn fit_with_tiny_input_noise_recovers_observed_inputs() {
        // near-noiseless inputs: the input likelihood dominates and tau_hat
        // stays close to t
        let n = 10;
        let t: Vec<f64> = (0..n).map(|i| 5.0 - i as f64).collect();
        let y: Vec<f64> = t.iter().map(|x| (0.7 * x).sin()).collect();
        let range = t[0] - t[n - 1];
        let ds = Dataset::new(t.clone(), vec![1e-3 * range; n], y, vec![0.05; n]).unwrap();
        let config = FitConfig {
            k: 2,
            restarts: 2,
            seed: 1,
            max_outer: 6,
            inner_iters: 30,
            ..Default::default()
        };
        let result = fit(&ds, &config).unwrap();
        let mae: f64 = result
            .tau_hat
            .iter()
            .zip(&t)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / n as f64;
        assert!(mae < 1e-2, "tau_hat drifted from observed inputs: mae {mae}");
    }

    #[test]
    fn fit_restores_original_row_order() {
        let n = 6;
        // ascending dataset; internal canonicalization must flip and restore
        let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let y: Vec<f64> = t.iter().map(|x| x.cos()).collect();
        let ds = Dataset::new(t.clone(), vec![0.05; n], y, vec![0.05; n]).unwrap();
        let config = FitConfig {
            k: 1,
            restarts: 1,
            seed: 0,
            max_outer: 3,
            inner_iters: 10,
            ..Default::default()
        };
        let result = fit(&ds, &config).unwrap();
        // ascending data must come back ascending
        for w in result.tau_hat.windows(2) {
            assert!(w[0] < w[1], "tau_hat not ascending: {:?}", result.tau_hat);
        }
    }
}
