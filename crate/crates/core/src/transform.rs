//! Bijection between strictly ordered latent inputs and an unconstrained
//! log-gap representation, plus posterior-mean input reconstruction from a
//! variational mixture.
//!
//! Ordered inputs `tau_1 > tau_2 > ... > tau_n` map to the anchor `r = tau_n`
//! and log-gaps `l_i = log(tau_i - tau_{i+1})`; the inverse recovers
//! `tau_i = r + sum_{j >= i} exp(l_j)` in a single right-to-left pass.

use crate::error::{Error, Result};
use crate::variational::MixtureQ;

/// Strictly decreasing latent input locations.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentInput {
    tau: Vec<f64>,
}

impl LatentInput {
    /// Validates finiteness and the strict descending order.
    pub fn new(tau: Vec<f64>) -> Result<Self> {
        if tau.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (i, w) in tau.windows(2).enumerate() {
            if !(w[0] > w[1]) {
                return Err(Error::NonDecreasingInput { index: i });
            }
        }
        if tau.iter().any(|x| !x.is_finite()) {
            return Err(Error::Overflow("latent input"));
        }
        Ok(Self { tau })
    }

    pub fn values(&self) -> &[f64] {
        &self.tau
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.tau
    }
}

/// Unconstrained image of a [`LatentInput`]: `n - 1` log-gaps plus the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedLatent {
    log_gaps: Vec<f64>,
    anchor: f64,
}

impl TransformedLatent {
    pub fn new(log_gaps: Vec<f64>, anchor: f64) -> Result<Self> {
        if log_gaps.iter().any(|x| !x.is_finite()) || !anchor.is_finite() {
            return Err(Error::Overflow("transformed latent"));
        }
        Ok(Self { log_gaps, anchor })
    }

    pub fn log_gaps(&self) -> &[f64] {
        &self.log_gaps
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    /// Number of latent points, `n = log_gaps.len() + 1`.
    pub fn n(&self) -> usize {
        self.log_gaps.len() + 1
    }

    /// Coordinates stacked as `(l_1, ..., l_{n-1}, r)`.
    pub fn coords(&self) -> Vec<f64> {
        let mut c = self.log_gaps.clone();
        c.push(self.anchor);
        c
    }

    /// Inverse of [`coords`](Self::coords).
    pub fn from_coords(coords: &[f64]) -> Result<Self> {
        let (l, r) = coords.split_at(coords.len() - 1);
        Self::new(l.to_vec(), r[0])
    }
}

/// Maps ordered inputs to their log-gap representation.
pub fn to_latent(tau: &LatentInput) -> TransformedLatent {
    let t = tau.values();
    let n = t.len();
    let mut log_gaps = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n - 1 {
        log_gaps.push((t[i] - t[i + 1]).ln());
    }
    TransformedLatent {
        log_gaps,
        anchor: t[n - 1],
    }
}

/// Reconstructs the ordered inputs; strictly decreasing by construction since
/// every gap is an exponential.
pub fn from_latent(x: &TransformedLatent) -> Result<LatentInput> {
    let n = x.n();
    let mut tau = vec![0.0; n];
    tau[n - 1] = x.anchor;
    for i in (0..n - 1).rev() {
        let gap = x.log_gaps[i].exp();
        if !gap.is_finite() {
            return Err(Error::Overflow("exp(log gap)"));
        }
        tau[i] = tau[i + 1] + gap;
    }
    if tau.iter().any(|v| !v.is_finite()) {
        return Err(Error::Overflow("latent input suffix sum"));
    }
    LatentInput::new(tau)
}

/// Mixture-mean reconstruction of the latent inputs,
/// `E[tau_i] = mean_k ( m_{k,r} + sum_{j >= i} exp(m_{k,j} + v_{k,j} / 2) )`,
/// using the lognormal mean of each gap.
pub fn expected_tau(q: &MixtureQ) -> Result<LatentInput> {
    let n = q.dim();
    let k = q.n_components();
    let mut tau = vec![0.0; n];
    for c in 0..k {
        let m = q.mean(c);
        let v = q.var(c);
        let mut acc = m[n - 1]; // r coordinate
        tau[n - 1] += acc;
        for i in (0..n - 1).rev() {
            let gap = (m[i] + 0.5 * v[i]).exp();
            if !gap.is_finite() {
                return Err(Error::Overflow("lognormal gap mean"));
            }
            acc += gap;
            tau[i] += acc;
        }
    }
    for v in &mut tau {
        *v /= k as f64;
    }
    LatentInput::new(tau)
}

/// Log-gap initialization from observed (possibly mis-ordered) inputs in
/// descending index order: non-positive gaps are replaced by
/// `eps = 1e-3 * (max t - min t)` before taking logs.
pub fn repaired_from_observed(t: &[f64]) -> TransformedLatent {
    let max = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = t.iter().cloned().fold(f64::INFINITY, f64::min);
    let range = max - min;
    let eps = if range > 0.0 { 1e-3 * range } else { 1e-3 };
    let n = t.len();
    let mut log_gaps = Vec::with_capacity(n.saturating_sub(1));
    for i in 0..n - 1 {
        let gap = t[i] - t[i + 1];
        log_gaps.push(if gap > 0.0 { gap.ln() } else { eps.ln() });
    }
    TransformedLatent {
        log_gaps,
        anchor: t[n - 1],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_gaps_give_zero_log() {
        let tau = LatentInput::new(vec![3.0, 2.0, 1.0]).unwrap();
        let x = to_latent(&tau);
        assert_eq!(x.log_gaps(), &[0.0, 0.0]);
        assert_eq!(x.anchor(), 1.0);
    }

    #[test]
    fn two_point_case() {
        let tau = LatentInput::new(vec![5.0, 2.0]).unwrap();
        let x = to_latent(&tau);
        assert!((x.log_gaps()[0] - 3f64.ln()).abs() < 1e-15);
        assert_eq!(x.anchor(), 2.0);
        let back = from_latent(&x).unwrap();
        assert!((back.values()[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn single_point_degenerates() {
        let tau = LatentInput::new(vec![1.0]).unwrap();
        let x = to_latent(&tau);
        assert!(x.log_gaps().is_empty());
        assert_eq!(x.anchor(), 1.0);
        assert_eq!(from_latent(&x).unwrap().values(), &[1.0]);
    }

    #[test]
    fn rejects_non_decreasing() {
        let err = LatentInput::new(vec![1.0, 1.0]).unwrap_err();
        assert!(matches!(
            err,
            crate::error::Error::NonDecreasingInput { index: 0 }
        ));
        assert!(LatentInput::new(vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn from_latent_overflow() {
        let x = TransformedLatent::new(vec![800.0], 0.0).unwrap();
        assert!(matches!(
            from_latent(&x).unwrap_err(),
            crate::error::Error::Overflow(_)
        ));
    }

    #[test]
    fn roundtrip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(1..12);
            let log_gaps: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let x = TransformedLatent::new(log_gaps, rng.gen_range(-10.0..10.0)).unwrap();
            let tau = from_latent(&x).unwrap();
            let x2 = to_latent(&tau);
            for (a, b) in x.log_gaps().iter().zip(x2.log_gaps()) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
            }
            assert_eq!(x.anchor(), x2.anchor());
        }
    }

    #[test]
    fn expected_tau_point_mass_is_from_latent() {
        let x = TransformedLatent::new(vec![0.3, -0.7], 1.5).unwrap();
        let q = MixtureQ::new(vec![x.coords()], vec![vec![1e-300; 3]]).unwrap();
        let tau = expected_tau(&q).unwrap();
        let direct = from_latent(&x).unwrap();
        for (a, b) in tau.values().iter().zip(direct.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn expected_tau_lognormal_mean() {
        // K = 1, n = 2, m = (0, 0), v = (2 log 2, 0): gap mean e^{0 + log 2} = 2.
        let q = MixtureQ::new(vec![vec![0.0, 0.0]], vec![vec![2.0 * 2f64.ln(), 1e-300]])
            .unwrap();
        let tau = expected_tau(&q).unwrap();
        assert!((tau.values()[0] - 2.0).abs() < 1e-12);
        assert!(tau.values()[1].abs() < 1e-12);
    }

    #[test]
    fn expected_tau_component_permutation_invariant() {
        let m1 = vec![0.2, -0.5, 1.0];
        let m2 = vec![-0.1, 0.4, 0.5];
        let v1 = vec![0.5, 0.2, 0.1];
        let v2 = vec![0.3, 0.6, 0.2];
        let a = expected_tau(&MixtureQ::new(vec![m1.clone(), m2.clone()], vec![v1.clone(), v2.clone()]).unwrap())
            .unwrap();
        let b = expected_tau(&MixtureQ::new(vec![m2, m1], vec![v2, v1]).unwrap()).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn expected_tau_matches_monte_carlo() {
        use rand_distr::{Distribution, StandardNormal};
        let q = MixtureQ::new(
            vec![vec![0.1, -0.3, 0.5], vec![-0.4, 0.2, -0.5]],
            vec![vec![0.2, 0.4, 0.3], vec![0.5, 0.1, 0.2]],
        )
        .unwrap();
        let exact = expected_tau(&q).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let draws = 1_000_000usize;
        let n = q.dim();
        let mut sum = vec![0.0; n];
        let mut sumsq = vec![0.0; n];
        for _ in 0..draws {
            let c = rng.gen_range(0..q.n_components());
            let m = q.mean(c);
            let v = q.var(c);
            let coords: Vec<f64> = (0..n)
                .map(|j| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m[j] + v[j].sqrt() * z
                })
                .collect();
            let x = TransformedLatent::from_coords(&coords).unwrap();
            let tau = from_latent(&x).unwrap();
            for (j, t) in tau.values().iter().enumerate() {
                sum[j] += t;
                sumsq[j] += t * t;
            }
        }
        for j in 0..n {
            let mean = sum[j] / draws as f64;
            let var = sumsq[j] / draws as f64 - mean * mean;
            let se = (var / draws as f64).sqrt();
            let diff = (mean - exact.values()[j]).abs();
            assert!(
                diff <= 3.0 * se,
                "coord {j}: mc {mean} vs exact {} (3se {})",
                exact.values()[j],
                3.0 * se
            );
        }
    }

    #[test]
    fn repair_replaces_bad_gaps() {
        let t = [2.0, 3.0, 1.0]; // first gap violates the ordering
        let x = repaired_from_observed(&t);
        let eps: f64 = 1e-3 * 2.0;
        assert!((x.log_gaps()[0] - eps.ln()).abs() < 1e-15);
        assert!((x.log_gaps()[1] - 2f64.ln()).abs() < 1e-15);
        assert!(from_latent(&x).is_ok());
    }

    proptest! {
        #[test]
        fn prop_roundtrip_and_monotone(
            log_gaps in proptest::collection::vec(-5.0f64..5.0, 0..10),
            anchor in -20.0f64..20.0,
        ) {
            let x = TransformedLatent::new(log_gaps, anchor).unwrap();
            let tau = from_latent(&x).unwrap();
            // strictly decreasing
            for w in tau.values().windows(2) {
                prop_assert!(w[0] > w[1]);
            }
            let x2 = to_latent(&tau);
            for (a, b) in x.log_gaps().iter().zip(x2.log_gaps()) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }
    }
}
