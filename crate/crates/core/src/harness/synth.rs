//! Synthetic benchmark functions and dataset generation.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gp::Dataset;

/// The five benchmark functions, all with range about 10 over `[-10, 10]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FunctionId {
    F1,
    F2,
    F3,
    F4,
    F5,
}

impl FunctionId {
    pub const ALL: [FunctionId; 5] = [
        FunctionId::F1,
        FunctionId::F2,
        FunctionId::F3,
        FunctionId::F4,
        FunctionId::F5,
    ];

    pub fn eval(&self, tau: f64) -> f64 {
        match self {
            FunctionId::F1 => 5.0 * tau.sin(),
            FunctionId::F2 => 1.147 * (-0.2 * tau).exp() * tau.sin(),
            FunctionId::F3 => 0.97 * (0.15 * tau).tan() * tau.sin(),
            FunctionId::F4 => 0.055 * tau * tau * tau.cos().tanh(),
            FunctionId::F5 => 1.76 * (tau * tau * ((2.0 * tau).sin() + 1.0) + 1.0).ln(),
        }
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FunctionId::F1 => "f1",
            FunctionId::F2 => "f2",
            FunctionId::F3 => "f3",
            FunctionId::F4 => "f4",
            FunctionId::F5 => "f5",
        };
        write!(f, "{s}")
    }
}

impl FromStr for FunctionId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f1" | "1" => Ok(FunctionId::F1),
            "f2" | "2" => Ok(FunctionId::F2),
            "f3" | "3" => Ok(FunctionId::F3),
            "f4" | "4" => Ok(FunctionId::F4),
            "f5" | "5" => Ok(FunctionId::F5),
            other => Err(Error::Config(format!("unknown function id `{other}`"))),
        }
    }
}

/// Element-wise evaluation of a benchmark function.
pub fn synth_function(id: FunctionId, tau: &[f64]) -> Vec<f64> {
    tau.iter().map(|&t| id.eval(t)).collect()
}

/// One synthetic-dataset recipe: equally spaced latent inputs over the range
/// with Gaussian noise on both axes.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticSpec {
    pub function: FunctionId,
    pub n: usize,
    pub input_range: (f64, f64),
    pub sigma_y: f64,
    pub sigma_t: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config("synthetic n must be >= 2".into()));
        }
        if self.sigma_t < 0.0 || self.sigma_y < 0.0 {
            return Err(Error::Config("noise levels must be >= 0".into()));
        }
        if !(self.input_range.1 > self.input_range.0) {
            return Err(Error::Config("input range must be non-empty".into()));
        }
        Ok(())
    }

    /// The large-output-noise preset `(max f - min f) / 10`, measured on the
    /// noise-free function values over this spec's grid.
    pub fn large_noise_sigma_y(&self) -> f64 {
        let tau = descending_grid(self.n, self.input_range);
        let f = synth_function(self.function, &tau);
        let max = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = f.iter().cloned().fold(f64::INFINITY, f64::min);
        (max - min) / 10.0
    }
}

/// `n` equally spaced points, stored in descending order.
pub fn descending_grid(n: usize, range: (f64, f64)) -> Vec<f64> {
    let (lo, hi) = range;
    (0..n)
        .map(|i| hi - (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Draws a noisy dataset plus the ground-truth latent inputs (descending).
///
/// `sigma_t = 0` is allowed for testing; the stored noise column is floored
/// at `1e-6 * range` so the dataset invariants hold while `t = tau` exactly.
pub fn generate_dataset(spec: &SyntheticSpec) -> Result<(Dataset, Vec<f64>)> {
    spec.validate()?;
    let tau = descending_grid(spec.n, spec.input_range);
    let f = synth_function(spec.function, &tau);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let y: Vec<f64> = f
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + spec.sigma_y * z
        })
        .collect();
    let t: Vec<f64> = tau
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + spec.sigma_t * z
        })
        .collect();
    let floor = 1e-6 * (spec.input_range.1 - spec.input_range.0);
    let sigma_t = vec![spec.sigma_t.max(floor); spec.n];
    let sigma_y = vec![spec.sigma_y; spec.n];
    Ok((Dataset::new(t, sigma_t, y, sigma_y)?, tau))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn function_values() {
        assert_eq!(FunctionId::F1.eval(0.0), 0.0);
        assert!((FunctionId::F1.eval(std::f64::consts::FRAC_PI_2) - 5.0).abs() < 1e-12);
        assert_eq!(FunctionId::F5.eval(0.0), 0.0);
        assert!((FunctionId::F4.eval(0.0)).abs() < 1e-12);
        // all five stay finite over the benchmark range
        for id in FunctionId::ALL {
            for i in 0..=200 {
                let tau = -10.0 + 0.1 * i as f64;
                assert!(id.eval(tau).is_finite(), "{id} at {tau}");
            }
        }
    }

    #[test]
    fn grid_endpoints_and_gap() {
        let tau = descending_grid(25, (-10.0, 10.0));
        assert_eq!(tau[0], 10.0);
        assert_eq!(tau[24], -10.0);
        for w in tau.windows(2) {
            assert!((w[0] - w[1] - 5.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_is_exact() {
        let spec = SyntheticSpec {
            function: FunctionId::F2,
            n: 10,
            input_range: (-10.0, 10.0),
            sigma_y: 0.0,
            sigma_t: 0.0,
            seed: 5,
        };
        let (ds, tau) = generate_dataset(&spec).unwrap();
        assert_eq!(ds.t(), tau.as_slice());
        for (y, t) in ds.y().iter().zip(&tau) {
            assert_eq!(*y, FunctionId::F2.eval(*t));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec {
            function: FunctionId::F3,
            n: 25,
            input_range: (-10.0, 10.0),
            sigma_y: 0.05,
            sigma_t: 1.0,
            seed: 9,
        };
        let (a, _) = generate_dataset(&spec).unwrap();
        let (b, _) = generate_dataset(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn function_id_parsing_roundtrip() {
        for id in FunctionId::ALL {
            assert_eq!(id.to_string().parse::<FunctionId>().unwrap(), id);
        }
        assert!("f9".parse::<FunctionId>().is_err());
    }

    #[test]
    fn large_noise_preset_is_about_a_tenth_of_the_range() {
        let spec = SyntheticSpec {
            function: FunctionId::F1,
            n: 25,
            input_range: (-10.0, 10.0),
            sigma_y: 0.0,
            sigma_t: 1.0,
            seed: 0,
        };
        let sy = spec.large_noise_sigma_y();
        // f1 = 5 sin has range close to 10 on this grid
        assert!(sy > 0.9 && sy < 1.1, "{sy}");
    }
}
