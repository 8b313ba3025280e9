//! Prediction and input-recovery error metrics.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Inference method identifiers used throughout the harness outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Nonparametric variational inference.
    Npv,
    /// Metropolis–Hastings baseline.
    Mcmc,
    /// Standard GP on the observed inputs.
    Gp,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Npv, Method::Mcmc, Method::Gp];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Npv => "npv",
            Method::Mcmc => "mcmc",
            Method::Gp => "gp",
        };
        write!(f, "{s}")
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "npv" => Ok(Method::Npv),
            "mcmc" => Ok(Method::Mcmc),
            "gp" => Ok(Method::Gp),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Root mean squared error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "rmse inputs",
            expected: truth.len(),
            got: pred.len(),
        });
    }
    let n = pred.len().max(1) as f64;
    Ok((pred
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n)
        .sqrt())
}

/// Mean absolute error.
pub fn mae(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            what: "mae inputs",
            expected: b.len(),
            got: a.len(),
        });
    }
    let n = a.len().max(1) as f64;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n)
}

/// One benchmark cell's outcome.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub method: Method,
    /// Prediction error against the true function on the query grid.
    pub rmse: f64,
    /// Mean `|tau_hat - tau|`.
    pub input_mae: f64,
    /// Mean `|t - tau|`: the input error of doing nothing.
    pub baseline_mae: f64,
    pub wall_time_s: f64,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_vectors_have_zero_error() {
        let v = [1.0, 2.0, 3.0];
        assert_eq!(rmse(&v, &v).unwrap(), 0.0);
        assert_eq!(mae(&v, &v).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_rmse() {
        let got = rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((got - (25.0f64 / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(
            rmse(&[1.0], &[1.0, 2.0]).unwrap_err(),
            Error::LengthMismatch { .. }
        ));
        assert!(mae(&[1.0], &[]).is_err());
    }

    #[test]
    fn method_parsing_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("nigp".parse::<Method>().is_err());
    }
}
